import pytest

from lorawan_thermal.errors import (ExportError, FrameDecodeError, NodeDeadError, ScenarioError,
                                    SimulationError, get_exception_for_error_code)


@pytest.mark.parametrize(
    'code, expected',
    [
        pytest.param('NODE_DEAD', NodeDeadError, id='node_dead'),
        pytest.param('MALFORMED', FrameDecodeError, id='malformed'),
        pytest.param('REPLAY_ANOMALY', SimulationError, id='replay_anomaly_is_only_counted'),
        pytest.param('SOMETHING_ELSE', SimulationError, id='fallback'),
    ],
)
def test_exception_for_error_code(code, expected):
    assert get_exception_for_error_code(code) is expected


def test_scenario_error_message_names_location():
    error = ScenarioError('unknown material tin', line=16, field='node.material')
    assert str(error) == 'line 16, field node.material: unknown material tin'
    assert issubclass(ScenarioError, SimulationError)


def test_export_error_keeps_path():
    error = ExportError('/tmp/out.csv', 'permission denied')
    assert error.path == '/tmp/out.csv'
    assert 'permission denied' in str(error)
