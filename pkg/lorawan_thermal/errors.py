class SimulationError(Exception):
    pass


class NodeDeadError(SimulationError):
    pass


class FrameDecodeError(SimulationError):
    pass


class RefIntegrityError(SimulationError):
    pass


class NotFoundError(SimulationError):
    pass


class StoreUnavailableError(SimulationError):
    pass


class NonPositiveExcessError(SimulationError):
    pass


class InsufficientDataError(SimulationError):
    pass


class NoOverlapError(SimulationError):
    pass


class ConfigurationError(SimulationError):
    pass


class ExportError(SimulationError):
    def __init__(self, path, message):
        super().__init__('{}: {}'.format(path, message))
        self.path = path


class ScenarioError(SimulationError):
    def __init__(self, message, line=None, field=None):
        location = []
        if line is not None:
            location.append('line {}'.format(line))
        if field is not None:
            location.append('field {}'.format(field))
        prefix = '{}: '.format(', '.join(location)) if location else ''
        super().__init__('{}{}'.format(prefix, message))
        self.line = line
        self.field = field


class InvariantViolationError(SimulationError):
    def __init__(self, message, accounting=None):
        super().__init__(message)
        self.accounting = accounting or {}


ERROR_CODE_EXCEPTION_MAPPING = {
    'NODE_DEAD': NodeDeadError,
    'MALFORMED': FrameDecodeError,
    'REF_INTEGRITY': RefIntegrityError,
    'NOT_FOUND': NotFoundError,
    'STORE_UNAVAILABLE': StoreUnavailableError,
    'NONPOSITIVE_EXCESS': NonPositiveExcessError,
    'INSUFFICIENT_DATA': InsufficientDataError,
    'NO_OVERLAP': NoOverlapError}


def get_exception_for_error_code(error_code):
    return ERROR_CODE_EXCEPTION_MAPPING.get(error_code, SimulationError)
