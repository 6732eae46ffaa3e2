#!/usr/bin/env python3

import argparse
import json
import os
import sys

import singer
from singer import utils

from lorawan_thermal import simctl
from lorawan_thermal.app_store import AppStore, export_csv
from lorawan_thermal.discover import discover
from lorawan_thermal.scenario import fixture_path, parse_scenario
from lorawan_thermal.sync import sync, sync_readings

LOGGER = singer.get_logger()


def resolve_scenario_path(value):
    """A file path, or the name of a bundled scenario."""
    if os.path.exists(value):
        return value
    bundled = fixture_path(value)
    if os.path.exists(bundled):
        return bundled
    return value


def do_run(args):
    scenario = parse_scenario(resolve_scenario_path(args.scenario))
    out_dir = args.out or os.path.join('runs', scenario.name)
    artifacts = simctl.run(scenario, out_dir, seed=args.seed)
    results = simctl.verify(artifacts.run_dir, scenario)
    return all(result.passed for result in results)


def do_verify(args):
    results = simctl.verify(args.run_dir)
    failed = [result.name for result in results if not result.passed]
    if failed:
        LOGGER.error('Failed expectations: {}'.format(', '.join(failed)))
    return not failed


def do_report(args):
    paths = simctl.report(args.run_dir)
    LOGGER.info('Summary: {}, plot: {}'.format(paths['summary'], paths['plot']))
    return True


def do_replay(args):
    accounting, store_path = simctl.replay(args.trace, args.registry, store_path=args.store)
    json.dump(accounting.to_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write('\n')
    LOGGER.info('Replay store: {}'.format(store_path))
    return True


def do_export(args):
    with AppStore(args.store) as store:
        if args.format == 'singer':
            sync_readings(store, discover(), args.device, args.t0, args.t1)
        else:
            export_csv(store, args.out, args.device, args.t0, args.t1)
    return True


def do_sync(args):
    state = {}
    if args.state:
        state = utils.load_json(args.state)
    with AppStore(args.store) as store:
        sync(store, discover(), state)
    return True


def do_discover(args):
    LOGGER.info('Starting discover')
    if args.store:
        with AppStore(args.store) as store:
            catalog = discover(store)
    else:
        catalog = discover()
    json.dump(catalog.to_dict(), sys.stdout, indent=2)
    LOGGER.info('Finished discover')
    return True


def build_parser():
    parser = argparse.ArgumentParser(prog='lorawan-thermal',
                                     description='Seeded LoRaWAN temperature-sensing simulator')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    run = commands.add_parser('run', help='simulate a scenario and verify its expectations')
    run.add_argument('scenario', help='scenario file or bundled scenario name')
    run.add_argument('--seed', type=int, default=None, help='override the scenario seed')
    run.add_argument('--out', default=None, help='run directory (default runs/<name>)')
    run.set_defaults(handler=do_run)

    report = commands.add_parser('report', help='write the SVG plot and summary CSV')
    report.add_argument('run_dir')
    report.set_defaults(handler=do_report)

    verify = commands.add_parser('verify', help='re-evaluate the expectations of a run')
    verify.add_argument('run_dir')
    verify.set_defaults(handler=do_verify)

    replay = commands.add_parser('replay', help='feed a packet trace through a fresh store')
    replay.add_argument('trace')
    replay.add_argument('--registry', required=True)
    replay.add_argument('--store', default=None)
    replay.set_defaults(handler=do_replay)

    export = commands.add_parser('export', help='export readings of one device')
    export.add_argument('store')
    export.add_argument('--device', required=True)
    export.add_argument('--from', dest='t0', default=None)
    export.add_argument('--to', dest='t1', default=None)
    export.add_argument('--format', choices=('csv', 'singer'), default='csv')
    export.add_argument('--out', default='-')
    export.set_defaults(handler=do_export)

    sync_parser = commands.add_parser('sync', help='Singer export of the whole store')
    sync_parser.add_argument('store')
    sync_parser.add_argument('--state', default=None)
    sync_parser.set_defaults(handler=do_sync)

    discover_parser = commands.add_parser('discover', help='print the Singer catalog')
    discover_parser.add_argument('--store', default=None, help='add row counts from a store')
    discover_parser.set_defaults(handler=do_discover)
    return parser


@singer.utils.handle_top_exception(LOGGER)
def main(argv=None):
    args = build_parser().parse_args(argv)
    if not args.handler(args):
        sys.exit(1)


if __name__ == '__main__':
    main()
