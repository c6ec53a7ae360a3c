#!/usr/bin/env python
import argparse
import sys

import fog_observability.plugin
# imports stay minimal so 'odlc --help' is responsive; handlers are only imported after parsing

from fog_observability.utils.cli_utils import (ODLC_COMMANDS, add_config_args, add_profile_arg, add_window_args,
                                               parse_window)
from fog_observability.utils.plugin_utils import discover_plugins
from fog_observability.utils.version import get_version

discovered_plugins = discover_plugins(fog_observability.plugin)

DOMAIN_CHOICES = ['metric', 'log', 'trace']


def _make_config_base():
    config_base_parser = argparse.ArgumentParser(add_help=False)
    add_config_args(config_base_parser)
    return config_base_parser


def _make_query_base():
    query_base_parser = argparse.ArgumentParser(add_help=False)
    query_base_parser.add_argument(
        '--address', type=str, default=None,
        help='Fog query listener host:port. By default using fog.query_address')
    return query_base_parser


def _add_edge_parsers(subparsers, config_base):
    edge = subparsers.add_parser('edge', help='edge agent: collect, stage and transmit observability data.')
    actions = edge.add_subparsers(dest='action', required=True)
    run = actions.add_parser('run', parents=[config_base], help='run the edge agent until interrupted.')
    run.add_argument('--device-id', type=str, default=None, help='Device identifier. By default using device.id')
    run.add_argument('--fog', type=str, default=None, dest='fog_address',
                     help='Fog ingest host:port. By default using fog.address')
    run.add_argument('--log-path', type=str, action='append', default=None, dest='log_paths',
                     help='Log file or glob to harvest, may be repeated. By default using logs.paths')
    run.add_argument('--duration', type=float, default=None, help='Stop after this many seconds')
    add_profile_arg(run)


def _add_fog_parsers(subparsers, config_base):
    fog = subparsers.add_parser('fog', help='fog node: ingest, store, query and tier observability data.')
    actions = fog.add_subparsers(dest='action', required=True)
    serve = actions.add_parser('serve', parents=[config_base], help='run the fog node until interrupted.')
    serve.add_argument('--data-dir', type=str, default=None, help='Storage directory. By default using fog.data_dir')
    serve.add_argument('--address', type=str, default=None, dest='ingest_address',
                       help='Ingest listener host:port. By default using fog.address')
    serve.add_argument('--query-address', type=str, default=None,
                       help='Query listener host:port. By default using fog.query_address')
    serve.add_argument('--duration', type=float, default=None, help='Stop after this many seconds')


def _add_archive_parsers(subparsers, config_base):
    archive = subparsers.add_parser('archive', help='cloud archive: import segments and run historical queries.')
    actions = archive.add_subparsers(dest='action', required=True)
    catalog_base = argparse.ArgumentParser(add_help=False)
    catalog_base.add_argument('--catalog', type=str, default=None, dest='catalog_dir',
                              help='Catalog directory. By default using archive.catalog_dir')

    import_parser = actions.add_parser('import', parents=[config_base, catalog_base],
                                       help='import every segment file of a directory.')
    import_parser.add_argument('directory', type=str, help='Directory holding exported segment files')

    query = actions.add_parser('query', parents=[config_base, catalog_base], help='historical query.')
    query.add_argument('domain', type=str, choices=DOMAIN_CHOICES)
    add_window_args(query)
    query.add_argument('--selector', type=str, default=None,
                       help='Metric selector, e.g. node_cpu_seconds_total{mode="idle"}')
    query.add_argument('--query', type=str, default=None, help='Terms that log and span documents must contain')
    query.add_argument('--limit', type=int, default=None, help='Maximum number of records to print')

    aggregate = actions.add_parser('aggregate', parents=[config_base, catalog_base],
                                   help='aggregate a log field over region polygons.')
    aggregate.add_argument('--regions', type=str, required=True,
                           help='Region file (one JSON polygon per line) or a bundled region set name')
    aggregate.add_argument('--field', type=str, default='throughput_kbps', help='Numeric log field to aggregate')
    aggregate.add_argument('--mode', type=str, default='accelerated', choices=['naive', 'accelerated'])
    add_window_args(aggregate)
    aggregate.add_argument('--trace', action='store_true',
                           help='Run both modes, record each phase as a span and print the speed-up')
    aggregate.add_argument('--demo-points', type=int, default=None,
                           help='Aggregate this many random points instead of archived logs')


def _add_replay_parser(subparsers, config_base):
    replay = subparsers.add_parser('replay', parents=[config_base],
                                   help='replay a synthetic fleet through edge, fog and archive in one process.')
    replay.add_argument('--spec', type=str, default='default', dest='scenario',
                        help='Scenario file or bundled scenario name. By default using "default"')
    replay.add_argument('--schedule', type=str, default=None,
                        help='Link schedule file. By default using replay.schedule or an always-up link')
    replay.add_argument('--out', type=str, default=None, help='Result file; plot data is written next to it')
    replay.add_argument('--virtual-clock', type=float, default=None,
                        help='Real seconds per virtual second, 0 runs as fast as possible')
    replay.add_argument('--work-dir', type=str, default=None,
                        help='Keep edge, fog and archive files here. By default a temporary directory')
    replay.add_argument('--no-progress', action='store_false', dest='progress', help='Hide the progress bar')


def _add_query_parsers(subparsers, config_base, query_base):
    query = subparsers.add_parser('query', help='query a running fog node.')
    actions = query.add_subparsers(dest='action', required=True)
    parents = [config_base, query_base]

    range_parser = actions.add_parser('range', parents=parents, help='metric samples or aggregates of a selector.')
    range_parser.add_argument('selector', type=str)
    add_window_args(range_parser, required=True)
    range_parser.add_argument('--aggregation', type=str, default='raw', choices=['raw', 'avg', 'min', 'max', 'rate'])
    range_parser.add_argument('--step', type=float, default=None, dest='step_s', help='Aggregation step in seconds')

    logs = actions.add_parser('logs', parents=parents, help='full-text log search.')
    logs.add_argument('terms', type=str, nargs='*', help='Terms every entry must contain')
    logs.add_argument('--filter', type=str, action='append', default=[], dest='filters',
                      help='Field filter such as level=ERROR or latency_ms>40, may be repeated')
    add_window_args(logs)
    logs.add_argument('--fuzzy', action='store_true', help='Accept terms within edit distance 1')
    logs.add_argument('--limit', type=int, default=None)

    trace = actions.add_parser('trace', parents=parents, help='assemble one trace.')
    trace.add_argument('trace_id', type=str)
    critical = actions.add_parser('critical', parents=parents, help='critical path of one trace.')
    critical.add_argument('trace_id', type=str)

    deps = actions.add_parser('deps', parents=parents, help='service dependency graph.')
    add_window_args(deps)

    correlate = actions.add_parser('correlate', parents=parents, help='records of every domain in one window.')
    add_window_args(correlate, required=True)
    correlate.add_argument('--device', type=str, action='append', default=None, dest='devices',
                           help='Restrict to a device, may be repeated')
    correlate.add_argument('--counts-only', action='store_false', dest='records', help='Omit the records')

    alerts = actions.add_parser('alerts', parents=parents, help='alert events and firing rules.')
    alerts.add_argument('--since', type=int, default=None, help='Events at or after this epoch ms')
    alerts.add_argument('--rule', type=str, default=None, dest='rule_id')


def _add_report_parsers(subparsers, config_base, query_base):
    report = subparsers.add_parser('report', help='overhead and volume reports.')
    actions = report.add_subparsers(dest='action', required=True)
    outcome = actions.add_parser('outcome', parents=[config_base, query_base],
                                 help='OutcomeReport of a window from recorded overhead samples.')
    outcome.add_argument('--window', type=parse_window, required=True, metavar='START_MS:END_MS')
    add_profile_arg(outcome)
    outcome.add_argument('--samples', type=str, default=None,
                         help='Overhead samples file (JSON lines). By default using meter.samples_file')
    outcome.add_argument('--plot-data', type=str, default=None, help='Write term/value columns to this file')
    outcome.add_argument('--plot', type=str, default=None, help='Save a bar chart of the terms to this image')
    return actions


def _create_args_parser():
    # --- create shared arguments parsers
    config_base_parser = _make_config_base()
    query_base_parser = _make_query_base()
    version = get_version('fog_observability')

    # --- create per action subparser
    parser = argparse.ArgumentParser(prog='odlc', epilog='Example: odlc replay --spec reduced --out result.json')
    parser.add_argument('--version', action='version', version=f'fog_observability v{version}')
    # handlers are looked up from 'command' and 'action' after parsing, keeping imports out of startup
    subparsers = parser.add_subparsers(dest='command')
    _add_edge_parsers(subparsers, config_base_parser)
    _add_fog_parsers(subparsers, config_base_parser)
    _add_archive_parsers(subparsers, config_base_parser)
    _add_replay_parser(subparsers, config_base_parser)
    _add_query_parsers(subparsers, config_base_parser, query_base_parser)
    groups = {'report': _add_report_parsers(subparsers, config_base_parser, query_base_parser)}

    # add parsers for plugins
    for command in ODLC_COMMANDS:
        command_parser = command.parser_fn()
        target = groups[command.group] if command.group else subparsers
        target.add_parser(command.name, parents=[command_parser, config_base_parser],
                          help=command_parser.description)
    return parser


def _handler_key(args):
    return args.command, getattr(args, 'action', None)


def run(args):
    # search for commands from plugins
    command_to_handler = {(command.group or command.name, command.name if command.group else None): command.fn
                          for command in ODLC_COMMANDS}
    if _handler_key(args) in command_to_handler:
        return command_to_handler[_handler_key(args)](args)

    # we make sure to only import these now to keep loading & plugins fast
    from fog_observability import main_driver
    handlers = {
        ('edge', 'run'): main_driver.edge_run,
        ('fog', 'serve'): main_driver.fog_serve,
        ('archive', 'import'): main_driver.archive_import,
        ('archive', 'query'): main_driver.archive_query,
        ('archive', 'aggregate'): main_driver.archive_aggregate,
        ('replay', None): main_driver.replay,
        ('report', 'outcome'): main_driver.report_outcome,
    }
    if args.command == 'query':
        return main_driver.query(args)
    return handlers[_handler_key(args)](args)


def dispatch(argv=None):
    """Exit code of one invocation: 0 success, 1 domain error, 2 usage error."""
    parser = _create_args_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2
    if not args.command:
        parser.print_help()
        return 2

    # from this point we can import heavy modules
    from fog_observability.core.errors import OdlcError
    from fog_observability.utils.cli_utils import emit
    try:
        code = run(args)
    except OdlcError as err:
        emit(err.to_dict(), stream=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    return code or 0


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
