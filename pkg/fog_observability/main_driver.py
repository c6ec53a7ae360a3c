import itertools
import sys
from pathlib import Path

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from fog_observability.core.cfg_utils import load_config, load_weight_profile
from fog_observability.core.errors import ConfigError
from fog_observability.core.model import CorrelationWindow
from fog_observability.utils import path_resolver
from fog_observability.utils.cli_utils import emit
from fog_observability.utils.logger import configure_logger, get_logger
from fog_observability.utils.structured import write_plot_data


def _apply_flags(cfg, flags):
    """Command line flags win over every other source; None means the flag was not given."""
    for key, value in flags.items():
        if value is None:
            continue
        try:
            OmegaConf.update(cfg, key, value, merge=False)
        except OmegaConfBaseException as err:
            raise ConfigError(f'Invalid value for {key}: {err}', key=key) from err
    return cfg


def _setup(args, cfg, flags=None):
    cfg = _apply_flags(cfg, flags or {})
    configure_logger(level=args.log_level or cfg.logging.level, log_file=cfg.logging.file)
    return cfg


def _config(args, flags=None):
    return _setup(args, load_config(args.config_path, overrides=args.overrides), flags)


def _data_dir(configured, default):
    return Path(configured) if configured else path_resolver.resolve_data_path(default)


def _live_sampler(cfg, component, clock, default_path, net_counter=None):
    from fog_observability.core.meter.sampling import MeterSampler, PsutilAccounting

    if not cfg.meter.enabled:
        return None
    out_path = Path(cfg.meter.samples_file) if cfg.meter.samples_file else default_path
    sampler = MeterSampler({component: PsutilAccounting(net_counter=net_counter)}, clock, out_path,
                           interval_s=float(cfg.meter.sample_interval_s))
    get_logger().info(f'Overhead samples of {component} go to {out_path}')
    return sampler.start()


def _run_until(component, duration_s):
    try:
        component.wait(duration_s)
    except KeyboardInterrupt:
        get_logger().info('Interrupted, shutting down')


def edge_run(args):
    from fog_observability.core.edge.agent import EdgeAgent
    from fog_observability.core.meter.report import EDGE

    cfg = _config(args, {'device.id': args.device_id, 'fog.address': args.fog_address,
                         'logs.paths': args.log_paths, 'weights.profile': args.weights})
    agent = EdgeAgent(cfg)
    data_dir = _data_dir(cfg.device.data_dir, f'edge/{agent.device_id}')
    sampler = _live_sampler(cfg, EDGE, agent.clock, data_dir / 'meter.jsonl',
                            net_counter=lambda: agent.transmitter.bytes_sent)
    agent.start()
    try:
        _run_until(agent, args.duration)
    finally:
        if sampler is not None:
            sampler.stop()
        agent.stop()
    emit({'device_id': agent.device_id, 'staging': agent.store.counters_dict(),
          'admission_failures': agent.admission_failures, 'frames_sent': agent.transmitter.frames_sent,
          'bytes_sent': agent.transmitter.bytes_sent})
    return 0


def fog_serve(args):
    from fog_observability.core.fog.server import FogServer
    from fog_observability.core.meter.report import FOG

    cfg = _config(args, {'fog.data_dir': args.data_dir, 'fog.address': args.ingest_address,
                         'fog.query_address': args.query_address})
    server = FogServer(cfg).start()
    sampler = _live_sampler(cfg, FOG, server.clock, Path(server.data_dir) / 'meter.jsonl',
                            net_counter=lambda: server.node.bytes_received)
    try:
        _run_until(server, args.duration)
    finally:
        if sampler is not None:
            sampler.stop()
        server.stop()
    emit(server.node.stats())
    return 0


def _catalog(args, cfg):
    from fog_observability.core.archive.catalog import ArchiveCatalog

    return ArchiveCatalog(args.catalog_dir or _data_dir(cfg.archive.catalog_dir, 'archive'))


def archive_import(args):
    cfg = _config(args)
    directory = Path(args.directory)
    if not directory.is_dir():
        raise ConfigError(f'{directory} is not a directory', path=str(directory))
    catalog = _catalog(args, cfg)
    summary = catalog.import_directory(directory)
    emit({'imported': [entry.manifest.to_dict() for entry in summary.imported],
          'duplicates': summary.duplicates, 'rejected': summary.rejected})
    get_logger().info(f'{len(summary.imported)} imported, {len(summary.duplicates)} duplicates, '
                      f'{len(summary.rejected)} rejected')
    return 0


def archive_query(args):
    cfg = _config(args)
    catalog = _catalog(args, cfg)
    records = catalog.historical_query(args.domain, start=args.start, end=args.end, selector=args.selector,
                                       query=args.query)
    count = 0
    for record in itertools.islice(records, args.limit):
        emit(record.payload.to_wire())
        count += 1
    get_logger().info(f'{count} records, {catalog.segments_decompressed} segments read')
    return 0


def archive_aggregate(args):
    from fog_observability.core.archive.regions import aggregate_by_region, load_regions, random_points_in, \
        run_region_demo
    from fog_observability.core.edge.spans import SpanRecorder
    from fog_observability.utils.clock import SystemClock

    cfg = _config(args)
    regions_path = path_resolver.resolve_region_path(args.regions)
    if not regions_path.is_file():
        raise ConfigError(f'Region file is missing: {regions_path}', path=str(regions_path))
    polygons = load_regions(regions_path)
    if args.demo_points:
        records = random_points_in(polygons, args.demo_points, seed=0, field=args.field)
    else:
        records = [record.payload for record in _catalog(args, cfg).historical_query('log', args.start, args.end)]
    if not args.trace:
        aggregates, skipped = aggregate_by_region(records, polygons, args.field, mode=args.mode)
        for aggregate in aggregates:
            emit(aggregate.to_dict())
        get_logger().info(f'{len(records) - skipped} points aggregated, {skipped} skipped')
        return 0
    spans = []
    recorder = SpanRecorder('region-aggregator', SystemClock(), sink=spans.append, device_id=str(cfg.device.id))
    result = run_region_demo(records, polygons, args.field, recorder=recorder)
    for aggregate in result.aggregates:
        emit(aggregate.to_dict())
    for span in spans:
        emit(span.to_wire())
    print(f'naive {result.naive_s:.4f}s, accelerated {result.accelerated_s:.4f}s, speed-up {result.speedup:.1f}x, '
          f'identical={result.identical}', file=sys.stderr)
    return 0


def replay(args):
    from fog_observability.core.replay.harness import (load_scenario, run_scenario, scenario_from_cfg, summary_lines,
                                                       write_result)

    cfg = _setup(args, load_scenario(args.scenario, overrides=args.overrides),
                 {'replay.virtual_clock': args.virtual_clock, 'replay.schedule': args.schedule,
                  'replay.work_dir': args.work_dir})
    spec, schedule = scenario_from_cfg(cfg)
    result = run_scenario(spec, schedule, cfg, work_dir=cfg.replay.work_dir, name=Path(args.scenario).stem,
                          progress=args.progress)
    if args.out:
        out_path, plot_path = write_result(result, args.out)
        get_logger().info(f'Result written to {out_path}, plot data to {plot_path}')
    else:
        emit(result.to_dict())
    for line in summary_lines(result):
        print(line, file=sys.stderr)
    return 0


_QUERY_REQUESTS = {
    'range': lambda args: {'selector': args.selector, 'start': args.start, 'end': args.end,
                           'aggregation': args.aggregation, 'step_s': args.step_s},
    'logs': lambda args: {'query': ' '.join(args.terms), 'filters': args.filters, 'start': args.start,
                          'end': args.end, 'fuzzy': args.fuzzy, 'limit': args.limit},
    'trace': lambda args: {'trace_id': args.trace_id},
    'critical': lambda args: {'trace_id': args.trace_id},
    'deps': lambda args: {'start': args.start, 'end': args.end},
    'correlate': lambda args: {'start': args.start, 'end': args.end, 'devices': args.devices,
                               'records': args.records},
    'alerts': lambda args: {'since': args.since, 'rule_id': args.rule_id},
}


def query(args):
    from fog_observability.core.fog.client import QueryClient

    cfg = _config(args)
    client = QueryClient(args.address or cfg.fog.query_address)
    request = dict(_QUERY_REQUESTS[args.action](args), kind=args.action)
    response = client.request(request)
    if 'error' in response:
        emit(response, stream=sys.stderr)
        return 1
    emit(response)
    return 0


def _plot_outcome(outcome, path):
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    terms, values = zip(*outcome.plot_rows())
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(terms, values, color=['tab:blue', 'tab:orange', 'tab:green', 'tab:gray', 'tab:purple', 'tab:red'])
    ax.set_ylabel('score')
    ax.set_title(f'Outcome with {outcome.weights.name} weights')
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def report_outcome(args):
    from fog_observability.core.fog.client import QueryClient
    from fog_observability.core.meter.report import MeterBasis, compose_outcome, load_report

    cfg = _config(args, {'weights.profile': args.weights, 'meter.samples_file': args.samples})
    if not cfg.meter.samples_file:
        raise ConfigError('No overhead samples file, pass --samples or set meter.samples_file')
    samples_path = Path(cfg.meter.samples_file)
    if not samples_path.is_file():
        raise ConfigError(f'Overhead samples file is missing: {samples_path}', path=str(samples_path))
    report = load_report(samples_path, MeterBasis.from_cfg(cfg.meter))
    weights = load_weight_profile(cfg.weights.profile)
    fog = QueryClient(args.address or cfg.fog.query_address)
    outcome = compose_outcome(report, weights, CorrelationWindow(*args.window), fog)
    emit(outcome.to_dict())
    if args.plot_data:
        write_plot_data(args.plot_data, ('term', 'value'), outcome.plot_rows())
    if args.plot:
        _plot_outcome(outcome, args.plot)
    return 0
