import argparse

from fog_observability.utils.cli_utils import emit, register_command


def make_volume_base():
    volume_base_parser = argparse.ArgumentParser(
        add_help=False, description='Project observability volume per domain for a fleet.')
    volume_base_parser.add_argument('--devices', type=int, default=4, help='Fleet size. By default 4 trucks')
    volume_base_parser.add_argument('--hours-per-day', type=float, default=9.0, help='Operating hours per day')
    volume_base_parser.add_argument('--months', type=int, default=6, help='Horizon of the long projection')
    return volume_base_parser


def project(spec, policy, devices, hours_per_day, months, payload_bytes_per_s=None):
    """Bytes per domain for one hour, one operating day, one week and `months` of 30 days."""
    from fog_observability.core.exposition import estimate_reduction, parse_exposition
    from fog_observability.core.replay.workload import SyntheticExposition

    horizons = {'hourly': 1, 'daily': hours_per_day, 'weekly': hours_per_day * 7,
                f'{months}_months': hours_per_day * 30 * months}
    rows = {}
    for domain in spec.rates():
        rows[domain.value] = {name: spec.projected_bytes(domain, hours, devices) for name, hours in horizons.items()}
    if not policy.is_identity:
        doc = parse_exposition(SyntheticExposition(spec.metric_payload_bytes, seed=spec.seed).render(0))
        report = estimate_reduction(doc, policy, spec.metric_interval_s)
        rows['metric_reduced'] = {name: int(round(value * (1 - report.ratio)))
                                  for name, value in rows['metric'].items()}
    if payload_bytes_per_s:
        rows['payload'] = {name: int(payload_bytes_per_s * 3600 * hours * devices)
                           for name, hours in horizons.items()}
    return rows


@register_command(make_volume_base, name='volume', group='report')
def volume(args):
    from fog_observability.core.exposition import ReductionPolicy
    from fog_observability.core.replay.workload import WorkloadSpec
    from fog_observability.main_driver import _config

    cfg = _config(args)
    spec = WorkloadSpec.from_cfg(cfg.workload)
    policy = ReductionPolicy.from_cfg(cfg.reduction, cfg.exposition.collectors)
    rows = project(spec, policy, args.devices, args.hours_per_day, args.months,
                   payload_bytes_per_s=float(cfg.payload.bytes_per_s))
    for name, row in rows.items():
        emit(dict(row, domain=name, devices=args.devices))
    return 0
