import argparse
import sys

from fog_observability.utils.cli_utils import emit, register_command


def make_reduce_base():
    reduce_base_parser = argparse.ArgumentParser(
        add_help=False, description='Reduce a text exposition document and report the volume saved.')
    reduce_base_parser.add_argument('input', type=str, nargs='?', default='-',
                                    help='Exposition file, "-" reads standard input')
    reduce_base_parser.add_argument('--strip-help', action='store_true', help='Drop # HELP lines')
    reduce_base_parser.add_argument('--strip-type', action='store_true', help='Drop # TYPE lines')
    reduce_base_parser.add_argument('--allow', type=str, action='append', default=None, dest='allowlist',
                                    help='Keep families with this prefix or collector alias (cpu, memory, ...), '
                                         'may be repeated')
    reduce_base_parser.add_argument('--interval-scale', type=float, default=None,
                                    help='Collection interval multiplier (>= 1)')
    reduce_base_parser.add_argument('--base-interval', type=float, default=None,
                                    help='Collection interval in seconds. By default using metric.interval_s')
    reduce_base_parser.add_argument('--synthetic', action='store_true',
                                    help='Reduce the synthetic replay corpus instead of reading input')
    return reduce_base_parser


def _read_input(args, cfg):
    if args.synthetic:
        from fog_observability.core.replay.workload import SyntheticExposition
        return SyntheticExposition(int(cfg.workload.metric_payload_bytes), seed=int(cfg.workload.seed)).render(0)
    if args.input == '-':
        return sys.stdin.buffer.read()
    with open(args.input, 'rb') as fin:
        return fin.read()


@register_command(make_reduce_base, name='reduce')
def reduce_exposition(args):
    from fog_observability.core.exposition import (ReductionPolicy, encode_exposition, estimate_reduction,
                                                   parse_exposition, resolve_allowlist)
    from fog_observability.main_driver import _config

    cfg = _config(args)
    policy = ReductionPolicy.from_cfg(cfg.reduction, cfg.exposition.collectors)
    policy = ReductionPolicy(
        strip_help=args.strip_help or policy.strip_help,
        strip_type=args.strip_type or policy.strip_type,
        family_allowlist=resolve_allowlist(args.allowlist, cfg.exposition.collectors) if args.allowlist
        else policy.family_allowlist,
        interval_scale=args.interval_scale or policy.interval_scale)
    doc = parse_exposition(_read_input(args, cfg))
    sys.stdout.buffer.write(encode_exposition(doc, policy))
    sys.stdout.flush()
    report = estimate_reduction(doc, policy, args.base_interval or float(cfg.metric.interval_s))
    emit(dict(report._asdict(), policy=policy.to_dict()), stream=sys.stderr)
    return 0
