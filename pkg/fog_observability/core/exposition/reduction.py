"""Volume reduction of exposition documents: help stripping, family allowlists and interval rescaling."""
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Tuple

from fog_observability.core.errors import InvalidInterval
from fog_observability.core.exposition.parser import encode_family

ReductionReport = namedtuple('ReductionReport', ['bytes_before', 'bytes_after', 'ratio',
                                                 'bytes_before_per_hour', 'bytes_after_per_hour'])


@dataclass(frozen=True)
class ReductionPolicy:
    strip_help: bool = False
    strip_type: bool = False
    # None keeps every family, an empty tuple keeps none
    family_allowlist: Optional[Tuple[str, ...]] = None
    interval_scale: float = 1.0

    def __post_init__(self):
        if self.interval_scale < 1:
            raise InvalidInterval(f'interval_scale must be >= 1, got {self.interval_scale}')
        if self.family_allowlist is not None:
            object.__setattr__(self, 'family_allowlist', tuple(self.family_allowlist))

    @classmethod
    def keep_all(cls):
        return cls()

    @classmethod
    def from_cfg(cls, reduction_cfg, collectors=None):
        allowlist = reduction_cfg.get('family_allowlist')
        if allowlist is not None:
            allowlist = resolve_allowlist(list(allowlist), collectors)
        return cls(strip_help=bool(reduction_cfg.get('strip_help', False)),
                   strip_type=bool(reduction_cfg.get('strip_type', False)),
                   family_allowlist=allowlist,
                   interval_scale=float(reduction_cfg.get('interval_scale', 1.0)))

    @property
    def is_identity(self):
        return not self.strip_help and not self.strip_type and self.family_allowlist is None \
            and self.interval_scale == 1

    def keeps_family(self, name):
        if self.family_allowlist is None:
            return True
        return any(name.startswith(prefix) for prefix in self.family_allowlist)

    def to_dict(self):
        return {
            'strip_help': self.strip_help,
            'strip_type': self.strip_type,
            'family_allowlist': list(self.family_allowlist) if self.family_allowlist is not None else None,
            'interval_scale': self.interval_scale,
        }


def resolve_allowlist(names, collectors=None):
    """Expands collector aliases (`cpu` -> `node_cpu`); unknown names are kept as prefixes."""
    collectors = collectors or {}
    resolved = []
    for name in names:
        expansion = collectors.get(name, name)
        if isinstance(expansion, str):
            expansion = [expansion]
        for prefix in expansion:
            if prefix not in resolved:
                resolved.append(prefix)
    return tuple(resolved)


def filter_document(doc, policy):
    return [family for family in doc.families if policy.keeps_family(family.name)]


def encode_exposition(doc, policy=None):
    policy = policy or ReductionPolicy.keep_all()
    text = ''.join(encode_family(family, strip_help=policy.strip_help, strip_type=policy.strip_type)
                   for family in filter_document(doc, policy))
    return text.encode('utf-8')


def estimate_reduction(doc, policy, base_interval_s):
    if base_interval_s <= 0:
        raise InvalidInterval(f'base_interval_s must be positive, got {base_interval_s}')
    bytes_before = len(encode_exposition(doc))
    bytes_after = len(encode_exposition(doc, policy)) / policy.interval_scale
    ratio = 1.0 - bytes_after / bytes_before if bytes_before else 0.0
    emissions_per_hour = 3600.0 / base_interval_s
    return ReductionReport(bytes_before=bytes_before, bytes_after=bytes_after, ratio=ratio,
                           bytes_before_per_hour=bytes_before * emissions_per_hour,
                           bytes_after_per_hour=bytes_after * emissions_per_hour)
