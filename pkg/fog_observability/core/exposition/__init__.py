from fog_observability.core.exposition.parser import (ExpositionDocument, ExpositionSample, MetricFamily,  # noqa: F401
                                                      MetricKind, parse_exposition)
from fog_observability.core.exposition.reduction import (ReductionPolicy, ReductionReport,  # noqa: F401
                                                         encode_exposition, estimate_reduction, resolve_allowlist)
