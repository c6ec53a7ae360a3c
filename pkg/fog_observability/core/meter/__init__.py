from fog_observability.core.meter.report import (MeterBasis, MeterReport, compose_outcome, load_report,  # noqa: F401
                                                 overhead_of)
from fog_observability.core.meter.sampling import (InjectedAccounting, MeterSampler, PsutilAccounting,  # noqa: F401
                                                   ResourceSample, sample_component)
