from fog_observability.core.fog.alerts import AlertEngine, AlertEvent, AlertRule, evaluate_alerts  # noqa: F401
from fog_observability.core.fog.index import InvertedIndex, extract_fields, tokenize  # noqa: F401
from fog_observability.core.fog.node import CorrelationResult, FogNode, ingest_batch  # noqa: F401
from fog_observability.core.fog.selector import MetricSelector  # noqa: F401
from fog_observability.core.fog.tiering import TieringPolicy, tiering_cycle  # noqa: F401
from fog_observability.core.fog.traces import assemble_trace, critical_path, dependency_graph  # noqa: F401
from fog_observability.core.fog.tsdb import TimeSeriesStore, series_key  # noqa: F401
