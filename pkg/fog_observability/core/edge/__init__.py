from fog_observability.core.edge.collectors import CollectorConfig, MetricCollector, collect_metrics  # noqa: F401
from fog_observability.core.edge.logs import LogHarvester, harvest_logs  # noqa: F401
from fog_observability.core.edge.planner import Batch, BatchPlanner, LinkState, plan_batches  # noqa: F401
from fog_observability.core.edge.spans import SpanRecorder, record_span  # noqa: F401
from fog_observability.core.edge.staging import StageResult, StagingStore  # noqa: F401
from fog_observability.core.edge.transmit import AckStatus, Transmitter, transmit  # noqa: F401
