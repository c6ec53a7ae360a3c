from fog_observability.core.replay.harness import (DomainTally, LoopbackConnection, ScenarioResult,  # noqa: F401
                                                   audit_evictions, load_scenario, run_scenario, scenario_from_cfg,
                                                   summary_lines, write_result)
from fog_observability.core.replay.schedule import (LinkInterval, LinkSchedule, inject_outage,  # noqa: F401
                                                    load_schedule, parse_schedule, random_schedule)
from fog_observability.core.replay.workload import (SyntheticExposition, WorkloadSpec,  # noqa: F401
                                                    generate_workload)
