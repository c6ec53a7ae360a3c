from fog_observability.core.archive.catalog import ArchiveCatalog, historical_query  # noqa: F401
from fog_observability.core.archive.regions import (RegionAggregate, RegionPolygon, aggregate_by_region,  # noqa: F401
                                                    load_regions, point_in_polygon, run_region_demo)
from fog_observability.core.archive.segment import (ArchiveSegment, SegmentManifest, read_segment,  # noqa: F401
                                                    write_segment)
