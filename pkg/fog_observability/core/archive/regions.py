"""Point-in-polygon aggregation of archived records by region."""
import contextlib
import time
from collections import namedtuple
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from fog_observability.core.errors import DegeneratePolygon, MissingField
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import read_lines

MODES = ('naive', 'accelerated')


@dataclass(frozen=True)
class RegionPolygon:
    name: str
    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        vertices = tuple((float(lon), float(lat)) for lon, lat in self.vertices)
        if len(vertices) > 1 and vertices[0] == vertices[-1]:
            vertices = vertices[:-1]
        if len(vertices) < 3:
            raise DegeneratePolygon(f'Region {self.name!r} has {len(vertices)} vertices, at least 3 are needed',
                                    region=self.name)
        object.__setattr__(self, 'vertices', vertices)

    @property
    def bbox(self):
        xs = [x for x, _ in self.vertices]
        ys = [y for _, y in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def edges(self):
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    @classmethod
    def from_dict(cls, obj):
        return cls(name=str(obj['name']), vertices=tuple(tuple(vertex) for vertex in obj['vertices']))

    def to_dict(self):
        return {'name': self.name, 'vertices': [list(vertex) for vertex in self.vertices]}


def load_regions(path):
    """Newline-delimited JSON polygons: {"name": ..., "vertices": [[lon, lat], ...]}."""
    return [RegionPolygon.from_dict(obj) for obj in read_lines(path)]


def point_in_polygon(point, polygon):
    """Even-odd ray casting; points on an edge or a vertex are inside."""
    x, y = float(point[0]), float(point[1])
    for (xi, yi), (xj, yj) in polygon.edges():
        cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
        if cross == 0 and min(xi, xj) <= x <= max(xi, xj) and min(yi, yj) <= y <= max(yi, yj):
            return True
    inside = False
    for (xi, yi), (xj, yj) in polygon.edges():
        if (yi > y) != (yj > y):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < x_cross:
                inside = not inside
    return inside


def contains_points(polygon, xs, ys):
    """Vectorised point_in_polygon; evaluates the same expressions element-wise."""
    on_edge = np.zeros(len(xs), dtype=bool)
    inside = np.zeros(len(xs), dtype=bool)
    for (xi, yi), (xj, yj) in polygon.edges():
        cross = (xj - xi) * (ys - yi) - (yj - yi) * (xs - xi)
        on_edge |= ((cross == 0) & (xs >= min(xi, xj)) & (xs <= max(xi, xj))
                    & (ys >= min(yi, yj)) & (ys <= max(yi, yj)))
        straddle = (yi > ys) != (yj > ys)
        if yj != yi:
            x_cross = (xj - xi) * (ys - yi) / (yj - yi) + xi
            inside ^= straddle & (xs < x_cross)
    return on_edge | inside


class RegionAggregate(namedtuple('RegionAggregate', ['region', 'count', 'mean', 'min', 'max'])):
    def to_dict(self):
        return self._asdict()


def _field_map(record):
    if hasattr(record, 'field_map'):
        return record.field_map()
    if hasattr(record, 'payload') and hasattr(record.payload, 'field_map'):
        return record.payload.field_map()
    return record


def extract_points(records, field, lon_field='lon', lat_field='lat'):
    """(xs, ys, values, skipped); records missing a coordinate or a numeric `field` are skipped."""
    xs, ys, values = [], [], []
    skipped = 0
    for record in records:
        fields = _field_map(record)
        try:
            missing = [name for name in (lon_field, lat_field, field) if name not in fields]
            if missing:
                raise MissingField(f'Record lacks {", ".join(missing)}', fields=missing)
            x, y, value = float(fields[lon_field]), float(fields[lat_field]), float(fields[field])
        except (MissingField, TypeError, ValueError):
            skipped += 1
            continue
        xs.append(x)
        ys.append(y)
        values.append(value)
    return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.float64), np.array(values, dtype=np.float64), skipped


def assign_naive(polygons, xs, ys):
    """Index of the first polygon holding each point (-1 for none); every polygon tests every point."""
    assigned = np.full(len(xs), -1, dtype=np.int64)
    for k, polygon in enumerate(polygons):
        hit = contains_points(polygon, xs, ys) & (assigned == -1)
        assigned[hit] = k
    return assigned


def assign_accelerated(polygons, xs, ys):
    """Same result as assign_naive; points are sorted by x once and each polygon tests only the
    unassigned points inside its bounding box."""
    assigned = np.full(len(xs), -1, dtype=np.int64)
    order = np.argsort(xs, kind='stable')
    sorted_xs = xs[order]
    for k, polygon in enumerate(polygons):
        min_x, min_y, max_x, max_y = polygon.bbox
        lo = np.searchsorted(sorted_xs, min_x, side='left')
        hi = np.searchsorted(sorted_xs, max_x, side='right')
        candidates = order[lo:hi]
        candidates = candidates[(ys[candidates] >= min_y) & (ys[candidates] <= max_y) & (assigned[candidates] == -1)]
        if not len(candidates):
            continue
        hit = contains_points(polygon, xs[candidates], ys[candidates])
        assigned[candidates[hit]] = k
    return assigned


_ASSIGNERS = {
    'naive': assign_naive,
    'accelerated': assign_accelerated,
}


def _reduce(polygons, assigned, values):
    aggregates = []
    for k, polygon in enumerate(polygons):
        selected = values[assigned == k]
        if len(selected):
            aggregates.append(RegionAggregate(polygon.name, int(len(selected)), float(np.mean(selected)),
                                              float(np.min(selected)), float(np.max(selected))))
        else:
            aggregates.append(RegionAggregate(polygon.name, 0, None, None, None))
    return aggregates


def aggregate_by_region(records, polygons, field, mode='accelerated', lon_field='lon', lat_field='lat'):
    """(list of RegionAggregate in polygon order, skipped record count)."""
    if mode not in _ASSIGNERS:
        raise ValueError(f'Mode {mode!r} not found, expected one of {", ".join(MODES)}')
    xs, ys, values, skipped = extract_points(records, field, lon_field, lat_field)
    assigned = _ASSIGNERS[mode](polygons, xs, ys)
    return _reduce(polygons, assigned, values), skipped


RegionDemoResult = namedtuple('RegionDemoResult', ['aggregates', 'skipped', 'naive_s', 'accelerated_s', 'speedup',
                                                   'identical'])


def run_region_demo(records, polygons, field, recorder=None):
    """Runs both modes on the same points; with a recorder each phase becomes a span handed to its sink."""
    logger = get_logger().getChild('regions')

    def phase(name):
        if recorder is None:
            return contextlib.nullcontext()
        return recorder.span(name, attributes={'points': len(records), 'regions': len(polygons)})

    with phase('aggregate_by_region'):
        with phase('extract'):
            xs, ys, values, skipped = extract_points(records, field)
        timings, results = {}, {}
        for mode in MODES:
            with phase(f'assign_{mode}'):
                began = time.perf_counter()
                assigned = _ASSIGNERS[mode](polygons, xs, ys)
                timings[mode] = time.perf_counter() - began
            with phase(f'reduce_{mode}'):
                results[mode] = _reduce(polygons, assigned, values)
    speedup = timings['naive'] / timings['accelerated'] if timings['accelerated'] > 0 else float('inf')
    logger.info(f'naive {timings["naive"]:.4f}s, accelerated {timings["accelerated"]:.4f}s, speed-up {speedup:.1f}x')
    return RegionDemoResult(aggregates=results['accelerated'], skipped=skipped, naive_s=timings['naive'],
                            accelerated_s=timings['accelerated'], speedup=speedup,
                            identical=results['naive'] == results['accelerated'])


def random_points_in(polygons, count, seed=0, field='throughput'):
    """Demo records spread over the joint bounding box of `polygons`."""
    rng = np.random.default_rng(seed)
    boxes = np.array([polygon.bbox for polygon in polygons])
    min_x, min_y = boxes[:, 0].min(), boxes[:, 1].min()
    max_x, max_y = boxes[:, 2].max(), boxes[:, 3].max()
    xs = rng.uniform(min_x, max_x, count)
    ys = rng.uniform(min_y, max_y, count)
    values = rng.gamma(2.0, 4.0, count)
    return [{'lon': float(x), 'lat': float(y), field: float(v)} for x, y, v in zip(xs, ys, values)]
