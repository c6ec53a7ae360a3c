"""Time-series store for metric samples.

Recent samples live in a per-series head; once the head holds `head_max_samples` points it is sealed
into an immutable segment with delta-encoded timestamps. A (series, timestamp) pair exists in exactly
one place and the last write wins.
"""
import hashlib
import threading
from collections import namedtuple
from pathlib import Path

import numpy as np

from fog_observability.core.errors import InvalidRange
from fog_observability.core.fog.selector import MetricSelector
from fog_observability.core.records import MetricSample
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import dumps_line, loads_line

AGGREGATIONS = ('raw', 'avg', 'min', 'max', 'rate')

_UNCHANGED = object()

SeriesMeta = namedtuple('SeriesMeta', ['name', 'labels', 'device_id'])


class SeriesResult(namedtuple('SeriesResult', ['name', 'labels', 'device_id', 'points'])):
    def to_dict(self):
        return {'name': self.name, 'labels': dict(self.labels), 'device_id': self.device_id,
                'points': [[int(ts), float(value)] for ts, value in self.points]}


def series_key(name, labels, device_id):
    """64-bit series identifier of (name, canonical labels, device)."""
    text = dumps_line([name, [list(pair) for pair in sorted(labels)], device_id]).encode('utf-8')
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), 'big')


class SealedSegment(object):
    """Immutable block of series. Per series: first timestamp absolute, the rest as deltas."""

    def __init__(self, segment_id, series_points):
        self.segment_id = segment_id
        sids = sorted(series_points)
        deltas, values, offsets = [], [], {}
        start = 0
        for sid in sids:
            timestamps, series_values = series_points[sid]
            if len(timestamps) == 0:
                continue
            encoded = np.diff(timestamps, prepend=0)
            deltas.append(encoded)
            values.append(series_values)
            offsets[sid] = (start, len(timestamps))
            start += len(timestamps)
        self.offsets = offsets
        self.ts_deltas = np.concatenate(deltas).astype(np.int64) if deltas else np.zeros(0, dtype=np.int64)
        self.values = np.concatenate(values).astype(np.float64) if values else np.zeros(0, dtype=np.float64)
        self.min_ts = min((int(points[0][0]) for points in series_points.values() if len(points[0])), default=0)
        self.max_ts = max((int(points[0][-1]) for points in series_points.values() if len(points[0])), default=0)

    def __len__(self):
        return len(self.values)

    def series(self, sid):
        if sid not in self.offsets:
            return None
        start, length = self.offsets[sid]
        return np.cumsum(self.ts_deltas[start:start + length]), self.values[start:start + length]

    def all_series(self):
        return {sid: self.series(sid) for sid in self.offsets}

    def save(self, path):
        sids = np.array(sorted(self.offsets), dtype=np.uint64)
        starts = np.array([self.offsets[int(sid)][0] for sid in sids], dtype=np.int64)
        lengths = np.array([self.offsets[int(sid)][1] for sid in sids], dtype=np.int64)
        np.savez(path, sids=sids, starts=starts, lengths=lengths, ts_deltas=self.ts_deltas, values=self.values)

    @classmethod
    def load(cls, path, segment_id):
        data = np.load(path)
        series_points = {}
        for sid, start, length in zip(data['sids'], data['starts'], data['lengths']):
            start, length = int(start), int(length)
            series_points[int(sid)] = (np.cumsum(data['ts_deltas'][start:start + length]),
                                       data['values'][start:start + length])
        return cls(segment_id, series_points)


class TimeSeriesStore(object):
    def __init__(self, head_max_samples=4096, data_dir=None):
        self.head_max_samples = int(head_max_samples)
        self.data_dir = Path(data_dir) if data_dir else None
        self._series = {}
        self._head = {}
        self._head_count = 0
        self._segments = []
        self._sealed_max = {}
        self._next_segment_id = 0
        self._lock = threading.RLock()
        self._logger = get_logger().getChild('tsdb')
        if self.data_dir is not None:
            self._load()

    # --- persistence
    def _series_file(self):
        return self.data_dir / 'series.jsonl'

    def _segment_path(self, segment_id):
        return self.data_dir / f'segment-{segment_id:08d}.npz'

    def _load(self):
        self.data_dir.mkdir(parents=True, exist_ok=True)
        if self._series_file().is_file():
            with open(self._series_file(), 'r', encoding='utf-8') as fin:
                for line in fin:
                    obj = loads_line(line)
                    labels = tuple(tuple(pair) for pair in obj['labels'])
                    self._series[int(obj['sid'])] = SeriesMeta(obj['name'], labels, obj['device_id'])
        for path in sorted(self.data_dir.glob('segment-*.npz')):
            segment_id = int(path.stem.split('-')[1])
            segment = SealedSegment.load(path, segment_id)
            self._segments.append(segment)
            self._next_segment_id = max(self._next_segment_id, segment_id + 1)
            for sid, (timestamps, _) in segment.all_series().items():
                self._sealed_max[sid] = max(self._sealed_max.get(sid, -1), int(timestamps[-1]))
        if self._segments:
            self._logger.info(f'Loaded {len(self._segments)} sealed segments from {self.data_dir}')

    def _persist_series(self, sid, meta):
        if self.data_dir is None:
            return
        with open(self._series_file(), 'a', encoding='utf-8') as fout:
            fout.write(dumps_line({'sid': sid, 'name': meta.name, 'labels': [list(p) for p in meta.labels],
                                   'device_id': meta.device_id}) + '\n')

    def _add_segment(self, segment):
        self._segments.append(segment)
        if self.data_dir is not None:
            segment.save(self._segment_path(segment.segment_id))

    def _drop_segment(self, segment):
        self._segments.remove(segment)
        if self.data_dir is not None:
            path = self._segment_path(segment.segment_id)
            if path.exists():
                path.unlink()

    def _new_segment(self, series_points):
        segment = SealedSegment(self._next_segment_id, series_points)
        self._next_segment_id += 1
        return segment

    # --- writes
    def append(self, sample):
        sid = series_key(sample.name, sample.labels, sample.device_id)
        timestamp = sample.source_timestamp
        with self._lock:
            if sid not in self._series:
                meta = SeriesMeta(sample.name, sample.labels, sample.device_id)
                self._series[sid] = meta
                self._persist_series(sid, meta)
            if timestamp <= self._sealed_max.get(sid, -1):
                sealed = self._remove_sealed_point(sid, timestamp, sample.value)
                if sealed is _UNCHANGED:
                    return sid
            head = self._head.setdefault(sid, {})
            if timestamp not in head:
                self._head_count += 1
            head[timestamp] = sample.value
            if self._head_count >= self.head_max_samples:
                self.seal()
        return sid

    def _remove_sealed_point(self, sid, timestamp, value):
        """Drops a sealed point about to be overwritten; a point with the same value is left alone."""
        for segment in list(self._segments):
            if not segment.min_ts <= timestamp <= segment.max_ts:
                continue
            points = segment.series(sid)
            if points is None:
                continue
            timestamps, values = points
            index = np.searchsorted(timestamps, timestamp)
            if index < len(timestamps) and timestamps[index] == timestamp:
                if values[index] == value or (np.isnan(values[index]) and np.isnan(value)):
                    return _UNCHANGED
                rebuilt = segment.all_series()
                keep = np.ones(len(timestamps), dtype=bool)
                keep[index] = False
                rebuilt[sid] = (timestamps[keep], values[keep])
                self._drop_segment(segment)
                if any(len(series[0]) for series in rebuilt.values()):
                    self._add_segment(self._new_segment(rebuilt))
                return True
        return False

    def seal(self):
        with self._lock:
            if not self._head_count:
                return None
            series_points = {}
            for sid, points in self._head.items():
                if not points:
                    continue
                timestamps = np.array(sorted(points), dtype=np.int64)
                values = np.array([points[int(ts)] for ts in timestamps], dtype=np.float64)
                series_points[sid] = (timestamps, values)
                self._sealed_max[sid] = max(self._sealed_max.get(sid, -1), int(timestamps[-1]))
            segment = self._new_segment(series_points)
            self._add_segment(segment)
            self._head = {}
            self._head_count = 0
            return segment

    # --- reads
    def __len__(self):
        with self._lock:
            return self._head_count + sum(len(segment) for segment in self._segments)

    @property
    def segment_count(self):
        return len(self._segments)

    def series_ids(self, selector=None):
        selector = MetricSelector.parse(selector) if selector is not None else None
        with self._lock:
            return [sid for sid, meta in self._series.items()
                    if selector is None or selector.matches(meta.name, meta.labels, meta.device_id)]

    def series_meta(self, sid):
        return self._series[sid]

    def series_points(self, sid, start=None, end=None):
        """Sorted (timestamps, values) of one series within [start, end)."""
        with self._lock:
            chunks_ts, chunks_values = [], []
            for segment in self._segments:
                points = segment.series(sid)
                if points is not None:
                    chunks_ts.append(points[0])
                    chunks_values.append(points[1])
            head = self._head.get(sid)
            if head:
                chunks_ts.append(np.fromiter(head.keys(), dtype=np.int64, count=len(head)))
                chunks_values.append(np.fromiter(head.values(), dtype=np.float64, count=len(head)))
        if not chunks_ts:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
        timestamps = np.concatenate(chunks_ts)
        values = np.concatenate(chunks_values)
        order = np.argsort(timestamps, kind='stable')
        timestamps, values = timestamps[order], values[order]
        mask = np.ones(len(timestamps), dtype=bool)
        if start is not None:
            mask &= timestamps >= start
        if end is not None:
            mask &= timestamps < end
        return timestamps[mask], values[mask]

    def samples(self, start=None, end=None, device_filter=None):
        """MetricSamples with a timestamp in [start, end), ordered by series then time."""
        out = []
        for sid in self.series_ids():
            meta = self._series[sid]
            if device_filter is not None and meta.device_id not in device_filter:
                continue
            timestamps, values = self.series_points(sid, start, end)
            out.extend(MetricSample(name=meta.name, labels=meta.labels, value=float(value),
                                    source_timestamp=int(ts), device_id=meta.device_id)
                       for ts, value in zip(timestamps, values))
        return out

    def delete_samples(self, samples):
        """Removes exactly the given (series, timestamp) points; returns how many were removed."""
        doomed = {}
        for sample in samples:
            sid = series_key(sample.name, sample.labels, sample.device_id)
            doomed.setdefault(sid, set()).add(sample.source_timestamp)
        removed = 0
        with self._lock:
            for sid, timestamps in doomed.items():
                head = self._head.get(sid, {})
                for ts in timestamps & set(head):
                    del head[ts]
                    self._head_count -= 1
                    removed += 1
            for segment in list(self._segments):
                touched = [sid for sid in doomed if sid in segment.offsets]
                if not touched:
                    continue
                rebuilt = segment.all_series()
                dropped = 0
                for sid in touched:
                    timestamps, values = rebuilt[sid]
                    keep = ~np.isin(timestamps, np.fromiter(doomed[sid], dtype=np.int64))
                    dropped += int((~keep).sum())
                    if keep.any():
                        rebuilt[sid] = (timestamps[keep], values[keep])
                    else:
                        del rebuilt[sid]
                if not dropped:
                    continue
                removed += dropped
                self._drop_segment(segment)
                if rebuilt:
                    self._add_segment(self._new_segment(rebuilt))
        return removed

    def query_range(self, selector, start, end, aggregation='raw', step_s=None):
        if start >= end:
            raise InvalidRange(f'start {start} must be before end {end}')
        if aggregation not in AGGREGATIONS:
            raise ValueError(f'Unknown aggregation {aggregation!r}, expected one of {", ".join(AGGREGATIONS)}')
        step_ms = int(round(step_s * 1000)) if step_s is not None else 0
        if aggregation != 'raw' and step_ms < 1:
            raise InvalidRange(f'step_s must be at least 1 ms for {aggregation}, got {step_s}')
        results = []
        for sid in sorted(self.series_ids(selector), key=lambda sid: self._sort_key(sid)):
            meta = self._series[sid]
            timestamps, values = self.series_points(sid, start, end)
            if not len(timestamps):
                continue
            if aggregation == 'raw':
                points = list(zip(timestamps.tolist(), values.tolist()))
            else:
                points = _aggregate(timestamps, values, start, end, step_ms, aggregation)
            results.append(SeriesResult(meta.name, meta.labels, meta.device_id, points))
        return results

    def _sort_key(self, sid):
        meta = self._series[sid]
        return meta.name, meta.labels, meta.device_id


def reset_corrected_increase(values):
    """Sum of increases; a drop is a counter reset, so the new value counts from zero."""
    if len(values) < 2:
        return 0.0
    deltas = np.diff(values)
    return float(np.where(deltas >= 0, deltas, values[1:]).sum())


def _aggregate(timestamps, values, start, end, step_ms, aggregation):
    windows = (timestamps - start) // step_ms
    points = []
    boundaries = np.flatnonzero(np.diff(windows)) + 1
    for window_ts, window_values in zip(np.split(timestamps, boundaries), np.split(values, boundaries)):
        window_start = start + int((window_ts[0] - start) // step_ms) * step_ms
        if aggregation == 'avg':
            value = float(np.mean(window_values))
        elif aggregation == 'min':
            value = float(np.min(window_values))
        elif aggregation == 'max':
            value = float(np.max(window_values))
        else:
            window_s = (min(window_start + step_ms, end) - window_start) / 1000.0
            value = reset_corrected_increase(window_values) / window_s
        points.append((window_start, value))
    return points
