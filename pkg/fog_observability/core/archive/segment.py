"""Archive segment files.

Layout: magic, 4-byte manifest length, manifest JSON, compressed body, footer. The body is the
newline-terminated wire lines of one domain; the footer repeats the record count and checksum so
a truncated or corrupted file is detected without trusting the manifest.
"""
import hashlib
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

from fog_observability.core.errors import ChecksumMismatch, OdlcError
from fog_observability.core.model import InstrumentationDomain
from fog_observability.utils.structured import dumps_line, loads_line

MAGIC = b'ODLCSEG1'
CODEC = 'zlib'
_LENGTH = struct.Struct('>I')
# record count, checksum, compressed body length, magic
_FOOTER = struct.Struct('>Q8sQ8s')
SEGMENT_SUFFIX = '.seg'


def body_checksum(body):
    """64-bit BLAKE2b of the decompressed body, as hex."""
    return hashlib.blake2b(body, digest_size=8).hexdigest()


@dataclass(frozen=True)
class SegmentManifest:
    domain: str
    devices: Tuple[str, ...]
    min_ts: int
    max_ts: int
    count: int
    checksum: str
    codec: str = CODEC
    body_bytes: int = 0

    def intersects(self, start=None, end=None):
        """Whether [min_ts, max_ts] meets the half-open range [start, end)."""
        if start is not None and self.max_ts < start:
            return False
        if end is not None and self.min_ts >= end:
            return False
        return True

    def identity(self):
        return self.domain, self.min_ts, self.max_ts, self.checksum

    def to_dict(self):
        return {'domain': self.domain, 'devices': list(self.devices), 'min_ts': self.min_ts, 'max_ts': self.max_ts,
                'count': self.count, 'checksum': self.checksum, 'codec': self.codec, 'body_bytes': self.body_bytes}

    @classmethod
    def from_dict(cls, obj):
        return cls(domain=obj['domain'], devices=tuple(obj.get('devices', ())), min_ts=int(obj['min_ts']),
                   max_ts=int(obj['max_ts']), count=int(obj['count']), checksum=obj['checksum'],
                   codec=obj.get('codec', CODEC), body_bytes=int(obj.get('body_bytes', 0)))


@dataclass(frozen=True)
class ArchiveSegment:
    path: Path
    manifest: SegmentManifest
    lines: Tuple[bytes, ...] = field(default=(), repr=False, compare=False)

    def to_dict(self):
        return {'path': str(self.path), 'manifest': self.manifest.to_dict()}


def segment_name(domain, min_ts, max_ts):
    return f'{InstrumentationDomain.parse(domain).value}-{min_ts}-{max_ts}{SEGMENT_SUFFIX}'


def encode_segment(domain, records):
    """(manifest, file bytes) of ObservabilityRecords of one domain, ordered by (timestamp, dedup key)."""
    domain = InstrumentationDomain.parse(domain)
    records = sorted(records, key=lambda record: (record.timestamp_ms, record.dedup_key))
    if not records:
        raise ValueError('A segment needs at least one record')
    body = b''.join(record.line for record in records)
    compressed = zlib.compress(body)
    manifest = SegmentManifest(domain=domain.value, devices=tuple(sorted({record.device_id for record in records})),
                               min_ts=records[0].timestamp_ms, max_ts=records[-1].timestamp_ms, count=len(records),
                               checksum=body_checksum(body), body_bytes=len(body))
    header = dumps_line(manifest.to_dict()).encode('utf-8')
    footer = _FOOTER.pack(manifest.count, bytes.fromhex(manifest.checksum), len(compressed), MAGIC)
    return manifest, MAGIC + _LENGTH.pack(len(header)) + header + compressed + footer


def write_segment(directory, domain, records):
    """Writes a segment under `directory` via a temporary file and rename; returns (path, manifest).

    An existing file with the same name and checksum is reused; a different one gets a `~N` suffix.
    """
    directory = Path(directory)
    manifest, data = encode_segment(domain, records)
    base = segment_name(domain, manifest.min_ts, manifest.max_ts)
    path = directory / base
    suffix = 0
    while path.exists():
        try:
            if read_manifest(path).checksum == manifest.checksum:
                return path, manifest
        except OdlcError:
            pass
        suffix += 1
        path = directory / base.replace(SEGMENT_SUFFIX, f'~{suffix}{SEGMENT_SUFFIX}')
    fd, tmp_name = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, 'wb') as fout:
            fout.write(data)
            fout.flush()
            os.fsync(fout.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path, manifest


def _split(data, path):
    if len(data) < len(MAGIC) + _LENGTH.size + _FOOTER.size or not data.startswith(MAGIC):
        raise ChecksumMismatch(f'{path} is not a segment file', path=str(path))
    (header_length,) = _LENGTH.unpack_from(data, len(MAGIC))
    header_end = len(MAGIC) + _LENGTH.size + header_length
    if header_end + _FOOTER.size > len(data):
        raise ChecksumMismatch(f'{path} has a truncated manifest', path=str(path))
    manifest = SegmentManifest.from_dict(loads_line(data[len(MAGIC) + _LENGTH.size:header_end]))
    return manifest, data[header_end:len(data) - _FOOTER.size], data[len(data) - _FOOTER.size:]


def read_manifest(path):
    """Manifest only; the body is not decompressed."""
    with open(path, 'rb') as fin:
        head = fin.read(len(MAGIC) + _LENGTH.size)
        if len(head) < len(MAGIC) + _LENGTH.size or not head.startswith(MAGIC):
            raise ChecksumMismatch(f'{path} is not a segment file', path=str(path))
        (header_length,) = _LENGTH.unpack_from(head, len(MAGIC))
        return SegmentManifest.from_dict(loads_line(fin.read(header_length)))


def read_segment(path):
    """Decompresses and verifies a segment; raises ChecksumMismatch on any inconsistency."""
    path = Path(path)
    with open(path, 'rb') as fin:
        data = fin.read()
    try:
        manifest, compressed, footer = _split(data, path)
    except (ValueError, KeyError, struct.error) as err:
        raise ChecksumMismatch(f'{path} has an unreadable manifest: {err}', path=str(path))
    count, checksum, body_length, magic = _FOOTER.unpack(footer)
    if magic != MAGIC or body_length != len(compressed):
        raise ChecksumMismatch(f'{path} has a damaged footer', path=str(path))
    if manifest.codec != CODEC:
        raise ChecksumMismatch(f'{path} uses unknown codec {manifest.codec}', path=str(path))
    try:
        body = zlib.decompress(compressed)
    except zlib.error as err:
        raise ChecksumMismatch(f'{path} body does not decompress: {err}', path=str(path))
    actual = body_checksum(body)
    if actual != manifest.checksum or checksum.hex() != manifest.checksum:
        raise ChecksumMismatch(f'{path} checksum {actual} != {manifest.checksum}', path=str(path),
                               expected=manifest.checksum, actual=actual)
    lines = tuple(line + b'\n' for line in body.split(b'\n')[:-1])
    if len(lines) != manifest.count or count != manifest.count:
        raise ChecksumMismatch(f'{path} holds {len(lines)} records, manifest says {manifest.count}', path=str(path))
    return ArchiveSegment(path=path, manifest=manifest, lines=lines)
