"""DAS1 trace format, label sidecars and streaming windows.

DAS1 layout (all little-endian)::

    0   4s   magic  b"DAS1"
    4   u32  version (1)
    8   u32  sensor_count
    12  u32  sample_rate_hz
    16  u64  sample_count
    24  f32  sample_count * sensor_count values, time-major
"""
from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Union

import numpy as np

from .errors import BadMagicError, DataError, TruncatedError, VersionMismatchError

MAGIC = b"DAS1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")
HEADER_SIZE = _HEADER.size  # 24

PathOrFile = Union[str, os.PathLike, BinaryIO]


@dataclass(eq=False)
class RawTrace:
    """Time-major acoustic samples, one column per virtual sensor.

    Samples are held as float32, the on-disk precision; consumers cast to
    float64 before doing arithmetic.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise DataError(f"samples must be 2-D (time, sensor), got shape {samples.shape}")
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be a positive integer, got {self.sample_rate_hz}")
        self.samples = samples
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def sensor_count(self) -> int:
        return self.samples.shape[1]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.sample_count / self.sample_rate_hz

    def channel(self, sensor_index: int) -> np.ndarray:
        return self.samples[:, sensor_index].astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
        )


@dataclass(frozen=True)
class Window:
    sensor_index: int
    start_s: float
    samples: np.ndarray


def encode_trace(trace: RawTrace) -> bytes:
    if not np.all(np.isfinite(trace.samples)):
        raise DataError("trace contains non-finite samples")
    header = _HEADER.pack(MAGIC, VERSION, trace.sensor_count, trace.sample_rate_hz, trace.sample_count)
    payload = np.ascontiguousarray(trace.samples, dtype="<f4").tobytes()
    return header + payload


def write_trace(trace: RawTrace, destination: PathOrFile) -> int:
    """Write ``trace`` as DAS1 and return the number of bytes written.

    The whole buffer is validated and encoded before the destination is
    touched, so a non-finite sample leaves no partial file behind.
    """
    blob = encode_trace(trace)
    if hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)
    return len(blob)


def decode_trace(blob: bytes) -> RawTrace:
    if len(blob) < HEADER_SIZE:
        if blob[:4] and blob[:4] != MAGIC[: len(blob[:4])]:
            raise BadMagicError(f"bad magic {blob[:4]!r}")
        raise TruncatedError(f"header needs {HEADER_SIZE} bytes, got {len(blob)}")
    magic, version, sensors, rate, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported DAS1 version {version}")
    expected = count * sensors * 4
    payload = blob[HEADER_SIZE:]
    if len(payload) < expected:
        raise TruncatedError(
            f"header declares {count} samples x {sensors} sensors ({expected} bytes), "
            f"payload has {len(payload)} bytes"
        )
    if len(payload) > expected:
        raise DataError(f"{len(payload) - expected} trailing bytes after payload")
    samples = np.frombuffer(payload, dtype="<f4").reshape(count, sensors).astype(np.float32)
    return RawTrace(samples=samples, sample_rate_hz=rate)


def read_trace(source: PathOrFile) -> RawTrace:
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    return decode_trace(blob)


def window_count(duration_s: float, window_s: float, hop_s: float) -> int:
    if window_s > duration_s + 1e-12:
        return 0
    return int(math.floor((duration_s - window_s) / hop_s + 1e-9)) + 1


def window_iter(trace: RawTrace, window_s: float = 1.0, hop_s: float = 1.0) -> Iterator[Window]:
    """Yield per-sensor windows ordered by (start_s, sensor_index).

    Partial trailing windows are dropped; a window longer than the trace
    yields nothing.
    """
    if window_s <= 0 or hop_s <= 0:
        raise DataError("window_s and hop_s must be positive")
    fs = trace.sample_rate_hz
    win = window_s * fs
    if abs(win - round(win)) > 1e-9:
        raise DataError(f"window_s * sample_rate_hz must be integral, got {win}")
    win = int(round(win))
    n = window_count(trace.duration_s, window_s, hop_s)
    for k in range(n):
        start = int(round(k * hop_s * fs))
        block = trace.samples[start:start + win]
        for s in range(trace.sensor_count):
            yield Window(sensor_index=s, start_s=k * hop_s, samples=block[:, s])


def write_labels(mask, destination) -> int:
    """Write a label sidecar: one JSON object per labeled cell.

    Returns the number of records written.
    """
    lines = [json.dumps(rec, sort_keys=True) for rec in mask.records()]
    text = "".join(line + "\n" for line in lines)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)
    return len(lines)


def read_label_records(source) -> list[dict]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return [json.loads(line) for line in io.StringIO(text) if line.strip()]
