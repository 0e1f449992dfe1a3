"""Labeled synthetic DAS scenes.

Every active source emits one waveform; each virtual sensor sees that
waveform scaled by the geometric/absorptive attenuation over its distance
to the source, plus white Gaussian noise from a per-channel RNG substream.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import DataError
from .ingest import RawTrace

D0_M = 1.0
DEFAULT_ALPHA = 0.15
DEFAULT_LABEL_FACTOR = 3.0
EXCAVATOR_RATE_HZ = (0.4, 1.2)  # bucket impacts; kept below the walking cadence
EXCAVATOR_HUM = 0.3  # engine level relative to an impact
EXCAVATOR_LOAD_HZ = (0.1, 0.3)  # dig-cycle modulation of impact strength
EXCAVATOR_LOAD_DEPTH = 0.8


class SourceKind(str, Enum):
    EXCAVATOR = "Excavator"
    HIGHWAY = "Highway"
    WALKING = "Walking"
    NONE = "None"

    def __str__(self):
        # numpy builds string arrays from str(); keep that equal to the value
        return self.value


# Upper edge of each signature's band, used for the aliasing check.
SIGNATURE_TOP_HZ = {
    SourceKind.EXCAVATOR: 100.0,
    SourceKind.HIGHWAY: 50.0,
    SourceKind.WALKING: 60.0,
    SourceKind.NONE: 0.0,
}


@dataclass
class SourceSpec:
    kind: SourceKind
    position_m: float
    start_s: float
    end_s: float
    amplitude: float
    offset_m: float = 0.0  # perpendicular distance from the fiber

    def __post_init__(self):
        self.kind = SourceKind(self.kind)
        if not self.start_s < self.end_s:
            raise DataError(f"source start_s {self.start_s} must precede end_s {self.end_s}")
        if self.position_m < 0 or self.amplitude < 0 or self.offset_m < 0:
            raise DataError("position_m, amplitude and offset_m must be non-negative")


@dataclass
class SceneConfig:
    sensor_count: int
    duration_s: float
    sample_rate_hz: int = 2000
    sensor_spacing_m: float = 4.0
    sources: list = field(default_factory=list)
    noise_std: float = 0.1
    attenuation_alpha: float = DEFAULT_ALPHA
    seed: int = 0
    label_factor: float = DEFAULT_LABEL_FACTOR

    def __post_init__(self):
        self.sources = [s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in self.sources]
        if self.sensor_count < 1:
            raise DataError("sensor_count must be >= 1")
        if self.duration_s <= 0:
            raise DataError("duration_s must be positive")
        if self.noise_std < 0:
            raise DataError("noise_std must be non-negative")
        if self.attenuation_alpha < 0:
            raise DataError("attenuation_alpha must be non-negative")
        top = max((SIGNATURE_TOP_HZ[s.kind] for s in self.sources), default=0.0)
        if self.sample_rate_hz < 2 * top:
            raise DataError(
                f"sample_rate_hz {self.sample_rate_hz} below twice the top source frequency {top} Hz"
            )

    @property
    def sample_count(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def seconds(self) -> int:
        return int(math.ceil(self.duration_s))

    @property
    def label_threshold(self) -> float:
        return self.label_factor * self.noise_std

    def sensor_positions(self) -> np.ndarray:
        return np.arange(self.sensor_count) * self.sensor_spacing_m

    def distances(self, source: SourceSpec) -> np.ndarray:
        return np.hypot(self.sensor_positions() - source.position_m, source.offset_m)

    def to_dict(self) -> dict:
        d = asdict(self)
        for s in d["sources"]:
            s["kind"] = SourceKind(s["kind"]).value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SceneConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def attenuate(amplitude, distance_m, alpha=DEFAULT_ALPHA):
    """Amplitude after ``distance_m`` of propagation.

    ``amplitude * exp(-alpha * d) / sqrt(max(d, 1 m))``; works elementwise
    on arrays.
    """
    d = np.asarray(distance_m, dtype=np.float64)
    out = amplitude * np.exp(-alpha * d) / np.sqrt(np.maximum(d, D0_M))
    return float(out) if out.ndim == 0 else out


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def _damped_burst(n: int, fs: int, freq: float, tau: float) -> np.ndarray:
    t = np.arange(n) / fs
    return np.exp(-t / tau) * np.sin(2 * np.pi * freq * t)


def _impulse_train(length: int, fs: int, rng, rate: float, jitter: float, freq_lo: float,
                   freq_hi: float, tau: float, amp_lo: float) -> np.ndarray:
    out = np.zeros(length)
    burst_len = int(6 * tau * fs)
    t = rng.uniform(0, 1.0 / rate)
    while True:
        i = int(t * fs)
        if i >= length:
            break
        burst = rng.uniform(amp_lo, 1.0) * _damped_burst(burst_len, fs, rng.uniform(freq_lo, freq_hi), tau)
        stop = min(length, i + burst_len)
        out[i:stop] += burst[: stop - i]
        t += (1.0 / rate) * (1 + rng.uniform(-jitter, jitter))
    return out


def _excavator(length, fs, rng):
    rate = rng.uniform(*EXCAVATOR_RATE_HZ)
    center = rng.uniform(20.0, 60.0)
    bursts = _impulse_train(length, fs, rng, rate, 0.15, 0.9 * center, 1.1 * center, 0.12, 0.6)
    # diesel engine harmonics keep the signature present between impacts
    hum_f = rng.uniform(10.0, 12.5)
    t = np.arange(length) / fs
    hum = sum(w * np.sin(2 * np.pi * k * hum_f * t + rng.uniform(0, 2 * np.pi))
              for k, w in enumerate((1.0, 0.6, 0.4, 0.25), start=1))
    f_load = rng.uniform(*EXCAVATOR_LOAD_HZ)
    load = 1.0 + EXCAVATOR_LOAD_DEPTH * np.sin(2 * np.pi * f_load * t + rng.uniform(0, 2 * np.pi))
    return bursts * load + EXCAVATOR_HUM * hum


def _highway(length, fs, rng):
    sos = signal.butter(4, [5.0, 50.0], btype="bandpass", fs=fs, output="sos")
    pad = min(length, fs)
    return signal.sosfilt(sos, rng.standard_normal(length + pad))[pad:]


def _walking(length, fs, rng):
    return _impulse_train(length, fs, rng, rng.uniform(1.5, 2.5), 0.1, 15.0, 40.0, 0.03, 0.7)


_GENERATORS = {
    SourceKind.EXCAVATOR: _excavator,
    SourceKind.HIGHWAY: _highway,
    SourceKind.WALKING: _walking,
}


def source_waveform(config: SceneConfig, index: int) -> np.ndarray:
    """Unit-peak waveform of source ``index`` over the whole scene."""
    src = config.sources[index]
    fs = config.sample_rate_hz
    out = np.zeros(config.sample_count)
    if src.kind is SourceKind.NONE:
        return out
    i0 = max(0, int(round(src.start_s * fs)))
    i1 = min(config.sample_count, int(round(src.end_s * fs)))
    if i1 <= i0:
        return out
    wave = _GENERATORS[src.kind](i1 - i0, fs, _rng(config.seed, 1, index))
    peak = np.max(np.abs(wave))
    if peak > 0:
        out[i0:i1] = wave / peak
    return out


def synth_scene(config: SceneConfig) -> RawTrace:
    """Render ``config`` into a time-major float32 trace."""
    n, S = config.sample_count, config.sensor_count
    waves = [source_waveform(config, i) for i in range(len(config.sources))]
    gains = np.array([attenuate(src.amplitude, config.distances(src), config.attenuation_alpha)
                      for src in config.sources]).reshape(len(config.sources), S)
    samples = np.empty((n, S), dtype=np.float32)
    for s in range(S):
        col = np.zeros(n)
        if config.noise_std > 0:
            col += config.noise_std * _rng(config.seed, 0, s).standard_normal(n)
        for w, g in zip(waves, gains[:, s]):
            if g > 0:
                col += g * w
        samples[:, s] = col
    return RawTrace(samples=samples, sample_rate_hz=config.sample_rate_hz)


@dataclass
class LabelMask:
    """Ground truth per (sensor, second) cell."""

    labels: np.ndarray  # object array of SourceKind values (plain str), shape (sensors, seconds)
    source_ids: np.ndarray  # int array, -1 where unlabeled

    @property
    def shape(self):
        return self.labels.shape

    def label(self, sensor: int, second: int) -> SourceKind:
        return SourceKind(self.labels[sensor, second])

    def is_excavator(self) -> np.ndarray:
        return self.labels == SourceKind.EXCAVATOR

    def records(self):
        S, T = self.labels.shape
        for t in range(T):
            for s in range(S):
                if self.source_ids[s, t] >= 0:
                    yield {"sensor": s, "second": t, "label": SourceKind(self.labels[s, t]).value,
                           "source_id": int(self.source_ids[s, t])}

    @classmethod
    def empty(cls, sensors: int, seconds: int) -> "LabelMask":
        labels = np.full((sensors, seconds), SourceKind.NONE.value, dtype=object)
        return cls(labels=labels, source_ids=np.full((sensors, seconds), -1, dtype=np.int64))

    @classmethod
    def from_records(cls, records, sensors: int, seconds: int) -> "LabelMask":
        mask = cls.empty(sensors, seconds)
        for r in records:
            mask.labels[r["sensor"], r["second"]] = SourceKind(r["label"]).value
            mask.source_ids[r["sensor"], r["second"]] = r["source_id"]
        return mask

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return (self.labels.shape == other.labels.shape
                and bool(np.all(self.labels == other.labels))
                and bool(np.array_equal(self.source_ids, other.source_ids)))


def label_grid(config: SceneConfig) -> LabelMask:
    """Label each cell with the strongest source above the labeling threshold.

    Ties between equally strong sources go to the lower source index.
    """
    S, T = config.sensor_count, config.seconds
    mask = LabelMask.empty(S, T)
    best = np.zeros((S, T))
    thr = config.label_threshold
    seconds = np.arange(T)
    for i, src in enumerate(config.sources):
        if src.kind is SourceKind.NONE:
            continue
        amp = attenuate(src.amplitude, config.distances(src), config.attenuation_alpha)
        amp = np.asarray(amp).reshape(S)
        active = (src.start_s < seconds + 1) & (src.end_s > seconds)
        cell = np.where(active[None, :], amp[:, None], 0.0)
        take = (cell > 0) & (cell >= thr) & (cell > best)
        best[take] = cell[take]
        mask.labels[take] = src.kind.value
        mask.source_ids[take] = i
    return mask
