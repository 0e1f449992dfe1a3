"""Signal kernels shared by the feature and waterfall pipelines."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .errors import DataError
from .ingest import RawTrace, Window

N_FEATURES = 100
RMS_WINDOW_S = 0.010
COLUMNS_PER_S = 4
PATCH_SENSORS = 32
PATCH_COLUMNS = 60
PATCH_SECONDS = PATCH_COLUMNS / COLUMNS_PER_S
DEFAULT_LOWPASS_ALPHA = 0.2


@dataclass
class FeatureVector:
    values: np.ndarray
    sensor_index: int = 0
    start_s: float = 0.0


@dataclass
class RmsSeries:
    values: np.ndarray
    sensor_index: int = 0
    window_ms: float = 10.0


@dataclass
class WaterfallPatch:
    pixels: np.ndarray  # (32 sensors, 60 columns) in [0, 1]
    first_sensor: int
    start_s: float
    label: Optional[str] = None
    peak_sensor: Optional[int] = None  # channel with most energy inside the patch

    @property
    def end_s(self) -> float:
        return self.start_s + PATCH_SECONDS


@dataclass
class SpectrumStats:
    mean: np.ndarray
    std: np.ndarray
    count: int


def _samples(window) -> np.ndarray:
    x = window.samples if isinstance(window, Window) else window
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite samples")
    return x


def fft_mag(window) -> np.ndarray:
    """One-sided amplitude spectrum of the mean-removed window.

    Returns ``|DFT(x)| * 2/N`` for bins ``1..N//2`` so that a sinusoid of
    amplitude ``A`` reads ``A`` at its bin. Accepts a :class:`Window` or an
    array whose last axis is time.
    """
    x = _samples(window)
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    return np.abs(np.fft.rfft(x, axis=-1)[..., 1: n // 2 + 1]) * (2.0 / n)


def spectral_energy(mags: np.ndarray, n: int) -> np.ndarray:
    """Time-domain energy ``sum(x**2)`` implied by ``fft_mag`` output.

    Inverts the one-sided scaling; the Nyquist bin of an even-length window
    is not mirrored.
    """
    w = np.full(mags.shape[-1], n / 2.0)
    if n % 2 == 0:
        w[-1] = n / 4.0
    return np.sum(mags ** 2 * w, axis=-1)


def feature_fft100(window) -> FeatureVector:
    """Magnitudes of bins 1..100 (1-100 Hz for a 1 s window)."""
    mags = fft_mag(window)
    if mags.shape[-1] < N_FEATURES:
        raise DataError(f"window too short for {N_FEATURES} features")
    values = mags[..., :N_FEATURES]
    if isinstance(window, Window):
        return FeatureVector(values=values, sensor_index=window.sensor_index, start_s=window.start_s)
    return FeatureVector(values=values)


def trace_features(trace: RawTrace, window_s: float = 1.0) -> np.ndarray:
    """FFT-100 features of every non-overlapping window.

    Returns an array of shape ``(seconds, sensors, 100)``.
    """
    fs = trace.sample_rate_hz
    win = int(round(window_s * fs))
    n = trace.sample_count // win
    blocks = trace.samples[: n * win].reshape(n, win, trace.sensor_count)
    blocks = np.moveaxis(blocks, 1, 2).astype(np.float64)
    return fft_mag(blocks)[..., :N_FEATURES]


def rms_block(sample_rate_hz: int) -> int:
    return max(1, int(round(RMS_WINDOW_S * sample_rate_hz)))


def rms_matrix(x: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """RMS over consecutive 10 ms blocks along axis 0; partial block dropped."""
    x = np.asarray(x, dtype=np.float64)
    b = rms_block(sample_rate_hz)
    n = x.shape[0] // b
    if n == 0:
        raise DataError("signal shorter than one 10 ms block")
    blocks = x[: n * b].reshape(n, b, *x.shape[1:])
    return np.sqrt(np.mean(blocks ** 2, axis=1))


def rms_series(samples, sample_rate_hz: int, sensor_index: int = 0) -> RmsSeries:
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite samples")
    return RmsSeries(values=rms_matrix(x, sample_rate_hz), sensor_index=sensor_index)


def lowpass(series, alpha: float = DEFAULT_LOWPASS_ALPHA):
    """First-order exponential smoother along axis 0.

    ``y[0] = x[0]``, ``y[k] = alpha*x[k] + (1-alpha)*y[k-1]``. Returns the
    same container type it was given.
    """
    if not 0 < alpha <= 1:
        raise DataError(f"alpha must be in (0, 1], got {alpha}")
    x = series.values if isinstance(series, RmsSeries) else np.asarray(series, dtype=np.float64)
    if x.shape[0] == 0:
        y = x.copy()
    else:
        zi = ((1 - alpha) * x[0])[None, ...] if x.ndim > 1 else np.array([(1 - alpha) * x[0]])
        y, _ = signal.lfilter([alpha], [1.0, alpha - 1.0], x, axis=0, zi=zi)
    if isinstance(series, RmsSeries):
        return RmsSeries(values=y, sensor_index=series.sensor_index, window_ms=series.window_ms)
    return y


def sobel_mag(image) -> np.ndarray:
    """Euclidean magnitude of horizontal and vertical 3x3 Sobel responses.

    Borders use edge replication so the output has the input's shape.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise DataError(f"sobel_mag needs a 2-D image of at least 3x3, got {img.shape}")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def minmax(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def waterfall(trace: RawTrace, alpha: float = DEFAULT_LOWPASS_ALPHA):
    """Smoothed RMS decimated to 4 columns/s, shape ``(sensors, columns)``.

    Returns ``(energy, gradient)`` where ``gradient`` is the Sobel magnitude
    of ``energy``.
    """
    step = 64  # sensors per chunk bounds the float64 working copy
    rms = np.concatenate([rms_matrix(trace.samples[:, s:s + step], trace.sample_rate_hz)
                          for s in range(0, trace.sensor_count, step)], axis=1)
    smooth = lowpass(rms, alpha)
    per_col = int(round(1.0 / (COLUMNS_PER_S * RMS_WINDOW_S)))
    ncol = smooth.shape[0] // per_col
    energy = smooth[: ncol * per_col].reshape(ncol, per_col, -1).mean(axis=1).T
    if energy.shape[0] < 3 or energy.shape[1] < 3:
        return energy, np.zeros_like(energy)
    return energy, sobel_mag(energy)


def patch_origins(sensor_count: int, columns: int):
    rows = range(0, sensor_count - PATCH_SENSORS + 1, PATCH_SENSORS // 2)
    cols = range(0, columns - PATCH_COLUMNS + 1, PATCH_COLUMNS // 2)
    return [(c, r) for c in cols for r in rows]


def _patch_label(labels, first_sensor: int, start_s: float) -> Optional[str]:
    if labels is None:
        return None
    from .synthgen import SourceKind

    t0 = int(np.floor(start_s))
    t1 = int(np.ceil(start_s + PATCH_SECONDS))
    cells = labels.labels[first_sensor:first_sensor + PATCH_SENSORS, t0:t1].ravel()
    kinds = [SourceKind(c).value for c in cells if c != SourceKind.NONE]
    if not kinds:
        return SourceKind.NONE.value
    values, counts = np.unique(kinds, return_counts=True)
    return str(values[np.argmax(counts)])


def build_patches(trace: RawTrace, labels=None, alpha: float = DEFAULT_LOWPASS_ALPHA) -> list:
    """Tile the waterfall into 32-sensor x 15 s patches with 50% overlap.

    Patches come out in (start time, first sensor) order. Each patch label is
    the most frequent non-None ground-truth label among its cells.
    """
    if trace.sensor_count < PATCH_SENSORS or trace.duration_s < PATCH_SECONDS:
        return []
    energy, grad = waterfall(trace, alpha)
    patches = []
    for c, r in patch_origins(*grad.shape):
        tile = grad[r:r + PATCH_SENSORS, c:c + PATCH_COLUMNS]
        start_s = c / COLUMNS_PER_S
        peak = r + int(np.argmax(energy[r:r + PATCH_SENSORS, c:c + PATCH_COLUMNS].mean(axis=1)))
        patches.append(WaterfallPatch(pixels=minmax(tile), first_sensor=r, start_s=start_s,
                                      label=_patch_label(labels, r, start_s), peak_sensor=peak))
    return patches


def spectrum_stats(features, targets) -> dict:
    """Per-class per-bin mean and sample (n-1) standard deviation."""
    X = np.asarray([f.values if isinstance(f, FeatureVector) else f for f in features], dtype=np.float64)
    y = np.asarray(targets)
    out = {}
    for cls in sorted(set(y.tolist()), key=str):
        rows = X[y == cls]
        if len(rows) < 2:
            raise DataError(f"class {cls!r} has fewer than 2 samples")
        out[cls] = SpectrumStats(mean=rows.mean(axis=0), std=rows.std(axis=0, ddof=1), count=len(rows))
    return out


def write_pgm(patch, destination) -> int:
    """Export a patch as binary 8-bit PGM (P5); returns bytes written."""
    pixels = patch.pixels if isinstance(patch, WaterfallPatch) else np.asarray(patch)
    h, w = pixels.shape
    data = np.round(255 * np.clip(pixels, 0, 1)).astype(np.uint8)
    blob = f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()
    if hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)
    return len(blob)
