"""End-to-end pipelines, delay metrics and the two-pipeline benchmark."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .classic import ClassicModel, fit
from .cnn import ConvNet, TrainConfig, train_cnn
from .datasets import make_feature_dataset, make_patch_dataset
from .dsp import (COLUMNS_PER_S, DEFAULT_LOWPASS_ALPHA, N_FEATURES, PATCH_COLUMNS, PATCH_SECONDS, build_patches,
                  patch_origins, trace_features)
from .errors import DataError
from .ingest import RawTrace
from .synthgen import SceneConfig, SourceKind, SourceSpec, synth_scene
from .tracker import AlarmPolicy, Detection, EventRecord, Tracker, far_estimate, write_events

logger = logging.getLogger(__name__)

PIPELINES = ("classic", "image", "both")
SECONDS_PER_MONTH = 30 * 86400
REPORT_SCHEMA_TAG = "dasdetect.bench-report/1"
# Published field-trial figures: delay [s], time for 17 km / 60 s [s], max distance [m]
FIELD_REFERENCE = {
    "classic": {"delay_s": 90.0, "exec_time_s": 60.0, "max_distance_m": 30.0},
    "image": {"delay_s": 15.0, "exec_time_s": 5.0, "max_distance_m": 10.0},
}


@dataclass
class PipelineRun:
    """Events of one pipeline pass plus its cost."""

    pipeline: str
    events: list
    detections: int
    elapsed_s: float
    samples: int
    duration_s: float

    @property
    def throughput(self) -> float:
        """Samples processed per wall-clock second."""
        return self.samples / self.elapsed_s if self.elapsed_s > 0 else float("inf")


@dataclass
class RunConfig:
    trace_path: str
    pipeline: str = "classic"
    classic_model_path: Optional[str] = None
    cnn_model_path: Optional[str] = None
    policy: Optional[AlarmPolicy] = None
    out_path: Optional[str] = None
    threads: int = 1
    spacing_m: float = 4.0

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise DataError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        needed = [self.trace_path]
        if self.pipeline in ("classic", "both"):
            if not self.classic_model_path:
                raise DataError("classic pipeline needs a classic model path")
            needed.append(self.classic_model_path)
        if self.pipeline in ("image", "both"):
            if not self.cnn_model_path:
                raise DataError("image pipeline needs a CNN checkpoint path")
            needed.append(self.cnn_model_path)
        for p in needed:
            if not os.path.exists(p):
                raise DataError(f"no such file: {p}")


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _merge_runs(hits: np.ndarray, prob: np.ndarray, energy: np.ndarray):
    """Contiguous hit sensors -> (peak sensor, max probability) per run."""
    out = []
    idx = np.flatnonzero(hits)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    for run in np.split(idx, breaks):
        peak = int(run[np.argmax(energy[run])])
        out.append((peak, float(prob[run].max())))
    return out


def classic_detections(trace: RawTrace, model: ClassicModel, threshold: float = 0.5,
                       spacing_m: float = 4.0, threads: int = 1, chunk_s: int = 10):
    """Per-second detection lists from the FFT-feature classifier.

    Neighbouring sensors that fire in the same second are one physical
    source; each contiguous run becomes a single detection at its
    highest-energy sensor, stamped at the end of the window.
    """
    n_feat = model.standardizer.mean.shape[0]
    if n_feat != N_FEATURES:
        raise DataError(f"model expects {n_feat} features, pipeline produces {N_FEATURES}")
    fs = trace.sample_rate_hz
    seconds = trace.sample_count // fs
    S = trace.sensor_count
    block = max(1, -(-S // max(threads, 1)))

    def one_block(args):
        t0, t1, s0 = args
        part = RawTrace(samples=trace.samples[t0 * fs:t1 * fs, s0:s0 + block], sample_rate_hz=fs)
        F = trace_features(part)
        p = model.predict_proba(F.reshape(-1, N_FEATURES)).reshape(F.shape[:2])
        return p, np.sum(F * F, axis=-1)

    out = []
    for t0 in range(0, seconds, chunk_s):
        t1 = min(seconds, t0 + chunk_s)
        parts = _map(one_block, [(t0, t1, s0) for s0 in range(0, S, block)], threads)
        prob = np.concatenate([p for p, _ in parts], axis=1)
        energy = np.concatenate([e for _, e in parts], axis=1)
        for k in range(t1 - t0):
            t = float(t0 + k + 1)
            hits = prob[k] >= threshold
            out.append((t, [Detection(t, s * spacing_m, p, "classic")
                            for s, p in _merge_runs(hits, prob[k], energy[k])]))
    return out


def image_detections(trace: RawTrace, net: ConvNet, threshold: float = 0.5, spacing_m: float = 4.0,
                     radius_m: float = 5.0, alpha: float = DEFAULT_LOWPASS_ALPHA, threads: int = 1):
    """Per-patch-end detection lists from the CNN.

    Overlapping patches that fire on peaks within ``radius_m`` of each
    other at the same time collapse to the most confident one.
    """
    patches = build_patches(trace, alpha=alpha)
    if not patches:
        return []
    X = np.stack([p.pixels for p in patches])
    if X.shape[1:] != net.input_shape:
        raise DataError(f"CNN expects {net.input_shape} patches, got {X.shape[1:]}")
    batches = [X[i:i + 64] for i in range(0, len(X), 64)]
    probs = np.concatenate(_map(net.predict_proba, batches, threads))
    by_time: dict = {}
    for p, pr in zip(patches, probs):
        by_time.setdefault(p.end_s, []).append((p.peak_sensor * spacing_m, float(pr)))
    out = []
    for t in sorted(by_time):
        hits = sorted((pos, pr) for pos, pr in by_time[t] if pr >= threshold)
        dets = []
        for pos, pr in hits:
            if dets and pos - dets[-1][2] <= radius_m:
                if pr > dets[-1][1]:
                    dets[-1] = (pos, pr, pos)
                continue
            dets.append((pos, pr, pos))
        out.append((float(t), [Detection(float(t), pos, pr, "image") for pos, pr, _ in dets]))
    return out


def _track(steps, policy: AlarmPolicy, pipeline: str):
    tracker = Tracker(policy, pipeline=pipeline, keep_closed=False)
    n = 0
    for t, dets in steps:
        n += len(dets)
        tracker.step(t, dets)
    return tracker.events, n


def run_classic(trace: RawTrace, model: ClassicModel, policy: Optional[AlarmPolicy] = None,
                spacing_m: float = 4.0, threads: int = 1) -> PipelineRun:
    """feature_fft100 -> standardize -> classify -> merge -> track -> events."""
    policy = policy or AlarmPolicy.classic()
    t = time.perf_counter()
    steps = classic_detections(trace, model, policy.min_probability, spacing_m, threads)
    events, n = _track(steps, policy, "classic")
    elapsed = time.perf_counter() - t
    return PipelineRun("classic", events, n, elapsed, trace.samples.size, trace.duration_s)


def run_image(trace: RawTrace, net: ConvNet, policy: Optional[AlarmPolicy] = None, spacing_m: float = 4.0,
              alpha: float = DEFAULT_LOWPASS_ALPHA, threads: int = 1) -> PipelineRun:
    """waterfall -> patches -> CNN -> patch detections -> track -> events."""
    policy = policy or AlarmPolicy.image()
    t = time.perf_counter()
    steps = image_detections(trace, net, policy.min_probability, spacing_m, policy.radius_m, alpha, threads)
    events, n = _track(steps, policy, "image")
    elapsed = time.perf_counter() - t
    return PipelineRun("image", events, n, elapsed, trace.samples.size, trace.duration_s)


@dataclass(frozen=True)
class TrueEvent:
    onset_s: float
    position_m: float


def true_events(config: SceneConfig) -> list:
    """Excavator sources of a scene as ground-truth events."""
    return [TrueEvent(s.start_s, s.position_m) for s in config.sources if s.kind is SourceKind.EXCAVATOR]


def detection_delay(events: Sequence[EventRecord], truth, radius_m: float = 5.0) -> list:
    """Delay of the first matching confirmed event per true event.

    ``truth`` is a SceneConfig or a sequence of TrueEvent. An event
    matches when it is confirmed at or after the onset and lies within
    ``radius_m`` of the source; ``None`` marks a miss.
    """
    if isinstance(truth, SceneConfig):
        truth = true_events(truth)
    out = []
    for ev in truth:
        hits = [e.t_confirmed - ev.onset_s for e in events
                if e.t_confirmed >= ev.onset_s and abs(e.position_m - ev.position_m) <= radius_m]
        out.append(min(hits) if hits else None)
    return out


def mean_delay(delays) -> Optional[float]:
    got = [d for d in delays if d is not None]
    return float(np.mean(got)) if got else None


# -- benchmark --------------------------------------------------------------

@dataclass
class BenchConfig:
    seed: int = 0
    threads: int = 1
    classic_kind: str = "svm"
    feature_train: tuple = (300, 600)  # excavator, other
    patch_train: tuple = (100, 100)
    cnn_epochs: int = 50
    noise_std: float = 0.1
    scene_sensors: int = 48
    scene_duration_s: float = 150.0  # leaves headroom for a few dropped seconds before K=90
    onset_s: float = 20.0
    source_amplitude: float = 10.0
    offsets_m: tuple = (0.0, 5.0, 10.0, 20.0, 30.0)
    repeats: int = 2
    fa_sensors: int = 48
    fa_duration_s: float = 240.0
    timing_sensors: int = 256
    timing_duration_s: float = 60.0
    fiber_length_m: float = 17_000.0
    spacing_m: float = 4.0
    classic_K: int = 90
    image_K: int = 1
    threshold: float = 0.5
    target_reliability: float = 0.99

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise DataError(f"unknown bench config keys: {sorted(unknown)}")
        for k in ("feature_train", "patch_train", "offsets_m"):
            if k in known:
                known[k] = tuple(known[k])
        return cls(**known)

    def policies(self):
        return (AlarmPolicy.classic(K=self.classic_K, min_probability=self.threshold),
                AlarmPolicy.image(K=self.image_K, min_probability=self.threshold))


def suite_scenes(cfg: BenchConfig) -> list:
    """Detection scenes: one excavator per scene at each perpendicular offset."""
    scenes = []
    position = (cfg.scene_sensors // 2) * cfg.spacing_m
    for i, off in enumerate(cfg.offsets_m):
        for r in range(cfg.repeats):
            src = SourceSpec(SourceKind.EXCAVATOR, position, cfg.onset_s, cfg.scene_duration_s,
                             cfg.source_amplitude, offset_m=off)
            scenes.append(SceneConfig(sensor_count=cfg.scene_sensors, duration_s=cfg.scene_duration_s,
                                      sensor_spacing_m=cfg.spacing_m, sources=[src], noise_std=cfg.noise_std,
                                      seed=cfg.seed * 7919 + 1000 + i * 100 + r))
    return scenes


def train_models(cfg: BenchConfig):
    """Classic model and CNN from synthetic corpora at the bench seed."""
    ds = make_feature_dataset(*cfg.feature_train, seed=cfg.seed, noise_std=cfg.noise_std)
    train, hold, _ = ds.split(seed=cfg.seed)
    model = fit(cfg.classic_kind, train, holdout=hold, seed=cfg.seed)
    patches = make_patch_dataset(*cfg.patch_train, seed=cfg.seed, noise_std=cfg.noise_std)
    net = train_cnn(patches, TrainConfig(epochs=cfg.cnn_epochs, seed=cfg.seed))
    return model, net


def _pipelines(model, net, cfg):
    pc, pi = cfg.policies()
    return {
        "classic": lambda tr: run_classic(tr, model, pc, cfg.spacing_m, cfg.threads),
        "image": lambda tr: run_image(tr, net, pi, cfg.spacing_m, threads=cfg.threads),
    }


def benchmark(cfg: Optional[BenchConfig] = None, model: Optional[ClassicModel] = None,
              net: Optional[ConvNet] = None):
    """Run both pipelines over the scene suite.

    Returns ``(report, events)`` where ``events`` is the concatenated event
    log in suite order (detection scenes, then the noise-only scene).
    """
    cfg = cfg or BenchConfig()
    if not cfg.offsets_m or cfg.repeats < 1:
        raise DataError("bench suite needs at least one offset and one repeat")
    if model is None or net is None:
        m, n = train_models(cfg)
        model, net = model or m, net or n
    runners = _pipelines(model, net, cfg)
    policy = dict(zip(("classic", "image"), cfg.policies()))
    scenes = suite_scenes(cfg)
    log = []
    per = {name: {"delays": [], "by_offset": {}} for name in runners}
    for sc in scenes:
        trace = synth_scene(sc)
        off = sc.sources[0].offset_m
        for name, run in runners.items():
            res = run(trace)
            log.extend(res.events)
            d = detection_delay(res.events, sc, policy[name].radius_m)[0]
            per[name]["delays"].append(d)
            per[name]["by_offset"].setdefault(off, []).append(d is not None)

    fa_cfg = SceneConfig(sensor_count=cfg.fa_sensors, duration_s=cfg.fa_duration_s, sensor_spacing_m=cfg.spacing_m,
                         noise_std=cfg.noise_std, seed=cfg.seed * 7919 + 999)
    fa_trace = synth_scene(fa_cfg)
    timing_trace = synth_scene(SceneConfig(sensor_count=cfg.timing_sensors, duration_s=cfg.timing_duration_s,
                                           sensor_spacing_m=cfg.spacing_m, noise_std=cfg.noise_std,
                                           seed=cfg.seed * 7919 + 998))
    fiber_sensors = cfg.fiber_length_m / cfg.spacing_m
    pipelines = {}
    for name, run in runners.items():
        fa = run(fa_trace)
        log.extend(fa.events)
        # analytic cross-check: independent cells of one tracker step each
        if name == "classic":
            units, step_s, steps = cfg.fa_sensors, 1.0, fa_cfg.seconds
        else:
            units = len(patch_origins(cfg.fa_sensors, PATCH_COLUMNS))
            step_s, steps = PATCH_SECONDS / 2, len(patch_end_times(fa_cfg))
        p_fp = min(fa.detections / (units * steps), 0.999) if units * steps else 0.0
        timing = run(timing_trace)
        per_60 = timing.elapsed_s * 60.0 / timing.duration_s
        rates = per[name]["by_offset"]
        max_d = 0.0
        reliable = True
        for off in sorted(rates):
            reliable = reliable and np.mean(rates[off]) >= cfg.target_reliability
            if reliable:
                max_d = float(off)
        md = mean_delay(per[name]["delays"])
        pipelines[name] = {
            "delay_s": md,
            "delay_min_s": min((d for d in per[name]["delays"] if d is not None), default=None),
            "misses": sum(d is None for d in per[name]["delays"]),
            "false_alarms_per_month": len(fa.events) * SECONDS_PER_MONTH / cfg.fa_duration_s,
            "false_alarms_observed": len(fa.events),
            "detection_probability_noise": p_fp,
            "false_alarms_per_month_analytic": far_estimate(p_fp, policy[name].K, units,
                                                            SECONDS_PER_MONTH / step_s),
            "exec_time_measured_s": timing.elapsed_s,
            "exec_time_per_60s_s": per_60,
            "exec_time_per_data_second_s": timing.elapsed_s / timing.duration_s,
            "exec_time_extrapolated_s": per_60 * fiber_sensors / cfg.timing_sensors,
            "max_distance_m": max_d,
            "detection_rate_by_offset": {f"{k:g}": float(np.mean(v)) for k, v in sorted(rates.items())},
            "throughput_samples_per_s": timing.throughput,
            "K": policy[name].K,
        }
    report = {
        "schema": REPORT_SCHEMA_TAG,
        "seed": cfg.seed,
        "config": _jsonable(asdict(cfg)),
        "timing_scale": {"sensors_measured": cfg.timing_sensors, "duration_s": cfg.timing_duration_s,
                         "fiber_length_m": cfg.fiber_length_m, "sensors_extrapolated": fiber_sensors,
                         "note": "exec_time_extrapolated_s scales measured cost linearly in sensor count"},
        "pipelines": pipelines,
        "field_reference": FIELD_REFERENCE,
        "exec_time_ratio_classic_over_image": (pipelines["classic"]["exec_time_per_60s_s"]
                                               / max(pipelines["image"]["exec_time_per_60s_s"], 1e-12)),
    }
    validate_report(report)
    return report, log


def patch_end_times(config: SceneConfig) -> list:
    """Patch end times of a scene (one tracker step per entry)."""
    cols = int(config.duration_s * COLUMNS_PER_S)
    return [c / COLUMNS_PER_S + PATCH_SECONDS for c in range(0, cols - PATCH_COLUMNS + 1, PATCH_COLUMNS // 2)]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


_NUM = {"type": "number", "minimum": 0}
_NUM_OR_NULL = {"type": ["number", "null"], "minimum": 0}
_PIPE = {
    "type": "object",
    "required": ["delay_s", "false_alarms_per_month", "exec_time_per_60s_s", "exec_time_extrapolated_s",
                 "max_distance_m", "throughput_samples_per_s"],
    "properties": {
        "delay_s": _NUM_OR_NULL,
        "delay_min_s": _NUM_OR_NULL,
        "misses": {"type": "integer", "minimum": 0},
        "false_alarms_per_month": _NUM,
        "false_alarms_observed": {"type": "integer", "minimum": 0},
        "detection_probability_noise": _NUM,
        "false_alarms_per_month_analytic": _NUM,
        "exec_time_measured_s": _NUM,
        "exec_time_per_60s_s": _NUM,
        "exec_time_per_data_second_s": _NUM,
        "exec_time_extrapolated_s": _NUM,
        "max_distance_m": _NUM,
        "detection_rate_by_offset": {"type": "object", "additionalProperties": {"type": "number",
                                                                               "minimum": 0, "maximum": 1}},
        "throughput_samples_per_s": _NUM,
        "K": {"type": "integer", "minimum": 1},
    },
}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "seed", "pipelines", "field_reference", "timing_scale"],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_TAG},
        "seed": {"type": "integer", "minimum": 0},
        "pipelines": {"type": "object", "required": ["classic", "image"],
                      "properties": {"classic": _PIPE, "image": _PIPE}},
        "field_reference": {"type": "object"},
        "timing_scale": {"type": "object"},
    },
}


def validate_report(report: dict) -> None:
    try:
        jsonschema.validate(report, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DataError(f"bench report violates schema: {exc.message}") from exc


def _fmt(v, nd=2):
    if v is None:
        return "miss"
    if isinstance(v, float):
        return f"{v:.{nd}f}" if abs(v) < 1e6 else f"{v:.3g}"
    return str(v)


def format_table(report: dict) -> str:
    """Aligned text table: measured values next to published field-trial values."""
    rows = [("metric", "classic", "image", "field classic", "field image")]
    ref = report["field_reference"]
    p = report["pipelines"]
    spec = [
        ("delay [s]", "delay_s", "delay_s"),
        ("false alarms / month", "false_alarms_per_month", None),
        ("exec time 60 s, measured sensors [s]", "exec_time_per_60s_s", None),
        ("exec time 60 s, full fiber (extrapolated) [s]", "exec_time_extrapolated_s", "exec_time_s"),
        ("max detection distance [m]", "max_distance_m", "max_distance_m"),
        ("throughput [samples/s]", "throughput_samples_per_s", None),
    ]
    for label, key, rkey in spec:
        rows.append((label, _fmt(p["classic"][key]), _fmt(p["image"][key]),
                     _fmt(ref["classic"][rkey]) if rkey else "-", _fmt(ref["image"][rkey]) if rkey else "-"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report(report: dict, events, out_prefix: str) -> dict:
    """Write ``<prefix>.json``, ``<prefix>.txt`` and ``<prefix>.events.jsonl``."""
    paths = {"json": out_prefix + ".json", "table": out_prefix + ".txt", "events": out_prefix + ".events.jsonl"}
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(paths["table"], "w", encoding="utf-8") as fh:
        fh.write(format_table(report))
    write_events(events, paths["events"])
    return paths
