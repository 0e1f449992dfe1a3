"""Labeled training corpora drawn from synthetic scenes."""
from __future__ import annotations

import numpy as np

from .classic.data import Dataset
from .dsp import PATCH_SECONDS, PATCH_SENSORS, build_patches, trace_features
from .synthgen import SceneConfig, SourceKind, SourceSpec, attenuate, label_grid, synth_scene

OTHER_KINDS = (SourceKind.NONE, SourceKind.HIGHWAY, SourceKind.WALKING)
OTHER_WEIGHTS = (0.25, 0.40, 0.35)


def _amplitude_for_snr(snr, noise_std, distance_m, alpha):
    """Source amplitude that reaches ``snr * noise_std`` after ``distance_m``."""
    return snr * noise_std / attenuate(1.0, distance_m, alpha)


def _feature_scene(kind, rng, seed, noise_std, duration_s, alpha):
    d = rng.uniform(0.0, 20.0)
    lo = 4.0 if kind is SourceKind.EXCAVATOR else 2.0
    snr = np.exp(rng.uniform(np.log(lo), np.log(100.0)))
    sources = []
    if kind is not SourceKind.NONE:
        sources.append(SourceSpec(kind, d, 0.0, duration_s, _amplitude_for_snr(snr, noise_std, d, alpha)))
    return SceneConfig(sensor_count=1, duration_s=duration_s, sources=sources, noise_std=noise_std,
                       attenuation_alpha=alpha, seed=seed)


def make_feature_dataset(n_excavator: int, n_other: int, seed: int = 0, noise_std: float = 0.1,
                         scene_s: int = 4, alpha: float = 0.15) -> Dataset:
    """FFT-100 vectors from single-sensor scenes, ``scene_s`` windows each.

    Excavator rows come from excavator scenes above the labeling threshold;
    Other rows mix noise-only, highway and walking scenes.
    """
    rng = np.random.default_rng(seed)
    X, y = [], []
    counter = 0
    for target, quota in ((1, n_excavator), (0, n_other)):
        got = 0
        while got < quota:
            kind = SourceKind.EXCAVATOR if target else OTHER_KINDS[rng.choice(3, p=OTHER_WEIGHTS)]
            cfg = _feature_scene(kind, rng, seed * 1_000_003 + counter, noise_std, scene_s, alpha)
            counter += 1
            feats = trace_features(synth_scene(cfg))[:, 0, :]
            labels = label_grid(cfg).labels[0]
            for t in range(len(feats)):
                if got >= quota:
                    break
                is_exc = labels[t] == SourceKind.EXCAVATOR
                if is_exc != bool(target):
                    continue
                X.append(feats[t])
                y.append(target)
                got += 1
    return Dataset(np.asarray(X), np.asarray(y))


def patch_scene(kind: SourceKind, rng, seed: int, noise_std: float = 0.1, alpha: float = 0.15,
                sensors: int = PATCH_SENSORS, spacing_m: float = 4.0) -> SceneConfig:
    """One-patch scene (32 sensors x 15 s) with at most one source."""
    duration = PATCH_SECONDS
    sources = []
    if kind is not SourceKind.NONE:
        position = rng.uniform(4, sensors - 5) * spacing_m
        snr = np.exp(rng.uniform(np.log(5.0), np.log(100.0)))
        # about half the excavators are already running when the patch opens
        start = max(0.0, rng.uniform(-7.0, 7.0)) if kind is SourceKind.EXCAVATOR else 0.0
        sources.append(SourceSpec(kind, position, start, duration, snr * noise_std))
    return SceneConfig(sensor_count=sensors, duration_s=duration, sources=sources, noise_std=noise_std,
                       attenuation_alpha=alpha, sensor_spacing_m=spacing_m, seed=seed)


def make_patch_dataset(n_excavator: int, n_other: int, seed: int = 0, noise_std: float = 0.1) -> list:
    """WaterfallPatches labeled Excavator or Other, excavators first."""
    rng = np.random.default_rng(seed)
    out = []
    counter = 0
    for target, quota in ((True, n_excavator), (False, n_other)):
        got = 0
        while got < quota:
            kind = SourceKind.EXCAVATOR if target else OTHER_KINDS[rng.choice(3, p=OTHER_WEIGHTS)]
            cfg = patch_scene(kind, rng, seed * 1_000_003 + counter, noise_std)
            counter += 1
            for p in build_patches(synth_scene(cfg), label_grid(cfg)):
                if (p.label == SourceKind.EXCAVATOR.value) != target or got >= quota:
                    continue
                if not target:
                    p.label = "Other"
                out.append(p)
                got += 1
    return out
