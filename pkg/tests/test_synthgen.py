import json
import math

import numpy as np
import pytest

from dasdetect.errors import DataError
from dasdetect.synthgen import (LabelMask, SceneConfig, SourceKind, SourceSpec, attenuate, label_grid,
                                source_waveform, synth_scene)


def test_attenuate_values():
    assert attenuate(3.0, 0.0, 0.7) == 3.0
    assert attenuate(2.0, 16.0, 0.0) == pytest.approx(0.5)
    # direct evaluation of A exp(-a d) / sqrt(d)
    assert attenuate(1.0, 10.0, 0.1) == pytest.approx(math.exp(-1) / math.sqrt(10), rel=1e-12)
    assert attenuate(1.0, 10.0, 0.1) == pytest.approx(0.11633, abs=5e-6)


def test_attenuate_monotone(rng):
    d = np.sort(rng.uniform(1, 200, 50))
    assert np.all(np.diff(attenuate(1.0, d, 0.15)) < 0)


def test_silence():
    tr = synth_scene(SceneConfig(sensor_count=3, duration_s=2, noise_std=0.0))
    assert tr.samples.dtype == np.float32
    assert not tr.samples.any()


def test_determinism():
    cfg = SceneConfig(sensor_count=5, duration_s=3, seed=11,
                      sources=[SourceSpec("Highway", 8.0, 0, 3, 1.0), SourceSpec("Walking", 4.0, 1, 2, 1.0)])
    assert synth_scene(cfg) == synth_scene(cfg)
    other = SceneConfig(**{**cfg.to_dict(), "seed": 12})
    assert synth_scene(other) != synth_scene(cfg)


def test_peak_rms_channel_under_source():
    cfg = SceneConfig(sensor_count=200, duration_s=2, noise_std=0.05,
                      sources=[SourceSpec("Excavator", 400.0, 0, 2, 5.0)])
    tr = synth_scene(cfg)
    rms = np.sqrt(np.mean(tr.samples.astype(np.float64) ** 2, axis=0))
    assert int(np.argmax(rms)) == 100


def test_channel_scaling_matches_attenuation():
    src = SourceSpec("Highway", 0.0, 0, 1, 2.0)
    cfg = SceneConfig(sensor_count=4, duration_s=1, noise_std=0.0, sources=[src])
    tr = synth_scene(cfg)
    w = source_waveform(cfg, 0)
    assert np.max(np.abs(w)) == pytest.approx(1.0)
    for s in range(4):
        g = attenuate(2.0, 4.0 * s, cfg.attenuation_alpha)
        np.testing.assert_allclose(tr.samples[:, s], (g * w).astype(np.float32), rtol=1e-6, atol=1e-7)


def test_noise_std_and_independence():
    tr = synth_scene(SceneConfig(sensor_count=2, duration_s=5, noise_std=0.3, seed=4))
    x = tr.samples.astype(np.float64)
    assert x.std(axis=0) == pytest.approx([0.3, 0.3], rel=0.02)
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.03


def test_source_active_interval():
    cfg = SceneConfig(sensor_count=1, duration_s=4, noise_std=0.0,
                      sources=[SourceSpec("Walking", 0.0, 1.0, 3.0, 1.0)])
    x = synth_scene(cfg).samples[:, 0]
    assert not x[:2000].any() and not x[6000:].any() and x[2000:6000].any()


def test_aliasing_guard():
    with pytest.raises(DataError):
        SceneConfig(sensor_count=1, duration_s=1, sample_rate_hz=150,
                    sources=[SourceSpec("Excavator", 0, 0, 1, 1)])
    SceneConfig(sensor_count=1, duration_s=1, sample_rate_hz=150, sources=[SourceSpec("Highway", 0, 0, 1, 1)])


@pytest.mark.parametrize("kw", [dict(start_s=2, end_s=1), dict(amplitude=-1.0), dict(position_m=-3.0)])
def test_bad_source(kw):
    base = dict(kind="Excavator", position_m=0.0, start_s=0.0, end_s=1.0, amplitude=1.0)
    with pytest.raises(DataError):
        SourceSpec(**{**base, **kw})


def test_config_json_roundtrip(tmp_path):
    cfg = SceneConfig(sensor_count=8, duration_s=3, sources=[SourceSpec("Excavator", 4.0, 0, 2, 1.0, 3.0)])
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert SceneConfig.from_json(p) == cfg


def test_labels_empty_scene():
    m = label_grid(SceneConfig(sensor_count=4, duration_s=3))
    assert m.shape == (4, 3)
    assert all(m.label(s, t) is SourceKind.NONE for s in range(4) for t in range(3))


def test_labels_interval_at_sensor():
    cfg = SceneConfig(sensor_count=201, duration_s=100,
                      sources=[SourceSpec("Excavator", 400.0, 30.0, 90.0, 50.0)])
    m = label_grid(cfg)
    row = [m.label(100, t) for t in range(100)]
    assert row[30:90] == [SourceKind.EXCAVATOR] * 60
    assert set(row[:30] + row[90:]) == {SourceKind.NONE}


def test_labels_nearer_source_wins():
    near = SourceSpec("Walking", 40.0, 0, 5, 10.0)
    far = SourceSpec("Excavator", 80.0, 0, 5, 10.0)
    cfg = SceneConfig(sensor_count=30, duration_s=5, sources=[far, near])
    m = label_grid(cfg)
    s = 12  # 48 m: 8 m from the walker, 32 m from the excavator
    a_near = attenuate(10.0, cfg.distances(near)[s], cfg.attenuation_alpha)
    a_far = attenuate(10.0, cfg.distances(far)[s], cfg.attenuation_alpha)
    assert a_near > a_far and a_near >= cfg.label_threshold
    assert m.label(s, 2) is SourceKind.WALKING and m.source_ids[s, 2] == 1


def test_labels_threshold():
    cfg = SceneConfig(sensor_count=60, duration_s=2, sources=[SourceSpec("Excavator", 0.0, 0, 2, 1.0)])
    m = label_grid(cfg)
    amp = attenuate(1.0, cfg.distances(cfg.sources[0]), cfg.attenuation_alpha)
    assert np.array_equal(m.is_excavator()[:, 0], amp >= cfg.label_threshold)


def test_mask_equality_and_records():
    a = LabelMask.empty(2, 2)
    b = LabelMask.empty(2, 2)
    assert a == b and list(a.records()) == []
