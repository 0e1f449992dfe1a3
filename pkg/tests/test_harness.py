import json
import time

import numpy as np
import pytest

from dasdetect.classic import ClassicModel, Standardizer
from dasdetect.errors import DataError
from dasdetect.harness import (FIELD_REFERENCE, BenchConfig, RunConfig, TrueEvent, benchmark, detection_delay,
                               format_table, mean_delay, run_classic, run_image, validate_report, write_report)
from dasdetect.synthgen import SceneConfig, SourceSpec, synth_scene
from dasdetect.tracker import AlarmPolicy, Detection, EventRecord, Tracker, read_events


def excavator_scene(onset, duration, sensors=48, position=96.0, amplitude=10.0, seed=5):
    return SceneConfig(sensor_count=sensors, duration_s=duration, seed=seed,
                       sources=[SourceSpec("Excavator", position, onset, duration, amplitude)])


# -- delay metric -----------------------------------------------------------

def test_delay_at_onset_is_zero():
    ev = [EventRecord(30.0, 100.0, 0.9, "classic", 90)]
    assert detection_delay(ev, [TrueEvent(30.0, 100.0)]) == [0.0]


def test_delay_K90_uninterrupted():
    tracker = Tracker(AlarmPolicy.classic())
    for t in range(1, 200):
        tracker.step(float(t), [Detection(float(t), 50.0, 0.9)] if t > 10 else [])
    # onset at second 10: the window ending at 11 s is the first detection
    assert detection_delay(tracker.events, [TrueEvent(10.0, 50.0)]) == [90.0]


def test_delay_miss_excluded():
    ev = [EventRecord(50.0, 10.0, 0.9, "image", 1)]
    d = detection_delay(ev, [TrueEvent(20.0, 10.0), TrueEvent(20.0, 80.0), TrueEvent(60.0, 10.0)])
    assert d == [30.0, None, None]
    assert mean_delay(d) == 30.0
    assert mean_delay([None]) is None


# -- pipelines -----------------------------------------------------------------

def test_silent_scene_no_events(bench_models):
    model, net = bench_models
    tr = synth_scene(SceneConfig(sensor_count=48, duration_s=120, noise_std=0.01, seed=3))
    assert run_classic(tr, model).events == []
    assert run_image(tr, net).events == []


def test_classic_confirms_at_onset_plus_K(bench_models):
    model, _ = bench_models
    cfg = excavator_scene(30.0, 130.0)
    res = run_classic(synth_scene(cfg), model, AlarmPolicy.classic(K=90))
    assert len(res.events) == 1
    ev = res.events[0]
    assert abs(ev.t_confirmed - 120.0) <= 1.0
    assert abs(ev.position_m - 96.0) <= 5.0
    assert ev.track_length == 90 and ev.pipeline == "classic"


def test_image_confirms_with_first_covering_patch(bench_models):
    _, net = bench_models
    cfg = excavator_scene(0.0, 45.0)
    res = run_image(synth_scene(cfg), net)
    assert res.events
    first = res.events[0]
    assert first.t_confirmed <= 15.0 + 7.5
    assert abs(first.position_m - 96.0) <= 5.0


def test_pipelines_deterministic(bench_models):
    model, net = bench_models
    tr = synth_scene(excavator_scene(10.0, 60.0))
    assert run_classic(tr, model, AlarmPolicy(K=20)).events == run_classic(tr, model, AlarmPolicy(K=20)).events
    assert run_image(tr, net).events == run_image(tr, net).events


def test_threads_do_not_change_results(bench_models):
    model, net = bench_models
    tr = synth_scene(excavator_scene(10.0, 60.0))
    pol = AlarmPolicy(K=20)
    assert run_classic(tr, model, pol, threads=3).events == run_classic(tr, model, pol).events
    assert run_image(tr, net, threads=2).events == run_image(tr, net).events


def test_event_log_time_ordered(bench_models):
    model, _ = bench_models
    cfg = SceneConfig(sensor_count=64, duration_s=60, seed=9,
                      sources=[SourceSpec("Excavator", 40.0, 5.0, 60.0, 10.0),
                               SourceSpec("Excavator", 200.0, 0.0, 60.0, 10.0)])
    ev = run_classic(synth_scene(cfg), model, AlarmPolicy(K=30)).events
    assert len(ev) == 2
    assert [e.t_confirmed for e in ev] == sorted(e.t_confirmed for e in ev)


def test_model_dimension_mismatch(bench_models):
    model, _ = bench_models
    bad = ClassicModel(model.kind, Standardizer(np.zeros(50), np.ones(50)), model.estimator)
    with pytest.raises(DataError):
        run_classic(synth_scene(SceneConfig(sensor_count=2, duration_s=2)), bad)


def test_run_config_validation(tmp_path):
    p = tmp_path / "t.das"
    p.write_bytes(b"")
    with pytest.raises(DataError):
        RunConfig(str(p), pipeline="fast")
    with pytest.raises(DataError):
        RunConfig(str(p), pipeline="classic", classic_model_path=str(tmp_path / "missing.json"))
    with pytest.raises(DataError):
        RunConfig(str(p), pipeline="image")


def _best_time(fn, reps=5):
    """Minimum wall time over ``reps`` runs; least sensitive to scheduler noise."""
    out = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)


def test_execution_time_scales_linearly(bench_models):
    model, net = bench_models
    # 7 vs 15 patch columns; at 30 s (3 columns) the tiling edge distorts the ratio
    short = synth_scene(SceneConfig(sensor_count=128, duration_s=60, seed=1))
    long = synth_scene(SceneConfig(sensor_count=128, duration_s=120, seed=1))
    for run in (lambda tr: run_classic(tr, model), lambda tr: run_image(tr, net)):
        a = _best_time(lambda: run(short)) / 60.0
        b = _best_time(lambda: run(long)) / 120.0
        assert 0.8 <= b / a <= 1.25, (a, b)


# -- benchmark ------------------------------------------------------------------

@pytest.fixture(scope="module")
def report(bench_models):
    model, net = bench_models
    return benchmark(BenchConfig(), model, net)


def test_report_shape(report):
    rep, log = report
    validate_report(rep)
    assert rep["field_reference"] == FIELD_REFERENCE
    assert FIELD_REFERENCE["classic"] == {"delay_s": 90.0, "exec_time_s": 60.0, "max_distance_m": 30.0}
    assert FIELD_REFERENCE["image"] == {"delay_s": 15.0, "exec_time_s": 5.0, "max_distance_m": 10.0}
    c, i = rep["pipelines"]["classic"], rep["pipelines"]["image"]
    assert i["delay_s"] < c["delay_s"]
    assert c["delay_s"] >= 1.0 and i["delay_s"] >= 1.0
    assert c["exec_time_extrapolated_s"] == pytest.approx(c["exec_time_per_60s_s"] * 4250 / 256)
    assert all(e.t_confirmed > 0 for e in log)


def test_report_schema_rejects_negative(report):
    rep = json.loads(json.dumps(report[0]))
    rep["pipelines"]["image"]["delay_s"] = -1.0
    with pytest.raises(DataError):
        validate_report(rep)


def test_report_files(report, tmp_path):
    rep, log = report
    paths = write_report(rep, log, str(tmp_path / "bench"))
    assert json.loads(open(paths["json"]).read())["schema"] == rep["schema"]
    assert read_events(paths["events"]) == log
    table = open(paths["table"]).read()
    assert table == format_table(rep)
    lines = table.splitlines()
    assert len({len(line) for line in lines}) == 1  # aligned
    assert "max detection distance" in table


def test_bench_config_from_dict():
    cfg = BenchConfig.from_dict({"seed": 4, "offsets_m": [0, 5]})
    assert cfg.seed == 4 and cfg.offsets_m == (0, 5)
    with pytest.raises(DataError):
        BenchConfig.from_dict({"sensors": 3})
    with pytest.raises(DataError):
        benchmark(BenchConfig(offsets_m=()), model=object(), net=object())
