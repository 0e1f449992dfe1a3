"""Command-line front end: ``dasdetect <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import DataError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def _load_json(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise DataError(f"{path}: expected a JSON object")
    return d


def _labels_path(trace_path: str) -> str:
    return trace_path + ".labels.jsonl"


def cmd_synth(args) -> int:
    from .ingest import write_labels, write_trace
    from .synthgen import SceneConfig, label_grid, synth_scene

    if not args.config:
        raise UsageError("synth needs --config <scene.json>")
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        cfg = SceneConfig.from_dict(d)
    except TypeError as exc:
        raise DataError(f"bad scene config: {exc}") from exc
    out = args.out or "scene.das"
    write_trace(synth_scene(cfg), out)
    n = write_labels(label_grid(cfg), _labels_path(out))
    print(f"wrote {out} ({cfg.sensor_count} sensors, {cfg.duration_s:g} s) and {n} label records")
    return EXIT_OK


def _trace_labels(trace, path):
    from .ingest import read_label_records
    from .synthgen import LabelMask

    T = int(np.ceil(trace.duration_s))
    return LabelMask.from_records(read_label_records(path), trace.sensor_count, T)


def cmd_features(args) -> int:
    import os

    from .datasets import make_feature_dataset, make_patch_dataset
    from .dsp import build_patches, trace_features
    from .ingest import read_trace

    out = args.out or f"{args.pipeline}_features.npz"
    cfg = _load_json(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.trace:
        trace = read_trace(args.trace)
        lp = args.labels or _labels_path(args.trace)
        labels = _trace_labels(trace, lp) if os.path.exists(lp) else None
        if args.pipeline == "classic":
            F = trace_features(trace)
            sec, S = F.shape[:2]
            y = (labels.is_excavator()[:, :sec].T.astype(np.int64).ravel() if labels is not None
                 else np.full(sec * S, -1))
            np.savez(out, X=F.reshape(-1, F.shape[-1]), y=y,
                     second=np.repeat(np.arange(sec), S), sensor=np.tile(np.arange(S), sec))
            n = sec * S
        else:
            patches = build_patches(trace, labels)
            _save_patches(out, patches)
            n = len(patches)
    else:
        n_exc, n_other = int(cfg.get("n_excavator", 200)), int(cfg.get("n_other", 200))
        noise = float(cfg.get("noise_std", 0.1))
        if args.pipeline == "classic":
            ds = make_feature_dataset(n_exc, n_other, seed=seed, noise_std=noise)
            np.savez(out, X=ds.X, y=ds.y)
            n = len(ds)
        else:
            patches = make_patch_dataset(n_exc, n_other, seed=seed, noise_std=noise)
            _save_patches(out, patches)
            n = len(patches)
    print(f"wrote {n} {args.pipeline} examples to {out}")
    return EXIT_OK


def _save_patches(out, patches):
    if not patches:
        raise DataError("trace too small for a single 32-sensor x 15 s patch")
    labels = [p.label if p.label is not None else "" for p in patches]
    np.savez(out, pixels=np.stack([p.pixels for p in patches]), labels=np.array(labels),
             first_sensor=np.array([p.first_sensor for p in patches]),
             start_s=np.array([p.start_s for p in patches]))


def _load_npz(path, *keys):
    try:
        with np.load(path, allow_pickle=False) as z:
            missing = [k for k in keys if k not in z]
            if missing:
                raise DataError(f"{path}: missing arrays {missing}")
            return [z[k] for k in keys]
    except (ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise DataError(f"{path}: not a dataset archive ({exc})") from exc


def cmd_train_classic(args) -> int:
    from .classic import Dataset, evaluate, fit

    X, y = _load_npz(args.dataset, "X", "y")
    if np.any(y < 0):
        raise DataError("dataset has unlabeled rows")
    cfg = _load_json(args.config)
    kind = cfg.pop("kind", "svm")
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    train, hold, test = Dataset(X, y).split(seed=seed)
    model = fit(kind, train, holdout=hold, seed=seed, **cfg)
    out = args.out or f"{kind}.json"
    model.save(out)
    print(json.dumps({"model": out, "kind": kind, "test": evaluate(model, test)}))
    return EXIT_OK


def cmd_train_cnn(args) -> int:
    from .cnn import TrainConfig, save_checkpoint, train_cnn

    pixels, labels = _load_npz(args.patches, "pixels", "labels")
    if any(lab == "" for lab in labels):
        raise DataError("patch archive has unlabeled patches")
    cfg = _load_json(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        tc = TrainConfig(**cfg)
    except TypeError as exc:
        raise DataError(f"bad training config: {exc}") from exc
    net = train_cnn(pixels, tc, labels=list(labels))
    out = args.out or "cnn.ckpt"
    save_checkpoint(net, out)
    loss, acc = net.history[-1]
    print(json.dumps({"checkpoint": out, "epochs": len(net.history), "loss": loss, "train_accuracy": acc}))
    return EXIT_OK


def cmd_detect(args) -> int:
    from .classic import ClassicModel
    from .cnn import load_checkpoint
    from .harness import RunConfig, run_classic, run_image
    from .ingest import read_trace
    from .tracker import AlarmPolicy, write_events

    if not args.trace:
        raise UsageError("detect needs a trace path")
    cfg = _load_json(args.config)
    rc = RunConfig(trace_path=args.trace, pipeline=args.pipeline, classic_model_path=args.classic_model,
                   cnn_model_path=args.cnn_model, out_path=args.out, threads=args.threads,
                   spacing_m=float(cfg.get("spacing_m", 4.0)))
    trace = read_trace(rc.trace_path)
    events = []
    if rc.pipeline in ("classic", "both"):
        policy = AlarmPolicy.classic(**cfg.get("classic_policy", {}))
        events += run_classic(trace, ClassicModel.load(rc.classic_model_path), policy, rc.spacing_m,
                              rc.threads).events
    if rc.pipeline in ("image", "both"):
        policy = AlarmPolicy.image(**cfg.get("image_policy", {}))
        events += run_image(trace, load_checkpoint(rc.cnn_model_path), policy, rc.spacing_m,
                            threads=rc.threads).events
    events.sort(key=lambda e: (e.t_confirmed, e.position_m, e.pipeline))
    if rc.out_path:
        write_events(events, rc.out_path)
    else:
        write_events(events, sys.stdout)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .harness import BenchConfig, benchmark, format_table, write_report

    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    d["threads"] = args.threads
    cfg = BenchConfig.from_dict(d)
    report, events = benchmark(cfg)
    if args.pipeline != "both":
        report["selected_pipeline"] = args.pipeline
    paths = write_report(report, events, args.out or "bench")
    sys.stdout.write(format_table(report))
    print(f"report: {paths['json']}  table: {paths['table']}  events: {paths['events']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=_seed, help="RNG seed (u64)")
    common.add_argument("--threads", type=_threads, default=1, help="worker threads")
    common.add_argument("--pipeline", choices=("classic", "image", "both"),
                        help="default: classic (both for bench)")
    common.add_argument("--out", help="output path (prefix for bench)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="dasdetect", description="Excavation-event detection on DAS traces.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    s = sub.add_parser("synth", parents=[common], help="scene JSON -> DAS1 trace + label sidecar")
    s.set_defaults(fn=cmd_synth)
    s = sub.add_parser("features", parents=[common], help="DAS1 trace (or synthetic corpus) -> dataset .npz")
    s.add_argument("trace", nargs="?")
    s.add_argument("--labels", help="label sidecar (default: <trace>.labels.jsonl)")
    s.set_defaults(fn=cmd_features)
    s = sub.add_parser("train-classic", parents=[common], help="feature dataset -> model JSON")
    s.add_argument("dataset")
    s.set_defaults(fn=cmd_train_classic)
    s = sub.add_parser("train-cnn", parents=[common], help="patch dataset -> CNN1 checkpoint")
    s.add_argument("patches")
    s.set_defaults(fn=cmd_train_cnn)
    s = sub.add_parser("detect", parents=[common], help="DAS1 trace + models -> JSONL events")
    s.add_argument("trace", nargs="?")
    s.add_argument("--classic-model")
    s.add_argument("--cnn-model")
    s.set_defaults(fn=cmd_detect)
    s = sub.add_parser("bench", parents=[common], help="bench config -> report JSON + text table")
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.pipeline is None:
        args.pipeline = "both" if args.command == "bench" else "classic"
    if args.command in ("features", "train-classic", "train-cnn") and args.pipeline == "both":
        print(f"{args.command}: --pipeline must be classic or image", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
