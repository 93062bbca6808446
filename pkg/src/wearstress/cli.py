"""Command-line front end.

Subcommands: synth, preprocess, featurize, train, evaluate, importance,
predict. Every subcommand writes its artifacts plus a ``run.json``
provenance record (config, seed, input hashes). Exit codes: 1 usage error,
2 data/format error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .balance import RESAMPLERS
from .data import (SynthConfig, StressLabel, generate_synthetic, load_streams,
                   save_streams)
from .errors import (DataFormatError, InvariantViolation, UsageError,
                     WearstressError)
from .evaluation import (evaluate_predictions, permutation_importance,
                         stratified_kfold, temporal_split)
from .features import FeatureVector, default_manifest, featurize_epochs
from .learners import load_model, preset_params, save_model
from .preprocess import PreprocessParams, load_epochs, preprocess_streams, save_epochs
from .stack import StackModel, stack_fit, stack_predict

RUN_FORMAT_VERSION = "wearstress-run-v1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_record(out_dir, subcommand, config, inputs, outputs):
    """Provenance record; deliberately excludes execution details like
    --threads so reruns hash identically."""
    record = {
        "format": RUN_FORMAT_VERSION,
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"missing config file: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise DataFormatError(f"{p}: config must be a JSON object")
    return cfg


def _apply_config(args, parser_defaults, config):
    """File values fill in anything the command line left at its default;
    unknown keys are rejected."""
    for key, value in config.items():
        attr = key.replace("-", "_")
        if attr not in parser_defaults:
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, attr) == parser_defaults[attr]:
            setattr(args, attr, value)
    return args


# ---------------------------------------------------------------------------
# features.csv


def write_features_csv(path, vectors, manifest) -> None:
    names = manifest.names
    lines = [",".join(names + ["subject_id", "shift_id", "t0", "label"])]
    for v in vectors:
        row = [repr(float(x)) for x in v.values]
        row += [v.subject_id, str(v.shift_id), repr(float(v.t0)), v.label.short]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_features_csv(path, manifest=None):
    """Returns (X, y, subject_ids, shift_ids, t0s); validates the header
    against the manifest column order."""
    manifest = manifest or default_manifest()
    path = Path(path)
    if not path.exists():
        raise UsageError(f"missing features artifact: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    expected = manifest.names + ["subject_id", "shift_id", "t0", "label"]
    if list(df.columns) != expected:
        raise DataFormatError(
            f"{path}: columns do not match the feature manifest "
            f"(hash {manifest.hash()[:12]})")
    X = df[manifest.names].to_numpy(dtype=np.float64)
    y = np.array([StressLabel.from_name(s) for s in df["label"]], dtype=np.int64)
    subjects = df["subject_id"].astype(str).to_numpy()
    shifts = df["shift_id"].to_numpy(dtype=np.int64)
    t0s = df["t0"].to_numpy(dtype=np.float64)
    return X, y, subjects, shifts, t0s


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args):
    cfg = SynthConfig(seed=args.seed, n_subjects=args.subjects,
                      shifts_per_subject=args.shifts,
                      shift_hours=args.shift_hours,
                      class_mix=tuple(float(x) for x in args.class_mix.split(",")),
                      effect_size=args.effect_size)
    streams, intervals = generate_synthetic(cfg)
    out = Path(args.out)
    save_streams(streams, intervals, out)
    _write_run_record(out, "synth",
                      {"seed": args.seed, "subjects": args.subjects,
                       "shifts": args.shifts, "shift_hours": args.shift_hours,
                       "class_mix": args.class_mix,
                       "effect_size": args.effect_size},
                      inputs=[], outputs=[out / "manifest.json", out / "labels.csv"])
    print(f"wrote {len(streams)} streams, {len(intervals)} intervals to {out}")
    return 0


def _cmd_preprocess(args):
    params = PreprocessParams(
        artifact_threshold_g=args.threshold_g,
        median_window_s=args.median_window_s,
        epoch_s=args.epoch_s,
        overlap=args.overlap,
        max_missing_frac=args.max_missing_frac,
        kalman_q=args.kalman_q,
        kalman_r=args.kalman_r,
        artifact_mode=args.artifact_mode)
    streams, intervals = load_streams(args.in_path)
    epochs = preprocess_streams(streams, intervals, params, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_epochs(epochs, out, params)
    manifest_in = Path(args.in_path) / "manifest.json"
    _write_run_record(out.parent, "preprocess",
                      {"in": str(args.in_path), "out": str(out),
                       **params.to_dict()},
                      inputs=[manifest_in] if manifest_in.exists() else [],
                      outputs=[out, Path(str(out) + ".json")])
    print(f"wrote {len(epochs)} epochs to {out}")
    return 0


def _cmd_featurize(args):
    epochs, _ = load_epochs(args.in_path)
    manifest = default_manifest()
    vectors, rejections = featurize_epochs(epochs, manifest, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features_csv(out, vectors, manifest)
    manifest_out = Path(args.manifest_out) if args.manifest_out \
        else out.parent / "manifest.json"
    manifest_out.write_text(json.dumps(manifest.to_dict(), indent=2,
                                       sort_keys=True) + "\n")
    for (subject, t0), reason in rejections:
        print(f"rejected epoch {subject}@{t0:.0f}: {reason}", file=sys.stderr)
    _write_run_record(out.parent, "featurize",
                      {"in": str(args.in_path), "out": str(out),
                       "manifest_hash": manifest.hash()},
                      inputs=[Path(args.in_path)],
                      outputs=[out, manifest_out])
    print(f"wrote {len(vectors)} feature vectors to {out} "
          f"({len(rejections)} epochs rejected)")
    return 0


def _overrides_from_args(args) -> dict:
    overrides = {}
    if args.rf_trees is not None:
        overrides.setdefault("forest", {})["n_trees"] = args.rf_trees
    if args.boost_rounds is not None:
        overrides.setdefault("boost", {})["n_rounds"] = args.boost_rounds
    if args.mlp_epochs is not None:
        overrides.setdefault("mlp", {})["epochs"] = args.mlp_epochs
    return overrides


def _cmd_train(args):
    manifest = default_manifest()
    X, y, subjects, shifts, _ = read_features_csv(args.features, manifest)
    if args.protocol == "temporal":
        plan = temporal_split(subjects, shifts, train_frac=args.train_frac)
        train_idx = plan.train_idx
    elif args.protocol == "all":
        train_idx = np.arange(len(y))
    else:
        raise UsageError(f"unknown training protocol {args.protocol!r}")
    if train_idx.size == 0:
        raise DataFormatError("training partition is empty")

    model = stack_fit(X[train_idx], y[train_idx], preset=args.preset,
                      base_params=_overrides_from_args(args),
                      oof_k=args.oof_k, resampler=args.resampler,
                      smote_k=args.smote_k, seed=args.seed,
                      manifest_hash=manifest.hash(), threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, manifest_hash=manifest.hash(), preset=args.preset)
    _write_run_record(out.parent, "train",
                      {"features": str(args.features), "out": str(out),
                       "preset": args.preset, "resampler": args.resampler,
                       "smote_k": args.smote_k, "oof_k": args.oof_k,
                       "seed": args.seed, "protocol": args.protocol,
                       "train_frac": args.train_frac,
                       "manifest_hash": manifest.hash()},
                      inputs=[Path(args.features)], outputs=[out])
    print(f"trained stack on {train_idx.size} rows "
          f"(top-5 features: {[manifest.names[i] for i in model.top5]}); "
          f"wrote {out}")
    return 0


def _check_manifest(header, manifest):
    stored = header.get("manifest_hash", "")
    if stored and stored != manifest.hash():
        raise DataFormatError(
            "model was trained against a different feature manifest "
            f"({stored[:12]} != {manifest.hash()[:12]})")


def _report_models(model: StackModel, X, y):
    out = {}
    for name, part in (("forest", model.forest), ("boost", model.boost),
                       ("mlp", model.mlp)):
        out[name] = evaluate_predictions(y, part.predict_proba(X))
    out["stack"] = evaluate_predictions(y, model.predict_proba(X))
    return out


def _cmd_evaluate(args):
    manifest = default_manifest()
    model, header = load_model(args.model)
    _check_manifest(header, manifest)
    if model.kind != "stack":
        raise UsageError(f"evaluate expects a stack model, got {model.kind!r}")
    X, y, subjects, shifts, _ = read_features_csv(args.features, manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.protocol == "temporal":
        plan = temporal_split(subjects, shifts, train_frac=args.train_frac)
        if plan.test_idx.size == 0:
            raise DataFormatError("temporal test partition is empty")
        reports = _report_models(model, X[plan.test_idx], y[plan.test_idx])
        payload = {
            "format": "wearstress-report-v1",
            "protocol": "temporal",
            "train_frac": args.train_frac,
            "n_test": int(plan.test_idx.size),
            "models": {k: r.to_dict() for k, r in reports.items()},
        }
        confusions = {k: r.confusion for k, r in reports.items()}
    elif args.protocol == "cv":
        plans = stratified_kfold(y, k=args.folds, seed=args.seed)
        per_model = {name: [] for name in ("forest", "boost", "mlp", "stack")}
        confusions = {name: np.zeros((3, 3), dtype=np.int64)
                      for name in per_model}
        for f, plan in enumerate(plans):
            fold_model = stack_fit(
                X[plan.train_idx], y[plan.train_idx], preset=model.preset,
                base_params=model.base_params, oof_k=model.oof_k,
                resampler=args.resampler, smote_k=args.smote_k,
                seed=args.seed + f, manifest_hash=manifest.hash(),
                threads=args.threads)
            reports = _report_models(fold_model, X[plan.test_idx], y[plan.test_idx])
            for name, rep in reports.items():
                per_model[name].append(rep)
                confusions[name] += rep.confusion
        payload = {
            "format": "wearstress-report-v1",
            "protocol": f"stratified-{args.folds}-fold",
            "models": {},
        }
        for name, reps in per_model.items():
            f1s = np.array([r.macro_f1 for r in reps])
            payload["models"][name] = {
                "folds": [r.to_dict() for r in reps],
                "macro_f1_mean": float(f1s.mean()),
                "macro_f1_sd": float(f1s.std()),
            }
    else:
        raise UsageError(f"unknown protocol {args.protocol!r}")

    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written = [report_path]
    header_row = "," + ",".join(f"pred_{l.short}" for l in StressLabel)
    for name, cm in confusions.items():
        lines = [header_row]
        for i, lbl in enumerate(StressLabel):
            lines.append(f"true_{lbl.short}," + ",".join(str(int(c)) for c in cm[i]))
        p = out_dir / f"confusion_{name}.csv"
        p.write_text("\n".join(lines) + "\n")
        written.append(p)
    _write_run_record(out_dir, "evaluate",
                      {"features": str(args.features), "model": str(args.model),
                       "protocol": args.protocol, "folds": args.folds,
                       "train_frac": args.train_frac, "seed": args.seed,
                       "resampler": args.resampler, "smote_k": args.smote_k},
                      inputs=[Path(args.features), Path(args.model)],
                      outputs=written)
    print(f"wrote {report_path}")
    return 0


def _cmd_importance(args):
    manifest = default_manifest()
    model, header = load_model(args.model)
    _check_manifest(header, manifest)
    boosted = model.boost if model.kind == "stack" else model
    X, y, subjects, shifts, _ = read_features_csv(args.features, manifest)
    plan = temporal_split(subjects, shifts, train_frac=args.train_frac)
    rows = plan.test_idx if plan.test_idx.size else plan.train_idx
    imp = permutation_importance(boosted, X[rows], y[rows],
                                 n_repeats=args.n_repeats, seed=args.seed)
    order = np.argsort(-imp, kind="stable")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["rank,feature,importance"]
    for rank, j in enumerate(order, start=1):
        lines.append(f"{rank},{manifest.names[j]},{imp[j]!r}")
    out.write_text("\n".join(lines) + "\n")
    _write_run_record(out.parent, "importance",
                      {"features": str(args.features), "model": str(args.model),
                       "n_repeats": args.n_repeats, "seed": args.seed,
                       "train_frac": args.train_frac},
                      inputs=[Path(args.features), Path(args.model)],
                      outputs=[out])
    print(f"wrote {out}")
    return 0


def _cmd_predict(args):
    manifest = default_manifest()
    model, header = load_model(args.model)
    _check_manifest(header, manifest)
    X, y, subjects, shifts, t0s = read_features_csv(args.features, manifest)
    if model.kind == "stack":
        labels, probs = stack_predict(model, X)
    else:
        probs = model.predict_proba(X)
        labels = np.argmax(probs, axis=1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["subject_id,shift_id,t0,label_true,label_pred,"
             + ",".join(f"p_{l.short}" for l in StressLabel)]
    for i in range(len(labels)):
        lines.append(
            f"{subjects[i]},{shifts[i]},{t0s[i]!r},{StressLabel(y[i]).short},"
            f"{StressLabel(labels[i]).short},"
            + ",".join(repr(float(p)) for p in probs[i]))
    out.write_text("\n".join(lines) + "\n")
    _write_run_record(out.parent, "predict",
                      {"features": str(args.features), "model": str(args.model)},
                      inputs=[Path(args.features), Path(args.model)],
                      outputs=[out])
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="wearstress",
                     description="Wearable-sensor stress classification pipeline")
    parser.add_argument("--config", default=None,
                        help="JSON config file; flags override file values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--shifts", type=int, default=5)
    p.add_argument("--shift-hours", type=float, default=1.0)
    p.add_argument("--class-mix", default="0.8,0.12,0.08")
    p.add_argument("--effect-size", type=float, default=1.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess", help="streams -> epochs")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold-g", type=float, default=0.3)
    p.add_argument("--median-window-s", type=float, default=5.0)
    p.add_argument("--epoch-s", type=float, default=300.0)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--max-missing-frac", type=float, default=0.02)
    p.add_argument("--kalman-q", type=float, default=1e-2)
    p.add_argument("--kalman-r", type=float, default=1e-1)
    p.add_argument("--artifact-mode", choices=("median", "mask"), default="median")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("featurize", help="epochs -> feature vectors")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest-out", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="fit the stacking ensemble")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("method", "implementation"),
                   default="implementation")
    p.add_argument("--resampler", choices=RESAMPLERS, default="smote-tomek")
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--oof-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--protocol", choices=("temporal", "all"), default="temporal")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--rf-trees", type=int, default=None)
    p.add_argument("--boost-rounds", type=int, default=None)
    p.add_argument("--mlp-epochs", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics report for a trained model")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--protocol", choices=("temporal", "cv"), default="temporal")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resampler", choices=RESAMPLERS, default="smote-tomek")
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("importance", help="permutation feature importance")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("predict", help="label feature rows with a trained model")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config_file(args.config)
        if config:
            defaults = {a.dest: a.default
                        for a in parser._subparsers._group_actions[0]
                        .choices[args.command]._actions}
            _apply_config(args, defaults, config)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 3
    except WearstressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
