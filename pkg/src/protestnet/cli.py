"""Command-line pipeline: synth -> split -> augment -> train -> calibrate -> evaluate -> predict.

Every subcommand accepts ``--seed`` (master seed), ``--out`` (output
directory) and ``--config`` (JSON file of option defaults; explicit flags
win). The resolved options are written to ``<out>/run_config.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import CLASS_NAMES, __version__
from .augmentor import (AugmentationError, default_plan, load_images, load_plan, plan_jobs, rebase,
                        run_augmentation, summary_table)
from .calibration import format_thresholds, select_thresholds, validate_thresholds
from .cnn.model import ArchConfig, CnnModel
from .cnn.train import TrainConfig, load_checkpoint, save_checkpoint, save_history, train_arrays
from .dataset import ManifestError, SyntheticSpec, generate_synthetic, lint_manifest, load_manifest, save_manifest, split
from .imageops import ImageDecodeError, load_and_resize
from .metrics import build_report, report_from_predictions
from .seeding import derive_seed
from .serialization import FormatError, load_arrays
from .svm import SvmConfig, decision_scores, featurize, load_svm, predict_multilabel, save_svm, train_one_vs_all

log = logging.getLogger("protestnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e}") from e
    return out


def _write_run_config(out: Path, args) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    cfg["version"] = __version__
    (out / "run_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n")


def _records(m, which: str):
    if which == "all":
        return list(m.records)
    return [r for r in m.records if r.split == which]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _checkpoint_kind(path) -> str:
    meta, _ = load_arrays(path)
    fmt = meta.get("format", "")
    if fmt.startswith("protestnet-cnn"):
        return "cnn"
    if fmt.startswith("protestnet-svm"):
        return "svm"
    raise FormatError(f"{path}: unknown checkpoint format {fmt!r}")


def _load_thresholds(path):
    if path is None:
        return None
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return validate_thresholds(d["thresholds"] if isinstance(d, dict) else d)


# ------------------------------------------------------------ subcommands

def cmd_synth(args) -> int:
    out = _out(args)
    counts = [int(c) for c in args.counts.split(",")] if args.counts else [args.per_class] * len(CLASS_NAMES)
    spec = SyntheticSpec(tuple(counts), args.side, args.co_label)
    m = generate_synthetic(spec, derive_seed(args.seed, "synth"), out)
    if args.split:
        m = split(m, args.split, derive_seed(args.seed, "split"))
        save_manifest(m, out / "manifest.jsonl")
    _write_run_config(out, args)
    print(f"{len(m)} records -> {out / 'manifest.jsonl'}; class counts {m.class_counts}")
    return EXIT_OK


def cmd_split(args) -> int:
    out = _out(args)
    m = load_manifest(args.manifest)
    m = rebase(split(m, args.fraction, derive_seed(args.seed, "split"), stratify=args.stratify), out)
    save_manifest(m, out / "manifest.jsonl")
    _write_run_config(out, args)
    n_train = sum(r.split == "train" for r in m.records)
    print(f"train {n_train}  test {len(m) - n_train}")
    return EXIT_OK


def cmd_lint(args) -> int:
    findings = lint_manifest(load_manifest(args.manifest))
    for f in findings:
        print(f"{f.record_id}\t{f.rule}\t{f.message}")
    print(f"{len(findings)} findings", file=sys.stderr)
    return EXIT_OK


def cmd_augment(args) -> int:
    out = _out(args)
    m = load_manifest(args.manifest)
    plan = load_plan(args.plan, m) if args.plan else default_plan(m, derive_seed(args.seed, "augment"))
    jobs = plan_jobs(m, plan)
    if not args.no_source_check:
        ids = m.by_id()
        missing = sorted({j.source_id for j in jobs if not m.resolve(ids[j.source_id]).is_file()})
        if missing:
            raise ManifestError(f"source images missing for {len(missing)} records: {', '.join(missing[:10])}")
    new = run_augmentation(m, jobs, out, side=args.side, materialize=args.materialize)
    save_manifest(new, out / "manifest.jsonl")
    _write_json(out / "plan.json", plan.to_json())
    _write_run_config(out, args)
    print(summary_table(m, plan, jobs))
    return EXIT_OK


def _train_split(m):
    recs = _records(m, "train") or _records(m, "unassigned")
    if not recs:
        raise ManifestError("manifest has no train (or unassigned) records")
    return recs


def cmd_train(args) -> int:
    out = _out(args)
    m = load_manifest(args.manifest)
    recs = _train_split(m)
    Y = np.stack([r.labels.as_array() for r in recs])
    X = load_images(m, args.side, recs)
    log.info("loaded %d training images at %dx%d", len(recs), args.side, args.side)
    if args.model == "svm":
        cfg = SvmConfig(C=args.C, max_iterations=args.max_iterations, batch_size=args.svm_batch_size,
                        use_class_weighting=args.class_weighting, feature_side=args.side,
                        seed=derive_seed(args.seed, "shuffle"))
        history: list = []
        svm = train_one_vs_all(X.reshape(len(recs), -1), Y, cfg, history)
        save_svm(svm, out / "model.ckpt", cfg)
        save_history([{"epoch": i, "objective": h} for i, h in enumerate(history)], out / "history.jsonl")
        print(f"svm trained: penalties {[round(mm.penalty, 4) for mm in svm.models]}, "
              f"final objective {[round(v, 3) for v in history[-1]]}")
    else:
        arch = ArchConfig(input_side=args.side, widths=tuple(args.widths), fc_units=args.fc_units)
        cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
                          seed=derive_seed(args.seed, "shuffle"), clip_norm=args.clip_norm)
        model = CnnModel.initialize(arch, seed=derive_seed(args.seed, "init"))
        res = train_arrays(model, X, Y, cfg)
        save_checkpoint(out / "model.ckpt", res.model, res.adam, res.rng_state,
                        {"train_config": asdict(cfg), "n_train": len(recs), "class_names": list(CLASS_NAMES)})
        save_history(res.history, out / "history.jsonl")
        nb = len(res.history) // cfg.epochs
        print(f"cnn trained: {cfg.epochs} epochs x {nb} batches; loss {res.history[0]['loss']:.4f} -> "
              f"{res.history[-1]['loss']:.4f}")
    _write_run_config(out, args)
    return EXIT_OK


def _cnn_probs(model: CnnModel, m, recs, chunk: int = 256) -> np.ndarray:
    X = load_images(m, model.arch.input_side, recs)
    return np.concatenate([model.forward(X[i:i + chunk]) for i in range(0, len(recs), chunk)]) \
        if recs else np.zeros((0, len(CLASS_NAMES)))


def cmd_calibrate(args) -> int:
    out = _out(args)
    if _checkpoint_kind(args.checkpoint) != "cnn":
        raise UsageError("calibration needs a CNN checkpoint; SVM predictions use the score sign rule")
    model, _, _ = load_checkpoint(args.checkpoint)
    m = load_manifest(args.manifest)
    recs = _records(m, args.split)
    if not recs:
        raise ManifestError(f"no records in split {args.split!r}")
    probs = _cnn_probs(model, m, recs)
    truth = np.stack([r.labels.as_array() for r in recs])
    th = select_thresholds(probs, truth, args.grid_step)
    _write_json(out / "thresholds.json", {"classes": list(CLASS_NAMES), "thresholds": th})
    _write_run_config(out, args)
    print(format_thresholds(th))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out(args)
    kind = _checkpoint_kind(args.checkpoint)
    m = load_manifest(args.manifest)
    recs = _records(m, args.split)
    if not recs:
        raise ManifestError(f"no records in split {args.split!r}")
    truth = np.stack([r.labels.as_array() for r in recs])
    if kind == "svm":
        if args.thresholds:
            raise UsageError("thresholds do not apply to SVM checkpoints")
        svm = load_svm(args.checkpoint)
        X = load_images(m, svm.feature_side, recs).reshape(len(recs), -1)
        report = report_from_predictions(truth, predict_multilabel(svm, X))
    else:
        model, _, _ = load_checkpoint(args.checkpoint)
        probs = _cnn_probs(model, m, recs)
        th = _load_thresholds(args.thresholds)
        half = build_report(truth, probs, [0.5] * len(CLASS_NAMES))
        if th is not None:
            report = build_report(truth, probs, th)
            (out / "report_at_0.5.json").write_text(half.dumps(), encoding="utf-8")
        else:
            report = half
    (out / "report.json").write_text(report.dumps(), encoding="utf-8")
    _write_run_config(out, args)
    print(report.table())
    return EXIT_OK


def cmd_predict(args) -> int:
    kind = _checkpoint_kind(args.checkpoint)
    if kind == "svm":
        model = load_svm(args.checkpoint)
        side = model.feature_side
        th = None
        if args.thresholds:
            raise UsageError("thresholds do not apply to SVM checkpoints")
    else:
        model, _, _ = load_checkpoint(args.checkpoint)
        side = model.arch.input_side
        th = _load_thresholds(args.thresholds) or [0.5] * len(CLASS_NAMES)
    failed = 0
    for path in args.images:
        try:
            img = load_and_resize(path, side)
        except (ImageDecodeError, FileNotFoundError) as e:
            failed += 1
            log.error("%s", e)
            continue
        if kind == "svm":
            scores = decision_scores(model, featurize(img))
            bits = (scores > 0).astype(int)
        else:
            scores = model.forward(img[None])[0]
            bits = (scores >= np.asarray(th)).astype(int)
        print(f"{path}\t{' '.join(f'{s:.6f}' for s in scores)}\t{''.join(map(str, bits))}")
    return EXIT_DATA if failed else EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for all random substreams")
    common.add_argument("--out", help="output directory")
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="protestnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    subs = {}

    s = subs["synth"] = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--per-class", type=int, default=70)
    s.add_argument("--counts", help="comma-separated per-class counts (overrides --per-class)")
    s.add_argument("--side", type=int, default=32)
    s.add_argument("--co-label", type=float, default=0.0, help="co-label probability")
    s.add_argument("--split", type=float, default=None, help="also split with this train fraction")
    s.set_defaults(func=cmd_synth)

    s = subs["split"] = sub.add_parser("split", parents=[common], help="assign train/test splits")
    s.add_argument("manifest")
    s.add_argument("--fraction", type=float, default=0.8)
    s.add_argument("--stratify", action="store_true")
    s.set_defaults(func=cmd_split)

    s = subs["lint"] = sub.add_parser("lint", parents=[common], help="report label and path problems")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_lint)

    s = subs["augment"] = sub.add_parser("augment", parents=[common], help="class-balancing augmentation")
    s.add_argument("manifest")
    s.add_argument("--plan", help="JSON plan file (default: the published balancing plan)")
    s.add_argument("--side", type=int, default=224)
    s.add_argument("--materialize", action="store_true", help="write augmented PNGs")
    s.add_argument("--no-source-check", action="store_true")
    s.set_defaults(func=cmd_augment)

    s = subs["train"] = sub.add_parser("train", parents=[common], help="train an SVM or CNN")
    s.add_argument("manifest")
    s.add_argument("--model", choices=("svm", "cnn"), default="cnn")
    s.add_argument("--side", type=int, default=224)
    s.add_argument("--epochs", type=int, default=1)
    s.add_argument("--batch-size", type=int, default=202)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--clip-norm", type=float, default=None)
    s.add_argument("--widths", type=int, nargs=3, default=[32, 64, 128])
    s.add_argument("--fc-units", type=int, default=1024)
    s.add_argument("--C", type=float, default=1.0)
    s.add_argument("--max-iterations", type=int, default=4000)
    s.add_argument("--svm-batch-size", type=int, default=32)
    s.add_argument("--class-weighting", action="store_true")
    s.set_defaults(func=cmd_train)

    s = subs["calibrate"] = sub.add_parser("calibrate", parents=[common], help="select MCC thresholds")
    s.add_argument("checkpoint")
    s.add_argument("manifest")
    s.add_argument("--split", choices=("train", "test", "unassigned", "all"), default="all")
    s.add_argument("--grid-step", type=float, default=0.1)
    s.set_defaults(func=cmd_calibrate)

    s = subs["evaluate"] = sub.add_parser("evaluate", parents=[common], help="multi-label evaluation report")
    s.add_argument("checkpoint")
    s.add_argument("manifest")
    s.add_argument("--thresholds")
    s.add_argument("--split", choices=("train", "test", "unassigned", "all"), default="test")
    s.set_defaults(func=cmd_evaluate)

    s = subs["predict"] = sub.add_parser("predict", parents=[common], help="predict labels for images")
    s.add_argument("checkpoint")
    s.add_argument("images", nargs="+")
    s.add_argument("--thresholds")
    s.set_defaults(func=cmd_predict)
    return p, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            parser.error(f"cannot read config {args.config}: {e}")
        subs[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (ManifestError, FileNotFoundError, ImageDecodeError, FormatError, AugmentationError, ValueError) as e:
        log.error("%s", e)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.exception("unexpected failure: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
