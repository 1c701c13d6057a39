"""End-to-end run on a synthetic corpus: synth, split, augment, train both models, calibrate, evaluate.

Everything goes through the CLI so the outputs match what a user would get.
"""
import argparse
import json
import sys
from pathlib import Path

from protestnet import cli


def run(*argv):
    code = cli.main([str(a) for a in argv])
    if code != 0:
        sys.exit(f"step failed ({code}): {' '.join(map(str, argv))}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-class", type=int, default=70)
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--augment", action="store_true", help="apply the default balancing plan first")
    args = ap.parse_args()
    out = Path(args.out)
    seed = ["--seed", args.seed]

    run("synth", "--out", out / "data", "--per-class", args.per_class, "--side", args.side,
        "--co-label", 0.2, "--split", 0.8, *seed)
    manifest = out / "data" / "manifest.jsonl"
    if args.augment:
        run("augment", manifest, "--side", args.side, "--out", out / "aug", *seed)
        manifest = out / "aug" / "manifest.jsonl"

    run("train", manifest, "--model", "cnn", "--side", args.side, "--epochs", args.epochs,
        "--batch-size", 32, "--out", out / "cnn", *seed)
    run("calibrate", out / "cnn" / "model.ckpt", manifest, "--split", "train", "--out", out / "cnn-cal", *seed)
    run("evaluate", out / "cnn" / "model.ckpt", manifest, "--thresholds", out / "cnn-cal" / "thresholds.json",
        "--out", out / "cnn-eval", *seed)

    run("train", manifest, "--model", "svm", "--side", args.side, "--out", out / "svm", *seed)
    run("evaluate", out / "svm" / "model.ckpt", manifest, "--out", out / "svm-eval", *seed)

    for name in ("cnn-eval", "svm-eval"):
        r = json.loads((out / name / "report.json").read_text())
        print(f"{name}: mean per-label accuracy {r['mean_accuracy']:.4f}  "
              f"exact-match loss {r['exact_match_loss']:.4f}  hamming loss {r['hamming_loss']:.4f}")


if __name__ == "__main__":
    main()
