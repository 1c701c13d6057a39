"""Exit criteria for the toolkit, one test per criterion.

Run ``pytest tests/test_acceptance.py -v`` for a PASS/FAIL line per
criterion in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from protestnet import cli
from protestnet.augmentor import AugmentationPlan, ClassPlan, default_plan, load_images, plan_jobs, run_augmentation
from protestnet.calibration import ConfusionCounts, mcc_binary, mcc_multiclass, select_thresholds, threshold_grid
from protestnet.cnn import TINY, ArchConfig, CnnModel, TrainConfig, batches_per_epoch, sigmoid_cross_entropy, train_arrays
from protestnet.dataset import SyntheticSpec, class_counts, generate_synthetic, save_manifest, split, standin_manifest
from protestnet.imageops import CATALOG_KINDS, TransformSpec, apply_transform
from protestnet.metrics import build_report, exact_match_loss, hamming_loss, report_from_predictions
from protestnet.svm import SvmConfig, class_weight, predict_multilabel, train_one_vs_all


@pytest.mark.criterion(1, "forward pass reproduces the 224x224 feature-size chain")
def test_shape_chain():
    model = CnnModel.initialize(ArchConfig(), seed=0)
    x = np.random.default_rng(0).random((1, 3, 224, 224))
    start = time.perf_counter()
    shapes = model.feature_shapes(x)
    probs = model.forward(x)
    elapsed = time.perf_counter() - start
    assert shapes == [(32, 112, 112), (32, 56, 56), (64, 28, 28), (64, 14, 14),
                      (128, 7, 7), (128, 4, 4), (1024,), (7,)]
    assert probs.shape == (1, 7)
    assert elapsed < 1.0


@pytest.mark.criterion(2, "analytic gradients match central differences (rel err < 1e-4)")
def test_gradient_check():
    start = time.perf_counter()
    g = np.random.default_rng(2024)
    model = CnnModel(TINY, {k: g.normal(0.0, 0.5, s) for k, s in TINY.param_shapes().items()})
    x = g.random((4, 3, 8, 8))
    y = (g.random((4, 7)) < 0.5).astype(float)
    _, grads = model.loss_and_grads(x, y)
    h = 1e-5
    worst = 0.0
    count = 0
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = model.loss_and_grads(x, y)[0]
            p[idx] = orig - h
            lm = model.loss_and_grads(x, y)[0]
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(grads[name][idx] - fd) / (abs(grads[name][idx]) + 1e-8))
            count += 1
    assert count == sum(int(np.prod(s)) for s in TINY.param_shapes().values())
    assert worst < 1e-4
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(3, "multiclass MCC equals binary MCC on 2x2 matrices; 10/sqrt(600) example")
def test_mcc_consistency():
    g = np.random.default_rng(3)
    for _ in range(100):
        tn, fp, fn, tp = (int(v) for v in g.integers(0, 50, size=4))
        C = np.array([[tn, fp], [fn, tp]])  # rows: true negative/positive
        assert abs(mcc_multiclass(C) - mcc_binary(ConfusionCounts(tp, fp, fn, tn))) < 1e-12
    assert abs(mcc_binary(ConfusionCounts(tp=3, fp=1, fn=2, tn=4)) - 10 / math.sqrt(600)) < 1e-12


def _brute_losses(t, p):
    n, L = len(t), len(t[0])
    rows_wrong = 0
    slots_wrong = 0
    for i in range(n):
        row_ok = True
        for j in range(L):
            if t[i][j] != p[i][j]:
                slots_wrong += 1
                row_ok = False
        rows_wrong += not row_ok
    return rows_wrong / n, slots_wrong / (n * L)


@pytest.mark.criterion(4, "loss identities: 7 ln 2 at p=0.5; Hamming/exact-match equal brute-force counts")
def test_loss_identities():
    y = np.array([[1, 0, 1, 0, 0, 1, 1]])
    assert abs(sigmoid_cross_entropy(np.full((1, 7), 0.5), y) - 7 * math.log(2)) < 1e-9
    g = np.random.default_rng(4)
    for _ in range(1000):
        t = g.integers(0, 2, size=(50, 7))
        p = np.where(g.random((50, 7)) < 0.15, 1 - t, t)
        em, hl = _brute_losses(t.tolist(), p.tolist())
        assert exact_match_loss(t, p) == em
        assert hamming_loss(t, p) == hl


@pytest.mark.criterion(5, "balancing-plan augmentation counts exact; flips are involutions; runs byte-identical")
def test_augmentation_arithmetic(tmp_path):
    m = standin_manifest()
    assert class_counts(m) == [327, 1943, 7347, 248, 2159, 4462, 1233]
    runs = []
    for k in range(2):
        plan = default_plan(m, seed=11)
        out = run_augmentation(m, plan_jobs(m, plan))
        assert class_counts(out) == [4578, 5829, 7347, 3472, 6477, 4462, 6165]
        save_manifest(out, tmp_path / f"run{k}.jsonl")
        runs.append((tmp_path / f"run{k}.jsonl").read_bytes())
    assert runs[0] == runs[1]

    g = np.random.default_rng(5)
    for _ in range(20):
        img = g.random((3, int(g.integers(1, 40)), int(g.integers(1, 40))))
        for kind in ("hflip", "vflip"):
            t = TransformSpec(kind)
            assert np.array_equal(apply_transform(apply_transform(img, t), t), img)

    # materialized images are byte-identical across runs too
    syn = generate_synthetic(SyntheticSpec(per_class_count=(3, 2, 0, 0, 0, 0, 0), image_side=16), 5, tmp_path / "syn")
    plan = AugmentationPlan(tuple([ClassPlan(CATALOG_KINDS, 3 * 14), ClassPlan(("hflip", "vflip", "noise", "affine"), 6)]
                                  + [ClassPlan((), 0)] * 5), seed=3)
    pngs = []
    for k in range(2):
        out_dir = tmp_path / f"mat{k}"
        out = run_augmentation(syn, plan_jobs(syn, plan), out_dir, side=16, materialize=True)
        paths = [out.resolve(r) for r in out.records if not r.provenance.is_original]
        assert len(paths) == 39 + 4
        pngs.append([p.read_bytes() for p in paths])
    assert pngs[0] == pngs[1]


@pytest.mark.criterion(6, "inverse-frequency penalty: balanced gives C; 9504/2289 = 4.1520")
def test_class_weighting():
    for C in (0.5, 1.0, 3.0):
        assert all(class_weight(C, 700, 7, 100) == C for _ in range(7))
    # balanced single-label data through the trainer
    labels = np.repeat(np.eye(7, dtype=np.uint8), 10, axis=0)
    X = np.random.default_rng(6).random((70, 5))
    svm = train_one_vs_all(X, labels, SvmConfig(C=2.0, max_iterations=1, use_class_weighting=True))
    assert [m.penalty for m in svm.models] == [2.0] * 7
    assert abs(class_weight(1.0, 9504, 7, 327) - 4.1520) < 1e-4


@pytest.mark.criterion(7, "synthetic corpus: CNN >= 0.95 and SVM >= 0.90 held-out mean per-label accuracy")
def test_end_to_end_learnability(tmp_path):
    start = time.perf_counter()
    m = generate_synthetic(SyntheticSpec(per_class_count=(70,) * 7, image_side=32, co_label_probability=0.2),
                           seed=7, out_dir=tmp_path / "syn")
    m = split(m, 0.8, seed=8)
    train = [r for r in m.records if r.split == "train"]
    test = [r for r in m.records if r.split == "test"]
    Xtr, Xte = load_images(m, 32, train), load_images(m, 32, test)
    Ytr = np.stack([r.labels.as_array() for r in train])
    Yte = np.stack([r.labels.as_array() for r in test])

    cnn = CnnModel.initialize(ArchConfig(input_side=32), seed=9)
    train_arrays(cnn, Xtr, Ytr, TrainConfig(batch_size=32, epochs=15, seed=10))
    thresholds = select_thresholds(cnn.forward(Xtr), Ytr)
    cnn_report = build_report(Yte, cnn.forward(Xte), thresholds)
    print(f"\ncnn thresholds {thresholds}\n{cnn_report.table()}")
    assert cnn_report.mean_accuracy >= 0.95
    grid = threshold_grid(0.1)
    assert len(thresholds) == 7 and all(t in grid and 0 < t < 1 and round(t, 1) == t for t in thresholds)

    svm = train_one_vs_all(Xtr.reshape(len(train), -1), Ytr, SvmConfig(feature_side=32, seed=11))
    svm_report = report_from_predictions(Yte, predict_multilabel(svm, Xte.reshape(len(test), -1)))
    print(svm_report.table())
    assert svm_report.mean_accuracy >= 0.90
    assert time.perf_counter() - start < 600


@pytest.mark.criterion(8, "25,250 records at batch 202 give 125 batches per epoch")
def test_batch_geometry():
    assert batches_per_epoch(25250, 202) == 125
    g = np.random.default_rng(12)
    X = g.random((25250, 3, 8, 8))
    Y = (g.random((25250, 7)) < 0.3).astype(float)
    res = train_arrays(CnnModel.initialize(TINY, seed=1), X, Y, TrainConfig(batch_size=202, epochs=1))
    assert len(res.history) == 125
    assert [h["batch"] for h in res.history] == list(range(125))


@pytest.mark.criterion(9, "train and evaluate reruns give byte-identical checkpoints and reports")
def test_determinism(tmp_path):
    syn = tmp_path / "syn"
    assert cli.main(["synth", "--out", str(syn), "--per-class", "8", "--side", "16", "--co-label", "0.3",
                     "--split", "0.75", "--seed", "3"]) == 0
    manifest = str(syn / "manifest.jsonl")
    for model, extra in (("cnn", ["--epochs", "2", "--batch-size", "8", "--widths", "4", "4", "8",
                                  "--fc-units", "16"]),
                         ("svm", ["--max-iterations", "20"])):
        ckpts, reports = [], []
        for k in range(2):
            out = tmp_path / f"{model}{k}"
            assert cli.main(["train", manifest, "--model", model, "--side", "16", "--seed", "5",
                             "--out", str(out / "train")] + extra) == 0
            assert cli.main(["evaluate", str(out / "train" / "model.ckpt"), manifest,
                             "--out", str(out / "eval")]) == 0
            ckpts.append((out / "train" / "model.ckpt").read_bytes())
            reports.append((out / "eval" / "report.json").read_bytes())
        assert ckpts[0] == ckpts[1]
        assert reports[0] == reports[1]
