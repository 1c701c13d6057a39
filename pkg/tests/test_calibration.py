import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import confusion_matrix, matthews_corrcoef

from protestnet.calibration import (ConfusionCounts, apply_thresholds, format_thresholds, mcc_binary,
                                    mcc_multiclass, select_thresholds, threshold_grid, validate_thresholds)

# sklearn warns when a column holds a single label; the value is still defined
pytestmark = pytest.mark.filterwarnings("ignore:A single label:UserWarning")


def test_binary_example():
    assert math.isclose(mcc_binary(ConfusionCounts(tp=3, fp=1, fn=2, tn=4)), 10 / math.sqrt(600), abs_tol=1e-12)


def test_degenerate_marginals_give_zero():
    assert mcc_binary(ConfusionCounts(0, 0, 3, 5)) == 0.0
    assert mcc_binary(ConfusionCounts(4, 2, 0, 0)) == 0.0
    assert mcc_multiclass([[5, 0], [0, 0]]) == 0.0


def test_perfect_and_inverted():
    assert mcc_binary(ConfusionCounts(5, 0, 0, 5)) == 1.0
    assert mcc_binary(ConfusionCounts(0, 5, 5, 0)) == -1.0
    assert mcc_multiclass(np.diag([3, 4, 5])) == 1.0


def test_multiclass_errors():
    with pytest.raises(ValueError):
        mcc_multiclass(np.zeros((2, 3), dtype=int))
    with pytest.raises(ValueError):
        mcc_multiclass(np.zeros((3, 3), dtype=int))
    with pytest.raises(ValueError):
        mcc_multiclass([[1, -1], [0, 2]])
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


@given(st.integers(2, 6), st.integers(1, 80), st.integers(0, 10 ** 6))
@settings(max_examples=150, deadline=None)
def test_multiclass_matches_sklearn(k, n, seed):
    g = np.random.default_rng(seed)
    t = g.integers(0, k, n)
    p = np.where(g.random(n) < 0.6, t, g.integers(0, k, n))
    C = confusion_matrix(t, p, labels=list(range(k)))
    assert abs(mcc_multiclass(C) - matthews_corrcoef(t, p)) < 1e-12


@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_binary_equals_two_by_two(tp, fp, fn, tn):
    if tp + fp + fn + tn == 0:
        return
    C = np.array([[tn, fp], [fn, tp]])
    b = mcc_binary(ConfusionCounts(tp, fp, fn, tn))
    assert abs(mcc_multiclass(C) - b) < 1e-12
    assert -1.0 - 1e-12 <= b <= 1.0 + 1e-12
    # swapping positive and negative roles leaves MCC unchanged
    assert abs(mcc_binary(ConfusionCounts(tn, fn, fp, tp)) - b) < 1e-12


def test_from_predictions():
    c = ConfusionCounts.from_predictions([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
    assert c == ConfusionCounts(tp=2, fp=1, fn=1, tn=1)


def test_grid():
    assert threshold_grid() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert threshold_grid(0.25) == [0.25, 0.5, 0.75]
    with pytest.raises(ValueError):
        threshold_grid(0.3)


def test_threshold_is_inclusive():
    probs = np.array([[0.5] * 7, [0.49] * 7])
    assert apply_thresholds(probs, [0.5] * 7).tolist() == [[1] * 7, [0] * 7]
    with pytest.raises(ValueError):
        apply_thresholds(probs, [0.5] * 6)


def test_selection_picks_separating_threshold():
    truth = np.zeros((6, 7), dtype=int)
    truth[:3, :] = 1
    probs = np.tile(np.array([[0.9], [0.8], [0.75], [0.3], [0.2], [0.1]]), (1, 7))
    # 0.4 .. 0.7 all separate perfectly; the smallest wins
    assert select_thresholds(probs, truth) == [0.4] * 7


def test_selection_all_ties_returns_smallest():
    truth = np.ones((4, 7), dtype=int)
    probs = np.full((4, 7), 0.95)
    assert select_thresholds(probs, truth) == [0.1] * 7


def brute_select(probs, truth, grid):
    out = []
    for j in range(probs.shape[1]):
        scores = [matthews_corrcoef(truth[:, j], (probs[:, j] >= th).astype(int)) for th in grid]
        best = max(scores)
        out.append(grid[next(i for i, s in enumerate(scores) if s >= best - 1e-12)])
    return out


@given(arrays(np.float64, (30, 7), elements=st.floats(0, 1)), st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_selection_matches_brute_force(probs, seed):
    truth = (np.random.default_rng(seed).random((30, 7)) < 0.5).astype(int)
    got = select_thresholds(probs, truth)
    assert got == brute_select(probs, truth, threshold_grid())


def test_format_and_validate():
    assert format_thresholds([0.1, 0.5, 0.9]) == "0.1, 0.5, 0.9"
    assert validate_thresholds([0.5] * 7) == [0.5] * 7
    with pytest.raises(ValueError):
        validate_thresholds([0.5] * 6)
    with pytest.raises(ValueError):
        validate_thresholds([0.0] + [0.5] * 6)
