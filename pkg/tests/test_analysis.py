import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuselab.analysis import (
    SobolSpace, estimate_noise_variance, kfold_cv, kfold_partition, mse, pearson_matrix, r_squared,
    screen_features, sobol_indices,
)
from fuselab.dataset import MixedDataset
from fuselab.errors import DomainError
from fuselab.gp import GpConfig


def _ds(X, y):
    return MixedDataset(X, np.zeros((len(y), 0), int), y, tuple(f"x{i}" for i in range(X.shape[1])))


def test_metric_examples():
    assert mse([1, 2, 3], [1, 2, 3]) == 0.0
    assert mse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5), rel=1e-15)
    assert mse([0, 0], [3, 4], squared=True) == pytest.approx(12.5, rel=1e-15)
    with pytest.raises(DomainError):
        mse([1, 2], [1])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(-50, 50))
def test_metric_homogeneous_and_nonneg(values, c):
    y = np.array(values)
    yhat = y[::-1]
    assert mse(c * y, c * yhat) == pytest.approx(abs(c) * mse(y, yhat), rel=1e-9, abs=1e-9)
    assert mse(y, yhat) >= 0
    assert mse(y, y) == 0


def test_r2_examples(rng):
    y = rng.normal(size=20)
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full(20, y.mean())) == pytest.approx(0.0, abs=1e-15)
    yhat = y + rng.normal(scale=0.3, size=20)
    ybar = sum(y) / 20
    ss_tot = sum((v - ybar) ** 2 for v in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, yhat))
    assert r_squared(y, yhat) == pytest.approx(1 - ss_res / ss_tot, abs=1e-12)
    with pytest.raises(DomainError):
        r_squared([1, 1, 1], [1, 2, 3])


def test_partition_loo_and_sizes():
    folds = kfold_partition(10, 10, seed=0)
    assert [len(f) for f in folds] == [1] * 10
    folds = kfold_partition(270, 5, seed=3)
    assert [len(f) for f in folds] == [54] * 5
    assert sorted(np.concatenate(folds).tolist()) == list(range(270))
    with pytest.raises(DomainError):
        kfold_partition(3, 5)


@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 1000))
def test_partition_invariants(n, k, seed):
    if n < k:
        return
    folds = kfold_partition(n, k, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))


def test_cv_reproducible_and_straddles_noise():
    mins, maxs = [], []
    texts = []
    for s in range(3):
        r = np.random.default_rng(s)
        X = r.random((80, 2))
        f = np.sin(3 * X[:, 0]) + X[:, 1]
        y = (f - f.mean()) / f.std() + r.normal(0, 0.1, 80)
        rep = kfold_cv(_ds(X, y), 5, GpConfig(n_starts=2), seed=s, squared=True, with_noise=False)
        raw = [m for m in rep.fold_metric_raw if m is not None]
        mins.append(min(raw))
        maxs.append(max(raw))
        if s == 0:
            texts.append(repr(rep.to_dict()))
            again = kfold_cv(_ds(X, y), 5, GpConfig(n_starts=2), seed=s, squared=True, with_noise=False)
            texts.append(repr(again.to_dict()))
    assert texts[0] == texts[1]
    assert min(mins) < 0.01 * 3 and max(maxs) > 0.01 / 3


def test_cv_eval_mask_only_scores_masked(rng):
    X = rng.random((30, 2))
    y = X[:, 0] + X[:, 1]
    mask = np.zeros(30, bool)
    mask[:10] = True
    rep = kfold_cv(_ds(X, y), 5, GpConfig(n_starts=1), seed=0, eval_mask=mask, with_noise=False)
    assert sum(rep.fold_sizes) == 10


def test_noise_variance_scale_invariant():
    r = np.random.default_rng(7)
    X = r.random((60, 2))
    y = np.cos(2 * X[:, 0]) + X[:, 1] + r.normal(0, 0.05, 60)
    a = estimate_noise_variance(_ds(X, y), GpConfig(n_starts=2), seed=1)
    b = estimate_noise_variance(_ds(X, 10 * y), GpConfig(n_starts=2), seed=1)
    assert b == pytest.approx(a, rel=1e-6)


def test_noise_variance_noise_free():
    X = np.linspace(0, 3, 30)[:, None]
    assert estimate_noise_variance(_ds(X, np.sin(X[:, 0]))) <= 1e-4


def test_pearson_examples(rng):
    x = rng.normal(size=30)
    names, M = pearson_matrix({"x": x, "y": 2 * x + 3, "z": -x})
    assert names == ["x", "y", "z"]
    assert M[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert M[0, 2] == pytest.approx(-1.0, abs=1e-12)
    assert np.all(np.diag(M) == 1.0)
    np.testing.assert_array_equal(M, M.T)
    a, b = rng.normal(size=50), rng.normal(size=50)
    cov = np.sum((a - a.mean()) * (b - b.mean()))
    ref = cov / np.sqrt(np.sum((a - a.mean()) ** 2) * np.sum((b - b.mean()) ** 2))
    assert pearson_matrix({"a": a, "b": b})[1][0, 1] == pytest.approx(ref, abs=1e-12)
    with pytest.raises(DomainError, match="'c'"):
        pearson_matrix({"a": a, "c": np.ones(50)})


SPACE4 = SobolSpace(tuple((f"x{i}", -1.0, 1.0) for i in range(1, 5)))


def _paper_fn(Xq, Tc):
    x1, x2, x3, x4 = Xq.T
    return x1**2 + x2**2 + x1 * x2 + x3**2 + 1e-3 * x4**2


def test_sobol_closed_form_values():
    # variance decomposition of the function above over (-1, 1)^4
    var_sq = 4.0 / 45.0
    V = 3 * var_sq + 1.0 / 9.0 + 1e-6 * var_sq
    main = np.array([var_sq, var_sq, var_sq, 1e-6 * var_sq]) / V
    total = np.array([var_sq + 1 / 9, var_sq + 1 / 9, var_sq, 1e-6 * var_sq]) / V
    rep = sobol_indices(_paper_fn, SPACE4, 8192, seed=0)
    np.testing.assert_allclose(rep.main, main, atol=0.02)
    np.testing.assert_allclose(rep.total, total, atol=0.02)
    assert main[0] == pytest.approx(0.2353, abs=5e-5) and total[0] == pytest.approx(0.5294, abs=5e-5)


def test_sobol_additive_main_equals_total():
    sp = SobolSpace((("a", 0.0, 1.0), ("b", 0.0, 1.0)))
    rep = sobol_indices(lambda X, T: X[:, 0] + 2 * X[:, 1], sp, 4096, seed=1)
    np.testing.assert_allclose(rep.main, rep.total, atol=0.02)
    assert np.all(np.abs(rep.main - rep.total) <= 2 * np.hypot(rep.main_se, rep.total_se) + 1e-12)


def test_sobol_properties():
    rep = sobol_indices(_paper_fn, SPACE4, 2048, seed=3)
    assert rep.main.sum() <= 1 + 0.05
    assert np.all(rep.total >= rep.main - 0.05)
    assert np.all(rep.main >= -0.05) and np.all(rep.total <= 1.05)


def test_sobol_deterministic():
    a = sobol_indices(_paper_fn, SPACE4, 512, seed=11)
    b = sobol_indices(_paper_fn, SPACE4, 512, seed=11)
    np.testing.assert_array_equal(a.main, b.main)


def test_sobol_categorical_levels():
    sp = SobolSpace((("x", 0.0, 1.0),), (("t", ("a", "b", "c")),))
    seen = set()

    def f(X, T):
        seen.update(T[:, 0].tolist())
        return X[:, 0] + np.array([0.0, 0.0, 5.0])[T[:, 0]]

    rep = sobol_indices(f, sp, 1024, seed=0)
    assert seen == {0, 1, 2}
    assert rep.main[1] > rep.main[0]


def test_sobol_zero_variance():
    with pytest.raises(DomainError):
        sobol_indices(lambda X, T: np.zeros(len(X)), SPACE4, 256)


def test_screening_rule():
    rep = sobol_indices(_paper_fn, SPACE4, 4096, seed=0)
    kept, dropped = screen_features(rep, 0.05)
    assert kept == ["x1", "x2", "x3"] and dropped == ["x4"]
