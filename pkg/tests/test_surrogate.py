import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmcalib.design import latin_hypercube
from hmcalib.surrogate import (FitOptions, GpHyperParams, corr, deviance, fit, predict,
                               predict_batch)
from oracles import naive_predict, random_smooth


def smooth(X):
    return np.sin(3 * X).sum(axis=1) + X[:, 0] ** 2


def test_corr_values():
    p = GpHyperParams((0.0,), 2.0)
    assert corr(p, [0.3], [0.3]) == 1.0
    assert corr(p, [0.0], [1.0]) == pytest.approx(math.exp(-1), abs=1e-15)
    vals = [corr(GpHyperParams((t,), 1.95), [0.1], [0.6]) for t in (-2, -1, 0, 1, 2, 3)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert 0 < vals[-1] < 1


def test_two_point_closed_form():
    # X = {0.2, 0.8}, y = {1, 3}, theta = 1 (log10), p = 2, no nugget
    X = np.array([[0.2], [0.8]])
    y = np.array([1.0, 3.0])
    opts = FitOptions(power=2.0, nugget=0.0)
    m = fit(X, y, opts, theta=(1.0,))
    rho = math.exp(-10 * 0.36)
    # R = [[1, rho], [rho, 1]]; by symmetry mu is the mean of y
    mu = 2.0
    # (y - mu)' R^-1 (y - mu) / n = 2 (1 + rho) / (1 - rho^2) / 2
    sigma2 = 1 / (1 - rho)
    assert m.mu == pytest.approx(mu, abs=1e-12)
    assert m.sigma2 == pytest.approx(sigma2, rel=1e-12)
    xs = 0.5
    r1, r2 = math.exp(-10 * 0.09), math.exp(-10 * 0.09)
    # R^-1 (y - mu) = [-1, 1] / (1 - rho); the r terms cancel at the midpoint
    mean = mu + (r1 * -1 + r2 * 1) / (1 - rho)
    quad = (r1 ** 2 + r2 ** 2 - 2 * rho * r1 * r2) / (1 - rho ** 2)
    pred = predict(m, [xs])
    assert pred.mean == pytest.approx(mean, abs=1e-12)
    assert pred.sd == pytest.approx(math.sqrt(sigma2 * (1 - quad)), rel=1e-10)
    off = predict(m, [0.3])
    ra, rb = math.exp(-10 * 0.01), math.exp(-10 * 0.25)
    assert off.mean == pytest.approx(mu + (rb - ra) / (1 - rho), abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_naive_inverse_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    d = int(rng.integers(1, 4))
    X = rng.random((n, d))
    y = rng.normal(size=n)
    m = fit(X, y, rng=np.random.default_rng(seed))
    xs = rng.random((20, d))
    mean, sd = predict_batch(m, xs)
    om, osd, mu, s2 = naive_predict(X, y, m.params.theta, m.params.power, m.nugget, xs)
    assert m.mu == pytest.approx(mu, abs=1e-8)
    assert m.sigma2 == pytest.approx(s2, rel=1e-8)
    np.testing.assert_allclose(mean, om, atol=1e-8)
    np.testing.assert_allclose(sd, osd, atol=1e-8)


def test_interpolation_smooth_responses():
    rng = np.random.default_rng(2024)
    for _ in range(12):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(3, 21))
        X = latin_hypercube(n, d, rng)
        y = random_smooth(rng, d)(X)
        m = fit(X, y, rng=rng)
        mean, _ = predict_batch(m, X)
        assert np.max(np.abs(mean - y)) <= 1e-6 * np.ptp(y)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=15, deadline=None)
def test_variance_nonnegative(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    X = latin_hypercube(int(rng.integers(3, 15)), d, rng)
    m = fit(X, smooth(X), rng=rng)
    xs = np.vstack([rng.random((200, d)), X, X + 1e-9 * (X < 0.5)])
    mean, sd = predict_batch(m, xs)
    assert np.all(sd >= 0) and np.all(np.isfinite(sd)) and np.all(np.isfinite(mean))
    # pre-clamp negatives stay tiny
    from scipy.linalg import solve_triangular
    from hmcalib.surrogate import corr_matrix
    r = corr_matrix(xs, m.X, m.params.theta, m.params.power)
    v = solve_triangular(m.chol, r.T, lower=True)
    raw = m.sigma2 * (1 - np.sum(v * v, axis=0))
    assert raw.min() > -1e-8 * m.sigma2


def test_training_points_have_small_sd():
    rng = np.random.default_rng(1)
    X = latin_hypercube(10, 2, rng)
    m = fit(X, smooth(X), rng=rng)
    _, sd = predict_batch(m, X)
    assert np.all(sd <= 1e-3 * math.sqrt(m.sigma2))


def test_far_field_reverts_to_prior():
    X = np.array([[0.0], [0.05], [0.1]])
    m = fit(X, np.array([1.0, 2.0, 0.5]), FitOptions(power=2.0), theta=(3.0,))
    p = predict(m, [1.0])
    assert p.mean == pytest.approx(m.mu, abs=1e-12)
    assert p.sd == pytest.approx(math.sqrt(m.sigma2), rel=1e-12)


def test_grid_search_oracle_d1():
    opts = FitOptions()
    lo, hi = opts.theta_bounds
    grid = np.linspace(lo, hi, 200)
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        X = latin_hypercube(4, 1, rng)
        y = np.sin(6 * X[:, 0]) + 0.2 * rng.normal(size=4)
        m = fit(X, y, opts, rng=rng)
        best_grid = min(deviance(X, y, (t,), opts) for t in grid)
        assert m.deviance <= best_grid + 1e-6


def test_optimum_not_worse_than_starts():
    rng = np.random.default_rng(7)
    X = latin_hypercube(12, 2, rng)
    y = smooth(X)
    opts = FitOptions()
    m = fit(X, y, opts, rng=np.random.default_rng(3))
    lo, hi = opts.theta_bounds
    starts = lo + (hi - lo) * latin_hypercube(10, 2, np.random.default_rng(3))
    assert all(m.deviance <= deviance(X, y, s, opts) for s in starts)


def test_deviance_definition():
    rng = np.random.default_rng(4)
    X = rng.random((6, 2))
    y = rng.normal(size=6)
    theta = (0.5, -0.3)
    _, _, _, s2 = naive_predict(X, y, theta, 1.95, 1e-8, [])
    R = np.array([[math.prod(math.exp(-(10 ** t) * abs(a - b) ** 1.95)
                             for t, a, b in zip(theta, X[i], X[j])) for j in range(6)]
                  for i in range(6)]) + 1e-8 * np.eye(6)
    expected = 6 * math.log(s2) + np.linalg.slogdet(R)[1]
    assert deviance(X, y, theta) == pytest.approx(expected, rel=1e-9)


def test_translation_invariance():
    rng = np.random.default_rng(8)
    X = latin_hypercube(9, 2, rng)
    y = smooth(X)
    m1 = fit(X, y, rng=np.random.default_rng(1))
    m2 = fit(X, y + 17.0, rng=np.random.default_rng(1))
    xs = rng.random((50, 2))
    a, sa = predict_batch(m1, xs)
    b, sb = predict_batch(m2, xs)
    np.testing.assert_allclose(b - a, 17.0, atol=1e-7)
    np.testing.assert_allclose(sb, sa, rtol=1e-6, atol=1e-10)


def test_continuity():
    rng = np.random.default_rng(5)
    X = latin_hypercube(10, 2, rng)
    m = fit(X, smooth(X), rng=rng)
    for x in rng.random((10, 2)) * 0.98 + 0.01:
        a = predict(m, x).mean
        b = predict(m, x + 1e-9).mean
        assert abs(a - b) < 1e-5


def test_constant_response_degenerate():
    X = np.array([[0.1, 0.2], [0.5, 0.5], [0.9, 0.1]])
    m = fit(X, np.full(3, 4.2))
    assert m.degenerate and m.sigma2 == 0.0
    mean, sd = predict_batch(m, np.random.default_rng(0).random((5, 2)))
    assert np.all(mean == 4.2) and np.all(sd == 0.0)


def test_duplicates_are_dropped():
    X = np.array([[0.1], [0.5], [0.5], [0.9]])
    y = np.array([1.0, 2.0, 2.0, 0.0])
    m = fit(X, y, rng=np.random.default_rng(0))
    assert m.n == 3


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        fit(np.array([[0.1], [0.1]]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        fit(np.array([[0.1], [0.2]]), np.array([1.0, np.nan]))


def test_nugget_escalation_on_clustered_points():
    X = np.array([[0.5], [0.5 + 1e-12], [0.1]])
    y = np.array([1.0, 1.0 + 1e-12, 0.0])
    m = fit(X, y, FitOptions(power=2.0, nugget=0.0), theta=(-2.0,))
    assert m.nugget_escalated and m.nugget >= 1e-8
    R = m.correlation_matrix()
    np.testing.assert_allclose(np.diag(R), 1 + m.nugget)
    np.testing.assert_allclose(m.chol @ m.chol.T, R, rtol=1e-8, atol=1e-12)


def test_singular_beyond_cap_raises():
    from hmcalib.surrogate import FitError
    X = np.array([[0.5], [0.5 + 1e-12], [0.1]])
    y = np.array([1.0, 2.0, 0.0])
    with pytest.raises(FitError):
        fit(X, y, FitOptions(power=2.0, nugget=0.0, nugget_cap=0.0), theta=(-2.0,))


def test_factor_reconstructs_R():
    rng = np.random.default_rng(12)
    X = latin_hypercube(15, 3, rng)
    m = fit(X, smooth(X), rng=rng)
    R = m.correlation_matrix()
    np.testing.assert_allclose(m.chol @ m.chol.T, R, rtol=1e-8, atol=1e-14)


def test_batch_matches_single_and_order():
    rng = np.random.default_rng(6)
    X = latin_hypercube(8, 2, rng)
    m = fit(X, smooth(X), rng=rng)
    xs = rng.random((5000, 2))
    mean, sd = predict_batch(m, xs)
    assert mean.shape == (5000,)
    for i in (0, 123, 4999):
        p = predict(m, xs[i])
        assert p.mean == pytest.approx(mean[i], abs=1e-14)
        assert p.sd == pytest.approx(sd[i], abs=1e-14)


def test_report_text():
    rng = np.random.default_rng(0)
    X = latin_hypercube(5, 1, rng)
    text = fit(X, smooth(X), rng=rng).report()
    for key in ("n", "mu", "sigma2", "theta", "nugget", "deviance"):
        assert key in text
