import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmcalib.simulator import (BUILTIN, CachedSimulator, InputBounds, SimulatorError,
                               SimulatorSpec, TimeGrid, TimeSeries, default_grid, eval_external,
                               eval_testfunc, log_delta, target_from_point)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid((1.0,))
    with pytest.raises(ValueError):
        TimeGrid((1.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        TimeGrid((1.0, math.inf))
    g = TimeGrid((0.1, 0.2))
    assert len(g) == 2


def test_series_length_must_match_grid():
    g = TimeGrid((1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        TimeSeries(g, [1.0, 2.0])
    with pytest.raises(ValueError):
        TimeSeries(g, [1.0, math.nan, 2.0])


def test_default_grid():
    g = default_grid()
    t = g.asarray()
    assert len(g) == 101
    assert t[0] == 0.5 and t[-1] == 2.5
    assert t[25] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(np.diff(t), 0.02, atol=1e-12)


# hand evaluations of sin(10 pi t)/((2 x1 + 1) t) + |t - 1|^(4 x2 + 2)
@pytest.mark.parametrize("x, t, expected", [
    ((0.5, 0.5), 0.5, 0.0625),
    ((0.0, 0.0), 1.5, 0.25),
    ((1.0, 1.0), 0.75, -1 / 2.25 + 0.25 ** 6),
])
def test_testfunc_hand_values(x, t, expected):
    g = eval_testfunc(x, TimeGrid((t, t + 1.0)))
    assert g.values[0] == pytest.approx(expected, abs=1e-12)


def test_testfunc_rejects_bad_input():
    with pytest.raises(ValueError):
        eval_testfunc((0.5, 0.5, 0.5), default_grid())
    with pytest.raises(ValueError):
        eval_testfunc((0.5, 0.5), TimeGrid((0.0, 1.0)))
    with pytest.raises(ValueError):
        eval_testfunc((1.5, 0.5), default_grid())


def test_builtin_spec_checks():
    with pytest.raises(ValueError):
        SimulatorSpec(BUILTIN, d=3)
    with pytest.raises(ValueError):
        SimulatorSpec(BUILTIN, grid=TimeGrid((-1.0, 1.0)))


@given(unit, unit)
def test_testfunc_deterministic(a, b):
    g1 = eval_testfunc((a, b), default_grid()).values
    g2 = eval_testfunc((a, b), default_grid()).values
    assert g1.tobytes() == g2.tobytes()


@given(unit, unit)
@settings(max_examples=25)
def test_target_self_consistency(a, b):
    spec = SimulatorSpec()
    g0 = target_from_point((a, b), spec)
    assert np.linalg.norm(eval_testfunc((a, b), spec.grid).values - g0.values) == 0.0


def test_target_reference_point():
    g0 = target_from_point((0.5, 0.5), SimulatorSpec())
    assert g0.values[0] == pytest.approx(0.0625, abs=1e-12)


def test_bounds_roundtrip():
    b = InputBounds((-1.0, 10.0), (1.0, 20.0), ("a", "b"))
    np.testing.assert_allclose(b.descale([0.0, 1.0]), [-1.0, 20.0])
    np.testing.assert_allclose(b.scale(b.descale([0.25, 0.75])), [0.25, 0.75])
    with pytest.raises(ValueError):
        InputBounds((1.0,), (1.0,))


def test_log_delta_floor():
    assert log_delta(0.0) == pytest.approx(math.log(1e-300))
    assert log_delta(math.e) == pytest.approx(1.0)


def test_cache_never_reruns():
    sim = CachedSimulator(SimulatorSpec())
    X = np.array([[0.1, 0.2], [0.3, 0.4], [0.1, 0.2]])
    Y = sim.evaluate_batch(X)
    assert sim.n_runs == 2
    np.testing.assert_array_equal(Y[0], Y[2])
    sim.evaluate_batch(X[:2])
    assert sim.n_runs == 2
    assert (0.3, 0.4) in sim


# external adapter against scripted mock simulators

def test_external_zero_mock(external):
    g = eval_external((0.3, 0.7), external("zeros", L=6))
    assert len(g) == 6 and np.all(g.values == 0.0)


def test_external_target_zero(external):
    g0 = target_from_point((0.1, 0.9), external("zeros", L=4))
    assert np.all(g0.values == 0.0)


def test_external_identity_roundtrip(external):
    spec = external("identity", L=3, d=3)
    x = (0.1, 1 / 3, 0.987654321012345)
    g = eval_external(x, spec)
    np.testing.assert_array_equal(g.values, np.array(x))


@pytest.mark.parametrize("x, expected", [((0.0, 0.0), (-2.0, 5.0)), ((1.0, 1.0), (3.0, 7.5))])
def test_external_descaling_endpoints(external, x, expected):
    spec = external("identity", L=2, lower=(-2.0, 5.0), upper=(3.0, 7.5))
    np.testing.assert_array_equal(eval_external(x, spec).values, expected)


def test_wire_format(external, tmp_path):
    log = tmp_path / "stdin.txt"
    x = (0.1, 2 / 3)
    eval_external(x, external("record", L=3, extra=log))
    line = log.read_text()
    assert line.endswith("\n") and line.count("\n") == 1
    body = line.rstrip("\n")
    assert " " not in body
    parts = body.split(",")
    assert len(parts) == 2
    assert [float(p) for p in parts] == list(x)
    assert len(parts[1].replace(".", "").lstrip("0")) >= 17


def test_run_ids_unique(external, tmp_path):
    log = tmp_path / "ids.txt"
    spec = external("runid", L=2, extra=log)
    for x in [(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)]:
        eval_external(x, spec)
    ids = log.read_text().split()
    assert len(ids) == 3 and len(set(ids)) == 3 and all(ids)


def test_constant_mock(external):
    g = eval_external((0.5, 0.5), external("constant", L=4, extra=2.5))
    np.testing.assert_array_equal(g.values, 2.5)


@pytest.mark.parametrize("mode, msg", [
    ("fail", "status 3"),
    ("short", "expected 5"),
    ("garbage", "non-numeric"),
    ("nan", "non-finite"),
])
def test_external_errors_carry_point(external, mode, msg):
    x = (0.25, 0.75)
    with pytest.raises(SimulatorError, match=msg) as info:
        eval_external(x, external(mode, L=5))
    assert tuple(info.value.x) == x


def test_external_timeout(external):
    spec = external("slow", L=2, extra=5, timeout=0.5)
    with pytest.raises(SimulatorError, match="timed out"):
        eval_external((0.5, 0.5), spec)


def test_slow_mock_within_timeout(external):
    g = eval_external((0.5, 0.5), external("slow", L=2, extra=0.05, timeout=30))
    assert np.all(g.values == 0)


def test_missing_executable():
    spec = SimulatorSpec("external-exec", 1, TimeGrid((1.0, 2.0)), exec_path="/nonexistent/sim")
    with pytest.raises(SimulatorError, match="cannot start"):
        eval_external((0.5,), spec)


def test_external_needs_exec_path():
    with pytest.raises(ValueError):
        SimulatorSpec("external-exec", 2, TimeGrid((1.0, 2.0)))


def test_parallel_batch_keeps_order(external):
    spec = external("sum", L=3, parallelism=4)
    X = np.random.default_rng(1).random((12, 2))
    par = CachedSimulator(spec, jobs=4).evaluate_batch(X)
    ser = CachedSimulator(spec, jobs=1).evaluate_batch(X)
    np.testing.assert_array_equal(par, ser)
    np.testing.assert_allclose(par[:, 0], X.sum(axis=1), rtol=1e-15)
