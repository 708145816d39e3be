import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedipm.barrier import (
    BarrierKind,
    BlockBarrier,
    barrier_eval,
    check_hessian_stability,
    check_self_concordance,
    dual_norm,
    local_norm,
)
from fedipm.exceptions import DomainViolation

unit = st.floats(min_value=1e-3, max_value=1 - 1e-3)


def interior_points():
    """(barrier, point) pairs drawn from the interior of every kind."""
    nonneg = st.floats(1e-3, 1e3).map(lambda x: (BlockBarrier.nonneg(), np.array([x])))
    extra = st.floats(1e-3, 1e3).map(lambda x: (BlockBarrier.log_extra(), np.array([x])))
    interval = st.tuples(st.floats(-5, 5), st.floats(0.1, 5), unit).map(
        lambda t: (BlockBarrier.interval(t[0], t[0] + t[1]), np.array([t[0] + t[2] * t[1]]))
    )
    parabola = st.tuples(st.floats(-3, 3), st.floats(1e-2, 10)).map(
        lambda t: (BlockBarrier.parabola_epigraph(), np.array([t[0], t[0] ** 2 + t[1]]))
    )
    capped = st.tuples(st.floats(-1, 1), unit).map(
        lambda t: (BlockBarrier.parabola_epigraph(4.0), np.array([t[0], t[0] ** 2 + t[1] * (4.0 - t[0] ** 2)]))
    )
    return st.one_of(nonneg, extra, interval, parabola, capped)


def test_nonneg_value_grad_hess():
    v, g, H = barrier_eval(BlockBarrier.nonneg(), [2.0])
    assert v == pytest.approx(-math.log(2))
    assert np.allclose(g, [-0.5])
    assert np.allclose(H, [[0.25]])


def test_interval_center_has_zero_gradient():
    assert barrier_eval(BlockBarrier.interval(0, 1), [0.5]).grad == pytest.approx([0.0])
    assert BlockBarrier.interval(0, 1).nu == 2


def test_parabola_at_zero_one():
    v, g, H = barrier_eval(BlockBarrier.parabola_epigraph(), [0.0, 1.0])
    assert v == pytest.approx(0.0)
    assert np.allclose(g, [0.0, -1.0])
    assert np.allclose(H, [[2.0, 0.0], [0.0, 1.0]])


def test_parabola_nu_uncapped_and_capped():
    assert BlockBarrier.parabola_epigraph().nu == 2
    assert BlockBarrier.parabola_epigraph(5.0).nu == 3


@pytest.mark.parametrize(
    "blk,x",
    [
        (BlockBarrier.nonneg(), [0.0]),
        (BlockBarrier.nonneg(), [-1.0]),
        (BlockBarrier.nonneg(), [1e-13]),
        (BlockBarrier.interval(0, 1), [1.0]),
        (BlockBarrier.parabola_epigraph(), [1.0, 1.0]),
        (BlockBarrier.parabola_epigraph(2.0), [0.0, 2.0]),
        (BlockBarrier.log_extra(), [0.0]),
    ],
)
def test_boundary_raises(blk, x):
    assert not blk.is_interior(np.array(x))
    with pytest.raises(DomainViolation):
        blk.evaluate(x)


def test_wrong_dimension_rejected():
    with pytest.raises((ValueError, DomainViolation)):
        BlockBarrier.parabola_epigraph().evaluate([1.0])


def test_norm_examples():
    B = BlockBarrier.nonneg()
    assert local_norm(B, [1.0], [0.0]) == 0.0
    assert local_norm(B, [1.0], [3.0]) == pytest.approx(3.0)
    assert dual_norm(B, [1.0], [3.0]) == pytest.approx(3.0)
    assert local_norm(B, [2.0], [1.0]) == pytest.approx(0.5)
    assert dual_norm(B, [2.0], [1.0]) == pytest.approx(2.0)


def _local_step(B, x, k, h=1e-5):
    """Coordinate step of length ``h`` in the local norm of ``x``."""
    e = np.zeros_like(x)
    e[k] = h / math.sqrt(B.hessian(x)[k, k])
    return e


@given(pt=interior_points())
def test_gradient_matches_finite_differences(pt):
    B, x = pt
    g = B.gradient(x)
    fd = np.empty_like(x)
    for k in range(x.size):
        e = _local_step(B, x, k)
        fd[k] = (B.value(x + e) - B.value(x - e)) / (2 * e[k])
    assert np.allclose(fd, g, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(g).max()))


@given(pt=interior_points())
def test_hessian_matches_finite_differences(pt):
    B, x = pt
    H = B.hessian(x)
    fd = np.empty_like(H)
    for k in range(x.size):
        e = _local_step(B, x, k)
        fd[:, k] = (B.gradient(x + e) - B.gradient(x - e)) / (2 * e[k])
    assert np.allclose(fd, H, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(H).max()))


@given(pt=interior_points())
def test_hessian_symmetric_positive_definite(pt):
    B, x = pt
    H = B.hessian(x)
    assert np.array_equal(H, H.T)
    assert np.linalg.eigvalsh(H).min() > 0


@given(pt=interior_points(), seed=st.integers(0, 2**32 - 1))
def test_dual_norm_identity(pt, seed):
    B, x = pt
    v = np.random.default_rng(seed).standard_normal(x.size)
    H = B.hessian(x)
    assert dual_norm(B, x, H @ v) == pytest.approx(local_norm(B, x, v), rel=1e-10)


@given(pt=interior_points(), seed=st.integers(0, 2**32 - 1))
def test_gradient_dual_norm_bounded_by_sqrt_nu(pt, seed):
    B, x = pt
    assert dual_norm(B, x, B.gradient(x)) <= math.sqrt(B.nu) * (1 + 1e-9)


def test_self_concordance_nonneg_example():
    third, bound, ok = check_self_concordance(BlockBarrier.nonneg(), [1.0], [1.0])
    assert abs(third) == pytest.approx(2.0, rel=1e-6)
    assert bound == pytest.approx(2.0)
    assert ok


def test_self_concordance_zero_direction():
    third, bound, ok = check_self_concordance(BlockBarrier.interval(0, 1), [0.5], [0.0])
    assert third == 0.0 and bound == 0.0 and ok


def test_self_concordance_parabola_matches_analytic():
    # phi = -ln(z - y^2); along u=(1,0) at (0,1): u^T H(y,1) u = (2(1-y^2)+4y^2)/(1-y^2)^2 has zero derivative at y=0
    third, _, ok = check_self_concordance(BlockBarrier.parabola_epigraph(), [0.0, 1.0], [1.0, 0.0])
    assert third == pytest.approx(0.0, abs=1e-4)
    assert ok
    # along u=(0,1): u^T H u = 1/(z - y^2)^2, derivative -2/(z)^3 at (0,1)
    third, _, _ = check_self_concordance(BlockBarrier.parabola_epigraph(), [0.0, 1.0], [0.0, 1.0])
    assert third == pytest.approx(-2.0, abs=1e-4)


@given(pt=interior_points(), seed=st.integers(0, 2**32 - 1))
def test_self_concordance_random_probes(pt, seed):
    B, x = pt
    u = np.random.default_rng(seed).standard_normal(x.size)
    # keep the probe points interior: scale u into a tenth of the Dikin ellipsoid
    u = u * 0.1 / max(local_norm(B, x, u), 1e-300)
    step = 1e-4
    assert check_self_concordance(B, x, u, step_h=step).ok


def test_hessian_stability_examples():
    lo, hi, ok, r = check_hessian_stability(BlockBarrier.nonneg(), [1.0], [1.0])
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0) and ok and r == 0
    lo, hi, ok, r = check_hessian_stability(BlockBarrier.nonneg(), [1.0], [1.5])
    assert r == pytest.approx(0.5)
    assert lo == pytest.approx(1 / 2.25)
    assert ok


def test_hessian_stability_reports_precondition():
    _, _, ok, r = check_hessian_stability(BlockBarrier.nonneg(), [1.0], [3.0])
    assert r >= 1 and not ok


@given(pt=interior_points(), seed=st.integers(0, 2**32 - 1), radius=st.floats(0.0, 0.9))
def test_hessian_stability_random_pairs(pt, seed, radius):
    B, x = pt
    u = np.random.default_rng(seed).standard_normal(x.size)
    n = local_norm(B, x, u)
    if n == 0:
        return
    y = x + radius * u / n
    assert check_hessian_stability(B, x, y).ok


def test_max_step_stops_at_boundary():
    B = BlockBarrier.interval(0, 1)
    assert B.max_step([0.5], [1.0]) == pytest.approx(0.5)
    assert B.max_step([0.5], [0.0]) == math.inf


@pytest.mark.parametrize(
    "blk",
    [BlockBarrier.nonneg(), BlockBarrier.interval(-1, 2), BlockBarrier.parabola_epigraph(3.0), BlockBarrier.log_extra()],
)
def test_dict_round_trip(blk):
    assert BlockBarrier.from_dict(blk.to_dict()) == blk


def test_kind_parse_accepts_underscores():
    assert BarrierKind.parse("parabola_epigraph") is BarrierKind.PARABOLA_EPIGRAPH


@pytest.mark.parametrize("params", [(1.0, 0.0), (0.0, 0.0)])
def test_interval_rejects_empty(params):
    with pytest.raises(ValueError):
        BlockBarrier.interval(*params)
