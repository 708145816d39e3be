import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedipm.barrier import BlockBarrier
from fedipm.centralpath import (
    HyperParams,
    ModifiedProgram,
    PathState,
    Profile,
    analytic_center,
    centrality,
    duality_gap_bound,
    gamma,
    initialize,
    mu,
    path_step,
    potential_phi,
    weight_c,
)
from fedipm.exceptions import CenteringTooLoose, IterationCapExceeded, NonConvergence
from fedipm.problem import ProblemInstance, desk_lp, random_box_lp, vertex_enumeration
from fedipm.sketch import sketch_specs
from fedipm.solver import Mode, TRACE_COLUMNS, solve, write_trace_csv


def nonneg_program():
    problem = ProblemInstance(A=[[1.0]], b=[1.0], c=[1.0], blocks=[BlockBarrier.nonneg()], L=1.0, R=1.0)
    return ModifiedProgram(
        problem, problem.A, problem.b, problem.c, problem.blocks, [0], np.ones(1), np.ones(1), 0.1
    )


@pytest.fixture(scope="module")
def desk_exact():
    return solve(desk_lp(), 0.1, mode=Mode.EXACT)


def test_mu_plug_in():
    prog = nonneg_program()
    state = PathState(np.array([1.0]), np.array([2.0]), 1.0)
    assert mu(prog, state, 0) == pytest.approx([1.0])
    assert gamma(prog, state, 0) == pytest.approx(1.0)


def test_mu_zero_when_perfectly_centred():
    prog = nonneg_program()
    x = np.array([0.7])
    t = 0.3
    s = -t * BlockBarrier.nonneg().gradient(x)
    assert mu(prog, PathState(x, s, t), 0) == pytest.approx([0.0], abs=1e-15)


@pytest.mark.parametrize("delta", [0.5, 0.1, 1e-3])
def test_initial_point_is_delta_centred(delta):
    program, state = initialize(desk_lp(), delta)
    assert np.array_equal(program.A @ state.x, program.b) or np.allclose(program.A @ state.x, program.b, atol=1e-15)
    cen = centrality(program, state.x, state.s, state.t_tilde, HyperParams.practical(program.m))
    assert math.sqrt(np.sum(cen.gamma**2)) <= delta
    assert state.t_tilde == 1.0
    assert np.array_equal(state.s, program.c)
    assert program.blocks[-1].kind.value == "LOG-EXTRA"
    assert program.owners[-1] == max(program.problem.owners)


def test_initialize_rejects_loose_centering():
    p = desk_lp()
    loose = ProblemInstance(p.A, p.b, p.c, p.blocks, L=p.L, R=1e-3)
    with pytest.raises(CenteringTooLoose):
        initialize(loose, 0.1)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1])
def test_initialize_rejects_bad_delta(delta):
    with pytest.raises(ValueError):
        initialize(desk_lp(), delta)


def test_analytic_center_examples():
    x = analytic_center([BlockBarrier.interval(0, 1), BlockBarrier.interval(-2, 4), BlockBarrier.parabola_epigraph(3.0)])
    assert x[0] == pytest.approx(0.5) and x[1] == pytest.approx(1.0)
    assert x[2] == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(NonConvergence):
        analytic_center([BlockBarrier.nonneg()])


@given(gammas=st.lists(st.floats(0, 5), min_size=1, max_size=12), alpha=st.floats(1e-4, 1e-2))
def test_active_weight_identity(gammas, alpha):
    params = HyperParams.practical(len(gammas), alpha=alpha)
    g = np.array(gammas)
    c = weight_c(g, params)
    active = g >= params.gamma_threshold
    total = float(np.sum((c[active] * g[active]) ** 2))
    assert total <= 1 + 1e-12
    if active.all():
        assert total == pytest.approx(1.0, rel=1e-12)
    assert np.all(c[~active] == 0)


@given(gammas=st.lists(st.floats(0, 3), min_size=1, max_size=8))
def test_weights_with_external_normaliser(gammas):
    params = HyperParams.practical(len(gammas))
    g = np.array(gammas)
    from scipy.special import logsumexp

    split = len(g) // 2
    parts = [logsumexp(2 * params.lam * g[:split]) if split else -np.inf, logsumexp(2 * params.lam * g[split:])]
    assert np.allclose(weight_c(g, params, log_norm=float(np.logaddexp(*parts))), weight_c(g, params), rtol=1e-12)


def test_potential_phi():
    phi, log_phi = potential_phi([0.0, 0.0, 0.0], 2.0)
    assert phi == pytest.approx(3.0) and log_phi == pytest.approx(math.log(3))


def test_hyperparams_profiles():
    p = HyperParams.paper(4)
    lam = 2**16 * math.log(4)
    assert p.lam == pytest.approx(lam)
    assert p.alpha == pytest.approx(2**-20 / lam**2)
    assert p.xi == pytest.approx(2**-10 * p.alpha)
    assert p.gamma_threshold == pytest.approx(96 * math.sqrt(p.alpha))
    q = HyperParams.practical(4)
    assert q.lam == pytest.approx(math.log(4) + 1) and q.xi <= q.alpha <= 0.01
    assert HyperParams.for_profile("paper", 4) == p
    assert HyperParams.for_profile(Profile.PRACTICAL, 4) == q
    with pytest.raises(ValueError):
        HyperParams.practical(4, alpha=0.1)
    with pytest.raises(ValueError):
        HyperParams.practical(4, alpha=0.01, xi=0.02)


def test_schedule_is_exact_power():
    program, state = initialize(desk_lp(), 0.1)
    params = HyperParams.practical(program.m)
    rate = program.schedule_rate(params)
    cen = None
    for k in range(1, 301):
        state = path_step(program, state, params, cen=cen)
        assert state.t_tilde == rate**k


def test_trace_invariants_exact(desk_exact):
    res = desk_exact
    program = res.program
    params = res.params
    assert res.converged
    ts = [r.t_tilde for r in res.trace]
    assert all(a > b > 0 for a, b in zip(ts, ts[1:]))
    bnorm = np.abs(program.b).max()
    for r in res.trace:
        assert r.feasibility <= 1e-8 * (1 + bnorm)
    for r in res.trace[1:]:
        assert r.sum_alpha_sq <= 4 * params.alpha**2
    # gap certificate on the modified program, against the brute-force optimum
    bounds = [(0.0, 1.0), (0.0, 1.0), (0.0, math.inf)]
    opt, _ = vertex_enumeration(program.A, program.b, program.c, bounds)
    for r in res.trace:
        if r.gamma_max <= 1:
            assert r.modified_objective - opt <= duality_gap_bound(r.t_tilde, program.nu) + 1e-12
    assert res.trace[-1].t_tilde <= program.target_t()


def test_exact_meets_accuracy_postconditions(desk_exact):
    res = desk_exact
    p = res.program.problem
    assert res.objective <= p.ref_opt + p.L * p.R * 0.1
    assert p.infeasibility_l1(res.x) <= p.feasibility_tolerance(0.1)
    s = res.summary()
    for key in ("objective", "ax_minus_b_l1", "rounds", "uplink_words", "downlink_words", "t_tilde_final"):
        assert key in s
    assert s["uplink_words"] == 0 and s["downlink_words"] == 0


def test_identity_sketched_matches_exact(desk_exact):
    sk = solve(desk_lp(), 0.1, mode=Mode.SKETCHED, specs=sketch_specs("IDENTITY-DEBUG", 1, 1))
    a = np.array([r.csv_values() for r in desk_exact.trace], dtype=float)
    b = np.array([r.csv_values() for r in sk.trace], dtype=float)
    assert a.shape == b.shape
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


def test_sketched_b4d_objective_over_seeds():
    p = desk_lp()
    delta = 0.2
    objs = [solve(p, delta, mode="SKETCHED", specs=sketch_specs("AMS", 4, 1, seed=s)).objective for s in range(20)]
    assert np.median(objs) <= p.ref_opt + p.L * p.R * delta + 10 * p.L * p.R * delta


def test_sketched_mode_needs_specs():
    with pytest.raises(ValueError):
        solve(desk_lp(), 0.1, mode=Mode.SKETCHED)
    with pytest.raises(ValueError):
        solve(desk_lp(), 0.1, mode=Mode.FEDERATED)


def test_iteration_cap_attaches_best_iterate():
    with pytest.raises(IterationCapExceeded) as info:
        solve(desk_lp(), 0.1, max_iter=5)
    res = info.value.result
    assert res is not None and not res.converged and res.rounds == 5 and len(res.trace) == 6


def test_strict_profile_smoke():
    program, state = initialize(desk_lp(), 0.1)
    params = HyperParams.paper(program.m)
    for _ in range(10):
        state = path_step(program, state, params)
        assert state.diagnostics["sum_alpha_sq"] <= 4 * params.alpha**2
        assert all(blk.is_interior(state.x[sl]) for sl, blk in zip(program.slices(), program.blocks))


def test_random_box_lp_exact_solve():
    p = random_box_lp(5, 2, seed=3)
    res = solve(p, 0.1)
    assert res.objective <= p.ref_opt + p.L * p.R * 0.1
    assert p.infeasibility_l1(res.x) <= p.feasibility_tolerance(0.1)


def test_trace_csv_header_and_round_trip(desk_exact):
    text = write_trace_csv(desk_exact.trace[:3])
    lines = text.splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    first = lines[1].split(",")
    assert float(first[1]) == desk_exact.trace[0].t_tilde
