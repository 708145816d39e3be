import json

import numpy as np
import pytest

from fedipm.barrier import BlockBarrier
from fedipm.erm import default_z_max, erm_coefficients, erm_objective, erm_to_conic
from fedipm.exceptions import ProblemFormatError, SizeTooLarge, UnsupportedLoss
from fedipm.problem import (
    ProblemInstance,
    desk_lp,
    dump_problem,
    load_problem,
    model_gap_instance,
    problem_from_dict,
    problem_to_dict,
    random_box_lp,
    save_problem,
    vertex_enumeration,
)
from fedipm.solver import solve


def test_desk_lp_oracle():
    opt, x = vertex_enumeration(desk_lp())
    assert opt == 0.0
    assert np.allclose(x, [0.0, 1.0])


def test_vertex_enumeration_raw_arguments():
    opt, x = vertex_enumeration([[1.0, 1.0, 1.0]], [2.0], [-1.0, -2.0, 0.0], [(0, 1)] * 3)
    assert opt == pytest.approx(-3.0)
    assert np.allclose(x, [1.0, 1.0, 0.0])


def test_vertex_enumeration_size_cap():
    A = np.ones((1, 17))
    with pytest.raises(SizeTooLarge):
        vertex_enumeration(A, [1.0], np.ones(17), [(0, 1)] * 17)


def test_vertex_enumeration_infeasible():
    with pytest.raises(ValueError):
        vertex_enumeration([[1.0, 1.0]], [5.0], [1.0, 0.0], [(0, 1), (0, 1)])


@pytest.mark.parametrize("seed", range(5))
def test_random_box_lp_is_well_formed(seed):
    p = random_box_lp(6, 3, seed, clients=2)
    assert p.A.shape == (3, 6) and np.linalg.matrix_rank(p.A) == 3
    assert sorted(set(p.owners)) == [0, 1]
    assert p.L >= np.linalg.norm(p.c) - 1e-15
    assert p.ref_opt == vertex_enumeration(p)[0]


def test_random_box_lp_is_deterministic():
    a, b = random_box_lp(5, 2, 11), random_box_lp(5, 2, 11)
    assert dump_problem(a) == dump_problem(b)


@pytest.mark.parametrize("problem", [desk_lp(), random_box_lp(5, 2, 1, clients=3), model_gap_instance()])
def test_json_round_trip_is_byte_identical(problem, tmp_path):
    path = tmp_path / "p.json"
    save_problem(problem, path)
    loaded = load_problem(path)
    assert dump_problem(loaded) == path.read_text()
    assert np.array_equal(loaded.A, problem.A)
    assert loaded.owners == problem.owners


def test_json_round_trip_erm():
    p = erm_to_conic("squared", [[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]], [0.1, 0.2, 0.3], clients=2)
    assert dump_problem(problem_from_dict(json.loads(dump_problem(p)))) == dump_problem(p)


def _mutate(**changes):
    data = problem_to_dict(desk_lp())
    data.update(changes)
    return data


@pytest.mark.parametrize(
    "data",
    [
        _mutate(version=2),
        _mutate(m=3),
        _mutate(b=[1.0, 2.0]),
        _mutate(c=[1.0]),
        _mutate(L=0.5),
        _mutate(R=-1.0),
        _mutate(A=[[1.0, float("nan")]]),
        {"version": 1},
        _mutate(blocks=[{"client": 0, "n_i": 2, "barrier": {"kind": "INTERVAL", "params": [0, 1], "nu": 2}}] * 2),
    ],
)
def test_problem_format_errors(data):
    with pytest.raises(ProblemFormatError):
        problem_from_dict(data)


def test_rank_deficient_matrix_rejected():
    with pytest.raises(ProblemFormatError):
        ProblemInstance([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0], [1.0, 0.0],
                        [BlockBarrier.interval(0, 1)] * 2, L=1.0, R=2.0)


def test_more_rows_than_columns_rejected():
    with pytest.raises(ProblemFormatError):
        ProblemInstance(np.eye(3)[:, :2], [1.0, 1.0, 1.0], [1.0, 0.0],
                        [BlockBarrier.interval(0, 1)] * 2, L=1.0, R=2.0)


def test_feasibility_tolerance_formula():
    p = desk_lp()
    assert p.feasibility_tolerance(0.1) == pytest.approx(3 * 0.1 * (np.sqrt(2) * 2 + 1))


def test_client_columns():
    cols = random_box_lp(5, 2, 0, clients=2).client_columns()
    assert list(cols) == [0, 1]
    assert np.array_equal(np.concatenate(list(cols.values())), np.arange(5))


# -- least-squares reduction -----------------------------------------------


def test_erm_constraint_layout():
    a = np.array([[2.0, -1.0]])
    p = erm_to_conic("squared", a, [0.5], x_bound=1.0)
    assert np.array_equal(p.A, [[2.0, -1.0, -1.0, 0.0]])
    assert np.array_equal(p.b, [-0.5])
    assert np.array_equal(p.c, [0.0, 0.0, 0.0, 1.0])
    kinds = [blk.kind.value for blk in p.blocks]
    assert kinds == ["INTERVAL", "INTERVAL", "PARABOLA-EPIGRAPH"]
    assert p.blocks[-1].params[0] == default_z_max(a, np.array([0.5]), 1.0)[0]
    assert p.L == 1.0


def test_erm_cap_exceeds_every_attainable_loss():
    rng = np.random.default_rng(4)
    X, b = rng.normal(size=(6, 3)), rng.normal(size=6)
    caps = default_z_max(X, b, 2.0)
    for _ in range(200):
        x = rng.uniform(-2, 2, size=3)
        assert np.all((X @ x + b) ** 2 < caps)


def test_erm_rejects_empty_and_unknown_losses():
    with pytest.raises(ValueError):
        erm_to_conic("squared", np.zeros((0, 2)))
    with pytest.raises(ValueError):
        erm_to_conic([], [[1.0]])
    with pytest.raises(UnsupportedLoss):
        erm_to_conic(["squared", "hinge"], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        erm_to_conic("squared", [[1.0]], x_bound=0.0)


def test_erm_two_point_least_squares_matches_normal_equations():
    X = np.array([[1.0], [2.0]])
    y = np.array([1.0, 1.5])
    p = erm_to_conic("squared", X, -y, x_bound=2.0)
    delta = 1e-2
    res = solve(p, delta)
    coef = erm_coefficients(p, res.x)
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    assert ref[0] == pytest.approx(0.8)
    best = erm_objective(X, -y, ref)
    assert erm_objective(X, -y, coef) <= best + p.L * p.R * delta
    assert abs(coef[0] - 0.8) < 0.05
