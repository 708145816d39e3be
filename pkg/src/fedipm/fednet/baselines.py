"""The three straightforward federations the sketched protocol is compared against.

* Model 1: each client projects with its own ``P_i`` and uploads its local
  step; the server concatenates the steps.
* Model 2: each client uploads ``(A_i W_i A_i^T)^{-1}`` and ``h_i``; the server
  applies the block-diagonal operator ``diag(P_1, ..., P_m)``.
* Model 3: each client uploads its full weight block and ``h_i`` (the data
  itself was shipped once beforehand); the server runs the exact step.

Models 1 and 2 produce the same wrong step; they differ only in what they
send. Model 3 is exact but costs ``n^2 + n`` words per round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from ..centralpath import HyperParams, centrality, initialize
from ..newton import NewtonDeltas, WeightMatrix, exact_projection, newton_deltas
from ..problem import ProblemInstance
from .ledger import ledger_formula

__all__ = ["BaselineResult", "baseline_model", "baseline_words", "compare_models"]


@dataclass(eq=False)
class BaselineResult:
    model: int
    dx: np.ndarray
    ds: np.ndarray
    uplink_words: int


def baseline_words(model: int, sizes: Sequence[int], d: int) -> int:
    """Per-round uplink words of one baseline for clients holding ``sizes`` columns."""
    n = int(sum(sizes))
    if model == 1:
        return 2 * n
    if model == 2:
        return sum(d * d + n_i for n_i in sizes)
    if model == 3:
        return n * n + n
    raise ValueError(f"unknown baseline model {model}")


def _partition_slices(partition: Sequence[int], n: int) -> list[slice]:
    sizes = [int(k) for k in partition]
    if sum(sizes) != n or any(k < 1 for k in sizes):
        raise ValueError(f"partition sizes {sizes} do not cover {n} columns")
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _local_blocks(W: WeightMatrix, sl: slice) -> WeightMatrix:
    idx = [k for k, b in enumerate(W.slices()) if b.start >= sl.start and b.stop <= sl.stop]
    if sum(W.blocks[k].shape[0] for k in idx) != sl.stop - sl.start:
        raise ValueError("partition splits a barrier block")
    return W.subset(idx)


def baseline_model(model: int, A, W: WeightMatrix, h, t_tilde: float, partition: Sequence[int]) -> BaselineResult:
    """Step of baseline ``model`` for column groups of sizes ``partition``.

    ``partition`` lists the number of columns each client holds, in column
    order; groups must not split a barrier block.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    h = np.asarray(h, dtype=float)
    slices = _partition_slices(partition, A.shape[1])
    words = baseline_words(model, [s.stop - s.start for s in slices], A.shape[0])
    if model == 3:
        deltas = newton_deltas(exact_projection(A, W), W, h, t_tilde)
        return BaselineResult(3, deltas.dx, deltas.ds, words)
    if model not in (1, 2):
        raise ValueError(f"unknown baseline model {model}")
    local_P = []
    for sl in slices:
        W_i = _local_blocks(W, sl)
        C = W_i.sqrt() @ A[:, sl].T
        local_P.append(C @ np.linalg.pinv(C.T @ C) @ C.T)
    if model == 1:
        parts = []
        for sl, P_i in zip(slices, local_P):
            parts.append(newton_deltas(P_i, _local_blocks(W, sl), h[sl], t_tilde))
        dx = np.concatenate([p.dx for p in parts])
        ds = np.concatenate([p.ds for p in parts])
    else:
        deltas = newton_deltas(block_diag(*local_P), W, h, t_tilde)
        dx, ds = deltas.dx, deltas.ds
    return BaselineResult(model, dx, ds, words)


def _probe_direction(problem: ProblemInstance, delta: float, params: HyperParams | None):
    program, state = initialize(problem, delta)
    if params is None:
        params = HyperParams.practical(program.m)
    cen = centrality(program, state.x, state.s, state.t_tilde, params)
    W = WeightMatrix.from_hessians(cen.hessians)
    h = cen.h
    if not np.any(h):
        # the start is perfectly centred, so probe with a deterministic direction
        h = np.cos(np.arange(1, program.n + 1, dtype=float))
    return program, W, h, state.t_tilde


def compare_models(
    problem: ProblemInstance,
    delta: float = 0.1,
    params: HyperParams | None = None,
    partition: Sequence[int] | None = None,
    b: int | Sequence[int] = 4,
    A=None,
    W: WeightMatrix | None = None,
    h=None,
    t_tilde: float = 1.0,
) -> list[dict]:
    """Rows ``(model, correct, uplink_words, delta_norm)`` for Models 1-3 and the sketched protocol.

    With ``A``, ``W`` and ``h`` omitted, the step is taken at the starting
    point of ``problem``'s modified program. ``partition`` defaults to the
    problem's ownership (the extra coordinate joins its owner's group).
    """
    if A is None:
        program, W, h, t_tilde = _probe_direction(problem, delta, params)
        A = program.A
        if partition is None:
            counts: dict[int, int] = {}
            for sl, owner in zip(program.slices(), program.owners):
                counts[owner] = counts.get(owner, 0) + (sl.stop - sl.start)
            order = list(dict.fromkeys(program.owners))
            if order != sorted(order):
                raise ValueError("ownership must be contiguous and increasing for the baselines")
            partition = [counts[o] for o in order]
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if partition is None:
        partition = [A.shape[1]]
    exact: NewtonDeltas = newton_deltas(exact_projection(A, W), W, h, t_tilde)
    rows = []
    for k in (1, 2, 3):
        res = baseline_model(k, A, W, h, t_tilde, partition)
        gap = float(np.linalg.norm(res.dx - exact.dx) + np.linalg.norm(res.ds - exact.ds))
        rows.append({"model": f"model-{k}", "correct": gap <= 1e-10, "uplink_words": res.uplink_words,
                     "delta_norm": gap})
    up, _ = ledger_formula(list(partition), b)
    rows.append({"model": "sketched", "correct": None, "uplink_words": int(up), "delta_norm": float("nan")})
    return rows
