"""Reduction of empirical risk minimization to a block-structured conic program.

``min_x sum_i f_i(a_i^T x + b_i)`` becomes

    min  sum_i z_i
    s.t. X x - y = -b
         x_j in [-x_bound, x_bound]          (INTERVAL blocks)
         (y_i, z_i) in {f_i(y_i) <= z_i <= z_max_i}

The epigraphs are capped so that every block is bounded and the analytic
center exists; the cap is chosen large enough to be inactive at any ``x``
inside the box.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .barrier import BlockBarrier
from .exceptions import UnsupportedLoss
from .problem import ProblemInstance

__all__ = ["SUPPORTED_LOSSES", "erm_to_conic", "erm_coefficients", "erm_objective", "default_z_max"]

SUPPORTED_LOSSES = ("squared",)


def default_z_max(X: np.ndarray, b: np.ndarray, x_bound: float) -> np.ndarray:
    """Per-datum cap ``2 (||a_i||_1 x_bound + |b_i|)^2 + 1``, above any attainable loss."""
    reach = np.abs(X).sum(axis=1) * x_bound + np.abs(b)
    return 2.0 * reach**2 + 1.0


def erm_to_conic(
    losses: Sequence[str] | str,
    X,
    b=None,
    x_bound: float = 10.0,
    z_max=None,
    clients: int = 1,
) -> ProblemInstance:
    """Build the conic program for losses ``f_i(a_i^T x + b_i)`` over the rows of ``X``.

    ``losses`` is one name per row or a single name for all rows; only
    ``"squared"`` (``f(y) = y**2``) has an epigraph barrier. Coefficients are
    owned by client 0 and data rows are split evenly over ``clients``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, p = X.shape
    if N == 0:
        raise ValueError("ERM reduction needs at least one loss term")
    if isinstance(losses, str):
        losses = [losses] * N
    losses = list(losses)
    if not losses:
        raise ValueError("ERM reduction needs at least one loss term")
    if len(losses) != N:
        raise ValueError(f"{len(losses)} losses for {N} data rows")
    for name in losses:
        if name not in SUPPORTED_LOSSES:
            raise UnsupportedLoss(f"no epigraph barrier registered for loss {name!r}")
    b = np.zeros(N) if b is None else np.asarray(b, dtype=float).reshape(N)
    if not x_bound > 0:
        raise ValueError("x_bound must be positive")
    caps = default_z_max(X, b, x_bound) if z_max is None else np.broadcast_to(np.asarray(z_max, float), (N,)).copy()
    if np.any(caps <= 0):
        raise ValueError("z_max must be positive")
    if clients < 1:
        raise ValueError("clients must be positive")

    n = p + 2 * N
    A = np.zeros((N, n))
    A[:, :p] = X
    A[np.arange(N), p + 2 * np.arange(N)] = -1.0
    c = np.zeros(n)
    c[p + 1 :: 2] = 1.0
    blocks = [BlockBarrier.interval(-x_bound, x_bound) for _ in range(p)]
    blocks += [BlockBarrier.parabola_epigraph(float(cap)) for cap in caps]
    owners = [0] * p + [min(k * clients // N, clients - 1) for k in range(N)]
    R = math.sqrt(p * x_bound**2 + float(np.sum(caps + caps**2)))
    return ProblemInstance(
        A=A,
        b=-b,
        c=c,
        blocks=blocks,
        L=float(np.linalg.norm(c)),
        R=R,
        owners=owners,
        meta={"kind": "least-squares-erm", "features": p, "samples": N, "x_bound": x_bound},
    )


def erm_coefficients(problem: ProblemInstance, x) -> np.ndarray:
    """The model coefficients (first ``p`` coordinates) of a solution vector."""
    p = int(problem.meta.get("features", problem.n - 2 * problem.d))
    return np.asarray(x, dtype=float)[:p].copy()


def erm_objective(X, b, coef) -> float:
    """``sum_i (a_i^T coef + b_i)^2``."""
    r = np.asarray(X, dtype=float) @ np.asarray(coef, dtype=float) + np.asarray(b, dtype=float)
    return float(r @ r)
