"""Exact and sketched Newton projections.

The exact projection is ``P = W^{1/2} A^T (A W A^T)^{-1} A W^{1/2}``. The
federated variant replaces it with

    P~ = W^{1/2} A^T R1^T R1 (R2^T R2 A W A^T R3^T R3)^+ R4^T R4 A W^{1/2}
       = U K V,   K = R1 (R2^T M R3)^+ R4^T,

where ``U``, ``M`` and ``V`` are sums/stacks of per-client uploads. The
bound evaluators at the bottom use unit constants in place of the
unspecified absolute constants, so callers should compare scaling, not
absolute values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import block_diag

from .exceptions import NumericalBreakdown, RankDeficient, SingularG
from .sketch import SketchMatrix, SketchSpec, make_sketch

__all__ = [
    "PINV_RTOL",
    "WeightMatrix",
    "exact_projection",
    "ProjectionBundle",
    "SketchedProjection",
    "assemble_sketched_projection",
    "NewtonDeltas",
    "newton_deltas",
    "SandwichResult",
    "sandwich_check",
    "two_sketch_error",
    "BilinearReport",
    "bilinear_error_report",
    "pinv_svd",
]

PINV_RTOL = 1e-10
RANK_RTOL = 1e-12


def _sym_sqrt(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(block)
    if w.min() <= 0:
        raise ValueError("weight blocks must be positive definite")
    root = np.sqrt(w)
    return (V * root) @ V.T, (V / root) @ V.T


@dataclass(eq=False)
class WeightMatrix:
    """Block-diagonal ``W = diag(W_1, ..., W_m)`` with cached square roots."""

    blocks: list[np.ndarray]
    sqrt_blocks: list[np.ndarray] = field(init=False)
    inv_sqrt_blocks: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks]
        roots = [_sym_sqrt(0.5 * (b + b.T)) for b in self.blocks]
        self.sqrt_blocks = [r[0] for r in roots]
        self.inv_sqrt_blocks = [r[1] for r in roots]
        sizes = [b.shape[0] for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @classmethod
    def from_hessians(cls, hessians: Sequence[np.ndarray]) -> "WeightMatrix":
        """``W_i = hess_i^{-1}``."""
        return cls([np.linalg.inv(np.atleast_2d(H)) for H in hessians])

    @classmethod
    def identity(cls, n: int) -> "WeightMatrix":
        return cls([np.eye(1) for _ in range(n)])

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    @property
    def sizes(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    def slices(self) -> list[slice]:
        return [slice(a, b) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def dense(self) -> np.ndarray:
        return block_diag(*self.blocks)

    def sqrt(self) -> np.ndarray:
        return block_diag(*self.sqrt_blocks)

    def inv_sqrt(self) -> np.ndarray:
        return block_diag(*self.inv_sqrt_blocks)

    def hessian(self) -> np.ndarray:
        return block_diag(*[np.linalg.inv(b) for b in self.blocks])

    def subset(self, indices: Sequence[int]) -> "WeightMatrix":
        return WeightMatrix([self.blocks[i] for i in indices])


def _check_rank(gram: np.ndarray) -> None:
    w = np.linalg.eigvalsh(gram)
    if not np.all(np.isfinite(w)) or w[-1] <= 0 or w[0] <= RANK_RTOL * w[-1]:
        raise RankDeficient(
            f"A W A^T is singular to working precision (eigenvalues {w[0]:.3e}..{w[-1]:.3e})"
        )


def exact_projection(A, W: WeightMatrix) -> np.ndarray:
    """Orthogonal projection onto ``range(W^{1/2} A^T)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = W.sqrt() @ A.T
    gram = C.T @ C
    _check_rank(gram)
    P = C @ np.linalg.solve(gram, C.T)
    return 0.5 * (P + P.T)


def pinv_svd(X: np.ndarray, rtol: float = PINV_RTOL) -> tuple[np.ndarray, int, float]:
    """Pseudo-inverse with relative singular-value cutoff.

    Returns ``(pinv, rank, condition)`` where ``condition`` is the ratio of the
    largest to the smallest retained singular value.
    """
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or not np.all(np.isfinite(s)) or s[0] == 0.0:
        raise NumericalBreakdown("pseudo-inverse of a zero or non-finite matrix")
    keep = s > rtol * s[0]
    inv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    return inv, int(keep.sum()), float(s[0] / s[keep][-1])


@dataclass(eq=False)
class ProjectionBundle:
    """Server-side aggregate of the sketched pieces of ``P~``.

    ``U`` is ``n x b1``, ``M`` is ``b2 x b3``, ``V`` is ``b4 x n``.
    """

    U: np.ndarray
    M: np.ndarray
    V: np.ndarray
    specs: tuple[SketchSpec, SketchSpec, SketchSpec, SketchSpec]

    def sketches(self) -> list[SketchMatrix]:
        return [make_sketch(s) for s in self.specs]

    @classmethod
    def from_dense(cls, A, W: WeightMatrix, specs) -> "ProjectionBundle":
        """Compute the bundle centrally from ``A`` and ``W``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        R1, R2, R3, R4 = (np.asarray(make_sketch(s)) for s in specs)
        C = W.sqrt() @ A.T
        return cls(U=C @ R1.T, M=R2 @ (A @ W.dense() @ A.T) @ R3.T, V=R4 @ C.T, specs=tuple(specs))

    @classmethod
    def from_partition(cls, A, W: WeightMatrix, specs, groups: Sequence[Sequence[int]]) -> "ProjectionBundle":
        """Build the bundle from per-group pieces, as clients holding ``groups`` would.

        ``groups`` lists block indices per client in client order. Summing the
        pieces in this order reproduces a federated run's arithmetic exactly.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        slices = W.slices()
        U_parts, M_parts, V_parts = [], [], []
        R1, R2, R3, R4 = (np.asarray(make_sketch(s)) for s in specs)
        for group in groups:
            cols = np.concatenate([np.arange(slices[k].start, slices[k].stop) for k in group])
            W_g = W.subset(group)
            A_g = A[:, cols]
            C = W_g.sqrt() @ A_g.T
            U_parts.append(C @ R1.T)
            M_parts.append(R2 @ (A_g @ W_g.dense() @ A_g.T) @ R3.T)
            V_parts.append(R4 @ C.T)
        return cls.from_pieces(U_parts, M_parts, V_parts, specs)

    @classmethod
    def from_pieces(cls, U_parts, M_parts, V_parts, specs) -> "ProjectionBundle":
        """Stack per-client ``U_i``, sum ``M_i`` and concatenate ``V_i`` in the given order."""
        M = np.zeros_like(M_parts[0])
        for part in M_parts:
            M = M + part
        return cls(U=np.vstack(U_parts), M=M, V=np.hstack(V_parts), specs=tuple(specs))


class SketchedProjection:
    """``P~`` in factored form; ``apply`` never materializes the ``n x n`` matrix."""

    def __init__(self, U: np.ndarray, K: np.ndarray, V: np.ndarray, rank: int, condition: float):
        self.U = U
        self.K = K
        self.V = V
        self.rank = rank
        self.condition = condition

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[1])

    def apply(self, v) -> np.ndarray:
        return self.U @ (self.K @ (self.V @ np.asarray(v, dtype=float)))

    def toarray(self) -> np.ndarray:
        return self.U @ self.K @ self.V

    def __matmul__(self, v):
        return self.apply(v)


def assemble_sketched_projection(bundle: ProjectionBundle, rtol: float = PINV_RTOL) -> SketchedProjection:
    R1, R2, R3, R4 = (np.asarray(R) for R in bundle.sketches())
    middle = R2.T @ bundle.M @ R3
    inv, rank, cond = pinv_svd(middle, rtol)
    K = R1 @ inv @ R4.T
    return SketchedProjection(bundle.U, K, bundle.V, rank, cond)


def _apply(P_like, v: np.ndarray) -> np.ndarray:
    if isinstance(P_like, SketchedProjection):
        return P_like.apply(v)
    return np.asarray(P_like) @ v


@dataclass(eq=False)
class NewtonDeltas:
    dx: np.ndarray
    ds: np.ndarray
    dy: np.ndarray | None
    alphas: np.ndarray

    def scaled(self, factor: float) -> "NewtonDeltas":
        dy = None if self.dy is None else factor * self.dy
        return NewtonDeltas(factor * self.dx, factor * self.ds, dy, abs(factor) * self.alphas)


def block_local_norms(W: WeightMatrix, v: np.ndarray) -> np.ndarray:
    """Per-block ``||v_i||_{x_i}`` with ``hess_i = W_i^{-1}``."""
    out = np.empty(len(W.blocks))
    for i, (sl, Wi) in enumerate(zip(W.slices(), W.blocks)):
        vi = v[sl]
        out[i] = np.sqrt(max(vi @ np.linalg.solve(Wi, vi), 0.0))
    return out


def newton_deltas(P_like, W: WeightMatrix, h, t_tilde: float, A=None) -> NewtonDeltas:
    """Closed-form Newton step for ``ds/t + hess dx = h, A dx = 0, A^T dy + ds = 0``.

    ``P_like`` is either the exact projection (ndarray) or a
    :class:`SketchedProjection`. ``dy`` is returned only when ``A`` is
    supplied and ``P_like`` is exact.
    """
    if t_tilde <= 0:
        raise ValueError("t_tilde must be positive")
    h = np.asarray(h, dtype=float)
    Wh = W.sqrt() @ h
    Pv = _apply(P_like, Wh)
    dx = W.sqrt() @ (Wh - Pv)
    ds = W.inv_sqrt() @ (t_tilde * Pv)
    dy = None
    if A is not None and not isinstance(P_like, SketchedProjection):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        Wd = W.dense()
        dy = -t_tilde * np.linalg.solve(A @ Wd @ A.T, A @ (Wd @ h))
    return NewtonDeltas(dx, ds, dy, block_local_norms(W, dx))


class SandwichResult(NamedTuple):
    eps_hat: float
    ok: bool
    spectrum: np.ndarray


def _sqrt_and_inv_sqrt(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() <= 0:
        raise ValueError("matrix must be positive definite")
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


def sandwich_check(Binv, R, S, rank_rtol: float = RANK_RTOL) -> SandwichResult:
    """Empirical ``eps`` in ``(1-2eps) B <= (R^T R B^{-1} S^T S)^{-1} <= (1+2eps) B``.

    The Loewner comparison uses the symmetric part of ``G^{-1}``:
    ``eps_hat = max |eig(B^{-1/2} sym(G^{-1}) B^{-1/2}) - 1| / 2``.
    """
    Binv = np.atleast_2d(np.asarray(Binv, dtype=float))
    R = np.asarray(R)
    S = np.asarray(S)
    G = R.T @ R @ Binv @ S.T @ S
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= rank_rtol * sv[0]:
        raise SingularG(f"G has numerical rank below {G.shape[0]} (sigma_min/sigma_max = {sv[-1] / max(sv[0], 1e-300):.2e})")
    Ginv = np.linalg.inv(G)
    # B^{-1/2} = (Binv)^{1/2}
    Binv_half, _ = _sqrt_and_inv_sqrt(Binv)
    spectrum = np.linalg.eigvalsh(Binv_half @ (0.5 * (Ginv + Ginv.T)) @ Binv_half)
    eps_hat = float(np.max(np.abs(spectrum - 1.0)) / 2.0)
    return SandwichResult(eps_hat, eps_hat < 0.5, spectrum)


def two_sketch_error(u, v, Bt, R, S) -> tuple[float, float]:
    """``|u^T R^T R Bt S^T S v - u^T Bt v|`` and its unit-constant bound."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    Bt = np.atleast_2d(np.asarray(Bt, dtype=float))
    R = np.asarray(R)
    S = np.asarray(S)
    n = u.shape[0]
    if Bt.shape != (n, n) or v.shape != (n,) or R.shape[1] != n or S.shape[1] != n:
        raise ValueError("dimension mismatch between u, v, Bt and the sketches")
    sketched = (R @ u) @ (R @ Bt @ S.T) @ (S @ v)
    err = abs(float(sketched - u @ Bt @ v))
    b1, b2 = R.shape[0], S.shape[0]
    log_n = np.log(n) if n > 1 else 0.0
    bound = (
        log_n**1.5 / np.sqrt(b1) * np.linalg.norm(u) * np.linalg.norm(Bt @ v)
        + log_n**1.5 / np.sqrt(b2) * np.linalg.norm(u @ Bt) * np.linalg.norm(v)
        + log_n**3 / np.sqrt(b1 * b2) * np.linalg.norm(u) * np.linalg.norm(v) * np.linalg.norm(Bt, "fro")
    )
    return err, float(bound)


class BilinearReport(NamedTuple):
    exact: float
    sketched: float
    gap: float
    bound_rhs: float
    scale: float
    kappa: float


def bilinear_error_report(A, W: WeightMatrix, g, h=None, specs=None) -> BilinearReport:
    """Compare ``g^T P h`` with ``g^T P~ h``; ``h`` defaults to ``g``.

    ``scale`` is ``||g^T C|| ||C^T h|| ||B||`` with ``C = W^{1/2} A^T`` and
    ``B = (A W A^T)^{-1}``; ``bound_rhs`` multiplies it by
    ``log^6 d (1/sqrt(b_min) + n / b_min^2) kappa`` with ``b_min = min(b1, b2)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    g = np.asarray(g, dtype=float)
    h = g if h is None else np.asarray(h, dtype=float)
    d, n = A.shape
    P = exact_projection(A, W)
    Pt = assemble_sketched_projection(ProjectionBundle.from_dense(A, W, specs))
    exact = float(g @ P @ h)
    sketched = float(g @ Pt.apply(h))
    C = W.sqrt() @ A.T
    eig = np.linalg.eigvalsh(A @ W.dense() @ A.T)
    B_norm = 1.0 / eig[0]
    kappa = float(eig[-1] / eig[0])
    scale = float(np.linalg.norm(g @ C) * np.linalg.norm(C.T @ h) * B_norm)
    b_min = min(specs[0].rows, specs[1].rows)
    log_d = np.log(d) if d > 1 else 0.0
    rhs = log_d**6 * (1.0 / np.sqrt(b_min) + n / b_min**2) * kappa * scale
    return BilinearReport(exact, sketched, abs(exact - sketched), float(rhs), scale, kappa)
