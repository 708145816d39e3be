"""Short-step central path following on the modified program.

The iteration keeps ``(x, s)`` with ``A x = b`` and ``s - c in range(A^T)`` and
drives the per-block centrality errors ``mu_i = s_i / t + grad phi_i(x_i)``
towards zero while ``t`` decays geometrically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .barrier import BlockBarrier, BarrierKind
from .exceptions import (
    CenteringTooLoose,
    LineSearchFailed,
    NonConvergence,
)
from .newton import (
    NewtonDeltas,
    ProjectionBundle,
    WeightMatrix,
    assemble_sketched_projection,
    exact_projection,
    newton_deltas,
)
from .problem import ProblemInstance, block_offsets

__all__ = [
    "Profile",
    "HyperParams",
    "ModifiedProgram",
    "PathState",
    "Centrality",
    "centrality",
    "mu",
    "gamma",
    "weight_c",
    "direction_h",
    "potential_phi",
    "path_step",
    "analytic_center",
    "initialize",
    "duality_gap_bound",
    "DIKIN_RADIUS",
    "MAX_HALVINGS",
]

MAX_HALVINGS = 60
DIKIN_RADIUS = 1.0


class Profile(str, enum.Enum):
    PAPER = "PAPER"
    PRACTICAL = "PRACTICAL"


@dataclass(frozen=True)
class HyperParams:
    """Step constants ``lam``, ``alpha``, ``xi`` and the activity threshold on ``gamma``."""

    lam: float
    alpha: float
    xi: float
    gamma_threshold: float
    profile: Profile = Profile.PRACTICAL

    @classmethod
    def paper(cls, m: int) -> "HyperParams":
        lam = 2.0**16 * math.log(max(m, 2))
        alpha = 2.0**-20 / lam**2
        return cls(lam, alpha, 2.0**-10 * alpha, 96.0 * math.sqrt(alpha), Profile.PAPER)

    @classmethod
    def practical(
        cls,
        m: int,
        alpha: float = 1e-2,
        xi: float | None = None,
        gamma_threshold: float | None = None,
    ) -> "HyperParams":
        """Desk-scale constants: ``lam = ln m + 1`` and ``xi <= alpha <= 1/100``.

        The activity threshold defaults to ``alpha``; ``96 sqrt(alpha)`` would
        exceed 1 here and switch centering off inside the region where the
        duality-gap certificate applies.
        """
        xi = alpha / 2.0 if xi is None else xi
        if not 0 < xi <= alpha <= 0.01:
            raise ValueError(f"need 0 < xi <= alpha <= 1/100, got xi={xi}, alpha={alpha}")
        thr = alpha if gamma_threshold is None else gamma_threshold
        return cls(math.log(max(m, 1)) + 1.0, alpha, xi, thr, Profile.PRACTICAL)

    @classmethod
    def for_profile(cls, profile, m: int, **overrides) -> "HyperParams":
        profile = Profile(str(getattr(profile, "value", profile)).upper())
        if profile is Profile.PAPER:
            return cls.paper(m)
        return cls.practical(m, **overrides)


@dataclass(eq=False)
class ModifiedProgram:
    """``min cbar^T xbar  s.t.  Abar xbar = b`` with one extra ``-ln`` coordinate.

    ``Abar = [A | b - A x0]`` and ``cbar = [delta / (L R) c ; 1]``.
    """

    problem: ProblemInstance
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    blocks: list[BlockBarrier]
    owners: list[int]
    x0: np.ndarray
    s0: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def nu(self) -> float:
        return float(sum(b.nu for b in self.blocks))

    @property
    def cost_scale(self) -> float:
        return self.delta / (self.problem.L * self.problem.R)

    def slices(self) -> list[slice]:
        off = block_offsets(self.blocks)
        return [slice(a, b) for a, b in zip(off[:-1], off[1:])]

    def client_groups(self) -> list[list[int]]:
        """Block indices held by each client, in increasing client id."""
        groups: dict[int, list[int]] = {}
        for k, owner in enumerate(self.owners):
            groups.setdefault(owner, []).append(k)
        return [groups[c] for c in sorted(groups)]

    def schedule_rate(self, params: HyperParams) -> float:
        """Per-step decay factor ``1 - xi / sqrt(nu)`` of ``t``."""
        return 1.0 - params.xi / math.sqrt(self.nu)

    def target_t(self) -> float:
        """Stop once ``4 t nu <= delta**2``."""
        return self.delta**2 / (4.0 * self.nu)


@dataclass(eq=False)
class PathState:
    x: np.ndarray
    s: np.ndarray
    t_tilde: float
    iter: int = 0
    y: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(eq=False)
class Centrality:
    """Everything the step needs at one iterate, per block."""

    grads: list[np.ndarray]
    hessians: list[np.ndarray]
    mu: list[np.ndarray]
    gamma: np.ndarray
    weights: np.ndarray
    h: np.ndarray
    phi: float
    log_phi: float

    @property
    def gamma_max(self) -> float:
        return float(self.gamma.max())


def _block_mu(blk: BlockBarrier, x_i, s_i, t_tilde):
    g, H = blk.evaluate(x_i)[1:]
    return s_i / t_tilde + g, g, H


def _dual_norm(H: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(max(v @ np.linalg.solve(H, v), 0.0)))


def mu(program: ModifiedProgram, state: PathState, i: int) -> np.ndarray:
    """Centrality error ``s_i / t + grad phi_i(x_i)`` of block ``i``."""
    sl = program.slices()[i]
    return _block_mu(program.blocks[i], state.x[sl], state.s[sl], state.t_tilde)[0]


def gamma(program: ModifiedProgram, state: PathState, i: int) -> float:
    """``||mu_i||`` in the dual local norm of block ``i``."""
    sl = program.slices()[i]
    m_i, _, H = _block_mu(program.blocks[i], state.x[sl], state.s[sl], state.t_tilde)
    return _dual_norm(H, m_i)


def weight_c(gammas, params: HyperParams, log_norm: float | None = None) -> np.ndarray:
    """Soft-max weights ``exp(lam g_i) / g_i / sqrt(sum_j exp(2 lam g_j))``.

    Blocks with ``g_i`` below the activity threshold get weight 0. ``log_norm``
    is ``log sum_j exp(2 lam g_j)``; pass it when the sum is assembled
    elsewhere (the federated scalar exchange).
    """
    gammas = np.asarray(gammas, dtype=float)
    if log_norm is None:
        log_norm = float(logsumexp(2.0 * params.lam * gammas))
    active = gammas >= params.gamma_threshold
    out = np.zeros_like(gammas)
    g = gammas[active]
    out[active] = np.exp(params.lam * g - 0.5 * log_norm) / g
    return out


def potential_phi(gammas, lam: float) -> tuple[float, float]:
    """``Phi = sum_i exp(lam gamma_i)`` and ``log Phi``."""
    log_phi = float(logsumexp(lam * np.asarray(gammas, dtype=float)))
    return math.exp(log_phi) if log_phi < 700 else math.inf, log_phi


def centrality(program: ModifiedProgram, x, s, t_tilde: float, params: HyperParams) -> Centrality:
    grads, hessians, mus = [], [], []
    gammas = np.empty(program.m)
    for k, (sl, blk) in enumerate(zip(program.slices(), program.blocks)):
        m_k, g_k, H_k = _block_mu(blk, x[sl], s[sl], t_tilde)
        grads.append(g_k)
        hessians.append(H_k)
        mus.append(m_k)
        gammas[k] = _dual_norm(H_k, m_k)
    weights = weight_c(gammas, params)
    h = np.concatenate([-params.alpha * w * m_k for w, m_k in zip(weights, mus)])
    phi, log_phi = potential_phi(gammas, params.lam)
    return Centrality(grads, hessians, mus, gammas, weights, h, phi, log_phi)


def direction_h(program: ModifiedProgram, state: PathState, params: HyperParams) -> np.ndarray:
    """Target change of ``mu``: ``h_i = -alpha c_i mu_i``."""
    return centrality(program, state.x, state.s, state.t_tilde, params).h


def duality_gap_bound(t_tilde: float, nu: float) -> float:
    """``4 t nu``; valid only when every ``gamma_i <= 1``."""
    return 4.0 * t_tilde * nu


def _all_interior(program: ModifiedProgram, x: np.ndarray) -> bool:
    return all(blk.is_interior(x[sl]) for sl, blk in zip(program.slices(), program.blocks))


def damping_factor(program: ModifiedProgram, x: np.ndarray, deltas: NewtonDeltas) -> tuple[float, int]:
    """Halve the step until it sits in the Dikin ellipsoid and keeps ``x`` interior."""
    factor, halvings = 1.0, 0
    norm = float(np.sqrt(np.sum(deltas.alphas**2)))
    while norm * factor >= DIKIN_RADIUS or not _all_interior(program, x + factor * deltas.dx):
        halvings += 1
        if halvings > MAX_HALVINGS:
            raise LineSearchFailed(f"step still infeasible after {MAX_HALVINGS} halvings")
        factor *= 0.5
    return factor, halvings


def path_step(
    program: ModifiedProgram,
    state: PathState,
    params: HyperParams,
    specs=None,
    cen: Centrality | None = None,
) -> PathState:
    """One iteration: centering direction, Newton deltas, damped update, ``t`` decay.

    ``specs`` selects the sketched projection built from R1..R4; ``None``
    uses the exact projection. Diagnostics of the step (``alphas``,
    ``sum_alpha_sq``, ``damping``) are stored on the returned state.
    """
    if cen is None:
        cen = centrality(program, state.x, state.s, state.t_tilde, params)
    rate = program.schedule_rate(params)
    if not np.any(cen.h):
        deltas = NewtonDeltas(
            np.zeros_like(state.x), np.zeros_like(state.s),
            None if specs is not None else np.zeros(program.d), np.zeros(program.m),
        )
    else:
        W = WeightMatrix.from_hessians(cen.hessians)
        if specs is None:
            P_like = exact_projection(program.A, W)
            deltas = newton_deltas(P_like, W, cen.h, state.t_tilde, A=program.A)
        else:
            bundle = ProjectionBundle.from_partition(program.A, W, specs, program.client_groups())
            P_like = assemble_sketched_projection(bundle)
            deltas = newton_deltas(P_like, W, cen.h, state.t_tilde)
    factor, halvings = damping_factor(program, state.x, deltas)
    if factor != 1.0:
        deltas = deltas.scaled(factor)
    y = state.y
    if y is not None and deltas.dy is not None:
        y = y + deltas.dy
    k = state.iter + 1
    diagnostics = {
        "alphas": deltas.alphas,
        "sum_alpha_sq": float(np.sum(deltas.alphas**2)),
        "damping": factor,
        "halvings": halvings,
        "gamma_max": cen.gamma_max,
        "phi": cen.phi,
    }
    return PathState(state.x + deltas.dx, state.s + deltas.ds, rate**k, k, y, diagnostics)


def _block_start(blk: BlockBarrier) -> np.ndarray:
    if blk.kind is BarrierKind.INTERVAL:
        lo, hi = blk.params
        return np.array([0.5 * (lo + hi)])
    if blk.kind is BarrierKind.PARABOLA_EPIGRAPH:
        return np.array([0.0, 0.5 * blk.params[0] if blk.params else 1.0])
    return np.array([1.0])


def analytic_center(blocks: Sequence[BlockBarrier], tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """``argmin sum_i phi_i`` by damped Newton on each block independently.

    Raises :class:`NonConvergence` for blocks without a minimizer (unbounded
    cones such as NONNEG or an uncapped parabola epigraph).
    """
    parts = []
    for k, blk in enumerate(blocks):
        x = _block_start(blk)
        for _ in range(max_iter):
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                _, g, H = blk.evaluate(x)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)) or not np.all(np.isfinite(x)):
                raise NonConvergence(f"block {k} ({blk.kind.value}) has no analytic center")
            dec = float(np.sqrt(max(g @ step, 0.0)))
            if dec <= tol:
                break
            x = x - step / (1.0 + dec)
        else:
            raise NonConvergence(
                f"block {k} ({blk.kind.value}) has no analytic center within {max_iter} Newton steps"
            )
        parts.append(x)
    return np.concatenate(parts)


def initialize(problem: ProblemInstance, delta: float) -> tuple[ModifiedProgram, PathState]:
    """Modified program with ``xbar = [x0; 1]``, ``ybar = 0``, ``sbar = cbar``, ``t = 1``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    x0 = analytic_center(problem.blocks)
    A_bar = np.hstack([problem.A, (problem.b - problem.A @ x0)[:, None]])
    scale = delta / (problem.L * problem.R)
    c_bar = np.concatenate([scale * problem.c, [1.0]])
    blocks = list(problem.blocks) + [BlockBarrier.log_extra()]
    owners = list(problem.owners) + [max(problem.owners)]
    x_bar = np.concatenate([x0, [1.0]])
    program = ModifiedProgram(
        problem, A_bar, problem.b.copy(), c_bar, blocks, owners, x_bar, c_bar.copy(), float(delta)
    )
    state = PathState(x_bar.copy(), c_bar.copy(), 1.0, 0, np.zeros(problem.d))
    err = 0.0
    for sl, blk in zip(program.slices(), blocks):
        _, g, H = blk.evaluate(x_bar[sl])
        err += _dual_norm(H, c_bar[sl] + g) ** 2
    err = math.sqrt(err)
    if err > delta:
        raise CenteringTooLoose(
            f"||sbar + grad phibar(xbar)||* = {err:.3e} exceeds delta = {delta}; check L and R"
        )
    state.diagnostics["initial_centering"] = err
    return program, state
