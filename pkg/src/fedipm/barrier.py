"""Self-concordant barriers for the small per-block cones K_i.

Blocks are O(1)-dimensional, so everything here is closed form on tiny dense
arrays. Points within ``BOUNDARY_TOL`` of the boundary count as outside.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DomainViolation, SingularHessian

__all__ = [
    "BOUNDARY_TOL",
    "BarrierKind",
    "BlockBarrier",
    "BarrierValue",
    "barrier_eval",
    "local_norm",
    "dual_norm",
    "SelfConcordanceCheck",
    "check_self_concordance",
    "HessianStabilityCheck",
    "check_hessian_stability",
]

BOUNDARY_TOL = 1e-12


class BarrierKind(str, enum.Enum):
    NONNEG = "NONNEG"
    INTERVAL = "INTERVAL"
    PARABOLA_EPIGRAPH = "PARABOLA-EPIGRAPH"
    LOG_EXTRA = "LOG-EXTRA"

    @classmethod
    def parse(cls, value) -> "BarrierKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper().replace("_", "-"))


_DIMS = {
    BarrierKind.NONNEG: 1,
    BarrierKind.INTERVAL: 1,
    BarrierKind.PARABOLA_EPIGRAPH: 2,
    BarrierKind.LOG_EXTRA: 1,
}


class BarrierValue(NamedTuple):
    value: float
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class BlockBarrier:
    """Barrier description for one block.

    ``params`` by kind:

    * NONNEG, LOG-EXTRA: ``()``; ``-ln x``.
    * INTERVAL: ``(l, u)``; ``-ln(x - l) - ln(u - x)``.
    * PARABOLA-EPIGRAPH: ``()`` or ``(z_max,)`` on ``(y, z)``;
      ``-ln(z - y^2)``, plus ``-ln(z_max - z)`` when capped.

    ``nu`` defaults to 1, 2, 2 (3 when capped) and 1 respectively.
    """

    kind: BarrierKind
    params: tuple = ()
    nu: float | None = None

    def __post_init__(self):
        kind = BarrierKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if kind is BarrierKind.INTERVAL:
            if len(params) != 2 or not params[0] < params[1]:
                raise ValueError(f"INTERVAL needs (l, u) with l < u, got {params}")
        elif kind is BarrierKind.PARABOLA_EPIGRAPH:
            if len(params) > 1 or (params and params[0] <= 0):
                raise ValueError(f"PARABOLA-EPIGRAPH takes () or (z_max > 0,), got {params}")
        elif params:
            raise ValueError(f"{kind.value} takes no parameters, got {params}")
        if self.nu is None:
            object.__setattr__(self, "nu", self._default_nu())
        elif self.nu < 1:
            raise ValueError(f"barrier parameter nu must be >= 1, got {self.nu}")
        else:
            object.__setattr__(self, "nu", float(self.nu))

    def _default_nu(self) -> float:
        if self.kind is BarrierKind.INTERVAL:
            return 2.0
        if self.kind is BarrierKind.PARABOLA_EPIGRAPH:
            return 3.0 if self.params else 2.0
        return 1.0

    @classmethod
    def nonneg(cls) -> "BlockBarrier":
        return cls(BarrierKind.NONNEG)

    @classmethod
    def interval(cls, lower: float, upper: float) -> "BlockBarrier":
        return cls(BarrierKind.INTERVAL, (lower, upper))

    @classmethod
    def parabola_epigraph(cls, z_max: float | None = None) -> "BlockBarrier":
        return cls(BarrierKind.PARABOLA_EPIGRAPH, () if z_max is None else (z_max,))

    @classmethod
    def log_extra(cls) -> "BlockBarrier":
        return cls(BarrierKind.LOG_EXTRA)

    @property
    def dim(self) -> int:
        return _DIMS[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "params": list(self.params), "nu": self.nu}

    @classmethod
    def from_dict(cls, data: dict) -> "BlockBarrier":
        return cls(data["kind"], tuple(data.get("params", ())), data.get("nu"))

    # -- slacks -------------------------------------------------------------

    def _slacks(self, x: np.ndarray) -> np.ndarray:
        k = self.kind
        if k in (BarrierKind.NONNEG, BarrierKind.LOG_EXTRA):
            return x[:1]
        if k is BarrierKind.INTERVAL:
            lo, hi = self.params
            return np.array([x[0] - lo, hi - x[0]])
        y, z = x
        if self.params:
            return np.array([z - y * y, self.params[0] - z])
        return np.array([z - y * y])

    def is_interior(self, x) -> bool:
        x = self._check_shape(x)
        return bool(np.all(np.isfinite(x)) and np.all(self._slacks(x) > BOUNDARY_TOL))

    def _check_shape(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"{self.kind.value} block expects {self.dim} coordinates, got {x.shape}")
        return x

    def _interior(self, x) -> np.ndarray:
        x = self._check_shape(x)
        if not (np.all(np.isfinite(x)) and np.all(self._slacks(x) > BOUNDARY_TOL)):
            raise DomainViolation(f"{x} is not interior to the {self.kind.value} domain {self.params}")
        return x

    # -- derivatives ---------------------------------------------------------

    def evaluate(self, x) -> BarrierValue:
        x = self._interior(x)
        k = self.kind
        if k in (BarrierKind.NONNEG, BarrierKind.LOG_EXTRA):
            v = x[0]
            return BarrierValue(-np.log(v), np.array([-1.0 / v]), np.array([[1.0 / (v * v)]]))
        if k is BarrierKind.INTERVAL:
            lo, hi = self.params
            a, b = x[0] - lo, hi - x[0]
            return BarrierValue(
                -np.log(a) - np.log(b),
                np.array([-1.0 / a + 1.0 / b]),
                np.array([[1.0 / (a * a) + 1.0 / (b * b)]]),
            )
        y, z = x
        g = z - y * y
        value = -np.log(g)
        grad = np.array([2.0 * y / g, -1.0 / g])
        hess = np.array(
            [[2.0 / g + 4.0 * y * y / (g * g), -2.0 * y / (g * g)],
             [-2.0 * y / (g * g), 1.0 / (g * g)]]
        )
        if self.params:
            cap = self.params[0] - z
            value -= np.log(cap)
            grad[1] += 1.0 / cap
            hess[1, 1] += 1.0 / (cap * cap)
        return BarrierValue(value, grad, hess)

    def value(self, x) -> float:
        return self.evaluate(x).value

    def gradient(self, x) -> np.ndarray:
        return self.evaluate(x).grad

    def hessian(self, x) -> np.ndarray:
        return self.evaluate(x).hess

    def max_step(self, x, direction) -> float:
        """Largest ``s`` in ``[0, inf]`` with ``x + s * direction`` still in the closure."""
        x = self._interior(x)
        u = self._check_shape(direction)
        k = self.kind
        if k in (BarrierKind.NONNEG, BarrierKind.LOG_EXTRA):
            return _ratio(x[0], -u[0])
        if k is BarrierKind.INTERVAL:
            lo, hi = self.params
            return min(_ratio(x[0] - lo, -u[0]), _ratio(hi - x[0], u[0]))
        y, z = x
        a, b = u
        # z + s b - (y + s a)^2 >= 0  <=>  -a^2 s^2 + (b - 2 y a) s + (z - y^2) >= 0
        qa, qb, qc = -a * a, b - 2.0 * y * a, z - y * y
        if qa == 0.0:
            step = _ratio(qc, -qb)
        else:
            disc = qb * qb - 4.0 * qa * qc
            step = (-qb - np.sqrt(disc)) / (2.0 * qa)
        if self.params:
            step = min(step, _ratio(self.params[0] - z, b))
        return step


def _ratio(slack: float, rate: float) -> float:
    return slack / rate if rate > 0 else np.inf


def barrier_eval(B: BlockBarrier, x) -> BarrierValue:
    return B.evaluate(x)


def _solve_hess(H: np.ndarray, v: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise SingularHessian("barrier Hessian is not positive definite") from None
    return np.linalg.solve(L.T, np.linalg.solve(L, v))


def local_norm(B: BlockBarrier, x, v) -> float:
    """``||v||_x = sqrt(v^T hess(x) v)``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    H = B.hessian(x)
    return float(np.sqrt(max(v @ H @ v, 0.0)))


def dual_norm(B: BlockBarrier, x, v) -> float:
    """``||v||_x^* = sqrt(v^T hess(x)^{-1} v)``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    H = B.hessian(x)
    return float(np.sqrt(max(v @ _solve_hess(H, v), 0.0)))


class SelfConcordanceCheck(NamedTuple):
    third_directional: float
    bound: float
    ok: bool


def check_self_concordance(
    B: BlockBarrier, x, u, step_h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-8
) -> SelfConcordanceCheck:
    """Compare ``|D^3 phi(x)[u,u,u]|`` against ``2 ||u||_x^3``.

    The third derivative is a central difference of ``u^T hess(x + s u) u``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    plus = u @ B.hessian(x + step_h * u) @ u
    minus = u @ B.hessian(x - step_h * u) @ u
    third = float((plus - minus) / (2.0 * step_h))
    bound = 2.0 * local_norm(B, x, u) ** 3
    return SelfConcordanceCheck(third, bound, abs(third) <= bound * (1.0 + rtol) + atol)


class HessianStabilityCheck(NamedTuple):
    ratio_low: float
    ratio_high: float
    ok: bool
    radius: float


def _inv_sqrt_psd(H: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    if w.min() <= 0:
        raise SingularHessian("barrier Hessian is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def check_hessian_stability(B: BlockBarrier, x, y, rtol: float = 1e-10) -> HessianStabilityCheck:
    """Hessian sandwich ``(1-r)^2 H(x) <= H(y) <= (1-r)^-2 H(x)`` with ``r = ||y-x||_x``.

    A violated precondition ``r < 1`` is reported through ``ok=False``, not raised.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = local_norm(B, x, y - x)
    Hx_mh = _inv_sqrt_psd(B.hessian(x))
    eig = np.linalg.eigvalsh(Hx_mh @ B.hessian(y) @ Hx_mh)
    lo, hi = float(eig.min()), float(eig.max())
    if r >= 1.0:
        return HessianStabilityCheck(lo, hi, False, r)
    ok = lo >= (1.0 - r) ** 2 * (1.0 - rtol) and hi <= (1.0 - r) ** -2 * (1.0 + rtol)
    return HessianStabilityCheck(lo, hi, bool(ok), r)
