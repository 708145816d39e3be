"""Block-structured conic programs ``min c^T x  s.t.  A x = b, x in prod K_i``.

Also home to the problem-file JSON format, the instance generators used by
the CLI, and a brute-force vertex enumerator that serves as reference oracle
for small boxed LPs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .barrier import BarrierKind, BlockBarrier
from .exceptions import ProblemFormatError, SizeTooLarge

__all__ = [
    "FORMAT_VERSION",
    "ProblemInstance",
    "block_offsets",
    "desk_lp",
    "random_box_lp",
    "model_gap_instance",
    "vertex_enumeration",
    "load_problem",
    "dump_problem",
    "save_problem",
    "problem_to_dict",
    "problem_from_dict",
]

FORMAT_VERSION = 1
MAX_ENUM_VARS = 16


def block_offsets(blocks: Sequence[BlockBarrier]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([b.dim for b in blocks])]).astype(int)


@dataclass(eq=False)
class ProblemInstance:
    """A conic program split into barrier blocks.

    ``owners[k]`` is the client that holds block ``k`` (its columns of ``A``
    and its barrier). ``L`` bounds ``||c||_2`` and ``R`` bounds ``||x||_2`` over
    the feasible cone product.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    blocks: list[BlockBarrier]
    L: float
    R: float
    owners: list[int] | None = None
    ref_opt: float | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.blocks = list(self.blocks)
        if self.owners is None:
            self.owners = [0] * len(self.blocks)
        self.owners = [int(o) for o in self.owners]
        self.L = float(self.L)
        self.R = float(self.R)
        self.validate()

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def offsets(self) -> np.ndarray:
        return block_offsets(self.blocks)

    def slices(self) -> list[slice]:
        off = self.offsets
        return [slice(a, b) for a, b in zip(off[:-1], off[1:])]

    @property
    def nu(self) -> float:
        return float(sum(b.nu for b in self.blocks))

    @property
    def clients(self) -> list[int]:
        return sorted(set(self.owners))

    def validate(self) -> None:
        d, n = self.A.shape
        if not self.blocks:
            raise ProblemFormatError("a program needs at least one block")
        if sum(b.dim for b in self.blocks) != n:
            raise ProblemFormatError(
                f"block dimensions sum to {sum(b.dim for b in self.blocks)}, A has {n} columns"
            )
        if self.b.shape != (d,):
            raise ProblemFormatError(f"b has shape {self.b.shape}, expected ({d},)")
        if self.c.shape != (n,):
            raise ProblemFormatError(f"c has shape {self.c.shape}, expected ({n},)")
        if len(self.owners) != len(self.blocks):
            raise ProblemFormatError("owners must name one client per block")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise ProblemFormatError("A, b and c must be finite")
        if d > n or np.linalg.matrix_rank(self.A) < d:
            raise ProblemFormatError("A must have full row rank")
        if not (math.isfinite(self.L) and self.L > 0 and self.L >= np.linalg.norm(self.c) * (1 - 1e-12)):
            raise ProblemFormatError(f"L={self.L} must be finite and bound ||c||_2={np.linalg.norm(self.c)}")
        if not (math.isfinite(self.R) and self.R > 0):
            raise ProblemFormatError("R must be finite and positive")

    def client_columns(self) -> dict[int, np.ndarray]:
        cols: dict[int, list[int]] = {}
        for sl, owner in zip(self.slices(), self.owners):
            cols.setdefault(owner, []).extend(range(sl.start, sl.stop))
        return {k: np.array(v, dtype=int) for k, v in sorted(cols.items())}

    def with_owners(self, owners: Sequence[int]) -> "ProblemInstance":
        return ProblemInstance(
            self.A, self.b, self.c, self.blocks, self.L, self.R, list(owners),
            self.ref_opt, self.seed, dict(self.meta),
        )

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))

    def infeasibility_l1(self, x) -> float:
        return float(np.abs(self.A @ np.asarray(x, dtype=float) - self.b).sum())

    def feasibility_tolerance(self, delta: float) -> float:
        """``3 delta (R sum|A_ij| + ||b||_1)``."""
        return 3.0 * delta * (self.R * np.abs(self.A).sum() + np.abs(self.b).sum())


# -- generators -------------------------------------------------------------


def desk_lp() -> ProblemInstance:
    """``min x1  s.t.  x1 + x2 = 1,  x in [0, 1]^2``; optimum 0 at (0, 1)."""
    return ProblemInstance(
        A=[[1.0, 1.0]],
        b=[1.0],
        c=[1.0, 0.0],
        blocks=[BlockBarrier.interval(0.0, 1.0), BlockBarrier.interval(0.0, 1.0)],
        L=1.0,
        R=math.sqrt(2.0),
        owners=[0, 1],
        ref_opt=0.0,
        meta={"kind": "boxlp", "name": "desk-lp"},
    )


def random_box_lp(n: int, d: int, seed: int, clients: int = 1) -> ProblemInstance:
    """Random LP over ``[0, 1]^n`` with ``b = A x_int`` for an interior ``x_int``."""
    if n < 1 or d < 1 or d > n:
        raise ValueError("need 1 <= d <= n")
    rng = np.random.default_rng(seed)
    A = np.round(rng.uniform(-1.0, 1.0, size=(d, n)), 3)
    while np.linalg.matrix_rank(A) < d:
        A = np.round(rng.uniform(-1.0, 1.0, size=(d, n)), 3)
    x_int = np.round(rng.uniform(0.25, 0.75, size=n), 3)
    c = np.round(rng.uniform(-1.0, 1.0, size=n), 3)
    owners = [min(k * clients // n, clients - 1) for k in range(n)]
    problem = ProblemInstance(
        A=A,
        b=A @ x_int,
        c=c,
        blocks=[BlockBarrier.interval(0.0, 1.0) for _ in range(n)],
        L=float(np.linalg.norm(c)),
        R=math.sqrt(n),
        owners=owners,
        seed=seed,
        meta={"kind": "boxlp"},
    )
    problem.ref_opt = vertex_enumeration(problem)[0]
    return problem


def model_gap_instance() -> ProblemInstance:
    """Two clients whose local projections disagree with the global one.

    ``A = [A_1 | A_2]`` with ``A_1 = [1, 0]`` and ``A_2 = [1, 1]`` (one row).
    """
    return ProblemInstance(
        A=[[1.0, 0.0, 1.0, 1.0]],
        b=[1.5],
        c=[1.0, -1.0, 0.5, 0.0],
        blocks=[BlockBarrier.interval(0.0, 1.0) for _ in range(4)],
        L=float(np.linalg.norm([1.0, -1.0, 0.5, 0.0])),
        R=2.0,
        owners=[0, 0, 1, 1],
        meta={"kind": "model-gap"},
    )


# -- brute-force oracle -----------------------------------------------------


def _column_bounds(blocks: Sequence[BlockBarrier]) -> list[tuple[float, float]]:
    bounds = []
    for blk in blocks:
        if blk.kind is BarrierKind.INTERVAL:
            bounds.append(blk.params)
        elif blk.kind in (BarrierKind.NONNEG, BarrierKind.LOG_EXTRA):
            bounds.append((0.0, math.inf))
        else:
            raise ValueError(f"vertex enumeration needs box blocks, got {blk.kind.value}")
    return bounds


def vertex_enumeration(problem_or_A, b=None, c=None, bounds=None, tol: float = 1e-9):
    """Exact LP optimum by enumerating basic solutions.

    Accepts either a :class:`ProblemInstance` with INTERVAL/NONNEG blocks or
    raw ``(A, b, c, bounds)``. Nonbasic variables sit at a finite bound; the
    program must be bounded. Returns ``(opt_value, x_opt)``.
    """
    if isinstance(problem_or_A, ProblemInstance):
        A, b, c = problem_or_A.A, problem_or_A.b, problem_or_A.c
        bounds = _column_bounds(problem_or_A.blocks)
    else:
        A = np.atleast_2d(np.asarray(problem_or_A, dtype=float))
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)
    d, n = A.shape
    if n > MAX_ENUM_VARS:
        raise SizeTooLarge(f"vertex enumeration is capped at n={MAX_ENUM_VARS}, got {n}")
    best_val, best_x = math.inf, None
    for basis in itertools.combinations(range(n), d):
        AB = A[:, basis]
        if abs(np.linalg.det(AB)) < 1e-12:
            continue
        nonbasic = [j for j in range(n) if j not in basis]
        choices = [[v for v in bounds[j] if math.isfinite(v)] for j in nonbasic]
        for values in itertools.product(*choices):
            x = np.zeros(n)
            x[nonbasic] = values
            x[list(basis)] = np.linalg.solve(AB, b - A[:, nonbasic] @ x[nonbasic])
            lo = np.array([bd[0] for bd in bounds])
            hi = np.array([bd[1] for bd in bounds])
            if np.all(x >= lo - tol) and np.all(x <= hi + tol):
                val = float(c @ x)
                if val < best_val:
                    best_val, best_x = val, x
    if best_x is None:
        raise ValueError("no feasible vertex: the program is infeasible")
    return best_val, best_x


# -- JSON problem files -----------------------------------------------------


def problem_to_dict(problem: ProblemInstance) -> dict:
    out = {
        "version": FORMAT_VERSION,
        "d": problem.d,
        "n": problem.n,
        "m": problem.m,
        "blocks": [
            {
                "client": owner,
                "n_i": blk.dim,
                "barrier": {"kind": blk.kind.value, "params": list(blk.params), "nu": blk.nu},
            }
            for blk, owner in zip(problem.blocks, problem.owners)
        ],
        "A": problem.A.tolist(),
        "b": problem.b.tolist(),
        "c": problem.c.tolist(),
        "L": problem.L,
        "R": problem.R,
    }
    if problem.seed is not None:
        out["seed"] = int(problem.seed)
    if problem.ref_opt is not None:
        out["ref_opt"] = float(problem.ref_opt)
    if problem.meta:
        out["meta"] = problem.meta
    return out


def problem_from_dict(data: dict) -> ProblemInstance:
    try:
        if data.get("version") != FORMAT_VERSION:
            raise ProblemFormatError(f"unsupported problem file version {data.get('version')!r}")
        blocks, owners = [], []
        for entry in data["blocks"]:
            blk = BlockBarrier.from_dict(entry["barrier"])
            if blk.dim != int(entry["n_i"]):
                raise ProblemFormatError(f"block n_i={entry['n_i']} does not match {blk.kind.value}")
            blocks.append(blk)
            owners.append(int(entry["client"]))
        problem = ProblemInstance(
            A=np.array(data["A"], dtype=float).reshape(int(data["d"]), int(data["n"])),
            b=data["b"],
            c=data["c"],
            blocks=blocks,
            L=data["L"],
            R=data["R"],
            owners=owners,
            ref_opt=data.get("ref_opt"),
            seed=data.get("seed"),
            meta=dict(data.get("meta", {})),
        )
    except ProblemFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"invalid problem file: {exc}") from exc
    if problem.m != int(data["m"]):
        raise ProblemFormatError(f"m={data['m']} but {problem.m} blocks listed")
    return problem


def dump_problem(problem: ProblemInstance) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(problem_to_dict(problem), indent=2) + "\n"


def save_problem(problem: ProblemInstance, path) -> None:
    Path(path).write_text(dump_problem(problem))


def load_problem(path) -> ProblemInstance:
    """Parse a problem file; JSON syntax errors propagate as ``json.JSONDecodeError``."""
    return problem_from_dict(json.loads(Path(path).read_text()))
