"""Centralized solve loop and the per-iteration trace."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .centralpath import (
    HyperParams,
    ModifiedProgram,
    PathState,
    centrality,
    duality_gap_bound,
    initialize,
    path_step,
)
from .exceptions import IterationCapExceeded
from .problem import ProblemInstance

__all__ = ["Mode", "TRACE_COLUMNS", "TraceRow", "SolveResult", "solve", "default_iteration_cap", "write_trace_csv"]

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "iter",
    "t_tilde",
    "gamma_max",
    "phi",
    "gap_bound",
    "uplink_words",
    "downlink_words",
    "objective",
)


class Mode(str, enum.Enum):
    EXACT = "EXACT"
    SKETCHED = "SKETCHED"
    FEDERATED = "FEDERATED"


@dataclass
class TraceRow:
    iter: int
    t_tilde: float
    gamma_max: float
    phi: float
    gap_bound: float
    uplink_words: int
    downlink_words: int
    objective: float
    # not written to CSV
    modified_objective: float = float("nan")
    sum_alpha_sq: float = float("nan")
    feasibility: float = float("nan")

    def csv_values(self) -> list:
        return [getattr(self, c) for c in TRACE_COLUMNS]


def write_trace_csv(rows, fh=None) -> str:
    """Write rows with the fixed header; floats use ``repr`` so they round-trip."""
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.csv_values()])
    return buf.getvalue() if fh is None else ""


@dataclass(eq=False)
class SolveResult:
    x: np.ndarray
    trace: list[TraceRow]
    state: PathState
    program: ModifiedProgram
    params: HyperParams
    converged: bool
    ledger: object = None
    extras: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return self.state.iter

    @property
    def objective(self) -> float:
        return self.program.problem.objective(self.x)

    def summary(self) -> dict:
        problem = self.program.problem
        out = {
            "objective": self.objective,
            "ax_minus_b_l1": problem.infeasibility_l1(self.x),
            "rounds": self.rounds,
            "uplink_words": int(sum(r.uplink_words for r in self.trace)),
            "downlink_words": int(sum(r.downlink_words for r in self.trace)),
            "t_tilde_final": float(self.state.t_tilde),
            "converged": bool(self.converged),
            "feasibility_tolerance": problem.feasibility_tolerance(self.program.delta),
            "objective_tolerance": problem.L * problem.R * self.program.delta,
        }
        if problem.ref_opt is not None:
            out["ref_opt"] = float(problem.ref_opt)
            out["optimality_slack"] = self.objective - float(problem.ref_opt)
        if self.ledger is not None:
            out["control_words"] = int(self.ledger.total_control_words)
            out["setup_words"] = int(self.ledger.setup_words)
        return out


def default_iteration_cap(program: ModifiedProgram, params: HyperParams) -> int:
    rate = program.schedule_rate(params)
    return int(math.ceil(math.log(program.target_t()) / math.log(rate))) + 1


def make_trace_row(program, state, cen, uplink=0, downlink=0, sum_alpha_sq=float("nan")) -> TraceRow:
    n = program.problem.n
    return TraceRow(
        iter=state.iter,
        t_tilde=float(state.t_tilde),
        gamma_max=cen.gamma_max,
        phi=float(cen.phi),
        gap_bound=duality_gap_bound(state.t_tilde, program.nu),
        uplink_words=int(uplink),
        downlink_words=int(downlink),
        objective=program.problem.objective(state.x[:n]),
        modified_objective=float(program.c @ state.x),
        sum_alpha_sq=sum_alpha_sq,
        feasibility=float(np.max(np.abs(program.A @ state.x - program.b))),
    )


def solve(
    problem: ProblemInstance,
    delta: float,
    params: HyperParams | None = None,
    mode=Mode.EXACT,
    specs=None,
    max_iter: int | None = None,
) -> SolveResult:
    """Follow the central path of the modified program until ``4 t nu <= delta**2``.

    ``mode`` is EXACT (exact projection) or SKETCHED (``specs`` gives R1..R4).
    The centralized solver transmits nothing, so its word columns are zero.
    """
    mode = Mode(str(getattr(mode, "value", mode)).upper())
    if mode is Mode.FEDERATED:
        raise ValueError("use fedipm.fednet.run_federated for FEDERATED mode")
    if mode is Mode.SKETCHED and specs is None:
        raise ValueError("SKETCHED mode needs sketch specs")
    program, state = initialize(problem, delta)
    if params is None:
        params = HyperParams.practical(program.m)
    cap = default_iteration_cap(program, params) if max_iter is None else int(max_iter)
    use_specs = specs if mode is Mode.SKETCHED else None
    target = program.target_t()
    trace = []
    cen = centrality(program, state.x, state.s, state.t_tilde, params)
    trace.append(make_trace_row(program, state, cen))
    while state.t_tilde > target:
        if state.iter >= cap:
            result = SolveResult(state.x[: problem.n].copy(), trace, state, program, params, False)
            raise IterationCapExceeded(
                f"t_tilde={state.t_tilde:.3e} above target {target:.3e} after {cap} iterations", result
            )
        state = path_step(program, state, params, use_specs, cen)
        cen = centrality(program, state.x, state.s, state.t_tilde, params)
        trace.append(make_trace_row(program, state, cen, sum_alpha_sq=state.diagnostics["sum_alpha_sq"]))
        if state.iter % 1000 == 0:
            logger.debug("iter %d t=%.3e gamma_max=%.3e", state.iter, state.t_tilde, cen.gamma_max)
    logger.info("solved in %d iterations, objective %.6g", state.iter, trace[-1].objective)
    return SolveResult(state.x[: problem.n].copy(), trace, state, program, params, True)
