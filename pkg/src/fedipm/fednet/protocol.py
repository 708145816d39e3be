"""Client and server state machines for the federated path-following loop.

One round ``t`` (all steps are synchronous barriers):

1. every client applies the previous broadcast and recomputes ``W_i``,
   ``mu_i`` and ``gamma_i``;
2. clients send ``log sum_j exp(2 lam gamma_j)`` over their blocks, the
   server replies with the global log-sum (control traffic);
3. clients send their sketched upload;
4. the server assembles ``P~``, damps the step into the Dikin ellipsoid and
   broadcasts each client's slice together with the decayed ``t``.

Round 0 is setup: clients report ``A_i x0_i`` so that the owner of the extra
coordinate can form its column ``b - A x0``.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ..barrier import BlockBarrier
from ..centralpath import (
    DIKIN_RADIUS,
    MAX_HALVINGS,
    HyperParams,
    PathState,
    analytic_center,
    centrality,
    initialize,
    weight_c,
)
from ..exceptions import (
    DomainViolation,
    IterationCapExceeded,
    LineSearchFailed,
    MissingUpload,
    ProtocolError,
)
from ..newton import ProjectionBundle, WeightMatrix, assemble_sketched_projection
from ..problem import ProblemInstance
from ..sketch import SketchSpec, make_sketch, sketch_specs
from ..solver import SolveResult, default_iteration_cap, make_trace_row
from .ledger import DOWN, UP, CommLedger
from .wire import (
    ClientUpload,
    ScalarExchange,
    ServerBroadcast,
    decode_message,
    encode_message,
)

__all__ = ["ClientState", "Client", "Server", "InProcessTransport", "run_federated"]

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ClientState:
    client_id: int
    A: np.ndarray
    c: np.ndarray
    x: np.ndarray
    s: np.ndarray
    blocks: list[BlockBarrier]
    columns: np.ndarray
    t_tilde: float = 1.0
    round: int = 0


class Client:
    """Holds ``A_i``, its barriers and local iterates; never transmits them."""

    def __init__(
        self,
        client_id: int,
        A_i: np.ndarray,
        c_i: np.ndarray,
        blocks: Sequence[BlockBarrier],
        columns: np.ndarray,
        specs: Sequence[SketchSpec],
        params: HyperParams,
        completion: str = "client",
        original_blocks: int | None = None,
    ):
        self.original_blocks = len(blocks) if original_blocks is None else int(original_blocks)
        self.specs = tuple(specs)
        self.sketches = [np.asarray(make_sketch(s)) for s in self.specs]
        self.params = params
        self.completion = completion
        self.state = ClientState(
            client_id, np.asarray(A_i, dtype=float), np.asarray(c_i, dtype=float),
            np.empty(0), np.empty(0), list(blocks), np.asarray(columns),
        )
        self._slices = []
        off = 0
        for blk in self.state.blocks:
            self._slices.append(slice(off, off + blk.dim))
            off += blk.dim
        self.offset = 0  # position of this client's slice in a full broadcast
        self._hess = None
        self._mu = None
        self._gamma = None

    @property
    def client_id(self) -> int:
        return self.state.client_id

    @property
    def n_i(self) -> int:
        return self.state.A.shape[1]

    # -- setup ----------------------------------------------------------

    def setup_report(self) -> ScalarExchange:
        """Compute ``x0_i`` and report ``A_i x0_i``; the extra coordinate starts at 1."""
        st = self.state
        original_blocks = self.original_blocks
        x0 = analytic_center(st.blocks[:original_blocks])
        if original_blocks < len(st.blocks):
            x0 = np.concatenate([x0, [1.0]])
        st.x = x0
        st.s = st.c.copy()
        k = sum(b.dim for b in st.blocks[:original_blocks])
        return ScalarExchange(0, self.client_id, st.A[:, :k] @ x0[:k])

    def setup_extra_column(self, msg: ScalarExchange) -> None:
        self.state.A = self.state.A.copy()
        self.state.A[:, -1] = msg.value

    # -- rounds ---------------------------------------------------------

    def apply(self, msg: ServerBroadcast | None) -> None:
        """Fold the server's step into the local iterate."""
        st = self.state
        if msg is None:
            return
        if msg.round != st.round:
            raise ProtocolError(f"client {self.client_id} at round {st.round} got broadcast for {msg.round}")
        dx, ds = msg.dx, msg.ds
        if dx.shape[0] != self.n_i:
            own = slice(self.offset, self.offset + self.n_i)
            dx, ds = dx[own], ds[own]
        if self.completion == "client":
            dx = self._W.sqrt() @ dx
            ds = self._W.inv_sqrt() @ ds
        x_new = st.x + dx
        for sl, blk in zip(self._slices, st.blocks):
            if not blk.is_interior(x_new[sl]):
                raise DomainViolation(f"client {self.client_id}: step leaves block interior at round {msg.round}")
        st.x = x_new
        st.s = st.s + ds
        st.t_tilde = msg.t_tilde

    def scalar_report(self, round: int) -> ScalarExchange:
        """Recompute ``W_i``, ``mu_i``, ``gamma_i`` and send the local log-sum."""
        st = self.state
        st.round = round
        hess, mus, gammas = [], [], []
        for sl, blk in zip(self._slices, st.blocks):
            _, g, H = blk.evaluate(st.x[sl])
            m_k = st.s[sl] / st.t_tilde + g
            hess.append(H)
            mus.append(m_k)
            gammas.append(float(np.sqrt(max(m_k @ np.linalg.solve(H, m_k), 0.0))))
        self._hess, self._mu, self._gamma = hess, mus, np.array(gammas)
        self._W = WeightMatrix.from_hessians(hess)
        value = logsumexp(2.0 * self.params.lam * self._gamma)
        return ScalarExchange(round, self.client_id, np.array([value]))

    def upload(self, reply: ScalarExchange) -> ClientUpload:
        st = self.state
        if reply.round != st.round:
            raise ProtocolError("normalization reply from a different round")
        weights = weight_c(self._gamma, self.params, log_norm=float(reply.value[0]))
        h = np.concatenate([-self.params.alpha * w * m for w, m in zip(weights, self._mu)])
        W = self._W
        R1, R2, R3, R4 = self.sketches
        C = W.sqrt() @ st.A.T
        extras = {}
        if self.completion == "server":
            extras = dict(
                extra_at=st.A.T @ R1.T,
                extra_wat=W.dense() @ st.A.T @ R1.T,
                extra_wh=W.dense() @ h,
            )
        return ClientUpload(
            st.round,
            self.client_id,
            U=C @ R1.T,
            M=R2 @ (st.A @ W.dense() @ st.A.T) @ R3.T,
            V=R4 @ C.T,
            h=W.sqrt() @ h,
            **extras,
        )


class Server:
    """Aggregates uploads in client-id order and computes the step.

    It sees only sketched pieces and the whitened direction; ``A``, ``x`` and
    ``W`` stay with the clients.
    """

    def __init__(
        self,
        client_ids: Sequence[int],
        specs: Sequence[SketchSpec],
        rate: float,
        completion: str = "client",
        broadcast: str = "slice",
    ):
        self.client_ids = sorted(client_ids)
        self.specs = tuple(specs)
        self.rate = rate
        self.completion = completion
        self.broadcast = broadcast
        self.round = 0
        self.t_tilde = 1.0
        self.last_alpha_sq = 0.0

    def setup(self, reports: Sequence[ScalarExchange], b: np.ndarray, extra_owner: int) -> ScalarExchange:
        reports = self._sorted(reports)
        total = np.zeros_like(np.asarray(b, dtype=float))
        for r in reports:
            total = total + r.value
        return ScalarExchange(0, extra_owner, np.asarray(b, dtype=float) - total)

    def _sorted(self, msgs):
        by_id = {}
        for msg in msgs:
            if msg.client_id in by_id:
                raise ProtocolError(f"duplicate message from client {msg.client_id}")
            by_id[msg.client_id] = msg
        missing = [c for c in self.client_ids if c not in by_id]
        if missing:
            raise MissingUpload(f"no message from clients {missing}")
        return [by_id[c] for c in self.client_ids]

    def normalize(self, reports: Sequence[ScalarExchange]) -> list[ScalarExchange]:
        reports = self._sorted(reports)
        self.round = reports[0].round
        total = float(np.logaddexp.reduce([float(r.value[0]) for r in reports]))
        return [ScalarExchange(self.round, c, np.array([total])) for c in self.client_ids]

    def step(self, uploads: Sequence[ClientUpload]) -> list[ServerBroadcast]:
        uploads = self._sorted(uploads)
        if any(u.round != self.round for u in uploads):
            raise ProtocolError("uploads from mixed rounds")
        sizes = [u.h.shape[0] for u in uploads]
        h_white = np.concatenate([u.h for u in uploads])
        if np.any(h_white):
            bundle = ProjectionBundle.from_pieces(
                [u.U for u in uploads], [u.M for u in uploads], [u.V for u in uploads], self.specs
            )
            Pt = assemble_sketched_projection(bundle)
            core = Pt.K @ (bundle.V @ h_white)
            z = bundle.U @ core
        else:
            core = None
            z = np.zeros_like(h_white)
        u = h_white - z
        v = self.t_tilde * z
        factor, halvings = 1.0, 0
        norm = float(np.linalg.norm(u))
        while norm * factor >= DIKIN_RADIUS:
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise LineSearchFailed(f"step still outside the Dikin ellipsoid after {MAX_HALVINGS} halvings")
            factor *= 0.5
        self.last_alpha_sq = (norm * factor) ** 2
        if self.completion == "server":
            if core is None:
                dx = np.zeros_like(h_white)
                ds = np.zeros_like(h_white)
            else:
                wh = np.concatenate([up.extra_wh for up in uploads])
                dx = wh - np.vstack([up.extra_wat for up in uploads]) @ core
                ds = self.t_tilde * (np.vstack([up.extra_at for up in uploads]) @ core)
        else:
            dx, ds = u, v
        if factor != 1.0:
            dx, ds = factor * dx, factor * ds
        self.t_tilde = self.rate ** self.round
        out = []
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for k, cid in enumerate(self.client_ids):
            if self.broadcast == "full":
                out.append(ServerBroadcast(self.round, cid, dx, ds, self.t_tilde))
            else:
                sl = slice(offsets[k], offsets[k + 1])
                out.append(ServerBroadcast(self.round, cid, dx[sl], ds[sl], self.t_tilde))
        return out


class InProcessTransport:
    """Ordered in-memory channels; every message is serialized and charged.

    ``arrival`` optionally permutes the order in which a batch of client
    messages reaches the server, to exercise order-independence.
    """

    def __init__(self, ledger: CommLedger | None = None, arrival: Callable[[list], list] | None = None):
        self.ledger = CommLedger() if ledger is None else ledger
        self.arrival = arrival
        self._to_server: deque[bytes] = deque()
        self._to_client: dict[int, deque[bytes]] = {}

    def _charge(self, msg, frame: bytes, direction: str) -> None:
        self.ledger.record(frame, msg.msg_type, msg.round, msg.client_id, direction)

    def send_to_server(self, msg) -> None:
        frame = encode_message(msg)
        self._charge(msg, frame, UP)
        self._to_server.append(frame)

    def send_to_client(self, msg) -> None:
        frame = encode_message(msg)
        self._charge(msg, frame, DOWN)
        self._to_client.setdefault(msg.client_id, deque()).append(frame)

    def server_gather(self) -> list:
        frames = list(self._to_server)
        self._to_server.clear()
        if self.arrival is not None:
            frames = self.arrival(frames)
        return [decode_message(f) for f in frames]

    def client_receive(self, client_id: int):
        queue = self._to_client.get(client_id)
        if not queue:
            raise ProtocolError(f"no message queued for client {client_id}")
        return decode_message(queue.popleft())


def _local_view(program, owner: int):
    cols, blocks, n_orig = [], [], 0
    for k, (sl, blk, own) in enumerate(zip(program.slices(), program.blocks, program.owners)):
        if own == owner:
            cols.extend(range(sl.start, sl.stop))
            blocks.append(blk)
            if k < program.problem.m:
                n_orig += 1
    return np.array(cols, dtype=int), blocks, n_orig


def _resolve_specs(specs, d: int):
    if specs is None:
        return sketch_specs("IDENTITY-DEBUG", d, d)
    specs = tuple(specs)
    for s in specs:
        if s.cols != d:
            raise ValueError(f"sketch spec has {s.cols} columns but the program has d={d} rows")
    return specs


def run_federated(
    problem: ProblemInstance,
    delta: float,
    params: HyperParams | None = None,
    specs=None,
    owners: Sequence[int] | None = None,
    completion: str = "client",
    broadcast: str = "slice",
    max_iter: int | None = None,
    arrival: Callable[[list], list] | None = None,
    workers: int | None = None,
) -> SolveResult:
    """Run the full protocol to the ``4 t nu <= delta**2`` target.

    ``owners`` assigns each original block to a client (defaults to
    ``problem.owners``); the extra coordinate goes to the largest client id.
    ``specs`` are the four sketch specs (IDENTITY-DEBUG when omitted).
    The returned result carries the :class:`CommLedger`; trace rows are
    computed by the simulator from the clients' iterates and are not traffic.
    """
    if completion not in ("client", "server"):
        raise ValueError("completion must be 'client' or 'server'")
    if broadcast not in ("slice", "full"):
        raise ValueError("broadcast must be 'slice' or 'full'")
    if owners is not None:
        problem = problem.with_owners(owners)
    program, ref_state = initialize(problem, delta)
    if params is None:
        params = HyperParams.practical(program.m)
    specs = _resolve_specs(specs, program.d)
    rate = program.schedule_rate(params)
    target = program.target_t()
    cap = default_iteration_cap(program, params) if max_iter is None else int(max_iter)

    transport = InProcessTransport(arrival=arrival)
    clients: list[Client] = []
    for cid in sorted(set(program.owners)):
        cols, blocks, n_orig = _local_view(program, cid)
        A_i = program.A[:, cols].copy()
        if cols[-1] == program.n - 1:
            A_i[:, -1] = 0.0  # the extra column arrives during setup
        clients.append(Client(cid, A_i, program.c[cols], blocks, cols, specs, params, completion, n_orig))
    offset = 0
    for c in clients:
        c.offset = offset
        offset += c.n_i
    extra_owner = program.owners[-1]
    server = Server([c.client_id for c in clients], specs, rate, completion, broadcast)
    pool = ThreadPoolExecutor(max_workers=workers) if workers else None

    def each(fn):
        if pool is None:
            return [fn(c) for c in clients]
        return list(pool.map(fn, clients))

    try:
        # round 0: setup
        for msg in each(lambda c: c.setup_report()):
            transport.send_to_server(msg)
        transport.send_to_client(server.setup(transport.server_gather(), problem.b, extra_owner))
        owner = next(c for c in clients if c.client_id == extra_owner)
        owner.setup_extra_column(transport.client_receive(extra_owner))

        def gather_state() -> PathState:
            x = np.empty(program.n)
            s = np.empty(program.n)
            for c in clients:
                x[c.state.columns] = c.state.x
                s[c.state.columns] = c.state.s
            return PathState(x, s, clients[0].state.t_tilde, rnd)

        rnd = 0
        state = gather_state()
        cen = centrality(program, state.x, state.s, state.t_tilde, params)
        trace = [make_trace_row(program, state, cen)]
        ledger = transport.ledger
        while state.t_tilde > target:
            if rnd >= cap:
                result = SolveResult(state.x[: problem.n].copy(), trace, state, program, params, False, ledger)
                raise IterationCapExceeded(f"federated run hit the cap of {cap} rounds", result)
            rnd += 1
            for msg in each(lambda c: c.scalar_report(rnd)):
                transport.send_to_server(msg)
            for msg in server.normalize(transport.server_gather()):
                transport.send_to_client(msg)
            for msg in each(lambda c: c.upload(transport.client_receive(c.client_id))):
                transport.send_to_server(msg)
            for msg in server.step(transport.server_gather()):
                transport.send_to_client(msg)
            each(lambda c: c.apply(transport.client_receive(c.client_id)))
            state = gather_state()
            state.iter = rnd
            state.t_tilde = server.t_tilde
            cen = centrality(program, state.x, state.s, state.t_tilde, params)
            trace.append(
                make_trace_row(
                    program, state, cen, ledger.uplink_words(rnd), ledger.downlink_words(rnd),
                    sum_alpha_sq=server.last_alpha_sq,
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()
    logger.info("federated run finished after %d rounds", rnd)
    return SolveResult(state.x[: problem.n].copy(), trace, state, program, params, True, ledger)
