"""Exact communication accounting in 64-bit words."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .wire import MsgType, data_words

__all__ = ["FrameRecord", "CommLedger", "ledger_formula", "control_formula"]

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class FrameRecord:
    round: int
    msg_type: MsgType
    client_id: int
    direction: str
    words: int
    nbytes: int


@dataclass
class CommLedger:
    """Every frame that crossed the transport, with per-round and per-client views.

    * ``uplink``: upload frames (client -> server).
    * ``downlink``: broadcast frames (server -> client).
    * ``control``: scalar exchanges during iterations, both directions.
    * ``setup``: scalar exchanges in round 0 (initial-point bookkeeping).
    """

    records: list[FrameRecord] = field(default_factory=list)
    _by_round: dict = field(default_factory=lambda: defaultdict(list), init=False, repr=False)

    def __post_init__(self):
        for r in self.records:
            self._by_round[r.round].append(r)

    def record(self, frame: bytes, msg_type: MsgType, round: int, client_id: int, direction: str) -> None:
        rec = FrameRecord(round, MsgType(msg_type), client_id, direction, data_words(frame), len(frame))
        self.records.append(rec)
        self._by_round[round].append(rec)

    def _round_sum(self, round: int | None, msg_type: MsgType) -> int:
        pool = self.records if round is None else self._by_round.get(round, ())
        return sum(r.words for r in pool if r.msg_type is msg_type)

    def _sum(self, pred) -> int:
        return sum(r.words for r in self.records if pred(r))

    def uplink_words(self, round: int | None = None) -> int:
        return self._round_sum(round, MsgType.UPLOAD)

    def downlink_words(self, round: int | None = None) -> int:
        return self._round_sum(round, MsgType.BROADCAST)

    def control_words(self, round: int | None = None) -> int:
        return self._sum(
            lambda r: r.msg_type is MsgType.SCALAR and r.round > 0 and (round is None or r.round == round)
        )

    @property
    def total_uplink_words(self) -> int:
        return self.uplink_words()

    @property
    def total_downlink_words(self) -> int:
        return self.downlink_words()

    @property
    def total_control_words(self) -> int:
        return self.control_words()

    @property
    def setup_words(self) -> int:
        return self._sum(lambda r: r.msg_type is MsgType.SCALAR and r.round == 0)

    @property
    def total_bytes(self) -> int:
        return sum(r.nbytes for r in self.records)

    @property
    def rounds(self) -> list[int]:
        return sorted({r.round for r in self.records if r.round > 0})

    def per_round(self) -> dict[int, dict[str, int]]:
        out: dict[int, dict[str, int]] = defaultdict(lambda: {"uplink": 0, "downlink": 0, "control": 0})
        for r in self.records:
            if r.round == 0:
                continue
            key = {MsgType.UPLOAD: "uplink", MsgType.BROADCAST: "downlink", MsgType.SCALAR: "control"}[r.msg_type]
            out[r.round][key] += r.words
        return dict(sorted(out.items()))

    def per_client(self) -> dict[int, dict[str, int]]:
        out: dict[int, dict[str, int]] = defaultdict(lambda: {"uplink": 0, "downlink": 0, "control": 0, "setup": 0})
        for r in self.records:
            if r.msg_type is MsgType.SCALAR:
                key = "setup" if r.round == 0 else "control"
            else:
                key = "uplink" if r.msg_type is MsgType.UPLOAD else "downlink"
            out[r.client_id][key] += r.words
        return dict(sorted(out.items()))


def ledger_formula(
    sizes: Sequence[int],
    b: Sequence[int] | int,
    completion: str = "client",
    broadcast: str = "slice",
) -> tuple[int, int]:
    """Per-round ``(uplink, downlink)`` words for clients holding ``sizes[i]`` columns.

    Uplink per client is ``n_i b1 + b2 b3 + b4 n_i + n_i``; server completion
    adds ``2 n_i b1 + n_i``. Downlink per client is ``2 n_i + 1``, or
    ``2 n + 1`` when every client receives the full step vectors.
    """
    b1, b2, b3, b4 = (b,) * 4 if isinstance(b, int) else tuple(b)
    n = sum(sizes)
    up = down = 0
    for n_i in sizes:
        up += n_i * b1 + b2 * b3 + b4 * n_i + n_i
        if completion == "server":
            up += 2 * n_i * b1 + n_i
        down += (2 * n + 1) if broadcast == "full" else (2 * n_i + 1)
    return up, down


def control_formula(m: int) -> int:
    """Per-round control words: one scalar up and one down per client."""
    return 2 * m
