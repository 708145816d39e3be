"""AMS and SRHT sketch matrices.

Every sketch is a pure function of a :class:`SketchSpec`, so client and server
regenerate identical matrices from a shared seed and only the 18-byte spec
ever needs to cross the wire.
"""

from __future__ import annotations

import enum
import functools
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import hadamard

__all__ = [
    "MERSENNE_61",
    "SketchKind",
    "SketchSpec",
    "SketchMatrix",
    "derive_seed",
    "make_ams",
    "make_srht",
    "make_identity",
    "make_sketch",
    "sketch_specs",
    "estimate_vector",
    "ErrorProfileRow",
    "sketch_error_profile",
]

MERSENNE_61 = (1 << 61) - 1

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)
_MASK29 = _U64((1 << 29) - 1)
_P = _U64(MERSENNE_61)
_MASK64 = (1 << 64) - 1


class SketchKind(str, enum.Enum):
    AMS = "AMS"
    SRHT = "SRHT"
    IDENTITY = "IDENTITY-DEBUG"

    @classmethod
    def parse(cls, value) -> "SketchKind":
        if isinstance(value, cls):
            return value
        key = str(value).upper().replace("_", "-")
        if key in ("IDENTITY", "IDENTITY-DEBUG"):
            return cls.IDENTITY
        return cls(key)


_KIND_CODES = {SketchKind.AMS: 0, SketchKind.SRHT: 1, SketchKind.IDENTITY: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_SPEC_STRUCT = struct.Struct("<BIIQB")


@dataclass(frozen=True)
class SketchSpec:
    """Recipe for one ``rows x cols`` sketch.

    ``sketch_id`` tags which of the four sketches R1..R4 of a solve this is;
    together with ``seed`` it selects an independent random stream.
    """

    kind: SketchKind
    rows: int
    cols: int
    seed: int = 0
    sketch_id: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", SketchKind.parse(self.kind))
        if int(self.rows) < 1 or int(self.cols) < 1:
            raise ValueError(f"sketch dimensions must be positive, got {self.rows}x{self.cols}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not 0 <= int(self.sketch_id) <= 255:
            raise ValueError("sketch_id must fit in one byte")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "sketch_id", int(self.sketch_id))

    def to_bytes(self) -> bytes:
        return _SPEC_STRUCT.pack(
            _KIND_CODES[self.kind], self.rows, self.cols, self.seed, self.sketch_id
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SketchSpec":
        code, rows, cols, seed, sketch_id = _SPEC_STRUCT.unpack(bytes(data))
        try:
            kind = _CODE_KINDS[code]
        except KeyError:
            raise ValueError(f"unknown sketch kind code {code}") from None
        return cls(kind, rows, cols, seed, sketch_id)


@dataclass(frozen=True, eq=False)
class SketchMatrix:
    """A materialized sketch; ``entries`` is read-only."""

    spec: SketchSpec
    entries: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    def gram(self) -> np.ndarray:
        """``R^T R`` (``cols x cols``)."""
        return self.entries.T @ self.entries

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, sketch_id: int) -> int:
    """Per-sketch stream seed: ``seed XOR splitmix64(sketch_id)``."""
    return (int(seed) ^ _splitmix64(int(sketch_id))) & _MASK64


def _reduce61(x):
    # x < 2**64; one fold gives < 2**61 + 8, a conditional subtract finishes it.
    x = (x & _P) + (x >> _U64(61))
    return np.where(x >= _P, x - _P, x)


def _mulmod61(a, b):
    """``a * b mod (2**61 - 1)`` for uint64 arrays with entries below ``2**61``."""
    a_lo, a_hi = a & _MASK32, a >> _U64(32)
    b_lo, b_hi = b & _MASK32, b >> _U64(32)
    hh = (a_hi * b_hi) << _U64(3)  # 2**64 == 8 (mod p)
    mid = a_hi * b_lo + a_lo * b_hi
    mid = (mid >> _U64(29)) + ((mid & _MASK29) << _U64(32))
    ll = a_lo * b_lo
    ll = (ll & _P) + (ll >> _U64(61))
    return _reduce61(_reduce61(hh + mid) + ll)


def _poly_hash(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate degree-3 polynomials mod 2**61-1.

    ``coeffs`` has shape ``(..., 4)`` ordered from the leading coefficient;
    the result has shape ``coeffs.shape[:-1] + points.shape``.
    """
    coeffs = np.asarray(coeffs, dtype=_U64)
    x = np.asarray(points, dtype=_U64)
    acc = np.broadcast_to(coeffs[..., 0, None], coeffs.shape[:-1] + x.shape)
    for k in range(1, coeffs.shape[-1]):
        acc = _mulmod61(acc, x)
        acc = _reduce61(acc + coeffs[..., k, None])
    return acc


def _ams_coefficients(seed: int, rows: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, MERSENNE_61, size=(rows, 4), dtype=np.uint64)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def make_ams(spec: SketchSpec) -> SketchMatrix:
    """AMS sketch: row ``i`` is a 4-wise independent hash ``[d] -> {+-1/sqrt(b)}``.

    Each row hash is a random degree-3 polynomial over GF(2**61 - 1); the sign
    is the low bit of the hash value.
    """
    if spec.kind is not SketchKind.AMS:
        raise ValueError(f"make_ams needs an AMS spec, got {spec.kind.value}")
    coeffs = _ams_coefficients(derive_seed(spec.seed, spec.sketch_id), spec.rows)
    bits = _poly_hash(coeffs, np.arange(spec.cols, dtype=np.uint64)) & _U64(1)
    scale = 1.0 / np.sqrt(spec.rows)
    entries = np.where(bits == 1, scale, -scale)
    return SketchMatrix(spec, _readonly(entries))


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def make_srht(spec: SketchSpec) -> SketchMatrix:
    """Subsampled randomized Hadamard transform ``sqrt(N/b) S H D``.

    ``N`` is ``cols`` rounded up to a power of two; the padded columns are
    dropped from the result.
    """
    if spec.kind is not SketchKind.SRHT:
        raise ValueError(f"make_srht needs an SRHT spec, got {spec.kind.value}")
    size = _next_pow2(spec.cols)
    if spec.rows > size:
        raise ValueError(
            f"SRHT cannot sample {spec.rows} rows without replacement from {size}"
        )
    rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, spec.sketch_id)))
    signs = rng.choice(np.array([-1.0, 1.0]), size=size)
    rows = rng.choice(size, size=spec.rows, replace=False)
    # sqrt(N/b) * (H_pm1 / sqrt(N)) == H_pm1 / sqrt(b)
    entries = hadamard(size, dtype=np.float64)[rows][:, : spec.cols] * signs[: spec.cols]
    entries /= np.sqrt(spec.rows)
    return SketchMatrix(spec, _readonly(entries))


def make_identity(spec: SketchSpec) -> SketchMatrix:
    if spec.kind is not SketchKind.IDENTITY:
        raise ValueError(f"make_identity needs an IDENTITY-DEBUG spec, got {spec.kind.value}")
    if spec.rows != spec.cols:
        raise ValueError("IDENTITY-DEBUG sketches must be square (b == d)")
    return SketchMatrix(spec, _readonly(np.eye(spec.cols)))


_FACTORIES = {
    SketchKind.AMS: make_ams,
    SketchKind.SRHT: make_srht,
    SketchKind.IDENTITY: make_identity,
}


@functools.lru_cache(maxsize=256)
def make_sketch(spec: SketchSpec) -> SketchMatrix:
    """Materialize ``spec``; results are cached because the entries are read-only."""
    return _FACTORIES[spec.kind](spec)


def sketch_specs(
    kind, sizes: Sequence[int] | int, cols: int, seed: int = 0
) -> tuple[SketchSpec, SketchSpec, SketchSpec, SketchSpec]:
    """The four specs R1..R4 of one solve, sharing ``seed``.

    ``sizes`` is either one row count for all four sketches or four counts.
    IDENTITY-DEBUG ignores ``sizes`` and uses ``b = cols``.
    """
    kind = SketchKind.parse(kind)
    if np.ndim(sizes) == 0:
        sizes = [int(sizes)] * 4
    sizes = [int(b) for b in sizes]
    if len(sizes) != 4:
        raise ValueError("need exactly four sketch sizes b1..b4")
    if kind is SketchKind.IDENTITY:
        sizes = [cols] * 4
    return tuple(SketchSpec(kind, b, cols, seed, k + 1) for k, b in enumerate(sizes))


def estimate_vector(R: SketchMatrix, h) -> np.ndarray:
    """Unbiased sketch estimate ``R^T R h`` of ``h``."""
    h = np.asarray(h, dtype=float)
    entries = np.asarray(R)
    if h.ndim != 1 or h.shape[0] != entries.shape[1]:
        raise ValueError(
            f"vector of length {h.shape} does not match sketch with {entries.shape[1]} columns"
        )
    return entries.T @ (entries @ h)


@dataclass(frozen=True)
class ErrorProfileRow:
    b: int
    threshold: float
    violation_fraction: float
    q25: float
    median: float
    q75: float
    max: float


def sketch_error_profile(
    d: int,
    h,
    b_list: Sequence[int],
    trials: int,
    kind=SketchKind.AMS,
    seed: int = 0,
    delta: float = 0.01,
) -> list[ErrorProfileRow]:
    """Empirical deviation of ``R^T R h`` from ``h`` for each sketch size.

    The violation fraction counts (trial, coordinate) pairs whose deviation
    exceeds ``||h|| log(d / delta) / sqrt(b)``.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (d,):
        raise ValueError(f"h must have shape ({d},), got {h.shape}")
    kind = SketchKind.parse(kind)
    rows = []
    for b in b_list:
        if b < 1:
            raise ValueError("sketch sizes must be >= 1")
        dev = np.empty((trials, d))
        for t in range(trials):
            R = make_sketch(SketchSpec(kind, b, d, seed + t, 1))
            dev[t] = np.abs(estimate_vector(R, h) - h)
        threshold = np.linalg.norm(h) * np.log(d / delta) / np.sqrt(b)
        q25, q50, q75 = np.quantile(dev, [0.25, 0.5, 0.75])
        rows.append(
            ErrorProfileRow(
                b=int(b),
                threshold=float(threshold),
                violation_fraction=float(np.mean(dev > threshold)),
                q25=float(q25),
                median=float(q50),
                q75=float(q75),
                max=float(dev.max()),
            )
        )
    return rows
