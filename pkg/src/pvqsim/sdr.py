"""Signed-digit recoding of integer weights into bit-layer digit plans.

Digit plans are ``nb x n`` matrices whose row ``i`` holds the digits of weight
``2**i`` (row 0 is the LSB layer).  Printing helpers render MSB first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MODES",
    "DigitMatrix",
    "PulseStats",
    "naf_encode",
    "pulse_count",
    "pulse_counts",
    "to_digit_matrix",
    "pulse_stats",
]

MODES = ("binary", "twos_complement", "naf")
_LIMIT = 1 << 62


@dataclass
class DigitMatrix:
    digits: np.ndarray
    mode: str

    def __post_init__(self):
        self.digits = np.asarray(self.digits, dtype=np.int8)
        if self.digits.ndim != 2:
            raise ValueError("digit plan must be 2-D (layers x weights)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def nb(self) -> int:
        return self.digits.shape[0]

    @property
    def n(self) -> int:
        return self.digits.shape[1]

    def layer_weights(self) -> list[int]:
        """Signed weight of each layer; the two's-complement top layer is negative."""
        w = [1 << i for i in range(self.nb)]
        if self.mode == "twos_complement" and self.nb:
            w[-1] = -w[-1]
        return w

    def values(self) -> list[int]:
        lw = self.layer_weights()
        return [
            sum(int(self.digits[i, j]) * lw[i] for i in range(self.nb))
            for j in range(self.n)
        ]

    def pulses(self) -> int:
        return int(np.count_nonzero(self.digits))

    def msb_first(self) -> np.ndarray:
        return self.digits[::-1]

    def render(self) -> str:
        rows = []
        for i in range(self.nb - 1, -1, -1):
            rows.append(f"{i:>3} " + " ".join(f"{int(d):>3}" for d in self.digits[i]))
        return "\n".join(rows)


@dataclass(frozen=True)
class PulseStats:
    nb: int
    avg: float
    max: int
    total: int = 0


def naf_encode(w: int) -> list[int]:
    """Non-adjacent form of ``w``, LSB first.  ``0`` gives an empty list."""
    w = int(w)
    if abs(w) >= _LIMIT:
        raise ValueError("|w| must be below 2**62")
    digits = []
    while w:
        if w & 1:
            d = 2 - (w & 3)    # +1 if w = 1 mod 4, -1 if w = 3 mod 4
            w -= d
        else:
            d = 0
        digits.append(d)
        w >>= 1
    return digits


def pulse_count(w: int) -> int:
    return sum(1 for d in naf_encode(w) if d)


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    a = a - ((a >> np.uint64(1)) & np.uint64(0x5555555555555555))
    a = (a & np.uint64(0x3333333333333333)) + ((a >> np.uint64(2)) & np.uint64(0x3333333333333333))
    a = (a + (a >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((a * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


def pulse_counts(w) -> np.ndarray:
    """Vectorized NAF weight: nonzero NAF digits of x equal popcount((3x ^ x) >> 1)."""
    a = np.abs(np.asarray(w, dtype=np.int64))
    if a.size and a.max() >= (1 << 61):
        return np.array([pulse_count(int(v)) for v in a.reshape(-1)]).reshape(a.shape)
    return _popcount(((3 * a) ^ a) >> 1)


def to_digit_matrix(w, mode: str = "naf", width: int | None = None) -> DigitMatrix:
    """Recode an integer vector into a digit plan.

    ``width`` forces the layer count; it must be large enough for every value.
    Without it the narrowest sufficient width is used (at least one layer).
    """
    vals = [int(v) for v in np.asarray(w).reshape(-1)]
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")

    if mode == "binary":
        if any(v < 0 for v in vals):
            raise ValueError("binary mode requires non-negative weights")
        cols = [[(v >> i) & 1 for i in range(v.bit_length())] for v in vals]
    elif mode == "naf":
        cols = [naf_encode(v) for v in vals]
    else:
        need = max([_twos_width(v) for v in vals], default=1)
        nb = need if width is None else width
        if nb < need:
            raise ValueError(f"width {nb} cannot hold values needing {need} bits")
        cols = [[(v >> i) & 1 for i in range(nb)] for v in vals]

    need = max([len(c) for c in cols], default=0)
    nb = max(need, 1) if width is None else width
    if nb < need:
        raise ValueError(f"width {nb} cannot hold values needing {need} digits")
    digits = np.zeros((nb, len(vals)), dtype=np.int8)
    for j, col in enumerate(cols):
        digits[: len(col), j] = col
    return DigitMatrix(digits, mode)


def _twos_width(v: int) -> int:
    if v >= 0:
        return v.bit_length() + 1
    return (-v - 1).bit_length() + 1


def pulse_stats(nb: int, chunk: int = 1 << 20) -> PulseStats:
    """Mean and max NAF pulse count over every integer in [0, 2**nb - 1]."""
    if not 1 <= nb <= 24:
        raise ValueError("nb must be in 1..24")
    total = 0
    peak = 0
    count = 1 << nb
    for start in range(0, count, chunk):
        block = pulse_counts(np.arange(start, min(start + chunk, count), dtype=np.int64))
        total += int(block.sum())
        peak = max(peak, int(block.max()))
    return PulseStats(nb, total / count, peak, total)
