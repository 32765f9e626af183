"""Pyramid vector quantization of real weight vectors.

A vector ``w`` is approximated by ``rho * codes`` where ``codes`` is an integer
vector with ``sum(|codes|) == q``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .weights_io import WeightTensor

__all__ = [
    "DegenerateInputError",
    "PvqVector",
    "pvq_quantize",
    "pvq_reconstruct",
    "pvq_quantize_tensor",
    "q_for",
    "write_sidecar",
    "read_sidecar",
]


class DegenerateInputError(ValueError):
    pass


@dataclass
class PvqVector:
    rho: float
    codes: np.ndarray
    q: int

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        self.q = int(self.q)
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if int(np.abs(self.codes).sum()) != self.q:
            raise ValueError(f"sum |codes| = {int(np.abs(self.codes).sum())} != q = {self.q}")

    @property
    def n(self) -> int:
        return self.codes.size


def _fit_rho(w: np.ndarray, codes: np.ndarray) -> float:
    kk = float(codes @ codes)
    if kk == 0.0:
        return 0.0
    return max(0.0, float(w @ codes) / kk)


def pvq_quantize(w, q: int) -> PvqVector:
    """Project ``w`` onto the integer pyramid of radius ``q``.

    Codes start from ``round(s * w)`` with ``s = q / sum|w|``; the L1 norm is
    then repaired one unit at a time, always touching the component whose
    magnitude residual ``|s*w_j| - |k_j|`` is most positive (to grow) or most
    negative (to shrink), lowest index first on ties.  ``rho`` is the
    least-squares scale for the final codes.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    q = int(q)
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if w.size == 0:
        raise ValueError("cannot quantize an empty vector")
    l1 = float(np.abs(w).sum())
    if l1 == 0.0:
        raise DegenerateInputError("all-zero vector has no pyramid projection")

    target = np.abs(w) * (q / l1)
    mags = np.rint(target).astype(np.int64)
    deficit = q - int(mags.sum())

    idx = np.arange(w.size)
    while deficit != 0:
        resid = target - mags
        if deficit > 0:
            m = min(deficit, w.size)
            # largest residual first, lowest index on ties
            order = np.lexsort((idx, -resid))[:m]
            mags[order] += 1
            deficit -= m
        else:
            live = np.flatnonzero(mags > 0)
            m = min(-deficit, live.size)
            order = live[np.lexsort((live, resid[live]))[:m]]
            mags[order] -= 1
            deficit += m

    if w.size <= REFINE_MAX_N:
        mags = _refine(np.abs(w), mags)
    sign = np.where(w < 0, -1, 1)
    codes = sign * mags
    return PvqVector(_fit_rho(w, codes), codes, q)


# Pairwise refinement is O(N^2) per sweep; large layers keep the plain repair.
REFINE_MAX_N = 64


def _refine(a: np.ndarray, mags: np.ndarray) -> np.ndarray:
    """Hill-climb unit transfers k_src -= 1, k_dst += 1 while the residual drops.

    With the least-squares rho the squared residual is ``|w|^2 - c^2/e`` where
    ``c = sum a_j k_j`` and ``e = sum k_j^2``, so each move maximizes ``c^2/e``.
    """
    mags = mags.copy()
    c = float(a @ mags)
    e = float(mags @ mags)
    while True:
        # src on rows, dst on columns
        dc = a[None, :] - a[:, None]
        de = 2.0 * (mags[None, :] - mags[:, None]) + 2.0
        np.fill_diagonal(de, 0.0)
        np.fill_diagonal(dc, 0.0)
        gain = (c + dc) ** 2 / (e + de)
        gain[mags == 0, :] = -np.inf
        np.fill_diagonal(gain, -np.inf)
        best = int(np.argmax(gain))
        if gain.flat[best] <= c * c / e * (1.0 + 1e-12):
            return mags
        src, dst = divmod(best, a.size)
        c += dc[src, dst]
        e += de[src, dst]
        mags[src] -= 1
        mags[dst] += 1


def pvq_reconstruct(v: PvqVector) -> np.ndarray:
    return v.rho * v.codes.astype(np.float64)


def q_for(n: int, q_over_n) -> int:
    """Q = round(q_over_n * N) with exact rational arithmetic, half away from zero."""
    ratio = Fraction(q_over_n) if not isinstance(q_over_n, float) else Fraction(str(q_over_n))
    exact = ratio * n
    q = int(exact)
    if exact - q >= Fraction(1, 2):
        q += 1
    return max(q, 1)


def pvq_quantize_tensor(t: WeightTensor, q_over_n) -> PvqVector:
    if t.mode != "real":
        raise ValueError("pvq_quantize_tensor expects a real-mode tensor")
    w = t.flat()
    return pvq_quantize(w, q_for(w.size, q_over_n))


def parse_ratio(text: str) -> Fraction:
    """Parse '3/2', '1.5' or '4' into an exact fraction."""
    try:
        r = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a ratio: {text!r}") from None
    if r <= 0:
        raise ValueError(f"ratio must be positive: {text!r}")
    return r


def write_sidecar(v: PvqVector, path) -> None:
    Path(path).write_text(f"rho={v.rho!r} q={v.q} n={v.n}\n")


_SIDECAR = re.compile(r"^rho=(\S+) q=(\d+) n=(\d+)\s*$")


def read_sidecar(path) -> tuple[float, int, int]:
    text = Path(path).read_text()
    m = _SIDECAR.match(text)
    if not m:
        raise ValueError(f"{path}: malformed sidecar {text!r}")
    return float(m.group(1)), int(m.group(2)), int(m.group(3))
