"""Report generation: weight statistics, compression, cycle comparison, FIR demo."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.signal

from .engines import run_accumulator, run_blmac, run_naive_mac
from .pvq import PvqVector, pvq_quantize, q_for
from .rle import (
    build_model,
    encode_bitlayer_rle,
    encode_weight_rle,
    estimate_bits,
    header_size,
    range_encode,
)
from .sdr import pulse_counts, pulse_stats, to_digit_matrix
from .weights_io import LayerSpec, synth_laplacian

__all__ = [
    "BANDS",
    "HistogramReport",
    "weight_histogram",
    "CompressionRow",
    "compression_report",
    "CycleRow",
    "CycleTable",
    "layer_cycle_row",
    "naf_width",
    "cycle_comparison",
    "cycle_totals",
    "TINYYOLO_LAYERS",
    "synthetic_network",
    "pulse_table",
    "FirReport",
    "fir_frequency_response",
    "fir_compare",
    "design_bandpass",
    "to_int16_taps",
    "rows_to_csv",
    "render_text",
]

DB_FLOOR = -160.0

# (label, low, high) on |w|; high is None for the open top band
BANDS = (
    ("0", 0, 0),
    ("+-1", 1, 1),
    ("+-2-3", 2, 3),
    ("+-4-7", 4, 7),
    ("+-8-15", 8, 15),
    ("+-16-31", 16, 31),
    ("+-32-63", 32, 63),
    (">=64", 64, None),
)


@dataclass
class HistogramReport:
    percentages: dict[str, float]
    count: int
    label: str = ""

    def row(self) -> dict:
        out = {"layer": self.label, "count": self.count}
        out.update({f"% {k}": f"{v:.4f}" for k, v in self.percentages.items()})
        return out


def weight_histogram(codes, label: str = "") -> HistogramReport:
    a = np.abs(np.asarray(codes, dtype=np.int64).reshape(-1))
    if a.size == 0:
        raise ValueError("histogram of an empty vector")
    pct = {}
    for name, lo, hi in BANDS:
        mask = a >= lo if hi is None else (a >= lo) & (a <= hi)
        pct[name] = 100.0 * int(mask.sum()) / a.size
    return HistogramReport(pct, int(a.size), label)


@dataclass
class CompressionRow:
    label: str
    mode: str
    n: int
    estimate_bits: float
    payload_bits: int
    model_bits: int
    file_bits: int

    @property
    def bits_per_weight(self) -> float:
        return self.estimate_bits / self.n if self.n else 0.0

    @property
    def coded_bits_per_weight(self) -> float:
        return self.payload_bits / self.n if self.n else 0.0

    def row(self) -> dict:
        return {
            "layer": self.label,
            "mode": self.mode,
            "n": self.n,
            "bits": f"{self.estimate_bits:.1f}",
            "bits/weight": f"{self.bits_per_weight:.4f}",
            "coded_bits": self.payload_bits,
            "coded_bits/weight": f"{self.coded_bits_per_weight:.4f}",
            "model_bits": self.model_bits,
            "file_bits": self.file_bits,
        }


def compression_report(codes, label: str = "", q: int | None = None,
                       rho: float = 1.0, modes: Sequence[str] = ("weights", "bitlayers")
                       ) -> list[CompressionRow]:
    """Entropy-bound and range-coded sizes for weight-level and NAF bit-layer streams."""
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    q = int(np.abs(codes).sum()) if q is None else q
    rows = []
    for mode in modes:
        if mode == "weights":
            s = encode_weight_rle(codes)
        elif mode == "bitlayers":
            s = encode_bitlayer_rle(to_digit_matrix(codes, "naf"))
        else:
            raise ValueError(f"unknown compression mode {mode!r}")
        blob = range_encode(s, q=q, rho=rho)
        payload = (len(blob) - header_size(blob)) * 8
        rows.append(CompressionRow(label, mode, codes.size, estimate_bits(s), payload,
                                   build_model(s).table_bits(), len(blob) * 8))
    return rows


@dataclass
class CycleRow:
    label: str
    n: int
    q: int
    nz: int
    ns_pulses: int
    ns_cycles: int
    output_positions: int = 1
    shifts: int = 0

    def __post_init__(self):
        if not self.nz <= self.ns_pulses <= self.q:
            raise ValueError(
                f"layer {self.label}: expected NZ <= pulses <= Q, got "
                f"{self.nz}, {self.ns_pulses}, {self.q}"
            )

    def row(self) -> dict:
        return {
            "layer": self.label,
            "N": self.n,
            "Q": self.q,
            "NZ": self.nz,
            "Ns_pulses": self.ns_pulses,
            "Ns_cycles": self.ns_cycles,
            "positions": self.output_positions,
        }


@dataclass
class CycleTable:
    rows: list[CycleRow]
    totals: dict[str, int] = field(default_factory=dict)
    per_weight: dict[str, float] = field(default_factory=dict)

    def table_rows(self) -> list[dict]:
        out = [r.row() for r in self.rows]
        total = {"layer": "Total", "positions": ""}
        total.update({k: v for k, v in self.totals.items()})
        out.append(total)
        return out

    def average_rows(self) -> list[dict]:
        return [{"metric": k, "per_weight": f"{v:.4f}"} for k, v in self.per_weight.items()]


def cycle_totals(rows: Iterable[CycleRow]) -> tuple[dict[str, int], dict[str, float]]:
    """Whole-image totals: each per-position count weighted by its layer's positions."""
    rows = list(rows)
    keys = {"N": "n", "Q": "q", "NZ": "nz", "Ns_pulses": "ns_pulses", "Ns_cycles": "ns_cycles"}
    totals = {k: sum(getattr(r, a) * r.output_positions for r in rows) for k, a in keys.items()}
    n = totals["N"]
    per_weight = {
        "mac_cycles": 1.0 if n else 0.0,
        "zeroskip_cycles": totals["NZ"] / n if n else 0.0,
        "accum_adds": totals["Q"] / n if n else 0.0,
        "blmac_pulses": totals["Ns_pulses"] / n if n else 0.0,
        "blmac_cycles": totals["Ns_cycles"] / n if n else 0.0,
    }
    return totals, per_weight


def layer_cycle_row(v: PvqVector, label: str = "", output_positions: int = 1,
                    policy: str = "shift_counted") -> CycleRow:
    """BLMAC cost of one quantized layer in NAF, MSB first; counts per output position."""
    codes = v.codes
    pulses = int(pulse_counts(codes).sum())
    shifts = naf_width(codes) - 1
    cycles = pulses + (shifts if policy == "shift_counted" else 0)
    return CycleRow(label, v.n, v.q, int(np.count_nonzero(codes)), pulses, cycles,
                    output_positions, shifts)


def naf_width(codes) -> int:
    """Layer count of the NAF plan for ``codes`` (at least one layer).

    The NAF of a > 0 has bitlength(3a) - 1 digits, monotone in a.
    """
    a = np.abs(np.asarray(codes, dtype=np.int64))
    peak = int(a.max()) if a.size else 0
    return max(1, (3 * peak).bit_length() - 1)


def cycle_comparison(layers: Sequence[LayerSpec], q_over_n=Fraction(3, 2),
                     first_layer_q_over_n=None, policy: str = "shift_counted",
                     overrides: dict[int, object] | None = None) -> CycleTable:
    """Quantize each layer as one pyramid vector and tabulate N, Q, NZ and BLMAC cost."""
    rows = []
    for idx, spec in enumerate(layers):
        ratio = q_over_n
        if idx == 0 and first_layer_q_over_n is not None:
            ratio = first_layer_q_over_n
        if overrides and idx in overrides:
            ratio = overrides[idx]
        t = spec.tensor
        if t.mode == "integer":
            codes = t.flat()
            v = PvqVector(1.0, codes, int(np.abs(codes).sum()))
        else:
            v = pvq_quantize(t.flat(), q_for(t.size, ratio))
        rows.append(layer_cycle_row(v, spec.label or str(idx), spec.output_positions, policy))
    totals, per_weight = cycle_totals(rows)
    return CycleTable(rows, totals, per_weight)


def _positions(h: int, w: int) -> int:
    return h * w


# Convolutional layers of TinyYolo v3 (kernel shape, output positions at a
# 416x320 input).  Row 6's kernel is 3x3x64x128 = 73,728 weights.
TINYYOLO_LAYERS = (
    ("0", (3, 3, 3, 16), _positions(416, 320)),
    ("2", (3, 3, 16, 32), _positions(208, 160)),
    ("4", (3, 3, 32, 64), _positions(104, 80)),
    ("6", (3, 3, 64, 128), _positions(52, 40)),
    ("8", (3, 3, 128, 256), _positions(26, 20)),
    ("10", (3, 3, 256, 512), _positions(13, 10)),
    ("12", (3, 3, 512, 1024), _positions(13, 10)),
    ("13", (1, 1, 1024, 256), _positions(13, 10)),
    ("14", (3, 3, 256, 512), _positions(13, 10)),
    ("15", (1, 1, 512, 255), _positions(13, 10)),
    ("18", (1, 1, 256, 128), _positions(13, 10)),
    ("20", (3, 3, 384, 256), _positions(26, 20)),
    ("21", (1, 1, 256, 255), _positions(26, 20)),
)


def synthetic_network(seed: int = 1, scale: float = 1.0, channel_divisor: int = 1) -> list[LayerSpec]:
    """Laplacian stand-ins with TinyYolo v3 kernel shapes and feature-map sizes.

    ``channel_divisor`` shrinks the channel dimensions for quick runs.
    """
    specs = []
    for i, (label, shape, positions) in enumerate(TINYYOLO_LAYERS):
        kh, kw, cin, cout = shape
        if channel_divisor > 1:
            cin = max(1, cin // channel_divisor) if i else cin
            cout = max(1, cout // channel_divisor)
        dims = (kh, kw, cin, cout)
        count = math.prod(dims)
        t = synth_laplacian(count, scale, seed + i, shape=dims)
        specs.append(LayerSpec(t, positions, label))
    return specs


def pulse_table(nb_max: int = 24, nb_min: int = 1) -> list[dict]:
    rows = []
    for nb in range(nb_min, nb_max + 1):
        st = pulse_stats(nb)
        rows.append({"nb": nb, "avg": f"{st.avg:.6f}", "avg_2dp": f"{st.avg:.2f}", "max": st.max})
    return rows


# -- FIR demonstration -------------------------------------------------------------

@dataclass
class FirReport:
    taps: int
    q: int
    additions: dict[str, int]
    multiplications: dict[str, int]
    freqs: np.ndarray = field(repr=False)
    orig_db: np.ndarray = field(repr=False)
    pvq_db: np.ndarray = field(repr=False)
    int_taps: np.ndarray = field(repr=False)
    pvq: PvqVector = field(repr=False)

    COLUMNS = ("MAC", "BLMAC", "PVQ", "PVQ+BLMAC")

    def table_rows(self) -> list[dict]:
        add = {"Operations": "Additions"}
        mul = {"Operations": "Multiplications"}
        for c in self.COLUMNS:
            add[c] = self.additions[c]
            mul[c] = self.multiplications[c]
        return [add, mul]

    def response_rows(self, which: str) -> list[dict]:
        db = self.orig_db if which == "orig" else self.pvq_db
        return [{"freq_hz": f"{f:.6f}", "db": f"{d:.6f}"} for f, d in zip(self.freqs, db)]


def fir_frequency_response(taps, sample_rate: float, grid_points: int = 1024
                           ) -> tuple[np.ndarray, np.ndarray]:
    """|H(f)| in dB on a uniform grid over [0, fs/2], floored at -160 dB."""
    h = np.asarray(taps, dtype=np.float64).reshape(-1)
    if h.size < 1:
        raise ValueError("need at least one tap")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    f = np.linspace(0.0, sample_rate / 2.0, grid_points)
    k = np.arange(h.size)
    mag = np.abs(np.exp(-2j * np.pi * np.outer(f, k) / sample_rate) @ h)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return f, np.maximum(db, DB_FLOOR)


def design_bandpass(taps: int, low: float, high: float, fs: float) -> np.ndarray:
    """Hamming-windowed sinc bandpass, linear phase, unity gain mid-band.

    The cutoffs sit half a Hamming transition width (1.65 fs / taps) outside
    [low, high] so the whole requested band is passband.
    """
    if taps < 3 or taps % 2 == 0:
        raise ValueError("bandpass needs an odd tap count >= 3")
    if not 0 < low < high < fs / 2:
        raise ValueError("need 0 < low < high < fs/2")
    half_tw = 1.65 * fs / taps
    lo = max(low - half_tw, fs * 1e-6)
    hi = min(high + half_tw, fs / 2 * (1 - 1e-6))
    h = scipy.signal.firwin(taps, [lo, hi], window="hamming", pass_zero=False, fs=fs)
    return 0.5 * (h + h[::-1])


def to_int16_taps(taps) -> np.ndarray:
    """Scale so the largest |tap| maps to 32767, round half to even."""
    h = np.asarray(taps)
    if h.dtype.kind in "iu":
        return h.astype(np.int64)
    peak = float(np.max(np.abs(h)))
    if peak == 0.0:
        return np.zeros(h.size, dtype=np.int64)
    return np.rint(h * ((2**15 - 1) / peak)).astype(np.int64)


def fir_compare(taps, q: int, sample_rate: float = 2000.0, grid_points: int = 1024) -> FirReport:
    h = np.asarray(taps).reshape(-1)
    if h.size == 0:
        raise ValueError("need at least one tap")
    ints = to_int16_taps(h)
    probe = np.zeros(h.size, dtype=np.int64)

    mac = run_naive_mac(ints, probe)
    blmac = run_blmac(to_digit_matrix(ints, "naf"), probe)
    v = pvq_quantize(h.astype(np.float64), q)
    acc = run_accumulator(v.codes, probe, rho=v.rho)
    pvq_blmac = run_blmac(to_digit_matrix(v.codes, "naf"), probe, rho=v.rho)

    additions = {
        "MAC": mac.adds,
        "BLMAC": blmac.adds + blmac.subs,
        "PVQ": acc.adds + acc.subs,
        "PVQ+BLMAC": pvq_blmac.adds + pvq_blmac.subs,
    }
    multiplications = {
        "MAC": mac.mults,
        "BLMAC": blmac.mults,
        "PVQ": acc.mults + acc.scale_mults,
        "PVQ+BLMAC": pvq_blmac.mults + pvq_blmac.scale_mults,
    }
    f, orig_db = fir_frequency_response(h.astype(np.float64), sample_rate, grid_points)
    _, pvq_db = fir_frequency_response(v.rho * v.codes, sample_rate, grid_points)
    return FirReport(h.size, q, additions, multiplications, f, orig_db, pvq_db, ints, v)


# -- output helpers ---------------------------------------------------------------

def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def render_text(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    cells = [[str(r.get(k, "")) for k in fields] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(fields)]
    lines = ["  ".join(k.rjust(w) for k, w in zip(fields, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"
