"""Cycle-accounted dot-product datapath models.

Five engines share one report type:

* ``naive``    - one fused multiply-accumulate per element
* ``zeroskip`` - the same MAC fed only the nonzero weights
* ``accum``    - multiplier-free add/sub accumulator, ``|w_j|`` passes per weight
* ``blmac``    - bit-layer accumulator walking a digit plan one layer at a time
* ``serial``   - MAC whose multiplier works one bit per cycle

All arithmetic is exact on Python integers with the accumulator checked
against a signed 64-bit range after every operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sdr import DigitMatrix

__all__ = [
    "AccumulatorOverflow",
    "EngineReport",
    "POLICIES",
    "reference_dot",
    "run_naive_mac",
    "run_zero_skip_mac",
    "run_accumulator",
    "run_blmac",
    "run_serial_mac",
    "run_engine",
]

POLICIES = ("shift_counted", "shift_folded")
ACC_BITS = 64
_HI = (1 << (ACC_BITS - 1)) - 1
_LO = -(1 << (ACC_BITS - 1))


class AccumulatorOverflow(ArithmeticError):
    pass


@dataclass
class EngineReport:
    engine: str
    value: int
    adds: int = 0
    subs: int = 0
    shifts: int = 0
    mults: int = 0
    fused: int = 0          # multiply+add pairs issued in a single cycle
    cycles: int = 0
    policy: str = "shift_counted"
    scaled_value: float | None = None
    scale_mults: int = 0    # the one rho multiplication, outside the datapath
    trace: list[int] = field(default_factory=list, repr=False)

    def expected_cycles(self) -> int:
        shifts = self.shifts if self.policy == "shift_counted" else 0
        return self.adds + self.subs + self.mults - self.fused + shifts

    def as_row(self) -> dict:
        return {
            "engine": self.engine,
            "value": self.value,
            "scaled_value": "" if self.scaled_value is None else repr(self.scaled_value),
            "adds": self.adds,
            "subs": self.subs,
            "shifts": self.shifts,
            "mults": self.mults,
            "fused": self.fused,
            "cycles": self.cycles,
            "policy": self.policy,
        }


def _check(acc: int) -> int:
    if acc > _HI or acc < _LO:
        raise AccumulatorOverflow(f"accumulator left the {ACC_BITS}-bit signed range")
    return acc


def _ints(v) -> list[int]:
    return [int(a) for a in np.asarray(v).reshape(-1)]


def _pair(w, x) -> tuple[list[int], list[int]]:
    w, x = _ints(w), _ints(x)
    if len(w) != len(x):
        raise ValueError(f"length mismatch: {len(w)} weights, {len(x)} inputs")
    return w, x


def _check_policy(policy: str) -> None:
    if policy not in POLICIES:
        raise ValueError(f"unknown cycle policy {policy!r}")


def reference_dot(w, x) -> int:
    w, x = _pair(w, x)
    acc = 0
    for a, b in zip(w, x):
        acc = _check(acc + a * b)
    return acc


def _scale(report: EngineReport, rho: float | None) -> EngineReport:
    if rho is not None:
        report.scaled_value = float(rho) * report.value
        report.scale_mults = 1
    return report


def run_naive_mac(w, x, policy: str = "shift_counted") -> EngineReport:
    _check_policy(policy)
    w, x = _pair(w, x)
    acc = 0
    for a, b in zip(w, x):
        acc = _check(acc + _check(a * b))
    n = len(w)
    return EngineReport("naive", acc, adds=n, mults=n, fused=n, cycles=n, policy=policy)


def run_zero_skip_mac(w, x, policy: str = "shift_counted") -> EngineReport:
    _check_policy(policy)
    w, x = _pair(w, x)
    acc = 0
    nz = 0
    for a, b in zip(w, x):
        if a == 0:
            continue
        nz += 1
        acc = _check(acc + _check(a * b))
    return EngineReport("zeroskip", acc, adds=nz, mults=nz, fused=nz, cycles=nz, policy=policy)


def run_accumulator(codes, x, rho: float | None = None,
                    policy: str = "shift_counted") -> EngineReport:
    """Add (or subtract) ``x_j`` exactly ``|codes_j|`` times; no multiplier."""
    _check_policy(policy)
    codes, x = _pair(codes, x)
    acc = adds = subs = 0
    for k, b in zip(codes, x):
        # |k| identical add/subs of b walk monotonically from acc to acc + k*b,
        # so checking the endpoint covers every intermediate accumulator value
        if k > 0:
            acc = _check(acc + k * b)
            adds += k
        elif k < 0:
            acc = _check(acc + k * b)
            subs -= k
    rep = EngineReport("accum", acc, adds=adds, subs=subs, cycles=adds + subs, policy=policy)
    return _scale(rep, rho)


def run_blmac(plan: DigitMatrix, x, direction: str = "msb_first", rho: float | None = None,
              policy: str = "shift_counted") -> EngineReport:
    """Bit-layer MAC over a digit plan.

    ``msb_first`` starts at the top layer and doubles the accumulator between
    layers (nb - 1 left shifts).  ``lsb_first`` starts at layer 0 and halves
    the accumulator after every layer, shifting one result bit out each time
    (nb right shifts); the emitted bits are reattached at the end.

    Pulses in the two's-complement sign layer subtract; NAF digits pick
    add/sub by their sign.
    """
    _check_policy(policy)
    x = _ints(x)
    if plan.n != len(x):
        raise ValueError(f"plan has {plan.n} columns, input has {len(x)} values")
    sign_layer = plan.nb - 1 if plan.mode == "twos_complement" else -1
    layers = [np.flatnonzero(plan.digits[i]) for i in range(plan.nb)]
    acc = adds = subs = shifts = 0
    trace = []

    def apply(i: int, acc: int) -> int:
        nonlocal adds, subs
        for j in layers[i]:
            d = int(plan.digits[i, j])
            if i == sign_layer:
                d = -d
            if d > 0:
                acc = _check(acc + x[j])
                adds += 1
            else:
                acc = _check(acc - x[j])
                subs += 1
        return acc

    if direction == "msb_first":
        for i in range(plan.nb - 1, -1, -1):
            if i != plan.nb - 1:
                acc = _check(acc << 1)
                shifts += 1
            acc = apply(i, acc)
            trace.append(acc)
        value = acc
    elif direction == "lsb_first":
        low_bits = 0
        for i in range(plan.nb):
            acc = apply(i, acc)
            trace.append(acc)
            low_bits |= (acc & 1) << i
            acc >>= 1              # arithmetic shift: floor division by 2
            shifts += 1
        value = _check((acc << plan.nb) | low_bits)
    else:
        raise ValueError(f"unknown direction {direction!r}")

    cycles = adds + subs + (shifts if policy == "shift_counted" else 0)
    rep = EngineReport("blmac", value, adds=adds, subs=subs, shifts=shifts,
                       cycles=cycles, policy=policy, trace=trace)
    return _scale(rep, rho)


def run_serial_mac(w, x) -> EngineReport:
    """Serial shift-and-add multiplier feeding an accumulator.

    Each nonzero weight costs ``bitlength(|w|)`` cycles: one for the leading
    bit (loaded and accumulated) and one shift per remaining bit, with the
    partial-product adds riding along in the multiplier's own adder.  Shifts
    always cost a cycle here, so the report is always ``shift_counted``.
    """
    w, x = _pair(w, x)
    acc = adds = subs = shifts = 0
    for a, b in zip(w, x):
        if a == 0:
            continue
        mag = abs(a)
        prod = 0
        for bit in range(mag.bit_length() - 1, -1, -1):
            prod = _check(prod << 1)
            if (mag >> bit) & 1:
                prod = _check(prod + b)
        shifts += mag.bit_length() - 1
        if a > 0:
            acc = _check(acc + prod)
            adds += 1
        else:
            acc = _check(acc - prod)
            subs += 1
    return EngineReport("serial", acc, adds=adds, subs=subs, shifts=shifts,
                        cycles=adds + subs + shifts, policy="shift_counted")


def run_engine(name: str, w, x, *, mode: str = "naf", direction: str = "msb_first",
               policy: str = "shift_counted", rho: float | None = None) -> EngineReport:
    """Dispatch by engine name; ``blmac`` recodes ``w`` with ``mode`` first."""
    from .sdr import to_digit_matrix

    if name == "naive":
        return run_naive_mac(w, x, policy)
    if name == "zeroskip":
        return run_zero_skip_mac(w, x, policy)
    if name == "accum":
        return run_accumulator(w, x, rho, policy)
    if name == "blmac":
        return run_blmac(to_digit_matrix(w, mode), x, direction, rho, policy)
    if name == "serial":
        return run_serial_mac(w, x)
    raise ValueError(f"unknown engine {name!r}")
