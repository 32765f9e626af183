"""Run-length coding of weight vectors and bit-layer plans, plus a static range coder.

Token streams
-------------
A token is ``Run(zrun, w)``: ``zrun`` zeros followed by the nonzero value
``w``.  ``Run(0, 0)`` is the end-of-run marker :data:`EOR`, meaning every
remaining position is zero.

* weight level: one run per nonzero weight, always terminated by ``EOR``.
* bit layer: layers scanned from the top layer down, positions left to right;
  ``w`` is a single digit (+1/-1).  Each layer ends with ``EOR`` unless its
  last position holds a pulse, in which case the end is implicit.

Symbol alphabet
---------------
``zrun`` model: symbols 0..63 are literal run lengths, 64 is an escape
followed by raw 16-bit chunks of ``zrun - 64`` (a chunk of 0xFFFF means "add
65535 and read another chunk"), 65 is ``EOR``.  Magnitude model (weight level
only): 1..63 literal, 64 escape with the same chunking.  Signs are raw bits,
one per nonzero weight (weight level) or per pulse (NAF bit layers).

Bitstream (little-endian)
-------------------------
::

    b"PVQB" | u8 version=1 | u8 mode | u32 n | u32 q | f64 rho | u8 layers
    | per model: u16 symbol count, then (u16 symbol, u32 count) pairs
    | range-coded payload to end of file

``mode`` is 0 for weight level and 1/2/3 for bit layers from NAF,
two's-complement or plain binary plans.  The weight-level stream carries a
``zrun`` table then a magnitude table; bit-layer streams carry only ``zrun``.

The payload comes from a byte-oriented range coder with a 64-bit low register,
carry propagation through a cached byte and renormalization whenever the range
drops below 2**56.  The always-zero first byte of the classic construction is
not written, and the final flush writes the shortest byte string whose
zero-padded value stays inside the final interval; the decoder pads reads past
the end with zeros.
"""

from __future__ import annotations

import bisect
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .sdr import DigitMatrix

__all__ = [
    "Run",
    "EOR",
    "MalformedStreamError",
    "BitstreamError",
    "RunLengthStream",
    "SymbolModel",
    "encode_weight_rle",
    "decode_weight_rle",
    "encode_bitlayer_rle",
    "decode_bitlayer_rle",
    "symbolize",
    "build_model",
    "estimate_breakdown",
    "estimate_bits",
    "range_encode",
    "range_decode",
    "range_decode_full",
    "DecodedBitstream",
    "encode_header",
    "header_size",
]


class Run(NamedTuple):
    zrun: int
    w: int


EOR = Run(0, 0)

LITERAL_LIMIT = 64
ZRUN_ESC = 64
ZRUN_EOR = 65
MAG_ESC = 64
CHUNK_BITS = 16
CHUNK_MAX = (1 << CHUNK_BITS) - 1

MAGIC = b"PVQB"
VERSION = 1
_PLAN_MODE_BYTE = {"naf": 1, "twos_complement": 2, "binary": 3}
_BYTE_PLAN_MODE = {v: k for k, v in _PLAN_MODE_BYTE.items()}


class MalformedStreamError(ValueError):
    pass


class BitstreamError(ValueError):
    """Corrupt or truncated compressed bitstream; message names the byte offset."""


@dataclass
class RunLengthStream:
    mode: str                       # "weight_level" | "bit_layer"
    tokens: list[Run]
    n: int
    layers: int = 0
    plan_mode: str = ""             # digit plan mode for bit_layer streams

    def runs(self) -> list[Run]:
        return [t for t in self.tokens if t != EOR]


# -- run-length coding --------------------------------------------------------

def encode_weight_rle(w) -> RunLengthStream:
    vals = [int(v) for v in np.asarray(w).reshape(-1)]
    tokens = []
    zeros = 0
    for v in vals:
        if v == 0:
            zeros += 1
        else:
            tokens.append(Run(zeros, v))
            zeros = 0
    tokens.append(EOR)
    return RunLengthStream("weight_level", tokens, len(vals))


def decode_weight_rle(s: RunLengthStream, n: int | None = None) -> np.ndarray:
    n = s.n if n is None else n
    out = np.zeros(n, dtype=np.int64)
    pos = 0
    for k, tok in enumerate(s.tokens):
        if tok == EOR:
            if k != len(s.tokens) - 1:
                raise MalformedStreamError(f"token {k}: data after EOR")
            return out
        if tok.zrun < 0 or tok.w == 0:
            raise MalformedStreamError(f"token {k}: invalid run {tuple(tok)}")
        pos += tok.zrun
        if pos >= n:
            raise MalformedStreamError(f"token {k}: run overflows row length {n}")
        out[pos] = tok.w
        pos += 1
    raise MalformedStreamError("missing EOR terminator")


def encode_bitlayer_rle(plan: DigitMatrix) -> RunLengthStream:
    tokens = []
    n = plan.n
    for i in range(plan.nb - 1, -1, -1):
        row = plan.digits[i]
        pos = 0
        for j in np.flatnonzero(row):
            tokens.append(Run(int(j) - pos, int(row[j])))
            pos = int(j) + 1
        if pos < n:
            tokens.append(EOR)
    return RunLengthStream("bit_layer", tokens, n, plan.nb, plan.mode)


def decode_bitlayer_rle(s: RunLengthStream) -> DigitMatrix:
    n = s.n
    digits = np.zeros((s.layers, n), dtype=np.int8)
    it = iter(enumerate(s.tokens))
    for i in range(s.layers - 1, -1, -1):
        pos = 0
        while pos < n:
            try:
                k, tok = next(it)
            except StopIteration:
                raise MalformedStreamError(f"layer {i}: stream ends before layer is complete") from None
            if tok == EOR:
                break
            if tok.w not in (1, -1) or tok.zrun < 0:
                raise MalformedStreamError(f"token {k}: invalid bit-layer run {tuple(tok)}")
            pos += tok.zrun
            if pos >= n:
                raise MalformedStreamError(f"token {k}: run overflows row length {n}")
            digits[i, pos] = tok.w
            pos += 1
    leftover = next(it, None)
    if leftover is not None:
        raise MalformedStreamError(f"token {leftover[0]}: data after the last layer")
    return DigitMatrix(digits, s.plan_mode or "naf")


# -- symbols and static model ---------------------------------------------------

def _chunks(r: int) -> list[int]:
    out = []
    while r >= CHUNK_MAX:
        out.append(CHUNK_MAX)
        r -= CHUNK_MAX
    out.append(r)
    return out


def _signed(s: RunLengthStream) -> bool:
    return s.mode == "weight_level" or s.plan_mode == "naf"


def symbolize(s: RunLengthStream) -> list[tuple[str, int]]:
    """Flatten a stream into ``(channel, value)`` events in coding order.

    Channels: ``zrun`` and ``mag`` are modeled; ``chunk`` (16 bits) and
    ``sign`` (1 bit) are raw.
    """
    signed = _signed(s)
    events: list[tuple[str, int]] = []
    for tok in s.tokens:
        if tok == EOR:
            events.append(("zrun", ZRUN_EOR))
            continue
        if tok.zrun < LITERAL_LIMIT:
            events.append(("zrun", tok.zrun))
        else:
            events.append(("zrun", ZRUN_ESC))
            events.extend(("chunk", c) for c in _chunks(tok.zrun - LITERAL_LIMIT))
        if s.mode == "weight_level":
            mag = abs(tok.w)
            if mag < LITERAL_LIMIT:
                events.append(("mag", mag))
            else:
                events.append(("mag", MAG_ESC))
                events.extend(("chunk", c) for c in _chunks(mag - LITERAL_LIMIT))
        elif tok.w not in (1, -1):
            raise MalformedStreamError(f"bit-layer digit {tok.w} is not +-1")
        if signed:
            events.append(("sign", 1 if tok.w < 0 else 0))
        elif tok.w < 0:
            raise MalformedStreamError(f"{s.plan_mode} plan carries a negative digit")
    return events


@dataclass
class SymbolModel:
    """Static per-channel symbol counts; probabilities are count / total."""

    counts: dict[str, dict[int, int]] = field(default_factory=dict)

    def channels(self) -> list[str]:
        return list(self.counts)

    def total(self, channel: str) -> int:
        return sum(self.counts[channel].values())

    def probability(self, channel: str, symbol: int) -> float:
        return self.counts[channel][symbol] / self.total(channel)

    def table_bits(self) -> int:
        """Size of the serialized model tables in bits."""
        return sum(16 + len(c) * (16 + 32) for c in self.counts.values())


def _model_channels(mode: str) -> tuple[str, ...]:
    return ("zrun", "mag") if mode == "weight_level" else ("zrun",)


def build_model(s: RunLengthStream) -> SymbolModel:
    hist = {ch: Counter() for ch in _model_channels(s.mode)}
    for ch, v in symbolize(s):
        if ch in hist:
            hist[ch][v] += 1
    return SymbolModel({ch: dict(sorted(c.items())) for ch, c in hist.items()})


def estimate_breakdown(s: RunLengthStream) -> dict[str, float]:
    """Ideal code length per channel: sum of -log2 P for modeled symbols, raw bits otherwise."""
    model = build_model(s)
    bits = {ch: 0.0 for ch in model.channels()}
    bits["sign"] = 0.0
    bits["chunk"] = 0.0
    totals = {ch: model.total(ch) for ch in model.channels()}
    for ch, v in symbolize(s):
        if ch == "sign":
            bits["sign"] += 1.0
        elif ch == "chunk":
            bits["chunk"] += CHUNK_BITS
        else:
            bits[ch] -= math.log2(model.counts[ch][v] / totals[ch])
    return bits


def estimate_bits(s: RunLengthStream) -> float:
    if not s.tokens:
        raise ValueError("empty stream")
    return float(sum(estimate_breakdown(s).values()))


# -- range coder -------------------------------------------------------------

_MASK = (1 << 64) - 1
_TOP = 1 << 56


class _Encoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.cache = 0
        self.cache_size = 1
        self.first = True
        self.out = bytearray()

    def _shift_low(self):
        if self.low < (0xFF << 56) or self.low > _MASK:
            carry = self.low >> 64
            temp = self.cache
            while True:
                if self.first:
                    self.first = False    # the leading byte is always zero
                else:
                    self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 56) & 0xFF
        self.cache_size += 1
        self.low = (self.low << 8) & _MASK

    def encode(self, cum: int, freq: int, total: int):
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def finish(self) -> bytes:
        hi = self.low + self.range
        for s in range(64, -1, -8):
            unit = 1 << s
            v = -(-self.low // unit) * unit
            if v + unit <= hi:
                break
        self.low = v
        for _ in range(9):
            self._shift_low()
        drop = s // 8
        return bytes(self.out[: len(self.out) - drop] if drop else self.out)


class _Decoder:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset
        self.range = _MASK
        self.code = 0
        for _ in range(8):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def target(self, total: int) -> int:
        self._r = self.range // total
        c = self.code // self._r
        if c >= total:
            raise BitstreamError(f"byte {min(self.pos, len(self.data))}: corrupt payload")
        return c

    def consume(self, cum: int, freq: int):
        self.code -= self._r * cum
        self.range = self._r * freq
        while self.range < _TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._byte()) & _MASK


class _Table:
    def __init__(self, counts: dict[int, int]):
        self.symbols = sorted(counts)
        self.freq = [counts[s] for s in self.symbols]
        self.cum = [0]
        for f in self.freq:
            self.cum.append(self.cum[-1] + f)
        self.total = self.cum[-1]
        self.index = {s: i for i, s in enumerate(self.symbols)}

    def encode(self, enc: _Encoder, sym: int, channel: str):
        try:
            i = self.index[sym]
        except KeyError:
            raise ValueError(f"symbol {sym} missing from the {channel} model") from None
        enc.encode(self.cum[i], self.freq[i], self.total)

    def decode(self, dec: _Decoder) -> int:
        c = dec.target(self.total)
        i = bisect.bisect_right(self.cum, c) - 1
        dec.consume(self.cum[i], self.freq[i])
        return self.symbols[i]


def _mode_byte(s: RunLengthStream) -> int:
    if s.mode == "weight_level":
        return 0
    return _PLAN_MODE_BYTE[s.plan_mode or "naf"]


def encode_header(s: RunLengthStream, model: SymbolModel, q: int = 0, rho: float = 1.0) -> bytes:
    head = bytearray(MAGIC)
    head += struct.pack("<BBIIdB", VERSION, _mode_byte(s), s.n, q, rho, s.layers)
    for ch in _model_channels(s.mode):
        counts = model.counts.get(ch, {})
        head += struct.pack("<H", len(counts))
        for sym, cnt in counts.items():
            head += struct.pack("<HI", sym, cnt)
    return bytes(head)


def range_encode(s: RunLengthStream, model: SymbolModel | None = None,
                 q: int = 0, rho: float = 1.0) -> bytes:
    """Header plus range-coded payload.  ``q``/``rho`` are PVQ metadata."""
    model = build_model(s) if model is None else model
    tables = {ch: _Table(model.counts[ch]) for ch in _model_channels(s.mode)}
    enc = _Encoder()
    for ch, v in symbolize(s):
        if ch == "sign":
            enc.encode(v, 1, 2)
        elif ch == "chunk":
            enc.encode(v, 1, 1 << CHUNK_BITS)
        else:
            tables[ch].encode(enc, v, ch)
    return encode_header(s, model, q, rho) + enc.finish()


@dataclass
class DecodedBitstream:
    stream: RunLengthStream
    model: SymbolModel
    q: int
    rho: float
    payload_bytes: int


def _read(data: bytes, offset: int, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    if offset + size > len(data):
        raise BitstreamError(f"byte {offset}: truncated header")
    return struct.unpack_from(fmt, data, offset)


def _read_chunks(table_decode) -> int:
    r = 0
    while True:
        c = table_decode()
        r += c
        if c != CHUNK_MAX:
            return r


def range_decode_full(data: bytes) -> DecodedBitstream:
    if data[:4] != MAGIC:
        raise BitstreamError("byte 0: bad magic, expected b'PVQB'")
    version, mode_b, n, q, rho, layers = _read(data, 4, "<BBIIdB")
    if version != VERSION:
        raise BitstreamError(f"byte 4: unsupported version {version}")
    if mode_b == 0:
        mode, plan_mode = "weight_level", ""
    elif mode_b in _BYTE_PLAN_MODE:
        mode, plan_mode = "bit_layer", _BYTE_PLAN_MODE[mode_b]
    else:
        raise BitstreamError(f"byte 5: unknown mode {mode_b}")
    off = 4 + struct.calcsize("<BBIIdB")
    counts = {}
    for ch in _model_channels(mode):
        (m,) = _read(data, off, "<H")
        off += 2
        tab = {}
        for _ in range(m):
            sym, cnt = _read(data, off, "<HI")
            if cnt == 0:
                raise BitstreamError(f"byte {off}: zero count in {ch} model")
            tab[sym] = cnt
            off += 6
        counts[ch] = tab
    model = SymbolModel(counts)
    if not counts["zrun"]:
        raise BitstreamError(f"byte {off}: empty run-length model")
    tables = {ch: _Table(c) for ch, c in counts.items() if c}

    dec = _Decoder(data, off)
    signed = mode == "weight_level" or plan_mode == "naf"

    def raw(nbits: int) -> int:
        total = 1 << nbits
        c = dec.target(total)
        dec.consume(c, 1)
        return c

    def sym(ch: str) -> int:
        if ch not in tables:
            raise BitstreamError(f"byte {dec.pos}: stream needs an empty {ch} model")
        return tables[ch].decode(dec)

    def read_token() -> Run:
        z = sym("zrun")
        if z == ZRUN_EOR:
            return EOR
        if z == ZRUN_ESC:
            z = LITERAL_LIMIT + _read_chunks(lambda: raw(CHUNK_BITS))
        if mode == "weight_level":
            mag = sym("mag")
            if mag == MAG_ESC:
                mag = LITERAL_LIMIT + _read_chunks(lambda: raw(CHUNK_BITS))
        else:
            mag = 1
        neg = raw(1) if signed else 0
        return Run(z, -mag if neg else mag)

    tokens: list[Run] = []
    if mode == "weight_level":
        pos = 0
        while True:
            tok = read_token()
            tokens.append(tok)
            if tok == EOR:
                break
            pos += tok.zrun + 1
            if pos > n:
                raise BitstreamError(f"byte {dec.pos}: run overflows row length {n}")
    else:
        for _ in range(layers):
            pos = 0
            while pos < n:
                tok = read_token()
                tokens.append(tok)
                if tok == EOR:
                    break
                pos += tok.zrun + 1
                if pos > n:
                    raise BitstreamError(f"byte {dec.pos}: run overflows row length {n}")
    stream = RunLengthStream(mode, tokens, n, layers, plan_mode)
    return DecodedBitstream(stream, model, q, rho, len(data) - off)


def range_decode(data: bytes) -> RunLengthStream:
    return range_decode_full(data).stream


def header_size(data: bytes) -> int:
    """Byte length of header plus model tables (payload starts here)."""
    return len(data) - range_decode_full(data).payload_bytes
