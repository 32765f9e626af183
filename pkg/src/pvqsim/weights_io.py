"""Weight tensor ingestion: text/binary file formats and a synthetic generator.

Text format::

    # shape d0 d1 ... dk
    v0 v1 v2 ...

Values are whitespace separated and row-major.  A file is integer mode when
every value token is a plain decimal integer, real mode otherwise.

Binary format (little-endian)::

    b"PVQW" | u8 mode (0=real32, 1=int32) | u8 rank | rank x u32 dims | data

Synthetic weights come from :func:`synth_laplacian`, which draws uniforms from
numpy's PCG64 generator (64-bit state increments, 128-bit state) and maps them
through the inverse Laplace CDF.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "TensorFormatError",
    "WeightTensor",
    "LayerSpec",
    "load_tensor",
    "save_tensor",
    "synth_laplacian",
]

MAGIC = b"PVQW"
MODE_REAL = 0
MODE_INT = 1

_INT_TOKEN = re.compile(r"^[+-]?\d+$")


class TensorFormatError(ValueError):
    """Raised when a tensor file cannot be parsed; message carries the position."""


@dataclass
class WeightTensor:
    shape: tuple[int, ...]
    data: np.ndarray
    mode: str = "real"

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        if any(d < 1 for d in self.shape):
            raise ValueError(f"dimensions must be positive, got {self.shape}")
        if self.mode not in ("real", "integer"):
            raise ValueError(f"unknown tensor mode {self.mode!r}")
        dtype = np.int64 if self.mode == "integer" else np.float64
        data = np.asarray(self.data)
        if self.mode == "integer" and data.dtype.kind == "f":
            if not np.all(data == np.round(data)):
                raise ValueError("integer mode tensor holds non-integer values")
        self.data = data.astype(dtype).reshape(-1)
        if math.prod(self.shape) != self.data.size:
            raise ValueError(
                f"shape {self.shape} holds {math.prod(self.shape)} values, "
                f"data has {self.data.size}"
            )

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Row-major flattening; the order every N / NZ / pulse count uses."""
        return self.data

    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @classmethod
    def from_array(cls, arr, mode: str | None = None) -> "WeightTensor":
        arr = np.asarray(arr)
        if mode is None:
            mode = "integer" if arr.dtype.kind in "iub" else "real"
        shape = arr.shape if arr.ndim else (1,)
        return cls(shape, arr.reshape(-1), mode)

    def equals(self, other: "WeightTensor") -> bool:
        """Equality under the file-format contract (real values at float32)."""
        if self.shape != other.shape or self.mode != other.mode:
            return False
        if self.mode == "integer":
            return bool(np.array_equal(self.data, other.data))
        return bool(
            np.array_equal(self.data.astype(np.float32), other.data.astype(np.float32))
        )


@dataclass
class LayerSpec:
    tensor: WeightTensor
    output_positions: int = 1
    label: str = field(default="")

    def __post_init__(self):
        if self.output_positions < 1:
            raise ValueError("output_positions must be >= 1")


def _format_from_path(path: Path) -> str:
    return "binary" if path.suffix in (".bin", ".pvqw") else "text"


def load_tensor(path, format: str | None = None) -> WeightTensor:
    path = Path(path)
    fmt = format or _format_from_path(path)
    raw = path.read_bytes()
    if fmt == "binary":
        return _parse_binary(raw)
    if fmt == "text":
        return _parse_text(raw.decode("ascii", errors="replace"))
    raise ValueError(f"unknown tensor format {fmt!r}")


def save_tensor(tensor: WeightTensor, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _format_from_path(path)
    if fmt == "binary":
        path.write_bytes(_to_binary(tensor))
    elif fmt == "text":
        path.write_text(_to_text(tensor))
    else:
        raise ValueError(f"unknown tensor format {fmt!r}")


def _to_text(tensor: WeightTensor) -> str:
    header = "# shape " + " ".join(str(d) for d in tensor.shape)
    if tensor.mode == "integer":
        body = " ".join(str(int(v)) for v in tensor.data)
    else:
        # repr of the float32 value round-trips exactly through float32
        body = " ".join(repr(float(v)) for v in tensor.data.astype(np.float32))
    return header + "\n" + body + "\n"


def _parse_text(text: str) -> WeightTensor:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# shape"):
        raise TensorFormatError("line 1: expected '# shape d0 d1 ...' header")
    dims = []
    for tok in lines[0][len("# shape"):].split():
        if not _INT_TOKEN.match(tok) or int(tok) < 1:
            raise TensorFormatError(f"line 1: bad dimension {tok!r}")
        dims.append(int(tok))
    if not dims:
        raise TensorFormatError("line 1: shape has no dimensions")

    tokens: list[str] = []
    is_int = True
    for lineno, line in enumerate(lines[1:], start=2):
        for m in re.finditer(r"\S+", line):
            tok = m.group()
            if _INT_TOKEN.match(tok):
                tokens.append(tok)
                continue
            try:
                float(tok)
            except ValueError:
                raise TensorFormatError(
                    f"line {lineno}, column {m.start() + 1}: non-numeric token {tok!r}"
                ) from None
            is_int = False
            tokens.append(tok)

    expected = math.prod(dims)
    if len(tokens) != expected:
        raise TensorFormatError(
            f"shape {tuple(dims)} needs {expected} values, file has {len(tokens)}"
        )
    if is_int:
        data = np.array([int(t) for t in tokens], dtype=np.int64)
        return WeightTensor(tuple(dims), data, "integer")
    data = np.array([float(t) for t in tokens], dtype=np.float32)
    return WeightTensor(tuple(dims), data, "real")


def _to_binary(tensor: WeightTensor) -> bytes:
    rank = len(tensor.shape)
    if rank > 255:
        raise ValueError("rank exceeds 255")
    if tensor.mode == "integer":
        info = np.iinfo(np.int32)
        if tensor.size and (tensor.data.min() < info.min or tensor.data.max() > info.max):
            raise ValueError("integer tensor does not fit int32 binary format")
        payload = tensor.data.astype("<i4").tobytes()
        mode = MODE_INT
    else:
        payload = tensor.data.astype("<f4").tobytes()
        mode = MODE_REAL
    head = MAGIC + struct.pack("<BB", mode, rank) + struct.pack(f"<{rank}I", *tensor.shape)
    return head + payload


def _parse_binary(raw: bytes) -> WeightTensor:
    if raw[:4] != MAGIC:
        raise TensorFormatError("byte 0: bad magic, expected b'PVQW'")
    if len(raw) < 6:
        raise TensorFormatError(f"byte {len(raw)}: truncated header")
    mode, rank = raw[4], raw[5]
    if mode not in (MODE_REAL, MODE_INT):
        raise TensorFormatError(f"byte 4: unknown mode {mode}")
    if rank == 0:
        raise TensorFormatError("byte 5: rank must be >= 1")
    end = 6 + 4 * rank
    if len(raw) < end:
        raise TensorFormatError(f"byte {len(raw)}: truncated shape")
    dims = struct.unpack(f"<{rank}I", raw[6:end])
    for i, d in enumerate(dims):
        if d == 0:
            raise TensorFormatError(f"byte {6 + 4 * i}: zero dimension")
    count = math.prod(dims)
    if len(raw) - end != 4 * count:
        raise TensorFormatError(
            f"byte {end}: shape {dims} needs {4 * count} data bytes, found {len(raw) - end}"
        )
    dtype = "<i4" if mode == MODE_INT else "<f4"
    data = np.frombuffer(raw, dtype=dtype, offset=end, count=count)
    return WeightTensor(dims, data, "integer" if mode == MODE_INT else "real")


def synth_laplacian(count: int, scale: float = 1.0, seed: int = 0,
                    shape: Sequence[int] | None = None) -> WeightTensor:
    """I.i.d. Laplace(0, scale) draws via inverse CDF over PCG64 uniforms.

    Pure in ``(count, scale, seed)``; ``shape`` only reshapes the result.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(count)                      # [0, 1), 53-bit resolution
    t = u - 0.5
    # u == 0 would map to -inf; nudge onto the open interval
    t = np.clip(t, -0.5 + 2.0**-54, 0.5)
    data = -scale * np.sign(t) * np.log1p(-2.0 * np.abs(t))
    if shape is None:
        shape = (count,)
    return WeightTensor(tuple(shape), data, "real")
