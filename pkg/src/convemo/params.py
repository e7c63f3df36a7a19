"""Named parameter store, initialization, and bit-exact binary checkpoints."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import DimensionError, Tensor

# 8-byte magic doubling as the format version.
CKPT_MAGIC = b"CONVEMO1"


class ParameterBag:
    """Insertion-ordered name -> Tensor map for all trainable parameters."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def save_checkpoint(path: str | Path, bag: ParameterBag) -> None:
    """Write every parameter as name, shape, and raw little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(bag)))
        for name, t in bag.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", t.data.ndim))
            for dim in t.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a checkpoint into name -> array, verifying the header."""
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a {CKPT_MAGIC.decode()} checkpoint")
    offset = 8
    (count,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(raw, dtype="<f8", count=size, offset=offset)
        offset += size * 8
        arrays[name] = values.reshape(shape).astype(np.float64)
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after last parameter")
    return arrays


def load_checkpoint(path: str | Path, bag: ParameterBag) -> None:
    """Restore bag values bit-exactly; names and shapes must match."""
    arrays = read_checkpoint(path)
    missing = set(bag.names()) - set(arrays)
    extra = set(arrays) - set(bag.names())
    if missing or extra:
        raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, t in bag.items():
        stored = arrays[name]
        if stored.shape != t.data.shape:
            raise DimensionError(f"{name}: checkpoint shape {stored.shape} vs model {t.data.shape}")
        t.data[...] = stored
