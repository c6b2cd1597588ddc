"""Named parameter collection with Adam state and a binary checkpoint format.

Checkpoint layout (all little-endian):
    magic    4 bytes  b"DLP1"
    version  uint16   (currently 1)
    count    uint32
    per entry:
        name_len uint16, name utf-8
        ndim     uint8, dims uint32 each
        data     float64 little-endian, C order

Round-trips are bit-exact: float64 values are written verbatim.
"""

from __future__ import annotations

import struct
from typing import Dict, Iterator, Tuple

import numpy as np

from .tensor import Tensor

_MAGIC = b"DLP1"
_VERSION = 1


class CheckpointError(Exception):
    """Raised for malformed or unsupported checkpoint files."""


class ParameterStore:
    """Flat collection of named parameters shared by a set of networks."""

    def __init__(self):
        self._entries: Dict[str, Tensor] = {}
        self._adam_m: Dict[str, np.ndarray] = {}
        self._adam_v: Dict[str, np.ndarray] = {}
        self._adam_t = 0

    # -- registration / access ------------------------------------------------

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self):
        return list(self._entries.keys())

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._entries.items())

    def num_values(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    # -- gradient / optimizer -----------------------------------------------

    def zero_grad(self):
        for t in self._entries.values():
            t.grad = None

    def adam_step(self, lr: float, betas=(0.9, 0.999), eps=1e-8,
                  prefixes=None):
        """One bias-corrected Adam update over parameters with gradients.

        `prefixes` restricts the update to names starting with any of the
        given strings (used to freeze everything else).
        """
        self._adam_t += 1
        b1, b2 = betas
        t = self._adam_t
        for name, p in self._entries.items():
            if p.grad is None:
                continue
            if prefixes is not None and not name.startswith(tuple(prefixes)):
                continue
            m = self._adam_m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self._adam_m[name] = m
                self._adam_v[name] = np.zeros_like(p.data)
            v = self._adam_v[name]
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

    # -- snapshots -------------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._entries.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix_map=None):
        """Copy values into existing entries. Shapes must match exactly.

        `prefix_map` optionally rewrites source names: {"src.": "dst."}.
        """
        for name, values in state.items():
            target = name
            if prefix_map:
                for src, dst in prefix_map.items():
                    if name.startswith(src):
                        target = dst + name[len(src):]
                        break
            if target not in self._entries:
                continue
            t = self._entries[target]
            if t.data.shape != values.shape:
                raise ValueError(f"shape mismatch for {target}: "
                                 f"{t.data.shape} vs {values.shape}")
            t.data[...] = values

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for name, t in self._entries.items():
            out.add(name, t.data)
        return out

    # -- persistence --------------------------------------------------------

    def save(self, path):
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<HI", _VERSION, len(self._entries)))
            for name, t in self._entries.items():
                enc = name.encode("utf-8")
                f.write(struct.pack("<H", len(enc)))
                f.write(enc)
                arr = np.ascontiguousarray(t.data, dtype="<f8")
                f.write(struct.pack("<B", arr.ndim))
                for d in arr.shape:
                    f.write(struct.pack("<I", d))
                f.write(arr.tobytes())

    @staticmethod
    def load(path) -> "ParameterStore":
        store = ParameterStore()
        with open(path, "rb") as f:
            blob = f.read()
        off = 0

        def take(n):
            nonlocal off
            if off + n > len(blob):
                raise CheckpointError(
                    f"truncated checkpoint at byte {off} (wanted {n} more)")
            chunk = blob[off:off + n]
            off += n
            return chunk

        if take(4) != _MAGIC:
            raise CheckpointError("bad magic: not a parameter checkpoint")
        version, count = struct.unpack("<HI", take(6))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = take(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", take(1))
            shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(take(n * 8), dtype="<f8").reshape(shape).copy()
            store.add(name, arr)
        return store
