"""Binary weight blobs exchanged between clients and the server.

Layout (little-endian)::

    b"FAW1" | u32 entry count | (u32 rows, u32 cols) * count | float64 payload

One entry per persisted array, in layer declaration order: dense weights
then bias; batch-norm gamma, beta, running mean, running variance.
Parameter-free layers contribute nothing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .network import Network

MAGIC = b"FAW1"


class BlobError(ValueError):
    pass


@dataclass(frozen=True)
class WeightBlob:
    data: bytes

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "WeightBlob":
        header = [MAGIC, struct.pack("<I", len(arrays))]
        for a in arrays:
            a = np.atleast_2d(a)
            if a.ndim != 2:
                raise BlobError("only 2-D arrays can be stored")
            header.append(struct.pack("<II", *a.shape))
        payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
        return cls(b"".join(header) + payload)

    def shapes(self) -> list[tuple[int, int]]:
        return self._parse()[0]

    def arrays(self) -> list[np.ndarray]:
        shapes, offset = self._parse()
        out = []
        for rows, cols in shapes:
            n = rows * cols
            out.append(np.frombuffer(self.data, dtype="<f8", count=n, offset=offset).reshape(rows, cols).astype(np.float64))
            offset += 8 * n
        return out

    def _parse(self) -> tuple[list[tuple[int, int]], int]:
        d = self.data
        if len(d) < 8 or d[:4] != MAGIC:
            raise BlobError("not a weight blob (bad magic or truncated header)")
        (count,) = struct.unpack_from("<I", d, 4)
        offset = 8
        if len(d) < offset + 8 * count:
            raise BlobError("truncated blob header")
        shapes = [struct.unpack_from("<II", d, offset + 8 * i) for i in range(count)]
        offset += 8 * count
        expected = offset + 8 * int(np.sum([r * c for r, c in shapes]))
        if len(d) != expected:
            raise BlobError(f"blob payload is {len(d)} bytes, expected {expected}")
        return [tuple(s) for s in shapes], offset

    def __len__(self) -> int:
        return len(self.data)


def serialize_weights(net: Network) -> WeightBlob:
    return WeightBlob.from_arrays([a for layer in net.layers for a in layer.state_arrays()])


def deserialize_weights(blob: WeightBlob, net: Network) -> None:
    """Load ``blob`` into ``net`` in place; shapes must match exactly."""
    arrays = blob.arrays()
    expected = [np.atleast_2d(a).shape for layer in net.layers for a in layer.state_arrays()]
    got = [a.shape for a in arrays]
    if got != expected:
        raise BlobError(f"blob shapes {got} do not match network shapes {expected}")
    i = 0
    for layer in net.layers:
        k = len(layer.state_arrays())
        layer.load_state_arrays(arrays[i : i + k])
        i += k
