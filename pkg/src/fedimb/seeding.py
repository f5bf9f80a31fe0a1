"""Per-component seed derivation from one master seed."""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Mix (master seed, component tag, index) into a 64-bit seed.

    BLAKE2b over a length-prefixed encoding, so distinct inputs give
    independent streams and no (tag, index) pair can alias another.
    """
    tag_bytes = tag.encode("utf-8")
    msg = struct.pack("<QQ", master_seed & MASK64, index & MASK64) + struct.pack("<I", len(tag_bytes)) + tag_bytes
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8, person=b"fedimb-seed").digest(), "little")


def rng_for(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by :func:`derive_seed`."""
    return np.random.Generator(np.random.Philox(derive_seed(master_seed, tag, index)))
