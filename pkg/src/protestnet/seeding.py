"""Named random substreams derived from one master seed."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *names) -> int:
    """Stable 63-bit seed for the substream ``names`` under ``master``.

    Uses sha256 rather than ``hash()`` so the value does not depend on
    PYTHONHASHSEED or the interpreter.
    """
    h = hashlib.sha256(str(int(master)).encode())
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def rng(master: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *names))
