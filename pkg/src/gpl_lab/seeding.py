"""Deterministic seed derivation.

All randomness in a run flows from one root seed; components derive their own
streams with split_seed(root, "label", ...) so adding a consumer never shifts
another component's draws.
"""

from __future__ import annotations

import hashlib


def split_seed(root: int, *labels) -> int:
    """Derive a child seed from a root seed and a label path."""
    key = "|".join([str(int(root)), *map(str, labels)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
