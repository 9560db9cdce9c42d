"""Small shared helpers: deterministic seeding and JSON output."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def derive_seed(*parts: object) -> int:
    """Derive a stable 63-bit seed from arbitrary string-able parts.

    Used to give every independent job (node, method, window) its own
    reproducible random stream from one master seed.
    """
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def write_json(path: str | Path, obj: object) -> None:
    """Write JSON deterministically (sorted keys, fixed separators)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
