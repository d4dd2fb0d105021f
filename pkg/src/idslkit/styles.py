"""Style compatibility table psi(a, b): symmetric, 1.0 on the diagonal."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def _table() -> tuple[float, frozenset, dict]:
    raw = json.loads(resources.files("idslkit").joinpath("data/styles.json").read_text("utf-8"))
    pairs = {}
    for a, b, v in raw["pairs"]:
        pairs[(a, b)] = pairs[(b, a)] = float(v)
    return float(raw["default"]), frozenset(raw["labels"]), pairs


def known_styles() -> frozenset:
    return _table()[1]


def psi(a: str | None, b: str | None) -> float:
    """Compatibility in [0, 1]; 1.0 when either style is unknown or they match."""
    if not a or not b:
        return 1.0
    a, b = a.lower(), b.lower()
    if a == b:
        return 1.0
    default, _, pairs = _table()
    return pairs.get((a, b), default)
