"""Envelope presets: one JSON file per preset, grouped by category directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

import jsonschema

CATEGORIES = ("wall2", "floor", "ceiling", "door", "window")


class PresetError(ValueError):
    pass


@lru_cache(maxsize=1)
def _schema() -> dict:
    return json.loads(resources.files("idslkit").joinpath("data/presets.schema.json").read_text())


@lru_cache(maxsize=None)
def _validator(category: str) -> jsonschema.Draft202012Validator:
    root = _schema()
    return jsonschema.Draft202012Validator({"$ref": f"#/$defs/{category}", "$defs": root["$defs"]})


@dataclass(frozen=True)
class Preset:
    category: str
    name: str
    params: dict = field(hash=False)

    def finish(self) -> dict:
        body = self.params.get(self.category, {})
        items = body.get("finish2") or body.get("finish") or [{}]
        return items[0]

    def uv(self) -> dict:
        """Tiling parameters recorded on generated meshes."""
        if self.category not in ("wall2", "floor"):
            return {}
        f = self.finish()
        return {k: f[k] for k in ("tile_width", "tile_length", "spacing", "pattern") if k in f}

    @property
    def material(self) -> str:
        m = self.params.get("material")
        if m:
            return m["material"]
        frame = self.params.get("frame", {})
        return frame.get("material", self.name)


def validate_preset(category: str, data: Mapping, name: str = "<preset>") -> Preset:
    """Check a preset document against its category schema."""
    if category not in CATEGORIES:
        raise PresetError(f"unknown preset category {category!r}")
    errors = sorted(_validator(category).iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise PresetError(f"{category} preset {name!r}: at {where}: {e.message}")
    return Preset(category, name, json.loads(json.dumps(data)))


@dataclass
class PresetLibrary:
    presets: dict[str, dict[str, Preset]]

    def get(self, category: str, name: str) -> Preset:
        if category not in self.presets:
            raise PresetError(f"unknown preset category {category!r}")
        try:
            return self.presets[category][name]
        except KeyError:
            raise PresetError(f"no {category} preset named {name!r}") from None

    def names(self, category: str) -> list[str]:
        return sorted(self.presets.get(category, {}))

    def counts(self) -> dict[str, int]:
        return {c: len(self.presets.get(c, {})) for c in CATEGORIES}


def load_presets(directory: str | Path | None = None) -> PresetLibrary:
    """Read ``<dir>/<category>/<name>.json``; defaults to the shipped set."""
    root = Path(directory) if directory is not None else Path(str(resources.files("idslkit").joinpath("data/presets")))
    if not root.is_dir():
        raise PresetError(f"preset directory {root} does not exist")
    out: dict[str, dict[str, Preset]] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if sub.name not in CATEGORIES:
            raise PresetError(f"unknown preset category directory {sub.name!r}")
        for f in sorted(sub.glob("*.json")):
            try:
                data = json.loads(f.read_text())
            except json.JSONDecodeError as exc:
                raise PresetError(f"{f}: {exc}") from None
            out.setdefault(sub.name, {})[f.stem] = validate_preset(sub.name, data, f.stem)
    return PresetLibrary(out)
