"""Scene instantiation: refined placements, envelope meshes and object proxies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..energy import assign_hosts
from ..idsl import ObjectSpec, SceneState
from .assets import AssetRecord, FallbackStyle, MatchWeights, Selection, load_corpus, proxy_mesh, select_asset
from .envelope import WallParams, carve_openings, generate_floor_ceiling, generate_walls
from .mesh import Mesh
from .presets import PresetLibrary, load_presets
from .refine import RefineConfig, RefineResult, refine

log = logging.getLogger(__name__)

FLOOR_BY_ROOM = {
    "bathroom": "ceramic_tile",
    "kitchen": "porcelain_large",
    "balcony": "terrazzo",
    "laundry": "vinyl_composite",
    "living-room": "walnut_plank",
    "dining-room": "herringbone",
    "study": "oak_plank",
    "bedroom": "oak_plank",
}


@dataclass(frozen=True)
class GenerateConfig:
    wall: WallParams = field(default_factory=WallParams)
    weights: MatchWeights = field(default_factory=MatchWeights)
    refine: RefineConfig | None = field(default_factory=RefineConfig)
    fallback: FallbackStyle = field(default_factory=FallbackStyle)
    wall_preset: str = "plaster"
    ceiling_preset: str = "smooth_plaster"
    default_floor: str = "oak_plank"
    door_preset: str = "single_door"
    window_preset: str = "casement_window"
    floor_by_room: Mapping[str, str] = field(default_factory=lambda: dict(FLOOR_BY_ROOM))


@dataclass
class GeneratedScene:
    state: SceneState
    meshes: dict[str, Mesh]
    selections: dict[str, Selection]
    refinement: RefineResult | None = None

    def summary(self) -> dict:
        return {
            "meshes": {k: {"vertices": len(m.vertices), "faces": len(m.faces)} for k, m in self.meshes.items()},
            "assets": {
                k: {"asset": s.asset.asset_name, "generated": s.generated, "score": None if s.score is None else round(s.score, 6)}
                for k, s in sorted(self.selections.items())
            },
            "walls_watertight": self.meshes["walls"].is_watertight() if "walls" in self.meshes else None,
        }


def default_corpus() -> list[AssetRecord]:
    return load_corpus(Path(str(resources.files("idslkit").joinpath("data/assets.jsonl"))))


def place(mesh: Mesh, obj: ObjectSpec) -> Mesh:
    """Move an asset-frame mesh (x,y centred, z from 0, unscaled local size)
    into the object's world pose."""
    lc = np.asarray(obj.local_bbox.center, float)
    ls = np.asarray(obj.local_bbox.size, float)
    local = mesh.transformed(np.eye(3), lc - np.array([0.0, 0.0, ls[2] / 2]))
    return local.transformed(obj.linear, obj.position_world)


def _object_mesh(obj: ObjectSpec, sel: Selection, cfg: GenerateConfig) -> Mesh:
    size = np.asarray(obj.local_bbox.size, float)
    tag = f"pcg:{obj.category}" if sel.generated else f"asset:{sel.asset.asset_name}"
    return place(proxy_mesh(obj.category, size, cfg.fallback, tag), obj)


def _opening_mesh(obj: ObjectSpec, presets: PresetLibrary, cfg: GenerateConfig) -> Mesh:
    kind = obj.opening.kind
    name = cfg.door_preset if kind == "door" else cfg.window_preset
    preset = presets.get(kind, name)
    size = np.asarray(obj.local_bbox.size, float)
    mesh = proxy_mesh(kind, size, cfg.fallback, f"{kind}:{preset.name}")
    return place(mesh, obj)


def generate_scene(
    state: SceneState,
    presets: PresetLibrary | None = None,
    corpus: Sequence[AssetRecord] | None = None,
    cfg: GenerateConfig | None = None,
) -> GeneratedScene:
    """Refine, then build walls (with openings), floors, ceilings and one mesh per object."""
    cfg = cfg or GenerateConfig()
    presets = presets or load_presets()
    corpus = default_corpus() if corpus is None else list(corpus)
    result = None
    if cfg.refine is not None:
        result = refine(state, cfg.refine)
        state = result.state
    meshes: dict[str, Mesh] = {}
    rooms = [state.rooms[k] for k in sorted(state.rooms)]
    if rooms:
        walls = generate_walls(rooms, None, cfg.wall)
        openings = [state.objects[k] for k in sorted(state.objects) if state.objects[k].opening is not None]
        walls = carve_openings(walls, openings)
        walls.attrs["preset"] = presets.get("wall2", cfg.wall_preset).name
        meshes["walls"] = walls
        ceiling = presets.get("ceiling", cfg.ceiling_preset)
        for r in rooms:
            floor = presets.get("floor", cfg.floor_by_room.get(r.room_type, cfg.default_floor))
            f, c = generate_floor_ceiling(r.polygon, {"floor": floor, "ceiling": ceiling}, cfg.wall.height, r.room_id)
            meshes[f"floor:{r.room_id}"] = f
            meshes[f"ceiling:{r.room_id}"] = c
    selections: dict[str, Selection] = {}
    hosts = assign_hosts(state)
    for k in sorted(state.objects):
        o = state.objects[k]
        if o.opening is not None:
            meshes[f"opening:{k}"] = _opening_mesh(o, presets, cfg)
            continue
        if not o.active:
            continue
        host = hosts.get(k)
        room_style = state.rooms[host].style if host else None
        sel, _ = select_asset(o, corpus, cfg.weights, room_style, cfg.fallback)
        selections[k] = sel
        meshes[f"object:{k}"] = _object_mesh(o, sel, cfg)
    return GeneratedScene(state, meshes, selections, result)
