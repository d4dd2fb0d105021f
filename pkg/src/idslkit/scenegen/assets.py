"""Asset corpus records, retrieval scoring and parametric fallback geometry."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..idsl import ObjectSpec, tag_values
from ..styles import psi
from ..text import lexicon
from .mesh import Mesh, MeshBuilder

log = logging.getLogger(__name__)

EXTENT_TOL = 1e-3


class AssetError(ValueError):
    pass


@dataclass(frozen=True)
class AssetRecord:
    file_path: str
    asset_name: str
    category: str
    description: str = ""
    style: str = ""
    bbox_x: float = 0.0
    bbox_y: float = 0.0
    bbox_z: float = 0.0
    orient_y_change: str = "no"
    material_type: str = ""
    has_texture: bool = False
    is_modular: bool | str = False  # the corpus also uses "partially"
    has_moving_parts: bool = False
    usage_scene: str = ""
    notes: str = ""
    parent_record: str = ""
    min_x: float = 0.0
    max_x: float = 0.0
    min_y: float = 0.0
    max_y: float = 0.0
    min_z: float = 0.0
    max_z: float = 0.0
    embedding: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.asset_name or not self.category:
            raise AssetError("asset_name and category are required")
        for ax in "xyz":
            lo, hi, b = getattr(self, f"min_{ax}"), getattr(self, f"max_{ax}"), getattr(self, f"bbox_{ax}")
            if hi < lo:
                raise AssetError(f"{self.asset_name}: max_{ax} < min_{ax}")
            if abs((hi - lo) - b) > EXTENT_TOL:
                raise AssetError(f"{self.asset_name}: bbox_{ax}={b} disagrees with extents {hi - lo:.4f}")
            if b <= 0:
                raise AssetError(f"{self.asset_name}: bbox_{ax} must be positive")

    @property
    def size(self) -> np.ndarray:
        return np.array([self.bbox_x, self.bbox_y, self.bbox_z])

    @classmethod
    def from_dict(cls, d: dict) -> "AssetRecord":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise AssetError(f"unknown asset field(s): {', '.join(unknown)}")
        d = dict(d)
        if d.get("embedding") is not None:
            d["embedding"] = tuple(float(x) for x in d["embedding"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise AssetError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["embedding"] is None:
            del d["embedding"]
        else:
            d["embedding"] = list(d["embedding"])
        return d


def load_corpus(source: str | Path | Iterable[str]) -> list[AssetRecord]:
    """JSON-lines corpus: one record per non-blank line."""
    lines = Path(source).read_text().splitlines() if isinstance(source, (str, Path)) else list(source)
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(AssetRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, AssetError) as exc:
            raise AssetError(f"corpus line {n}: {exc}") from None
    names = [a.asset_name for a in out]
    if len(set(names)) != len(names):
        raise AssetError("duplicate asset_name in corpus")
    return out


def dump_corpus(records: Sequence[AssetRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=False) + "\n" for r in records)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchWeights:
    lam_sem: float = 0.5
    lam_geo: float = 0.3
    lam_style: float = 0.2
    tau: float = 0.4
    category_bonus: float = 0.5  # share of sim given by a category match when no embeddings

    def __post_init__(self):
        if min(self.lam_sem, self.lam_geo, self.lam_style) < 0:
            raise AssetError("match weights must be non-negative")
        if self.lam_sem + self.lam_geo + self.lam_style <= 0:
            raise AssetError("at least one match weight must be positive")
        if not 0 <= self.category_bonus <= 1:
            raise AssetError("category_bonus must lie in [0, 1]")


@dataclass(frozen=True)
class MatchScore:
    asset: AssetRecord
    score: float
    sim: float
    iou: float
    style: float


_WORD = re.compile(r"[a-z]+")


def object_tokens(obj: ObjectSpec) -> set[str]:
    toks = {obj.category}
    for kind in ("Semantics", "Style", "Attribute", "Label"):
        for v in tag_values(obj.semantic_tags, kind):
            toks.update(_WORD.findall(v.lower()))
    return toks


def asset_tokens(a: AssetRecord) -> set[str]:
    toks = {a.category}
    for s in (a.style, a.material_type, a.asset_name.replace("_", " ")):
        toks.update(_WORD.findall(s.lower()))
    return toks


def semantic_similarity(obj: ObjectSpec, a: AssetRecord, w: MatchWeights, obj_embedding=None) -> float:
    """Cosine of embeddings (clipped at 0) when both exist, else a category
    bonus plus tag Jaccard, both in [0, 1]."""
    if obj_embedding is not None and a.embedding is not None:
        u, v = np.asarray(obj_embedding, float), np.asarray(a.embedding, float)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            return 0.0
        return float(max(0.0, min(1.0, u @ v / (nu * nv))))
    A, B = object_tokens(obj), asset_tokens(a)
    jac = len(A & B) / len(A | B)
    return w.category_bonus * float(obj.category == a.category) + (1 - w.category_bonus) * jac


def box_iou(a, b) -> float:
    """IoU of two centre-aligned axis-aligned boxes given by their sizes."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    inter = float(np.prod(np.minimum(a, b)))
    return inter / (float(np.prod(a)) + float(np.prod(b)) - inter)


def target_size(obj: ObjectSpec) -> np.ndarray:
    return np.abs(np.asarray(obj.local_bbox.size, float) * np.asarray(obj.scale, float))


def match_asset(obj: ObjectSpec, corpus: Sequence[AssetRecord], w: MatchWeights | None = None, room_style: str | None = None, obj_embedding=None) -> list[MatchScore]:
    """Rank the corpus for one object: best first, ties by asset_name."""
    if not corpus:
        raise AssetError("asset corpus is empty")
    w = w or MatchWeights()
    size = target_size(obj)
    out = []
    for a in corpus:
        sim = semantic_similarity(obj, a, w, obj_embedding)
        iou = box_iou(a.size, size)
        sty = psi(a.style or None, room_style)
        score = w.lam_sem * sim + w.lam_geo * iou + w.lam_style * sty
        out.append(MatchScore(a, score, sim, iou, sty))
    out.sort(key=lambda m: (-m.score, m.asset.asset_name))
    return out


def needs_fallback(obj: ObjectSpec, ranked: Sequence[MatchScore], w: MatchWeights) -> bool:
    if not any(m.asset.category == obj.category for m in ranked):
        return True
    return ranked[0].score < w.tau


# ---------------------------------------------------------------------------
# parametric fallback
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FallbackStyle:
    """Proportions for the parametric generators, as fractions of the box."""

    leg: float = 0.06  # leg side, fraction of the smaller plan side
    top: float = 0.06  # tabletop thickness, fraction of height
    seat: float = 0.45  # seat slab height, fraction of height
    back: float = 0.15  # backrest depth, fraction of depth
    frame: float = 0.08  # frame bar width, fraction of the smaller face side
    panel: float = 0.5  # panel depth, fraction of depth


SHAPES = {
    "tabletop_on_legs": (
        "table", "desk", "dining_table", "coffee_table", "side_table", "console_table", "standing_desk",
        "drafting_table", "workbench", "ping_pong_table", "pool_table", "changing_table", "kitchen_island",
    ),
    "slab_with_back": (
        "chair", "office_chair", "armchair", "sofa", "sectional_sofa", "loveseat", "bench", "hallway_bench",
        "bed", "single_bed", "bunk_bed", "recliner", "rocking_chair", "high_chair",
    ),
    "frame_panel": (
        "door", "window", "mirror", "painting", "poster", "photo_frame", "tv", "monitor", "whiteboard",
        "blackboard", "projector_screen",
    ),
}
_SHAPE_OF = {c: s for s, cats in SHAPES.items() for c in cats}


def shape_for(category: str) -> tuple[str, bool]:
    """Generator name and whether the category is known at all."""
    if category in _SHAPE_OF:
        return _SHAPE_OF[category], True
    return "box", category in lexicon().categories


def _tabletop(mb: MeshBuilder, w, d, h, st: FallbackStyle, tag):
    top = max(min(st.top * h, h / 2), 1e-3)
    leg = min(w, d) * st.leg
    mb.box((-w / 2, -d / 2, h - top), (w / 2, d / 2, h), f"{tag}:top")
    for sx in (-1, 1):
        for sy in (-1, 1):
            x0 = w / 2 - leg if sx > 0 else -w / 2
            y0 = d / 2 - leg if sy > 0 else -d / 2
            mb.box((x0, y0, 0.0), (x0 + leg, y0 + leg, h - top), f"{tag}:leg")


def _slab_with_back(mb: MeshBuilder, w, d, h, st: FallbackStyle, tag):
    seat = st.seat * h
    back = st.back * d
    # forward is +y, so the backrest sits at -y
    mb.box((-w / 2, -d / 2 + back, 0.0), (w / 2, d / 2, seat), f"{tag}:seat")
    mb.box((-w / 2, -d / 2, 0.0), (w / 2, -d / 2 + back, h), f"{tag}:back")


def _frame_panel(mb: MeshBuilder, w, d, h, st: FallbackStyle, tag):
    bar = min(w, h) * st.frame
    mb.box((-w / 2, -d / 2, 0.0), (-w / 2 + bar, d / 2, h), f"{tag}:frame")
    mb.box((w / 2 - bar, -d / 2, 0.0), (w / 2, d / 2, h), f"{tag}:frame")
    mb.box((-w / 2 + bar, -d / 2, 0.0), (w / 2 - bar, d / 2, bar), f"{tag}:frame")
    mb.box((-w / 2 + bar, -d / 2, h - bar), (w / 2 - bar, d / 2, h), f"{tag}:frame")
    pd = d * st.panel
    mb.box((-w / 2 + bar, -pd / 2, bar), (w / 2 - bar, pd / 2, h - bar), f"{tag}:panel")


def _box(mb: MeshBuilder, w, d, h, st: FallbackStyle, tag):
    mb.box((-w / 2, -d / 2, 0.0), (w / 2, d / 2, h), f"{tag}:body")


_GENERATORS = {"tabletop_on_legs": _tabletop, "slab_with_back": _slab_with_back, "frame_panel": _frame_panel, "box": _box}


def proxy_mesh(category: str, size, style: FallbackStyle | None = None, tag: str | None = None) -> Mesh:
    """Generator geometry in the asset frame: x,y centred, z from 0."""
    w, d, h = (float(v) for v in size)
    if min(w, d, h) <= 0:
        raise AssetError(f"target size must be positive, got {(w, d, h)}")
    shape, _ = shape_for(category)
    mb = MeshBuilder()
    _GENERATORS[shape](mb, w, d, h, style or FallbackStyle(), tag or f"pcg:{category}")
    return mb.build({"shape": shape, "category": category})


def fallback_generate(obj: ObjectSpec, style: FallbackStyle | None = None) -> tuple[AssetRecord, Mesh]:
    """Parametric stand-in whose bounding box is exactly the target box."""
    shape, known = shape_for(obj.category)
    if not known:
        log.warning("no generator for unknown category %r; using a plain box", obj.category)
    w, d, h = (float(v) for v in target_size(obj))
    mesh = proxy_mesh(obj.category, (w, d, h), style)
    rec = AssetRecord(
        file_path="",
        asset_name=f"pcg_{obj.category}_{obj.object_id}",
        category=obj.category,
        description=f"parametric {shape.replace('_', ' ')}",
        style=obj.style or "",
        bbox_x=w, bbox_y=d, bbox_z=h,
        notes="" if known else "unknown category: plain box",
        min_x=-w / 2, max_x=w / 2, min_y=-d / 2, max_y=d / 2, min_z=0.0, max_z=h,
    )
    return rec, mesh


@dataclass(frozen=True)
class Selection:
    object_id: str
    asset: AssetRecord
    score: float | None
    generated: bool
    ranked: tuple[MatchScore, ...] = field(default=(), repr=False)


def select_asset(obj: ObjectSpec, corpus: Sequence[AssetRecord], w: MatchWeights | None = None, room_style: str | None = None, style: FallbackStyle | None = None) -> tuple[Selection, Mesh | None]:
    """Best corpus asset, or generated geometry when retrieval is not confident."""
    w = w or MatchWeights()
    ranked = match_asset(obj, corpus, w, room_style) if corpus else []
    if not ranked or needs_fallback(obj, ranked, w):
        rec, mesh = fallback_generate(obj, style)
        return Selection(obj.object_id, rec, ranked[0].score if ranked else None, True, tuple(ranked)), mesh
    return Selection(obj.object_id, ranked[0].asset, ranked[0].score, False, tuple(ranked)), None
