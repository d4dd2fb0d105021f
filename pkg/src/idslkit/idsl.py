"""IDSL scene documents: data model, JSON round-trip and invariant checks.

A scene is one building, a map of rooms keyed by canonical label
(``type_floor/index``) and a map of objects keyed by id.  All values are
immutable; edits produce new objects via :func:`dataclasses.replace` or the
helpers at the bottom of this module.

Field names follow the on-disk JSON exactly (``polygon_coords``, ``tags``,
``objs`` ...).  Keys the model does not know about are kept verbatim in the
``extra`` maps and written back on serialization.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from . import geometry as geo
from .geometry import PlaneRef, Rect2D, Segment2D
from .pose import euler_to_matrix, matrix_to_euler, quat_normalize, quat_to_matrix

log = logging.getLogger(__name__)

RELATION_TYPES = (
    "StableAgainst",
    "OnTopOf",
    "Facing",
    "Near",
    "AlignedWith",
    "AdjacentTo",
    "SharedEdge",
)
ROOM_LABEL_RE = re.compile(r"^[a-z][a-z0-9-]*_\d+/\d+$")

UNIT_TOL = 1e-6
AREA_RTOL = 1e-6
BOUNDS_TOL = 1e-9
# bounding_box center/size consistency; documents carry 4 printed decimals
BBOX_TOL = 1e-4
CORNER_TOL = 1e-4
# rotation blocks of transform/euler vs. the quaternion, same reason
ROT_TOL = 1e-3
TRANSLATION_TOL = 1e-6

DEFAULT_ROOM_HEIGHT = 2.8


class IDSLError(Exception):
    """Base class for document errors."""


class IDSLSyntaxError(IDSLError):
    def __init__(self, msg: str, lineno: int = 0, colno: int = 0, pos: int = 0):
        super().__init__(f"{msg} (line {lineno}, column {colno})")
        self.lineno = lineno
        self.colno = colno
        self.pos = pos


class IDSLSchemaError(IDSLError):
    def __init__(self, issues: Sequence["ValidationIssue"]):
        self.issues = list(issues)
        head = "; ".join(f"{i.path}: {i.message}" for i in self.issues[:5])
        more = f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        super().__init__(f"{len(self.issues)} schema issue(s): {head}{more}")


class UnknownRelationError(IDSLSchemaError):
    """A relation_type outside the closed enumeration."""


@dataclass(frozen=True)
class ValidationIssue:
    severity: str
    path: str
    message: str

    def as_dict(self) -> dict:
        return {"severity": self.severity, "path": self.path, "message": self.message}


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

Vec = tuple[float, ...]


def _vec(v, n: int | None = None) -> Vec:
    if isinstance(v, np.ndarray):
        out = tuple(v.astype(float).ravel().tolist())
    else:
        out = tuple(float(x) for x in v)
    if n is not None and len(out) != n:
        raise ValueError(f"expected {n} components, got {len(out)}")
    return out


def _mat(m) -> tuple[Vec, ...]:
    if isinstance(m, np.ndarray):
        return tuple(map(tuple, m.astype(float).tolist()))
    return tuple(_vec(row) for row in m)


def _ring(p) -> tuple[tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in p)


@dataclass(frozen=True)
class RelationSpec:
    relation_type: str
    target_name: str
    child_plane_idx: int = 0
    parent_plane_idx: int = 0
    margin: float = 0.0
    check_z: bool = False
    rev_normal: bool = False
    value: str | None = None
    child_tags: tuple[str, ...] = ()
    parent_tags: tuple[str, ...] = ()
    # further keys inside the "relation" object (weights, thresholds ...)
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def weight(self) -> float:
        return float(self.params.get("weight", 1.0))


@dataclass(frozen=True)
class RoomRelation:
    relation_type: str
    target: str
    segment: Segment2D | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Connectivity:
    rooms: tuple[str, ...]
    neighbours: tuple[tuple[int, ...], ...]
    entrance: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BuildingSpec:
    building_id: str
    floor_outline: tuple[tuple[float, float], ...]
    scene_tags: tuple[str, ...] = ()
    room_entities: tuple[str, ...] = ()
    connectivity: Connectivity | None = None
    # relation entries beyond the connectivity record, kept opaque
    other_relations: tuple[dict, ...] = ()
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RoomSpec:
    room_id: str
    room_type: str
    polygon_coords: tuple[tuple[float, float], ...]
    tags: tuple[str, ...] = ()
    area: float = 0.0
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    relations: tuple[RoomRelation, ...] = ()
    active: bool = True
    extra: dict = field(default_factory=dict)

    @cached_property
    def polygon(self) -> np.ndarray:
        return geo.as_polygon(self.polygon_coords)

    @property
    def style(self) -> str | None:
        return tag_value(self.tags, "Style")


@dataclass(frozen=True)
class OpeningSpec:
    kind: str
    width: float
    height: float
    sill_height: float
    wall: tuple[tuple[float, float], tuple[float, float]]
    anchor: tuple[float, float]
    rooms: tuple[str, ...]
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LocalBox:
    center: Vec
    size: Vec


@dataclass(frozen=True)
class WorldBox:
    min: Vec
    max: Vec
    center: Vec
    size: Vec


@dataclass(frozen=True)
class WorldGeometry:
    footprint: Rect2D
    world_bbox: tuple[np.ndarray, np.ndarray]
    planes: list[PlaneRef]


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    category: str
    position_world: Vec
    rotation_quaternion: Vec
    local_bbox: LocalBox
    scale: Vec = (1.0, 1.0, 1.0)
    rotation_euler: Vec = (0.0, 0.0, 0.0)
    rotation_axis: Vec = (0.0, 0.0, 1.0)
    affine_basis: tuple[Vec, ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 0.0))
    transform_matrix: tuple[Vec, ...] = ()
    bounding_box: WorldBox | None = None
    bbox_corners: tuple[Vec, ...] = ()
    semantic_tags: tuple[str, ...] = ()
    polygon: tuple[tuple[float, float], ...] | None = None
    relation_graph: tuple[RelationSpec, ...] = ()
    active: bool = True
    opening: OpeningSpec | None = None
    extra: dict = field(default_factory=dict)

    # -- derived, cached per instance -----------------------------------
    @cached_property
    def rotation(self) -> np.ndarray:
        """Pure rotation from the (authoritative) quaternion."""
        return quat_to_matrix(self.rotation_quaternion)

    @cached_property
    def linear(self) -> np.ndarray:
        return self.rotation * np.asarray(self.scale, dtype=float)

    @cached_property
    def world_center(self) -> np.ndarray:
        return np.asarray(self.position_world) + self.linear @ np.asarray(self.local_bbox.center)

    @cached_property
    def world_corners(self) -> np.ndarray:
        local = geo.box_corners(self.local_bbox.center, self.local_bbox.size)
        return local @ self.linear.T + np.asarray(self.position_world)

    @cached_property
    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.world_corners
        return c.min(axis=0), c.max(axis=0)

    @cached_property
    def footprint(self) -> Rect2D:
        lo, hi = self.world_bounds
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @cached_property
    def planes(self) -> list[PlaneRef]:
        return geo.oriented_box_planes(self.world_center, self.local_bbox.size, self.linear)

    @property
    def forward(self) -> np.ndarray:
        """World direction of the local +y axis."""
        return self.rotation[:, 1]

    @property
    def style(self) -> str | None:
        return tag_value(self.semantic_tags, "Style")

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(tag_values(self.semantic_tags, "Group"))

    def with_pose(self, position=None, quaternion=None, scale=None) -> "ObjectSpec":
        """Copy with a new pose; every redundant pose field is recomputed."""
        return make_object(
            self.object_id,
            self.category,
            position=self.position_world if position is None else position,
            quaternion=self.rotation_quaternion if quaternion is None else quaternion,
            scale=self.scale if scale is None else scale,
            local_center=self.local_bbox.center,
            local_size=self.local_bbox.size,
            rotation_axis=self.rotation_axis,
            semantic_tags=self.semantic_tags,
            relation_graph=self.relation_graph,
            polygon=self.polygon,
            active=self.active,
            opening=self.opening,
            extra=self.extra,
        )


@dataclass(frozen=True)
class SceneState:
    building: BuildingSpec
    rooms: dict[str, RoomSpec] = field(default_factory=dict)
    objects: dict[str, ObjectSpec] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def with_objects(self, updates: Mapping[str, ObjectSpec]) -> "SceneState":
        objs = dict(self.objects)
        objs.update(updates)
        return replace(self, objects=objs)

    def entity_exists(self, name: str) -> bool:
        return name in self.rooms or name in self.objects


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

_TAG_RE = re.compile(r"^-?(\w+)\((.*)\)$")


def tag_values(tags: Sequence[str], kind: str) -> list[str]:
    out = []
    for t in tags:
        m = _TAG_RE.match(t)
        if m and m.group(1) == kind and not t.startswith("-"):
            out.append(m.group(2))
    return out


def tag_value(tags: Sequence[str], kind: str) -> str | None:
    vals = tag_values(tags, kind)
    return vals[0] if vals else None


def room_type_of(label: str) -> str:
    return label.split("_", 1)[0]


def make_room(
    label: str,
    polygon,
    tags: Sequence[str] = (),
    relations: Sequence[RoomRelation] = (),
    room_type: str | None = None,
    active: bool = True,
    extra: dict | None = None,
) -> RoomSpec:
    """Room with area/bounds computed from ``polygon`` (stored closed)."""
    ring = _ring(geo.closed_ring(polygon))
    return RoomSpec(
        room_id=label,
        room_type=room_type or room_type_of(label),
        polygon_coords=ring,
        tags=tuple(tags),
        area=abs(geo.polygon_area(ring)),
        bounds=geo.polygon_bounds(ring),
        relations=tuple(relations),
        active=active,
        extra=dict(extra or {}),
    )


def make_object(
    object_id: str,
    category: str,
    position,
    quaternion=(1.0, 0.0, 0.0, 0.0),
    scale=(1.0, 1.0, 1.0),
    local_center=(0.0, 0.0, 0.0),
    local_size=(1.0, 1.0, 1.0),
    rotation_axis=(0.0, 0.0, 1.0),
    semantic_tags: Sequence[str] = (),
    relation_graph: Sequence[RelationSpec] = (),
    polygon=None,
    active: bool = True,
    opening: OpeningSpec | None = None,
    extra: dict | None = None,
) -> ObjectSpec:
    """Object whose redundant pose fields are all consistent with the quaternion."""
    q = quat_normalize(quaternion)
    R = quat_to_matrix(q)
    s = np.asarray(scale, dtype=float)
    p = np.asarray(position, dtype=float)
    M = R * s
    T = np.eye(4)
    T[:3, :3] = M
    T[:3, 3] = p
    a = np.asarray(rotation_axis, dtype=float)
    a = a / np.linalg.norm(a)
    lc = np.asarray(local_center, dtype=float)
    ls = np.asarray(local_size, dtype=float)
    corners = geo.box_corners(lc, ls) @ M.T + p
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    return ObjectSpec(
        object_id=object_id,
        category=category,
        position_world=_vec(p),
        rotation_quaternion=_vec(q),
        local_bbox=LocalBox(_vec(lc), _vec(ls)),
        scale=_vec(s),
        rotation_euler=_vec(matrix_to_euler(R)),
        rotation_axis=_vec(a),
        affine_basis=_mat(np.eye(3) - np.outer(a, a)),
        transform_matrix=_mat(T),
        bounding_box=WorldBox(_vec(lo), _vec(hi), _vec((lo + hi) / 2), _vec(hi - lo)),
        bbox_corners=_mat(corners),
        semantic_tags=tuple(semantic_tags),
        polygon=None if polygon is None else _ring(polygon),
        relation_graph=tuple(relation_graph),
        active=active,
        opening=opening,
        extra=dict(extra or {}),
    )


def derive_world_geometry(obj: ObjectSpec) -> WorldGeometry:
    """Footprint, world AABB and the six oriented faces of an object.

    Faces are indexed bottom, top, +x, -x, +y, -y in the object's local
    frame; normals point outward.
    """
    size = np.asarray(obj.local_bbox.size, dtype=float)
    if np.any(size <= 0) or np.any(np.asarray(obj.scale) == 0):
        raise geo.GeometryError(f"degenerate box for {obj.object_id}: size {tuple(size)}")
    lo, hi = obj.world_bounds
    return WorldGeometry(obj.footprint, (lo.copy(), hi.copy()), list(obj.planes))


def room_planes(room: RoomSpec, height: float = DEFAULT_ROOM_HEIGHT) -> list[PlaneRef]:
    """Plane 0 is the floor (normal +z); plane k >= 1 is wall edge k-1 of the
    stored ring, normal pointing into the room."""
    poly = room.polygon
    ccw = geo.signed_area(poly) >= 0
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    c = geo.polygon_centroid(poly)
    planes = [
        PlaneRef(
            point=np.array([c[0], c[1], 0.0]),
            normal=np.array([0.0, 0.0, 1.0]),
            u=np.array([1.0, 0.0, 0.0]),
            v=np.array([0.0, 1.0, 0.0]),
            half_extents=(float(hi[0] - lo[0]) / 2, float(hi[1] - lo[1]) / 2),
        )
    ]
    for a, b in geo.polygon_edges(poly):
        d = b - a
        L = float(np.hypot(*d))
        u = d / L
        n = np.array([-u[1], u[0]]) if ccw else np.array([u[1], -u[0]])
        m = (a + b) / 2
        planes.append(
            PlaneRef(
                point=np.array([m[0], m[1], height / 2]),
                normal=np.array([n[0], n[1], 0.0]),
                u=np.array([u[0], u[1], 0.0]),
                v=np.array([0.0, 0.0, 1.0]),
                half_extents=(L / 2, height / 2),
            )
        )
    return planes


# ---------------------------------------------------------------------------
# WKT segment values
# ---------------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_MLS_RE = re.compile(
    rf"^\s*MULTILINESTRING\s*\(\(\s*({_NUM})\s+({_NUM})\s*,\s*({_NUM})\s+({_NUM})\s*\)\)\s*$"
)


def parse_segment_value(text: str) -> Segment2D:
    """Parse a single-segment ``MULTILINESTRING ((x y, x y))``."""
    m = _MLS_RE.match(text)
    if not m:
        raise ValueError(f"unsupported segment value {text!r}")
    x0, y0, x1, y1 = (float(g) for g in m.groups())
    return Segment2D((x0, y0), (x1, y1))


def format_segment_value(seg: Segment2D) -> str:
    (x0, y0), (x1, y1) = seg.a, seg.b
    return f"MULTILINESTRING (({x0!r} {y0!r}, {x1!r} {y1!r}))"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SCHEMA = None


def document_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("idslkit").joinpath("data/idsl.schema.json").read_text("utf-8")
        _SCHEMA = json.loads(text)
    return _SCHEMA


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not valid IDSL")


def _load_json(data) -> Any:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IDSLSyntaxError(f"invalid UTF-8: {exc.reason}", 0, 0, exc.start) from exc
    try:
        return json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise IDSLSyntaxError(exc.msg, exc.lineno, exc.colno, exc.pos) from exc
    except ValueError as exc:
        raise IDSLSyntaxError(str(exc)) from exc


def _schema_issues(doc) -> list[ValidationIssue]:
    validator = jsonschema.Draft202012Validator(document_schema())
    issues = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        path = "/".join(str(p) for p in err.absolute_path)
        issues.append(ValidationIssue("error", path, err.message))
    return issues


def _split(d: Mapping, known: set[str]) -> dict:
    return {k: v for k, v in d.items() if k not in known}


_REL_INNER = {"relation_type", "margin", "check_z", "rev_normal", "child_tags", "parent_tags"}
_REL_OUTER = {"relation", "target_name", "child_plane_idx", "parent_plane_idx", "value"}


def _decode_relation(d: Mapping, path: str) -> RelationSpec:
    inner = d["relation"]
    rtype = inner["relation_type"]
    if rtype not in RELATION_TYPES:
        raise UnknownRelationError(
            [ValidationIssue("error", f"{path}/relation/relation_type", f"unknown relation_type {rtype!r}")]
        )
    return RelationSpec(
        relation_type=rtype,
        target_name=d["target_name"],
        child_plane_idx=int(d.get("child_plane_idx", 0)),
        parent_plane_idx=int(d.get("parent_plane_idx", 0)),
        margin=float(inner.get("margin", 0.0)),
        check_z=bool(inner.get("check_z", False)),
        rev_normal=bool(inner.get("rev_normal", False)),
        value=d.get("value"),
        child_tags=tuple(inner.get("child_tags", ())),
        parent_tags=tuple(inner.get("parent_tags", ())),
        params=_split(inner, _REL_INNER),
        extra=_split(d, _REL_OUTER),
    )


def _decode_room(label: str, d: Mapping) -> RoomSpec:
    path = f"rooms/{label}"
    ring = _ring(d["polygon_coords"])
    rels = []
    for k, r in enumerate(d.get("relations", ())):
        rtype = r["relation_type"]
        if rtype not in RELATION_TYPES:
            raise UnknownRelationError(
                [ValidationIssue("error", f"{path}/relations/{k}/relation_type", f"unknown relation_type {rtype!r}")]
            )
        seg = None
        value = r.get("value")
        extra = _split(r, {"relation_type", "target", "value"})
        if rtype == "SharedEdge":
            if value is None:
                raise IDSLSchemaError(
                    [ValidationIssue("error", f"{path}/relations/{k}", "SharedEdge without value")]
                )
            try:
                seg = parse_segment_value(value)
            except (ValueError, geo.GeometryError) as exc:
                raise IDSLSchemaError(
                    [ValidationIssue("error", f"{path}/relations/{k}/value", str(exc))]
                ) from exc
        elif value is not None:
            extra["value"] = value
        rels.append(RoomRelation(rtype, r["target"], seg, extra))
    if len(ring) >= 3:
        area_default = abs(geo.polygon_area(ring))
        bounds_default = geo.polygon_bounds(ring)
    else:
        area_default, bounds_default = 0.0, (0.0, 0.0, 0.0, 0.0)
    return RoomSpec(
        room_id=d.get("room_id", label),
        room_type=d.get("room_type", room_type_of(label)),
        polygon_coords=ring,
        tags=tuple(d.get("tags", ())),
        area=float(d.get("area", area_default)),
        bounds=_vec(d.get("bounds", bounds_default), 4),
        relations=tuple(rels),
        active=bool(d.get("active", True)),
        extra=_split(
            d, {"room_id", "room_type", "polygon_coords", "tags", "area", "bounds", "relations", "active"}
        ),
    )


_OBJ_KNOWN = {
    "object_id",
    "category",
    "polygon",
    "affine_basis",
    "rotation_axis",
    "rotation_euler",
    "rotation_quaternion",
    "scale",
    "position_world",
    "transform_matrix",
    "semantic_tags",
    "relation_graph",
    "bounding_box",
    "bbox_corners",
    "local_bbox",
    "active",
    "opening",
}


def _decode_opening(d: Mapping) -> OpeningSpec:
    return OpeningSpec(
        kind=d["kind"],
        width=float(d["width"]),
        height=float(d["height"]),
        sill_height=float(d["sill_height"]),
        wall=(_vec(d["wall"][0], 2), _vec(d["wall"][1], 2)),
        anchor=_vec(d["anchor"], 2),
        rooms=tuple(d["rooms"]),
        extra=_split(d, {"kind", "width", "height", "sill_height", "wall", "anchor", "rooms"}),
    )


def _decode_object(oid: str, d: Mapping) -> ObjectSpec:
    path = f"objs/{oid}"
    if "object_id" in d and d["object_id"] != oid:
        raise IDSLSchemaError(
            [ValidationIssue("error", f"{path}/object_id", f"object_id {d['object_id']!r} != key {oid!r}")]
        )
    rels = tuple(
        _decode_relation(r, f"{path}/relation_graph/{k}") for k, r in enumerate(d.get("relation_graph", ()))
    )
    lb = d["local_bbox"]
    q = _vec(d["rotation_quaternion"], 4)
    scale = _vec(d.get("scale", (1.0, 1.0, 1.0)), 3)
    axis = _vec(d.get("rotation_axis", (0.0, 0.0, 1.0)), 3)
    needs_derived = any(
        k not in d for k in ("rotation_euler", "affine_basis", "transform_matrix", "bounding_box", "bbox_corners")
    )
    base = None
    if needs_derived:
        if np.linalg.norm(q) == 0 or np.linalg.norm(axis) == 0:
            raise IDSLSchemaError([ValidationIssue("error", path, "cannot derive pose from a zero vector")])
        base = make_object(oid, d["category"], d["position_world"], q, scale, lb["center"], lb["size"], axis)

    def pick(key, conv):
        return conv(d[key]) if key in d else getattr(base, key)

    bb = d.get("bounding_box")
    opening = d.get("opening")
    return ObjectSpec(
        object_id=oid,
        category=d["category"],
        position_world=_vec(d["position_world"], 3),
        rotation_quaternion=q,
        local_bbox=LocalBox(_vec(lb["center"], 3), _vec(lb["size"], 3)),
        scale=scale,
        rotation_euler=pick("rotation_euler", lambda v: _vec(v, 3)),
        rotation_axis=axis,
        affine_basis=pick("affine_basis", _mat),
        transform_matrix=pick("transform_matrix", _mat),
        bounding_box=(
            WorldBox(_vec(bb["min"], 3), _vec(bb["max"], 3), _vec(bb["center"], 3), _vec(bb["size"], 3))
            if bb is not None
            else base.bounding_box
        ),
        bbox_corners=pick("bbox_corners", _mat),
        semantic_tags=tuple(d.get("semantic_tags", ())),
        polygon=None if d.get("polygon") is None else _ring(d["polygon"]),
        relation_graph=rels,
        active=bool(d.get("active", True)),
        opening=None if opening is None else _decode_opening(opening),
        extra=_split(d, _OBJ_KNOWN),
    )


def _decode_building(d: Mapping) -> BuildingSpec:
    conn = None
    others = []
    for entry in d.get("relations", ()):
        if conn is None and "neighbours" in entry:
            conn = Connectivity(
                rooms=tuple(entry["rooms"]),
                neighbours=tuple(tuple(int(i) for i in row) for row in entry["neighbours"]),
                entrance=entry.get("entrance"),
                extra=_split(entry, {"rooms", "neighbours", "entrance"}),
            )
        else:
            others.append(dict(entry))
    return BuildingSpec(
        building_id=d["building_id"],
        floor_outline=_ring(d["floor_outline"]),
        scene_tags=tuple(d.get("scene_tags", ())),
        room_entities=tuple(d.get("room_entities", ())),
        connectivity=conn,
        other_relations=tuple(others),
        extra=_split(d, {"building_id", "floor_outline", "scene_tags", "room_entities", "relations"}),
    )


def decode_document(doc: Any, check: bool = True) -> SceneState:
    """Build a :class:`SceneState` from an already-loaded JSON value."""
    if not isinstance(doc, dict):
        raise IDSLSchemaError([ValidationIssue("error", "", "document root must be an object")])
    issues = _schema_issues(doc)
    if issues:
        raise IDSLSchemaError(issues)
    state = SceneState(
        building=_decode_building(doc["building"]),
        rooms={label: _decode_room(label, r) for label, r in doc["rooms"].items()},
        objects={oid: _decode_object(oid, o) for oid, o in doc["objs"].items()},
        extra=_split(doc, {"building", "rooms", "objs"}),
    )
    if check:
        errors = [i for i in validate(state) if i.severity == "error"]
        if errors:
            raise IDSLSchemaError(errors)
    return state


def parse_idsl(data: bytes | str, check: bool = True) -> SceneState:
    """Parse an IDSL JSON document.

    With ``check`` (the default) the invariants of :func:`validate` are
    enforced and violations raise :class:`IDSLSchemaError`; pass
    ``check=False`` to load a structurally well-formed but inconsistent
    document for inspection.
    """
    return decode_document(_load_json(data), check=check)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _lst(v):
    return [list(r) if isinstance(r, tuple) else r for r in v]


def _encode_relation(r: RelationSpec) -> dict:
    inner = dict(r.params)
    inner.update(
        relation_type=r.relation_type,
        margin=r.margin,
        check_z=r.check_z,
        rev_normal=r.rev_normal,
    )
    if r.child_tags:
        inner["child_tags"] = list(r.child_tags)
    if r.parent_tags:
        inner["parent_tags"] = list(r.parent_tags)
    out = dict(r.extra)
    out.update(
        relation=inner,
        target_name=r.target_name,
        child_plane_idx=r.child_plane_idx,
        parent_plane_idx=r.parent_plane_idx,
        value=r.value,
    )
    return out


def _encode_room(r: RoomSpec) -> dict:
    rels = []
    for rel in r.relations:
        d = dict(rel.extra)
        d.update(relation_type=rel.relation_type, target=rel.target)
        if rel.segment is not None:
            d["value"] = format_segment_value(rel.segment)
        rels.append(d)
    out = dict(r.extra)
    out.update(
        room_type=r.room_type,
        polygon_coords=_lst(r.polygon_coords),
        tags=list(r.tags),
        area=r.area,
        bounds=list(r.bounds),
        relations=rels,
        active=r.active,
    )
    return out


def _encode_object(o: ObjectSpec) -> dict:
    bb = o.bounding_box
    out = dict(o.extra)
    out.update(
        category=o.category,
        polygon=None if o.polygon is None else _lst(o.polygon),
        affine_basis=_lst(o.affine_basis),
        rotation_axis=list(o.rotation_axis),
        rotation_euler=list(o.rotation_euler),
        rotation_quaternion=list(o.rotation_quaternion),
        scale=list(o.scale),
        position_world=list(o.position_world),
        transform_matrix=_lst(o.transform_matrix),
        semantic_tags=list(o.semantic_tags),
        relation_graph=[_encode_relation(r) for r in o.relation_graph],
        bounding_box={
            "min": list(bb.min),
            "max": list(bb.max),
            "center": list(bb.center),
            "size": list(bb.size),
        },
        bbox_corners=_lst(o.bbox_corners),
        local_bbox={"center": list(o.local_bbox.center), "size": list(o.local_bbox.size)},
        active=o.active,
    )
    if o.opening is not None:
        op = o.opening
        d = dict(op.extra)
        d.update(
            kind=op.kind,
            width=op.width,
            height=op.height,
            sill_height=op.sill_height,
            wall=[list(op.wall[0]), list(op.wall[1])],
            anchor=list(op.anchor),
            rooms=list(op.rooms),
        )
        out["opening"] = d
    return out


def encode_document(state: SceneState) -> dict:
    b = state.building
    rels = []
    if b.connectivity is not None:
        c = b.connectivity
        entry = dict(c.extra)
        entry.update(
            neighbours=[list(row) for row in c.neighbours],
            rooms=list(c.rooms),
            entrance=c.entrance,
        )
        rels.append(entry)
    rels.extend(dict(e) for e in b.other_relations)
    building = dict(b.extra)
    building.update(
        building_id=b.building_id,
        floor_outline=_lst(b.floor_outline),
        scene_tags=list(b.scene_tags),
        room_entities=list(b.room_entities),
        relations=rels,
    )
    doc = dict(state.extra)
    doc.update(
        building=building,
        rooms={k: _encode_room(r) for k, r in state.rooms.items()},
        objs={k: _encode_object(o) for k, o in state.objects.items()},
    )
    return doc


def serialize_idsl(state: SceneState) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, shortest round-trip floats."""
    text = json.dumps(encode_document(state), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _close(a, b, tol) -> bool:
    return bool(np.all(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) <= tol))


def _validate_building(state: SceneState, out: list[ValidationIssue]) -> None:
    b = state.building
    if not geo.is_simple(b.floor_outline):
        out.append(ValidationIssue("error", "building/floor_outline", "floor outline is not a simple polygon"))
    for i, label in enumerate(b.room_entities):
        if label not in state.rooms:
            out.append(ValidationIssue("error", f"building/room_entities/{i}", f"no room named {label!r}"))
    c = b.connectivity
    if c is None:
        return
    n = len(c.rooms)
    base = "building/relations/0"
    if len(c.neighbours) != n:
        out.append(
            ValidationIssue("error", f"{base}/neighbours", f"{len(c.neighbours)} adjacency rows for {n} rooms")
        )
    else:
        bad_index = False
        for i, row in enumerate(c.neighbours):
            for k, j in enumerate(row):
                if not 0 <= j < n or j == i:
                    out.append(
                        ValidationIssue("error", f"{base}/neighbours/{i}/{k}", f"invalid neighbour index {j}")
                    )
                    bad_index = True
        if not bad_index:
            for i, row in enumerate(c.neighbours):
                missing = [j for j in row if i not in c.neighbours[j]]
                if missing:
                    out.append(
                        ValidationIssue(
                            "error",
                            f"{base}/neighbours/{i}",
                            f"asymmetric adjacency: {i} lists {missing} but not vice versa",
                        )
                    )
    if c.entrance is not None and not 0 <= c.entrance < n:
        out.append(ValidationIssue("error", f"{base}/entrance", f"entrance index {c.entrance} out of range"))


def _validate_room(label: str, r: RoomSpec, out: list[ValidationIssue]) -> None:
    path = f"rooms/{label}"
    if not ROOM_LABEL_RE.match(label):
        out.append(ValidationIssue("error", path, f"label {label!r} is not of the form type_floor/index"))
    if not geo.is_simple(r.polygon_coords):
        out.append(ValidationIssue("error", f"{path}/polygon_coords", "room polygon is not simple"))
        return
    area = abs(geo.polygon_area(r.polygon_coords))
    if abs(r.area - area) > AREA_RTOL * max(area, 1.0):
        out.append(ValidationIssue("error", f"{path}/area", f"area {r.area} != polygon area {area}"))
    bounds = geo.polygon_bounds(r.polygon_coords)
    if not _close(r.bounds, bounds, BOUNDS_TOL):
        out.append(ValidationIssue("error", f"{path}/bounds", f"bounds {list(r.bounds)} != {list(bounds)}"))
    for k, rel in enumerate(r.relations):
        if rel.segment is not None and not geo.segment_on_boundary(rel.segment, r.polygon_coords):
            out.append(
                ValidationIssue("error", f"{path}/relations/{k}", "SharedEdge segment is off the room boundary")
            )


def _validate_object(oid: str, o: ObjectSpec, state: SceneState, out: list[ValidationIssue]) -> None:
    path = f"objs/{oid}"
    q = np.asarray(o.rotation_quaternion)
    qn = float(np.linalg.norm(q))
    if abs(qn - 1.0) > UNIT_TOL:
        out.append(ValidationIssue("error", f"{path}/rotation_quaternion", f"quaternion norm {qn} is not 1"))
    axis_n = float(np.linalg.norm(o.rotation_axis))
    if abs(axis_n - 1.0) > UNIT_TOL:
        out.append(ValidationIssue("error", f"{path}/rotation_axis", f"rotation axis norm {axis_n} is not 1"))
    size = np.asarray(o.local_bbox.size)
    if np.any(size <= 0):
        out.append(ValidationIssue("error", f"{path}/local_bbox", "local box size must be positive"))
    bb = o.bounding_box
    lo, hi = np.asarray(bb.min), np.asarray(bb.max)
    if not (_close(bb.center, (lo + hi) / 2, BBOX_TOL) and _close(bb.size, hi - lo, BBOX_TOL)):
        out.append(ValidationIssue("error", f"{path}/bounding_box", "center/size inconsistent with min/max"))

    if qn > 0:
        R = quat_to_matrix(q) * np.asarray(o.scale)
        T = np.asarray(o.transform_matrix, dtype=float)
        if T.shape != (4, 4):
            out.append(ValidationIssue("error", f"{path}/transform_matrix", "transform must be 4x4"))
        else:
            ok = (
                _close(T[:3, :3], R, ROT_TOL)
                and _close(T[:3, 3], o.position_world, TRANSLATION_TOL)
                and _close(T[3], (0, 0, 0, 1), TRANSLATION_TOL)
            )
            if not ok:
                out.append(
                    ValidationIssue("error", f"{path}/transform_matrix", "transform disagrees with the quaternion pose")
                )
            elif len(o.bbox_corners) != 8:
                out.append(ValidationIssue("error", f"{path}/bbox_corners", "expected 8 corners"))
            else:
                local = geo.box_corners(o.local_bbox.center, o.local_bbox.size)
                world = local @ T[:3, :3].T + T[:3, 3]
                if not _close(world, o.bbox_corners, CORNER_TOL):
                    out.append(
                        ValidationIssue("error", f"{path}/bbox_corners", "corners disagree with transform applied to local box")
                    )
        if not _close(euler_to_matrix(o.rotation_euler), quat_to_matrix(q), ROT_TOL):
            out.append(ValidationIssue("error", f"{path}/rotation_euler", "euler angles disagree with the quaternion"))

    for k, rel in enumerate(o.relation_graph):
        rpath = f"{path}/relation_graph/{k}"
        if rel.relation_type not in RELATION_TYPES:
            out.append(
                ValidationIssue("error", f"{rpath}/relation/relation_type", f"unknown relation_type {rel.relation_type!r}")
            )
        if not state.entity_exists(rel.target_name):
            out.append(ValidationIssue("error", f"{rpath}/target_name", f"unknown target {rel.target_name!r}"))
        if rel.child_plane_idx < 0:
            out.append(ValidationIssue("error", f"{rpath}/child_plane_idx", "plane index must be nonnegative"))
        if rel.parent_plane_idx < 0:
            out.append(ValidationIssue("error", f"{rpath}/parent_plane_idx", "plane index must be nonnegative"))


def validate(state: SceneState) -> list[ValidationIssue]:
    """Check every scene invariant; one issue per violation."""
    out: list[ValidationIssue] = []
    _validate_building(state, out)
    for label, r in state.rooms.items():
        _validate_room(label, r, out)
    for oid, o in state.objects.items():
        _validate_object(oid, o, state, out)
    return out


def resolve_path(doc: Any, path: str) -> Any:
    """Follow a slash-separated issue path through a decoded JSON document.

    Room labels contain a slash, so keys are matched greedily against the
    current mapping.
    """
    node = doc
    parts = path.split("/") if path else []
    i = 0
    while i < len(parts):
        if isinstance(node, list):
            node = node[int(parts[i])]
            i += 1
            continue
        for j in range(len(parts), i, -1):
            key = "/".join(parts[i:j])
            if key in node:
                node = node[key]
                i = j
                break
        else:
            raise KeyError(f"path {path!r} does not resolve at {parts[i]!r}")
    return node


def quaternion_angle(q) -> float:
    w = min(1.0, abs(float(quat_normalize(q)[0])))
    return 2 * math.acos(w)
