"""Floor-plan import: DXF subset or native ``.plan.json`` into IDSL rooms,
walls and openings.

Pipeline::

    doc = load_floorplan(data, "dxf")
    rooms = extract_rooms(doc)
    walls = extract_walls(rooms)          # also mirrors SharedEdge relations
    openings = attach_openings(doc, walls.rooms, walls)
    scene = to_idsl(walls.rooms, walls, openings)
"""

from __future__ import annotations

import io
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import ezdxf
import ezdxf.units
import numpy as np

from . import geometry as geo
from . import idsl
from .geometry import Segment2D
from .idsl import Connectivity, RoomRelation, RoomSpec, SceneState
from .pose import quat_from_yaw

log = logging.getLogger(__name__)

LAYERS = ("Space", "Door", "Window", "Furniture")

DEFAULT_LAYER_MAP = {
    "Space": r"(?i)(space|room|area)",
    "Door": r"(?i)door",
    "Window": r"(?i)(window|glaz)",
    "Furniture": r"(?i)(furn|equip)",
}

ROOM_SYNONYMS = {
    "living": "living-room",
    "livingroom": "living-room",
    "lounge": "living-room",
    "dining": "dining-room",
    "diningroom": "dining-room",
    "bath": "bathroom",
    "wc": "bathroom",
    "toilet": "bathroom",
    "restroom": "bathroom",
    "bed": "bedroom",
    "master-bedroom": "bedroom",
    "study": "office",
    "hall": "hallway",
    "corridor": "hallway",
}

DEFAULT_MAX_SNAP = 0.3
DEFAULT_OUTLINE_MARGIN = 0.5
DEFAULT_WALL_THICKNESS = 0.1
OPENING_DEFAULTS = {"door": (2.1, 0.0), "window": (1.2, 0.9)}  # height, sill
FURNITURE_HEIGHT = 0.75
GROUP_GAP = 0.05


class CadError(ValueError):
    """Unreadable or inconsistent floor-plan input."""


@dataclass(frozen=True)
class Polyline:
    points: tuple[tuple[float, float], ...]
    closed: bool


@dataclass
class PlanGroup:
    layer: str
    label: str | None
    polylines: list[Polyline]

    def points(self) -> np.ndarray:
        return np.array([p for pl in self.polylines for p in pl.points], dtype=float).reshape(-1, 2)


@dataclass
class FloorPlanDoc:
    groups: list[PlanGroup]
    units: float = 1.0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.units <= 0:
            raise CadError("units must be positive")
        for g in self.groups:
            if g.layer not in LAYERS:
                raise CadError(f"unknown layer class {g.layer!r}")
            if g.layer == "Space" and not any(pl.closed for pl in g.polylines):
                raise CadError(f"Space group {g.label!r} has no closed polyline")


@dataclass(frozen=True)
class OpeningRecord:
    kind: str
    centroid: tuple[float, float]
    host_wall: Segment2D
    snapped_anchor: tuple[float, float]
    width: float
    adjacent_rooms: tuple[str, ...]


@dataclass(frozen=True)
class Wall:
    segment: Segment2D
    rooms: tuple[str, ...]


@dataclass
class WallSet:
    walls: list[Wall]
    shared: list[tuple[str, str, Segment2D]]
    rooms: list[RoomSpec]

    @property
    def segments(self) -> list[Segment2D]:
        return [w.segment for w in self.walls]


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def classify_layer(name: str, layer_map: Mapping[str, str] | None = None) -> str | None:
    for cls, pattern in (layer_map or DEFAULT_LAYER_MAP).items():
        if re.search(pattern, name):
            return cls
    return None


def _load_json_plan(data: bytes | str) -> FloorPlanDoc:
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CadError(f"plan JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(raw, dict) or "groups" not in raw:
        raise CadError("plan JSON needs a 'groups' list")
    units = float(raw.get("units", 1.0))
    groups = []
    for g in raw["groups"]:
        layer = g["layer"]
        polys = []
        for pl in g.get("polylines", ()):
            if isinstance(pl, dict):
                pts, closed = pl["points"], pl.get("closed", layer == "Space")
            else:
                pts, closed = pl, layer == "Space"
            pts = [(float(x) * units, float(y) * units) for x, y in pts]
            if len(pts) > 1 and pts[0] == pts[-1]:
                pts, closed = pts[:-1], True
            polys.append(Polyline(tuple(pts), bool(closed)))
        groups.append(PlanGroup(layer, g.get("label"), polys))
    return FloorPlanDoc(groups, units)


def _dxf_scale(doc) -> float:
    code = doc.header.get("$INSUNITS", 0)
    if not code:
        return 1.0
    try:
        return ezdxf.units.conversion_factor(code, ezdxf.units.M)
    except Exception:  # unknown unit code
        return 1.0


def _chain_lines(segs: list[tuple[tuple, tuple]], tol: float = 1e-6) -> list[Polyline]:
    """Join loose segments end to end; closed loops become closed polylines."""
    remaining = list(segs)
    out = []
    while remaining:
        a, b = remaining.pop(0)
        chain = [a, b]
        grown = True
        while grown:
            grown = False
            for i, (p, q) in enumerate(remaining):
                if math.dist(chain[-1], p) <= tol:
                    chain.append(q)
                elif math.dist(chain[-1], q) <= tol:
                    chain.append(p)
                else:
                    continue
                del remaining[i]
                grown = True
                break
        closed = len(chain) > 3 and math.dist(chain[0], chain[-1]) <= tol
        if closed:
            chain = chain[:-1]
        out.append(Polyline(tuple(chain), closed))
    return out


def _primitive(e, scale: float, warnings: list[str]) -> list[Polyline] | None:
    kind = e.dxftype()
    if kind == "LWPOLYLINE":
        pts = [(x * scale, y * scale) for x, y, *_ in e.get_points("xyb")]
        if any(b for *_, b in e.get_points("xyb")):
            warnings.append(f"LWPOLYLINE {e.dxf.handle}: bulges ignored")
        return [Polyline(tuple(pts), bool(e.closed))]
    if kind == "POLYLINE":
        pts = [(v.dxf.location[0] * scale, v.dxf.location[1] * scale) for v in e.vertices]
        return [Polyline(tuple(pts), bool(e.is_closed))]
    if kind == "LINE":
        s, t = e.dxf.start, e.dxf.end
        return [Polyline(((s[0] * scale, s[1] * scale), (t[0] * scale, t[1] * scale)), False)]
    return None


def _load_dxf(data: bytes | str, layer_map) -> FloorPlanDoc:
    text = data.decode("utf-8", errors="replace") if isinstance(data, (bytes, bytearray)) else data
    try:
        doc = ezdxf.read(io.StringIO(text))
    except Exception as exc:
        raise CadError(f"unreadable DXF: {exc}") from exc
    scale = _dxf_scale(doc)
    warnings: list[str] = []
    labels: list[tuple[str, tuple[float, float], str | None]] = []
    loose: dict[str, list[Polyline]] = {c: [] for c in LAYERS}
    loose_lines: dict[str, list] = {c: [] for c in LAYERS}
    blocks: list[tuple[str, str, list[Polyline]]] = []

    for e in doc.modelspace():
        kind = e.dxftype()
        if kind in ("TEXT", "MTEXT"):
            s = e.plain_text() if kind == "MTEXT" else e.dxf.text
            p = e.dxf.insert
            labels.append((s.strip(), (p[0] * scale, p[1] * scale), classify_layer(e.dxf.layer, layer_map)))
            continue
        cls = classify_layer(e.dxf.layer, layer_map)
        if kind == "INSERT":
            if cls is None:
                continue
            polys = []
            for ve in e.virtual_entities():
                prim = _primitive(ve, scale, warnings)
                if prim is None:
                    warnings.append(f"unsupported entity {ve.dxftype()} in block {e.dxf.name} skipped")
                else:
                    polys.extend(prim)
            blocks.append((cls, e.dxf.name, polys))
            continue
        prim = _primitive(e, scale, warnings)
        if prim is None:
            warnings.append(f"unsupported entity {kind} ({e.dxf.handle}) skipped")
            continue
        if cls is None:
            log.debug("entity %s on unmapped layer %s ignored", kind, e.dxf.layer)
            continue
        for pl in prim:
            if kind == "LINE":
                loose_lines[cls].append(pl.points)
            else:
                loose[cls].append(pl)

    for w in warnings:
        log.warning("dxf: %s", w)

    groups: list[PlanGroup] = []
    space_polys = loose["Space"] + _chain_lines(loose_lines["Space"])
    for pl in space_polys:
        if not pl.closed:
            warnings.append("open polyline on a Space layer skipped")
            continue
        inside = [s for s, p, c in labels if c in ("Space", None) and geo.point_in_polygon(p, pl.points)]
        groups.append(PlanGroup("Space", inside[0] if inside else None, [pl]))
    for cls in ("Door", "Window", "Furniture"):
        polys = loose[cls] + _chain_lines(loose_lines[cls])
        for cluster in _cluster(polys):
            pts = np.array([p for pl in cluster for p in pl.points])
            bbox = (*pts.min(0), *pts.max(0))
            label = next((s for s, p, c in labels if c == cls and _in_rect(p, bbox, GROUP_GAP)), None)
            groups.append(PlanGroup(cls, label, cluster))
    for cls, name, polys in blocks:
        if not polys:
            continue
        if cls == "Space":
            for pl in polys:
                if pl.closed:
                    groups.append(PlanGroup("Space", name, [pl]))
            continue
        groups.append(PlanGroup(cls, name, polys))
    return FloorPlanDoc(groups, scale, warnings)


def _in_rect(p, r, pad=0.0) -> bool:
    return r[0] - pad <= p[0] <= r[2] + pad and r[1] - pad <= p[1] <= r[3] + pad


def _cluster(polys: list[Polyline]) -> list[list[Polyline]]:
    """Group primitives whose bounding boxes touch (within GROUP_GAP)."""
    boxes = []
    for pl in polys:
        pts = np.asarray(pl.points)
        boxes.append((*pts.min(0), *pts.max(0)))
    parent = list(range(len(polys)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            a, b = boxes[i], boxes[j]
            if a[0] - GROUP_GAP <= b[2] and b[0] - GROUP_GAP <= a[2] and a[1] - GROUP_GAP <= b[3] and b[1] - GROUP_GAP <= a[3]:
                parent[find(i)] = find(j)
    clusters: dict[int, list[Polyline]] = {}
    for i, pl in enumerate(polys):
        clusters.setdefault(find(i), []).append(pl)
    return list(clusters.values())


def load_floorplan(data: bytes | str, fmt: str, layer_map: Mapping[str, str] | None = None) -> FloorPlanDoc:
    """Read a floor plan; coordinates come back in meters."""
    if fmt == "json":
        return _load_json_plan(data)
    if fmt == "dxf":
        return _load_dxf(data, layer_map)
    raise CadError(f"unsupported floor-plan format {fmt!r}")


def floorplan_to_json(doc: FloorPlanDoc) -> dict:
    return {
        "units": 1.0,
        "groups": [
            {
                "layer": g.layer,
                "label": g.label,
                "polylines": [{"points": [list(p) for p in pl.points], "closed": pl.closed} for pl in g.polylines],
            }
            for g in doc.groups
        ],
    }


# ---------------------------------------------------------------------------
# rooms
# ---------------------------------------------------------------------------


def normalize_room_type(label: str | None, type_map: Mapping[str, str] | None = None) -> str:
    if not label:
        return "space"
    key = re.sub(r"[\s_]+", "-", label.strip().lower())
    key = re.sub(r"[^a-z0-9-]", "", key)
    key = re.sub(r"-?\d+$", "", key) or "space"
    if type_map and key in type_map:
        return type_map[key]
    return ROOM_SYNONYMS.get(key, key)


def _camel(room_type: str) -> str:
    return "".join(part.capitalize() for part in room_type.split("-"))


def extract_rooms(doc: FloorPlanDoc, type_map: Mapping[str, str] | None = None) -> list[RoomSpec]:
    """Cleaned, canonically labelled rooms in document order."""
    counters: dict[str, int] = {}
    rooms = []
    for g in doc.groups:
        if g.layer != "Space":
            continue
        room_type = normalize_room_type(g.label, type_map)
        for pl in g.polylines:
            if not pl.closed:
                continue
            try:
                poly = geo.clean_polygon(pl.points)
            except geo.GeometryError as exc:
                raise CadError(f"degenerate Space polygon ({g.label or 'unlabelled'}): {exc}") from exc
            if not geo.is_simple(poly):
                raise CadError(f"self-intersecting Space polygon ({g.label or 'unlabelled'})")
            k = counters.get(room_type, 0)
            counters[room_type] = k + 1
            label = f"{room_type}_0/{k}"
            rooms.append(
                idsl.make_room(label, poly, tags=("Semantics(RoomContour)", f"Semantics({_camel(room_type)})"))
            )
    return rooms


# ---------------------------------------------------------------------------
# walls
# ---------------------------------------------------------------------------


def _collinear(e1, e2, tol) -> bool:
    p0, p1 = e1
    d = p1 - p0
    n = np.array([-d[1], d[0]]) / np.hypot(*d)
    return all(abs(float(np.dot(q - p0, n))) <= tol for q in e2)


def extract_walls(rooms: Sequence[RoomSpec], tol: float = geo.DEFAULT_SHARED_TOL) -> WallSet:
    """Deduplicated wall segments with the rooms each one bounds."""
    edges = []
    for r in rooms:
        for a, b in geo.polygon_edges(r.polygon):
            edges.append((r.room_id, a, b))

    # collinear groups (union-find over edge pairs)
    parent = list(range(len(edges)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(edges)):
        for j in range(i + 1, len(edges)):
            if find(i) != find(j) and _collinear(edges[i][1:], edges[j][1:], tol):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(edges)):
        groups.setdefault(find(i), []).append(i)

    walls: list[Wall] = []
    for idx in sorted(groups.values(), key=lambda g: g[0]):
        o = edges[idx[0]][1]
        d = edges[idx[0]][2] - o
        u = d / np.hypot(*d)
        spans = []
        breaks: list[tuple[float, np.ndarray]] = []
        for i in idx:
            label, a, b = edges[i]
            ta, tb = float(np.dot(a - o, u)), float(np.dot(b - o, u))
            spans.append((min(ta, tb), max(ta, tb), label))
            breaks += [(ta, a), (tb, b)]
        breaks.sort(key=lambda x: x[0])
        pts: list[tuple[float, np.ndarray]] = []
        for t, p in breaks:
            if not pts or t - pts[-1][0] > tol:
                pts.append((t, p))
        pieces: list[tuple[int, int, tuple[str, ...]]] = []
        for k in range(len(pts) - 1):
            mid = (pts[k][0] + pts[k + 1][0]) / 2
            owners = tuple(sorted({lab for lo, hi, lab in spans if lo - tol <= mid <= hi + tol}))
            if not owners:
                continue
            if pieces and pieces[-1][1] == k and pieces[-1][2] == owners:
                pieces[-1] = (pieces[-1][0], k + 1, owners)
            else:
                pieces.append((k, k + 1, owners))
        for k0, k1, owners in pieces:
            a, b = pts[k0][1], pts[k1][1]
            walls.append(Wall(Segment2D(tuple(map(float, a)), tuple(map(float, b))), owners))

    shared: list[tuple[str, str, Segment2D]] = []
    rels: dict[str, list[RoomRelation]] = {r.room_id: [] for r in rooms}
    for i, ra in enumerate(rooms):
        ba = ra.bounds
        for rb in rooms[i + 1 :]:
            bb = rb.bounds
            if ba[0] - tol > bb[2] or bb[0] - tol > ba[2] or ba[1] - tol > bb[3] or bb[1] - tol > ba[3]:
                continue
            for seg in geo.shared_edges(ra.polygon, rb.polygon, tol):
                shared.append((ra.room_id, rb.room_id, seg))
                rels[ra.room_id].append(RoomRelation("SharedEdge", rb.room_id, seg))
                rels[rb.room_id].append(RoomRelation("SharedEdge", ra.room_id, seg))
    new_rooms = []
    for r in rooms:
        keep = tuple(x for x in r.relations if x.relation_type != "SharedEdge")
        new_rooms.append(replace(r, relations=keep + tuple(rels[r.room_id])))
    return WallSet(walls, shared, new_rooms)


# ---------------------------------------------------------------------------
# openings
# ---------------------------------------------------------------------------


def attach_openings(
    doc: FloorPlanDoc,
    rooms: Sequence[RoomSpec],
    walls: WallSet,
    max_snap: float = DEFAULT_MAX_SNAP,
) -> list[OpeningRecord]:
    """Snap each Door/Window group to its nearest wall."""
    out = []
    segs = walls.segments
    if not segs:
        return out
    for g in doc.groups:
        if g.layer not in ("Door", "Window"):
            continue
        pts = g.points()
        if len(pts) == 0:
            continue
        lo, hi = pts.min(0), pts.max(0)
        centroid = (lo + hi) / 2
        i, q, dist = geo.snap_point_to_segments(centroid, segs)
        if dist > max_snap:
            msg = f"{g.layer.lower()} at ({centroid[0]:.3f}, {centroid[1]:.3f}) is {dist:.3f} m from any wall; dropped"
            log.warning(msg)
            doc.warnings.append(msg)
            continue
        wall = walls.walls[i]
        a = np.asarray(wall.segment.a)
        u = (np.asarray(wall.segment.b) - a) / wall.segment.length
        ts = (pts - a) @ u
        width = float(min(ts.max() - ts.min(), wall.segment.length))
        out.append(
            OpeningRecord(
                kind=g.layer.lower(),
                centroid=(float(centroid[0]), float(centroid[1])),
                host_wall=wall.segment,
                snapped_anchor=(float(q[0]), float(q[1])),
                width=width,
                adjacent_rooms=wall.rooms,
            )
        )
    return out


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def floor_outline(rooms: Sequence[RoomSpec], margin: float = DEFAULT_OUTLINE_MARGIN) -> list[list[float]]:
    x0, y0, x1, y1 = geo.rect_union(r.bounds for r in rooms)
    return geo.closed_ring([(x0 - margin, y0 - margin), (x1 + margin, y0 - margin), (x1 + margin, y1 + margin), (x0 - margin, y1 + margin)])


def derive_connectivity(
    rooms: Sequence[RoomSpec],
    shared: Iterable[tuple[str, str, Segment2D]],
    openings: Sequence[OpeningRecord],
    hint: Iterable[tuple[str, str]] = (),
) -> Connectivity:
    """Door adjacency when the plan has doors, else shared-edge adjacency.

    Doors on exterior walls link their room to an ``exterior_0/0`` node; the
    first such room becomes the entrance.
    """
    labels = [r.room_id for r in rooms]
    doors = [o for o in openings if o.kind == "door"]
    pairs: set[tuple[str, str]] = set()
    entrance_room = None
    if doors:
        for d in doors:
            if len(d.adjacent_rooms) == 2:
                pairs.add(tuple(sorted(d.adjacent_rooms)))
            elif len(d.adjacent_rooms) == 1:
                pairs.add((d.adjacent_rooms[0], "exterior_0/0"))
                entrance_room = entrance_room or d.adjacent_rooms[0]
    else:
        pairs = {tuple(sorted((a, b))) for a, b, _ in shared}
    pairs |= {tuple(sorted(p)) for p in hint}
    if any("exterior_0/0" in p for p in pairs):
        labels.append("exterior_0/0")
    index = {lab: i for i, lab in enumerate(labels)}
    nb: list[set[int]] = [set() for _ in labels]
    for a, b in pairs:
        if a in index and b in index and a != b:
            nb[index[a]].add(index[b])
            nb[index[b]].add(index[a])
    entrance = index[entrance_room] if entrance_room else None
    return Connectivity(tuple(labels), tuple(tuple(sorted(s)) for s in nb), entrance)


def opening_object(
    oid: str,
    rec: OpeningRecord,
    thickness: float = DEFAULT_WALL_THICKNESS,
    height: float | None = None,
    sill: float | None = None,
) -> idsl.ObjectSpec:
    h0, s0 = OPENING_DEFAULTS[rec.kind]
    h = h0 if height is None else height
    s = s0 if sill is None else sill
    a, b = np.asarray(rec.host_wall.a), np.asarray(rec.host_wall.b)
    d = b - a
    yaw = math.atan2(d[1], d[0])
    spec = idsl.OpeningSpec(
        kind=rec.kind,
        width=rec.width,
        height=h,
        sill_height=s,
        wall=(rec.host_wall.a, rec.host_wall.b),
        anchor=rec.snapped_anchor,
        rooms=rec.adjacent_rooms,
    )
    return idsl.make_object(
        oid,
        rec.kind,
        position=(rec.snapped_anchor[0], rec.snapped_anchor[1], s + h / 2),
        quaternion=quat_from_yaw(yaw),
        local_size=(rec.width, thickness, h),
        semantic_tags=(f"Semantics({rec.kind})", "Semantics(opening)"),
        active=False,
        opening=spec,
    )


def furniture_stubs(doc: FloorPlanDoc) -> list[idsl.ObjectSpec]:
    out = []
    counters: dict[str, int] = {}
    for g in doc.groups:
        if g.layer != "Furniture":
            continue
        pts = g.points()
        if len(pts) == 0:
            continue
        lo, hi = pts.min(0), pts.max(0)
        if np.any(hi - lo <= 0):
            continue
        cat = re.sub(r"[^a-z0-9_]", "", (g.label or "furniture").strip().lower().replace(" ", "_")) or "furniture"
        k = counters.get(cat, 0)
        counters[cat] = k + 1
        c = (lo + hi) / 2
        out.append(
            idsl.make_object(
                f"{cat}_{k}",
                cat,
                position=(c[0], c[1], FURNITURE_HEIGHT / 2),
                local_size=(hi[0] - lo[0], hi[1] - lo[1], FURNITURE_HEIGHT),
                semantic_tags=(f"Semantics({cat})", "Semantics(cad_symbol)"),
                active=False,
            )
        )
    return out


def to_idsl(
    rooms: Sequence[RoomSpec],
    walls: WallSet,
    openings: Sequence[OpeningRecord],
    connectivity_hint: Iterable[tuple[str, str]] = (),
    building_id: str = "building_0",
    furniture: Sequence[idsl.ObjectSpec] = (),
    outline_margin: float = DEFAULT_OUTLINE_MARGIN,
    wall_thickness: float = DEFAULT_WALL_THICKNESS,
) -> SceneState:
    """Assemble a validated scene from extracted plan parts."""
    if not rooms:
        raise CadError("floor plan contains no rooms")
    conn = derive_connectivity(rooms, walls.shared, openings, connectivity_hint)
    objects: dict[str, idsl.ObjectSpec] = {}
    counters = {"door": 0, "window": 0}
    for rec in openings:
        oid = f"{rec.kind}_{counters[rec.kind]}"
        counters[rec.kind] += 1
        objects[oid] = opening_object(oid, rec, wall_thickness)
    for obj in furniture:
        objects[obj.object_id] = obj
    building = idsl.BuildingSpec(
        building_id=building_id,
        floor_outline=tuple(tuple(p) for p in floor_outline(rooms, outline_margin)),
        scene_tags=("Semantics(building)",),
        room_entities=tuple(r.room_id for r in rooms),
        connectivity=conn,
    )
    state = SceneState(building, {r.room_id: r for r in rooms}, objects)
    errors = [i for i in idsl.validate(state) if i.severity == "error"]
    if errors:
        raise idsl.IDSLSchemaError(errors)
    return state


def parse_cad(
    data: bytes | str,
    fmt: str,
    layer_map: Mapping[str, str] | None = None,
    type_map: Mapping[str, str] | None = None,
    max_snap: float = DEFAULT_MAX_SNAP,
    building_id: str = "building_0",
) -> SceneState:
    """Full floor-plan import."""
    doc = load_floorplan(data, fmt, layer_map)
    rooms = extract_rooms(doc, type_map)
    walls = extract_walls(rooms)
    openings = attach_openings(doc, walls.rooms, walls, max_snap)
    return to_idsl(walls.rooms, walls, openings, building_id=building_id, furniture=furniture_stubs(doc))
