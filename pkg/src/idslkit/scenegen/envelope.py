"""Wall, opening and floor/ceiling geometry.

Walls are built as a 2.5D solid: the plan region swept by every room
boundary (thickness t, centred on the boundary) is extruded to the wall
height. Openings remove plan rectangles over a z-range. All linework is
noded into one planar arrangement, and each (cell, z-interval) block is
either solid or empty, so exposed faces always meet edge to edge and the
result is watertight by construction. Shared walls come out of the union
once, and T-junctions and L-shaped rooms are handled by the same noding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import shapely
from shapely.geometry import Point, Polygon
from shapely.geometry.polygon import orient

from .. import geometry as geo
from ..idsl import Connectivity, ObjectSpec, OpeningSpec, RoomSpec
from .mesh import Mesh, MeshBuilder, MeshError
from .presets import Preset, PresetError

log = logging.getLogger(__name__)

GRID = 1e-9  # coordinate snapping for the plan arrangement


@dataclass(frozen=True)
class WallParams:
    height: float = 2.8
    thickness: float = 0.1
    # safety margin added around openings: along the wall for fit and
    # overlap tests, across it so the cut clears both wall faces
    margin: float = 0.05
    cut_overshoot: float = 0.01
    # gaps between wall bands narrower than this fraction of t are reported
    sliver_ratio: float = 0.25

    def __post_init__(self):
        if self.height <= 0 or self.thickness <= 0:
            raise MeshError("wall height and thickness must be positive")
        if self.margin < 0 or self.cut_overshoot <= 0:
            raise MeshError("opening margins must be non-negative (overshoot positive)")


@dataclass(frozen=True)
class Cut:
    """One opening: a plan rectangle removed between z0 and z1."""

    key: str
    rect: Polygon
    z0: float
    z1: float
    axis: tuple[float, float]
    center: tuple[float, float]
    width: float


@dataclass(frozen=True)
class WallModel:
    """What a wall mesh was built from; carve_openings rebuilds from it."""

    region: object  # shapely Polygon | MultiPolygon
    rooms: tuple[Polygon, ...]
    labels: tuple[str, ...]
    params: WallParams
    cuts: tuple[Cut, ...] = ()


# ---------------------------------------------------------------------------
# plan preparation
# ---------------------------------------------------------------------------


def _room_polygon(p, label: str) -> Polygon:
    arr = geo.as_polygon(p.polygon if isinstance(p, RoomSpec) else p)
    if len(arr) and np.allclose(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(np.unique(np.round(arr, 12), axis=0)) < 3:
        raise MeshError(f"room {label}: polygon needs at least 3 distinct vertices")
    if not geo.is_simple(arr):
        raise MeshError(f"room {label}: polygon is self-intersecting")
    if geo.polygon_area(arr) <= 0:
        raise MeshError(f"room {label}: polygon has zero area")
    return orient(Polygon(arr), 1.0)


def _labels(polys: Sequence, graph) -> list[str]:
    if isinstance(graph, Connectivity):
        labels = list(graph.rooms)
    elif graph is not None:
        labels = [str(x) for x in graph]
    elif all(isinstance(p, RoomSpec) for p in polys):
        labels = [p.room_id for p in polys]
    else:
        labels = [f"room_{i}" for i in range(len(polys))]
    if len(labels) != len(polys):
        raise MeshError(f"{len(labels)} room labels for {len(polys)} polygons")
    if len(set(labels)) != len(labels):
        raise MeshError("room labels must be unique")
    return labels


def _snap(g):
    return shapely.set_precision(g, GRID)


def wall_region(rooms: Sequence[Polygon], params: WallParams):
    """Union of the boundary bands; raises when a junction leaves a sliver."""
    half = params.thickness / 2
    bands = [r.exterior.buffer(half, cap_style="flat", join_style="mitre", mitre_limit=10.0) for r in rooms]
    region = _snap(shapely.unary_union(bands))
    if region.is_empty or not region.is_valid:
        raise MeshError("wall region could not be formed")
    # a closing by a fraction of t fills slots and pinholes that the union
    # left between nearly touching bands; anything it fills is a sliver
    s = params.sliver_ratio * params.thickness
    closed = region.buffer(s, join_style="mitre", mitre_limit=10.0).buffer(-s, join_style="mitre", mitre_limit=10.0)
    gap = closed.difference(region)
    if gap.area > 1e-9:
        c = gap.representative_point()
        raise MeshError(f"unresolved wall junction near ({c.x:.4f}, {c.y:.4f}): sliver gap of {gap.area:.3g} m^2")
    return region


# ---------------------------------------------------------------------------
# arrangement + extrusion
# ---------------------------------------------------------------------------


def _cells(region, cuts: Sequence[Cut]) -> list[Polygon]:
    lines = [region.boundary] + [c.rect.boundary for c in cuts]
    noded = shapely.unary_union([_snap(l) for l in lines])
    cells = []
    for poly in shapely.polygonize(list(getattr(noded, "geoms", [noded]))).geoms:
        if poly.area <= 0:
            continue
        if region.contains(poly.representative_point()):
            cells.append(orient(poly, 1.0))
    cells.sort(key=lambda p: (round(p.bounds[0], 9), round(p.bounds[1], 9), round(p.area, 12)))
    return cells


def _ring_edges(poly: Polygon):
    """Directed boundary edges with the cell on the left."""
    for ring in [poly.exterior, *poly.interiors]:
        pts = list(ring.coords)[:-1]
        for i in range(len(pts)):
            yield pts[i], pts[(i + 1) % len(pts)]


def _triangles(poly: Polygon) -> list[tuple[tuple, tuple, tuple]]:
    out = []
    for t in shapely.constrained_delaunay_triangles(poly).geoms:
        a, b, c = list(t.exterior.coords)[:3]
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) < 0:
            b, c = c, b
        out.append((a, b, c))
    return out


class _Classifier:
    """Names what lies on the far side of an exposed wall face."""

    def __init__(self, model: WallModel):
        self.m = model
        self.probe = min(1e-4, model.params.thickness / 10)

    def room_at(self, x: float, y: float) -> str | None:
        p = Point(x, y)
        for poly, label in zip(self.m.rooms, self.m.labels):
            if poly.contains(p):
                return label
        return None

    def cut_at(self, x: float, y: float, z: float) -> Cut | None:
        p = Point(x, y)
        for c in self.m.cuts:
            if c.z0 < z < c.z1 and c.rect.contains(p):
                return c
        return None

    def side(self, mid, normal, z: float) -> str:
        x, y = mid[0] + normal[0] * self.probe, mid[1] + normal[1] * self.probe
        cut = self.cut_at(x, y, z)
        if cut is not None:
            return f"opening:{cut.key}"
        facing = self.room_at(x, y) or "exterior"
        depth = self.m.params.thickness + 2 * self.probe
        behind = self.nearest_room(mid[0] - normal[0] * depth, mid[1] - normal[1] * depth, exclude=facing)
        return f"wall:{facing}|{behind}"

    def nearest_room(self, x: float, y: float, exclude: str) -> str:
        """Room under the point, else the closest one within a wall thickness
        (the end of a wall seen from outside), else exterior."""
        p = Point(x, y)
        best, best_d = "exterior", self.m.params.thickness
        for poly, label in zip(self.m.rooms, self.m.labels):
            d = poly.distance(p)
            if d == 0.0:
                return label
            if label != exclude and d < best_d - 1e-12:
                best, best_d = label, d
        return best

    def level(self, cell: Polygon, z: float) -> str:
        p = cell.representative_point()
        if z == 0.0:
            return "wall:bottom"
        if z == self.m.params.height:
            return "wall:top"
        for c in self.m.cuts:
            if (c.z0 == z or c.z1 == z) and c.rect.contains(p):
                return f"opening:{c.key}"
        for c in self.m.cuts:
            if (c.z0 == z or c.z1 == z) and c.rect.buffer(self.probe).contains(p):
                return f"opening:{c.key}"
        return "wall:ledge"


def build_wall_mesh(model: WallModel) -> Mesh:
    h = model.params.height
    levels = sorted({0.0, h} | {z for c in model.cuts for z in (c.z0, c.z1) if 0.0 < z < h})
    mids = [(a + b) / 2 for a, b in zip(levels, levels[1:])]
    cells = _cells(model.region, model.cuts)
    clf = _Classifier(model)

    solid = []
    for cell in cells:
        p = cell.representative_point()
        solid.append([not any(c.z0 < z < c.z1 and c.rect.contains(p) for c in model.cuts) for z in mids])

    owner: dict[frozenset, list[int]] = {}
    for ci, cell in enumerate(cells):
        for u, v in _ring_edges(cell):
            owner.setdefault(frozenset((u, v)), []).append(ci)

    mb = MeshBuilder()
    nk = len(mids)
    for ci, cell in enumerate(cells):
        col = solid[ci]
        tris = None
        for m, z in enumerate(levels):
            below = col[m - 1] if m > 0 else False
            above = col[m] if m < nk else False
            if below == above:
                continue
            if tris is None:
                tris = _triangles(cell)
            tag = clf.level(cell, z)
            for a, b, c in tris:
                ia, ib, ic = mb.vertex(*a, z), mb.vertex(*b, z), mb.vertex(*c, z)
                if below:  # top face, normal +z
                    mb.triangle(ia, ib, ic, tag)
                else:
                    mb.triangle(ia, ic, ib, tag)
        for u, v in _ring_edges(cell):
            others = [o for o in owner[frozenset((u, v))] if o != ci]
            if len(others) > 1:
                raise MeshError(f"non-manifold plan edge at ({u[0]:.4f}, {u[1]:.4f})")
            nb = solid[others[0]] if others else [False] * nk
            dx, dy = v[0] - u[0], v[1] - u[1]
            L = math.hypot(dx, dy)
            normal = (dy / L, -dx / L)  # right of u->v, away from the cell
            mid = ((u[0] + v[0]) / 2, (u[1] + v[1]) / 2)
            for k in range(nk):
                if col[k] and not nb[k]:
                    z0, z1 = levels[k], levels[k + 1]
                    tag = clf.side(mid, normal, mids[k])
                    mb.quad(mb.vertex(*u, z0), mb.vertex(*v, z0), mb.vertex(*v, z1), mb.vertex(*u, z1), tag)
    mesh = mb.build({"envelope": model, "kind": "walls"})
    mesh.check()
    return mesh


def generate_walls(polys: Sequence, graph=None, params: WallParams | Mapping | None = None) -> Mesh:
    """Watertight wall solid for a set of room polygons.

    ``graph`` supplies the room labels (a Connectivity record or a list);
    RoomSpec inputs carry their own. Side faces are tagged
    ``wall:<room faced>|<room or exterior behind>``, so a shared wall shows
    both labels; caps are ``wall:top`` / ``wall:bottom``.
    """
    if isinstance(params, Mapping):
        params = WallParams(**params)
    params = params or WallParams()
    if not polys:
        raise MeshError("no room polygons")
    labels = _labels(polys, graph)
    rooms = tuple(_room_polygon(p, lab) for p, lab in zip(polys, labels))
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            if rooms[i].intersection(rooms[j]).area > 1e-9:
                raise MeshError(f"rooms {labels[i]} and {labels[j]} overlap")
    model = WallModel(wall_region(rooms, params), rooms, tuple(labels), params)
    return build_wall_mesh(model)


# ---------------------------------------------------------------------------
# openings
# ---------------------------------------------------------------------------


def _opening_items(openings) -> list[tuple[str, OpeningSpec]]:
    items = []
    counts: dict[str, int] = {}
    for o in openings:
        if isinstance(o, ObjectSpec):
            if o.opening is None:
                raise MeshError(f"object {o.object_id} carries no opening record")
            items.append((o.object_id, o.opening))
            continue
        if not isinstance(o, OpeningSpec):
            raise MeshError(f"unsupported opening input {type(o).__name__}")
        k = counts.get(o.kind, 0)
        counts[o.kind] = k + 1
        items.append((f"{o.kind}_{k}", o))
    return items


def _cut_for(key: str, spec: OpeningSpec, params: WallParams, extra: float = 0.0) -> Cut:
    a, b = np.asarray(spec.wall[0], float), np.asarray(spec.wall[1], float)
    d = b - a
    L = float(np.hypot(*d))
    if L <= 0:
        raise MeshError(f"opening {key}: host wall has zero length")
    u = d / L
    n = np.array([-u[1], u[0]])
    c = np.asarray(spec.anchor, float)
    hw = spec.width / 2 + extra
    hd = params.thickness / 2 + params.cut_overshoot
    corners = [c - u * hw - n * hd, c + u * hw - n * hd, c + u * hw + n * hd, c - u * hw + n * hd]
    rect = _snap(orient(Polygon(corners), 1.0))
    z0, z1 = round(float(spec.sill_height), 9), round(float(spec.sill_height + spec.height), 9)
    return Cut(key, rect, z0, z1, (float(u[0]), float(u[1])), (float(c[0]), float(c[1])), float(spec.width))


def _wall_key(cut: Cut) -> tuple:
    """Opening order along a shared wall: wall line first, then position."""
    ux, uy = cut.axis
    if ux < 0 or (ux == 0 and uy < 0):
        ux, uy = -ux, -uy
    offset = -uy * cut.center[0] + ux * cut.center[1]
    along = ux * cut.center[0] + uy * cut.center[1]
    return (round(math.atan2(uy, ux), 9), round(offset, 6), along)


def carve_openings(mesh: Mesh, openings: Sequence) -> Mesh:
    """Cut rectangular apertures through the full wall thickness.

    ``openings`` are OpeningSpec records or inactive door/window objects
    carrying one. The host wall must be under the anchor, the aperture plus
    its margin must fit the wall face, and apertures may not overlap.
    """
    if not openings:
        return mesh
    model = mesh.attrs.get("envelope")
    if not isinstance(model, WallModel):
        raise MeshError("mesh was not produced by generate_walls")
    p = model.params
    t = p.thickness
    cuts = []
    for key, spec in _opening_items(openings):
        if spec.width <= 0 or spec.height <= 0 or spec.sill_height < 0:
            raise MeshError(f"opening {key}: width and height must be positive, sill non-negative")
        if not model.region.buffer(1e-6).contains(Point(spec.anchor)):
            raise MeshError(f"opening {key}: no wall at anchor {tuple(spec.anchor)}")
        if spec.sill_height + spec.height > p.height - p.margin + 1e-12:
            raise MeshError(f"opening {key}: top at {spec.sill_height + spec.height:.3f} m exceeds wall height {p.height} minus margin {p.margin}")
        cut = _cut_for(key, spec, p)
        # the padded aperture must see exactly one straight wall of thickness t
        padded = _cut_for(key, spec, p, extra=p.margin)
        expect = (spec.width + 2 * p.margin) * t
        got = padded.rect.intersection(model.region).area
        if got < expect * (1 - 1e-6):
            raise MeshError(f"opening {key}: width {spec.width} plus margin exceeds the wall extents at {tuple(spec.anchor)}")
        if got > expect * (1 + 1e-6):
            raise MeshError(f"opening {key}: aperture crosses a wall junction at {tuple(spec.anchor)}")
        cuts.append((cut, padded))
    cuts.sort(key=lambda cp: _wall_key(cp[0]))
    existing = [(c, c) for c in model.cuts]
    everything = existing + cuts
    for i in range(len(everything)):
        for j in range(i + 1, len(everything)):
            (ci, pi), (cj, pj) = everything[i], everything[j]
            z_overlap = min(ci.z1, cj.z1) - max(ci.z0, cj.z0) > -p.margin
            if z_overlap and pi.rect.intersection(pj.rect).area > 1e-12:
                raise MeshError(f"openings {ci.key} and {cj.key} overlap on their wall")
    keys = [c.key for c, _ in everything]
    if len(set(keys)) != len(keys):
        raise MeshError("opening ids must be unique")
    new = replace(model, cuts=tuple(c for c, _ in everything))
    return build_wall_mesh(new)


# ---------------------------------------------------------------------------
# floors and ceilings
# ---------------------------------------------------------------------------

SURFACE_KEYS = ("floor", "ceiling")


def _surface(poly: Polygon, z: float, up: bool, tag: str, attrs: dict) -> Mesh:
    mb = MeshBuilder()
    for a, b, c in _triangles(poly):
        ia, ib, ic = mb.vertex(*a, z), mb.vertex(*b, z), mb.vertex(*c, z)
        if up:
            mb.triangle(ia, ib, ic, tag)
        else:
            mb.triangle(ia, ic, ib, tag)
    mesh = mb.build(attrs)
    mesh.check()
    return mesh


def generate_floor_ceiling(poly, presets: Mapping[str, Preset] | None = None, height: float = 2.8, label: str = "room") -> tuple[Mesh, Mesh]:
    """Planar floor (z=0, facing up) and ceiling (z=height, facing down).

    ``presets`` maps "floor"/"ceiling" to presets; their names become the
    face tags and their tiling parameters the mesh's ``uv`` attribute.
    """
    presets = dict(presets or {})
    for key in presets:
        if key not in SURFACE_KEYS:
            raise PresetError(f"invalid preset key {key!r}; expected one of {', '.join(SURFACE_KEYS)}")
    for key, pr in presets.items():
        if pr.category != key:
            raise PresetError(f"preset key {key!r} given a {pr.category} preset ({pr.name})")
    if height <= 0:
        raise MeshError("ceiling height must be positive")
    try:
        shape = _room_polygon(poly, label)
    except MeshError as exc:
        raise MeshError(f"cannot triangulate: {exc}") from None
    out = []
    for key, z, up in (("floor", 0.0, True), ("ceiling", float(height), False)):
        pr = presets.get(key)
        name = pr.name if pr else "default"
        attrs = {"kind": key, "room": label, "preset": name, "uv": pr.uv() if pr else {}}
        out.append(_surface(shape, z, up, f"{key}:{label}:{name}", attrs))
    return out[0], out[1]
