"""Rule compilation and dual-channel scene energy.

Every rule instance becomes a :class:`Factor`: a nonnegative hinge on one
geometric quantity, scoped to a few entities.  Rooms never move, so a factor's
room-dependent data is resolved once at compile time and stored in its
``params``; evaluating a factor then only reads the objects in its scope.

Factor kinds, channels and stage levels::

    collision       structural 1   footprint overlap area of two objects
    out_of_room     structural 1   footprint area outside the host room
    stable_against  structural 1   child face to parent face distance
    on_top_of       structural 1   vertical gap + lateral escape from support
    clearance       structural 2   footprint area inside a door access strip
    near            semantic   2   centre distance beyond d_max
    facing          semantic   2   heading error beyond theta_max
    adjacent_to     semantic   2   footprint gap beyond the adjacency gap
    grouping        semantic   2   mean spread of a Group(...) beyond a radius
    aligned_with    semantic   3   heading difference modulo pi/2
    style           semantic   3   1 - psi(object style, room style)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import defaults as D
from . import geometry as geo
from .idsl import ObjectSpec, PlaneRef, SceneState, room_planes, DEFAULT_ROOM_HEIGHT
from .styles import psi

log = logging.getLogger(__name__)

STRUCTURAL = "structural"
SEMANTIC = "semantic"

KINDS = {
    "collision": (STRUCTURAL, 1),
    "out_of_room": (STRUCTURAL, 1),
    "stable_against": (STRUCTURAL, 1),
    "on_top_of": (STRUCTURAL, 1),
    "clearance": (STRUCTURAL, 2),
    "near": (SEMANTIC, 2),
    "facing": (SEMANTIC, 2),
    "adjacent_to": (SEMANTIC, 2),
    "grouping": (SEMANTIC, 2),
    "aligned_with": (SEMANTIC, 3),
    "style": (SEMANTIC, 3),
}

# satisfaction tolerance per kind (same unit as the factor value)
DEFAULT_EPS = {
    "collision": D.OVERLAP_TOL,
    "out_of_room": D.OVERLAP_TOL,
    "clearance": D.OVERLAP_TOL,
    "stable_against": D.GEOM_EPS,
    "on_top_of": D.GEOM_EPS,
    "near": D.GEOM_EPS,
    "facing": D.GEOM_EPS,
    "adjacent_to": D.GEOM_EPS,
    "grouping": D.GEOM_EPS,
    "aligned_with": D.GEOM_EPS,
    "style": D.GEOM_EPS,
}

RELATION_KIND = {
    "StableAgainst": "stable_against",
    "OnTopOf": "on_top_of",
    "Near": "near",
    "Facing": "facing",
    "AdjacentTo": "adjacent_to",
    "AlignedWith": "aligned_with",
}


class CompileError(ValueError):
    """A rule cannot be turned into a factor (missing target, bad plane index)."""


@dataclass
class EnergyConfig:
    weights: dict = field(default_factory=dict)
    eps: dict = field(default_factory=dict)
    d_max: float = D.D_MAX
    theta_max: float = D.THETA_MAX
    adjacent_gap: float = D.ADJACENT_GAP
    group_radius: float = D.GROUP_RADIUS
    clearance_depth: float = D.CLEARANCE_DEPTH
    room_height: float = DEFAULT_ROOM_HEIGHT

    def weight(self, kind: str) -> float:
        return float(self.weights.get(kind, 1.0))

    def tolerance(self, kind: str) -> float:
        return float(self.eps.get(kind, DEFAULT_EPS[kind]))

    @classmethod
    def from_json(cls, data: bytes | str | Mapping) -> "EnergyConfig":
        raw = json.loads(data) if isinstance(data, (bytes, str)) else dict(data)
        unknown = set(raw.get("weights", {})) | set(raw.get("eps", {}))
        unknown -= set(KINDS)
        if unknown:
            raise ValueError(f"unknown factor kinds in config: {sorted(unknown)}")
        return cls(**raw)


@dataclass(eq=False)
class Factor:
    id: str
    kind: str
    channel: str
    level: int
    scope: tuple[str, ...]
    weight: float
    eps: float
    params: dict = field(default_factory=dict)

    def raw(self, objects: Mapping[str, ObjectSpec]) -> float:
        return _EVAL[self.kind](self, objects)

    def value(self, objects: Mapping[str, ObjectSpec]) -> float:
        return self.weight * self.raw(objects)


@dataclass
class EnergyBreakdown:
    E_struct: float
    E_sem: float
    E_total: float
    per_factor: dict[str, float]
    alpha_struct: float
    alpha_sem: float


@dataclass(frozen=True)
class Delta:
    d_struct: float
    d_sem: float
    d_total: float


# ---------------------------------------------------------------------------
# scene helpers shared with the metrics module
# ---------------------------------------------------------------------------


def movable_objects(state: SceneState) -> list[str]:
    return [oid for oid, o in state.objects.items() if o.active]


def assign_hosts(state: SceneState) -> dict[str, str | None]:
    """Host room per object: the first relation targeting a room, else the
    room containing the object's centre, else the nearest room."""
    hosts: dict[str, str | None] = {}
    for oid, o in state.objects.items():
        host = None
        for rel in o.relation_graph:
            if rel.target_name in state.rooms:
                host = rel.target_name
                break
        if host is None and o.opening is not None and o.opening.rooms:
            host = o.opening.rooms[0]
        if host is None and state.rooms:
            c = o.world_center[:2]
            inside = [lab for lab, r in state.rooms.items() if geo.point_in_polygon(c, r.polygon, 1e-9)]
            if inside:
                host = inside[0]
            else:
                host = min(state.rooms, key=lambda lab: geo.distance_to_boundary(c, state.rooms[lab].polygon))
        hosts[oid] = host
    # objects resting on another object share its room
    for oid, o in state.objects.items():
        for rel in o.relation_graph:
            if rel.relation_type == "OnTopOf" and rel.target_name in state.objects:
                if not any(r.target_name in state.rooms for r in o.relation_graph):
                    hosts[oid] = hosts.get(rel.target_name, hosts[oid])
    return hosts


def support_links(state: SceneState) -> set[frozenset]:
    links = set()
    for oid, o in state.objects.items():
        for rel in o.relation_graph:
            if rel.relation_type == "OnTopOf" and rel.target_name in state.objects:
                links.add(frozenset((oid, rel.target_name)))
    return links


def collision_pairs(state: SceneState, hosts: Mapping[str, str | None] | None = None) -> list[tuple[str, str]]:
    """Unordered pairs of active objects in the same room, excluding pairs
    linked by an OnTopOf relation (a support contact is not a collision)."""
    hosts = assign_hosts(state) if hosts is None else hosts
    links = support_links(state)
    ids = sorted(movable_objects(state))
    out = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if hosts.get(a) is None or hosts.get(a) != hosts.get(b):
                continue
            if frozenset((a, b)) in links:
                continue
            out.append((a, b))
    return out


def door_strip(obj: ObjectSpec, room_poly, depth: float) -> np.ndarray | None:
    """Access rectangle in front of a door on the side of ``room_poly``."""
    op = obj.opening
    a = np.asarray(op.wall[0], dtype=float)
    b = np.asarray(op.wall[1], dtype=float)
    u = (b - a) / np.hypot(*(b - a))
    n = np.array([-u[1], u[0]])
    anchor = np.asarray(op.anchor, dtype=float)
    probe = anchor + 0.01 * n
    if not geo.point_in_polygon(probe, room_poly):
        n = -n
    hw = op.width / 2
    p0 = anchor - hw * u
    p1 = anchor + hw * u
    return np.array([p0, p1, p1 + depth * n, p0 + depth * n])


def heading_error(obj: ObjectSpec, target_xy) -> float:
    f = obj.forward[:2]
    d = np.asarray(target_xy, dtype=float) - obj.world_center[:2]
    nf, nd = float(np.hypot(*f)), float(np.hypot(*d))
    if nf < 1e-12 or nd < 1e-12:
        return math.pi
    c = float(np.dot(f, d)) / (nf * nd)
    return math.acos(max(-1.0, min(1.0, c)))


def yaw_misalignment(ya: float, yb: float) -> float:
    q = math.pi / 2
    d = (ya - yb) % q
    return min(d, q - d)


def object_yaw(obj: ObjectSpec) -> float:
    f = obj.forward
    return math.atan2(-f[0], f[1])


def rect_gap(a: geo.Rect2D, b: geo.Rect2D) -> float:
    dx = max(0.0, max(a[0], b[0]) - min(a[2], b[2]))
    dy = max(0.0, max(a[1], b[1]) - min(a[3], b[3]))
    return math.hypot(dx, dy)


def point_rect_distance(p, r: geo.Rect2D) -> float:
    dx = max(r[0] - p[0], 0.0, p[0] - r[2])
    dy = max(r[1] - p[1], 0.0, p[1] - r[3])
    return math.hypot(dx, dy)


def dominant_yaw(poly) -> float:
    """Yaw whose forward axis is perpendicular to the longest edge."""
    best, best_l = (np.zeros(2), np.array([1.0, 0.0])), -1.0
    for a, b in geo.polygon_edges(poly):
        L = float(np.hypot(*(b - a)))
        if L > best_l:
            best, best_l = (a, b), L
    d = best[1] - best[0]
    return math.atan2(d[1], d[0])


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------


def _collision(f: Factor, objs) -> float:
    a, b = f.scope
    return geo.rect_overlap_area(objs[a].footprint, objs[b].footprint)


def _out_of_room(f: Factor, objs) -> float:
    return geo.rect_outside_polygon_area(objs[f.scope[0]].footprint, f.params["polygon"])


def _plane_gap(child: PlaneRef, parent: PlaneRef, margin: float, rev: bool) -> float:
    n = -parent.normal if rev else parent.normal
    s = float(np.dot(child.point - parent.point, n))
    lateral = abs(float(np.dot(child.point - parent.point, parent.u))) - parent.half_extents[0]
    return max(0.0, s - margin) + max(0.0, -s) + max(0.0, lateral)


def stable_against_terms(f: Factor, objs) -> tuple[float, float]:
    """(plane term, vertical-overlap term) of a stable_against factor."""
    p = f.params
    child = objs[f.scope[0]]
    cplane = child.planes[p["child_idx"]]
    if "room_plane" in p:
        pplane = p["room_plane"]
        zlo, zhi = p["z_range"]
    else:
        parent = objs[p["parent_id"]]
        pplane = parent.planes[p["parent_idx"]]
        lo, hi = parent.world_bounds
        zlo, zhi = float(lo[2]), float(hi[2])
    plane = _plane_gap(cplane, pplane, p["margin"], p["rev_normal"])
    zgap = 0.0
    if p["check_z"]:
        lo, hi = child.world_bounds
        zgap = max(0.0, zlo - float(hi[2]), float(lo[2]) - zhi)
    return plane, zgap


def _stable_against(f: Factor, objs) -> float:
    plane, zgap = stable_against_terms(f, objs)
    return plane + zgap


def on_top_of_terms(f: Factor, objs) -> tuple[float, float]:
    """(vertical gap, lateral escape) of an on_top_of factor."""
    child = objs[f.scope[0]]
    lo, _ = child.world_bounds
    if "parent_id" in f.params:
        parent = objs[f.params["parent_id"]]
        top = float(parent.world_bounds[1][2])
        lateral = point_rect_distance(child.world_center[:2], parent.footprint)
    else:
        top = 0.0
        lateral = 0.0
    return abs(float(lo[2]) - top), lateral


def _on_top_of(f: Factor, objs) -> float:
    gap, lateral = on_top_of_terms(f, objs)
    return gap + lateral


def _clearance(f: Factor, objs) -> float:
    return geo.polygon_rect_intersection_area(f.params["strip"], objs[f.scope[0]].footprint)


def _target_point(f: Factor, objs):
    if "target_id" in f.params:
        return objs[f.params["target_id"]].world_center[:2]
    return f.params["target_point"]


def _near(f: Factor, objs) -> float:
    a = objs[f.scope[0]].world_center[:2]
    if "target_id" in f.params:
        d = float(np.hypot(*(a - objs[f.params["target_id"]].world_center[:2])))
    else:
        poly = f.params["polygon"]
        d = 0.0 if geo.point_in_polygon(a, poly) else geo.distance_to_boundary(a, poly)
    return max(0.0, d - f.params["d_max"])


def _facing(f: Factor, objs) -> float:
    err = heading_error(objs[f.scope[0]], _target_point(f, objs))
    return max(0.0, err - f.params["theta_max"])


def _adjacent_to(f: Factor, objs) -> float:
    a = objs[f.scope[0]]
    if "target_id" in f.params:
        gap = rect_gap(a.footprint, objs[f.params["target_id"]].footprint)
    else:
        c = a.world_center[:2]
        poly = f.params["polygon"]
        gap = 0.0 if geo.point_in_polygon(c, poly) else geo.distance_to_boundary(c, poly)
    return max(0.0, gap - f.params["gap"])


def _grouping(f: Factor, objs) -> float:
    pts = np.array([objs[i].world_center[:2] for i in f.scope])
    c = pts.mean(axis=0)
    spread = float(np.mean(np.hypot(*(pts - c).T)))
    return max(0.0, spread - f.params["radius"])


def _aligned_with(f: Factor, objs) -> float:
    ya = object_yaw(objs[f.scope[0]])
    yb = object_yaw(objs[f.params["target_id"]]) if "target_id" in f.params else f.params["target_yaw"]
    return yaw_misalignment(ya, yb)


def _style(f: Factor, objs) -> float:
    return f.params["value"]


_EVAL = {
    "collision": _collision,
    "out_of_room": _out_of_room,
    "stable_against": _stable_against,
    "on_top_of": _on_top_of,
    "clearance": _clearance,
    "near": _near,
    "facing": _facing,
    "adjacent_to": _adjacent_to,
    "grouping": _grouping,
    "aligned_with": _aligned_with,
    "style": _style,
}


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------


def _make(kind: str, fid: str, scope: Sequence[str], cfg: EnergyConfig, weight: float = 1.0, **params) -> Factor:
    channel, level = KINDS[kind]
    return Factor(fid, kind, channel, level, tuple(scope), cfg.weight(kind) * weight, cfg.tolerance(kind), params)


def compile_factors(state: SceneState, config: EnergyConfig | None = None) -> list[Factor]:
    """Atomize the scene's rules into factors (deterministic order)."""
    cfg = config or EnergyConfig()
    hosts = assign_hosts(state)
    objs = state.objects
    movable = sorted(movable_objects(state))
    factors: list[Factor] = []

    for a, b in collision_pairs(state, hosts):
        factors.append(_make("collision", f"collision:{a}|{b}", (a, b), cfg))

    for oid in movable:
        host = hosts[oid]
        if host is not None:
            factors.append(_make("out_of_room", f"out_of_room:{oid}", (oid,), cfg, polygon=state.rooms[host].polygon))

    plane_cache: dict[str, list[PlaneRef]] = {}
    for oid in movable:
        o = objs[oid]
        for k, rel in enumerate(o.relation_graph):
            kind = RELATION_KIND.get(rel.relation_type)
            if kind is None:
                continue  # SharedEdge is a room-level fact
            tgt = rel.target_name
            if not state.entity_exists(tgt):
                raise CompileError(f"{oid}: relation {k} targets missing entity {tgt!r}")
            is_room = tgt in state.rooms
            if not is_room and not objs[tgt].active:
                log.debug("%s: relation %d targets inactive %s; skipped", oid, k, tgt)
                continue
            fid = f"{kind}:{oid}:{k}"
            scope = (oid,) if is_room else (oid, tgt)
            w = rel.weight
            if kind == "stable_against":
                if not 0 <= rel.child_plane_idx < 6:
                    raise CompileError(f"{oid}: child plane index {rel.child_plane_idx} out of range")
                params = dict(
                    child_idx=rel.child_plane_idx,
                    margin=rel.margin,
                    check_z=rel.check_z,
                    rev_normal=rel.rev_normal,
                )
                if is_room:
                    planes = plane_cache.setdefault(tgt, room_planes(state.rooms[tgt], cfg.room_height))
                    if not 0 <= rel.parent_plane_idx < len(planes):
                        raise CompileError(f"{oid}: parent plane index {rel.parent_plane_idx} out of range for {tgt}")
                    params.update(room_plane=planes[rel.parent_plane_idx], z_range=(0.0, cfg.room_height))
                else:
                    if not 0 <= rel.parent_plane_idx < 6:
                        raise CompileError(f"{oid}: parent plane index {rel.parent_plane_idx} out of range")
                    params.update(parent_id=tgt, parent_idx=rel.parent_plane_idx)
                factors.append(_make(kind, fid, scope, cfg, w, **params))
            elif kind == "on_top_of":
                params = {} if is_room else {"parent_id": tgt}
                factors.append(_make(kind, fid, scope, cfg, w, **params))
            elif kind in ("near", "facing", "adjacent_to", "aligned_with"):
                params = {}
                if is_room:
                    poly = state.rooms[tgt].polygon
                    params.update(polygon=poly, target_point=geo.polygon_centroid(poly), target_yaw=dominant_yaw(poly))
                else:
                    params["target_id"] = tgt
                params["d_max"] = float(rel.params.get("d_max", cfg.d_max))
                params["theta_max"] = float(rel.params.get("theta_max", cfg.theta_max))
                params["gap"] = float(rel.params.get("gap", cfg.adjacent_gap))
                if kind == "adjacent_to" and is_room and hosts[oid] == tgt:
                    # membership of the host room is already enforced by out_of_room
                    continue
                factors.append(_make(kind, fid, scope, cfg, w, **params))

    # door access strips
    for did, d in sorted(objs.items()):
        if d.opening is None or d.opening.kind != "door":
            continue
        for room in d.opening.rooms:
            if room not in state.rooms:
                continue
            strip = door_strip(d, state.rooms[room].polygon, cfg.clearance_depth)
            for oid in movable:
                if hosts[oid] == room:
                    factors.append(_make("clearance", f"clearance:{did}@{room}|{oid}", (oid,), cfg, strip=strip))

    # Group(...) tags within one room
    groups: dict[tuple[str, str | None], list[str]] = {}
    for oid in movable:
        for g in objs[oid].groups:
            groups.setdefault((g, hosts[oid]), []).append(oid)
    for (g, room), members in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or "")):
        if len(members) >= 2:
            factors.append(_make("grouping", f"grouping:{g}@{room}", members, cfg, radius=cfg.group_radius))

    for oid in movable:
        host = hosts[oid]
        s_obj = objs[oid].style
        s_room = state.rooms[host].style if host else None
        if s_obj and s_room:
            factors.append(_make("style", f"style:{oid}", (oid,), cfg, value=1.0 - psi(s_obj, s_room)))
    return factors


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


def _is_active(f: Factor, active) -> bool:
    return active is None or f.level in active


def total_energy(
    state: SceneState,
    active: Iterable[int] | None = None,
    alpha_struct: float = 1.0,
    alpha_sem: float = 1.0,
    factors: Sequence[Factor] | None = None,
) -> EnergyBreakdown:
    """Weighted factor sums over the active stage levels (all when ``None``)."""
    factors = compile_factors(state) if factors is None else factors
    active = None if active is None else set(active)
    per = {}
    es = em = 0.0
    for f in factors:
        if not _is_active(f, active):
            continue
        v = f.value(state.objects)
        per[f.id] = v
        if f.channel == STRUCTURAL:
            es += v
        else:
            em += v
    return EnergyBreakdown(es, em, alpha_struct * es + alpha_sem * em, per, alpha_struct, alpha_sem)


class FactorIndex:
    """Factors plus an entity -> factor-position index."""

    def __init__(self, factors: Sequence[Factor]):
        self.factors = list(factors)
        self.by_entity: dict[str, list[int]] = {}
        for i, f in enumerate(self.factors):
            for e in f.scope:
                self.by_entity.setdefault(e, []).append(i)

    def touching(self, ids: Iterable[str]) -> list[int]:
        out: set[int] = set()
        for e in ids:
            out.update(self.by_entity.get(e, ()))
        return sorted(out)

    def neighbours(self, ids: Iterable[str]) -> set[str]:
        """Entities sharing at least one factor with ``ids``."""
        out: set[str] = set()
        for i in self.touching(ids):
            out.update(self.factors[i].scope)
        return out - set(ids)


def delta_energy(
    state: SceneState,
    new_state: SceneState,
    modified: Iterable[str],
    active: Iterable[int] | None = None,
    alpha_struct: float = 1.0,
    alpha_sem: float = 1.0,
    factors: Sequence[Factor] | FactorIndex | None = None,
) -> Delta:
    """Energy change from re-evaluating only the factors around ``modified``.

    A factor's value depends only on the objects in its scope, so factors
    that touch no modified object are unchanged and the result equals the
    full recomputation.
    """
    index = factors if isinstance(factors, FactorIndex) else FactorIndex(compile_factors(state) if factors is None else factors)
    modified = set(modified)
    active = None if active is None else set(active)
    ds = dm = 0.0
    for i in index.touching(modified):
        f = index.factors[i]
        if not _is_active(f, active):
            continue
        d = f.value(new_state.objects) - f.value(state.objects)
        if f.channel == STRUCTURAL:
            ds += d
        else:
            dm += d
    return Delta(ds, dm, alpha_struct * ds + alpha_sem * dm)


def rule_alignment(
    state: SceneState,
    active: Iterable[int] | None = None,
    factors: Sequence[Factor] | None = None,
) -> float:
    """Fraction of active factors within their satisfaction tolerance."""
    factors = compile_factors(state) if factors is None else factors
    active = None if active is None else set(active)
    act = [f for f in factors if _is_active(f, active)]
    if not act:
        return 1.0
    ok = sum(1 for f in act if f.raw(state.objects) <= f.eps)
    return ok / len(act)


def violated(state: SceneState, factors: Sequence[Factor], active: Iterable[int] | None = None) -> list[Factor]:
    active = None if active is None else set(active)
    return [f for f in factors if _is_active(f, active) and f.raw(state.objects) > f.eps]


class EnergyModel:
    """Cached per-factor raw values for incremental evaluation.

    ``propose`` re-evaluates the factors touching the modified objects against
    a candidate object map and returns weighted channel deltas; ``commit``
    stores the candidate values.  Deltas are exact for the same reason
    :func:`delta_energy` is.  Satisfaction counts per level are kept current
    so rho is O(L) per query.
    """

    def __init__(self, state: SceneState, factors: Sequence[Factor] | None = None):
        self.index = FactorIndex(compile_factors(state) if factors is None else factors)
        self.factors = self.index.factors
        self.values = [f.raw(state.objects) for f in self.factors]
        self.levels = sorted({f.level for f in self.factors})
        self.count = {l: 0 for l in self.levels}
        self.bad: set[int] = set()
        for i, f in enumerate(self.factors):
            self.count[f.level] += 1
            if self.values[i] > f.eps:
                self.bad.add(i)

    def satisfied(self, i: int) -> bool:
        return i not in self.bad

    def propose(self, objects: Mapping[str, ObjectSpec], modified: Iterable[str], active) -> tuple[float, float, dict[int, float]]:
        ds = dm = 0.0
        new = {}
        for i in self.index.touching(modified):
            f = self.factors[i]
            v = f.raw(objects)
            new[i] = v
            if f.level not in active:
                continue
            d = f.weight * v - f.weight * self.values[i]
            if f.channel == STRUCTURAL:
                ds += d
            else:
                dm += d
        return ds, dm, new

    def commit(self, new: Mapping[int, float]) -> None:
        for i, v in new.items():
            self.values[i] = v
            if v > self.factors[i].eps:
                self.bad.add(i)
            else:
                self.bad.discard(i)

    def sums(self, active) -> tuple[float, float]:
        es = em = 0.0
        for f, v in zip(self.factors, self.values):
            if f.level in active:
                if f.channel == STRUCTURAL:
                    es += f.weight * v
                else:
                    em += f.weight * v
        return es, em

    def violated(self, active) -> list[int]:
        return sorted(i for i in self.bad if self.factors[i].level in active)

    def rho(self, active) -> float:
        total = sum(self.count.get(l, 0) for l in active)
        if not total:
            return 1.0
        nbad = sum(1 for i in self.bad if self.factors[i].level in active)
        return (total - nbad) / total

    def structurally_feasible(self, active) -> bool:
        return not any(self.factors[i].channel == STRUCTURAL and self.factors[i].level in active for i in self.bad)
