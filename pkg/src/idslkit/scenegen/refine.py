"""Post-placement refinement by projected gradient descent.

Objective over the movable objects' positions (plus yaw where a Facing or
AlignedWith relation exists):

    sum_r w_r * phi_r(s_r) + lam_stab * sum_i gap_i^2 + lam_coll * overlap + yaw terms

where s_r is the signed distance of the child face centre from the parent
plane. OnTopOf uses phi = s^2 and StableAgainst a squared hinge outside
[0, margin]. gap_i is the height of an object's bottom above its support:
the top of its OnTopOf parent, otherwise the floor. Wall-held objects
(against a wall and clear of the floor) and hanging fixtures have no
support term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from ..energy import assign_hosts, collision_pairs, heading_error, object_yaw, yaw_misalignment
from ..idsl import ObjectSpec, SceneState, room_planes
from ..pose import quat_from_yaw, quat_mul

log = logging.getLogger(__name__)

PLANE_RELATIONS = ("StableAgainst", "OnTopOf")
YAW_RELATIONS = ("Facing", "AlignedWith")
HUNG = frozenset({"ceiling_light", "chandelier", "pendant_light", "ceiling_fan", "wall_lamp", "curtain", "blinds", "range_hood"})


class RefineError(ValueError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    lam_stab: float = 1.0
    lam_coll: float = 1.0
    step: float = 0.1
    max_iters: int = 500
    eps: float = 1e-6
    fd_h: float = 1e-4
    max_halvings: int = 30
    room_height: float = 2.8
    wall_held_gap: float = 0.05

    def __post_init__(self):
        if self.step <= 0:
            raise RefineError("step must be positive")
        if self.lam_stab < 0 or self.lam_coll < 0:
            raise RefineError("objective weights must be non-negative")
        if self.max_iters < 0 or self.eps < 0 or self.fd_h <= 0:
            raise RefineError("max_iters, eps must be non-negative and fd_h positive")


@dataclass(frozen=True)
class PlaneTerm:
    child: str
    child_idx: int
    parent: str
    parent_idx: int
    parent_is_room: bool
    hinge: bool
    margin: float
    sign: float
    weight: float


@dataclass(frozen=True)
class SupportTerm:
    obj: str
    support: str | None  # None = floor


@dataclass(frozen=True)
class YawTerm:
    obj: str
    kind: str
    target: str
    target_is_room: bool
    weight: float


@dataclass
class RefineResult:
    state: SceneState
    iterations: int
    objective: list[float]
    collision_before: float
    collision_after: float
    reason: str
    displacement: dict[str, float] = field(default_factory=dict)


class _Geom:
    """Planes, footprint and height range of an object at a reference pose;
    translations are applied arithmetically, rotations rebuild the spec."""

    def __init__(self, obj: ObjectSpec):
        self.obj = obj
        self.p0 = np.asarray(obj.position_world, float)
        self.points = np.array([p.point for p in obj.planes])
        self.normals = np.array([p.normal for p in obj.planes])
        lo, hi = obj.world_bounds
        self.fp = np.array(obj.footprint)
        self.zmin, self.zmax = float(lo[2]), float(hi[2])
        self.center = np.asarray(obj.world_center, float)


class RefineProblem:
    def __init__(self, state: SceneState, cfg: RefineConfig):
        self.state = state
        self.cfg = cfg
        self.ids = sorted(k for k, o in state.objects.items() if o.active and o.opening is None)
        self.index = {k: i for i, k in enumerate(self.ids)}
        self.hosts = assign_hosts(state)
        self.plane_terms: list[PlaneTerm] = []
        self.support_terms: list[SupportTerm] = []
        self.yaw_terms: list[YawTerm] = []
        self._room_planes = {lab: room_planes(r, cfg.room_height) for lab, r in state.rooms.items()}
        self._compile()
        self.has_yaw = np.array([any(t.obj == k for t in self.yaw_terms) for k in self.ids], bool)
        pairs = collision_pairs(state, self.hosts)
        self.pairs = [(a, b) for a, b in pairs if a in self.index or b in self.index]
        self._base = {k: state.objects[k] for k in state.objects}
        self._cache: dict[tuple[str, float], _Geom] = {}
        self.x0 = np.array([[*state.objects[k].position_world, 0.0] for k in self.ids], float).reshape(-1, 4)

    # -- compile ---------------------------------------------------------------
    def _compile(self) -> None:
        objs, rooms = self.state.objects, self.state.rooms
        for k in self.ids:
            o = objs[k]
            support = None
            wall_held = False
            for r in o.relation_graph:
                if r.relation_type not in PLANE_RELATIONS + YAW_RELATIONS:
                    continue
                is_room = r.target_name in rooms
                if not is_room and r.target_name not in objs:
                    raise RefineError(f"{k}: relation {r.relation_type} targets unknown entity {r.target_name!r}")
                if r.relation_type in YAW_RELATIONS:
                    self.yaw_terms.append(YawTerm(k, r.relation_type, r.target_name, is_room, r.weight))
                    continue
                n_parent = len(self._room_planes[r.target_name]) if is_room else 6
                if not 0 <= r.child_plane_idx < 6 or not 0 <= r.parent_plane_idx < n_parent:
                    raise RefineError(f"{k}: unresolvable plane reference child {r.child_plane_idx} / parent {r.parent_plane_idx} on {r.target_name}")
                hinge = r.relation_type == "StableAgainst"
                self.plane_terms.append(
                    PlaneTerm(k, r.child_plane_idx, r.target_name, r.parent_plane_idx, is_room, hinge, r.margin, -1.0 if r.rev_normal else 1.0, r.weight)
                )
                if r.relation_type == "OnTopOf" and not is_room:
                    support = r.target_name
                if hinge and is_room and r.parent_plane_idx >= 1:
                    wall_held = True
            if support is None and (o.category in HUNG or (wall_held and o.world_bounds[0][2] > self.cfg.wall_held_gap)):
                continue
            self.support_terms.append(SupportTerm(k, support))

    # -- geometry at a parameter vector ------------------------------------------
    def _geom(self, k: str, yaw: float) -> _Geom:
        key = (k, yaw)
        g = self._cache.get(key)
        if g is None:
            o = self._base[k]
            if yaw != 0.0:
                o = o.with_pose(quaternion=quat_mul(quat_from_yaw(yaw), o.rotation_quaternion))
            g = self._cache[key] = _Geom(o)
            if len(self._cache) > 4096:
                self._cache.clear()
                self._cache[key] = g
        return g

    def _offset(self, k: str, x: np.ndarray) -> tuple[_Geom, np.ndarray]:
        i = self.index.get(k)
        if i is None:
            return self._geom(k, 0.0), np.zeros(3)
        g = self._geom(k, float(x[i, 3]))
        return g, x[i, :3] - g.p0

    def _plane(self, k: str, idx: int, is_room: bool, x: np.ndarray):
        if is_room:
            p = self._room_planes[k][idx]
            return p.point, p.normal
        g, d = self._offset(k, x)
        return g.points[idx] + d, g.normals[idx]

    def _footprint(self, k: str, x: np.ndarray) -> tuple:
        g, d = self._offset(k, x)
        return tuple(g.fp + np.array([d[0], d[1], d[0], d[1]]))

    def _zrange(self, k: str, x: np.ndarray) -> tuple[float, float]:
        g, d = self._offset(k, x)
        return g.zmin + d[2], g.zmax + d[2]

    # -- terms ---------------------------------------------------------------------
    def _s(self, t: PlaneTerm, x) -> tuple[float, np.ndarray]:
        cp, _ = self._plane(t.child, t.child_idx, False, x)
        pp, pn = self._plane(t.parent, t.parent_idx, t.parent_is_room, x)
        return t.sign * float(pn @ (cp - pp)), t.sign * pn

    @staticmethod
    def _phi(t: PlaneTerm, s: float) -> tuple[float, float]:
        if not t.hinge:
            return s * s, 2 * s
        if s > t.margin:
            return (s - t.margin) ** 2, 2 * (s - t.margin)
        if s < 0:
            return s * s, 2 * s
        return 0.0, 0.0

    def _gap(self, t: SupportTerm, x) -> float:
        z = self._zrange(t.obj, x)[0]
        top = 0.0 if t.support is None else self._zrange(t.support, x)[1]
        return z - top

    def align(self, x) -> float:
        return sum(t.weight * self._phi(t, self._s(t, x)[0])[0] for t in self.plane_terms)

    def stability(self, x) -> float:
        return sum(self._gap(t, x) ** 2 for t in self.support_terms)

    def collision(self, x, only: str | None = None) -> float:
        total = 0.0
        for a, b in self.pairs:
            if only is not None and only not in (a, b):
                continue
            total += geo.rect_overlap_area(self._footprint(a, x), self._footprint(b, x))
        return total

    def _obj_at(self, k: str, x) -> ObjectSpec:
        g, d = self._offset(k, x)
        if not d.any():
            return g.obj
        return g.obj.with_pose(position=g.p0 + d)

    def yaw_energy(self, x) -> float:
        total = 0.0
        for t in self.yaw_terms:
            o = self._obj_at(t.obj, x)
            if t.kind == "Facing":
                if t.target_is_room:
                    target = geo.polygon_centroid(self.state.rooms[t.target].polygon)
                else:
                    target = self._obj_at(t.target, x).world_center[:2]
                e = heading_error(o, target)
            else:
                if t.target_is_room:
                    continue
                e = yaw_misalignment(object_yaw(o), object_yaw(self._obj_at(t.target, x)))
            total += t.weight * e * e
        return total

    def objective(self, x, parts=("align", "stab", "coll", "yaw")) -> float:
        c = self.cfg
        total = 0.0
        if "align" in parts:
            total += self.align(x)
        if "stab" in parts:
            total += c.lam_stab * self.stability(x)
        if "coll" in parts and c.lam_coll:
            total += c.lam_coll * self.collision(x)
        if "yaw" in parts and self.yaw_terms:
            total += self.yaw_energy(x)
        return total

    # -- gradients -------------------------------------------------------------------
    def analytic_gradient(self, x, parts=("align", "stab")) -> np.ndarray:
        """Position gradient of the plane-alignment and support terms."""
        g = np.zeros_like(x)
        if "align" in parts:
            for t in self.plane_terms:
                s, ds = self._s(t, x)
                dphi = t.weight * self._phi(t, s)[1]
                if dphi == 0.0:
                    continue
                if t.child in self.index:
                    g[self.index[t.child], :3] += dphi * ds
                if not t.parent_is_room and t.parent in self.index:
                    g[self.index[t.parent], :3] -= dphi * ds
        if "stab" in parts:
            for t in self.support_terms:
                gap = self._gap(t, x)
                if gap == 0.0:
                    continue
                v = 2 * self.cfg.lam_stab * gap
                g[self.index[t.obj], 2] += v
                if t.support is not None and t.support in self.index:
                    g[self.index[t.support], 2] -= v
        return g

    def fd_gradient(self, x, parts=("align", "stab"), h: float | None = None, columns=(0, 1, 2)) -> np.ndarray:
        """Central differences of the chosen objective parts."""
        h = self.cfg.fd_h if h is None else h
        g = np.zeros_like(x)
        for i in range(len(self.ids)):
            for c in columns:
                xp, xm = x.copy(), x.copy()
                xp[i, c] += h
                xm[i, c] -= h
                g[i, c] = (self.objective(xp, parts) - self.objective(xm, parts)) / (2 * h)
        return g

    def _collision_gradient(self, x) -> np.ndarray:
        g = np.zeros_like(x)
        if not self.cfg.lam_coll:
            return g
        h = self.cfg.fd_h
        involved = {k for p in self.pairs for k in p if k in self.index}
        for k in sorted(involved):
            i = self.index[k]
            for c in (0, 1):
                xp, xm = x.copy(), x.copy()
                xp[i, c] += h
                xm[i, c] -= h
                g[i, c] = self.cfg.lam_coll * (self.collision(xp, k) - self.collision(xm, k)) / (2 * h)
        return g

    def _yaw_gradient(self, x) -> np.ndarray:
        g = np.zeros_like(x)
        h = self.cfg.fd_h
        for i in np.flatnonzero(self.has_yaw):
            xp, xm = x.copy(), x.copy()
            xp[i, 3] += h
            xm[i, 3] -= h
            g[i, 3] = (self.objective(xp) - self.objective(xm)) / (2 * h)
        return g

    def gradient(self, x) -> np.ndarray:
        return self.analytic_gradient(x) + self._collision_gradient(x) + self._yaw_gradient(x)

    # -- projection --------------------------------------------------------------------
    def project(self, x, moved) -> np.ndarray:
        """Keep footprint centres inside the host room and bottoms above the floor."""
        x = x.copy()
        for i in moved:
            k = self.ids[i]
            g, d = self._offset(k, x)
            host = self.hosts.get(k)
            if host is not None:
                c = g.center[:2] + d[:2]
                poly = self.state.rooms[host].polygon
                if not geo.point_in_polygon(c, poly):
                    x[i, :2] += geo.closest_point_in_polygon(c, poly) - c
            zmin = g.zmin + d[2]
            if zmin < 0:
                x[i, 2] -= zmin
        return x

    def to_state(self, x) -> SceneState:
        updates = {}
        for i, k in enumerate(self.ids):
            if np.array_equal(x[i], self.x0[i]):
                continue
            o = self.state.objects[k]
            q = o.rotation_quaternion if x[i, 3] == 0.0 else quat_mul(quat_from_yaw(float(x[i, 3])), o.rotation_quaternion)
            updates[k] = o.with_pose(position=tuple(float(v) for v in x[i, :3]), quaternion=q)
        return self.state.with_objects(updates) if updates else self.state


def refine(state: SceneState, cfg: RefineConfig | None = None) -> RefineResult:
    cfg = cfg or RefineConfig()
    prob = RefineProblem(state, cfg)
    x = prob.x0.copy()
    if not prob.ids:
        return RefineResult(state, 0, [], 0.0, 0.0, "no_movable_objects")
    c0 = prob.collision(x)
    f = prob.objective(x)
    history = [f]
    reason = "max_iters"
    it = 0
    while it < cfg.max_iters:
        g = prob.gradient(x)
        if not np.any(g):
            reason = "stationary"
            break
        moved = np.flatnonzero(np.any(g != 0, axis=1))
        alpha = cfg.step
        accepted = None
        for _ in range(cfg.max_halvings + 1):
            cand = prob.project(x - alpha * g, moved)
            fc = prob.objective(cand)
            if fc < f and prob.collision(cand) <= c0 + 1e-12:
                accepted = cand
                break
            alpha /= 2
        if accepted is None:
            reason = "no_descent"
            break
        disp = float(np.max(np.linalg.norm(accepted[:, :3] - x[:, :3], axis=1)))
        x, f = accepted, fc
        history.append(f)
        it += 1
        if disp < cfg.eps:
            reason = "converged"
            break
    out = prob.to_state(x)
    disp = {k: float(np.linalg.norm(x[i, :3] - prob.x0[i, :3])) for i, k in enumerate(prob.ids)}
    log.debug("refine: %d iterations, objective %.3g -> %.3g (%s)", it, history[0], history[-1], reason)
    return RefineResult(out, it, history, c0, prob.collision(x), reason, disp)


def refine_placements(state: SceneState, cfg: RefineConfig | None = None) -> SceneState:
    """Relationship-aware placement correction; see the module docstring."""
    return refine(state, cfg).state
