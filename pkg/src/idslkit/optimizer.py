"""Self-regulating layout annealer.

Rule groups are switched on in stages; the fraction of satisfied active
factors (rho) drives the operator mix, the temperature and the semantic
weight.  Structural improvements are always taken, structurally neutral
moves go through a Metropolis test on the semantic change, and anything that
makes the structure worse is rejected.

Randomness comes from one PCG64 seed split (``SeedSequence.spawn``) into
three streams: operator choice, proposal geometry, acceptance draws.  The
split order is fixed, so a (scene, config, seed) triple always reproduces
the same trace.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry as geo
from .energy import EnergyConfig, EnergyModel, Factor, assign_hosts, compile_factors, object_yaw
from .idsl import ObjectSpec, SceneState, room_planes, DEFAULT_ROOM_HEIGHT
from .pose import quat_from_axis_angle, quat_mul, quat_normalize

log = logging.getLogger(__name__)

OPERATORS = ("translate", "rotate", "swap_pair", "group_translate", "relation_snap", "scale_jitter")

# (beta0, gamma); relation_snap is the conservative refiner (gamma = 0)
DEFAULT_OPERATORS = {
    "translate": (4.0, 0.5),
    "rotate": (1.0, 1.0),
    "swap_pair": (0.5, 2.0),
    "group_translate": (0.5, 1.0),
    "relation_snap": (1.0, 0.0),
    "scale_jitter": (0.2, 1.0),
}

ALPHA_SCHEDULES = ("rho-coupled", "constant", "linear-ramp")

TRACE_VERSION = 1


@dataclass
class OptimizerConfig:
    T0: float = 1.0
    delta: float = 2.0
    operators: dict = field(default_factory=lambda: dict(DEFAULT_OPERATORS))
    L: int = 3
    W: int = 200
    rho_advance: float = 0.95
    max_iters: int = 20000
    seed: int = 0
    alpha_schedule: str = "rho-coupled"
    alpha_sem_constant: float = 1.0
    alpha_ramp_iters: int = 5000
    eps_feas: float = 1e-9
    eps_s: float = 1e-9
    eps_m: float = 1e-3
    plateau_requires_feasible: bool = True
    # proposal magnitudes
    translate_scale: float = 0.15
    step_clamp: tuple = (0.02, 1.0)
    rotate_sigma: float = math.pi / 3
    scale_sigma: float = 0.03
    scale_bounds: tuple = (0.9, 1.1)
    global_jump: float = 0.05
    violated_pick: float = 0.5
    room_height: float = DEFAULT_ROOM_HEIGHT
    energy: EnergyConfig = field(default_factory=EnergyConfig)

    def __post_init__(self):
        self.operators = {k: tuple(float(x) for x in v) for k, v in self.operators.items()}
        self.check()

    def check(self) -> None:
        if self.T0 <= 0 or self.delta <= 0:
            raise ValueError("T0 and delta must be positive")
        unknown = set(self.operators) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown operators: {sorted(unknown)}")
        for name, (b, g) in self.operators.items():
            if b <= 0 or g < 0:
                raise ValueError(f"operator {name}: need beta0 > 0 and gamma >= 0")
        if not 0 < self.rho_advance <= 1:
            raise ValueError("rho_advance must lie in (0, 1]")
        if self.L < 1 or self.W < 1 or self.max_iters < 0:
            raise ValueError("L and W must be >= 1 and max_iters >= 0")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ValueError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "OptimizerConfig":
        raw = dict(raw)
        if "energy" in raw and not isinstance(raw["energy"], EnergyConfig):
            raw["energy"] = EnergyConfig.from_json(raw["energy"])
        for k in ("step_clamp", "scale_bounds"):
            if k in raw:
                raw[k] = tuple(raw[k])
        known = set(cls.__dataclass_fields__)
        bad = set(raw) - known
        if bad:
            raise ValueError(f"unknown optimizer config keys: {sorted(bad)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["operators"] = {k: list(v) for k, v in self.operators.items()}
        return d


@dataclass
class TraceRecord:
    t: int
    stage: int
    rho: float
    T: float
    op: str
    probs: list
    accepted: bool
    dS: float
    dM: float
    E_struct: float
    E_sem: float
    alpha_sem: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptTrace:
    records: list[TraceRecord] = field(default_factory=list)
    exit_reason: str = ""
    final_stage: int = 1
    seed: int = 0

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.as_dict(), sort_keys=True, allow_nan=False) for r in self.records]
        return "".join(line + "\n" for line in lines)

    def summary(self) -> dict:
        acc = sum(r.accepted for r in self.records)
        return {
            "version": TRACE_VERSION,
            "iterations": len(self.records),
            "accepted": acc,
            "exit_reason": self.exit_reason,
            "final_stage": self.final_stage,
            "seed": self.seed,
        }

    @classmethod
    def from_jsonl(cls, text: str) -> "OptTrace":
        recs = [TraceRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(records=recs)


# ---------------------------------------------------------------------------
# annealing laws
# ---------------------------------------------------------------------------


def operator_probs(rho: float, cfg: OptimizerConfig) -> tuple[list[str], np.ndarray]:
    names = [n for n in OPERATORS if n in cfg.operators]
    beta = np.array([cfg.operators[n][0] * (1.0 - rho) ** cfg.operators[n][1] for n in names])
    total = beta.sum()
    if total <= 0:
        # rho = 1 with no gamma = 0 operator: uniform over the refiners, or over all
        refiners = np.array([cfg.operators[n][1] == 0 for n in names], dtype=float)
        beta = refiners if refiners.sum() else np.ones(len(names))
        total = beta.sum()
    return names, beta / total


def sample_operator(t: int, rho: float, cfg: OptimizerConfig, rng: np.random.Generator) -> tuple[str, np.ndarray]:
    """Draw an operator name; ``t`` is accepted for interface symmetry, the
    law depends on time only through rho."""
    names, p = operator_probs(rho, cfg)
    k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return names[min(k, len(names) - 1)], p


def temperature(t: int, rho: float, cfg: OptimizerConfig) -> float:
    return cfg.T0 * (1.0 - rho) ** cfg.delta


def alpha_weights(t: int, rho: float, cfg: OptimizerConfig) -> tuple[float, float]:
    if cfg.alpha_schedule == "rho-coupled":
        return 1.0, rho
    if cfg.alpha_schedule == "constant":
        return 1.0, cfg.alpha_sem_constant
    return 1.0, min(1.0, t / max(1, cfg.alpha_ramp_iters))


def accept(d_struct: float, d_sem: float, feasible: bool, T: float, rng: np.random.Generator) -> bool:
    """Dual-channel rule: structural gains always pass; structurally neutral
    moves pass a Metropolis test on the semantic change; the rest fail."""
    if d_struct < 0:
        return True
    if not feasible:
        return False
    if d_sem <= 0:
        return True
    if T <= 0:
        return False
    return bool(rng.random() < math.exp(-d_sem / T))


def _quiet(rec: TraceRecord, cfg: OptimizerConfig) -> bool:
    # gains inside the feasibility tolerance are rounding noise, not progress
    return rec.rho >= cfg.rho_advance and not (rec.accepted and rec.dS < -cfg.eps_feas)


def advance_stage(trace: OptTrace | Sequence[TraceRecord], kappa: int, cfg: OptimizerConfig) -> int:
    """Next stage: kappa + 1 (capped at L) once the last W records were all
    spent at this stage with rho >= rho_advance and no structural gain
    larger than eps_feas."""
    recs = trace.records if isinstance(trace, OptTrace) else trace
    if len(recs) < cfg.W:
        return kappa
    window = recs[-cfg.W :]
    if all(r.stage == kappa and _quiet(r, cfg) for r in window):
        return min(kappa + 1, cfg.L)
    return kappa


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------


def _clamp(x, lo, hi):
    return max(lo, min(hi, x))


class Proposer:
    """Move operators over a fixed scene topology (hosts, supports, groups)."""

    def __init__(self, state: SceneState, model: EnergyModel, cfg: OptimizerConfig):
        self.cfg = cfg
        self.model = model
        self.hosts = assign_hosts(state)
        self.movable = sorted(oid for oid, o in state.objects.items() if o.active)
        self.base_scale = {oid: np.asarray(state.objects[oid].scale, dtype=float) for oid in self.movable}
        self.children: dict[str, list[str]] = {}
        for oid in self.movable:
            for rel in state.objects[oid].relation_graph:
                if rel.relation_type == "OnTopOf" and rel.target_name in state.objects:
                    self.children.setdefault(rel.target_name, []).append(oid)
        self.polys = {lab: r.polygon for lab, r in state.rooms.items()}
        self.diag = {}
        for lab, poly in self.polys.items():
            b = geo.polygon_bounds(poly)
            self.diag[lab] = math.hypot(b[2] - b[0], b[3] - b[1])
        self.planes = {lab: room_planes(r, cfg.room_height) for lab, r in state.rooms.items()}
        self.relational = {}
        for i, f in enumerate(model.factors):
            if f.kind in ("stable_against", "on_top_of", "near", "facing", "aligned_with", "adjacent_to"):
                self.relational.setdefault(f.scope[0], []).append(i)
        self.groups: dict[tuple, list[str]] = {}
        for oid in self.movable:
            for g in state.objects[oid].groups:
                self.groups.setdefault((g, self.hosts[oid]), []).append(oid)

    # -- helpers ------------------------------------------------------------
    def descendants(self, oid: str) -> list[str]:
        out, stack = [], list(self.children.get(oid, ()))
        while stack:
            c = stack.pop()
            if c not in out:
                out.append(c)
                stack.extend(self.children.get(c, ()))
        return sorted(out)

    def pick_object(self, rng, active) -> str | None:
        if not self.movable:
            return None
        if rng.random() < self.cfg.violated_pick:
            bad = self.model.violated(active)
            if bad:
                f = self.model.factors[bad[int(rng.integers(len(bad)))]]
                cands = [e for e in f.scope if e in self.base_scale]
                if cands:
                    return cands[int(rng.integers(len(cands)))]
        return self.movable[int(rng.integers(len(self.movable)))]

    def step(self, oid: str, T: float) -> float:
        lo, hi = self.cfg.step_clamp
        host = self.hosts.get(oid)
        diag = self.diag.get(host, 5.0)
        return self.cfg.translate_scale * diag * _clamp(T, lo, hi)

    def shift(self, objs, ids: Iterable[str], d) -> dict[str, ObjectSpec]:
        d = np.asarray(d, dtype=float)
        out = {}
        for oid in ids:
            for k in [oid, *self.descendants(oid)]:
                if k in out:
                    continue
                o = objs[k]
                out[k] = o.with_pose(np.asarray(o.position_world, dtype=float) + d)
        return out

    def spin(self, objs, oid: str, angle: float) -> dict[str, ObjectSpec]:
        """Rotate about the object's rotation axis through its centre; supported
        objects are carried along."""
        o = objs[oid]
        axis = np.asarray(o.rotation_axis, dtype=float)
        dq = quat_from_axis_angle(axis, angle)
        pivot = o.world_center
        c, s = math.cos(angle), math.sin(angle)
        Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        out = {}
        for k in [oid, *self.descendants(oid)]:
            ok = objs[k]
            q = quat_normalize(quat_mul(dq, ok.rotation_quaternion))
            center = pivot + Rz @ (ok.world_center - pivot) if k != oid else pivot
            tmp = ok.with_pose(ok.position_world, q)
            pos = np.asarray(ok.position_world, dtype=float) + (center - tmp.world_center)
            out[k] = ok.with_pose(pos, q)
        return out

    def place_center(self, objs, oid: str, xy) -> dict[str, ObjectSpec]:
        o = objs[oid]
        d = np.array([xy[0] - o.world_center[0], xy[1] - o.world_center[1], 0.0])
        return self.shift(objs, [oid], d)

    # -- operators ----------------------------------------------------------
    def translate(self, objs, rng, T, active):
        oid = self.pick_object(rng, active)
        if oid is None:
            return None
        host = self.hosts.get(oid)
        if host is not None and rng.random() < self.cfg.global_jump:
            b = geo.polygon_bounds(self.polys[host])
            for _ in range(10):
                xy = rng.uniform((b[0], b[1]), (b[2], b[3]))
                if geo.point_in_polygon(xy, self.polys[host]):
                    return self.place_center(objs, oid, xy)
            return None
        sigma = self.step(oid, T)
        d = rng.normal(0.0, sigma, 2)
        wall = self.satisfied_wall(oid)
        if wall is not None:
            # slide along the wall so the contact is kept
            u = wall.u[:2]
            d = float(np.dot(d, u)) * u
        return self.shift(objs, [oid], (d[0], d[1], 0.0))

    def satisfied_wall(self, oid):
        for i in self.relational.get(oid, ()):
            f = self.model.factors[i]
            if f.kind == "stable_against" and "room_plane" in f.params and self.model.satisfied(i):
                if abs(f.params["room_plane"].normal[2]) < 1e-9:
                    return f.params["room_plane"]
        return None

    def rotate(self, objs, rng, T, active):
        oid = self.pick_object(rng, active)
        if oid is None:
            return None
        if rng.random() < 0.3:
            yaw = object_yaw(objs[oid])
            target = round(yaw / (math.pi / 2)) * (math.pi / 2) + (math.pi / 2) * int(rng.integers(-1, 2))
            angle = target - yaw
        else:
            angle = rng.normal(0.0, self.cfg.rotate_sigma * _clamp(T, *self.cfg.step_clamp))
        return self.spin(objs, oid, float(angle))

    def swap_pair(self, objs, rng, T, active):
        a = self.pick_object(rng, active)
        if a is None:
            return None
        same = [b for b in self.movable if b != a and self.hosts[b] == self.hosts[a]]
        if not same:
            return None
        b = same[int(rng.integers(len(same)))]
        ca, cb = objs[a].world_center, objs[b].world_center
        out = self.place_center(objs, a, cb[:2])
        out.update(self.place_center(objs, b, ca[:2]))
        return out

    def group_translate(self, objs, rng, T, active):
        oid = self.pick_object(rng, active)
        if oid is None:
            return None
        members = {oid}
        for g in objs[oid].groups:
            members.update(self.groups.get((g, self.hosts[oid]), ()))
        if len(members) == 1:
            for i in self.relational.get(oid, ()):
                f = self.model.factors[i]
                tgt = f.params.get("target_id") or f.params.get("parent_id")
                if tgt in self.base_scale:
                    members.add(tgt)
        d = rng.normal(0.0, self.step(oid, T), 2)
        return self.shift(objs, sorted(members), (d[0], d[1], 0.0))

    def scale_jitter(self, objs, rng, T, active):
        oid = self.pick_object(rng, active)
        if oid is None:
            return None
        o = objs[oid]
        base = self.base_scale[oid]
        f = math.exp(rng.normal(0.0, self.cfg.scale_sigma))
        lo, hi = self.cfg.scale_bounds
        s = np.clip(np.asarray(o.scale, dtype=float) * f, base * lo, base * hi)
        new = o.with_pose(o.position_world, o.rotation_quaternion, s)
        # keep the footprint centre and the resting height
        d = o.world_center - new.world_center
        d[2] = o.world_bounds[0][2] - new.world_bounds[0][2]
        return {oid: new.with_pose(np.asarray(new.position_world, dtype=float) + d)}

    def relation_snap(self, objs, rng, T, active):
        oid = self.pick_object(rng, active)
        if oid is None:
            return None
        idx = [i for i in self.relational.get(oid, ()) if self.model.factors[i].level in active]
        if not idx:
            yaw = object_yaw(objs[oid])
            target = round(yaw / (math.pi / 2)) * (math.pi / 2)
            if abs(target - yaw) < 1e-12:
                return None
            return self.spin(objs, oid, target - yaw)
        bad = [i for i in idx if not self.model.satisfied(i)]
        pool = bad or idx
        f = self.model.factors[pool[int(rng.integers(len(pool)))]]
        return self.snap(objs, f, rng)

    def snap(self, objs, f: Factor, rng):
        oid = f.scope[0]
        o = objs[oid]
        p = f.params
        if f.kind == "stable_against":
            if "room_plane" in p:
                plane = p["room_plane"]
            else:
                plane = objs[p["parent_id"]].planes[p["parent_idx"]]
            n = -plane.normal if p["rev_normal"] else plane.normal
            out = {}
            if abs(n[2]) < 0.5 and p["child_idx"] >= 2:
                # turn so the child face looks back along -n
                face_n = o.planes[p["child_idx"]].normal
                cur = math.atan2(face_n[1], face_n[0])
                want = math.atan2(-n[1], -n[0])
                ang = (want - cur + math.pi) % (2 * math.pi) - math.pi
                out = self.spin(objs, oid, ang)
                o = out[oid]
            cp = o.planes[p["child_idx"]]
            s = float(np.dot(cp.point - plane.point, n))
            move = (0.5 * p["margin"] - s) * n
            lat = float(np.dot(cp.point - plane.point, plane.u))
            room = max(0.0, plane.half_extents[0] - cp.half_extents[0])
            move = move + (_clamp(lat, -room, room) - lat) * plane.u
            if abs(n[2]) < 0.5:
                move[2] = 0.0
            shifted = self.shift({**objs, **out}, [oid], move)
            out.update(shifted)
            return out
        if f.kind == "on_top_of":
            lo = o.world_bounds[0]
            if "parent_id" in p:
                par = objs[p["parent_id"]]
                top = par.world_bounds[1][2]
                fp = par.footprint
                cx, cy = o.world_center[:2]
                x = _clamp(cx, fp[0], fp[2])
                y = _clamp(cy, fp[1], fp[3])
                return self.shift(objs, [oid], (x - cx, y - cy, top - lo[2]))
            return self.shift(objs, [oid], (0.0, 0.0, -lo[2]))
        tgt_xy = objs[p["target_id"]].world_center[:2] if "target_id" in p else p.get("target_point")
        if f.kind == "facing":
            d = np.asarray(tgt_xy) - o.world_center[:2]
            if np.hypot(*d) < 1e-9:
                return None
            want = math.atan2(-d[0], d[1])
            return self.spin(objs, oid, (want - object_yaw(o) + math.pi) % (2 * math.pi) - math.pi)
        if f.kind == "aligned_with":
            ty = object_yaw(objs[p["target_id"]]) if "target_id" in p else p["target_yaw"]
            q = math.pi / 2
            diff = (object_yaw(o) - ty) % q
            ang = -diff if diff < q / 2 else q - diff
            return self.spin(objs, oid, ang)
        if f.kind in ("near", "adjacent_to"):
            c = o.world_center[:2]
            d = c - np.asarray(tgt_xy)
            dist = float(np.hypot(*d))
            if dist < 1e-9:
                d, dist = np.array([1.0, 0.0]), 1.0
            reach = p["d_max"] if f.kind == "near" else p["gap"] + 0.5 * max(o.world_bounds[1][:2] - o.world_bounds[0][:2])
            r = rng.uniform(0.5, 0.95) * reach if f.kind == "near" else reach
            if "target_id" in p and f.kind == "adjacent_to":
                t = objs[p["target_id"]]
                r += 0.5 * max(t.world_bounds[1][:2] - t.world_bounds[0][:2])
            xy = np.asarray(tgt_xy) + d / dist * min(dist, r)
            return self.place_center(objs, oid, xy)
        return None

    def propose(self, name: str, objs, rng, T, active):
        return getattr(self, name)(objs, rng, T, active)

    def in_rooms(self, updates: Mapping[str, ObjectSpec]) -> bool:
        for oid, o in updates.items():
            host = self.hosts.get(oid)
            if host is not None and not geo.point_in_polygon(o.world_center[:2], self.polys[host]):
                return False
        return True


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def spawn_streams(seed: int) -> tuple[np.random.Generator, ...]:
    """(operator, proposal, accept) generators from one seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


def optimize(
    S0: SceneState,
    cfg: OptimizerConfig | None = None,
    factors: Sequence[Factor] | None = None,
) -> tuple[SceneState, OptTrace]:
    cfg = cfg or OptimizerConfig()
    factors = compile_factors(S0, cfg.energy) if factors is None else list(factors)
    model = EnergyModel(S0, factors)
    trace = OptTrace(seed=cfg.seed)

    if all(model.satisfied(i) for i in range(len(factors))):
        trace.exit_reason = "fixed_point"
        trace.final_stage = cfg.L
        return S0, trace

    op_rng, prop_rng, acc_rng = spawn_streams(cfg.seed)
    proposer = Proposer(S0, model, cfg)
    objs = dict(S0.objects)
    kappa = 1
    active = set(range(1, kappa + 1))
    e_s, e_m = model.sums(active)
    quiet = 0
    window = deque(maxlen=cfg.W + 1)
    exit_reason = "max_iters"

    for t in range(cfg.max_iters):
        rho = model.rho(active)
        if quiet >= cfg.W and kappa < cfg.L:
            kappa += 1
            active = set(range(1, kappa + 1))
            e_s, e_m = model.sums(active)
            rho = model.rho(active)
            quiet = 0
            window.clear()
            log.debug("t=%d: stage %d", t, kappa)
        a_s, a_m = alpha_weights(t, rho, cfg)
        T = temperature(t, rho, cfg)
        name, probs = sample_operator(t, rho, cfg, op_rng)

        updates = proposer.propose(name, objs, prop_rng, T, active)
        accepted = False
        ds = dm = 0.0
        if updates and proposer.in_rooms(updates):
            cand = {**objs, **updates}
            ds, dm, new_vals = model.propose(cand, updates.keys(), active)
            if accept(a_s * ds, a_m * dm, a_s * ds <= cfg.eps_feas, T, acc_rng):
                accepted = True
                objs = cand
                model.commit(new_vals)
                e_s += ds
                e_m += dm
        if not accepted:
            ds = dm = 0.0

        rec = TraceRecord(t, kappa, rho, T, name, [float(x) for x in probs], accepted, ds, dm, e_s, e_m, a_m)
        trace.records.append(rec)
        quiet = quiet + 1 if _quiet(rec, cfg) else 0
        window.append((e_s, e_m))

        if kappa == cfg.L and len(window) == window.maxlen:
            drift = abs(window[-1][0] - window[0][0])
            var = abs(window[-1][1] - window[0][1])
            if drift < cfg.eps_s and var < cfg.eps_m:
                if not cfg.plateau_requires_feasible or model.structurally_feasible(active):
                    exit_reason = "plateau"
                    break

    trace.exit_reason = exit_reason
    trace.final_stage = kappa
    return SceneState(S0.building, S0.rooms, objs, S0.extra), trace
