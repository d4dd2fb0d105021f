"""Layout fidelity, constraint satisfaction and physics counts."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import defaults as D
from . import geometry as geo
from .energy import (
    assign_hosts,
    collision_pairs,
    dominant_yaw,
    heading_error,
    object_yaw,
    point_rect_distance,
    rect_gap,
    yaw_misalignment,
)
from .idsl import RelationSpec, SceneState

log = logging.getLogger(__name__)


class MetricsError(ValueError):
    pass


@dataclass
class EvalConfig:
    cell: float = D.LF_CELL
    theta_max: float = D.THETA_MAX
    d_max: float = D.D_MAX
    m_max: float = D.M_MAX
    adjacent_gap: float = D.ADJACENT_GAP
    overlap_tol: float = D.OVERLAP_TOL
    max_cells: int = geo.DEFAULT_MAX_CELLS

    def __post_init__(self):
        for k in ("cell", "theta_max", "d_max", "m_max"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")


@dataclass(frozen=True)
class Constraint:
    """A relation with both endpoints named: ``source`` is an object id (or a
    room label for SharedEdge)."""

    source: str
    relation: RelationSpec

    @property
    def relation_type(self) -> str:
        return self.relation.relation_type

    @property
    def target(self) -> str:
        return self.relation.target_name


@dataclass
class Verdict:
    source: str
    relation_type: str
    target: str
    satisfied: bool
    measure: float | None
    note: str = ""


@dataclass
class EvalReport:
    lf: float
    per_category_iou: dict
    csr_count_strict: float
    csr_count_soft: float
    csr_rel: float
    per_relation: list
    n_obj: int
    n_ob: int
    n_cn: int
    layout_error: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# counts and masks
# ---------------------------------------------------------------------------


def category_counts(state: SceneState) -> Counter:
    return Counter(o.category.lower() for o in state.objects.values() if o.active)


def category_set(ref: SceneState, gen: SceneState) -> list[str]:
    return sorted(set(category_counts(ref)) | set(category_counts(gen)))


def common_domain(*states: SceneState) -> geo.Rect2D:
    rects = []
    for s in states:
        rects.extend(o.footprint for o in s.objects.values() if o.active)
        rects.extend(r.bounds for r in s.rooms.values())
    if not rects:
        raise MetricsError("nothing to rasterize")
    return geo.rect_union(rects)


def semantic_mask(state: SceneState, categories: Sequence[str], domain: geo.Rect2D, cfg: EvalConfig) -> geo.SemanticMask:
    """Category-id raster (ids are 1-based positions in ``categories``);
    larger footprints are painted first so small pieces stay visible."""
    ids = {c: k + 1 for k, c in enumerate(categories)}
    items = [
        (ids[o.category.lower()], o.footprint, oid)
        for oid, o in state.objects.items()
        if o.active and o.category.lower() in ids
    ]
    items.sort(key=lambda it: (-geo.rect_area(it[1]), it[2]))
    return geo.rasterize([(c, r) for c, r, _ in items], domain, cfg.cell, cfg.max_cells)


def layout_fidelity(ref: SceneState, gen: SceneState, cfg: EvalConfig | None = None) -> tuple[float, dict[str, float]]:
    cfg = cfg or EvalConfig()
    cats = category_set(ref, gen)
    if not cats:
        raise MetricsError("layout fidelity is undefined with no categories")
    domain = common_domain(ref, gen)
    ma = semantic_mask(ref, cats, domain, cfg)
    mb = semantic_mask(gen, cats, domain, cfg)
    per = {c: geo.mask_iou(ma, mb, k + 1) for k, c in enumerate(cats)}
    return float(np.mean(list(per.values()))), per


def csr_count(ref: SceneState, gen: SceneState, mode: str = "strict") -> float:
    return csr_count_from_counts(category_counts(ref), category_counts(gen), mode)


def csr_count_from_counts(ref: Mapping[str, int], gen: Mapping[str, int], mode: str = "strict") -> float:
    cats = sorted(set(ref) | set(gen))
    if mode not in ("strict", "soft"):
        raise ValueError(f"mode must be strict or soft, not {mode!r}")
    if not cats:
        return 1.0
    vals = []
    for c in cats:
        a, b = ref.get(c, 0), gen.get(c, 0)
        if mode == "strict":
            vals.append(1.0 if a == b else 0.0)
        else:
            vals.append(min(a, b) / max(a, b))
    return sum(vals) / len(vals)


def csr_count_soft(ref: Mapping[str, int], gen: Mapping[str, int]) -> float:
    return csr_count_from_counts(ref, gen, "soft")


def csr_count_strict(ref: Mapping[str, int], gen: Mapping[str, int]) -> float:
    return csr_count_from_counts(ref, gen, "strict")


def match_objects(ref: SceneState, gen: SceneState) -> list[tuple[str, str]]:
    """Pair active objects of equal category, minimising total centre
    distance per category.  Surplus objects on either side stay unpaired."""
    pairs = []
    for cat in category_set(ref, gen):
        a = sorted(k for k, o in ref.objects.items() if o.active and o.category.lower() == cat)
        b = sorted(k for k, o in gen.objects.items() if o.active and o.category.lower() == cat)
        if not a or not b:
            continue
        pa = np.array([ref.objects[k].world_center[:2] for k in a])
        pb = np.array([gen.objects[k].world_center[:2] for k in b])
        cost = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        pairs.extend((a[i], b[j]) for i, j in zip(rows, cols))
    return pairs


def layout_error(ref: SceneState, gen: SceneState) -> float:
    """RMS of matched centre distances, each divided by the diagonal of the
    reference object's room."""
    pairs = match_objects(ref, gen)
    if not pairs:
        raise MetricsError("layout error needs at least one matched object")
    hosts = assign_hosts(ref)
    x0, y0, x1, y1 = common_domain(ref)
    diag_all = float(np.hypot(x1 - x0, y1 - y0))
    errs = []
    for a, b in pairs:
        host = hosts.get(a)
        if host is not None:
            x0, y0, x1, y1 = ref.rooms[host].bounds
            diag = float(np.hypot(x1 - x0, y1 - y0))
        else:
            diag = diag_all
        d = np.linalg.norm(ref.objects[a].world_center[:2] - gen.objects[b].world_center[:2])
        errs.append(d / diag)
    return float(np.sqrt(np.mean(np.square(errs))))


# ---------------------------------------------------------------------------
# relation checks
# ---------------------------------------------------------------------------


def constraints_of(state: SceneState) -> list[Constraint]:
    """Every relation written in the scene (object relation graphs plus room
    SharedEdge entries)."""
    out = []
    for oid in sorted(state.objects):
        o = state.objects[oid]
        if not o.active:
            continue
        out.extend(Constraint(oid, rel) for rel in o.relation_graph)
    for label in sorted(state.rooms):
        for rr in state.rooms[label].relations:
            if rr.relation_type == "SharedEdge":
                out.append(Constraint(label, RelationSpec("SharedEdge", rr.target, extra={"segment": rr.segment})))
    return out


def _target_xy(gen: SceneState, target: str):
    if target in gen.objects:
        return gen.objects[target].world_center[:2]
    return geo.polygon_centroid(gen.rooms[target].polygon)


def check_constraint(gen: SceneState, c: Constraint, cfg: EvalConfig) -> Verdict:
    rel = c.relation
    kind = rel.relation_type
    tgt = rel.target_name

    def verdict(ok, measure, note=""):
        return Verdict(c.source, kind, tgt, bool(ok), None if measure is None else float(measure), note)

    if kind == "SharedEdge":
        if c.source not in gen.rooms or tgt not in gen.rooms:
            log.warning("SharedEdge %s -> %s: endpoint missing; counted unsatisfied", c.source, tgt)
            return verdict(False, None, "unresolved")
        seg = rel.extra.get("segment")
        if seg is None:
            ok = bool(geo.shared_edges(gen.rooms[c.source].polygon, gen.rooms[tgt].polygon))
            return verdict(ok, None)
        ok = geo.segment_on_boundary(seg, gen.rooms[c.source].polygon) and geo.segment_on_boundary(seg, gen.rooms[tgt].polygon)
        return verdict(ok, None)

    src = gen.objects.get(c.source)
    if src is None or not gen.entity_exists(tgt):
        log.warning("%s %s -> %s: endpoint missing; counted unsatisfied", kind, c.source, tgt)
        return verdict(False, None, "unresolved")
    is_room = tgt in gen.rooms

    if kind == "Facing":
        err = heading_error(src, _target_xy(gen, tgt))
        return verdict(err <= cfg.theta_max, err)
    if kind == "Near":
        if is_room:
            poly = gen.rooms[tgt].polygon
            c2 = src.world_center[:2]
            d = 0.0 if geo.point_in_polygon(c2, poly) else geo.distance_to_boundary(c2, poly)
        else:
            d = float(np.hypot(*(src.world_center[:2] - gen.objects[tgt].world_center[:2])))
        return verdict(d <= cfg.d_max, d)
    if kind == "StableAgainst":
        idx = rel.child_plane_idx
        if not 0 <= idx < 6:
            return verdict(False, None, "bad plane index")
        p = src.planes[idx].point
        if is_room:
            room = gen.rooms[tgt]
            if rel.parent_plane_idx == 0:
                d = abs(float(p[2]))
            else:
                d = geo.distance_to_boundary(p[:2], room.polygon)
        else:
            pidx = rel.parent_plane_idx
            if not 0 <= pidx < 6:
                return verdict(False, None, "bad plane index")
            d = abs(gen.objects[tgt].planes[pidx].signed_distance(p))
        return verdict(d <= cfg.m_max, d)
    if kind == "OnTopOf":
        bottom = float(src.world_bounds[0][2])
        if is_room:
            return verdict(abs(bottom) <= cfg.m_max, abs(bottom))
        par = gen.objects[tgt]
        gap = abs(bottom - float(par.world_bounds[1][2]))
        inside = point_rect_distance(src.world_center[:2], par.footprint) == 0.0
        return verdict(gap <= cfg.m_max and inside, gap)
    if kind == "AdjacentTo":
        if is_room:
            ok = geo.point_in_polygon(src.world_center[:2], gen.rooms[tgt].polygon)
            return verdict(ok, None)
        g = rect_gap(src.footprint, gen.objects[tgt].footprint)
        return verdict(g <= cfg.adjacent_gap, g)
    if kind == "AlignedWith":
        if is_room:
            ty = dominant_yaw(gen.rooms[tgt].polygon)
        else:
            ty = object_yaw(gen.objects[tgt])
        m = yaw_misalignment(object_yaw(src), ty)
        return verdict(m <= cfg.theta_max, m)
    log.warning("unsupported relation %s; counted unsatisfied", kind)
    return verdict(False, None, "unsupported")


def csr_rel(gen: SceneState, constraints: Iterable[Constraint], cfg: EvalConfig | None = None) -> tuple[float, list[Verdict]]:
    cfg = cfg or EvalConfig()
    verdicts = [check_constraint(gen, c, cfg) for c in constraints]
    if not verdicts:
        return 1.0, []
    return sum(v.satisfied for v in verdicts) / len(verdicts), verdicts


# ---------------------------------------------------------------------------
# physics
# ---------------------------------------------------------------------------


def physics_stats(state: SceneState, cfg: EvalConfig | None = None) -> tuple[int, int, int]:
    cfg = cfg or EvalConfig()
    hosts = assign_hosts(state)
    active = [oid for oid, o in state.objects.items() if o.active]
    n_ob = 0
    for oid in active:
        host = hosts.get(oid)
        if host is None:
            continue
        if geo.rect_outside_polygon_area(state.objects[oid].footprint, state.rooms[host].polygon) > cfg.overlap_tol:
            n_ob += 1
    n_cn = sum(
        1
        for a, b in collision_pairs(state, hosts)
        if geo.rect_overlap_area(state.objects[a].footprint, state.objects[b].footprint) > cfg.overlap_tol
    )
    return len(active), n_ob, n_cn


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def evaluate(
    ref: SceneState,
    gen: SceneState,
    constraints: Iterable[Constraint] | None = None,
    cfg: EvalConfig | None = None,
) -> EvalReport:
    """Full report; relation constraints default to those written in ``ref``."""
    cfg = cfg or EvalConfig()
    lf, per = layout_fidelity(ref, gen, cfg)
    cons = constraints_of(ref) if constraints is None else list(constraints)
    rel, verdicts = csr_rel(gen, cons, cfg)
    n_obj, n_ob, n_cn = physics_stats(gen, cfg)
    return EvalReport(
        lf=lf,
        per_category_iou=per,
        csr_count_strict=csr_count(ref, gen, "strict"),
        csr_count_soft=csr_count(ref, gen, "soft"),
        csr_rel=rel,
        per_relation=[asdict(v) for v in verdicts],
        n_obj=n_obj,
        n_ob=n_ob,
        n_cn=n_cn,
        layout_error=layout_error(ref, gen) if match_objects(ref, gen) else None,
    )


SUMMARY_FIELDS = ("scene", "lf", "csr_count_strict", "csr_count_soft", "csr_rel", "n_obj", "n_ob", "n_cn", "layout_error")


def summary_csv(reports: Mapping[str, EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for name in sorted(reports):
        r = reports[name]
        le = "" if r.layout_error is None else repr(r.layout_error)
        w.writerow([name, repr(r.lf), repr(r.csr_count_strict), repr(r.csr_count_soft), repr(r.csr_rel), r.n_obj, r.n_ob, r.n_cn, le])
    return buf.getvalue()
