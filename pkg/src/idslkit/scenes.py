"""Seeded synthetic scenes and floor plans.

``random_room_scene`` builds a furnished single room with deliberately
overlapping initial placements (the optimizer's benchmark input);
``random_plan`` builds a multi-room floor-plan document in the native JSON
plan format, including L-shaped rooms and T-junction walls.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import geometry as geo
from .idsl import BuildingSpec, Connectivity, RelationSpec, SceneState, make_object, make_room
from .pose import quat_from_yaw

# category -> (width, depth, height, placed against a wall)
FURNITURE = {
    "bed": (2.0, 1.6, 0.5, True),
    "wardrobe": (1.2, 0.6, 2.0, True),
    "bookshelf": (0.9, 0.35, 1.8, True),
    "sofa": (2.0, 0.9, 0.85, True),
    "desk": (1.2, 0.6, 0.75, True),
    "dresser": (1.0, 0.5, 0.9, True),
    "tv_stand": (1.5, 0.45, 0.5, True),
    "nightstand": (0.5, 0.4, 0.55, False),
    "chair": (0.5, 0.5, 0.9, False),
    "armchair": (0.8, 0.8, 0.9, False),
    "table": (1.2, 0.8, 0.75, False),
    "coffee_table": (1.0, 0.6, 0.45, False),
    "plant": (0.4, 0.4, 1.2, False),
    "floor_lamp": (0.4, 0.4, 1.6, False),
    "ottoman": (0.5, 0.5, 0.45, False),
}
WALL_CATEGORIES = [c for c, v in FURNITURE.items() if v[3]]
FREE_CATEGORIES = [c for c, v in FURNITURE.items() if not v[3]]

# child face index for "back against the wall": the -y face (forward is +y)
BACK_FACE = 5


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def furniture_object(oid: str, category: str, x: float, y: float, yaw: float, relations=(), tags=()):
    w, d, h, _ = FURNITURE[category]
    return make_object(
        oid,
        category,
        position=(x, y, 0.0),
        quaternion=quat_from_yaw(yaw),
        local_center=(0.0, 0.0, h / 2),
        local_size=(w, d, h),
        semantic_tags=(f"Semantics({category})", *tags),
        relation_graph=relations,
    )


def single_room_building(label: str, polygon, building_id: str = "building_0") -> tuple[BuildingSpec, dict]:
    room = make_room(label, polygon, tags=("Semantics(RoomContour)",))
    lo = np.asarray(room.polygon).min(0) - 0.5
    hi = np.asarray(room.polygon).max(0) + 0.5
    outline = ((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1]), (lo[0], lo[1]))
    outline = tuple((float(x), float(y)) for x, y in outline)
    building = BuildingSpec(
        building_id=building_id,
        floor_outline=outline,
        scene_tags=("Semantics(building)",),
        room_entities=(label,),
        connectivity=Connectivity((label,), ((),), 0),
    )
    return building, {label: room}


def random_room_scene(seed: int, n_objects: int | None = None, spread: float = 0.6) -> SceneState:
    """One rectangular room with 8-15 pieces of furniture piled near the centre.

    Wall pieces carry a StableAgainst relation to a wall (walls are used in
    turn so no wall is over-subscribed); some free pieces get Near/Facing
    relations to a wall piece.
    """
    rng = _rng(seed)
    n = int(rng.integers(8, 16)) if n_objects is None else n_objects
    w = float(np.round(rng.uniform(5.0, 7.0), 2))
    d = float(np.round(rng.uniform(4.5, 6.0), 2))
    label = "living-room_0/0" if rng.random() < 0.5 else "bedroom_0/0"
    building, rooms = single_room_building(label, [(0, 0), (w, 0), (w, d), (0, d)])

    n_wall = min(int(rng.integers(2, 5)), n)
    cats = list(rng.choice(WALL_CATEGORIES, size=n_wall, replace=False))
    cats += list(rng.choice(FREE_CATEGORIES, size=n - n_wall))
    objects = {}
    anchors: list[str] = []
    load: dict[str, int] = {}
    for k, cat in enumerate(cats):
        oid = f"{cat}_{k}"
        x, y = rng.normal([w / 2, d / 2], spread)
        x = float(np.clip(x, 0.5, w - 0.5))
        y = float(np.clip(y, 0.5, d - 0.5))
        yaw = float(rng.uniform(-math.pi, math.pi))
        rels = []
        if k < n_wall:
            wall = 1 + k % 4
            rels.append(RelationSpec("StableAgainst", label, child_plane_idx=BACK_FACE, parent_plane_idx=wall, margin=0.05))
            anchors.append(oid)
        else:
            # at most two companions per wall piece keeps the Near rules packable
            free = [a for a in anchors if load.get(a, 0) < 2]
            if free and rng.random() < 0.6:
                a = free[int(rng.integers(len(free)))]
                load[a] = load.get(a, 0) + 1
                rels.append(RelationSpec("Near", a))
                if rng.random() < 0.5:
                    rels.append(RelationSpec("Facing", a))
        objects[oid] = furniture_object(oid, cat, x, y, yaw, rels)
    return SceneState(building, rooms, objects)


# ---------------------------------------------------------------------------
# floor plans
# ---------------------------------------------------------------------------

ROOM_NAMES = ["Living Room", "Bedroom", "Kitchen", "Bathroom", "Dining Room", "Study"]


def _rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def _symbol(center, along, width):
    cx, cy = center
    hw, ht = width / 2, 0.05
    if along == "x":
        return _rect(cx - hw, cy - ht, cx + hw, cy + ht)
    return _rect(cx - ht, cy - hw, cx + ht, cy + hw)


def plan_rooms(seed: int, l_shaped: bool | None = None) -> list[tuple[str, list[list[float]]]]:
    """Two rows of rooms; each row has its own wall cuts (T-junctions), and
    optionally the first two cells of row 0 plus the first cell of row 1
    merge into an L-shaped room."""
    rng = _rng(seed)
    if l_shaped is None:
        l_shaped = bool(rng.random() < 0.5)
    width = float(np.round(rng.uniform(9.0, 14.0), 1))
    ys = [0.0, float(np.round(rng.uniform(3.5, 5.0), 1))]
    ys.append(ys[1] + float(np.round(rng.uniform(3.0, 5.0), 1)))
    rows = []
    for r in range(2):
        n_cells = int(rng.integers(2, 4))
        cuts = np.sort(rng.uniform(0.2, 0.8, size=n_cells - 1)) * width
        xs = [0.0, *[float(np.round(c, 1)) for c in cuts], width]
        # keep cells at least 2.5 m wide
        for i in range(1, len(xs)):
            if xs[i] - xs[i - 1] < 2.5:
                xs[i] = min(xs[i - 1] + 2.5, width)
        xs = [x for i, x in enumerate(xs) if i == 0 or x > xs[i - 1] + 1e-9]
        if xs[-1] - xs[-2] < 2.5:
            xs.pop(-2)
        rows.append(xs)
    if l_shaped:
        # the L needs two cells in row 0 and a row-1 cut strictly inside row 0's second cell
        if len(rows[0]) < 3:
            rows[0] = [0.0, round(width / 2, 1), width]
        lo_x, hi_x = rows[0][1], rows[0][2]
        cut = round((lo_x + hi_x) / 2, 1) if hi_x - lo_x > 1.0 else lo_x
        rows[1] = [0.0, cut, *[x for x in rows[1][1:] if x > cut + 2.0]]
        if rows[1][-1] != width:
            rows[1].append(width)
        if rows[1][-1] - rows[1][-2] < 1.0:
            rows[1].pop(-2)

    names = iter(ROOM_NAMES * 4)
    out = []
    cells0 = list(zip(rows[0][:-1], rows[0][1:]))
    cells1 = list(zip(rows[1][:-1], rows[1][1:]))
    y0, y1, y2 = ys
    skip0, skip1 = set(), set()
    if l_shaped:
        (a0, _), (_, b1) = cells0[0], cells0[1]
        c1 = cells1[0][1]
        poly = [[a0, y0], [b1, y0], [b1, y1], [c1, y1], [c1, y2], [a0, y2]]
        out.append((next(names), poly))
        skip0, skip1 = {0, 1}, {0}
    for i, (a, b) in enumerate(cells0):
        if i not in skip0:
            out.append((next(names), _rect(a, y0, b, y1)))
    for i, (a, b) in enumerate(cells1):
        if i not in skip1:
            out.append((next(names), _rect(a, y1, b, y2)))
    return out


def random_plan(seed: int, l_shaped: bool | None = None, door_width: float = 0.9, window_width: float = 1.2) -> dict:
    """Floor-plan document (native JSON plan format) with doors between
    neighbouring rooms, one exterior door and a window per room where an
    exterior wall allows."""
    rooms = plan_rooms(seed, l_shaped)
    groups = [{"layer": "Space", "label": name, "polylines": [{"points": poly, "closed": True}]} for name, poly in rooms]
    polys = [np.asarray(p, dtype=float) for _, p in rooms]

    def opening(layer, seg, width):
        a, b = np.asarray(seg.a), np.asarray(seg.b)
        c = (a + b) / 2
        along = "x" if abs(b[1] - a[1]) < 1e-9 else "y"
        groups.append({"layer": layer, "label": None, "polylines": [{"points": _symbol(c, along, width), "closed": True}]})

    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            shared = [s for s in geo.shared_edges(polys[i], polys[j]) if s.length >= door_width + 0.4]
            if shared:
                opening("Door", max(shared, key=lambda s: s.length), door_width)

    # exterior walls: polygon edges not shared with any other room
    exterior_door = False
    for i, p in enumerate(polys):
        ext = []
        for a, b in geo.polygon_edges(p):
            seg = geo.Segment2D(tuple(a), tuple(b))
            if seg.length < window_width + 0.4:
                continue
            touching = any(
                geo.point_to_segment_distance((a + b) / 2, qa, qb) < 1e-6
                for j, q in enumerate(polys)
                if j != i
                for qa, qb in geo.polygon_edges(q)
            )
            if not touching:
                ext.append(seg)
        if not ext:
            continue
        longest = max(ext, key=lambda s: s.length)
        if not exterior_door:
            opening("Door", longest, door_width)
            exterior_door = True
            if len(ext) > 1:
                opening("Window", sorted(ext, key=lambda s: -s.length)[1], window_width)
        else:
            opening("Window", longest, window_width)
    return {"units": 1.0, "groups": groups}


def random_plan_bytes(seed: int, l_shaped: bool | None = None) -> bytes:
    return (json.dumps(random_plan(seed, l_shaped), indent=1) + "\n").encode()


def lamp_on_table_scene(gap: float = 0.05, room: str = "study_0/0") -> SceneState:
    """A desk against the north wall with a table lamp hovering ``gap`` above it.

    The lamp's OnTopOf relation (bottom face 0 on the desk's top face 1) is
    what post-placement refinement has to restore.
    """
    building, rooms = single_room_building(room, [(0.0, 0.0), (4.0, 0.0), (4.0, 3.5), (0.0, 3.5)])
    desk_h = FURNITURE["desk"][2]
    desk = furniture_object(
        "desk_0",
        "desk",
        2.0,
        3.5 - FURNITURE["desk"][1] / 2,
        math.pi,
        relations=(RelationSpec("StableAgainst", room, child_plane_idx=BACK_FACE, parent_plane_idx=3, margin=0.05),),
    )
    lamp = make_object(
        "table_lamp_0",
        "table_lamp",
        position=(2.3, 3.2, desk_h + gap),
        local_center=(0.0, 0.0, 0.225),
        local_size=(0.25, 0.25, 0.45),
        semantic_tags=("Semantics(table_lamp)",),
        relation_graph=(RelationSpec("OnTopOf", "desk_0", child_plane_idx=0, parent_plane_idx=1),),
    )
    return SceneState(building, rooms, {"desk_0": desk, "table_lamp_0": lamp})


# ---------------------------------------------------------------------------
# prompt / reference pairs
# ---------------------------------------------------------------------------

# room phrase -> (anchor, companions); companions are (category, phrase, relation)
PROMPT_ROOMS = {
    "bedroom": [
        ("bed", [("nightstand", "next to", "Near"), ("nightstand", "next to", "Near")]),
        ("wardrobe", []),
        ("dresser", [("plant", "near", "Near")]),
        ("desk", [("office_chair", "faces", "Facing")]),
    ],
    "living room": [
        ("sofa", [("coffee_table", "near", "Near"), ("armchair", "faces", "Facing"), ("side_table", "next to", "Near")]),
        ("tv_stand", []),
        ("bookshelf", [("floor_lamp", "near", "Near")]),
        ("sideboard", [("plant", "near", "Near")]),
    ],
    "office": [
        ("desk", [("office_chair", "faces", "Facing"), ("floor_lamp", "near", "Near")]),
        ("bookshelf", []),
        ("sideboard", [("plant", "near", "Near")]),
        ("sofa", [("side_table", "next to", "Near")]),
    ],
}
WALL_NAMES = ("south", "east", "north", "west")  # room wall planes 1..4 of a CCW rectangle
_ARTICLE = {True: "An", False: "A"}


def _noun(cat: str) -> str:
    return cat.replace("_", " ")


def _a(cat: str) -> str:
    return f"{_ARTICLE[_noun(cat)[0] in 'aeiou']} {_noun(cat)}"


def ablation_prompt(seed: int) -> str:
    """A short single-room description with wall anchors and companions."""
    rng = _rng(seed)
    room = list(PROMPT_ROOMS)[int(rng.integers(len(PROMPT_ROOMS)))]
    groups = PROMPT_ROOMS[room]
    n = int(rng.integers(2, len(groups) + 1))
    chosen = [groups[i] for i in sorted(rng.choice(len(groups), size=n, replace=False))]
    walls = list(rng.permutation(len(WALL_NAMES)))
    parts = [f"{_a(room)}."]
    for (anchor, comps), w in zip(chosen, walls):
        parts.append(f"The {_noun(anchor)} is against the {WALL_NAMES[w]} wall.")
        keep = comps[: int(rng.integers(0, len(comps) + 1))]
        i = 0
        while i < len(keep):
            cat, phrase, _ = keep[i]
            twin = i + 1 < len(keep) and keep[i + 1][0] == cat
            if twin:
                verb = "face" if phrase == "faces" else f"are {phrase}"
                parts.append(f"Two {_noun(cat)}s {verb} the {_noun(anchor)}.")
                i += 2
            else:
                verb = phrase if phrase == "faces" else f"is {phrase}"
                parts.append(f"{_a(cat)} {verb} the {_noun(anchor)}.")
                i += 1
    return " ".join(parts)


def _posed(obj, center_xy, yaw: float):
    """Pose ``obj`` so its footprint centre lands on ``center_xy``."""
    q = quat_from_yaw(yaw)
    z = float(obj.position_world[2])
    moved = obj.with_pose(position=(0.0, 0.0, z), quaternion=q)
    off = np.asarray(moved.world_center, float)
    return obj.with_pose(position=(float(center_xy[0] - off[0]), float(center_xy[1] - off[1]), z), quaternion=q)


def reference_layout(S0: SceneState, seed: int, tries: int = 400) -> SceneState:
    """A constructive layout satisfying every relation written in ``S0``.

    Wall anchors are pushed flush against their wall at a random offset along
    it; Near companions go beside the anchor (or in front when both sides are
    blocked); Facing companions stand in front, turned towards the anchor.
    Placements are retried until nothing overlaps or leaves the room.
    Serves as an independent reference for comparing pipelines.
    """
    from .metrics import EvalConfig, constraints_of, csr_rel, physics_stats
    from .idsl import room_planes

    rng = _rng(seed)
    (label,) = S0.rooms
    room = S0.rooms[label]
    planes = room_planes(room)
    anchors, companions = [], []
    for k in sorted(S0.objects):
        o = S0.objects[k]
        wall = [r for r in o.relation_graph if r.relation_type == "StableAgainst" and r.target_name == label and r.parent_plane_idx >= 1]
        (anchors if wall else companions).append((k, wall[0] if wall else None))
    cons = constraints_of(S0)
    cfg = EvalConfig()

    def size(o):
        return np.abs(np.asarray(o.local_bbox.size, float) * np.asarray(o.scale, float))

    for _ in range(tries):
        objs = dict(S0.objects)
        for k, rel in anchors:
            o = objs[k]
            p = planes[rel.parent_plane_idx]
            n, u = p.normal[:2], p.u[:2]
            half = p.half_extents[0]
            w, d = size(o)[:2]
            t = rng.uniform(-half + w / 2 + 0.05, half - w / 2 - 0.05) if half > w / 2 + 0.05 else 0.0
            c = p.point[:2] + u * t + n * (d / 2 + 0.02)
            objs[k] = _posed(o, c, math.atan2(-n[0], n[1]))
        for k, _ in companions:
            o = objs[k]
            rels = {r.relation_type: r.target_name for r in o.relation_graph}
            tgt = rels.get("Facing") or rels.get("Near")
            if tgt not in objs:
                continue
            a = objs[tgt]
            fwd = np.asarray(a.forward[:2], float)
            side = np.array([fwd[1], -fwd[0]])
            aw, ad = size(a)[:2]
            w, d = size(o)[:2]
            ac = np.asarray(a.world_center[:2], float)
            if "Facing" in rels:
                c = ac + fwd * (ad / 2 + d / 2 + rng.uniform(0.5, 1.0))
                yaw = math.atan2(fwd[0], -fwd[1])
            else:
                s = 1.0 if rng.random() < 0.5 else -1.0
                if rng.random() < 0.8:
                    c = ac + s * side * (aw / 2 + w / 2 + rng.uniform(0.05, 0.3)) + fwd * ((d - ad) / 2)
                else:
                    c = ac + fwd * (ad / 2 + d / 2 + rng.uniform(0.2, 0.6))
                yaw = math.atan2(-fwd[0], fwd[1])
            objs[k] = _posed(o, c, yaw)
        S = SceneState(S0.building, S0.rooms, objs, S0.extra)
        _, n_ob, n_cn = physics_stats(S, cfg)
        if n_ob == 0 and n_cn == 0 and csr_rel(S, cons, cfg)[0] == 1.0:
            return S
    raise ValueError(f"no collision-free reference layout for {label} after {tries} tries")
