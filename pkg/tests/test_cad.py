import json

import ezdxf
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from idslkit import cad, geometry as geo, idsl

LISTING_NEIGHBOURS = ((1, 8), (0, 2), (1, 3, 4), (2, 6), (2, 5), (4, 7), (3,), (5,), (0,))


def square(x0, y0, s):
    return [[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]


def plan(groups, units=1.0):
    return json.dumps({"units": units, "groups": groups})


def space(pts, label=None):
    return {"layer": "Space", "label": label, "polylines": [{"points": pts, "closed": True}]}


def opening(layer, center, along_x=True, width=0.9):
    cx, cy = center
    hw = width / 2
    pts = square(0, 0, 0)
    pts = (
        [[cx - hw, cy - 0.05], [cx + hw, cy - 0.05], [cx + hw, cy + 0.05], [cx - hw, cy + 0.05]]
        if along_x
        else [[cx - 0.05, cy - hw], [cx + 0.05, cy - hw], [cx + 0.05, cy + hw], [cx - 0.05, cy + hw]]
    )
    return {"layer": layer, "polylines": [{"points": pts, "closed": True}]}


def dxf_bytes(build, units=6) -> bytes:
    import io

    doc = ezdxf.new("R2000")
    doc.header["$INSUNITS"] = units
    build(doc.modelspace())
    buf = io.StringIO()
    doc.write(buf)
    return buf.getvalue().encode()


class TestLoad:
    def test_json_single_space(self):
        doc = cad.load_floorplan(plan([space(square(0, 0, 6))]), "json")
        assert len(doc.groups) == 1 and doc.groups[0].layer == "Space"

    def test_dxf_matches_json_twin(self):
        j = cad.load_floorplan((FIXTURES / "suite.plan.json").read_bytes(), "json")
        d = cad.load_floorplan((FIXTURES / "suite.dxf").read_bytes(), "dxf")

        def census(doc):
            out = []
            for g in doc.groups:
                pts = tuple(sorted(tuple(np.round(p, 9)) for pl in g.polylines for p in pl.points))
                out.append((g.layer, g.label, pts))
            return sorted(out, key=repr)

        assert census(j) == census(d)

    def test_dxf_square_on_space_layer(self):
        data = dxf_bytes(lambda m: m.add_lwpolyline(square(0, 0, 6), close=True, dxfattribs={"layer": "Space"}))
        doc = cad.load_floorplan(data, "dxf")
        twin = cad.load_floorplan(plan([space(square(0, 0, 6))]), "json")
        assert [g.polylines for g in doc.groups] == [g.polylines for g in twin.groups]

    def test_spline_warning(self, caplog):
        def build(m):
            m.add_lwpolyline(square(0, 0, 6), close=True, dxfattribs={"layer": "Space"})
            m.add_spline([(0, 0), (1, 1), (2, 0), (3, 1)], dxfattribs={"layer": "Space"})

        doc = cad.load_floorplan(dxf_bytes(build), "dxf")
        assert any("SPLINE" in w for w in doc.warnings)
        assert len(doc.groups) == 1

    def test_units_mm(self):
        data = dxf_bytes(
            lambda m: m.add_lwpolyline(square(0, 0, 6000), close=True, dxfattribs={"layer": "Space"}), units=4
        )
        doc = cad.load_floorplan(data, "dxf")
        assert doc.units == pytest.approx(1e-3)
        assert max(p[0] for p in doc.groups[0].polylines[0].points) == pytest.approx(6.0)

    def test_line_chain_becomes_room(self):
        def build(m):
            pts = square(0, 0, 4)
            for i in range(4):
                m.add_line(pts[i], pts[(i + 1) % 4], dxfattribs={"layer": "Space"})

        doc = cad.load_floorplan(dxf_bytes(build), "dxf")
        assert len(doc.groups) == 1 and doc.groups[0].polylines[0].closed

    def test_insert_block_door(self):
        def build_doc():
            import io

            doc = ezdxf.new("R2000")
            blk = doc.blocks.new("DOOR90")
            blk.add_lwpolyline([[-0.45, -0.05], [0.45, -0.05], [0.45, 0.05], [-0.45, 0.05]], close=True)
            m = doc.modelspace()
            m.add_lwpolyline(square(0, 0, 6), close=True, dxfattribs={"layer": "Space"})
            m.add_blockref("DOOR90", (3, 0), dxfattribs={"layer": "Door"})
            buf = io.StringIO()
            doc.write(buf)
            return buf.getvalue().encode()

        doc = cad.load_floorplan(build_doc(), "dxf")
        doors = [g for g in doc.groups if g.layer == "Door"]
        assert len(doors) == 1 and doors[0].label == "DOOR90"

    def test_unreadable(self):
        with pytest.raises(cad.CadError):
            cad.load_floorplan(b"this is not a dxf", "dxf")
        with pytest.raises(cad.CadError):
            cad.load_floorplan(b"{", "json")


class TestRooms:
    def test_counters(self):
        doc = cad.load_floorplan(plan([space(square(0, 0, 4), "Bedroom"), space(square(4, 0, 4), "Bedroom")]), "json")
        assert [r.room_id for r in cad.extract_rooms(doc)] == ["bedroom_0/0", "bedroom_0/1"]

    def test_unlabelled_fallback(self):
        doc = cad.load_floorplan(plan([space(square(0, 0, 4))]), "json")
        r = cad.extract_rooms(doc)[0]
        assert r.room_type == "space" and r.room_id == "space_0/0"

    def test_area(self):
        doc = cad.load_floorplan(plan([space(square(0, 0, 6), "Dining Room")]), "json")
        r = cad.extract_rooms(doc)[0]
        assert r.area == 36.0 and r.room_id == "dining-room_0/0"

    def test_degenerate(self):
        doc = cad.load_floorplan(plan([space([[0, 0], [1, 0], [2, 0]])]), "json")
        with pytest.raises(cad.CadError):
            cad.extract_rooms(doc)


def brute_wall_count(polys, tol=1e-9):
    """Atomic unit-grid edges, deduplicated, then merged along lines by owner set."""
    pieces = {}
    for k, p in enumerate(polys):
        for a, b in geo.polygon_edges(p):
            n = int(round(max(abs(b[0] - a[0]), abs(b[1] - a[1])) * 2))
            for i in range(n):
                s = a + (b - a) * i / n
                e = a + (b - a) * (i + 1) / n
                key = tuple(sorted((tuple(np.round(s, 6)), tuple(np.round(e, 6)))))
                pieces.setdefault(key, set()).add(k)
    # count maximal runs of collinear contiguous pieces with equal owners
    runs = 0
    seen = set()
    for key, owners in pieces.items():
        if key in seen:
            continue
        seen.add(key)
        runs += 1
        stack = [key]
        while stack:
            (a, b) = stack.pop()
            horiz = a[1] == b[1]
            for other, ow in pieces.items():
                if other in seen or ow != owners:
                    continue
                (c, d) = other
                if horiz and c[1] == d[1] == a[1] and (c == b or d == a):
                    seen.add(other)
                    stack.append(other)
                elif not horiz and c[0] == d[0] == a[0] and (c == b or d == a):
                    seen.add(other)
                    stack.append(other)
    return runs


class TestWalls:
    def test_single_square(self):
        r = idsl.make_room("bedroom_0/0", square(0, 0, 4))
        ws = cad.extract_walls([r])
        assert len(ws.walls) == 4 and ws.shared == []

    def test_two_abutting(self):
        rooms = [idsl.make_room("a_0/0", square(0, 0, 4)), idsl.make_room("b_0/0", square(4, 0, 4))]
        ws = cad.extract_walls(rooms)
        assert len(ws.walls) == 7 == brute_wall_count([r.polygon for r in rooms])
        assert len(ws.shared) == 1
        shared_wall = [w for w in ws.walls if len(w.rooms) == 2]
        assert len(shared_wall) == 1 and shared_wall[0].segment.length == 4.0

    @given(st.integers(1, 6), st.integers(-3, 6), st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_wall_count_matches_brute(self, w, dy, h):
        a = square(0, 0, 4)
        b = [[4, dy], [4 + w, dy], [4 + w, dy + h], [4, dy + h]]
        rooms = [idsl.make_room("a_0/0", a), idsl.make_room("b_0/0", b)]
        ws = cad.extract_walls(rooms)
        assert len(ws.walls) == brute_wall_count([r.polygon for r in rooms])
        # no two output walls overlap collinearly
        for i, wa in enumerate(ws.walls):
            for wb in ws.walls[i + 1 :]:
                assert not geo.shared_edges(
                    [wa.segment.a, wa.segment.b, wa.segment.a], [wb.segment.a, wb.segment.b, wb.segment.a]
                ) or wa.segment.length < 1e-3

    def test_suite_dining_living(self):
        doc = cad.load_floorplan((FIXTURES / "suite.plan.json").read_bytes(), "json")
        ws = cad.extract_walls(cad.extract_rooms(doc))
        pairs = {(a, b): s for a, b, s in ws.shared}
        seg = pairs[("living-room_0/0", "dining-room_0/0")]
        assert {seg.a, seg.b} == {(7.5, 1.5), (7.5, 7.5)}
        dining = next(r for r in ws.rooms if r.room_id == "dining-room_0/0")
        assert any(rel.target == "living-room_0/0" for rel in dining.relations)


def two_rooms_doc(extra_groups):
    return cad.load_floorplan(
        plan([space(square(0, 0, 4), "Bedroom"), space(square(4, 0, 4), "Kitchen")] + extra_groups), "json"
    )


def run(doc, max_snap=cad.DEFAULT_MAX_SNAP):
    rooms = cad.extract_rooms(doc)
    ws = cad.extract_walls(rooms)
    return ws, cad.attach_openings(doc, ws.rooms, ws, max_snap)


class TestOpenings:
    def test_snap(self):
        ws, ops = run(two_rooms_doc([opening("Door", (2.0, 0.02))]))
        (o,) = ops
        assert o.snapped_anchor == pytest.approx((2.0, 0.0))
        assert o.width == pytest.approx(0.9)
        assert geo.point_to_segment_distance(o.snapped_anchor, o.host_wall.a, o.host_wall.b) < 1e-6

    def test_between_rooms(self):
        _, (o,) = run(two_rooms_doc([opening("Door", (4.0, 2.0), along_x=False)]))
        assert set(o.adjacent_rooms) == {"bedroom_0/0", "kitchen_0/0"}

    def test_exterior_window(self):
        _, (o,) = run(two_rooms_doc([opening("Window", (2.0, 4.0), width=1.2)]))
        assert o.adjacent_rooms == ("bedroom_0/0",) and o.kind == "window"

    def test_too_far_dropped(self):
        doc = two_rooms_doc([opening("Door", (2.0, 1.0))])
        _, ops = run(doc)
        assert ops == [] and any("dropped" in w for w in doc.warnings)

    @given(st.floats(0.5, 7.5), st.floats(-0.25, 0.25), st.floats(0.5, 3.5))
    @settings(max_examples=60, deadline=None)
    def test_anchor_on_host_wall(self, x, off, y):
        doc = two_rooms_doc([opening("Door", (x, off)), opening("Window", (4 + off, y), along_x=False)])
        _, ops = run(doc)
        assert len(ops) == 2
        for o in ops:
            assert geo.point_to_segment_distance(o.snapped_anchor, o.host_wall.a, o.host_wall.b) < 1e-6


class TestToIdsl:
    def test_one_door(self):
        doc = two_rooms_doc([opening("Door", (4.0, 2.0), along_x=False)])
        ws, ops = run(doc)
        s = cad.to_idsl(ws.rooms, ws, ops)
        assert s.building.connectivity.neighbours == ((1,), (0,))
        assert idsl.validate(s) == []
        assert s.objects["door_0"].opening.rooms == ("bedroom_0/0", "kitchen_0/0")
        assert s.objects["door_0"].active is False

    def test_suite_matches_listing(self, listing):
        for name, fmt in (("suite.plan.json", "json"), ("suite.dxf", "dxf")):
            s = cad.parse_cad((FIXTURES / name).read_bytes(), fmt)
            c = s.building.connectivity
            assert c.neighbours == LISTING_NEIGHBOURS == listing.building.connectivity.neighbours
            assert c.rooms == listing.building.connectivity.rooms
            assert c.entrance == 0
            assert list(s.rooms) == list(listing.building.room_entities)
            for label, room in listing.rooms.items():
                assert s.rooms[label].area == room.area
            assert s.building.floor_outline == listing.building.floor_outline
            assert idsl.validate(s) == []

    def test_no_doors_uses_shared_edges(self):
        doc = cad.load_floorplan(
            plan(
                [
                    space(square(0, 0, 4), "Bedroom"),
                    space(square(4, 0, 4), "Kitchen"),
                    space(square(0, 4, 4), "Bathroom"),
                    space(square(10, 0, 2), "Office"),
                ]
            ),
            "json",
        )
        ws, ops = run(doc)
        s = cad.to_idsl(ws.rooms, ws, ops)
        labels = list(s.rooms)
        oracle = [set() for _ in labels]
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i != j and geo.shared_edges(s.rooms[a].polygon, s.rooms[b].polygon):
                    oracle[i].add(j)
        assert [set(r) for r in s.building.connectivity.neighbours] == oracle

    def test_output_passes_validate_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            groups = []
            for k in range(rng.integers(1, 5)):
                groups.append(space(square(float(4 * k), 0, 4), "Bedroom"))
            s = cad.parse_cad(plan(groups), "json")
            assert idsl.validate(s) == []
