import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from strategies import quaternions, scenes

from idslkit import geometry as geo
from idslkit import idsl
from idslkit.idsl import (
    IDSLSchemaError,
    IDSLSyntaxError,
    UnknownRelationError,
    derive_world_geometry,
    parse_idsl,
    resolve_path,
    serialize_idsl,
    validate,
)


def perturbed(listing_bytes, edit):
    doc = json.loads(listing_bytes)
    edit(doc)
    return json.dumps(doc).encode()


class TestParse:
    def test_listing_values(self, listing):
        dining = listing.rooms["dining-room_0/0"]
        assert dining.area == 36.0
        assert dining.room_type == "dining-room"
        seg = dining.relations[0].segment
        assert (seg.a, seg.b) == ((7.5, 1.5), (7.5, 7.5))
        assert len(listing.building.room_entities) == 8
        chair = listing.objects["Chair_139218"]
        assert chair.relation_graph[0].relation_type == "StableAgainst"
        assert chair.relation_graph[0].check_z is True
        assert listing.building.connectivity.entrance == 0

    def test_empty_scene(self):
        doc = {
            "building": {"building_id": "b", "floor_outline": [[0, 0], [1, 0], [1, 1], [0, 1]]},
            "rooms": {},
            "objs": {},
        }
        s = parse_idsl(json.dumps(doc))
        assert s.rooms == {} and s.objects == {}

    def test_syntax_error_has_position(self):
        with pytest.raises(IDSLSyntaxError) as ei:
            parse_idsl(b'{"building": {\n  "x": ,}}')
        assert ei.value.lineno == 2 and ei.value.colno > 0

    def test_nan_rejected(self):
        with pytest.raises(IDSLSyntaxError):
            parse_idsl(b'{"a": NaN}')

    def test_scaled_quaternion(self, listing_bytes):
        def edit(d):
            q = d["objs"]["Chair_139218"]["rotation_quaternion"]
            d["objs"]["Chair_139218"]["rotation_quaternion"] = [2 * v for v in q]

        with pytest.raises(IDSLSchemaError) as ei:
            parse_idsl(perturbed(listing_bytes, edit))
        assert [i.path for i in ei.value.issues] == ["objs/Chair_139218/rotation_quaternion"]

    def test_unknown_relation_type(self, listing_bytes):
        def edit(d):
            d["objs"]["Chair_139218"]["relation_graph"][0]["relation"]["relation_type"] = "Hovering"

        with pytest.raises(UnknownRelationError):
            parse_idsl(perturbed(listing_bytes, edit))

    def test_schema_type_error(self, listing_bytes):
        def edit(d):
            d["rooms"]["dining-room_0/0"]["area"] = "big"

        with pytest.raises(IDSLSchemaError) as ei:
            parse_idsl(perturbed(listing_bytes, edit))
        assert ei.value.issues[0].path == "rooms/dining-room_0/0/area"

    def test_multi_segment_value_rejected(self, listing_bytes):
        def edit(d):
            d["rooms"]["dining-room_0/0"]["relations"][0]["value"] = "MULTILINESTRING ((0 0, 1 1), (2 2, 3 3))"

        with pytest.raises(IDSLSchemaError):
            parse_idsl(perturbed(listing_bytes, edit))

    def test_unknown_fields_preserved(self, listing_bytes):
        def edit(d):
            d["top_level_note"] = {"a": 1}
            d["rooms"]["kitchen_0/0"]["floor_material"] = "tile"
            d["objs"]["Chair_139218"]["asset_hint"] = [1, 2]
            d["objs"]["Chair_139218"]["relation_graph"][0]["relation"]["weight"] = 3.0

        s = parse_idsl(perturbed(listing_bytes, edit))
        out = json.loads(serialize_idsl(s))
        assert out["top_level_note"] == {"a": 1}
        assert out["rooms"]["kitchen_0/0"]["floor_material"] == "tile"
        assert out["objs"]["Chair_139218"]["asset_hint"] == [1, 2]
        assert s.objects["Chair_139218"].relation_graph[0].weight == 3.0

    def test_missing_derived_fields_filled(self):
        doc = {
            "building": {"building_id": "b", "floor_outline": [[0, 0], [4, 0], [4, 4], [0, 4]]},
            "rooms": {"bedroom_0/0": {"polygon_coords": [[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]]}},
            "objs": {
                "bed_0": {
                    "category": "bed",
                    "position_world": [2, 2, 0.25],
                    "rotation_quaternion": [1, 0, 0, 0],
                    "local_bbox": {"center": [0, 0, 0], "size": [2, 1.6, 0.5]},
                }
            },
        }
        s = parse_idsl(json.dumps(doc))
        assert s.rooms["bedroom_0/0"].area == 16.0
        assert s.objects["bed_0"].bounding_box.min == (1.0, 1.2, 0.0)
        assert validate(s) == []


class TestRoundTrip:
    def test_listing(self, listing, listing_bytes):
        once = serialize_idsl(listing)
        again = parse_idsl(once)
        assert again == listing
        assert serialize_idsl(again) == once

    def test_listing_semantic_equality_with_source(self, listing, listing_bytes):
        src = json.loads(listing_bytes)
        out = json.loads(serialize_idsl(listing))
        chair_src, chair_out = src["objs"]["Chair_139218"], out["objs"]["Chair_139218"]
        for key in chair_src:
            assert chair_out[key] == chair_src[key], key
        assert out["building"] == src["building"]

    def test_empty_canonical(self):
        b = idsl.BuildingSpec("b", ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
        s = idsl.SceneState(b)
        out = serialize_idsl(s)
        assert json.loads(out) == {
            "building": {
                "building_id": "b",
                "floor_outline": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                "relations": [],
                "room_entities": [],
                "scene_tags": [],
            },
            "objs": {},
            "rooms": {},
        }
        assert parse_idsl(out) == s

    @given(scenes())
    @settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    def test_random_scenes(self, s):
        assert validate(s) == []
        b = serialize_idsl(s)
        s2 = parse_idsl(b)
        assert s2 == s
        assert serialize_idsl(s2) == b


class TestValidate:
    def test_listing_clean(self, listing):
        assert validate(listing) == []

    def test_wrong_area(self, listing, listing_bytes):
        from dataclasses import replace

        rooms = dict(listing.rooms)
        rooms["dining-room_0/0"] = replace(rooms["dining-room_0/0"], area=35.0)
        issues = validate(replace(listing, rooms=rooms))
        assert len(issues) == 1
        assert issues[0].path == "rooms/dining-room_0/0/area"
        assert resolve_path(json.loads(listing_bytes), issues[0].path) == 36.0

    def test_asymmetric_connectivity(self, listing):
        from dataclasses import replace

        c = listing.building.connectivity
        nb = list(c.neighbours)
        nb[6] = ()  # bathroom_0/1 drops bedroom_0/0, which still lists it
        b = replace(listing.building, connectivity=replace(c, neighbours=tuple(nb)))
        issues = validate(replace(listing, building=b))
        assert len(issues) == 1 and issues[0].path == "building/relations/0/neighbours/3"

    def test_each_invariant_single_issue(self, listing, listing_bytes):
        from dataclasses import replace

        chair = listing.objects["Chair_139218"]
        cases = {
            "objs/Chair_139218/rotation_axis": replace(chair, rotation_axis=(0.0, 0.0, 2.0)),
            "objs/Chair_139218/bounding_box": replace(
                chair, bounding_box=replace(chair.bounding_box, center=(0.0, 0.0, 0.0))
            ),
            "objs/Chair_139218/bbox_corners": replace(chair, bbox_corners=tuple((0.0, 0.0, 0.0) for _ in range(8))),
            "objs/Chair_139218/relation_graph/0/target_name": replace(
                chair, relation_graph=(replace(chair.relation_graph[0], target_name="nowhere"),)
            ),
            "objs/Chair_139218/relation_graph/0/child_plane_idx": replace(
                chair, relation_graph=(replace(chair.relation_graph[0], child_plane_idx=-1),)
            ),
        }
        doc = json.loads(listing_bytes)
        for path, obj in cases.items():
            issues = validate(listing.with_objects({obj.object_id: obj}))
            assert [i.path for i in issues] == [path]
            resolve_path(doc, path)

    def test_bad_label_and_shared_edge(self, listing):
        from dataclasses import replace

        rooms = dict(listing.rooms)
        dining = rooms["dining-room_0/0"]
        off = idsl.RoomRelation("SharedEdge", "living-room_0/0", geo.Segment2D((9.0, 1.5), (9.0, 7.5)))
        rooms["dining-room_0/0"] = replace(dining, relations=(off,))
        issues = validate(replace(listing, rooms=rooms))
        assert [i.path for i in issues] == ["rooms/dining-room_0/0/relations/0"]
        rooms = {"Dining Room": dining}
        b = replace(listing.building, room_entities=(), connectivity=None)
        issues = validate(replace(listing, building=b, rooms=rooms, objects={}))
        assert [i.path for i in issues] == ["rooms/Dining Room"]

    def test_soundness_direct(self, listing):
        # the invariants, evaluated directly, hold on a clean scene
        for r in listing.rooms.values():
            assert abs(r.area - geo.polygon_area(r.polygon_coords)) <= 1e-6 * r.area
            for rel in r.relations:
                assert geo.segment_on_boundary(rel.segment, r.polygon_coords)
        for o in listing.objects.values():
            assert abs(np.linalg.norm(o.rotation_quaternion) - 1) <= 1e-6


class TestWorldGeometry:
    def test_chair_footprint(self, listing):
        g = derive_world_geometry(listing.objects["Chair_139218"])
        assert g.footprint == pytest.approx((2.5484, 3.0552, 3.4271, 3.9339), abs=1e-4)
        assert len(g.planes) == 6
        assert np.allclose(g.planes[0].normal, (0, 0, -1), atol=1e-4)

    def test_identity_unit_box(self):
        o = idsl.make_object("b", "box", (0, 0, 0))
        g = derive_world_geometry(o)
        assert np.array_equal(g.world_bbox[0], [-0.5] * 3) and np.array_equal(g.world_bbox[1], [0.5] * 3)
        assert g.footprint == (-0.5, -0.5, 0.5, 0.5)

    def test_degenerate(self):
        o = idsl.make_object("b", "box", (0, 0, 0), local_size=(1, 0, 1))
        with pytest.raises(geo.GeometryError):
            derive_world_geometry(o)

    @given(
        quaternions(),
        st.tuples(*[st.floats(-5, 5)] * 3),
        st.tuples(*[st.floats(0.1, 3)] * 3),
        st.tuples(*[st.floats(0.1, 3)] * 3),
    )
    @settings(max_examples=100, deadline=None)
    def test_random_pose_corners(self, q, p, s, size):
        o = idsl.make_object("b", "box", p, q, s, (0.1, -0.2, 0.3), size)
        g = derive_world_geometry(o)
        T = np.asarray(o.transform_matrix)
        corners = np.array([T @ np.r_[c, 1.0] for c in geo.box_corners((0.1, -0.2, 0.3), size)])[:, :3]
        assert np.allclose(corners.min(0), g.world_bbox[0], atol=1e-6)
        assert np.allclose(corners.max(0), g.world_bbox[1], atol=1e-6)
        assert g.footprint == (g.world_bbox[0][0], g.world_bbox[0][1], g.world_bbox[1][0], g.world_bbox[1][1])
        for pl in g.planes:
            # every face is tangent to the box: all corners lie on its inner side
            d = (corners - pl.point) @ pl.normal
            assert d.max() <= 1e-9 and d.min() < -1e-6

    def test_room_planes(self, listing):
        planes = idsl.room_planes(listing.rooms["dining-room_0/0"])
        assert len(planes) == 5
        assert np.allclose(planes[1].normal, (0, 1, 0))  # first wall y=1.5, normal into the room
        assert np.allclose(planes[1].point[:2], (4.5, 1.5))
