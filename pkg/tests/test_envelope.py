import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idslkit import cad, scenes
from idslkit.geometry import polygon_area
from idslkit.idsl import Connectivity, OpeningSpec
from idslkit.scenegen import (
    Mesh,
    MeshBuilder,
    MeshError,
    PresetError,
    WallParams,
    carve_openings,
    generate_floor_ceiling,
    generate_walls,
    load_presets,
    validate_preset,
)

SQ6 = [(0, 0), (6, 0), (6, 6), (0, 6)]
L_ROOM = [(0, 0), (6, 0), (6, 3), (3, 3), (3, 6), (0, 6)]
H, T = 2.8, 0.1


def perimeter(poly):
    p = np.asarray(poly, float)
    return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())


def assert_closed(m: Mesh):
    m.check()
    assert m.open_edges() == []
    assert m.is_consistently_oriented()
    assert m.volume() > 0


# -- mesh core ----------------------------------------------------------------


def test_box_builder_is_closed_unit_volume():
    mb = MeshBuilder()
    mb.box((0, 0, 0), (1, 2, 3), "b")
    m = mb.build()
    assert_closed(m)
    assert m.volume() == pytest.approx(6.0, abs=1e-12)
    assert m.euler_characteristic() == 2


def test_mesh_check_rejects_bad_indices_and_degenerate_faces():
    with pytest.raises(MeshError, match="out of range"):
        Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]], ["x"]).check()
    with pytest.raises(MeshError, match="degenerate"):
        Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]], ["x"]).check()
    with pytest.raises(MeshError, match="tags"):
        Mesh([[0, 0, 0]], [[0, 0, 0]], [])


# -- walls --------------------------------------------------------------------


def test_single_room_is_closed_annulus():
    m = generate_walls([SQ6], ["bedroom_0/0"], {"height": H, "thickness": T})
    assert_closed(m)
    assert m.euler_characteristic() == 0  # one handle: a torus
    # band area of a closed polygon with mitred offsets is perimeter * t
    assert m.volume() == pytest.approx(perimeter(SQ6) * T * H, abs=1e-9)
    assert m.area("wall:bedroom_0/0|exterior") == pytest.approx(4 * (6 - T) * H, abs=1e-9)
    assert m.area("wall:exterior|bedroom_0/0") == pytest.approx(4 * (6 + T) * H, abs=1e-9)
    assert m.area("wall:top") == pytest.approx(perimeter(SQ6) * T, abs=1e-9)


def test_l_shaped_room_volume_matches_perimeter_oracle():
    m = generate_walls([L_ROOM], ["living-room_0/0"])
    assert_closed(m)
    assert m.volume() == pytest.approx(perimeter(L_ROOM) * T * H, abs=1e-9)


def test_shared_wall_emitted_once_with_both_labels():
    a, b = SQ6, [(6, 0), (12, 0), (12, 6), (6, 6)]
    m = generate_walls([a, b], Connectivity(("a_0/0", "b_0/0"), ((1,), (0,))))
    assert_closed(m)
    assert m.euler_characteristic() == -2
    ab, ba = m.area("wall:a_0/0|b_0/0"), m.area("wall:b_0/0|a_0/0")
    assert ab == pytest.approx((6 - T) * H, abs=1e-9)
    assert ba == pytest.approx((6 - T) * H, abs=1e-9)
    # the shared slab is counted once: outer rectangle minus the two room interiors
    assert m.area("wall:top") == pytest.approx((12 + T) * (6 + T) - 2 * (6 - T) ** 2, abs=1e-9)
    assert m.volume() == pytest.approx(m.area("wall:top") * H, abs=1e-9)
    assert not any(t.endswith("|exterior") and t.startswith("wall:exterior") for t in m.tags())


def test_t_junction_plan_is_watertight():
    rooms = [[(0, 0), (6, 0), (6, 4), (0, 4)], [(0, 4), (3, 4), (3, 8), (0, 8)], [(3, 4), (6, 4), (6, 8), (3, 8)]]
    m = generate_walls(rooms, ["a_0/0", "b_0/0", "c_0/0"])
    assert_closed(m)
    assert m.area("wall:b_0/0|c_0/0") == pytest.approx((4 - T) * H, abs=1e-9)


def test_degenerate_and_invalid_polygons_raise():
    with pytest.raises(MeshError, match="3 distinct"):
        generate_walls([[(0, 0), (1, 0)]])
    with pytest.raises(MeshError, match="self-intersecting"):
        generate_walls([[(0, 0), (2, 2), (2, 0), (0, 2)]])
    with pytest.raises(MeshError, match="overlap"):
        generate_walls([SQ6, [(3, 3), (9, 3), (9, 9), (3, 9)]])
    with pytest.raises(MeshError, match="labels"):
        generate_walls([SQ6], ["a", "b"])


def test_junction_sliver_reported_with_location():
    # rooms 0.105 apart leave a 5 mm slot between their bands
    a = [(0, 0), (4, 0), (4, 4), (0, 4)]
    b = [(4.105, 0.5), (8, 0.5), (8, 3.5), (4.105, 3.5)]
    with pytest.raises(MeshError, match=r"unresolved wall junction near \(4\.05"):
        generate_walls([a, b])
    # a wider gap is a legitimate exterior passage
    wide = [(4.3, 0.5), (8, 0.5), (8, 3.5), (4.3, 3.5)]
    assert generate_walls([a, wide], params=WallParams()).is_watertight()


def _plan_state(seed):
    return cad.parse_cad(scenes.random_plan_bytes(seed, l_shaped=seed % 2 == 0), "json")


@pytest.mark.parametrize("seed", range(20))
def test_random_plans_stay_watertight_after_carving(seed):
    st_ = _plan_state(seed)
    walls = generate_walls(list(st_.rooms.values()))
    assert_closed(walls)
    openings = [o for o in st_.objects.values() if o.opening is not None]
    assert openings
    carved = carve_openings(walls, openings)
    assert_closed(carved)
    for o in openings:
        assert carved.area(f"opening:{o.object_id}") > 0
    # every aperture removes width * height from each side of the wall
    removed = sum(o.opening.width * o.opening.height for o in openings)
    sides = lambda t: t.startswith("wall:") and "|" in t
    assert walls.area(sides) - carved.area(sides) == pytest.approx(2 * removed, abs=1e-6)


# -- openings -----------------------------------------------------------------


def door(anchor=(3, 0), width=0.9, height=2.1, sill=0.0, wall=((0, 0), (6, 0)), kind="door"):
    return OpeningSpec(kind, width, height, sill, wall, anchor, ("r_0/0",))


ROOM_WALLS = generate_walls([SQ6], ["r_0/0"])


@pytest.fixture
def room_walls():
    return ROOM_WALLS


def test_door_aperture_area_on_both_faces(room_walls):
    m = carve_openings(room_walls, [door()])
    assert_closed(m)
    for tag in ("wall:r_0/0|exterior", "wall:exterior|r_0/0"):
        assert room_walls.area(tag) - m.area(tag) == pytest.approx(0.9 * 2.1, abs=1e-6)
    # jambs and head line the aperture
    assert m.area("opening:door_0") == pytest.approx(2 * 2.1 * T + 0.9 * T, abs=1e-9)
    assert m.euler_characteristic() == 0


def test_window_adds_a_handle(room_walls):
    m = carve_openings(room_walls, [door(kind="window", width=1.2, height=1.2, sill=0.9, anchor=(3, 6), wall=((6, 6), (0, 6)))])
    assert_closed(m)
    assert m.euler_characteristic() == -2
    assert m.volume() == pytest.approx(room_walls.volume() - 1.2 * 1.2 * T, abs=1e-9)


def test_zero_openings_is_identity(room_walls):
    assert carve_openings(room_walls, []) is room_walls


def test_carving_accumulates(room_walls):
    once = carve_openings(carve_openings(room_walls, [door()]), [door(kind="window", anchor=(0, 3), wall=((0, 6), (0, 0)), sill=0.9, height=1.2)])
    both = carve_openings(room_walls, [door(), door(kind="window", anchor=(0, 3), wall=((0, 6), (0, 0)), sill=0.9, height=1.2)])
    assert_closed(once)
    assert once.volume() == pytest.approx(both.volume(), abs=1e-12)


@pytest.mark.parametrize(
    "openings, match",
    [
        ([door(), door(anchor=(3.5, 0))], "overlap"),
        ([door(anchor=(0.3, 0))], "exceeds the wall extents"),
        ([door(height=2.9)], "exceeds wall height"),
        ([door(anchor=(3, 2))], "no wall at anchor"),
        ([door(width=0.0)], "positive"),
    ],
)
def test_bad_openings_raise(room_walls, openings, match):
    with pytest.raises(MeshError, match=match):
        carve_openings(room_walls, openings)


def test_opening_across_t_junction_rejected():
    rooms = [[(0, 0), (6, 0), (6, 4), (0, 4)], [(0, 4), (3, 4), (3, 8), (0, 8)], [(3, 4), (6, 4), (6, 8), (3, 8)]]
    m = generate_walls(rooms, ["a_0/0", "b_0/0", "c_0/0"])
    with pytest.raises(MeshError, match="junction"):
        carve_openings(m, [door(anchor=(3, 4), wall=((0, 4), (6, 4)))])


def test_carve_requires_generated_walls():
    with pytest.raises(MeshError, match="generate_walls"):
        carve_openings(Mesh.empty(), [door()])


@settings(max_examples=25, deadline=None)
@given(
    w=st.floats(0.5, 1.6),
    h=st.floats(0.5, 2.2),
    s=st.floats(0.0, 0.5),
    c=st.floats(1.2, 4.8),
)
def test_any_fitting_opening_keeps_walls_closed(w, h, s, c):
    room_walls = ROOM_WALLS
    spec = door(anchor=(c, 0), width=w, height=h, sill=s)
    if c - w / 2 < 0.05 + T / 2 + 0.05 or c + w / 2 > 6 - 0.05 - T / 2 - 0.05:
        return
    m = carve_openings(room_walls, [spec])
    assert_closed(m)
    assert m.volume() == pytest.approx(room_walls.volume() - w * h * T, abs=1e-9)


# -- floors and ceilings --------------------------------------------------------


def test_floor_area_of_six_by_six_room():
    lib = load_presets()
    f, c = generate_floor_ceiling(SQ6, {"floor": lib.get("floor", "oak_plank"), "ceiling": lib.get("ceiling", "smooth_plaster")}, 2.8, "r_0/0")
    assert f.area() == pytest.approx(36.0, abs=1e-9)
    assert c.area() == pytest.approx(36.0, abs=1e-9)
    assert np.all(f.vertices[:, 2] == 0.0) and np.all(c.vertices[:, 2] == 2.8)
    assert np.allclose(f.face_normals(), [0, 0, 1]) and np.allclose(c.face_normals(), [0, 0, -1])
    assert set(f.face_tags) == {"floor:r_0/0:oak_plank"}
    assert f.attrs["uv"] == {"tile_width": 0.18, "tile_length": 1.2, "spacing": 0.002, "pattern": "offset_plank"}


def test_l_shaped_floor_area_equals_polygon_area():
    f, _ = generate_floor_ceiling(L_ROOM)
    assert f.area() == pytest.approx(polygon_area(L_ROOM), abs=1e-12)


def test_invalid_preset_key_is_named():
    lib = load_presets()
    with pytest.raises(PresetError, match="'tiles'"):
        generate_floor_ceiling(SQ6, {"tiles": lib.get("floor", "oak_plank")})
    with pytest.raises(PresetError, match="'ceiling'"):
        generate_floor_ceiling(SQ6, {"ceiling": lib.get("floor", "oak_plank")})


def test_non_simple_floor_rejected():
    with pytest.raises(MeshError, match="triangulate"):
        generate_floor_ceiling([(0, 0), (2, 2), (2, 0), (0, 2)])


# -- presets ------------------------------------------------------------------


def test_shipped_preset_counts():
    assert load_presets().counts() == {"wall2": 5, "floor": 10, "ceiling": 1, "door": 4, "window": 6}


def test_brick_and_door_presets_match_listing_values():
    lib = load_presets()
    brick = lib.get("wall2", "brick")
    assert brick.params["material"] == {"category": "wall2", "material": "PRESET1"}
    assert brick.params["wall2"]["draw_direction"] == "CCW"
    assert brick.finish() == {
        "finish_name": "brick",
        "tile_width": 0.20,
        "tile_length": 0.05,
        "spacing": 0.01,
        "mortar_depth": 0.01,
        "solidify": True,
        "thickness": 0.03,
        "pattern": "regular_tile",
    }
    d = lib.get("door", "single_door").params
    assert d == {
        "type": "single_door",
        "frame": {"width": 0.08, "depth": 0.04, "material": "Wood Oak"},
        "panel": {"style": "solid", "thickness": 0.035},
        "sill_height": 0.0,
        "hinge": "left",
        "swing_direction": "inward",
    }


def test_preset_validation_names_the_key():
    d = json.loads(json.dumps(load_presets().get("door", "single_door").params))
    d["colour"] = "red"
    with pytest.raises(PresetError, match="'colour' was unexpected"):
        validate_preset("door", d)
    del d["colour"]
    del d["hinge"]
    with pytest.raises(PresetError, match="'hinge' is a required property"):
        validate_preset("door", d)
    d["hinge"] = "left"
    d["frame"]["width"] = -0.08
    with pytest.raises(PresetError, match="frame/width"):
        validate_preset("door", d)
    with pytest.raises(PresetError, match="category"):
        validate_preset("roof", d)


def test_preset_library_rejects_unknown_directory(tmp_path):
    (tmp_path / "roof").mkdir()
    with pytest.raises(PresetError, match="roof"):
        load_presets(tmp_path)
    with pytest.raises(PresetError, match="does not exist"):
        load_presets(tmp_path / "nope")
    with pytest.raises(PresetError, match="no floor preset named 'x'"):
        load_presets().get("floor", "x")
