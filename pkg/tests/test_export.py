import xml.etree.ElementTree as ET

import numpy as np
import pytest

from idslkit.idsl import SceneState
from idslkit.scenegen import (
    GenerateConfig,
    Mesh,
    MeshBuilder,
    MeshError,
    export_mtl,
    export_obj,
    export_svg,
    generate_scene,
    generate_walls,
    load_presets,
    read_obj,
)
from idslkit.scenes import lamp_on_table_scene

SVG = "{http://www.w3.org/2000/svg}"


def _cube() -> Mesh:
    b = MeshBuilder()
    b.box((0, 0, 0), (1, 2, 3), "box")
    return b.build()


def test_obj_round_trip_counts_and_coordinates():
    walls = generate_walls([np.array([(0, 0), (6, 0), (6, 6), (0, 6)], float)], ["bedroom"])
    meshes = {"walls": walls, "cube": _cube()}
    v, f, tags = read_obj(export_obj(meshes))
    assert len(v) == len(walls.vertices) + 8
    assert len(f) == len(walls.faces) + 12
    assert np.allclose(v[: len(walls.vertices)], walls.vertices, atol=5e-7)
    assert np.array_equal(f[: len(walls.faces)], walls.faces[np.argsort([walls.tags().index(t) for t in walls.face_tags], kind="stable")])
    assert set(tags) >= {"wall:top", "wall:bottom"}


def test_obj_is_deterministic_and_has_no_negative_zero():
    a = export_obj({"cube": _cube().transformed(np.diag([-1.0, 1, 1]), np.zeros(3))})
    assert a == export_obj({"cube": _cube().transformed(np.diag([-1.0, 1, 1]), np.zeros(3))})
    assert b"-0.000000" not in a


def test_mtl_lists_every_tag_once():
    text = export_mtl({"cube": _cube(), "again": _cube()}).decode()
    assert text.count("newmtl box") == 1


def test_empty_scene_svg_shows_outline_only(listing):
    empty = SceneState(listing.building, {}, {})
    root = ET.fromstring(export_svg(empty))
    assert len(root.findall(f"{SVG}polygon[@class='building']")) == 1
    assert not root.findall(f"{SVG}polygon[@class='room']")
    assert not root.findall(f"{SVG}polygon[@class='object']")


def test_listing_svg_has_every_room(listing):
    data = export_svg(listing)
    root = ET.fromstring(data)
    rooms = root.findall(f"{SVG}polygon[@class='room']")
    assert len(rooms) == len(listing.rooms) == 8
    assert sorted(r.get("data-room") for r in rooms) == sorted(listing.rooms)
    doors = root.findall(f"{SVG}g[@class='door']")
    assert len(doors) == sum(o.opening is not None and o.opening.kind == "door" for o in listing.objects.values())
    assert data == export_svg(listing)


def test_generate_scene_lamp_fixture():
    out = generate_scene(lamp_on_table_scene(0.05), load_presets())
    assert out.refinement is not None and out.refinement.collision_after == 0
    assert out.meshes["walls"].is_watertight()
    assert {"object:desk_0", "object:table_lamp_0", "floor:study_0/0", "ceiling:study_0/0"} <= set(out.meshes)
    lamp = out.state.objects["table_lamp_0"]
    lo, hi = out.meshes["object:table_lamp_0"].bounds()
    assert np.allclose(lo, lamp.world_bounds[0], atol=1e-9)
    assert np.allclose(hi, lamp.world_bounds[1], atol=1e-9)
    assert out.summary()["walls_watertight"] is True


def test_generate_scene_listing_is_reproducible(listing):
    cfg = GenerateConfig(refine=None)
    a = generate_scene(listing, cfg=cfg)
    b = generate_scene(listing, cfg=cfg)
    assert export_obj(a.meshes) == export_obj(b.meshes)
    assert a.meshes["walls"].is_watertight()
    # the bundled corpus has no chair, so the listing's chair is generated
    assert a.selections["Chair_139218"].generated
    assert a.meshes["object:Chair_139218"].attrs["shape"] == "slab_with_back"


def test_export_rejects_broken_mesh():
    bad = Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]]), ["x"])
    with pytest.raises(MeshError):
        export_obj(bad)
