"""Geometry for the optimized bedroom.

Post-placement refinement settles small gaps, the wall envelope is built as
one watertight solid, floors and ceilings get their presets, and each object
is matched against the bundled asset metadata.  Objects without a good match
get a procedural stand-in with the exact bounding box.
Run 02_optimize.py first.
"""

from _common import OUT, section

from idslkit import parse_idsl
from idslkit.scenegen import export_mtl, export_obj, export_svg, generate_scene

state = parse_idsl((OUT / "bedroom_s1.idsl.json").read_bytes())
out = generate_scene(state)

section("asset choices")
for oid, sel in sorted(out.selections.items()):
    how = "generated" if sel.generated else f"matched, score {sel.score:.3f}"
    print(f"  {oid:<16} {sel.asset.asset_name:<28} {how}")

section("meshes")
walls = out.meshes["walls"]
print(f"  walls: {len(walls.faces)} triangles, watertight {walls.is_watertight()}, volume {walls.volume():.3f} m^3")
for key in sorted(out.meshes):
    if key != "walls":
        m = out.meshes[key]
        print(f"  {key:<28} {len(m.faces):>4} triangles")
if out.refinement is not None:
    r = out.refinement
    print(f"  refinement: {r.iterations} steps ({r.reason}), collision {r.collision_before:.3g} -> {r.collision_after:.3g}")

(OUT / "bedroom.obj").write_bytes(export_obj(out.meshes, mtl_name="bedroom.mtl"))
(OUT / "bedroom.mtl").write_bytes(export_mtl(out.meshes))
(OUT / "bedroom.svg").write_bytes(export_svg(out.state))
print(f"\nwrote bedroom.obj, bedroom.mtl and bedroom.svg to {OUT}")
