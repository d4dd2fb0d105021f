"""Starting from a floor plan instead of text.

A seeded multi-room plan (with an L-shaped room and doors between rooms) is
read by the CAD parser.  Shared walls and door/window anchors come out of the
plan, and the wall solid is carved with one aperture per opening.
"""

from _common import OUT, section

from idslkit.cad import parse_cad
from idslkit.scenegen import carve_openings, export_obj, export_svg, generate_walls
from idslkit.scenes import random_plan_bytes

state = parse_cad(random_plan_bytes(6, l_shaped=True), "json")

section("rooms")
for label, room in state.rooms.items():
    shared = ", ".join(sorted({r.target for r in room.relations})) or "-"
    print(f"  {label:<18} {room.area:6.2f} m^2  {len(room.polygon)} corners  shares walls with {shared}")

openings = [o for _, o in sorted(state.objects.items()) if o.opening is not None]
section("openings")
for o in openings:
    op = o.opening
    where = f"between {' and '.join(op.rooms)}" if len(op.rooms) == 2 else f"outer wall of {op.rooms[0]}"
    print(f"  {o.object_id:<10} {op.kind:<6} {op.width:.2f} m wide, {where}")

walls = generate_walls([state.rooms[k] for k in sorted(state.rooms)])
carved = carve_openings(walls, openings)
section("walls")
print(f"  solid walls: {walls.volume():.3f} m^3; after carving {carved.volume():.3f} m^3")
print(f"  watertight {carved.is_watertight()}, consistently oriented {carved.is_consistently_oriented()}")

(OUT / "plan.obj").write_bytes(export_obj({"walls": carved}, mtl_name=None))
(OUT / "plan.svg").write_bytes(export_svg(state))
print(f"\nwrote plan.obj and plan.svg to {OUT}")
