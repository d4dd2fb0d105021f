"""From a sentence to a scene.

The rules parser reads the bundled bedroom description, builds an entity
graph (rooms, objects, relations) and turns it into an initial IDSL scene.
Every object starts at the room centre: placement is the optimizer's job.
"""

from importlib import resources

from _common import OUT, section

from idslkit import serialize_idsl, validate
from idslkit.text import graph_to_idsl, text_to_graph

prompt = resources.files("idslkit").joinpath("data/examples/bedroom.txt").read_text().strip()
section("prompt")
print(prompt)

graph = text_to_graph(prompt)
section("entity graph")
for n in graph.nodes:
    extra = f" ({', '.join(n.attributes)})" if n.attributes else ""
    print(f"  {n.kind:<6} {n.id}{extra}")
for e in graph.edges:
    where = f" wall plane {e.wall}" if e.wall is not None else ""
    print(f"  {e.source} --{e.relation_type}--> {e.target}{where}")

scene = graph_to_idsl(graph)
section("initial scene")
for label, room in scene.rooms.items():
    print(f"  {label}: {room.area:.2f} m^2, style {room.style}")
for oid, o in sorted(scene.objects.items()):
    x, y, _ = o.position_world
    print(f"  {oid:<16} at ({x:.2f}, {y:.2f})  size {tuple(round(v, 2) for v in o.local_bbox.size)}")
print(f"  validation issues: {len(validate(scene))}")

path = OUT / "bedroom_s0.idsl.json"
path.write_bytes(serialize_idsl(scene))
print(f"\nwrote {path}")
