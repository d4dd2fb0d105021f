"""Regenerate the 8-room suite floor plan (JSON and DXF twins).

Room rectangles complete the abridged example document; doors realise its
neighbour lists, one door opens to the exterior from the living room.
"""

import json
from pathlib import Path

import ezdxf

HERE = Path(__file__).parent

ROOMS = [
    ("Living Room", (7.5, 1.5, 15.5, 7.5)),
    ("Dining Room", (1.5, 1.5, 7.5, 7.5)),
    ("Kitchen", (1.5, 7.5, 7.5, 11.5)),
    ("Bedroom", (7.5, 7.5, 11.5, 11.5)),
    ("Bedroom", (1.5, 11.5, 7.5, 15.5)),
    ("Bathroom", (1.5, 15.5, 7.5, 18.5)),
    ("Bathroom", (11.5, 7.5, 15.5, 11.5)),
    ("Bedroom", (7.5, 11.5, 15.5, 18.5)),
]
# (layer, center, along-x?) with symbol 0.9 x 0.1 (doors) or 1.2 x 0.1 (windows)
OPENINGS = [
    ("Door", (7.5, 4.5), False),
    ("Door", (4.5, 7.5), True),
    ("Door", (7.5, 9.5), False),
    ("Door", (4.5, 11.5), True),
    ("Door", (11.5, 9.5), False),
    ("Door", (4.5, 15.5), True),
    ("Door", (7.5, 17.0), False),
    ("Door", (11.5, 1.5), True),
    ("Window", (11.5, 18.5), True),
    ("Window", (15.5, 4.5), False),
]
FURNITURE = [("Bed", (8.0, 9.0, 10.0, 10.6))]


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def symbol(center, along_x, width):
    cx, cy = center
    hw, ht = width / 2, 0.05
    return rect(cx - hw, cy - ht, cx + hw, cy + ht) if along_x else rect(cx - ht, cy - hw, cx + ht, cy + hw)


def main():
    groups = [{"layer": "Space", "label": lab, "polylines": [{"points": rect(*r), "closed": True}]} for lab, r in ROOMS]
    for layer, c, ax in OPENINGS:
        w = 0.9 if layer == "Door" else 1.2
        groups.append({"layer": layer, "label": None, "polylines": [{"points": symbol(c, ax, w), "closed": True}]})
    for lab, r in FURNITURE:
        groups.append({"layer": "Furniture", "label": lab, "polylines": [{"points": rect(*r), "closed": True}]})
    (HERE / "suite.plan.json").write_text(json.dumps({"units": 1.0, "groups": groups}, indent=1) + "\n")

    doc = ezdxf.new("R2000")
    doc.header["$INSUNITS"] = 6
    msp = doc.modelspace()
    for lab, r in ROOMS:
        msp.add_lwpolyline(rect(*r), close=True, dxfattribs={"layer": "A-SPACE"})
        msp.add_text(lab, dxfattribs={"layer": "A-SPACE-LABEL", "insert": ((r[0] + r[2]) / 2, (r[1] + r[3]) / 2)})
    for layer, c, ax in OPENINGS:
        w = 0.9 if layer == "Door" else 1.2
        msp.add_lwpolyline(symbol(c, ax, w), close=True, dxfattribs={"layer": f"A-{layer.upper()}"})
    for lab, r in FURNITURE:
        msp.add_lwpolyline(rect(*r), close=True, dxfattribs={"layer": "A-FURN"})
        msp.add_text(lab, dxfattribs={"layer": "A-FURN", "insert": ((r[0] + r[2]) / 2, (r[1] + r[3]) / 2)})
    msp.add_spline([(0, 0), (1, 1), (2, 0), (3, 1)], dxfattribs={"layer": "A-SPACE"})
    doc.saveas(HERE / "suite.dxf")


if __name__ == "__main__":
    main()
