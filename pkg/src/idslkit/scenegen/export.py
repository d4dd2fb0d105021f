"""Deterministic OBJ/MTL and top-down SVG writers."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Mapping
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from ..geometry import polygon_centroid
from ..idsl import SceneState
from .mesh import Mesh, MeshError

_MTL_SAFE = re.compile(r"[^A-Za-z0-9_.:\-]")


def material_name(tag: str) -> str:
    return _MTL_SAFE.sub("_", tag) or "default"


def _colour(key: str) -> tuple[float, float, float]:
    """Stable pastel colour for a key (independent of hash seeding)."""
    h = hashlib.sha256(key.encode()).digest()
    return tuple(0.35 + 0.55 * b / 255 for b in h[:3])


def _named(meshes) -> list[tuple[str, Mesh]]:
    if isinstance(meshes, Mesh):
        return [("mesh", meshes)]
    if isinstance(meshes, Mapping):
        return list(meshes.items())
    return [(f"mesh_{i}", m) for i, m in enumerate(meshes)]


def _f(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def export_obj(meshes, mtl_name: str | None = "scene.mtl") -> bytes:
    """Wavefront OBJ; each mesh is an object, faces grouped by face tag."""
    lines = ["# idslkit scene export"]
    if mtl_name:
        lines.append(f"mtllib {mtl_name}")
    base = 1
    for name, m in _named(meshes):
        m.check()
        lines.append(f"o {material_name(name)}")
        lines.extend(f"v {_f(x)} {_f(y)} {_f(z)}" for x, y, z in m.vertices)
        order = {t: i for i, t in enumerate(m.tags())}
        faces = sorted(range(len(m.faces)), key=lambda i: (order[m.face_tags[i]], i))
        current = None
        for i in faces:
            t = m.face_tags[i]
            if t != current:
                lines.append(f"g {material_name(t)}")
                lines.append(f"usemtl {material_name(t)}")
                current = t
            a, b, c = (int(k) + base for k in m.faces[i])
            lines.append(f"f {a} {b} {c}")
        base += len(m.vertices)
    return ("\n".join(lines) + "\n").encode()


def export_mtl(meshes) -> bytes:
    names = sorted({material_name(t) for _, m in _named(meshes) for t in m.face_tags})
    out = ["# idslkit materials"]
    for n in names:
        r, g, b = _colour(n)
        out += [f"newmtl {n}", f"Kd {r:.4f} {g:.4f} {b:.4f}", "Ka 0.0000 0.0000 0.0000", "d 1.0", ""]
    return "\n".join(out).encode()


def read_obj(data: bytes | str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Minimal OBJ reader (v/f/usemtl) for round-trip checks."""
    text = data.decode() if isinstance(data, bytes) else data
    verts, faces, tags = [], [], []
    mtl = "default"
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
                tags.append(mtl)
        elif parts[0] == "usemtl":
            mtl = parts[1]
    v = np.array(verts, float).reshape(-1, 3)
    f = np.array(faces, np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise MeshError("OBJ face index out of range")
    return v, f, tags


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvgStyle:
    px_per_m: float = 50.0
    pad: float = 20.0
    stroke: float = 1.5
    room_fill: str = "#f7f5f0"
    outline: str = "#888888"
    font_size: float = 10.0
    labels: bool = True
    palette: dict = field(default_factory=dict)  # category -> css colour

    def colour(self, category: str) -> str:
        if category in self.palette:
            return self.palette[category]
        r, g, b = _colour(category)
        return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def _extent(state: SceneState) -> tuple[np.ndarray, np.ndarray]:
    pts = [np.asarray(state.building.floor_outline, float).reshape(-1, 2)]
    pts += [r.polygon for r in state.rooms.values()]
    pts += [o.world_corners[:, :2] for o in state.objects.values()]
    pts = [p for p in pts if len(p)]
    if not pts:
        return np.zeros(2), np.ones(2)
    allp = np.concatenate(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    return lo, np.maximum(hi, lo + 1e-9)


def export_svg(state: SceneState, style: SvgStyle | None = None) -> bytes:
    """Top-down plan: building outline, rooms, footprints, openings."""
    st = style or SvgStyle()
    lo, hi = _extent(state)
    s = st.px_per_m
    W = (hi[0] - lo[0]) * s + 2 * st.pad
    H = (hi[1] - lo[1]) * s + 2 * st.pad

    def xy(x, y) -> tuple[str, str]:
        return f"{(x - lo[0]) * s + st.pad:.2f}", f"{(hi[1] - y) * s + st.pad:.2f}"

    def path(poly):
        return " ".join(",".join(xy(x, y)) for x, y in poly)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.2f}" height="{H:.2f}" viewBox="0 0 {W:.2f} {H:.2f}">',
        f"<title>{escape(state.building.building_id)}</title>",
    ]
    outline = [tuple(p) for p in state.building.floor_outline]
    if len(outline) >= 3:
        out.append(f'<polygon class="building" points="{path(outline)}" fill="none" stroke="{st.outline}" stroke-dasharray="6 4" stroke-width="{st.stroke:.2f}"/>')
    for label in sorted(state.rooms):
        r = state.rooms[label]
        out.append(
            f'<polygon class="room" data-room={quoteattr(label)} points="{path(r.polygon)}" fill="{st.room_fill}" stroke="#333333" stroke-width="{2 * st.stroke:.2f}"/>'
        )
    objs = [state.objects[k] for k in sorted(state.objects)]
    # larger pieces first so small ones stay visible
    furniture = sorted((o for o in objs if o.active and o.opening is None), key=lambda o: (-np.prod(o.local_bbox.size[:2]), o.object_id))
    for o in furniture:
        c = o.world_corners
        bottom = c[[0, 2, 6, 4]][:, :2]  # corner order (x,y,z) signs: -- -+ ++ +-
        out.append(
            f'<polygon class="object" data-id={quoteattr(o.object_id)} data-category={quoteattr(o.category)} points="{path(bottom)}" '
            f'fill="{st.colour(o.category)}" fill-opacity="0.85" stroke="#222222" stroke-width="{st.stroke / 2:.2f}"/>'
        )
        f = o.world_center[:2]
        tip = f + o.forward[:2] * min(o.local_bbox.size[1] * abs(o.scale[1]), 0.6) / 2
        (fx, fy), (tx, ty) = xy(*f), xy(*tip)
        out.append(f'<line class="heading" x1="{fx}" y1="{fy}" x2="{tx}" y2="{ty}" stroke="#222222" stroke-width="{st.stroke / 2:.2f}"/>')
    for o in objs:
        if o.opening is None:
            continue
        op = o.opening
        a, b = np.asarray(op.wall[0], float), np.asarray(op.wall[1], float)
        u = (b - a) / np.linalg.norm(b - a)
        c = np.asarray(op.anchor, float)
        p0, p1 = c - u * op.width / 2, c + u * op.width / 2
        x0, y0 = xy(*p0)
        x1, y1 = xy(*p1)
        if op.kind == "door":
            n = np.array([-u[1], u[0]])
            tip = p0 + n * op.width
            xt, yt = xy(*tip)
            r = op.width * s
            out.append(f'<g class="door" data-id={quoteattr(o.object_id)}>')
            out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#ffffff" stroke-width="{3 * st.stroke:.2f}"/>')
            out.append(f'<line x1="{x0}" y1="{y0}" x2="{xt}" y2="{yt}" stroke="#8b5a2b" stroke-width="{st.stroke:.2f}"/>')
            out.append(f'<path d="M {xt} {yt} A {r:.2f} {r:.2f} 0 0 1 {x1} {y1}" fill="none" stroke="#8b5a2b" stroke-dasharray="3 2" stroke-width="{st.stroke / 2:.2f}"/>')
            out.append("</g>")
        else:
            out.append(f'<g class="window" data-id={quoteattr(o.object_id)}>')
            out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#ffffff" stroke-width="{3 * st.stroke:.2f}"/>')
            out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#3a7bd5" stroke-width="{st.stroke:.2f}"/>')
            out.append("</g>")
    if st.labels:
        for label in sorted(state.rooms):
            poly = state.rooms[label].polygon
            cx, cy = xy(*polygon_centroid(poly))
            out.append(f'<text class="room-label" x="{cx}" y="{cy}" font-size="{st.font_size:.1f}" text-anchor="middle" fill="#555555">{escape(label)}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode()
