"""Indexed triangle meshes with the checks the envelope builder relies on."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    """Invalid mesh input or a construction step that cannot succeed."""


@dataclass
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_tags: list[str]
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.face_tags = list(self.face_tags)
        if len(self.face_tags) != len(self.faces):
            raise MeshError(f"{len(self.face_tags)} tags for {len(self.faces)} faces")

    @classmethod
    def empty(cls) -> "Mesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), [])

    def __len__(self) -> int:
        return len(self.faces)

    # -- checks ---------------------------------------------------------------
    def face_areas(self) -> np.ndarray:
        if len(self.faces) == 0:
            return np.zeros(0)
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def check(self) -> None:
        """Raise on out-of-range indices, repeated corners or zero-area faces."""
        if len(self.faces) == 0:
            return
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face with repeated vertex")
        bad = np.flatnonzero(self.face_areas() <= DEGENERATE_AREA)
        if len(bad):
            raise MeshError(f"{len(bad)} degenerate faces, first {int(bad[0])} tagged {self.face_tags[bad[0]]!r}")

    def edge_incidence(self) -> Counter:
        """Undirected edge -> number of incident faces."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return Counter(map(tuple, e.tolist()))

    def open_edges(self) -> list[tuple[int, int]]:
        return sorted(k for k, n in self.edge_incidence().items() if n != 2)

    def is_watertight(self) -> bool:
        return len(self.faces) > 0 and not self.open_edges()

    def is_consistently_oriented(self) -> bool:
        """Every directed edge appears exactly once (outward winding agrees)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        directed = Counter(map(tuple, e.tolist()))
        return all(n == 1 and directed.get((b, a)) == 1 for (a, b), n in directed.items())

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.edge_incidence()) + len(self.faces))

    def volume(self) -> float:
        """Signed volume by the divergence theorem; positive for outward winding."""
        if len(self.faces) == 0:
            return 0.0
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    # -- queries ----------------------------------------------------------------
    def tags(self) -> list[str]:
        """Distinct tags in first-appearance order."""
        return list(dict.fromkeys(self.face_tags))

    def area(self, tag=None) -> float:
        """Total area, of one tag, or of tags accepted by a predicate."""
        areas = self.face_areas()
        if tag is None:
            return float(areas.sum())
        pick = tag if callable(tag) else (lambda t: t == tag)
        return float(sum(a for a, t in zip(areas, self.face_tags) if pick(t)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)] if len(self.faces) else self.vertices
        if len(used) == 0:
            raise MeshError("empty mesh has no bounds")
        return used.min(axis=0), used.max(axis=0)

    # -- transforms ---------------------------------------------------------------
    def transformed(self, linear, offset) -> "Mesh":
        """Apply x -> linear @ x + offset; winding flips with a reflection."""
        L = np.asarray(linear, dtype=float)
        faces = self.faces if np.linalg.det(L) >= 0 else self.faces[:, ::-1]
        return Mesh(self.vertices @ L.T + np.asarray(offset, dtype=float), faces.copy(), self.face_tags, dict(self.attrs))

    def retagged(self, fn) -> "Mesh":
        return Mesh(self.vertices.copy(), self.faces.copy(), [fn(t) for t in self.face_tags], dict(self.attrs))


def merge(meshes: Iterable[Mesh]) -> Mesh:
    """Concatenate meshes without welding vertices."""
    verts, faces, tags = [], [], []
    n = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + n)
        tags.extend(m.face_tags)
        n += len(m.vertices)
    if not verts:
        return Mesh.empty()
    return Mesh(np.concatenate(verts), np.concatenate(faces), tags)


class MeshBuilder:
    """Accumulates faces over welded vertices keyed by exact coordinates."""

    def __init__(self):
        self._index: dict[tuple[float, float, float], int] = {}
        self.vertices: list[tuple[float, float, float]] = []
        self.faces: list[tuple[int, int, int]] = []
        self.tags: list[str] = []

    def vertex(self, x: float, y: float, z: float) -> int:
        key = (float(x), float(y), float(z))
        i = self._index.get(key)
        if i is None:
            i = self._index[key] = len(self.vertices)
            self.vertices.append(key)
        return i

    def triangle(self, a: int, b: int, c: int, tag: str) -> None:
        self.faces.append((a, b, c))
        self.tags.append(tag)

    def quad(self, a: int, b: int, c: int, d: int, tag: str) -> None:
        self.triangle(a, b, c, tag)
        self.triangle(a, c, d, tag)

    def box(self, lo: Sequence[float], hi: Sequence[float], tag: str) -> None:
        """Closed axis-aligned box with outward winding."""
        x0, y0, z0 = lo
        x1, y1, z1 = hi
        v = [self.vertex(x, y, z) for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)]
        # index = 4*ix + 2*iy + iz
        for q in ((0, 2, 6, 4), (1, 5, 7, 3), (0, 4, 5, 1), (2, 3, 7, 6), (0, 1, 3, 2), (4, 6, 7, 5)):
            self.quad(*(v[k] for k in q), tag)

    def build(self, attrs: dict | None = None) -> Mesh:
        return Mesh(np.array(self.vertices, dtype=float).reshape(-1, 3), np.array(self.faces, dtype=np.int64).reshape(-1, 3), self.tags, attrs or {})
