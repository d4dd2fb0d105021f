"""2D / 2.5D geometry kernel.

Polygons are ``(n, 2)`` float arrays with an implicit closing edge; a trailing
vertex equal to the first one (as stored in IDSL documents) is accepted and
stripped by :func:`as_polygon`.  Axis-aligned rectangles are plain
``(xmin, ymin, xmax, ymax)`` tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Rect2D = tuple[float, float, float, float]

DEFAULT_SNAP_EPS = 1e-3
DEFAULT_MIN_EDGE = 1e-2
DEFAULT_SHARED_TOL = 1e-3
COLLINEAR_ANGLE = 1e-6
DEFAULT_MAX_CELLS = 50_000_000


class GeometryError(ValueError):
    """Raised when an input cannot be turned into valid geometry."""


@dataclass(frozen=True)
class Segment2D:
    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        if self.a == self.b:
            raise GeometryError(f"degenerate segment at {self.a}")

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    def reversed(self) -> "Segment2D":
        return Segment2D(self.b, self.a)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=float)


@dataclass
class SemanticMask:
    """Category-id raster; ``data[row, col]`` with row along +y."""

    origin: tuple[float, float]
    cell: float
    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.cell <= 0:
            raise GeometryError("cell size must be positive")
        if self.data.shape != (self.height, self.width):
            raise GeometryError(
                f"mask data shape {self.data.shape} != ({self.height}, {self.width})"
            )

    def same_grid(self, other: "SemanticMask") -> bool:
        return (
            self.origin == other.origin
            and self.cell == other.cell
            and self.width == other.width
            and self.height == other.height
        )

    def to_pgm(self) -> bytes:
        """Binary PGM with category ids as gray levels (row 0 at the top)."""
        maxval = int(max(1, self.data.max(initial=0)))
        img = np.flipud(self.data)
        if maxval < 256:
            payload = img.astype(np.uint8).tobytes()
        else:
            payload = img.astype(">u2").tobytes()
        header = f"P5\n{self.width} {self.height}\n{maxval}\n".encode("ascii")
        return header + payload


@dataclass(frozen=True)
class PlaneRef:
    """Oriented rectangular face: center point, outward unit normal and in-plane axes."""

    point: np.ndarray
    normal: np.ndarray
    u: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    v: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    half_extents: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-6:
            raise GeometryError("plane normal must be unit length")

    def signed_distance(self, p) -> float:
        return float(np.dot(np.asarray(p, dtype=float) - self.point, self.normal))


# ---------------------------------------------------------------------------
# polygon basics
# ---------------------------------------------------------------------------


def as_polygon(p) -> np.ndarray:
    """Return ``p`` as an open ``(n, 2)`` float ring."""
    arr = np.asarray(p, dtype=float).reshape(-1, 2)
    if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    return arr


def closed_ring(p) -> list[list[float]]:
    arr = as_polygon(p)
    out = arr.tolist()
    out.append(list(out[0]))
    return out


def signed_area(p) -> float:
    arr = as_polygon(p)
    if len(arr) < 3:
        return 0.0
    x, y = arr[:, 0], arr[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(p) -> float:
    """Shoelace area; positive for counter-clockwise rings."""
    return signed_area(p)


def polygon_bounds(p) -> Rect2D:
    arr = as_polygon(p)
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def polygon_centroid(p) -> np.ndarray:
    arr = as_polygon(p)
    a = signed_area(arr)
    if abs(a) < 1e-15:
        return arr.mean(axis=0)
    x, y = arr[:, 0], arr[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = float(np.sum((x + xn) * cross)) / (6 * a)
    cy = float(np.sum((y + yn) * cross)) / (6 * a)
    return np.array([cx, cy])


def polygon_edges(p) -> list[tuple[np.ndarray, np.ndarray]]:
    arr = as_polygon(p)
    return [(arr[i], arr[(i + 1) % len(arr)]) for i in range(len(arr))]


def _segments_cross(p1, p2, q1, q2, eps=1e-12) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        )

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    if abs(d1) <= eps and on_seg(q1, q2, p1):
        return True
    if abs(d2) <= eps and on_seg(q1, q2, p2):
        return True
    if abs(d3) <= eps and on_seg(p1, p2, q1):
        return True
    if abs(d4) <= eps and on_seg(p1, p2, q2):
        return True
    return False


def is_simple(p) -> bool:
    """True when the ring has >= 3 distinct vertices and no self-intersection."""
    arr = as_polygon(p)
    n = len(arr)
    if n < 3 or len(np.unique(arr, axis=0)) < 3:
        return False
    if abs(signed_area(arr)) < 1e-15:
        return False
    for i in range(n):
        a1, a2 = arr[i], arr[(i + 1) % n]
        if np.array_equal(a1, a2):
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a1, a2, arr[j], arr[(j + 1) % n]):
                return False
    return True


def _snap(arr: np.ndarray, eps: float) -> np.ndarray:
    inv = 1.0 / eps
    k = np.round(arr * inv)
    inv_int = round(inv)
    if abs(inv - inv_int) < 1e-9:
        # integer division by the grid frequency lands on the decimal grid exactly
        return k / inv_int
    return k * eps


def _turn_angle(a, b, c) -> float:
    u = b - a
    v = c - b
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(np.dot(u, v)))


def clean_polygon(
    p, snap_eps: float = DEFAULT_SNAP_EPS, min_edge: float = DEFAULT_MIN_EDGE
) -> np.ndarray:
    """Snap, simplify and orient a ring counter-clockwise.

    Vertices are snapped to a grid of pitch ``snap_eps``, edges shorter than
    ``min_edge`` are collapsed and vertices whose turn angle is within
    1e-6 rad of 0 or pi are removed.  The operation is idempotent.
    """
    arr = as_polygon(p)
    if len(arr) < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    pts = [v for v in _snap(arr, snap_eps)]

    changed = True
    while changed and len(pts) >= 3:
        changed = False
        i = 0
        while i < len(pts) and len(pts) >= 3:
            j = (i + 1) % len(pts)
            if np.hypot(*(pts[j] - pts[i])) < min_edge:
                del pts[j]
                changed = True
                continue
            i += 1
        i = 0
        while i < len(pts) and len(pts) >= 3:
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            ang = _turn_angle(a, b, c)
            if ang < COLLINEAR_ANGLE or ang > math.pi - COLLINEAR_ANGLE:
                del pts[i]
                changed = True
                continue
            i += 1

    if len(pts) < 3:
        raise GeometryError("polygon degenerates below 3 vertices after cleaning")
    out = np.array(pts, dtype=float)
    if signed_area(out) < 0:
        out = out[::-1].copy()
    return out


# ---------------------------------------------------------------------------
# points & segments
# ---------------------------------------------------------------------------


def point_to_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    L2 = float(np.dot(d, d))
    if L2 == 0.0:
        return float(np.hypot(*(p - a)))
    t = min(1.0, max(0.0, float(np.dot(p - a, d)) / L2))
    return float(np.hypot(*(p - (a + t * d))))


def project_point_to_segment(p, a, b) -> tuple[np.ndarray, float]:
    """Closest point on ``[a, b]`` and its parameter ``t`` in ``[0, 1]``."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    L2 = float(np.dot(d, d))
    if L2 == 0.0:
        return a.copy(), 0.0
    t = min(1.0, max(0.0, float(np.dot(p - a, d)) / L2))
    return a + t * d, t


def snap_point_to_segments(p, segments: Sequence) -> tuple[int, np.ndarray, float]:
    """Nearest segment index, the snapped point on it and the distance."""
    if not segments:
        raise GeometryError("no segments to snap to")
    best = (-1, None, math.inf)
    for i, s in enumerate(segments):
        a, b = (s.a, s.b) if isinstance(s, Segment2D) else s
        q, _ = project_point_to_segment(p, a, b)
        d = float(np.hypot(*(np.asarray(p, dtype=float) - q)))
        if d < best[2]:
            best = (i, q, d)
    return best


def distance_to_boundary(p, poly) -> float:
    return min(point_to_segment_distance(p, a, b) for a, b in polygon_edges(poly))


def point_in_polygon(p, poly, boundary_eps: float = 1e-12) -> bool:
    """Crossing-number test; points within ``boundary_eps`` of an edge count as inside."""
    x, y = float(p[0]), float(p[1])
    arr = as_polygon(poly)
    inside = False
    n = len(arr)
    for i in range(n):
        x1, y1 = arr[i]
        x2, y2 = arr[(i + 1) % n]
        if point_to_segment_distance((x, y), (x1, y1), (x2, y2)) <= boundary_eps:
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def closest_point_in_polygon(p, poly) -> np.ndarray:
    """``p`` itself when inside, else the nearest boundary point."""
    if point_in_polygon(p, poly):
        return np.asarray(p, dtype=float).copy()
    best, best_d = None, math.inf
    for a, b in polygon_edges(poly):
        q, _ = project_point_to_segment(p, a, b)
        d = float(np.hypot(*(np.asarray(p, dtype=float) - q)))
        if d < best_d:
            best, best_d = q, d
    return best


# ---------------------------------------------------------------------------
# shared edges
# ---------------------------------------------------------------------------


def _merge_collinear(segs: list[Segment2D], tol: float) -> list[Segment2D]:
    segs = list(segs)
    merged = True
    while merged:
        merged = False
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                s, t = segs[i], segs[j]
                d = np.subtract(s.b, s.a)
                u = d / np.hypot(*d)
                n = np.array([-u[1], u[0]])
                if any(abs(np.dot(np.subtract(q, s.a), n)) > tol for q in (t.a, t.b)):
                    continue
                pts = [s.a, s.b, t.a, t.b]
                ts = [float(np.dot(np.subtract(q, s.a), u)) for q in pts]
                lo_s, hi_s = sorted(ts[:2])
                lo_t, hi_t = sorted(ts[2:])
                if lo_t > hi_s + tol or lo_s > hi_t + tol:
                    continue
                lo = pts[int(np.argmin(ts))]
                hi = pts[int(np.argmax(ts))]
                segs[i] = Segment2D(tuple(lo), tuple(hi))
                del segs[j]
                merged = True
                break
            if merged:
                break
    return segs


def shared_edges(a, b, tol: float = DEFAULT_SHARED_TOL) -> list[Segment2D]:
    """Maximal collinear overlaps between the boundaries of two polygons.

    Segment endpoints are always actual vertices of ``a`` or ``b`` (whichever
    bounds the overlap), so ``shared_edges(a, b)`` and ``shared_edges(b, a)``
    agree up to segment direction.
    """
    A, B = as_polygon(a), as_polygon(b)
    out: list[Segment2D] = []
    for p0, p1 in polygon_edges(A):
        d = p1 - p0
        L = float(np.hypot(*d))
        if L == 0:
            continue
        u = d / L
        n = np.array([-u[1], u[0]])
        for q0, q1 in polygon_edges(B):
            if abs(np.dot(q0 - p0, n)) > tol or abs(np.dot(q1 - p0, n)) > tol:
                continue
            tq0 = float(np.dot(q0 - p0, u))
            tq1 = float(np.dot(q1 - p0, u))
            qlo, qhi = (q0, q1) if tq0 <= tq1 else (q1, q0)
            tlo, thi = min(tq0, tq1), max(tq0, tq1)
            lo_pt = p0 if tlo <= 0.0 else qlo
            hi_pt = p1 if thi >= L else qhi
            if min(L, thi) - max(0.0, tlo) <= tol:
                continue
            out.append(Segment2D(tuple(map(float, lo_pt)), tuple(map(float, hi_pt))))
    return _merge_collinear(out, tol)


def segment_on_boundary(seg: Segment2D, poly, tol: float = DEFAULT_SHARED_TOL) -> bool:
    """True when both endpoints and the midpoint lie within ``tol`` of one boundary edge."""
    mid = ((seg.a[0] + seg.b[0]) / 2, (seg.a[1] + seg.b[1]) / 2)
    for a, b in polygon_edges(poly):
        if all(point_to_segment_distance(q, a, b) <= tol for q in (seg.a, seg.b, mid)):
            return True
    return False


# ---------------------------------------------------------------------------
# rectangles & clipping
# ---------------------------------------------------------------------------


def rect_area(r: Rect2D) -> float:
    return max(0.0, r[2] - r[0]) * max(0.0, r[3] - r[1])


def rect_overlap_area(a: Rect2D, b: Rect2D) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def clip_polygon_to_rect(poly, rect: Rect2D) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of an arbitrary ring against an axis-aligned window.

    Concave input may yield zero-width bridges; the area of the result is still exact.
    """
    pts = [tuple(map(float, v)) for v in as_polygon(poly)]
    xmin, ymin, xmax, ymax = rect

    def clip(points, inside, intersect):
        if not points:
            return []
        out = []
        prev = points[-1]
        prev_in = inside(prev)
        for cur in points:
            cur_in = inside(cur)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
            prev, prev_in = cur, cur_in
        return out

    def ix(xc):
        def f(p, q):
            t = (xc - p[0]) / (q[0] - p[0])
            return (xc, p[1] + t * (q[1] - p[1]))

        return f

    def iy(yc):
        def f(p, q):
            t = (yc - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), yc)

        return f

    pts = clip(pts, lambda p: p[0] >= xmin, ix(xmin))
    pts = clip(pts, lambda p: p[0] <= xmax, ix(xmax))
    pts = clip(pts, lambda p: p[1] >= ymin, iy(ymin))
    pts = clip(pts, lambda p: p[1] <= ymax, iy(ymax))
    return pts


def _ring_area(pts) -> float:
    if len(pts) < 3:
        return 0.0
    s = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def polygon_rect_intersection_area(poly, rect: Rect2D) -> float:
    if rect[2] <= rect[0] or rect[3] <= rect[1]:
        return 0.0
    return abs(_ring_area(clip_polygon_to_rect(poly, rect)))


def rect_outside_polygon_area(rect: Rect2D, poly) -> float:
    """Area of ``rect`` not covered by the (simple) polygon ``poly``."""
    return max(0.0, rect_area(rect) - polygon_rect_intersection_area(poly, rect))


def rect_union(rects: Iterable[Rect2D]) -> Rect2D:
    rects = list(rects)
    if not rects:
        raise GeometryError("empty rectangle set")
    return (
        min(r[0] for r in rects),
        min(r[1] for r in rects),
        max(r[2] for r in rects),
        max(r[3] for r in rects),
    )


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


def grid_shape(domain: Rect2D, cell: float) -> tuple[int, int]:
    w = max(1, math.ceil((domain[2] - domain[0]) / cell - 1e-9))
    h = max(1, math.ceil((domain[3] - domain[1]) / cell - 1e-9))
    return w, h


def rasterize(
    objects: Sequence[tuple[int, Rect2D]],
    domain: Rect2D,
    cell: float,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> SemanticMask:
    """Paint rectangles into a category grid by cell-center membership.

    A cell belongs to a rectangle when its center lies in ``[xmin, xmax) x
    [ymin, ymax)``.  Later entries overwrite earlier ones.
    """
    if cell <= 0:
        raise GeometryError("cell size must be positive")
    if domain[2] <= domain[0] or domain[3] <= domain[1]:
        raise GeometryError(f"degenerate raster domain {domain}")
    width, height = grid_shape(domain, cell)
    if width * height > max_cells:
        raise GeometryError(f"raster of {width}x{height} cells exceeds cap {max_cells}")
    data = np.zeros((height, width), dtype=np.int32)
    cx = domain[0] + (np.arange(width) + 0.5) * cell
    cy = domain[1] + (np.arange(height) + 0.5) * cell
    for cat, r in objects:
        cols = (cx >= r[0]) & (cx < r[2])
        rows = (cy >= r[1]) & (cy < r[3])
        if cols.any() and rows.any():
            data[np.ix_(rows, cols)] = cat
    return SemanticMask((float(domain[0]), float(domain[1])), float(cell), width, height, data)


def mask_iou(a: SemanticMask, b: SemanticMask, c: int) -> float:
    """Category-wise IoU; 1.0 when neither mask contains ``c``."""
    if not a.same_grid(b):
        raise GeometryError("mask grids differ")
    ma = a.data == c
    mb = b.data == c
    union = int(np.count_nonzero(ma | mb))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(ma & mb)) / union


# ---------------------------------------------------------------------------
# 3D boxes
# ---------------------------------------------------------------------------

# local-frame face order: bottom, top, +x, -x, +y, -y
FACE_AXES = ((2, -1.0), (2, 1.0), (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0))


def box_corners(center, size) -> np.ndarray:
    """Eight corners in (x slowest, z fastest) sign order."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(size, dtype=float) / 2
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    return c + signs * h


def oriented_box_planes(center, size, rotation) -> list[PlaneRef]:
    """Six faces of a box with local ``center``/``size`` mapped by the 3x3 ``rotation``
    (already carrying scale) and translated by nothing; callers pass world centers."""
    R = np.asarray(rotation, dtype=float)
    c = np.asarray(center, dtype=float)
    half = np.asarray(size, dtype=float) / 2
    planes = []
    for axis, sign in FACE_AXES:
        col = R[:, axis]
        scale = float(np.linalg.norm(col))
        n = sign * col / scale
        point = c + sign * col * half[axis]
        others = [k for k in range(3) if k != axis]
        u_col, v_col = R[:, others[0]], R[:, others[1]]
        ul, vl = float(np.linalg.norm(u_col)), float(np.linalg.norm(v_col))
        planes.append(
            PlaneRef(
                point=point,
                normal=n,
                u=u_col / ul,
                v=v_col / vl,
                half_extents=(half[others[0]] * ul, half[others[1]] * vl),
            )
        )
    return planes
