"""Polygonal domains, triangular meshes and the symmetrized ball."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.spatial import Delaunay


class DegeneratePolygonError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, q1):
        return True
    if o2 == 0 and on_segment(p1, p2, q2):
        return True
    if o3 == 0 and on_segment(q1, q2, p1):
        return True
    if o4 == 0 and on_segment(q1, q2, p2):
        return True
    return False


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with optional holes.

    The outer loop is stored counter-clockwise and holes clockwise, whatever
    orientation the caller used.
    """

    vertices: np.ndarray
    holes: tuple = ()

    def __post_init__(self):
        outer = np.asarray(self.vertices, dtype=float)
        if outer.ndim != 2 or outer.shape[1] != 2 or len(outer) < 3:
            raise DegeneratePolygonError("degenerate polygon: need at least 3 vertices in 2D")
        if _signed_area(outer) < 0:
            outer = outer[::-1]
        holes = []
        for h in self.holes:
            h = np.asarray(h, dtype=float)
            if h.ndim != 2 or h.shape[1] != 2 or len(h) < 3:
                raise DegeneratePolygonError("degenerate polygon: hole needs at least 3 vertices")
            if _signed_area(h) > 0:
                h = h[::-1]
            holes.append(_readonly(h))
        object.__setattr__(self, "vertices", _readonly(outer))
        object.__setattr__(self, "holes", tuple(holes))
        if not np.all(np.isfinite(outer)):
            raise DegeneratePolygonError("degenerate polygon: non-finite vertex")
        if self.area <= 0 or abs(_signed_area(outer)) < 1e-14:
            raise DegeneratePolygonError("degenerate polygon: zero area")
        self._check_simple()

    @property
    def loops(self) -> tuple:
        return (self.vertices,) + self.holes

    def segments(self) -> np.ndarray:
        """All boundary segments as an (m, 2, 2) array, loop by loop."""
        segs = [np.stack([lp, np.roll(lp, -1, axis=0)], axis=1) for lp in self.loops]
        return np.concatenate(segs)

    def _check_simple(self):
        segs = self.segments()
        loop_id = np.concatenate([np.full(len(lp), i) for i, lp in enumerate(self.loops)])
        loop_len = [len(lp) for lp in self.loops]
        pos = np.concatenate([np.arange(k) for k in loop_len])
        m = len(segs)
        lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
        if np.any(lengths == 0):
            raise DegeneratePolygonError("degenerate polygon: repeated vertex")
        for i in range(m):
            for j in range(i + 1, m):
                if loop_id[i] == loop_id[j]:
                    k = loop_len[loop_id[i]]
                    d = (pos[j] - pos[i]) % k
                    if d == 1 or d == k - 1:
                        # adjacent edges share one vertex; they may only overlap there
                        a, b = segs[i], segs[j]
                        shared = b[0] if d == 1 else a[0]
                        other_i = a[0] if d == 1 else a[1]
                        other_j = b[1] if d == 1 else b[0]
                        u = other_i - shared
                        w = other_j - shared
                        cross = u[0] * w[1] - u[1] * w[0]
                        if cross == 0 and np.dot(u, w) > 0:
                            raise DegeneratePolygonError("degenerate polygon: self-intersection")
                        continue
                if _segments_intersect(segs[i][0], segs[i][1], segs[j][0], segs[j][1]):
                    raise DegeneratePolygonError("degenerate polygon: self-intersection")

    @property
    def area(self) -> float:
        return _signed_area(self.vertices) + sum(_signed_area(h) for h in self.holes)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Even-odd point-in-polygon test (points on the boundary are unspecified)."""
        pts = np.atleast_2d(pts)
        inside = np.zeros(len(pts), dtype=bool)
        x, y = pts[:, 0][:, None], pts[:, 1][:, None]
        segs = self.segments()
        x0, y0 = segs[:, 0, 0][None, :], segs[:, 0, 1][None, :]
        x1, y1 = segs[:, 1, 0][None, :], segs[:, 1, 1][None, :]
        straddle = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        crossings = np.sum(straddle & (x < xc), axis=1)
        inside[:] = crossings % 2 == 1
        return inside

    def distance_to_boundary(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        segs = self.segments()
        a = segs[:, 0][None, :, :]
        d = (segs[:, 1] - segs[:, 0])[None, :, :]
        w = pts[:, None, :] - a
        t = np.clip(np.sum(w * d, axis=2) / np.sum(d * d, axis=2), 0.0, 1.0)
        proj = a + t[..., None] * d
        return np.min(np.linalg.norm(pts[:, None, :] - proj, axis=2), axis=1)


Domain = Union[Polygon, Sequence[Polygon]]


def _components(domain: Domain) -> list:
    if isinstance(domain, Polygon):
        return [domain]
    comps = list(domain)
    if not comps or not all(isinstance(c, Polygon) for c in comps):
        raise TypeError("domain must be a Polygon or a non-empty sequence of Polygons")
    return comps


def domain_area(domain: Domain) -> float:
    return sum(c.area for c in _components(domain))


def perimeter(domain: Domain) -> float:
    """Total boundary length, holes included; components add up."""
    total = 0.0
    for c in _components(domain):
        segs = c.segments()
        total += float(np.sum(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)))
    return total


# -- standard shapes ---------------------------------------------------------

def unit_square() -> Polygon:
    return Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def l_shape() -> Polygon:
    """Unit square with the upper-right quarter removed (area 3/4)."""
    return Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.5],
                             [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]))


def regular_polygon(sides: int, circumradius: float = 1.0, center=(0.0, 0.0)) -> Polygon:
    th = 2 * np.pi * np.arange(sides) / sides
    pts = np.column_stack([np.cos(th), np.sin(th)]) * circumradius + np.asarray(center)
    return Polygon(pts)


def disk_polygon(radius: float = 1.0, sides: int = 64, center=(0.0, 0.0)) -> Polygon:
    """Regular polygon with the same area as the disk of the given radius.

    The circumradius is inflated so that |polygon| = pi radius^2 exactly; the
    boundary then deviates from the circle by at most ~radius*(pi/sides)^2/3.
    """
    scale = math.sqrt(math.pi / (0.5 * sides * math.sin(2 * math.pi / sides)))
    return regular_polygon(sides, radius * scale, center)


def two_disk_domain(r: float, sides: int = 64, gap: float = 0.5) -> list:
    """Disjoint disks of radius 1 and r, approximated by equal-area polygons."""
    return [disk_polygon(1.0, sides), disk_polygon(r, sides, center=(1.0 + gap + r, 0.0))]


# -- balls ------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    n: int
    R: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("ball dimension must be an integer >= 2")
        if not self.R > 0:
            raise ValueError("ball radius must be positive")

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.n) * self.R ** self.n

    @property
    def perimeter(self) -> float:
        return self.n * unit_ball_volume(self.n) * self.R ** (self.n - 1)


def symmetrize_domain(area: float, n: int) -> Ball:
    """Ball centred at the origin with the given measure."""
    if not area > 0:
        raise ValueError("area must be positive")
    return Ball(n, (area / unit_ball_volume(n)) ** (1.0 / n))


# -- meshes -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming P1 triangulation.

    ``boundary_edges`` are oriented with the domain on their left (so the
    outward normal points to the right of i -> j); ``boundary_tags`` holds
    the index of the polygon segment each edge lies on.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray = field(default=None)

    def __post_init__(self):
        nodes = _readonly(self.nodes)
        tris = np.array(self.triangles, dtype=np.int64)
        bed = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = (np.zeros(len(bed), dtype=np.int64) if self.boundary_tags is None
                else np.array(self.boundary_tags, dtype=np.int64))
        for a in (tris, bed, tags):
            a.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bed)
        object.__setattr__(self, "boundary_tags", tags)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def _geometry(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        area = 0.5 * det
        # gradients of barycentric coordinates, shape (m, 3, 2)
        grads = np.empty((len(p), 3, 2))
        grads[:, 1, 0] = e2[:, 1] / det
        grads[:, 1, 1] = -e2[:, 0] / det
        grads[:, 2, 0] = -e1[:, 1] / det
        grads[:, 2, 1] = e1[:, 0] / det
        grads[:, 0] = -grads[:, 1] - grads[:, 2]
        return area, grads

    @property
    def areas(self) -> np.ndarray:
        return self._geometry[0]

    @property
    def basis_gradients(self) -> np.ndarray:
        return self._geometry[1]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Lengths of the boundary edges."""
        d = self.nodes[self.boundary_edges[:, 1]] - self.nodes[self.boundary_edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @cached_property
    def h(self) -> float:
        edges = _unique_edges(self.triangles)[0]
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        return float(np.max(np.linalg.norm(d, axis=1)))

    @property
    def area(self) -> float:
        return float(np.sum(self.areas))

    @property
    def boundary_length(self) -> float:
        return float(np.sum(self.edge_lengths))

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def validate(self, area: float | None = None):
        """Raise ValueError unless the mesh is conforming and positively oriented."""
        if np.any(self.areas <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        edges, counts = _unique_edges(self.triangles)
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: edge shared by more than two triangles")
        bnd = {tuple(e) for e in edges[counts == 1]}
        given = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if bnd != given:
            raise ValueError("boundary edge list does not match the triangulation")
        if area is not None and abs(self.area - area) > 1e-12 * area:
            raise ValueError("mesh area differs from domain area")


def _unique_edges(tris: np.ndarray):
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement: every triangle split into four similar ones."""
    tris = mesh.triangles
    m = len(tris)
    nn = mesh.n_nodes
    all_e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(all_e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mids = nn + inv
    m01, m12, m20 = mids[:m], mids[m:2 * m], mids[2 * m:]
    new_nodes = np.concatenate([mesh.nodes, 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])])
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    bed = mesh.boundary_edges
    bkey = np.sort(bed, axis=1)
    # locate each boundary edge among the unique edges
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    ukeys = uniq[order, 0] * (nn + 1) + uniq[order, 1]
    bk = bkey[:, 0] * (nn + 1) + bkey[:, 1]
    pos = order[np.searchsorted(ukeys, bk)]
    bmid = nn + pos
    new_bed = np.concatenate([np.column_stack([bed[:, 0], bmid]), np.column_stack([bmid, bed[:, 1]])])
    new_tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    # interleave so the edges of one parent stay adjacent
    k = len(bed)
    idx = np.empty(2 * k, dtype=np.int64)
    idx[0::2] = np.arange(k)
    idx[1::2] = np.arange(k) + k
    return TriMesh(new_nodes, new_tris, new_bed[idx], new_tags[idx])


def prolong(mesh: TriMesh, values: np.ndarray) -> np.ndarray:
    """Nodal values on ``refine(mesh)`` of the P1 field with nodal ``values``."""
    uniq, _ = _unique_edges(mesh.triangles)
    values = np.asarray(values, dtype=float)
    return np.concatenate([values, 0.5 * (values[uniq[:, 0]] + values[uniq[:, 1]])])


def _coarse_mesh(poly: Polygon) -> TriMesh:
    segs = poly.segments()
    seglen = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    h0 = float(seglen.min())
    ks = [max(1, int(math.ceil(L / h0 - 1e-9))) for L in seglen]
    pts, bedges, tags = [], [], []
    seg = 0
    for lp in poly.loops:
        loop_start = len(pts)
        for _ in range(len(lp)):
            s, k = segs[seg], ks[seg]
            for i in range(k):
                pts.append(s[0] + (s[1] - s[0]) * (i / k))
                bedges.append((len(pts) - 1, len(pts)))
                tags.append(seg)
            seg += 1
        bedges[-1] = (bedges[-1][0], loop_start)
    pts = np.array(pts)
    bedges = np.array(bedges)
    nb = len(pts)
    # interior points on a triangular lattice
    lo, hi = poly.vertices.min(axis=0), poly.vertices.max(axis=0)
    dy = h0 * math.sqrt(3) / 2
    rows = np.arange(lo[1] + dy / 2, hi[1], dy)
    interior = []
    for j, y in enumerate(rows):
        xs = np.arange(lo[0] + (h0 / 2 if j % 2 else 0.0) + h0 / 4, hi[0], h0)
        interior.append(np.column_stack([xs, np.full_like(xs, y)]))
    interior = np.concatenate(interior) if interior else np.zeros((0, 2))
    if len(interior):
        keep = poly.contains(interior)
        interior = interior[keep]
    if len(interior):
        interior = interior[poly.distance_to_boundary(interior) > 0.55 * h0]
    allpts = np.concatenate([pts, interior])
    tri = Delaunay(allpts)
    simp = tri.simplices.astype(np.int64)
    cent = allpts[simp].mean(axis=1)
    simp = simp[poly.contains(cent)]
    # orient counter-clockwise
    p = allpts[simp]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    simp[det < 0] = simp[det < 0][:, [0, 2, 1]]
    # drop lattice points that ended up unused
    used = np.unique(simp)
    if not np.all(np.isin(np.arange(nb), used)):
        raise DegeneratePolygonError("could not triangulate polygon boundary")
    remap = -np.ones(len(allpts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = TriMesh(allpts[used], remap[simp], remap[bedges], np.array(tags))
    mesh.validate(poly.area)
    return mesh


def _merge(meshes: list) -> TriMesh:
    nodes, tris, bed, tags = [], [], [], []
    off, toff = 0, 0
    for m in meshes:
        nodes.append(m.nodes)
        tris.append(m.triangles + off)
        bed.append(m.boundary_edges + off)
        tags.append(m.boundary_tags + toff)
        off += m.n_nodes
        toff += int(m.boundary_tags.max()) + 1 if len(m.boundary_tags) else 0
    return TriMesh(np.concatenate(nodes), np.concatenate(tris), np.concatenate(bed), np.concatenate(tags))


def mesh_polygon(domain: Domain, h_target: float) -> TriMesh:
    """Deterministic conforming mesh with max edge length <= h_target.

    A coarse Delaunay triangulation of the (subdivided) boundary plus a
    lattice of interior points is red-refined until the size target is met.
    Components of a multi-polygon domain are meshed independently and never
    share nodes.
    """
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    comps = _components(domain)
    meshes = []
    for poly in comps:
        m = _coarse_mesh(poly)
        while m.h > h_target:
            m = refine(m)
        meshes.append(m)
    return meshes[0] if len(meshes) == 1 else _merge(meshes)


# -- mesh file I/O --------------------------------------------------------------

def write_mesh(mesh: TriMesh, path) -> None:
    lines = [f"NODES {mesh.n_nodes} / TRIANGLES {len(mesh.triangles)} / BEDGES {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    """Parse the plain-text mesh format; raises ValueError on malformed input."""
    text = Path(path).read_text().split("\n")
    tokens = [t for t in text[0].replace("/", " ").split()]
    try:
        header = dict(zip(tokens[0::2], (int(v) for v in tokens[1::2])))
        k, m, b = header["NODES"], header["TRIANGLES"], header["BEDGES"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed mesh header: {text[0]!r}") from exc
    body = [ln.split() for ln in text[1:] if ln.strip()]
    if len(body) != k + m + b:
        raise ValueError(f"mesh file has {len(body)} data lines, expected {k + m + b}")
    try:
        nodes = np.array([[float(v) for v in ln] for ln in body[:k]])
        tris = np.array([[int(v) for v in ln] for ln in body[k:k + m]], dtype=np.int64)
        bed = np.array([[int(v) for v in ln] for ln in body[k + m:]], dtype=np.int64)
    except ValueError as exc:
        raise ValueError("malformed mesh data line") from exc
    if nodes.shape != (k, 2) or tris.shape != (m, 3) or bed.shape != (b, 3):
        raise ValueError("mesh data lines have the wrong number of columns")
    if tris.size and (tris.min() < 0 or tris.max() >= k):
        raise ValueError("triangle references a missing node")
    mesh = TriMesh(nodes, tris, bed[:, :2], bed[:, 2])
    mesh.validate()
    return mesh


def read_polygon(path) -> Polygon:
    """Read "x y" vertex lines; blank lines separate the outer loop from holes."""
    loops, cur = [], []
    for ln in Path(path).read_text().split("\n"):
        if not ln.strip() or ln.lstrip().startswith("#"):
            if cur:
                loops.append(cur)
                cur = []
            continue
        cur.append([float(v) for v in ln.split()])
    if cur:
        loops.append(cur)
    if not loops:
        raise ValueError("empty polygon file")
    return Polygon(np.array(loops[0]), tuple(np.array(h) for h in loops[1:]))
