"""Triangle meshes: loading, validation, procedural generators, and sampling.

Meshes must be watertight (every edge shared by exactly two triangles with
opposite orientation) for signed-distance computation. Generators produce
closed surfaces by construction: icospheres, axis-aligned boxes, and prisms
extruded from simple polygons (caps triangulated by ear clipping).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist


class MeshError(ValueError):
    """Raised for malformed or non-watertight meshes."""


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int32
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self):
        """Vertex coordinates per face, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self):
        """Max pairwise vertex distance (object diameter d_obj)."""
        if "diameter" not in self._cache:
            v = self.vertices
            if len(v) > 600:
                # The diameter is attained on the convex hull.
                from scipy.spatial import ConvexHull

                v = v[ConvexHull(v).vertices]
            self._cache["diameter"] = float(pdist(v).max())
        return self._cache["diameter"]

    def face_areas(self):
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)


def check_watertight(mesh: TriangleMesh, raise_on_fail: bool = True) -> bool:
    """Verify the mesh is a closed orientable surface.

    Every undirected edge must appear in exactly two faces, once per
    direction. Degenerate (zero-area) faces also fail the check.
    """
    f = mesh.faces
    defects = []
    if np.any(mesh.face_areas() < 1e-16):
        defects.append("degenerate (zero-area) faces present")
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    directed = edges[order]
    if len(directed) != len(np.unique(directed, axis=0)):
        defects.append("duplicated directed edge (inconsistent winding)")
    und = np.sort(edges, axis=1)
    uniq, counts = np.unique(und, axis=0, return_counts=True)
    if np.any(counts != 2):
        bad = int(np.sum(counts != 2))
        defects.append(f"{bad} edges not shared by exactly two faces (open or non-manifold)")
    if defects:
        if raise_on_fail:
            raise MeshError("mesh is not watertight: " + "; ".join(defects))
        return False
    return True


# ---------------------------------------------------------------------------
# File I/O: OBJ and binary STL
# ---------------------------------------------------------------------------

def load_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise MeshError(f"no geometry in OBJ file {path}")
    return TriangleMesh(np.array(verts), np.array(faces))


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stl(path) -> TriangleMesh:
    """Load a binary STL file and weld duplicate vertices."""
    raw = Path(path).read_bytes()
    if len(raw) < 84:
        raise MeshError(f"not a binary STL file: {path}")
    (count,) = struct.unpack_from("<I", raw, 80)
    if len(raw) != 84 + 50 * count:
        raise MeshError(f"binary STL size mismatch in {path} (ASCII STL is not supported)")
    rec = np.frombuffer(raw, dtype=np.uint8, offset=84).reshape(count, 50)
    tris = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    flat = tris.reshape(-1, 3)
    verts, inv = np.unique(flat.round(decimals=9), axis=0, return_inverse=True)
    return TriangleMesh(verts, inv.reshape(-1, 3))


def save_stl(mesh: TriangleMesh, path) -> None:
    t = mesh.triangles.astype(np.float32)
    n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, np.maximum(norm, 1e-30))
    rec = np.zeros((len(t), 50), dtype=np.uint8)
    rec[:, 0:12] = n.astype(np.float32).view(np.uint8).reshape(len(t), 12)
    rec[:, 12:48] = t.reshape(len(t), 9).view(np.uint8).reshape(len(t), 36)
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(t)))
        fh.write(rec.tobytes())


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    if path.suffix.lower() == ".stl":
        return load_stl(path)
    raise MeshError(f"unsupported mesh format: {path.suffix}")


# ---------------------------------------------------------------------------
# Procedural generators
# ---------------------------------------------------------------------------

def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        midpoint = {}
        verts = list(v)

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_f = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        f = np.array(new_f)
    return TriangleMesh(v * radius + np.asarray(center, dtype=float), f)


def box_mesh(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with the given (sx, sy, sz) edge lengths."""
    s = np.asarray(size, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
    )
    v = corners * s + c
    # Two triangles per face, outward winding.
    f = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ],
        dtype=np.int32,
    )
    return TriangleMesh(v, f)


def _ear_clip(poly: np.ndarray) -> np.ndarray:
    """Triangulate a simple CCW polygon (M, 2) by ear clipping."""
    n = len(poly)
    if n < 3:
        raise MeshError("polygon needs at least 3 vertices")
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def point_in_tri(p, a, b, c):
        d1, d2, d3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
        return d1 >= -1e-14 and d2 >= -1e-14 and d3 >= -1e-14

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise MeshError("ear clipping failed; polygon may be self-intersecting")
        clipped = False
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-14:
                continue  # reflex or collinear corner
            if any(
                point_in_tri(poly[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append([i0, i1, i2])
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            raise MeshError("ear clipping failed; polygon may be degenerate")
    tris.append(list(idx))
    return np.array(tris, dtype=np.int32)


def extrude_polygon(poly, z0: float, z1: float) -> TriangleMesh:
    """Extrude a simple CCW polygon (M, 2) into a closed prism spanning [z0, z1]."""
    poly = np.asarray(poly, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2:
        raise MeshError(f"polygon must be (M, 2), got {poly.shape}")
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area2 < 0:
        poly = poly[::-1].copy()
    m = len(poly)
    bottom = np.column_stack([poly, np.full(m, float(z0))])
    top = np.column_stack([poly, np.full(m, float(z1))])
    verts = np.vstack([bottom, top])
    caps = _ear_clip(poly)
    faces = []
    faces += [[a, c, b] for a, b, c in caps]  # bottom cap, normal -z
    faces += [[a + m, b + m, c + m] for a, b, c in caps]  # top cap, normal +z
    for i in range(m):
        j = (i + 1) % m
        faces += [[i, j, j + m], [i, j + m, i + m]]  # side quad, outward
    return TriangleMesh(verts, np.array(faces, dtype=np.int32))


def cylinder_mesh(radius: float, height: float, segments: int = 64, z0: float = 0.0) -> TriangleMesh:
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    poly = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    return extrude_polygon(poly, z0, z0 + height)


# ---------------------------------------------------------------------------
# Surface sampling
# ---------------------------------------------------------------------------

def sample_surface(mesh: TriangleMesh, n: int, rng) -> np.ndarray:
    """Draw n points uniformly by area from the mesh surface."""
    areas = mesh.face_areas()
    probs = areas / areas.sum()
    tri = mesh.triangles[rng.choice(len(areas), size=n, p=probs)]
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    return (1 - r1) * tri[:, 0] + r1 * (1 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]


def farthest_point_sample(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point subsampling; deterministic given the start index."""
    pts = np.asarray(points, dtype=float)
    if k >= len(pts):
        return pts.copy()
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    d = np.linalg.norm(pts - pts[start], axis=1)
    for i in range(1, k):
        chosen[i] = int(np.argmax(d))
        d = np.minimum(d, np.linalg.norm(pts - pts[chosen[i]], axis=1))
    return pts[chosen]


def model_points(mesh: TriangleMesh, n: int = 500, seed: int = 0, oversample: int = 8) -> np.ndarray:
    """Evaluation point set: dense area-uniform draw reduced by farthest-point sampling."""
    rng = np.random.default_rng(seed)
    dense = sample_surface(mesh, max(n * oversample, n), rng)
    return farthest_point_sample(dense, n)
