"""Closed triangular surface meshes and the kernels the inflation loop needs.

Meshes live in physical mm space (voxel index times spacing); conversion to
voxel space happens only where intensities are sampled or the mesh is
voxelized.  All mutating operations (edge split, smoothing) keep the mesh a
closed, outward-oriented, genus-0 2-manifold.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SurfaceMesh",
    "make_icosphere",
    "vertex_normals",
    "mean_curvature",
    "split_long_edges",
    "laplacian_smooth",
    "mesh_volume",
    "avg_center_distance",
    "export_mesh",
    "load_obj",
    "validate_mesh",
    "star_shape_score",
]

_MIN_TRIANGLE_AREA = 1e-12
_COT_CLAMP = 1.0e4


@dataclass
class SurfaceMesh:
    """Closed oriented triangle mesh with per-vertex running max intensity.

    positions: (V, 3) float64, mm.
    triangles: (F, 3) int64, counter-clockwise seen from outside.
    max_seen: (V,) float64, maximum intensity each vertex has encountered.
    """

    positions: np.ndarray
    triangles: np.ndarray
    max_seen: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.max_seen is None:
            self.max_seen = np.zeros(len(self.positions))
        else:
            self.max_seen = np.asarray(self.max_seen, dtype=np.float64).reshape(-1)
        if len(self.max_seen) != len(self.positions):
            raise ValueError("max_seen length must match vertex count")

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as (E, 2) sorted index pairs."""
        e = np.concatenate(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        return np.unique(np.sort(e, axis=1), axis=0)

    def copy(self) -> "SurfaceMesh":
        return SurfaceMesh(self.positions.copy(), self.triangles.copy(), self.max_seen.copy())


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

# Regular icosahedron; winding checked outward (signed volume > 0).
_ICO_VERTS = np.array(
    [
        [-1.0, _PHI, 0.0],
        [1.0, _PHI, 0.0],
        [-1.0, -_PHI, 0.0],
        [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI],
        [0.0, 1.0, _PHI],
        [0.0, -1.0, -_PHI],
        [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0],
        [_PHI, 0.0, 1.0],
        [-_PHI, 0.0, -1.0],
        [-_PHI, 0.0, 1.0],
    ]
)

_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def make_icosphere(center, radius: float, subdivisions: int = 0) -> SurfaceMesh:
    """Icosahedron subdivided ``subdivisions`` times, vertices projected to the sphere."""
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if subdivisions < 0:
        raise ValueError(f"subdivisions must be >= 0, got {subdivisions}")
    center = np.asarray(center, dtype=np.float64).reshape(3)

    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]

    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        new_faces = []
        for i, j, k in faces:
            ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = new_faces

    positions = center + radius * np.array(verts)
    return SurfaceMesh(positions, np.array(faces, dtype=np.int64), np.zeros(len(verts)))


# ---------------------------------------------------------------------------
# Per-vertex queries
# ---------------------------------------------------------------------------

def _face_cross(mesh: SurfaceMesh) -> np.ndarray:
    a = mesh.positions[mesh.triangles[:, 0]]
    b = mesh.positions[mesh.triangles[:, 1]]
    c = mesh.positions[mesh.triangles[:, 2]]
    return np.cross(b - a, c - a)


def vertex_normals(mesh: SurfaceMesh) -> np.ndarray:
    """Area-weighted unit vertex normals (accumulated face cross products)."""
    cross = _face_cross(mesh)
    vn = np.zeros_like(mesh.positions)
    for col in range(3):
        np.add.at(vn, mesh.triangles[:, col], cross)
    norms = np.linalg.norm(vn, axis=1)
    bad = np.where(norms < 1e-300)[0]
    if bad.size:
        raise ValueError(f"zero-length accumulated normal at vertex {int(bad[0])}")
    return vn / norms[:, None]


def mean_curvature(mesh: SurfaceMesh) -> np.ndarray:
    """Mean curvature magnitude per vertex (mm^-1, >= 0).

    Cotangent Laplacian with weights clamped to [0, 1e4], normalized by the
    Meyer mixed area; H is half the norm of the resulting displacement.
    Clamping negative cotangents trades exactness on obtuse planar patches
    for stability of the inflation damping term.
    """
    pos = mesh.positions
    tri = mesh.triangles
    i, j, k = tri[:, 0], tri[:, 1], tri[:, 2]

    def cot(u, v):
        c = np.cross(u, v)
        s = np.linalg.norm(c, axis=1)
        return np.einsum("ij,ij->i", u, v) / np.maximum(s, 1e-300)

    cot_i = cot(pos[j] - pos[i], pos[k] - pos[i])  # opposes edge (j, k)
    cot_j = cot(pos[k] - pos[j], pos[i] - pos[j])  # opposes edge (k, i)
    cot_k = cot(pos[i] - pos[k], pos[j] - pos[k])  # opposes edge (i, j)

    w_jk = np.clip(cot_i, 0.0, _COT_CLAMP)
    w_ki = np.clip(cot_j, 0.0, _COT_CLAMP)
    w_ij = np.clip(cot_k, 0.0, _COT_CLAMP)

    lap = np.zeros_like(pos)
    for (a, b, w) in ((j, k, w_jk), (k, i, w_ki), (i, j, w_ij)):
        np.add.at(lap, a, w[:, None] * (pos[b] - pos[a]))
        np.add.at(lap, b, w[:, None] * (pos[a] - pos[b]))

    area = 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)
    mixed = np.zeros(len(pos))
    obtuse_i = cot_i < 0.0
    obtuse_j = cot_j < 0.0
    obtuse_k = cot_k < 0.0
    any_obtuse = obtuse_i | obtuse_j | obtuse_k

    sq = lambda a, b: np.einsum("ij,ij->i", pos[a] - pos[b], pos[a] - pos[b])
    l_ij, l_jk, l_ki = sq(i, j), sq(j, k), sq(k, i)
    # Voronoi areas for non-obtuse triangles
    von_i = (l_ij * cot_k + l_ki * cot_j) / 8.0
    von_j = (l_jk * cot_i + l_ij * cot_k) / 8.0
    von_k = (l_ki * cot_j + l_jk * cot_i) / 8.0
    good = ~any_obtuse
    np.add.at(mixed, i[good], von_i[good])
    np.add.at(mixed, j[good], von_j[good])
    np.add.at(mixed, k[good], von_k[good])
    # Obtuse fallback: half the area at the obtuse corner, a quarter elsewhere
    for corner, obt in ((i, obtuse_i), (j, obtuse_j), (k, obtuse_k)):
        sel = any_obtuse
        share = np.where(obt[sel], 0.5, 0.25)
        np.add.at(mixed, corner[sel], share * area[sel])

    bad = np.where(mixed < 1e-300)[0]
    if bad.size:
        raise ValueError(f"vertex {int(bad[0])} has no incident area (isolated vertex)")
    disp = lap / (2.0 * mixed[:, None])
    return 0.5 * np.linalg.norm(disp, axis=1)


def mesh_volume(mesh: SurfaceMesh) -> float:
    """Signed volume by the divergence theorem; positive for outward orientation."""
    a = mesh.positions[mesh.triangles[:, 0]]
    b = mesh.positions[mesh.triangles[:, 1]]
    c = mesh.positions[mesh.triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def avg_center_distance(mesh: SurfaceMesh, center) -> float:
    """Arithmetic mean vertex distance to ``center`` (the stall monitor)."""
    center = np.asarray(center, dtype=np.float64).reshape(3)
    return float(np.linalg.norm(mesh.positions - center, axis=1).mean())


# ---------------------------------------------------------------------------
# Mutations
# ---------------------------------------------------------------------------

def split_long_edges(mesh: SurfaceMesh, threshold_mm: float) -> int:
    """Split every edge longer than ``threshold_mm`` at its midpoint.

    Works on a snapshot of the long edges, longest first, one pass; edges
    created by a split are not revisited.  Each split replaces the two
    incident triangles by four and inherits ``max_seen`` as the max of the
    endpoints.  Returns the number of splits.
    """
    if threshold_mm <= 0:
        raise ValueError(f"threshold_mm must be > 0, got {threshold_mm}")
    edges = mesh.edges()
    lengths = np.linalg.norm(mesh.positions[edges[:, 0]] - mesh.positions[edges[:, 1]], axis=1)
    long_idx = np.where(lengths > threshold_mm)[0]
    if long_idx.size == 0:
        return 0
    order = np.lexsort((edges[long_idx, 1], edges[long_idx, 0], -lengths[long_idx]))
    snapshot = edges[long_idx][order]

    endpoints = set(snapshot.ravel().tolist())
    tris = [tuple(t) for t in mesh.triangles.tolist()]
    alive = [True] * len(tris)
    candidates = [t for t, (a, b, c) in enumerate(tris) if a in endpoints or b in endpoints or c in endpoints]

    emap: dict[tuple[int, int], list[int]] = {}

    def register(t: int) -> None:
        a, b, c = tris[t]
        for e in ((a, b), (b, c), (c, a)):
            key = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
            emap.setdefault(key, []).append(t)

    for t in candidates:
        register(t)

    positions = mesh.positions.tolist()
    max_seen = mesh.max_seen.tolist()
    splits = 0

    for a, b in snapshot.tolist():
        key = (a, b) if a < b else (b, a)
        adj = sorted(t for t in emap.get(key, ()) if alive[t])
        if len(adj) != 2:
            raise ValueError(f"edge {key} is shared by {len(adj)} triangles, mesh not closed")
        m = len(positions)
        pa, pb = positions[a], positions[b]
        positions.append([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0])
        max_seen.append(max(max_seen[a], max_seen[b]))
        for t in adj:
            v0, v1, v2 = tris[t]
            # locate the directed occurrence of {a, b} to preserve winding
            if (v0, v1) in ((a, b), (b, a)):
                x, y, opp = v0, v1, v2
            elif (v1, v2) in ((a, b), (b, a)):
                x, y, opp = v1, v2, v0
            else:
                x, y, opp = v2, v0, v1
            alive[t] = False
            for child in ((x, m, opp), (m, y, opp)):
                tris.append(child)
                alive.append(True)
                register(len(tris) - 1)
        splits += 1

    mesh.positions = np.array(positions, dtype=np.float64)
    mesh.max_seen = np.array(max_seen, dtype=np.float64)
    mesh.triangles = np.array([t for t, keep in zip(tris, alive) if keep], dtype=np.int64)
    return splits


def laplacian_smooth(mesh: SurfaceMesh, lam: float) -> None:
    """One pass of uniform umbrella smoothing from a position snapshot."""
    if not (1e-12 <= lam < 1.0):
        raise ValueError(f"smoothing lambda must be in [1e-12, 1), got {lam}")
    edges = mesh.edges()
    acc = np.zeros_like(mesh.positions)
    deg = np.zeros(len(mesh.positions))
    np.add.at(acc, edges[:, 0], mesh.positions[edges[:, 1]])
    np.add.at(acc, edges[:, 1], mesh.positions[edges[:, 0]])
    np.add.at(deg, edges[:, 0], 1.0)
    np.add.at(deg, edges[:, 1], 1.0)
    mean = acc / np.maximum(deg, 1.0)[:, None]
    mesh.positions = mesh.positions + lam * (mean - mesh.positions)


# ---------------------------------------------------------------------------
# Validation and diagnostics
# ---------------------------------------------------------------------------

def validate_mesh(mesh: SurfaceMesh) -> None:
    """Raise if the mesh violates any SurfaceMesh invariant."""
    V, F = mesh.vertex_count, mesh.triangle_count
    if mesh.triangles.min(initial=0) < 0 or mesh.triangles.max(initial=-1) >= V:
        raise ValueError("triangle indices out of range")
    e = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    if not np.all(counts == 2):
        n = int(np.count_nonzero(counts != 2))
        raise ValueError(f"{n} edges are not shared by exactly 2 triangles (not a closed 2-manifold)")
    E = len(uniq)
    if V - E + F != 2:
        raise ValueError(f"Euler characteristic V-E+F = {V - E + F}, expected 2")
    area = 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)
    if np.any(area <= _MIN_TRIANGLE_AREA):
        raise ValueError(f"{int(np.count_nonzero(area <= _MIN_TRIANGLE_AREA))} degenerate triangles")
    vol = mesh_volume(mesh)
    if vol <= 0:
        raise ValueError(f"signed volume {vol} <= 0 (orientation not outward)")


def star_shape_score(mesh: SurfaceMesh, center, n_dirs: int = 1000) -> float:
    """Fraction of directions whose ray from ``center`` crosses the mesh exactly once.

    Diagnostic only; directions form a deterministic Fibonacci sphere.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    idx = np.arange(n_dirs, dtype=np.float64) + 0.5
    phi = np.arccos(1.0 - 2.0 * idx / n_dirs)
    theta = np.pi * (1.0 + math.sqrt(5.0)) * idx
    dirs = np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1
    )

    a = mesh.positions[mesh.triangles[:, 0]] - center
    b = mesh.positions[mesh.triangles[:, 1]] - center
    c = mesh.positions[mesh.triangles[:, 2]] - center
    e1 = b - a
    e2 = c - a
    single = 0
    for d in dirs:
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = -a
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = np.einsum("j,ij->i", d, qvec) * inv
        t = np.einsum("ij,ij->i", e2, qvec) * inv
        hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        if int(hits.sum()) == 1:
            single += 1
    return single / float(n_dirs)


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------

def export_mesh(mesh: SurfaceMesh, path: str, fmt: str = "obj") -> None:
    """Write ASCII OBJ (1-based ``v``/``f``) or binary little-endian STL."""
    if fmt == "obj":
        lines = ["v {:.10g} {:.10g} {:.10g}".format(*p) for p in mesh.positions]
        lines += ["f {} {} {}".format(t[0] + 1, t[1] + 1, t[2] + 1) for t in mesh.triangles]
        with open(path, "w", encoding="ascii") as f:
            f.write("\n".join(lines))
            f.write("\n")
    elif fmt == "stl":
        cross = _face_cross(mesh)
        norms = np.linalg.norm(cross, axis=1)
        normals = cross / np.maximum(norms, 1e-300)[:, None]
        with open(path, "wb") as f:
            f.write(b"balloonseg binary stl".ljust(80, b"\0"))
            f.write(struct.pack("<I", mesh.triangle_count))
            for t in range(mesh.triangle_count):
                f.write(struct.pack("<3f", *normals[t]))
                for v in mesh.triangles[t]:
                    f.write(struct.pack("<3f", *mesh.positions[v]))
                f.write(struct.pack("<H", 0))
    else:
        raise ValueError(f"format must be 'obj' or 'stl', got {fmt!r}")


def load_obj(path: str) -> SurfaceMesh:
    """Read back a mesh written by :func:`export_mesh` (OBJ flavor)."""
    positions = []
    faces = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return SurfaceMesh(np.array(positions), np.array(faces, dtype=np.int64))
