"""User initialization: a single-slice contour reduced to seed quantities.

The drawn polygon yields three numbers the inflation engine needs: the
object center (area centroid plus slice index), a trimmed intensity range
of the enclosed pixels, and the mean center-to-boundary distance in mm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .volume import Volume3D, extract_slice

__all__ = [
    "ContourInit",
    "InitParams",
    "contour_centroid",
    "contour_avg_radius",
    "contour_intensity_range",
    "process_contour",
    "resample_closed_polyline",
    "rasterize_polygon",
]

_AXES = {"x": 0, "y": 1, "z": 2}
# In-plane axes in ascending order for each slicing axis.
_PLANE_AXES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}

RESAMPLE_POINTS = 256


@dataclass
class ContourInit:
    """Closed simple polygon drawn on one axis-aligned slice, voxel coordinates."""

    axis: str
    slice_index: int
    points: np.ndarray  # (N, 2) float64 (u, v) in the slice plane

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of x, y, z; got {self.axis!r}")
        self.slice_index = int(self.slice_index)
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be an (N, 2) array, got shape {pts.shape}")
        if len(pts) < 3:
            raise ValueError(f"contour needs at least 3 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("contour points must be finite")
        self.points = pts

    def validate(self) -> None:
        """Full invariant check: nonzero area and no self-intersection."""
        if abs(_signed_area(self.points)) < 1e-12:
            raise ValueError("contour polygon has zero area")
        if not _is_simple_polygon(self.points):
            raise ValueError("contour polygon is self-intersecting")

    @classmethod
    def from_json(cls, text: str | bytes | dict) -> "ContourInit":
        doc = text if isinstance(text, dict) else json.loads(text)
        for key in ("axis", "slice_index", "points_vox"):
            if key not in doc:
                raise ValueError(f"contour JSON missing key '{key}'")
        return cls(axis=doc["axis"], slice_index=doc["slice_index"],
                   points=np.asarray(doc["points_vox"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(
            {
                "axis": self.axis,
                "slice_index": self.slice_index,
                "points_vox": [[float(u), float(v)] for u, v in self.points],
            },
            indent=2,
        )


@dataclass(frozen=True)
class InitParams:
    """Seed quantities extracted from the contour."""

    center_vox: tuple[float, float, float]
    intensity_lo: float
    intensity_hi: float
    avg_radius_mm: float

    def __post_init__(self):
        if self.intensity_lo > self.intensity_hi:
            raise ValueError("intensity_lo must be <= intensity_hi")
        if not self.avg_radius_mm > 0:
            raise ValueError(f"avg_radius_mm must be > 0, got {self.avg_radius_mm}")


# ---------------------------------------------------------------------------
# Polygon helpers
# ---------------------------------------------------------------------------

def _signed_area(points: np.ndarray) -> float:
    u, v = points[:, 0], points[:, 1]
    un, vn = np.roll(u, -1), np.roll(v, -1)
    return 0.5 * float(np.sum(u * vn - un * v))


def _is_simple_polygon(points: np.ndarray) -> bool:
    """O(N^2) segment intersection test; adjacent edges may share only endpoints."""
    n = len(points)

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    for i in range(n):
        a, b = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            if (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share an endpoint by construction
            c, d = points[j], points[(j + 1) % n]
            d1 = orient(a, b, c)
            d2 = orient(a, b, d)
            d3 = orient(c, d, a)
            d4 = orient(c, d, b)
            if d1 * d2 < 0 and d3 * d4 < 0:
                return False
            if d1 == 0 and on_segment(a, b, c):
                return False
            if d2 == 0 and on_segment(a, b, d):
                return False
            if d3 == 0 and on_segment(c, d, a):
                return False
            if d4 == 0 and on_segment(c, d, b):
                return False
    return True


def resample_closed_polyline(points: np.ndarray, n: int, canonical_start: bool = True) -> np.ndarray:
    """``n`` points at equal arc length along the closed polyline.

    With ``canonical_start`` the traversal begins at the lexicographically
    smallest vertex, making the sample set invariant under cyclic rotation
    and reversal of the input list.
    """
    pts = np.asarray(points, dtype=np.float64)
    if canonical_start:
        start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
        pts = np.roll(pts, -start, axis=0)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("degenerate polyline (zero perimeter)")
    s = np.arange(n, dtype=np.float64) * (total / n)
    idx = np.searchsorted(cum, s, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    t = (s - cum[idx]) / np.maximum(seg[idx], 1e-300)
    return closed[idx] + t[:, None] * (closed[idx + 1] - closed[idx])


def rasterize_polygon(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Even-odd interior test at integer pixel centers; boolean (nu, nv) image."""
    nu, nv = shape
    mask = np.zeros((nu, nv), dtype=bool)
    u0 = max(0, int(math.floor(points[:, 0].min())))
    u1 = min(nu - 1, int(math.ceil(points[:, 0].max())))
    v0 = max(0, int(math.floor(points[:, 1].min())))
    v1 = min(nv - 1, int(math.ceil(points[:, 1].max())))
    if u0 > u1 or v0 > v1:
        return mask
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1), indexing="ij")
    px = uu.ravel().astype(np.float64)
    py = vv.ravel().astype(np.float64)

    inside = np.zeros(px.shape, dtype=bool)
    p = points
    q = np.roll(points, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(p, q):
        crosses = (y1 > py) != (y2 > py)
        if not crosses.any():
            continue
        xin = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        inside ^= crosses & (px < xin)
    mask[uu.ravel()[inside], vv.ravel()[inside]] = True
    return mask


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def contour_centroid(contour: ContourInit) -> np.ndarray:
    """Polygon area centroid lifted to 3D voxel coordinates."""
    pts = contour.points
    area = _signed_area(pts)
    if abs(area) < 1e-12:
        raise ValueError("contour polygon has zero area; centroid undefined")
    u, v = pts[:, 0], pts[:, 1]
    un, vn = np.roll(u, -1), np.roll(v, -1)
    cross = u * vn - un * v
    cu = float(np.sum((u + un) * cross) / (6.0 * area))
    cv = float(np.sum((v + vn) * cross) / (6.0 * area))
    out = np.empty(3)
    a, b = _PLANE_AXES[contour.axis]
    out[a], out[b] = cu, cv
    out[_AXES[contour.axis]] = float(contour.slice_index)
    return out


def contour_avg_radius(contour: ContourInit, spacing_mm) -> float:
    """Mean mm distance from the area centroid to 256 equal-arc boundary samples."""
    samples = resample_closed_polyline(contour.points, RESAMPLE_POINTS)
    center3 = contour_centroid(contour)
    a, b = _PLANE_AXES[contour.axis]
    su, sv = float(spacing_mm[a]), float(spacing_mm[b])
    cu, cv = center3[a], center3[b]
    d = np.hypot((samples[:, 0] - cu) * su, (samples[:, 1] - cv) * sv)
    return float(d.mean())


def _nearest_rank(sorted_vals: np.ndarray, percent: float) -> float:
    n = len(sorted_vals)
    rank = max(1, math.ceil(percent / 100.0 * n))
    return float(sorted_vals[min(rank, n) - 1])


def contour_intensity_range(vol: Volume3D, contour: ContourInit, trim_percent: float = 2.0):
    """Trimmed (lo, hi) of intensities inside the polygon on its slice.

    Nearest-rank percentiles at ``trim`` and ``100 - trim``; trim 0 gives
    the exact min and max of the interior pixels.
    """
    if not 0.0 <= trim_percent < 50.0:
        raise ValueError(f"trim_percent must be in [0, 50), got {trim_percent}")
    img = extract_slice(vol, contour.axis, contour.slice_index)
    interior = rasterize_polygon(contour.points, img.shape)
    vals = img[interior]
    if vals.size == 0:
        raise ValueError("contour encloses no pixel centers on its slice")
    vals = np.sort(vals)
    lo = _nearest_rank(vals, trim_percent)
    hi = _nearest_rank(vals, 100.0 - trim_percent)
    return lo, hi


def process_contour(vol: Volume3D, contour: ContourInit, trim_percent: float = 2.0) -> InitParams:
    """Full initialization: centroid, trimmed intensity range, average radius."""
    contour.validate()
    center = contour_centroid(contour)
    dims = np.array(vol.dims, dtype=np.float64)
    if np.any(center < 0) or np.any(center > dims - 1):
        raise ValueError(f"contour centroid {center.tolist()} lies outside the volume")
    lo, hi = contour_intensity_range(vol, contour, trim_percent)
    radius = contour_avg_radius(contour, vol.spacing_mm)
    return InitParams(
        center_vox=(float(center[0]), float(center[1]), float(center[2])),
        intensity_lo=lo,
        intensity_hi=hi,
        avg_radius_mm=radius,
    )
