"""Synthetic gadolinium-like phantoms with exact ground truth.

A phantom is background tissue, a homogeneous object interior, and a bright
shell hugging the outside of the object surface (the contrast-enhancing rim
the inflation gate detects).  The analytic surface gives an exact truth mask
and a reproducible stand-in for a user contour on any slice.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from .initialization import ContourInit, resample_closed_polyline
from .volume import Mask3D, Volume3D, extract_mask_slice

__all__ = ["PhantomSpec", "generate_phantom", "contour_from_mask"]

SHAPES = ("sphere", "ellipsoid", "lobed")


@dataclass(frozen=True)
class PhantomSpec:
    """All knobs of a synthetic phantom; a pure function input.

    Intensity defaults are calibration choices for a gadolinium-like
    contrast pattern: bright rim outside the object, mid interior,
    dark background.
    """

    dims: tuple[int, int, int] = (128, 128, 128)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shape: str = "sphere"
    center_vox: tuple[float, float, float] = (64.0, 64.0, 64.0)
    radii_mm: tuple[float, float, float] = (15.0, 15.0, 15.0)
    lobe_amplitude: float = 0.2
    intensity_background: float = 100.0
    intensity_interior: float = 160.0
    intensity_shell: float = 300.0
    shell_thickness_mm: float = 2.0
    noise_sigma: float = 10.0
    rng_seed: int = 20220414

    def validate(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing_mm must be positive, got {self.spacing_mm}")
        if any(r <= 0 for r in self.radii_mm):
            raise ValueError(f"radii_mm must be positive, got {self.radii_mm}")
        if not 0.0 <= self.lobe_amplitude <= 0.3:
            raise ValueError(f"lobe_amplitude must be in [0, 0.3], got {self.lobe_amplitude}")
        if not self.intensity_shell > self.intensity_interior > self.intensity_background:
            raise ValueError(
                "intensities must satisfy shell > interior > background, got "
                f"{self.intensity_shell} / {self.intensity_interior} / {self.intensity_background}"
            )
        if self.shell_thickness_mm <= 0:
            raise ValueError(f"shell_thickness_mm must be > 0, got {self.shell_thickness_mm}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        # object (including shell) must keep a 2-voxel margin inside the volume
        grow = 1.0 + (self.lobe_amplitude if self.shape == "lobed" else 0.0)
        for a in range(3):
            reach = (self.radii_mm[a] * grow + self.shell_thickness_mm) / self.spacing_mm[a]
            if self.center_vox[a] - reach < 2.0 or self.center_vox[a] + reach > self.dims[a] - 3.0:
                raise ValueError(
                    f"object exceeds volume bounds on axis {'xyz'[a]}: "
                    f"center {self.center_vox[a]}, reach {reach:.2f} voxels, dim {self.dims[a]}"
                )

    @classmethod
    def from_json(cls, text: str | bytes | dict) -> "PhantomSpec":
        doc = text if isinstance(text, dict) else json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown phantom spec fields: {sorted(unknown)}")
        kwargs = dict(doc)
        for key in ("dims", "spacing_mm", "center_vox", "radii_mm"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        spec = cls(**kwargs)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("dims", "spacing_mm", "center_vox", "radii_mm"):
            d[key] = list(d[key])
        return d


def _radial_fields(spec: PhantomSpec):
    """Per-voxel mm radius and boundary radius along the voxel's direction.

    Spheres use the exact scalar radius so boundary comparisons match
    analytic voxel-center oracles bit for bit.
    """
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing_mm
    cx, cy, cz = spec.center_vox
    dx = ((np.arange(nx) - cx) * sx)[:, None, None]
    dy = ((np.arange(ny) - cy) * sy)[None, :, None]
    dz = ((np.arange(nz) - cz) * sz)[None, None, :]
    rho = np.sqrt(dx * dx + dy * dy + dz * dz)

    ra, rb, rc = spec.radii_mm
    if ra == rb == rc:
        boundary = np.full(rho.shape, float(ra))
    else:
        rho_norm = np.sqrt((dx / ra) ** 2 + (dy / rb) ** 2 + (dz / rc) ** 2)
        boundary = np.where(rho_norm > 0, rho / np.maximum(rho_norm, 1e-300), float(min(ra, rb, rc)))

    if spec.shape == "lobed":
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_theta = np.where(rho > 0, dz / np.maximum(rho, 1e-300), 1.0)
        theta = np.arccos(np.clip(cos_theta, -1.0, 1.0))
        phi = np.arctan2(np.broadcast_to(dy, rho.shape), np.broadcast_to(dx, rho.shape))
        factor = 1.0 + spec.lobe_amplitude * np.sin(3.0 * theta) * np.sin(2.0 * phi)
        boundary = boundary * factor
    return rho, boundary


def generate_phantom(spec: PhantomSpec):
    """Build (volume, truth mask, suggested central contour) from a spec.

    Truth: voxel centers inside the analytic surface.  Shell: the radial band
    of ``shell_thickness_mm`` just outside the surface.  Gaussian noise comes
    from an explicitly seeded PCG64 stream, so identical specs give
    bit-identical volumes.
    """
    spec.validate()
    rho, boundary = _radial_fields(spec)
    inside = rho <= boundary
    shell = (~inside) & (rho <= boundary + spec.shell_thickness_mm)

    values = np.full(spec.dims, spec.intensity_background, dtype=np.float64)
    values[inside] = spec.intensity_interior
    values[shell] = spec.intensity_shell
    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        values = values + rng.normal(0.0, spec.noise_sigma, size=spec.dims)

    vol = Volume3D(scalars=values, spacing_mm=spec.spacing_mm, value_kind="float32")
    truth = Mask3D(bits=inside, spacing_mm=spec.spacing_mm)
    center_slice = int(round(spec.center_vox[2]))
    contour = contour_from_mask(truth, "z", center_slice, n_points=64)
    return vol, truth, contour


# ---------------------------------------------------------------------------
# Boundary tracing
# ---------------------------------------------------------------------------

# Moore neighborhood in clockwise order, (du, dv)
_MOORE = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)]


def _trace_boundary(grid: np.ndarray) -> np.ndarray:
    """Ordered outer boundary pixels of a connected component (Moore tracing).

    Backtracks through the background pixel examined just before each hit and
    stops with Jacob's criterion (first transition state repeats), which is
    robust for 8-connected components.
    """
    filled = np.zeros((grid.shape[0] + 2, grid.shape[1] + 2), dtype=bool)
    filled[1:-1, 1:-1] = grid

    coords = np.argwhere(filled)
    start = tuple(coords[np.lexsort((coords[:, 1], coords[:, 0]))[0]])
    # lexicographically smallest pixel: its -u neighbor is guaranteed background
    current = start
    back = (start[0] - 1, start[1])

    def advance(c, b):
        k = _MOORE.index((b[0] - c[0], b[1] - c[1]))
        prev = b
        for step in range(1, 9):
            d = _MOORE[(k + step) % 8]
            cand = (c[0] + d[0], c[1] + d[1])
            if filled[cand]:
                return cand, prev
            prev = cand
        return None, None

    boundary = [start]
    first_state = None
    for _ in range(8 * int(filled.sum()) + 8):
        nxt, back_next = advance(current, back)
        if nxt is None:
            break  # isolated pixel
        state = (nxt, back_next)
        if first_state is None:
            first_state = state
        elif state == first_state:
            break
        boundary.append(nxt)
        current, back = nxt, back_next
    if len(boundary) > 1 and boundary[-1] == boundary[0]:
        boundary = boundary[:-1]
    return np.array(boundary, dtype=np.float64) - 1.0


def contour_from_mask(mask: Mask3D, axis: str, index: int, n_points: int = 64) -> ContourInit:
    """Trace the largest component's outer boundary and resample it to a polygon.

    The Moore trace yields boundary pixel centers; the resampled polygon is
    then pushed half a pixel outward so it follows the component's outer
    edge (its shoelace area matches the pixel count instead of undershooting
    by half the perimeter).  A reproducible stand-in for the user's drawn
    outline; used by the initialization-robustness sweep.
    """
    if n_points < 8:
        raise ValueError(f"n_points must be >= 8, got {n_points}")
    grid = extract_mask_slice(mask, axis, index)
    if not grid.any():
        raise ValueError(f"slice {index} on axis {axis} contains no foreground")
    labels, n = ndimage.label(grid, structure=np.ones((3, 3), dtype=int))
    if n > 1:
        warnings.warn(
            f"slice {index} on axis {axis} has {n} components; using the largest",
            stacklevel=2,
        )
        sizes = ndimage.sum_labels(grid, labels, index=np.arange(1, n + 1))
        grid = labels == (int(np.argmax(sizes)) + 1)

    boundary = _trace_boundary(grid)
    if len(boundary) < 3:
        raise ValueError(
            f"component on slice {index} is too small to outline ({len(boundary)} boundary pixels)"
        )
    pts = resample_closed_polyline(boundary, n_points)
    pts = _offset_outward(pts, 0.5)
    return ContourInit(axis=axis, slice_index=index, points=pts)


def _offset_outward(pts: np.ndarray, amount: float) -> np.ndarray:
    tangent = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    u, v = pts[:, 0], pts[:, 1]
    signed_area = 0.5 * np.sum(u * np.roll(v, -1) - np.roll(u, -1) * v)
    if signed_area < 0:
        normal = -normal
    lengths = np.linalg.norm(normal, axis=1)
    normal /= np.maximum(lengths, 1e-300)[:, None]
    return pts + amount * normal
