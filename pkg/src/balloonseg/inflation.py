"""The balloon inflation engine.

Starting from a small icosphere at the user-initialized center, each
iteration splits overlong edges, estimates per-vertex normals and curvature,
moves every admissible vertex outward along its center-vertex direction
(speed damped by the normal/radial angle and by curvature), and smooths the
surface.  A vertex may move only if the intensity at its target stays inside
the initialized range and above 80% of the brightest value that vertex has
seen; the run stops when the average center-surface distance stalls.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import mesh as meshmod
from . import metrics as metricsmod
from .initialization import InitParams
from .mesh import SurfaceMesh
from .volume import Mask3D, Volume3D, sample_trilinear

__all__ = [
    "InflationConfig",
    "IterationRecord",
    "InflationTrace",
    "SegmentationResult",
    "VertexKinematics",
    "SeedOutsideRangeError",
    "split_threshold_mm",
    "vertex_kinematics",
    "speed_factor",
    "can_move",
    "inflate_once",
    "is_stalled",
    "segment",
]

logger = logging.getLogger(__name__)


class SeedOutsideRangeError(ValueError):
    """The intensity at the init center is outside [lo, hi]; no seed can exist."""


def split_threshold_mm(spacing_mm, split_factor: float) -> float:
    """Edge-split threshold: split_factor times the geometric mean voxel spacing."""
    gmean = (float(spacing_mm[0]) * float(spacing_mm[1]) * float(spacing_mm[2])) ** (1.0 / 3.0)
    return split_factor * gmean


@dataclass(frozen=True)
class InflationConfig:
    """Tunables of the inflation loop.

    ``step_mm`` and ``initial_radius_mm`` default to None and are derived
    from the volume spacing / contour radius when the run starts
    (0.5 x min spacing and min(2 x geometric-mean spacing,
    0.25 x avg_radius_mm) respectively).
    """

    step_mm: float | None = None
    lambda_smooth: float = 0.1
    split_factor: float = 3.0
    boundary_fraction: float = 0.8
    curvature_cap_H: float = 0.5
    min_speed_factor: float = 0.1
    stall_window_W: int = 10
    stall_epsilon: float = 1e-3
    max_iterations: int = 2000
    initial_radius_mm: float | None = None
    initial_subdivisions: int = 2

    def validate(self) -> None:
        for name in ("step_mm", "lambda_smooth", "split_factor", "curvature_cap_H",
                     "min_speed_factor", "stall_epsilon", "initial_radius_mm"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError(f"boundary_fraction must be in (0, 1), got {self.boundary_fraction}")
        if self.stall_window_W < 2:
            raise ValueError(f"stall_window_W must be >= 2, got {self.stall_window_W}")
        if self.max_iterations < 0:
            raise ValueError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.initial_subdivisions < 0:
            raise ValueError(f"initial_subdivisions must be >= 0, got {self.initial_subdivisions}")

    @classmethod
    def from_json(cls, text: str | bytes | dict) -> "InflationConfig":
        doc = text if isinstance(text, dict) else json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown inflation config fields: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def resolved(self, vol: Volume3D, init: InitParams) -> "InflationConfig":
        """Fill data-dependent defaults for a concrete volume and init."""
        gmean = (vol.spacing_mm[0] * vol.spacing_mm[1] * vol.spacing_mm[2]) ** (1.0 / 3.0)
        step = self.step_mm if self.step_mm is not None else 0.5 * min(vol.spacing_mm)
        radius = (
            self.initial_radius_mm
            if self.initial_radius_mm is not None
            else min(2.0 * gmean, 0.25 * init.avg_radius_mm)
        )
        cfg = replace(self, step_mm=step, initial_radius_mm=radius)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    avg_center_distance_mm: float
    moved_vertex_count: int
    vertex_count: int
    split_count: int


@dataclass
class InflationTrace:
    """Per-iteration diagnostics; the stall rule watches the distance series."""

    records: list[IterationRecord] = field(default_factory=list)
    termination_reason: str = ""

    def distances(self) -> np.ndarray:
        return np.array([r.avg_center_distance_mm for r in self.records])

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "termination_reason": self.termination_reason,
        }


@dataclass
class VertexKinematics:
    """Per-vertex movement inputs: arrays over all mesh vertices."""

    normal: np.ndarray       # (V, 3) unit surface normals
    center_dir: np.ndarray   # (V, 3) unit center-to-vertex directions
    cos_phi: np.ndarray      # (V,)   normal . center_dir
    curvature_H: np.ndarray  # (V,)   mean curvature magnitude, mm^-1
    speed: np.ndarray        # (V,)   resulting speed factor in [0, 1]
    degenerate: np.ndarray   # (V,)   vertices coinciding with the center


@dataclass
class SegmentationResult:
    mesh: SurfaceMesh
    mask: Mask3D
    volume_mm3: float
    voxel_count: int
    trace: InflationTrace
    runtime_ms: float
    dsc_vs_truth: float | None = None
    star_shape_score: float | None = None


def speed_factor(cos_phi, curvature_H, cfg: InflationConfig):
    """Inflation speed in [0, 1]: angle gate times curvature damping.

    Zero whenever the normal points sideways or inward (cos phi <= 0);
    the curvature term decays linearly to a floor of ``min_speed_factor``.
    Accepts scalars or arrays.
    """
    angle = np.clip(cos_phi, 0.0, 1.0)
    damping = np.maximum(cfg.min_speed_factor, np.minimum(1.0, 1.0 - np.asarray(curvature_H) / cfg.curvature_cap_H))
    out = angle * damping
    return float(out) if np.isscalar(cos_phi) or np.asarray(cos_phi).ndim == 0 else out


def vertex_kinematics(mesh: SurfaceMesh, center, cfg: InflationConfig) -> VertexKinematics:
    """Bundle normals, radial directions, cos phi, curvature and speed."""
    center = np.asarray(center, dtype=np.float64).reshape(3)
    normals = meshmod.vertex_normals(mesh)
    d = mesh.positions - center
    r = np.linalg.norm(d, axis=1)
    degenerate = r < 1e-12
    dirs = np.zeros_like(d)
    ok = ~degenerate
    dirs[ok] = d[ok] / r[ok, None]
    cos_phi = np.einsum("ij,ij->i", normals, dirs)
    curvature = meshmod.mean_curvature(mesh)
    speed = speed_factor(cos_phi, curvature, cfg)
    speed = np.where(degenerate, 0.0, speed)
    return VertexKinematics(normals, dirs, cos_phi, curvature, speed, degenerate)


def can_move(vol: Volume3D, init: InitParams, target_pos_mm, max_seen, cfg: InflationConfig):
    """Admissibility of target positions (mm), vectorized.

    Allowed iff the trilinear intensity lies within [lo, hi] and strictly
    exceeds ``boundary_fraction`` of the vertex's running max; a vertex that
    has seen nothing yet (max_seen <= 0) faces only the range condition.
    Returns (allowed, sampled_intensity).
    """
    targets = np.atleast_2d(np.asarray(target_pos_mm, dtype=np.float64))
    single = np.asarray(target_pos_mm).ndim == 1
    vox = targets / np.asarray(vol.spacing_mm)
    intensity = np.atleast_1d(sample_trilinear(vol, vox))
    seen = np.atleast_1d(np.asarray(max_seen, dtype=np.float64))
    in_range = (intensity >= init.intensity_lo) & (intensity <= init.intensity_hi)
    above_floor = (seen <= 0.0) | (intensity > cfg.boundary_fraction * seen)
    allowed = in_range & above_floor
    if single:
        return bool(allowed[0]), float(intensity[0])
    return allowed, intensity


def inflate_once(
    mesh: SurfaceMesh,
    center,
    vol: Volume3D,
    init: InitParams,
    cfg: InflationConfig,
    debug: dict | None = None,
) -> int:
    """One inflation pass over a position snapshot; returns moved vertex count.

    Every admissible vertex moves outward along its center-vertex direction
    by step x speed, strictly increasing its radial distance, and absorbs the
    sampled target intensity into ``max_seen``.  Vertices coinciding with the
    center are skipped and reported.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    kin = vertex_kinematics(mesh, center, cfg)
    n_degenerate = int(kin.degenerate.sum())
    if n_degenerate:
        logger.warning("inflate_once: %d vertices coincide with the center; skipped", n_degenerate)

    step = cfg.step_mm
    if step is None:
        raise ValueError("config must be resolved (step_mm is None)")
    disp = step * kin.speed
    active = (~kin.degenerate) & (disp > 0.0)

    positions = mesh.positions
    r_before = np.linalg.norm(positions - center, axis=1)
    targets = positions[active] + disp[active, None] * kin.center_dir[active]
    allowed, intensity = can_move(vol, init, targets, mesh.max_seen[active], cfg)

    moved = np.zeros(len(positions), dtype=bool)
    moved[np.flatnonzero(active)[allowed]] = True
    new_positions = positions.copy()
    new_positions[moved] = targets[allowed]
    new_seen = mesh.max_seen.copy()
    new_seen[moved] = np.maximum(new_seen[moved], intensity[allowed])
    mesh.positions = new_positions
    mesh.max_seen = new_seen

    if debug is not None:
        debug["moved"] = moved
        debug["r_before"] = r_before
        debug["r_after"] = np.linalg.norm(new_positions - center, axis=1)
        debug["positions_after_move"] = new_positions.copy()
        debug["intensity"] = intensity
        debug["allowed"] = allowed
        debug["degenerate_count"] = n_degenerate
    return int(moved.sum())


def is_stalled(trace: InflationTrace, cfg: InflationConfig) -> bool:
    """True once the W-iteration relative growth of the distance series drops below epsilon."""
    r = trace.distances()
    if len(r) < cfg.stall_window_W:
        return False
    growth = (r[-1] - r[-cfg.stall_window_W]) / max(r[-1], 1e-12)
    return bool(growth < cfg.stall_epsilon)


def segment(
    vol: Volume3D,
    init: InitParams,
    cfg: InflationConfig | None = None,
    truth: Mask3D | None = None,
    on_iteration=None,
) -> SegmentationResult:
    """Run the full pipeline: seed icosphere, iterate, voxelize, evaluate.

    Deterministic for fixed inputs.  ``on_iteration(mesh, record, debug)`` is
    called after each iteration when given (invariant suites hook into this).
    """
    t0 = time.perf_counter()
    cfg = (cfg or InflationConfig()).resolved(vol, init)

    center_vox = np.asarray(init.center_vox, dtype=np.float64)
    dims = np.array(vol.dims, dtype=np.float64)
    if np.any(center_vox < 0) or np.any(center_vox > dims - 1):
        raise ValueError(f"init center {center_vox.tolist()} lies outside the volume")
    seed_intensity = sample_trilinear(vol, center_vox)
    if not init.intensity_lo <= seed_intensity <= init.intensity_hi:
        raise SeedOutsideRangeError(
            f"intensity {seed_intensity:.3f} at the init center is outside "
            f"[{init.intensity_lo:.3f}, {init.intensity_hi:.3f}]; seed mesh cannot exist inside the tumor"
        )

    spacing = np.asarray(vol.spacing_mm)
    center_mm = center_vox * spacing
    split_threshold = split_threshold_mm(vol.spacing_mm, cfg.split_factor)

    mesh = meshmod.make_icosphere(center_mm, cfg.initial_radius_mm, cfg.initial_subdivisions)
    trace = InflationTrace()
    trace.termination_reason = "max_iterations"

    for it in range(1, cfg.max_iterations + 1):
        splits = meshmod.split_long_edges(mesh, split_threshold)
        debug: dict | None = {} if on_iteration is not None else None
        moved = inflate_once(mesh, center_mm, vol, init, cfg, debug=debug)
        meshmod.laplacian_smooth(mesh, cfg.lambda_smooth)
        record = IterationRecord(
            iteration=it,
            avg_center_distance_mm=meshmod.avg_center_distance(mesh, center_mm),
            moved_vertex_count=moved,
            vertex_count=mesh.vertex_count,
            split_count=splits,
        )
        trace.records.append(record)
        if on_iteration is not None:
            on_iteration(mesh, record, debug)
        if is_stalled(trace, cfg):
            trace.termination_reason = "stalled"
            break

    mask = metricsmod.voxelize(mesh, vol.dims, vol.spacing_mm)
    voxel_count, volume_mm3 = metricsmod.volume_from_mask(mask)
    dsc = metricsmod.dice(mask, truth) if truth is not None else None
    score = meshmod.star_shape_score(mesh, center_mm)
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    return SegmentationResult(
        mesh=mesh,
        mask=mask,
        volume_mm3=volume_mm3,
        voxel_count=voxel_count,
        trace=trace,
        runtime_ms=runtime_ms,
        dsc_vs_truth=dsc,
        star_shape_score=score,
    )
