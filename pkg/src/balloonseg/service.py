"""HTTP facade for the browser UI.

One volume per server process, loaded at startup.  GETs are side-effect
free; POST /api/segment runs synchronously under a single-flight lock and
returns 409 while a run is in progress.
"""

from __future__ import annotations

import os
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .inflation import InflationConfig, SegmentationResult, segment
from .initialization import ContourInit, process_contour
from .volume import Mask3D, Volume3D, extract_mask_slice, extract_slice, load_mask, load_volume

__all__ = ["create_app", "window_slice"]

_AXES = ("x", "y", "z")


def window_slice(img: np.ndarray, lo: float, hi: float) -> bytes:
    """Linear window [lo, hi] -> uint8, row-major bytes (fast axis contiguous).

    A degenerate window (lo == hi) renders all zero.
    """
    if hi <= lo:
        return bytes(img.size)
    scaled = (img - lo) / (hi - lo) * 255.0
    out = np.clip(np.round(scaled), 0.0, 255.0).astype(np.uint8)
    return out.tobytes(order="F")


def mask_slice_runs(mask: Mask3D, axis: str, index: int) -> list[list[int]]:
    """Run-length encode a mask slice over its row-major (x-fastest) flattening."""
    flat = extract_mask_slice(mask, axis, index).ravel(order="F")
    runs: list[list[int]] = []
    pos = 0
    n = len(flat)
    while pos < n:
        if flat[pos]:
            start = pos
            while pos < n and flat[pos]:
                pos += 1
            runs.append([start, pos - start])
        else:
            pos += 1
    return runs


def create_app(volume_path: str, truth_path: str | None = None) -> FastAPI:
    """Build the app; volume load failures raise here so the server never starts broken."""
    volume = load_volume(volume_path)
    truth = load_mask(truth_path) if truth_path else None
    if truth is not None and truth.dims != volume.dims:
        raise ValueError(f"truth dims {truth.dims} do not match volume dims {volume.dims}")

    app = FastAPI(title="balloonseg service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Width", "X-Height"],
    )

    app.state.volume = volume
    app.state.truth = truth
    app.state.intensity_min = float(volume.scalars.min())
    app.state.intensity_max = float(volume.scalars.max())
    app.state.results: dict[int, SegmentationResult] = {}
    app.state.next_result_id = 1
    app.state.segment_lock = threading.Lock()

    @app.get("/api/volume")
    def volume_meta():
        return {
            "dims": list(volume.dims),
            "spacing_mm": list(volume.spacing_mm),
            "intensity_min": app.state.intensity_min,
            "intensity_max": app.state.intensity_max,
            "has_truth": truth is not None,
        }

    @app.get("/api/slice/{axis}/{index}")
    def slice_bytes(axis: str, index: int, lo: float | None = None, hi: float | None = None):
        if axis not in _AXES:
            raise HTTPException(status_code=404, detail=f"unknown axis {axis!r}")
        try:
            img = extract_slice(volume, axis, index)
        except IndexError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        lo = app.state.intensity_min if lo is None else lo
        hi = app.state.intensity_max if hi is None else hi
        body = window_slice(img, lo, hi)
        return Response(
            content=body,
            media_type="application/octet-stream",
            headers={"X-Width": str(img.shape[0]), "X-Height": str(img.shape[1])},
        )

    @app.post("/api/segment")
    async def run_segment(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "contour" not in body:
            raise HTTPException(status_code=422, detail="body must contain a 'contour' object")
        if not app.state.segment_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a segmentation is already running")
        try:
            try:
                contour = ContourInit.from_json(body["contour"])
                cfg = InflationConfig.from_json(body.get("config") or {})
                init = process_contour(volume, contour)
            except (ValueError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=f"invalid contour: {exc}") from None
            try:
                result = segment(volume, init, cfg=cfg, truth=truth)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from None
            result_id = app.state.next_result_id
            app.state.next_result_id += 1
            app.state.results[result_id] = result
        finally:
            app.state.segment_lock.release()
        payload = {
            "result_id": result_id,
            "volume_mm3": result.volume_mm3,
            "voxel_count": result.voxel_count,
            "iterations": len(result.trace.records),
            "termination_reason": result.trace.termination_reason,
            "runtime_ms": result.runtime_ms,
        }
        if result.dsc_vs_truth is not None:
            payload["dsc_percent"] = result.dsc_vs_truth
        return payload

    @app.get("/api/mask/{result_id}/{axis}/{index}")
    def mask_runs(result_id: int, axis: str, index: int):
        if axis not in _AXES:
            raise HTTPException(status_code=404, detail=f"unknown axis {axis!r}")
        result = app.state.results.get(result_id)
        if result is None:
            raise HTTPException(status_code=404, detail=f"unknown result id {result_id}")
        try:
            runs = mask_slice_runs(result.mask, axis, index)
        except IndexError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"runs": runs}

    repo_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    ui_dir = os.path.join(repo_root, "frontend", "dist")
    if os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
