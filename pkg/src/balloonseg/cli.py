"""Batch command line: phantom generation, segmentation, evaluation, sweep, serve.

Exit codes: 0 success, 1 domain/validation error, 2 usage or JSON parse error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .inflation import InflationConfig, segment
from .initialization import ContourInit, process_contour, resample_closed_polyline, contour_centroid
from .metrics import EvalReport, volume_from_mask
from .mesh import export_mesh
from .phantom import PhantomSpec, generate_phantom, contour_from_mask
from .volume import load_mask, load_volume, save_mask, save_volume

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    """Malformed command-line value (exit code 2)."""


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="balloonseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="generate a synthetic phantom with ground truth")
    sp.add_argument("--spec", required=True, help="PhantomSpec JSON file")
    sp.add_argument("--out", required=True, help="output prefix")

    sp = sub.add_parser("segment", help="segment a volume from a contour initialization")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--contour", required=True, help="contour JSON file")
    sp.add_argument("--config", help="InflationConfig JSON file")
    sp.add_argument("--truth", help="ground-truth mask for DSC")
    sp.add_argument("--out", required=True, help="output prefix")

    sp = sub.add_parser("evaluate", help="Dice report between two masks")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)

    sp = sub.add_parser("sweep", help="initialization-robustness sweep over truth slices")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--slices", help="A..B inclusive slice range (default: all nonempty)")
    sp.add_argument("--config", help="InflationConfig JSON file")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--jitter", type=int, default=0, metavar="N",
                    help="run N radially jittered contours per slice instead of one")
    sp.add_argument("--seed", type=int, default=0, help="jitter RNG seed")

    sp = sub.add_parser("serve", help="start the HTTP service for the browser UI")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--truth")
    sp.add_argument("--port", type=int, default=8191)
    sp.add_argument("--host", default="127.0.0.1")
    return p


def _read_json_file(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def cmd_phantom(args) -> int:
    spec = PhantomSpec.from_json(_read_json_file(args.spec))
    vol, truth, contour = generate_phantom(spec)
    prefix = args.out
    save_volume(vol, prefix + "_vol.nrrd")
    save_mask(truth, prefix + "_truth.nrrd")
    with open(prefix + "_contour.json", "w", encoding="utf-8") as f:
        f.write(contour.to_json())
        f.write("\n")
    voxels, volume_mm3 = volume_from_mask(truth)
    meta = {
        "spec": spec.to_dict(),
        "truth_voxels": voxels,
        "truth_volume_mm3": volume_mm3,
        "files": {
            "volume": prefix + "_vol.nrrd",
            "truth": prefix + "_truth.nrrd",
            "contour": prefix + "_contour.json",
        },
    }
    with open(prefix + "_meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(json.dumps({"written": list(meta["files"].values()) + [prefix + "_meta.json"]}))
    return 0


def segment_metrics_dict(result, include_runtime: bool = True) -> dict:
    out = {
        "volume_mm3": result.volume_mm3,
        "volume_cm3": result.volume_mm3 / 1000.0,
        "voxel_count": result.voxel_count,
        "iterations": len(result.trace.records),
        "termination_reason": result.trace.termination_reason,
        "star_shape_score": result.star_shape_score,
        "trace": result.trace.to_dict(),
    }
    if include_runtime:
        out["runtime_ms"] = result.runtime_ms
    if result.dsc_vs_truth is not None:
        out["dsc_percent"] = result.dsc_vs_truth
    return out


def cmd_segment(args) -> int:
    vol = load_volume(args.volume)
    contour = ContourInit.from_json(_read_json_file(args.contour))
    cfg = InflationConfig.from_json(_read_json_file(args.config)) if args.config else InflationConfig()
    truth = load_mask(args.truth) if args.truth else None
    init = process_contour(vol, contour)
    result = segment(vol, init, cfg=cfg, truth=truth)

    prefix = args.out
    save_mask(result.mask, prefix + "_mask.nrrd")
    export_mesh(result.mesh, prefix + "_mesh.obj", "obj")
    metrics = segment_metrics_dict(result)
    with open(prefix + "_metrics.json", "w", encoding="utf-8") as f:
        json.dump(metrics, f, indent=2)
        f.write("\n")
    printable = dict(metrics)
    printable.pop("trace")
    print(json.dumps(printable, indent=2))
    return 0


def cmd_evaluate(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth)
    print(EvalReport.from_masks(pred, truth).to_json())
    return 0


def jitter_contour(contour: ContourInit, fraction: float, rng: np.random.Generator) -> ContourInit:
    """Displace each resampled point radially by uniform(-fraction, +fraction) of its radius."""
    pts = resample_closed_polyline(contour.points, len(contour.points))
    center = contour_centroid(contour)
    plane = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}[contour.axis]
    c = np.array([center[plane[0]], center[plane[1]]])
    radial = pts - c
    scale = 1.0 + rng.uniform(-fraction, fraction, size=len(pts))
    return ContourInit(axis=contour.axis, slice_index=contour.slice_index,
                       points=c + radial * scale[:, None])


def _parse_slice_range(text: str):
    lo, sep, hi = text.partition("..")
    if not sep:
        raise UsageError(f"--slices expects A..B, got {text!r}")
    try:
        return int(lo), int(hi)
    except ValueError:
        raise UsageError(f"--slices expects integer bounds, got {text!r}") from None


def cmd_sweep(args) -> int:
    vol = load_volume(args.volume)
    truth = load_mask(args.truth)
    nonempty = np.flatnonzero(truth.bits.any(axis=(0, 1)))
    if nonempty.size == 0:
        raise ValueError(f"truth mask {args.truth} is empty")
    lo_slice, hi_slice = int(nonempty[0]), int(nonempty[-1])
    if args.slices:
        a, b = _parse_slice_range(args.slices)
        slices = [k for k in range(a, b + 1) if truth.bits[:, :, k].any()] if b >= a else []
    else:
        slices = [int(k) for k in nonempty]
    cfg = InflationConfig.from_json(_read_json_file(args.config)) if args.config else InflationConfig()
    truth_voxels, truth_volume = volume_from_mask(truth)

    rows = []
    for k in slices:
        runs = max(1, args.jitter)
        for j in range(runs):
            try:
                contour = contour_from_mask(truth, "z", k)
                if args.jitter:
                    rng = np.random.Generator(np.random.PCG64([args.seed, k, j]))
                    contour = jitter_contour(contour, 0.10, rng)
                init = process_contour(vol, contour)
                result = segment(vol, init, cfg=cfg, truth=truth)
                rows.append((k, f"{result.volume_mm3:.6g}", str(result.voxel_count),
                             f"{result.dsc_vs_truth:.4f}"))
            except Exception as exc:  # per-slice failures recorded, run continues
                print(f"slice {k}: {exc}", file=sys.stderr)
                rows.append((k, "", "", ""))

    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write("slice,volume_mm3,voxels,dsc\n")
        for k, v, n, d in rows:
            f.write(f"{k},{v},{n},{d}\n")

    summary = {
        "csv": args.out,
        "rows": len(rows),
        "truth_voxels": truth_voxels,
        "truth_volume_mm3": truth_volume,
        "slice_extent": [lo_slice, hi_slice],
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.volume, truth_path=args.truth)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


_HANDLERS = {
    "phantom": cmd_phantom,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
