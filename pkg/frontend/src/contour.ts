/** Freehand contour capture: canvas-to-voxel mapping, decimation, serialization.
 *
 * The UI adds no geometry processing beyond decimation: the JSON emitted here
 * is exactly what the service (and the batch CLI) consume, so a downloaded
 * contour replays to the same mask.
 */

import type { Axis, ContourJson } from "./api.js";

export type Point = readonly [number, number];

export interface DrawnContour {
  axis: Axis;
  sliceIndex: number;
  pointsVox: Point[];
  closed: boolean;
}

export const MAX_CONTOUR_POINTS = 200;
export const DECIMATE_TOLERANCE_VOX = 0.5;

/** Canvas-to-voxel mapping is a pure scale: no pan or rotation ever enters coordinates. */
export function canvasToVoxel(p: Point, scale: number): Point {
  return [p[0] / scale, p[1] / scale];
}

export function voxelToCanvas(p: Point, scale: number): Point {
  return [p[0] * scale, p[1] * scale];
}

function perpendicularDistance(p: Point, a: Point, b: Point): number {
  const dx = b[0] - a[0];
  const dy = b[1] - a[1];
  const len2 = dx * dx + dy * dy;
  if (len2 === 0) {
    return Math.hypot(p[0] - a[0], p[1] - a[1]);
  }
  return Math.abs(dx * (a[1] - p[1]) - (a[0] - p[0]) * dy) / Math.sqrt(len2);
}

/** Douglas-Peucker on an open polyline; keeps both endpoints. */
export function douglasPeucker(points: Point[], tolerance: number): Point[] {
  if (points.length <= 2) return points.slice();
  const keep = new Array<boolean>(points.length).fill(false);
  keep[0] = keep[points.length - 1] = true;
  const stack: [number, number][] = [[0, points.length - 1]];
  while (stack.length > 0) {
    const [lo, hi] = stack.pop()!;
    let worst = -1;
    let worstDist = tolerance;
    for (let i = lo + 1; i < hi; i++) {
      const d = perpendicularDistance(points[i], points[lo], points[hi]);
      if (d > worstDist) {
        worst = i;
        worstDist = d;
      }
    }
    if (worst >= 0) {
      keep[worst] = true;
      stack.push([lo, worst], [worst, hi]);
    }
  }
  return points.filter((_, i) => keep[i]);
}

function dedupeConsecutive(points: Point[]): Point[] {
  const out: Point[] = [];
  for (const p of points) {
    const last = out[out.length - 1];
    if (!last || last[0] !== p[0] || last[1] !== p[1]) out.push(p);
  }
  if (out.length > 1) {
    const first = out[0];
    const last = out[out.length - 1];
    if (first[0] === last[0] && first[1] === last[1]) out.pop();
  }
  return out;
}

/** Decimate a closed polyline: split at the vertex farthest from the start,
 *  simplify both halves, and rejoin. */
export function decimateClosed(points: Point[], tolerance: number): Point[] {
  const pts = dedupeConsecutive(points);
  if (pts.length <= 3) return pts;
  let far = 1;
  let farDist = -1;
  for (let i = 1; i < pts.length; i++) {
    const d = Math.hypot(pts[i][0] - pts[0][0], pts[i][1] - pts[0][1]);
    if (d > farDist) {
      far = i;
      farDist = d;
    }
  }
  const first = douglasPeucker(pts.slice(0, far + 1), tolerance);
  const second = douglasPeucker([...pts.slice(far), pts[0]], tolerance);
  return dedupeConsecutive([...first.slice(0, -1), ...second.slice(0, -1)]);
}

/** Decimate to the submission budget, relaxing tolerance until it fits. */
export function decimateForSubmission(
  points: Point[],
  tolerance: number = DECIMATE_TOLERANCE_VOX,
  maxPoints: number = MAX_CONTOUR_POINTS,
): Point[] {
  let out = decimateClosed(points, tolerance);
  let tol = tolerance;
  while (out.length > maxPoints) {
    tol *= 1.6;
    out = decimateClosed(points, tol);
  }
  return out;
}

export function canSubmit(contour: DrawnContour): boolean {
  return contour.closed && dedupeConsecutive(contour.pointsVox).length >= 3;
}

/** Serialize to exactly the contour JSON contract shared with the CLI. */
export function toContourJson(contour: DrawnContour): ContourJson {
  return {
    axis: contour.axis,
    slice_index: contour.sliceIndex,
    points_vox: contour.pointsVox.map((p) => [p[0], p[1]] as [number, number]),
  };
}
