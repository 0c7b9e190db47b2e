/** Completed-run bookkeeping: the side-by-side table and reproducibility export. */

import type { ContourJson, SegmentResponse } from "./api.js";
import type { ChartPoint } from "./chart.js";

export interface RunRecord {
  resultId: number;
  axis: string;
  sliceIndex: number;
  volumeMm3: number;
  voxelCount: number;
  iterations: number;
  runtimeMs: number;
  terminationReason: string;
  dscPercent?: number;
  contour: ContourJson;
  config: Record<string, unknown>;
}

export function runFromResponse(
  response: SegmentResponse,
  contour: ContourJson,
  config: Record<string, unknown> = {},
): RunRecord {
  return {
    resultId: response.result_id,
    axis: contour.axis,
    sliceIndex: contour.slice_index,
    volumeMm3: response.volume_mm3,
    voxelCount: response.voxel_count,
    iterations: response.iterations,
    runtimeMs: response.runtime_ms,
    terminationReason: response.termination_reason,
    dscPercent: response.dsc_percent,
    contour,
    config,
  };
}

/** Everything needed to reproduce the run: the exact payload POSTed to the service
 *  (and accepted, contour-file-wise, by the batch CLI). */
export function replayPayload(run: RunRecord): string {
  return JSON.stringify({ contour: run.contour, config: run.config }, null, 2);
}

export function chartPoints(runs: readonly RunRecord[]): ChartPoint[] {
  return runs
    .filter((r) => r.dscPercent !== undefined)
    .map((r) => ({ slice: r.sliceIndex, dsc: r.dscPercent as number }));
}
