/** App wiring: slice browser, contour drawing, segmentation, overlay, history. */

import { ApiClient, ApiError } from "./api.js";
import type { Axis, ContourJson, Run, VolumeMeta } from "./api.js";
import {
  canSubmit,
  canvasToVoxel,
  decimateForSubmission,
  toContourJson,
  voxelToCanvas,
} from "./contour.js";
import type { DrawnContour, Point } from "./contour.js";
import { chartPoints } from "./history.js";
import type { RunRecord } from "./history.js";
import { runFromResponse, replayPayload } from "./history.js";
import { drawDscChart } from "./chart.js";
import { decodeRuns } from "./rle.js";
import { applyOverlay, drawRaster, sliceToRaster } from "./render.js";

const api = new ApiClient("");

interface AppState {
  meta: VolumeMeta;
  axis: Axis;
  index: number;
  windowLo: number;
  windowHi: number;
  scale: number;
  drawing: boolean;
  rawCanvasPoints: Point[];
  contour: DrawnContour | null;
  runs: RunRecord[];
  selectedRun: RunRecord | null;
  overlayVisible: boolean;
  inFlight: boolean;
  maskCache: Map<string, Run[]>;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function axisDims(meta: VolumeMeta, axis: Axis): { width: number; height: number; slices: number } {
  const [nx, ny, nz] = meta.dims;
  if (axis === "x") return { width: ny, height: nz, slices: nx };
  if (axis === "y") return { width: nx, height: nz, slices: ny };
  return { width: nx, height: ny, slices: nz };
}

async function boot(): Promise<void> {
  let meta: VolumeMeta;
  try {
    meta = await api.volumeMeta();
  } catch {
    el<HTMLDivElement>("offline-banner").hidden = false;
    return;
  }

  const state: AppState = {
    meta,
    axis: "z",
    index: Math.floor(axisDims(meta, "z").slices / 2),
    windowLo: meta.intensity_min,
    windowHi: meta.intensity_max,
    scale: 4,
    drawing: false,
    rawCanvasPoints: [],
    contour: null,
    runs: [],
    selectedRun: null,
    overlayVisible: true,
    inFlight: false,
    maskCache: new Map(),
  };

  const sliceCanvas = el<HTMLCanvasElement>("slice-canvas");
  const drawCanvas = el<HTMLCanvasElement>("draw-canvas");
  const chartCanvas = el<HTMLCanvasElement>("chart-canvas");
  const sliceCtx = sliceCanvas.getContext("2d")!;
  const drawCtx = drawCanvas.getContext("2d")!;
  const chartCtx = chartCanvas.getContext("2d")!;
  const indexLabel = el<HTMLSpanElement>("slice-label");
  const statusLine = el<HTMLDivElement>("status-line");
  const submitButton = el<HTMLButtonElement>("submit-button");
  const drawButton = el<HTMLButtonElement>("draw-button");
  const clearButton = el<HTMLButtonElement>("clear-button");
  const overlayToggle = el<HTMLInputElement>("overlay-toggle");
  const axisSelect = el<HTMLSelectElement>("axis-select");
  const sliceSlider = el<HTMLInputElement>("slice-slider");
  const loSlider = el<HTMLInputElement>("window-lo");
  const hiSlider = el<HTMLInputElement>("window-hi");
  const metricsPanel = el<HTMLDivElement>("metrics-panel");
  const runsBody = el<HTMLTableSectionElement>("runs-body");

  for (const slider of [loSlider, hiSlider]) {
    slider.min = String(Math.floor(meta.intensity_min));
    slider.max = String(Math.ceil(meta.intensity_max));
  }
  loSlider.value = String(Math.floor(meta.intensity_min));
  hiSlider.value = String(Math.ceil(meta.intensity_max));

  function setStatus(text: string, isError = false): void {
    statusLine.textContent = text;
    statusLine.className = isError ? "status error" : "status";
  }

  function updateSubmitEnabled(): void {
    submitButton.disabled =
      state.inFlight || state.contour === null || !canSubmit(state.contour);
  }

  function currentContourVox(): Point[] {
    return state.rawCanvasPoints.map((p) => canvasToVoxel(p, state.scale));
  }

  async function maskRunsFor(run: RunRecord, axis: Axis, index: number): Promise<Run[]> {
    const key = `${run.resultId}:${axis}:${index}`;
    const cached = state.maskCache.get(key);
    if (cached) return cached;
    const runs = await api.maskRuns(run.resultId, axis, index);
    state.maskCache.set(key, runs);
    return runs;
  }

  async function refreshSlice(): Promise<void> {
    const { slices } = axisDims(state.meta, state.axis);
    state.index = Math.max(0, Math.min(slices - 1, state.index));
    sliceSlider.max = String(slices - 1);
    sliceSlider.value = String(state.index);
    indexLabel.textContent = `${state.axis} = ${state.index} / ${slices - 1}`;
    try {
      const image = await api.slice(state.axis, state.index, state.windowLo, state.windowHi);
      const raster = sliceToRaster(image.bytes, image.width, image.height);
      if (state.overlayVisible && state.selectedRun) {
        const runs = await maskRunsFor(state.selectedRun, state.axis, state.index);
        applyOverlay(raster, decodeRuns(runs, image.width * image.height));
      }
      drawRaster(sliceCtx, raster, state.scale);
      drawCanvas.width = sliceCanvas.width;
      drawCanvas.height = sliceCanvas.height;
      redrawContour();
      el<HTMLDivElement>("offline-banner").hidden = true;
    } catch (err) {
      if (err instanceof ApiError) setStatus(`slice load failed: ${err.message}`, true);
      else el<HTMLDivElement>("offline-banner").hidden = false;
    }
  }

  function redrawContour(): void {
    drawCtx.clearRect(0, 0, drawCanvas.width, drawCanvas.height);
    const points =
      state.contour && state.contour.sliceIndex === state.index && state.contour.axis === state.axis
        ? state.contour.pointsVox.map((p) => voxelToCanvas(p, state.scale))
        : state.rawCanvasPoints;
    if (points.length < 2) return;
    drawCtx.strokeStyle = "#ffe14a";
    drawCtx.lineWidth = 2;
    drawCtx.beginPath();
    drawCtx.moveTo(points[0][0], points[0][1]);
    for (const p of points.slice(1)) drawCtx.lineTo(p[0], p[1]);
    if (state.contour?.closed) drawCtx.closePath();
    drawCtx.stroke();
  }

  function renderRuns(): void {
    runsBody.replaceChildren();
    for (const run of state.runs) {
      const tr = document.createElement("tr");
      tr.className = run === state.selectedRun ? "selected" : "";
      const dsc = run.dscPercent !== undefined ? run.dscPercent.toFixed(2) : "-";
      tr.innerHTML =
        `<td>${run.resultId}</td><td>${run.axis}:${run.sliceIndex}</td>` +
        `<td>${(run.volumeMm3 / 1000).toFixed(2)}</td><td>${run.voxelCount}</td>` +
        `<td>${run.iterations}</td><td>${dsc}</td>`;
      const download = document.createElement("td");
      const link = document.createElement("a");
      link.textContent = "json";
      link.download = `run-${run.resultId}.json`;
      link.href = URL.createObjectURL(new Blob([replayPayload(run)], { type: "application/json" }));
      download.appendChild(link);
      tr.appendChild(download);
      tr.addEventListener("click", async (ev) => {
        if (ev.target === link) return;
        state.selectedRun = run;
        renderRuns();
        await refreshSlice();
      });
      runsBody.appendChild(tr);
    }
    drawDscChart(chartCtx, chartPoints(state.runs), chartCanvas.width, chartCanvas.height);
  }

  function showMetrics(run: RunRecord): void {
    const rows = [
      ["volume", `${(run.volumeMm3 / 1000).toFixed(2)} cm³ (${run.volumeMm3.toFixed(0)} mm³)`],
      ["voxels", String(run.voxelCount)],
      ["iterations", `${run.iterations} (${run.terminationReason})`],
      ["runtime", `${run.runtimeMs.toFixed(0)} ms`],
    ];
    if (run.dscPercent !== undefined) rows.push(["DSC", `${run.dscPercent.toFixed(2)} %`]);
    metricsPanel.replaceChildren(
      ...rows.map(([k, v]) => {
        const div = document.createElement("div");
        div.innerHTML = `<span class="k">${k}</span><span class="v">${v}</span>`;
        return div;
      }),
    );
  }

  // --- drawing ---------------------------------------------------------
  drawCanvas.addEventListener("pointerdown", (ev) => {
    if (!state.drawing) return;
    state.rawCanvasPoints = [];
    state.contour = null;
    const rect = drawCanvas.getBoundingClientRect();
    state.rawCanvasPoints.push([ev.clientX - rect.left, ev.clientY - rect.top]);
    drawCanvas.setPointerCapture(ev.pointerId);
  });
  drawCanvas.addEventListener("pointermove", (ev) => {
    if (!state.drawing || state.rawCanvasPoints.length === 0 || ev.buttons === 0) return;
    const rect = drawCanvas.getBoundingClientRect();
    state.rawCanvasPoints.push([ev.clientX - rect.left, ev.clientY - rect.top]);
    redrawContour();
  });
  drawCanvas.addEventListener("pointerup", () => {
    if (!state.drawing || state.rawCanvasPoints.length === 0) return;
    const pointsVox = decimateForSubmission(currentContourVox());
    state.contour = {
      axis: state.axis,
      sliceIndex: state.index,
      pointsVox,
      closed: true,
    };
    state.drawing = false;
    drawButton.textContent = "Draw contour";
    redrawContour();
    updateSubmitEnabled();
    setStatus(`contour closed with ${pointsVox.length} points`);
  });

  drawButton.addEventListener("click", () => {
    state.drawing = !state.drawing;
    drawButton.textContent = state.drawing ? "Drawing… (drag on image)" : "Draw contour";
  });
  clearButton.addEventListener("click", () => {
    state.rawCanvasPoints = [];
    state.contour = null;
    redrawContour();
    updateSubmitEnabled();
  });

  // --- submission (single in-flight request, mirroring the server) ------
  submitButton.addEventListener("click", async () => {
    if (state.inFlight || !state.contour) return;
    const contourJson: ContourJson = toContourJson(state.contour);
    state.inFlight = true;
    updateSubmitEnabled();
    setStatus("segmenting…");
    try {
      const response = await api.segment(contourJson);
      const run = runFromResponse(response, contourJson);
      state.runs.push(run);
      state.selectedRun = run;
      showMetrics(run);
      renderRuns();
      await refreshSlice();
      setStatus(`run ${run.resultId} finished in ${run.runtimeMs.toFixed(0)} ms`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        setStatus("a segmentation run is already in progress; try again shortly", true);
      } else if (err instanceof ApiError && err.status === 422) {
        setStatus(`rejected: ${err.message}`, true);
      } else {
        setStatus(String(err), true);
        el<HTMLDivElement>("offline-banner").hidden = false;
      }
    } finally {
      state.inFlight = false;
      updateSubmitEnabled();
    }
  });

  // --- navigation and windowing ----------------------------------------
  axisSelect.addEventListener("change", async () => {
    state.axis = axisSelect.value as Axis;
    state.index = Math.floor(axisDims(state.meta, state.axis).slices / 2);
    state.rawCanvasPoints = [];
    state.contour = null;
    await refreshSlice();
  });
  sliceSlider.addEventListener("input", async () => {
    state.index = Number(sliceSlider.value);
    await refreshSlice();
  });
  sliceCanvas.parentElement!.addEventListener("wheel", async (ev) => {
    ev.preventDefault();
    state.index += ev.deltaY > 0 ? 1 : -1;
    await refreshSlice();
  });
  window.addEventListener("keydown", async (ev) => {
    if (ev.key === "ArrowUp" || ev.key === "ArrowDown") {
      state.index += ev.key === "ArrowDown" ? 1 : -1;
      await refreshSlice();
    }
  });
  for (const slider of [loSlider, hiSlider]) {
    slider.addEventListener("change", async () => {
      state.windowLo = Number(loSlider.value);
      state.windowHi = Number(hiSlider.value);
      await refreshSlice();
    });
  }
  overlayToggle.addEventListener("change", async () => {
    state.overlayVisible = overlayToggle.checked;
    await refreshSlice(); // mask runs come from the cache; no refetch for seen slices
  });

  updateSubmitEnabled();
  await refreshSlice();
}

void boot();
