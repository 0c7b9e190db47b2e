/** Typed client for the segmentation service; the UI's only backend. */

export type Axis = "x" | "y" | "z";

export interface VolumeMeta {
  dims: [number, number, number];
  spacing_mm: [number, number, number];
  intensity_min: number;
  intensity_max: number;
  has_truth: boolean;
}

export interface ContourJson {
  axis: Axis;
  slice_index: number;
  points_vox: [number, number][];
}

export interface SliceImage {
  width: number;
  height: number;
  bytes: Uint8Array;
}

export interface SegmentResponse {
  result_id: number;
  volume_mm3: number;
  voxel_count: number;
  iterations: number;
  termination_reason: string;
  runtime_ms: number;
  dsc_percent?: number;
}

export type Run = [number, number];

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    /* non-JSON error body */
  }
  return response.statusText || `HTTP ${response.status}`;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async volumeMeta(): Promise<VolumeMeta> {
    const r = await this.request("/api/volume");
    return (await r.json()) as VolumeMeta;
  }

  async slice(axis: Axis, index: number, lo?: number, hi?: number): Promise<SliceImage> {
    const params = new URLSearchParams();
    if (lo !== undefined) params.set("lo", String(lo));
    if (hi !== undefined) params.set("hi", String(hi));
    const query = params.size > 0 ? `?${params.toString()}` : "";
    const r = await this.request(`/api/slice/${axis}/${index}${query}`);
    const bytes = new Uint8Array(await r.arrayBuffer());
    return {
      width: Number(r.headers.get("X-Width")),
      height: Number(r.headers.get("X-Height")),
      bytes,
    };
  }

  async segment(contour: ContourJson, config?: Record<string, unknown>): Promise<SegmentResponse> {
    const body: Record<string, unknown> = { contour };
    if (config !== undefined) body.config = config;
    const r = await this.request("/api/segment", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await r.json()) as SegmentResponse;
  }

  async maskRuns(resultId: number, axis: Axis, index: number): Promise<Run[]> {
    const r = await this.request(`/api/mask/${resultId}/${axis}/${index}`);
    const doc = (await r.json()) as { runs: Run[] };
    return doc.runs;
  }
}
