/** DSC-vs-initialization-slice line chart (plain canvas, no chart library). */

export interface ChartPoint {
  slice: number;
  dsc: number;
}

export interface ChartDomain {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

export const CHART_PAD = 32;

/** X spans min..max initialized slice; Y is the full DSC percent range. */
export function chartDomain(points: readonly ChartPoint[]): ChartDomain {
  if (points.length === 0) return { x0: 0, x1: 1, y0: 0, y1: 100 };
  const slices = points.map((p) => p.slice);
  let x0 = Math.min(...slices);
  let x1 = Math.max(...slices);
  if (x0 === x1) {
    x0 -= 1;
    x1 += 1;
  }
  return { x0, x1, y0: 0, y1: 100 };
}

export function projectPoint(
  p: ChartPoint,
  domain: ChartDomain,
  width: number,
  height: number,
  pad: number = CHART_PAD,
): [number, number] {
  const x = pad + ((p.slice - domain.x0) / (domain.x1 - domain.x0)) * (width - 2 * pad);
  const y = height - pad - ((p.dsc - domain.y0) / (domain.y1 - domain.y0)) * (height - 2 * pad);
  return [x, y];
}

export function drawDscChart(
  ctx: CanvasRenderingContext2D,
  points: readonly ChartPoint[],
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1;
  ctx.strokeRect(CHART_PAD, CHART_PAD, width - 2 * CHART_PAD, height - 2 * CHART_PAD);

  ctx.fillStyle = "#aaa";
  ctx.font = "11px sans-serif";
  const domain = chartDomain(points);
  ctx.fillText("100", 6, CHART_PAD + 4);
  ctx.fillText("0", 6, height - CHART_PAD + 4);
  ctx.fillText(String(domain.x0), CHART_PAD - 4, height - CHART_PAD + 16);
  ctx.fillText(String(domain.x1), width - CHART_PAD - 8, height - CHART_PAD + 16);
  ctx.fillText("DSC % vs init slice", width / 2 - 44, 14);

  if (points.length === 0) return;
  const ordered = [...points].sort((a, b) => a.slice - b.slice);
  ctx.strokeStyle = "#4aa8ff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ordered.forEach((p, i) => {
    const [x, y] = projectPoint(p, domain, width, height);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#4aa8ff";
  for (const p of ordered) {
    const [x, y] = projectPoint(p, domain, width, height);
    ctx.beginPath();
    ctx.arc(x, y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}
