/** Pixel plumbing: service bytes to RGBA rasters, mask overlays on top.
 *
 * Rasters are plain objects so every pixel rule is testable without a DOM;
 * the canvas glue lives at the bottom.
 */

export interface Raster {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA
}

/** Grayscale raster from service slice bytes (row-major, fast axis contiguous).
 *  Pixel (x, y) takes byte[x + y * width] — byte i maps to RGBA block 4i. */
export function sliceToRaster(bytes: Uint8Array, width: number, height: number): Raster {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = bytes[i];
    data[4 * i] = v;
    data[4 * i + 1] = v;
    data[4 * i + 2] = v;
    data[4 * i + 3] = 255;
  }
  return { width, height, data };
}

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
  alpha: number; // 0..1 blend weight
}

export const MASK_COLOR: OverlayColor = { r: 64, g: 170, b: 255, alpha: 0.45 };

/** Alpha-blend the overlay color into raster pixels where bits are set. */
export function applyOverlay(raster: Raster, bits: Uint8Array, color: OverlayColor = MASK_COLOR): Raster {
  const { data } = raster;
  const a = color.alpha;
  for (let i = 0; i < bits.length; i++) {
    if (!bits[i]) continue;
    data[4 * i] = Math.round((1 - a) * data[4 * i] + a * color.r);
    data[4 * i + 1] = Math.round((1 - a) * data[4 * i + 1] + a * color.g);
    data[4 * i + 2] = Math.round((1 - a) * data[4 * i + 2] + a * color.b);
  }
  return raster;
}

/** Draw a raster to a 2D context scaled by an integer factor (nearest neighbor). */
export function drawRaster(ctx: CanvasRenderingContext2D, raster: Raster, scale: number): void {
  // fresh copy pins the backing store to a plain ArrayBuffer for ImageData
  const image = new ImageData(new Uint8ClampedArray(raster.data), raster.width, raster.height);
  ctx.canvas.width = raster.width * scale;
  ctx.canvas.height = raster.height * scale;
  if (scale === 1) {
    ctx.putImageData(image, 0, 0);
    return;
  }
  const off = document.createElement("canvas");
  off.width = raster.width;
  off.height = raster.height;
  off.getContext("2d")!.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.drawImage(off, 0, 0, ctx.canvas.width, ctx.canvas.height);
}
