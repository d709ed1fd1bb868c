/** Canvas rendering of raw HU images with client-side window/level. */

import { grayToRgba, windowToBytes } from "./windowing.js";
import type { RawImage } from "./types.js";

export function renderToCanvas(
  canvas: HTMLCanvasElement,
  image: RawImage,
  windowLow: number,
  windowHigh: number,
): void {
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas context unavailable");
  }
  const gray = windowToBytes(image.values, windowLow, windowHigh);
  const rgba = grayToRgba(gray) as Uint8ClampedArray<ArrayBuffer>;
  ctx.putImageData(new ImageData(rgba, image.width, image.height), 0, 0);
}

/** Windowed pixels for a pane, exposed separately so pane comparison logic
 * is testable without a DOM. */
export function panePixels(
  image: RawImage,
  windowLow: number,
  windowHigh: number,
): Uint8ClampedArray {
  return windowToBytes(image.values, windowLow, windowHigh);
}
