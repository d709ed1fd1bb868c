/** HU -> 8-bit display mapping, identical to the server's rule:
 * linear map over [low, high], clamped, round half away from zero. */

export function windowToBytes(
  values: Float32Array,
  low: number,
  high: number,
): Uint8ClampedArray {
  if (!(low < high)) {
    throw new Error(`degenerate display window [${low}, ${high}]`);
  }
  const out = new Uint8ClampedArray(values.length);
  const span = high - low;
  for (let i = 0; i < values.length; i++) {
    const scaled = ((values[i] - low) / span) * 255.0;
    const rounded = Math.floor(scaled + 0.5);
    out[i] = rounded < 0 ? 0 : rounded > 255 ? 255 : rounded;
  }
  return out;
}

/** Expand windowed gray bytes to RGBA for a canvas ImageData buffer. */
export function grayToRgba(gray: Uint8ClampedArray): Uint8ClampedArray {
  const rgba = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    rgba[i * 4] = v;
    rgba[i * 4 + 1] = v;
    rgba[i * 4 + 2] = v;
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}
