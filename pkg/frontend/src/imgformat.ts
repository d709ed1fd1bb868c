/** Encode/decode NRTW-IMG v1 containers (magic line, canonical-JSON header,
 * little-endian float32 payload). The client reads raw floats so window and
 * level can be applied locally without a server round trip. */

import type { RawImage } from "./types.js";

const MAGIC = "NRTW-IMG v1\n";

export function parseImage(buffer: ArrayBuffer): RawImage {
  const bytes = new Uint8Array(buffer);
  const magic = new TextDecoder().decode(bytes.subarray(0, MAGIC.length));
  if (magic !== MAGIC) {
    throw new Error("not an NRTW-IMG container");
  }
  let newline = -1;
  for (let i = MAGIC.length; i < bytes.length; i++) {
    if (bytes[i] === 0x0a) {
      newline = i;
      break;
    }
  }
  if (newline < 0) {
    throw new Error("unterminated NRTW-IMG header");
  }
  const header = JSON.parse(
    new TextDecoder().decode(bytes.subarray(MAGIC.length, newline)),
  );
  if (header.dtype !== "<f4") {
    throw new Error(`unsupported dtype ${header.dtype}`);
  }
  const [height, width] = header.shape as [number, number];
  const payload = bytes.subarray(newline + 1);
  if (payload.length !== height * width * 4) {
    throw new Error(
      `payload is ${payload.length} bytes, expected ${height * width * 4}`,
    );
  }
  const view = new DataView(buffer, newline + 1);
  const values = new Float32Array(height * width);
  for (let i = 0; i < values.length; i++) {
    values[i] = view.getFloat32(i * 4, true);
  }
  return { height, width, values };
}

/** Canonical-JSON header (sorted keys, no whitespace), matching the server's
 * serialization so encode/decode round-trips are byte-identical. */
function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}

export function encodeImage(image: RawImage, meta: object = {}): Uint8Array {
  const header = {
    dtype: "<f4",
    meta,
    shape: [image.height, image.width],
    units: "HU",
  };
  const head = new TextEncoder().encode(MAGIC + canonicalJson(header) + "\n");
  const out = new Uint8Array(head.length + image.values.length * 4);
  out.set(head, 0);
  const view = new DataView(out.buffer, head.length);
  for (let i = 0; i < image.values.length; i++) {
    view.setFloat32(i * 4, image.values[i], true);
  }
  return out;
}
