/** Binary PPM (P6) decoder. Frames decode straight into RGBA for canvases,
 * so no video codec is involved anywhere in the pipeline. */

export interface DecodedFrame {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

function readToken(bytes: Uint8Array, pos: number): { token: string; next: number } {
  while (pos < bytes.length && WHITESPACE.has(bytes[pos])) pos++;
  const start = pos;
  while (pos < bytes.length && !WHITESPACE.has(bytes[pos])) pos++;
  if (start === pos) throw new Error("ppm: truncated header");
  return { token: String.fromCharCode(...bytes.subarray(start, pos)), next: pos };
}

export function decodePpm(bytes: Uint8Array): DecodedFrame {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x36) {
    throw new Error("ppm: not a P6 file");
  }
  let pos = 2;
  const w = readToken(bytes, pos);
  const h = readToken(bytes, w.next);
  const m = readToken(bytes, h.next);
  const width = Number(w.token);
  const height = Number(h.token);
  const maxval = Number(m.token);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`ppm: bad dimensions ${w.token}x${h.token}`);
  }
  if (maxval !== 255) throw new Error(`ppm: unsupported maxval ${maxval}`);

  // Exactly one whitespace byte separates the header from pixel data.
  const dataStart = m.next + 1;
  const needed = width * height * 3;
  if (bytes.length - dataStart < needed) {
    throw new Error(`ppm: expected ${needed} pixel bytes, have ${bytes.length - dataStart}`);
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0, j = 0; i < needed; i += 3, j += 4) {
    rgba[j] = bytes[dataStart + i];
    rgba[j + 1] = bytes[dataStart + i + 1];
    rgba[j + 2] = bytes[dataStart + i + 2];
    rgba[j + 3] = 255;
  }
  return { width, height, rgba };
}
