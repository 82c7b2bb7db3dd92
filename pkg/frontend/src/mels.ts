/** Parser for the MELS binary blob served by /reconstruct.
 *
 * Layout (little-endian): 4-byte magic "MELS", uint32 version (= 1),
 * uint32 n_mels, uint32 n_frames, then n_mels * n_frames float32 values in
 * row-major order (one row per mel band).
 */

import { base64ToBytes } from "./api";

export const MELS_MAGIC = "MELS";
export const MELS_VERSION = 1;
const HEADER_BYTES = 16;

export interface MelGrid {
  nMels: number;
  nFrames: number;
  values: Float32Array; // row-major [nMels x nFrames]
}

export class MelParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MelParseError";
  }
}

export function parseMels(buf: ArrayBuffer): MelGrid {
  if (buf.byteLength < HEADER_BYTES) {
    throw new MelParseError(`blob too short: ${buf.byteLength} bytes`);
  }
  const view = new DataView(buf);
  const magic = String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3));
  if (magic !== MELS_MAGIC) {
    throw new MelParseError(`bad magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint32(4, true);
  if (version !== MELS_VERSION) {
    throw new MelParseError(`unsupported version ${version}`);
  }
  const nMels = view.getUint32(8, true);
  const nFrames = view.getUint32(12, true);
  const expected = HEADER_BYTES + 4 * nMels * nFrames;
  if (buf.byteLength !== expected) {
    throw new MelParseError(
      `length ${buf.byteLength} != expected ${expected}`);
  }
  // copy so the grid owns aligned data even if buf came from an offset view
  const values = new Float32Array(nMels * nFrames);
  for (let i = 0; i < values.length; i++) {
    values[i] = view.getFloat32(HEADER_BYTES + 4 * i, true);
  }
  return { nMels, nFrames, values };
}

export function melFromBase64(b64: string): MelGrid {
  const bytes = base64ToBytes(b64);
  return parseMels(bytes.buffer.slice(
    bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer);
}

export function melValueAt(grid: MelGrid, mel: number, frame: number): number {
  return grid.values[mel * grid.nFrames + frame] as number;
}

/** Serialize a grid back to blob bytes; used by tests for round-trips. */
export function melsToBytes(grid: MelGrid): Uint8Array {
  const out = new Uint8Array(HEADER_BYTES + 4 * grid.values.length);
  const view = new DataView(out.buffer);
  for (let i = 0; i < 4; i++) out[i] = MELS_MAGIC.charCodeAt(i);
  view.setUint32(4, MELS_VERSION, true);
  view.setUint32(8, grid.nMels, true);
  view.setUint32(12, grid.nFrames, true);
  for (let i = 0; i < grid.values.length; i++) {
    view.setFloat32(HEADER_BYTES + 4 * i, grid.values[i] as number, true);
  }
  return out;
}
