import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  MelParseError, melFromBase64, melValueAt, melsToBytes, parseMels,
} from "../src/mels";

const FIXTURE = fileURLToPath(new URL("./fixtures/tiny.mels", import.meta.url));

function bufferOf(bytes: Uint8Array): ArrayBuffer {
  return bytes.buffer.slice(
    bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer;
}

describe("parseMels", () => {
  it("reads a blob written by the backend serializer", () => {
    const bytes = new Uint8Array(readFileSync(FIXTURE));
    const grid = parseMels(bufferOf(bytes));
    expect(grid.nMels).toBe(3);
    expect(grid.nFrames).toBe(4);
    // row-major: value(m, f) = m * nFrames + f
    for (let m = 0; m < 3; m++) {
      for (let f = 0; f < 4; f++) {
        expect(melValueAt(grid, m, f)).toBe(m * 4 + f);
      }
    }
  });

  it("round-trips through its own serializer", () => {
    const bytes = new Uint8Array(readFileSync(FIXTURE));
    const grid = parseMels(bufferOf(bytes));
    expect(melsToBytes(grid)).toEqual(bytes);
  });

  it("decodes from base64 like the /reconstruct payload", () => {
    const bytes = readFileSync(FIXTURE);
    const grid = melFromBase64(bytes.toString("base64"));
    expect(grid.nMels).toBe(3);
    expect(melValueAt(grid, 2, 3)).toBe(11);
  });

  it("rejects a truncated header", () => {
    expect(() => parseMels(new ArrayBuffer(8))).toThrow(MelParseError);
    expect(() => parseMels(new ArrayBuffer(8))).toThrow(/too short/);
  });

  it("rejects a bad magic", () => {
    const bytes = new Uint8Array(readFileSync(FIXTURE));
    bytes[0] = 0x58;
    expect(() => parseMels(bufferOf(bytes))).toThrow(/bad magic/);
  });

  it("rejects an unknown version", () => {
    const bytes = new Uint8Array(readFileSync(FIXTURE));
    bytes[4] = 2;
    expect(() => parseMels(bufferOf(bytes))).toThrow(/version 2/);
  });

  it("rejects a length mismatch", () => {
    const bytes = new Uint8Array(readFileSync(FIXTURE));
    expect(() => parseMels(bufferOf(bytes.slice(0, bytes.length - 4))))
      .toThrow(/length/);
  });
});
