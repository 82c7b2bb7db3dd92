import { describe, expect, it } from "vitest";

import { colorAt, normalize } from "../src/colormap";
import type { MelGrid } from "../src/mels";
import { melToRaster } from "../src/spectrogram";

describe("colorAt", () => {
  it("hits the ramp ends and clamps outside [0, 1]", () => {
    expect(colorAt(0)).toEqual([68, 1, 84]);
    expect(colorAt(1)).toEqual([253, 231, 37]);
    expect(colorAt(-5)).toEqual(colorAt(0));
    expect(colorAt(7)).toEqual(colorAt(1));
  });

  it("interpolates between anchors", () => {
    // halfway between stop 0 and stop 1
    expect(colorAt(0.5 / 8)).toEqual([70, 23, 103]);
  });

  it("brightness grows along the ramp", () => {
    let prev = -1;
    for (let t = 0; t <= 1.0001; t += 0.05) {
      const [r, g, b] = colorAt(t);
      const luma = 0.299 * r + 0.587 * g + 0.114 * b;
      expect(luma).toBeGreaterThan(prev);
      prev = luma;
    }
  });
});

describe("normalize", () => {
  it("maps min to 0 and max to 1", () => {
    const out = normalize(new Float32Array([2, 4, 6]));
    expect([...out]).toEqual([0, 0.5, 1]);
  });

  it("maps a constant blob to all zeros instead of NaN", () => {
    const out = normalize(new Float32Array([3, 3, 3]));
    expect([...out]).toEqual([0, 0, 0]);
  });

  it("handles negative dB-style ranges", () => {
    const out = normalize(new Float32Array([-80, -40, 0]));
    expect([...out]).toEqual([0, 0.5, 1]);
  });
});

describe("melToRaster", () => {
  const grid: MelGrid = {
    nMels: 2,
    nFrames: 3,
    // band 0: [0, 1, 2]; band 1: [3, 4, 5]
    values: new Float32Array([0, 1, 2, 3, 4, 5]),
  };

  it("sizes the raster frames wide and bands tall", () => {
    const raster = melToRaster(grid);
    expect(raster.width).toBe(3);
    expect(raster.height).toBe(2);
    expect(raster.data.length).toBe(2 * 3 * 4);
  });

  it("puts band 0 at the bottom row", () => {
    const raster = melToRaster(grid);
    const px = (row: number, col: number) => {
      const o = (row * 3 + col) * 4;
      return [raster.data[o], raster.data[o + 1], raster.data[o + 2]];
    };
    // value 0 (band 0, frame 0) normalizes to 0 -> darkest, bottom-left
    expect(px(1, 0)).toEqual([...colorAt(0)]);
    // value 5 (band 1, frame 2) normalizes to 1 -> brightest, top-right
    expect(px(0, 2)).toEqual([...colorAt(1)]);
  });

  it("is fully opaque", () => {
    const raster = melToRaster(grid);
    for (let i = 3; i < raster.data.length; i += 4) {
      expect(raster.data[i]).toBe(255);
    }
  });
});
