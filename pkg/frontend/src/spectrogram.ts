/** Rasterize a mel grid to RGBA pixels (band 0 at the bottom, like every
 * spectrogram plot) and draw it on a canvas with nearest-neighbor scaling.
 */

import { colorAt, normalize } from "./colormap";
import type { MelGrid } from "./mels";

export interface Raster {
  width: number;
  height: number;
  data: Uint8ClampedArray<ArrayBuffer>; // RGBA
}

export function melToRaster(grid: MelGrid): Raster {
  const { nMels, nFrames } = grid;
  const norm = normalize(grid.values);
  const data = new Uint8ClampedArray(nMels * nFrames * 4);
  for (let m = 0; m < nMels; m++) {
    const row = nMels - 1 - m; // flip vertically
    for (let f = 0; f < nFrames; f++) {
      const [r, g, b] = colorAt(norm[m * nFrames + f] as number);
      const o = (row * nFrames + f) * 4;
      data[o] = r;
      data[o + 1] = g;
      data[o + 2] = b;
      data[o + 3] = 255;
    }
  }
  return { width: nFrames, height: nMels, data };
}

export function drawRaster(canvas: HTMLCanvasElement, raster: Raster): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(raster.data, raster.width, raster.height);
  // draw at native resolution then scale up without smoothing
  const off = document.createElement("canvas");
  off.width = raster.width;
  off.height = raster.height;
  const offCtx = off.getContext("2d");
  if (!offCtx) return;
  offCtx.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}
