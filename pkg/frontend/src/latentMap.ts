/** Scatter layout for the corpus latent map.
 *
 * Pure geometry: maps latent coordinates into pixel space with a small
 * padding, colors by class label, sizes by intelligibility, and supports
 * hit-testing so a click can load a point's latent into the explorer.
 * Rendering itself is a dumb canvas pass over the layout.
 */

import type { LatentMap, LatentMapPoint } from "./api";

export interface ScatterDot {
  x: number;
  y: number;
  r: number;
  color: string;
  point: LatentMapPoint;
}

export interface ScatterLayout {
  dots: ScatterDot[];
  empty: boolean;
  /** pixel -> latent transforms for axis drawing and click mapping */
  toLatent(x: number, y: number): { l1: number; l2: number };
}

export const CONTROL_COLOR = "#4c9be8";
export const DYSARTHRIC_COLOR = "#e8734c";

export function layoutScatter(
  map: LatentMap,
  width: number,
  height: number,
  pad = 24,
): ScatterLayout {
  const points = map.points;
  if (points.length === 0) {
    return { dots: [], empty: true, toLatent: () => ({ l1: 0, l2: 0 }) };
  }
  let lo1 = Infinity, hi1 = -Infinity, lo2 = Infinity, hi2 = -Infinity;
  for (const p of points) {
    if (p.l1 < lo1) lo1 = p.l1;
    if (p.l1 > hi1) hi1 = p.l1;
    if (p.l2 < lo2) lo2 = p.l2;
    if (p.l2 > hi2) hi2 = p.l2;
  }
  // degenerate spans still render centered
  const span1 = hi1 - lo1 || 1;
  const span2 = hi2 - lo2 || 1;
  const sx = (width - 2 * pad) / span1;
  const sy = (height - 2 * pad) / span2;
  const dots = points.map((p) => ({
    x: pad + (p.l1 - lo1) * sx,
    y: height - pad - (p.l2 - lo2) * sy, // l2 grows upward
    r: 3 + 4 * ((p.intelligibility ?? 100) / 100),
    color: p.label === 1 ? DYSARTHRIC_COLOR : CONTROL_COLOR,
    point: p,
  }));
  return {
    dots,
    empty: false,
    toLatent: (x, y) => ({
      l1: lo1 + (x - pad) / sx,
      l2: lo2 + (height - pad - y) / sy,
    }),
  };
}

/** Nearest dot within its radius plus slack, or null. */
export function hitTest(
  layout: ScatterLayout,
  x: number,
  y: number,
  slack = 3,
): ScatterDot | null {
  let best: ScatterDot | null = null;
  let bestDist = Infinity;
  for (const dot of layout.dots) {
    const d = Math.hypot(dot.x - x, dot.y - y);
    if (d <= dot.r + slack && d < bestDist) {
      best = dot;
      bestDist = d;
    }
  }
  return best;
}
