/** Spectrogram colors: a viridis-style perceptual ramp, linearly
 * interpolated from anchor stops. Values are normalized per blob so the
 * dynamic range of each reconstruction fills the ramp.
 */

export type Rgb = [number, number, number];

// viridis anchors, dark-to-bright
const STOPS: Rgb[] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

export function colorAt(t: number): Rgb {
  const u = Math.min(1, Math.max(0, t)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(u));
  const f = u - i;
  const a = STOPS[i] as Rgb;
  const b = STOPS[i + 1] as Rgb;
  return [
    Math.round(a[0] + f * (b[0] - a[0])),
    Math.round(a[1] + f * (b[1] - a[1])),
    Math.round(a[2] + f * (b[2] - a[2])),
  ];
}

/** Map raw values to [0, 1] against their own min/max; constant input maps
 * to 0 so an all-equal blob renders as the dark end rather than NaN. */
export function normalize(values: Float32Array): Float32Array {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi - lo;
  const out = new Float32Array(values.length);
  if (span === 0) return out;
  for (let i = 0; i < values.length; i++) {
    out[i] = ((values[i] as number) - lo) / span;
  }
  return out;
}
