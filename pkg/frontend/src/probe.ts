/** Reconstruction probes: throttling, caching, cancellation, sweep preset.
 *
 * Slider drags go through request(), which fires at most once per interval
 * (250 ms -> at most 4 requests/s) and always ends on the latest value.
 * Identical probes are served from a client cache without touching the
 * network. Only one reconstruct call is ever in flight; a newer probe
 * aborts the older one (latest wins).
 */

import type { Client, ReconstructResponse } from "./api";
import type { ExplorationState, ProbeRecord } from "./state";

export const SWEEP_DIM1 = [-0.5, 0.0, 0.5, 1.0, 1.5] as const;
export const SWEEP_DIM2 = -0.1;

export interface ProbeArgs {
  l1: number;
  l2: number;
  transcript: string;
  targetFrames: number;
  wantAudio?: boolean;
  condition?: string | null;
}

export interface ProbeResult {
  response: ReconstructResponse;
  fromCache: boolean;
  record: ProbeRecord;
}

type ReconstructFn = Pick<Client, "reconstruct">;

function cacheKey(a: ProbeArgs): string {
  return JSON.stringify([
    a.transcript, a.l1, a.l2, a.targetFrames, a.wantAudio === true]);
}

export class ProbeController {
  private readonly intervalMs: number;
  private readonly cache = new Map<string, ReconstructResponse>();
  private lastFire = -Infinity;
  private pending: ProbeArgs | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflight: AbortController | null = null;

  onResult: ((r: ProbeResult) => void) | null = null;
  onError: ((e: unknown) => void) | null = null;

  constructor(
    private readonly client: ReconstructFn,
    private readonly state: ExplorationState,
    opts: { intervalMs?: number } = {},
  ) {
    this.intervalMs = opts.intervalMs ?? 250;
  }

  get cacheSize(): number {
    return this.cache.size;
  }

  /** Throttled probe for continuous controls. */
  request(args: ProbeArgs): void {
    const now = Date.now();
    if (now - this.lastFire >= this.intervalMs) {
      this.lastFire = now;
      void this.fire(args);
      return;
    }
    this.pending = args;
    if (this.timer === null) {
      const wait = this.lastFire + this.intervalMs - now;
      this.timer = setTimeout(() => {
        this.timer = null;
        const next = this.pending;
        this.pending = null;
        if (next !== null) {
          this.lastFire = Date.now();
          void this.fire(next);
        }
      }, wait);
    }
  }

  private async fire(args: ProbeArgs): Promise<void> {
    try {
      const result = await this.probeNow(args);
      this.onResult?.(result);
    } catch (e) {
      if ((e as Error)?.name === "AbortError") return; // superseded
      this.onError?.(e);
    }
  }

  /** Immediate probe; cache hits never reach the network. */
  async probeNow(args: ProbeArgs): Promise<ProbeResult> {
    const key = cacheKey(args);
    const cached = this.cache.get(key);
    if (cached !== undefined) {
      return { response: cached, fromCache: true,
               record: this.remember(args, cached) };
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.client.reconstruct({
        transcript: args.transcript,
        latent: [args.l1, args.l2],
        target_frames: args.targetFrames,
        want_audio: args.wantAudio === true,
      }, controller.signal);
      this.cache.set(key, response);
      return { response, fromCache: false,
               record: this.remember(args, response) };
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  private remember(args: ProbeArgs, res: ReconstructResponse): ProbeRecord {
    return this.state.appendProbe({
      l1: args.l1,
      l2: args.l2,
      transcript: args.transcript,
      targetFrames: args.targetFrames,
      pDysarthric: res.p_dysarthric,
      melB64: res.mel,
      condition: args.condition ?? null,
    });
  }

  /** The five-point dim1 sweep at dim2 = -0.1, tagged with their MUSHRA
   * condition names. Sequential on purpose: the server caps concurrent
   * reconstructions. */
  async sweepPreset(transcript: string, targetFrames: number,
                    wantAudio = true): Promise<ProbeResult[]> {
    const out: ProbeResult[] = [];
    for (const d1 of SWEEP_DIM1) {
      out.push(await this.probeNow({
        l1: d1,
        l2: SWEEP_DIM2,
        transcript,
        targetFrames,
        wantAudio,
        condition: `d1=${d1.toFixed(1)}`,
      }));
    }
    return out;
  }
}
