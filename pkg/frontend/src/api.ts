/** Typed client for the dyslat HTTP API.
 *
 * The UI never computes model math itself: every number it shows comes out
 * of these calls verbatim. Errors follow the service contract {code,
 * message}; a failed fetch (server unreachable) is reported as OfflineError
 * so the shell can show its banner.
 */

export interface LatentMapPoint {
  speaker: string;
  word: string;
  l1: number;
  l2: number;
  label: number;
  intelligibility: number | null;
}

export interface SpeakerMean {
  speaker: string;
  l1: number;
  l2: number;
  label: number;
  intelligibility: number | null;
}

export interface LatentMap {
  points: LatentMapPoint[];
  speaker_means: SpeakerMean[];
}

export interface ReconstructRequest {
  transcript: string;
  latent: [number, number];
  target_frames: number;
  want_audio?: boolean;
}

export interface ReconstructResponse {
  mel: string; // base64 MELS blob
  n_mels: number;
  n_frames: number;
  p_dysarthric: number;
  wav?: string; // base64 WAV, present when want_audio
}

export interface AnalyzeResponse {
  p_dysarthric: number;
  latent: [number, number];
  n_frames: number;
}

export interface HealthResponse {
  status: string;
  config_hash: string;
}

export class ApiError extends Error {
  constructor(readonly code: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class OfflineError extends Error {
  constructor(cause: unknown) {
    super("service unreachable");
    this.name = "OfflineError";
    this.cause = cause;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorFrom(res: Response): Promise<ApiError> {
  let message = res.statusText || "request failed";
  try {
    const body = (await res.json()) as { message?: string };
    if (typeof body.message === "string") message = body.message;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, message);
}

export class Client {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (e) {
      throw new OfflineError(e);
    }
    if (!res.ok) throw await errorFrom(res);
    return res;
  }

  async health(): Promise<HealthResponse> {
    const res = await this.request("/health");
    return (await res.json()) as HealthResponse;
  }

  async latentMap(): Promise<LatentMap> {
    const res = await this.request("/latent-map");
    return (await res.json()) as LatentMap;
  }

  async reconstruct(
    req: ReconstructRequest,
    signal?: AbortSignal,
  ): Promise<ReconstructResponse> {
    const res = await this.request("/reconstruct", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    return (await res.json()) as ReconstructResponse;
  }

  async analyze(file: Blob, transcript: string): Promise<AnalyzeResponse> {
    const form = new FormData();
    form.append("file", file, "clip.wav");
    form.append("transcript", transcript);
    const res = await this.request("/analyze", { method: "POST", body: form });
    return (await res.json()) as AnalyzeResponse;
  }
}

/** Decode a base64 payload into bytes without assuming a DOM. */
export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}
