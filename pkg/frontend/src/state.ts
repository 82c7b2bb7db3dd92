/** Session state for the explorer.
 *
 * The probe history is append-only within a session, and the current latent
 * is guaranteed finite: attempts to set NaN/Infinity are rejected so a bad
 * slider event can never poison later requests. State survives reload
 * through an injected Storage (localStorage in the app, a map in tests).
 * Audio is deliberately not persisted; it is re-fetchable and would blow the
 * storage quota.
 */

export interface Latent {
  l1: number;
  l2: number;
}

export interface ProbeRecord {
  id: number;
  l1: number;
  l2: number;
  transcript: string;
  targetFrames: number;
  pDysarthric: number;
  melB64: string;
  condition: string | null; // MUSHRA tag, set for sweep probes
  at: number; // epoch ms
}

interface Persisted {
  version: number;
  latent: Latent;
  transcript: string;
  targetFrames: number;
  listener: string;
  history: ProbeRecord[];
}

const STORAGE_KEY = "dyslat-session-v1";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class ExplorationState {
  private latentValue: Latent = { l1: 0, l2: 0 };
  private historyValue: ProbeRecord[] = [];
  private nextId = 1;
  transcript = "left";
  targetFrames = 60;
  listener = "local";

  constructor(private readonly storage?: StorageLike) {}

  get latent(): Latent {
    return { ...this.latentValue };
  }

  setLatent(l1: number, l2: number): boolean {
    if (!Number.isFinite(l1) || !Number.isFinite(l2)) return false;
    this.latentValue = { l1, l2 };
    this.save();
    return true;
  }

  get history(): readonly ProbeRecord[] {
    return this.historyValue;
  }

  appendProbe(rec: Omit<ProbeRecord, "id" | "at"> & { at?: number }): ProbeRecord {
    const full: ProbeRecord = {
      ...rec,
      id: this.nextId++,
      at: rec.at ?? Date.now(),
    };
    this.historyValue.push(full);
    this.save();
    return full;
  }

  save(): void {
    if (!this.storage) return;
    const doc: Persisted = {
      version: 1,
      latent: this.latentValue,
      transcript: this.transcript,
      targetFrames: this.targetFrames,
      listener: this.listener,
      history: this.historyValue,
    };
    this.storage.setItem(STORAGE_KEY, JSON.stringify(doc));
  }

  /** Load a previous session; ignores missing or unreadable payloads. */
  restore(): boolean {
    if (!this.storage) return false;
    const raw = this.storage.getItem(STORAGE_KEY);
    if (raw === null) return false;
    let doc: Persisted;
    try {
      doc = JSON.parse(raw) as Persisted;
    } catch {
      return false;
    }
    if (doc.version !== 1) return false;
    if (
      Number.isFinite(doc.latent?.l1) &&
      Number.isFinite(doc.latent?.l2)
    ) {
      this.latentValue = { l1: doc.latent.l1, l2: doc.latent.l2 };
    }
    if (typeof doc.transcript === "string") this.transcript = doc.transcript;
    if (Number.isFinite(doc.targetFrames)) this.targetFrames = doc.targetFrames;
    if (typeof doc.listener === "string") this.listener = doc.listener;
    if (Array.isArray(doc.history)) {
      this.historyValue = doc.history;
      this.nextId = 1 + Math.max(0, ...doc.history.map((r) => r.id));
    }
    return true;
  }
}
