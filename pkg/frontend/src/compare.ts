/** Side-by-side comparison of probed reconstructions.
 *
 * Up to six history entries can be selected (the MUSHRA layout compares six
 * versions of one word); each selected item gets a 0-100 fluency score. The
 * panel is only meaningful from two items up.
 */

import type { MushraEntry } from "./mushra";
import { clampScore } from "./mushra";
import type { ProbeRecord } from "./state";

export const MAX_SELECTION = 6;
export const MIN_SELECTION = 2;

export type ToggleResult =
  | { ok: true; selected: boolean }
  | { ok: false; message: string };

export class CompareSelection {
  private readonly ids = new Set<number>();
  private readonly scores = new Map<number, number>();

  toggle(id: number): ToggleResult {
    if (this.ids.has(id)) {
      this.ids.delete(id);
      this.scores.delete(id);
      return { ok: true, selected: false };
    }
    if (this.ids.size >= MAX_SELECTION) {
      return { ok: false,
               message: `select at most ${MAX_SELECTION} probes` };
    }
    this.ids.add(id);
    return { ok: true, selected: true };
  }

  has(id: number): boolean {
    return this.ids.has(id);
  }

  get size(): number {
    return this.ids.size;
  }

  get ready(): boolean {
    return this.ids.size >= MIN_SELECTION;
  }

  setScore(id: number, score: number): number {
    const clamped = clampScore(score);
    if (this.ids.has(id)) this.scores.set(id, clamped);
    return clamped;
  }

  scoreOf(id: number): number | undefined {
    return this.scores.get(id);
  }

  get fullyScored(): boolean {
    return this.ready && [...this.ids].every((id) => this.scores.has(id));
  }

  selectedRecords(history: readonly ProbeRecord[]): ProbeRecord[] {
    return history.filter((r) => this.ids.has(r.id));
  }

  /** Scored selection as MUSHRA rows. Sweep probes carry their condition
   * tag; anything else is treated as the reference ("orig"). */
  toEntries(history: readonly ProbeRecord[], listener: string): MushraEntry[] {
    return this.selectedRecords(history)
      .filter((r) => this.scores.has(r.id))
      .map((r) => ({
        word: r.transcript,
        condition: r.condition ?? "orig",
        listener,
        score: this.scores.get(r.id) as number,
      }));
  }
}
