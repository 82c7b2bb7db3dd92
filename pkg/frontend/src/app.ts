/** DOM wiring for the explorer. All logic lives in the imported modules;
 * this file only moves values between controls and controllers.
 */

import { ApiError, Client, OfflineError } from "./api";
import { CompareSelection, MAX_SELECTION } from "./compare";
import { hitTest, layoutScatter, type ScatterLayout } from "./latentMap";
import { melFromBase64 } from "./mels";
import { aggregate, rankOrder, toTsv, MushraError } from "./mushra";
import { ProbeController, type ProbeResult } from "./probe";
import { drawRaster, melToRaster } from "./spectrogram";
import { ExplorationState, type ProbeRecord } from "./state";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const state = new ExplorationState(window.localStorage);
state.restore();

const client = new Client("");
const probes = new ProbeController(client, state);
const selection = new CompareSelection();

const banner = el<HTMLDivElement>("offline-banner");
const errorBox = el<HTMLDivElement>("error-box");
const slider1 = el<HTMLInputElement>("dim1");
const slider2 = el<HTMLInputElement>("dim2");
const dim1Out = el<HTMLSpanElement>("dim1-value");
const dim2Out = el<HTMLSpanElement>("dim2-value");
const transcriptInput = el<HTMLInputElement>("transcript");
const framesInput = el<HTMLInputElement>("frames");
const listenerInput = el<HTMLInputElement>("listener");
const probability = el<HTMLDivElement>("probability");
const melCanvas = el<HTMLCanvasElement>("mel-canvas");
const mapCanvas = el<HTMLCanvasElement>("map-canvas");
const mapEmpty = el<HTMLDivElement>("map-empty");
const player = el<HTMLAudioElement>("player");
const historyList = el<HTMLUListElement>("history");
const compareGrid = el<HTMLDivElement>("compare-grid");
const rankPanel = el<HTMLDivElement>("rank-panel");
const exportLink = el<HTMLAnchorElement>("export-tsv");

let mapLayout: ScatterLayout | null = null;

function setOffline(offline: boolean): void {
  banner.hidden = !offline;
}

function showError(message: string | null): void {
  errorBox.hidden = message === null;
  errorBox.textContent = message ?? "";
}

function reportFailure(e: unknown): void {
  if (e instanceof OfflineError) {
    setOffline(true);
    return;
  }
  setOffline(false);
  if (e instanceof ApiError) {
    showError(`${e.code}: ${e.message}`);
  } else if (e instanceof MushraError) {
    showError(e.message);
  } else {
    showError(String(e));
  }
}

function syncControls(): void {
  const { l1, l2 } = state.latent;
  slider1.value = String(l1);
  slider2.value = String(l2);
  dim1Out.textContent = l1.toFixed(2);
  dim2Out.textContent = l2.toFixed(2);
  transcriptInput.value = state.transcript;
  framesInput.value = String(state.targetFrames);
  listenerInput.value = state.listener;
}

function showResult(result: ProbeResult): void {
  setOffline(false);
  showError(null);
  probability.textContent =
    `p(dysarthric) = ${result.response.p_dysarthric.toFixed(3)}`;
  const grid = melFromBase64(result.response.mel);
  drawRaster(melCanvas, melToRaster(grid));
  if (result.response.wav) {
    player.src = "data:audio/wav;base64," + result.response.wav;
    player.hidden = false;
  }
  renderHistory();
}

probes.onResult = showResult;
probes.onError = reportFailure;

function probeCurrent(): void {
  const { l1, l2 } = state.latent;
  probes.request({
    l1, l2,
    transcript: state.transcript,
    targetFrames: state.targetFrames,
    wantAudio: true,
  });
}

function onSlider(): void {
  const ok = state.setLatent(Number(slider1.value), Number(slider2.value));
  if (!ok) return;
  const { l1, l2 } = state.latent;
  dim1Out.textContent = l1.toFixed(2);
  dim2Out.textContent = l2.toFixed(2);
  probeCurrent();
}

slider1.addEventListener("input", onSlider);
slider2.addEventListener("input", onSlider);

transcriptInput.addEventListener("change", () => {
  state.transcript = transcriptInput.value;
  state.save();
});
framesInput.addEventListener("change", () => {
  const n = Number(framesInput.value);
  if (Number.isFinite(n) && n >= 1) {
    state.targetFrames = Math.round(n);
    state.save();
  }
});
listenerInput.addEventListener("change", () => {
  state.listener = listenerInput.value || "local";
  state.save();
});

el<HTMLButtonElement>("probe-btn").addEventListener("click", () => {
  const { l1, l2 } = state.latent;
  probes.probeNow({
    l1, l2,
    transcript: state.transcript,
    targetFrames: state.targetFrames,
    wantAudio: true,
  }).then(showResult, reportFailure);
});

el<HTMLButtonElement>("sweep-btn").addEventListener("click", () => {
  probes.sweepPreset(state.transcript, state.targetFrames)
    .then((results) => {
      const last = results[results.length - 1];
      if (last) showResult(last);
    }, reportFailure);
});

// -- history and compare ------------------------------------------------------

function recordLabel(r: ProbeRecord): string {
  const tag = r.condition ?? `(${r.l1.toFixed(2)}, ${r.l2.toFixed(2)})`;
  return `${r.transcript} ${tag} p=${r.pDysarthric.toFixed(2)}`;
}

function renderHistory(): void {
  historyList.replaceChildren();
  for (const rec of [...state.history].reverse().slice(0, 40)) {
    const li = document.createElement("li");
    const check = document.createElement("input");
    check.type = "checkbox";
    check.checked = selection.has(rec.id);
    check.addEventListener("change", () => {
      const res = selection.toggle(rec.id);
      if (!res.ok) {
        check.checked = false;
        showError(res.message);
        return;
      }
      showError(null);
      renderCompare();
    });
    const label = document.createElement("span");
    label.textContent = recordLabel(rec);
    label.addEventListener("click", () => {
      if (state.setLatent(rec.l1, rec.l2)) {
        state.transcript = rec.transcript;
        syncControls();
        probeCurrent();
      }
    });
    li.append(check, label);
    historyList.append(li);
  }
}

function renderCompare(): void {
  compareGrid.replaceChildren();
  const records = selection.selectedRecords(state.history);
  for (const rec of records) {
    const cell = document.createElement("div");
    cell.className = "compare-cell";
    const canvas = document.createElement("canvas");
    canvas.width = 160;
    canvas.height = 80;
    try {
      drawRaster(canvas, melToRaster(melFromBase64(rec.melB64)));
    } catch {
      // unparsable blob; leave the cell blank
    }
    const caption = document.createElement("div");
    caption.textContent = recordLabel(rec);
    const score = document.createElement("input");
    score.type = "number";
    score.min = "0";
    score.max = "100";
    score.placeholder = "0-100";
    const existing = selection.scoreOf(rec.id);
    if (existing !== undefined) score.value = String(existing);
    score.addEventListener("change", () => {
      const clamped = selection.setScore(rec.id, Number(score.value));
      score.value = String(clamped);
      renderRanks();
    });
    cell.append(canvas, caption, score);
    compareGrid.append(cell);
  }
  compareGrid.hidden = records.length < 2;
  renderRanks();
}

function renderRanks(): void {
  rankPanel.replaceChildren();
  exportLink.hidden = true;
  if (!selection.fullyScored) return;
  const entries = selection.toEntries(state.history, state.listener);
  let summaries;
  try {
    summaries = aggregate(entries);
  } catch {
    // selection does not form a complete condition set yet
    return;
  }
  const list = document.createElement("ol");
  for (const s of rankOrder(summaries)) {
    const li = document.createElement("li");
    li.textContent =
      `${s.condition}: median ${s.median.toFixed(1)}, ` +
      `mean rank ${s.meanRank.toFixed(2)}`;
    list.append(li);
  }
  rankPanel.append(list);
  const tsv = toTsv(entries);
  exportLink.href = URL.createObjectURL(
    new Blob([tsv], { type: "text/tab-separated-values" }));
  exportLink.download = "mushra_scores.tsv";
  exportLink.hidden = false;
}

// -- latent map ----------------------------------------------------------------

function drawMap(layout: ScatterLayout): void {
  const ctx = mapCanvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, mapCanvas.width, mapCanvas.height);
  for (const dot of layout.dots) {
    ctx.beginPath();
    ctx.arc(dot.x, dot.y, dot.r, 0, 2 * Math.PI);
    ctx.fillStyle = dot.color;
    ctx.globalAlpha = 0.75;
    ctx.fill();
  }
  ctx.globalAlpha = 1;
}

async function loadMap(): Promise<void> {
  try {
    const map = await client.latentMap();
    mapLayout = layoutScatter(map, mapCanvas.width, mapCanvas.height);
    mapEmpty.hidden = !mapLayout.empty;
    if (!mapLayout.empty) drawMap(mapLayout);
    setOffline(false);
  } catch (e) {
    if (e instanceof ApiError && e.code === 404) {
      mapEmpty.hidden = false;
      mapEmpty.textContent = "no latent map on this server";
      return;
    }
    reportFailure(e);
  }
}

mapCanvas.addEventListener("click", (ev) => {
  if (!mapLayout) return;
  const rect = mapCanvas.getBoundingClientRect();
  const dot = hitTest(mapLayout, ev.clientX - rect.left, ev.clientY - rect.top);
  if (!dot) return;
  if (state.setLatent(dot.point.l1, dot.point.l2)) {
    state.transcript = dot.point.word;
    syncControls();
    probeCurrent();
  }
});

window.addEventListener("offline", () => setOffline(true));
window.addEventListener("online", () => {
  setOffline(false);
  void loadMap();
});

syncControls();
renderHistory();
void loadMap();
void client.health().then(() => setOffline(false), () => setOffline(true));

export { state, probes, selection, MAX_SELECTION };
