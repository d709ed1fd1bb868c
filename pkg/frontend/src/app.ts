/** DOM wiring for the workbench page: session setup, candidate slider,
 * sweep controls with polling, ROI drawing, live metrics, compare view.
 * All quantitative readouts come from the service; the canvas only windows
 * raw floats for display. */

import { ApiClient } from "./api.js";
import { renderToCanvas } from "./render.js";
import {
  ViewState,
  applyCurve,
  addRoi,
  indexAtSliderPosition,
  initialState,
  selectIndex,
  setComparePair,
  setWindow,
  sliderPositionOf,
} from "./state.js";
import type { CurveSummary, Direction, RawImage } from "./types.js";

const api = new ApiClient("");
let state: ViewState = initialState();
let curve: CurveSummary | null = null;
let currentImage: RawImage | null = null;
let pollTimer: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = () => el<HTMLCanvasElement>("view");
const compareA = () => el<HTMLCanvasElement>("compare-a");
const compareB = () => el<HTMLCanvasElement>("compare-b");

function setStatus(text: string): void {
  el<HTMLSpanElement>("status").textContent = text;
}

async function refreshImage(): Promise<void> {
  if (!state.sessionId) return;
  currentImage = await api.getCandidateRaw(state.sessionId, state.selectedIndex);
  renderToCanvas(canvas(), currentImage, state.windowLow, state.windowHigh);
  renderReadout();
}

function renderReadout(): void {
  if (!curve) return;
  const meta = curve.candidates[String(state.selectedIndex)];
  const lines: string[] = [`candidate ${state.selectedIndex}`];
  if (meta) {
    lines.push(`iteration ${meta.iteration}`);
    if (meta.metrics) {
      for (const [label, std] of Object.entries(meta.metrics.roi_std)) {
        lines.push(`STD[${label}] ${std.toFixed(2)} HU`);
      }
      if (meta.metrics.rmse !== null) {
        lines.push(`RMSE ${meta.metrics.rmse.toFixed(2)} HU`);
      }
      if (meta.metrics.resolution_proxy !== null) {
        lines.push(`edge gradient ${meta.metrics.resolution_proxy.toFixed(2)} HU/px`);
      }
    }
    if (meta.distance_to_t_low !== null && meta.distance_to_t_high !== null) {
      lines.push(
        `to smooth bound ${meta.distance_to_t_low.toFixed(2)}, ` +
          `to noisy bound ${meta.distance_to_t_high.toFixed(2)}`,
      );
    }
  }
  el<HTMLPreElement>("readout").textContent = lines.join("\n");
}

function syncSlider(): void {
  const slider = el<HTMLInputElement>("slider");
  slider.min = "0";
  slider.max = String(state.indices.length - 1);
  slider.value = String(sliderPositionOf(state, state.selectedIndex));
  el<HTMLSpanElement>("range").textContent =
    `[${state.indices[0]}, ${state.indices[state.indices.length - 1]}]`;
}

async function pollCurve(): Promise<void> {
  if (!state.sessionId) return;
  curve = await api.getCurve(state.sessionId);
  state = applyCurve(state, curve);
  syncSlider();
  renderReadout();
  const building = Object.values(curve.directions).some((s) => s === "building");
  setStatus(
    `low: ${curve.directions.low_noise} / high: ${curve.directions.high_resolution}`,
  );
  if (!building && pollTimer !== null) {
    window.clearInterval(pollTimer);
    pollTimer = null;
  }
}

function startPolling(): void {
  if (pollTimer === null) {
    pollTimer = window.setInterval(
      () => void pollCurve().catch(() => undefined),
      state.pollIntervalMs,
    );
  }
}

async function createSession(): Promise<void> {
  const checkpoint = el<HTMLSelectElement>("checkpoint").value;
  const created = await api.createSession({
    checkpoint,
    phantom: {
      seed: Number(el<HTMLInputElement>("phantom-seed").value || "0"),
      sigma: Number(el<HTMLInputElement>("phantom-sigma").value || "25"),
    },
    flat_roi: { label: "flat", row0: 100, col0: 8, height: 20, width: 24 },
  });
  state = { ...initialState(), sessionId: created.id };
  curve = created.curve;
  state = applyCurve(state, created.curve);
  syncSlider();
  setStatus(`session ${created.id}`);
  await refreshImage();
}

async function startSweep(direction: Direction): Promise<void> {
  if (!state.sessionId) return;
  await api.startSweep(state.sessionId, direction);
  startPolling();
}

async function updateCompare(): Promise<void> {
  if (!state.sessionId || !state.comparePair) return;
  const [a, b] = state.comparePair;
  const [imgA, imgB] = await Promise.all([
    api.getCandidateRaw(state.sessionId, a, "compare-a"),
    api.getCandidateRaw(state.sessionId, b, "compare-b"),
  ]);
  // linked window/level across both panes
  renderToCanvas(compareA(), imgA, state.windowLow, state.windowHigh);
  renderToCanvas(compareB(), imgB, state.windowLow, state.windowHigh);
}

function wireRoiDrawing(): void {
  const view = canvas();
  let anchor: { row: number; col: number } | null = null;
  view.addEventListener("mousedown", (event) => {
    const rect = view.getBoundingClientRect();
    anchor = {
      row: Math.floor(((event.clientY - rect.top) / rect.height) * view.height),
      col: Math.floor(((event.clientX - rect.left) / rect.width) * view.width),
    };
  });
  view.addEventListener("mouseup", async (event) => {
    if (!anchor || !state.sessionId || !currentImage) return;
    const sessionId = state.sessionId;
    const rect = view.getBoundingClientRect();
    const row = Math.floor(((event.clientY - rect.top) / rect.height) * view.height);
    const col = Math.floor(((event.clientX - rect.left) / rect.width) * view.width);
    const roi = {
      label: `roi${state.rois.length}`,
      row0: Math.min(anchor.row, row),
      col0: Math.min(anchor.col, col),
      height: Math.abs(row - anchor.row) + 1,
      width: Math.abs(col - anchor.col) + 1,
    };
    anchor = null;
    const before = state.rois.length;
    state = addRoi(state, roi, currentImage.height, currentImage.width);
    if (state.rois.length === before) return; // rejected client-side
    const metrics = await api.getCandidateMetrics(
      sessionId,
      state.selectedIndex,
      state.rois,
      state.rois.length >= 2
        ? { foreground: state.rois[0].label, background: state.rois[1].label }
        : undefined,
    );
    const parts = Object.entries(metrics.roi_std).map(
      ([label, std]) => `STD[${label}] ${std.toFixed(2)}`,
    );
    if (metrics.cnr !== null && metrics.cnr !== undefined) {
      parts.push(`CNR ${metrics.cnr.toFixed(3)}`);
    }
    el<HTMLPreElement>("roi-readout").textContent = parts.join("\n");
  });
}

export function boot(): void {
  void api.listCheckpoints().then((list) => {
    const select = el<HTMLSelectElement>("checkpoint");
    select.innerHTML = "";
    for (const ckpt of list) {
      const option = document.createElement("option");
      option.value = ckpt.id;
      option.textContent = `${ckpt.id} (${ckpt.kind})`;
      select.appendChild(option);
    }
  });

  el<HTMLButtonElement>("create").addEventListener("click", () => {
    void createSession().catch((err) => setStatus(String(err)));
  });
  el<HTMLButtonElement>("sweep-low").addEventListener("click", () => {
    void startSweep("low_noise").catch((err) => setStatus(String(err)));
  });
  el<HTMLButtonElement>("sweep-high").addEventListener("click", () => {
    void startSweep("high_resolution").catch((err) => setStatus(String(err)));
  });

  el<HTMLInputElement>("slider").addEventListener("input", (event) => {
    const position = Number((event.target as HTMLInputElement).value);
    state = selectIndex(state, indexAtSliderPosition(state, position));
    void refreshImage().catch(() => undefined);
  });

  const applyWindow = () => {
    const low = Number(el<HTMLInputElement>("win-low").value);
    const high = Number(el<HTMLInputElement>("win-high").value);
    state = setWindow(state, low, high);
    if (currentImage) {
      renderToCanvas(canvas(), currentImage, state.windowLow, state.windowHigh);
    }
    void updateCompare().catch(() => undefined);
  };
  el<HTMLInputElement>("win-low").addEventListener("change", applyWindow);
  el<HTMLInputElement>("win-high").addEventListener("change", applyWindow);

  el<HTMLButtonElement>("compare").addEventListener("click", () => {
    const a = Number(el<HTMLInputElement>("compare-ja").value);
    const b = Number(el<HTMLInputElement>("compare-jb").value);
    state = setComparePair(state, a, b);
    void updateCompare().catch((err) => setStatus(String(err)));
  });

  wireRoiDrawing();
}

boot();
