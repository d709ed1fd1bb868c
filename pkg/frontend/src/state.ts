/** View state and its pure update functions. The slider index, display
 * window, ROI list and compare pair all live here; DOM code only reads the
 * result of these transitions. */

import type { CurveSummary, Roi } from "./types.js";

export interface ViewState {
  sessionId: string | null;
  selectedIndex: number;
  windowLow: number;
  windowHigh: number;
  rois: Roi[];
  comparePair: [number, number] | null;
  pollIntervalMs: number;
  indices: number[];
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    selectedIndex: 0,
    windowLow: -160,
    windowHigh: 240,
    rois: [],
    comparePair: null,
    pollIntervalMs: 500,
    indices: [0],
  };
}

/** Merge a fresh curve summary: the slider range grows monotonically and a
 * selection that fell out of the known range snaps back to the nearest end. */
export function applyCurve(state: ViewState, curve: CurveSummary): ViewState {
  const indices = [...curve.indices].sort((a, b) => a - b);
  if (indices.length === 0) {
    return { ...state, indices: [0], selectedIndex: 0 };
  }
  const lo = indices[0];
  const hi = indices[indices.length - 1];
  const selected = Math.min(Math.max(state.selectedIndex, lo), hi);
  return { ...state, indices, selectedIndex: selected };
}

export function selectIndex(state: ViewState, index: number): ViewState {
  if (!state.indices.includes(index)) {
    return state; // out-of-range selections are disabled in the control
  }
  return { ...state, selectedIndex: index };
}

export function setWindow(
  state: ViewState,
  low: number,
  high: number,
): ViewState {
  if (!(low < high)) {
    return state;
  }
  return { ...state, windowLow: low, windowHigh: high };
}

export function validRoi(roi: Roi, height: number, width: number): boolean {
  return (
    roi.height * roi.width >= 4 &&
    roi.row0 >= 0 &&
    roi.col0 >= 0 &&
    roi.row0 + roi.height <= height &&
    roi.col0 + roi.width <= width
  );
}

export function addRoi(
  state: ViewState,
  roi: Roi,
  height: number,
  width: number,
): ViewState {
  if (!validRoi(roi, height, width)) {
    return state; // invalid rectangles are rejected client-side
  }
  const rois = state.rois.filter((r) => r.label !== roi.label).concat(roi);
  return { ...state, rois };
}

export function setComparePair(
  state: ViewState,
  a: number,
  b: number,
): ViewState {
  if (!state.indices.includes(a) || !state.indices.includes(b)) {
    return state;
  }
  return { ...state, comparePair: [a, b] };
}

export function swapComparePair(state: ViewState): ViewState {
  if (!state.comparePair) {
    return state;
  }
  const [a, b] = state.comparePair;
  return { ...state, comparePair: [b, a] };
}

/** Slider position <-> candidate index: a bijection over loaded indices. */
export function sliderPositionOf(state: ViewState, index: number): number {
  return state.indices.indexOf(index);
}

export function indexAtSliderPosition(
  state: ViewState,
  position: number,
): number {
  const clamped = Math.min(Math.max(position, 0), state.indices.length - 1);
  return state.indices[clamped];
}
