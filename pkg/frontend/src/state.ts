/** UI state and its pure transitions.
 *
 * The DOM layer renders whatever state says; every event handler reduces
 * to one of these functions plus a render call.  Responses carry the
 * sequence number they answer; anything older than the newest submit is
 * dropped unchanged.
 */

import type { BundleSuggestion, ErrorDetail, QueryRequest, QueryResponse } from "./api.js";
import type { Viewport } from "./mercator.js";
import { viewportBBox } from "./mercator.js";
import type { OverlayGroup } from "./overlays.js";
import { buildOverlays, withSelection } from "./overlays.js";

export interface Banner {
  kind: "error" | "warning" | "info";
  text: string;
}

export interface SuggestionChip {
  label: string;
  replacement: string;
}

export interface UiQueryState {
  input: string;
  irText: string;
  irDirty: boolean;
  viewport: Viewport;
  selectedAssignment: number;
  backendMode: string;
  seq: number;
  inFlight: boolean;
  groups: OverlayGroup[];
  banner: Banner | null;
  chips: SuggestionChip[];
  failedDescriptor: string | null;
  lastResponse: QueryResponse | null;
}

export function initialState(viewport: Viewport, backendMode = "builtin_grammar"): UiQueryState {
  return {
    input: "",
    irText: "",
    irDirty: false,
    viewport,
    selectedAssignment: 0,
    backendMode,
    seq: 0,
    inFlight: false,
    groups: [],
    banner: null,
    chips: [],
    failedDescriptor: null,
    lastResponse: null,
  };
}

export function canSubmit(state: UiQueryState): boolean {
  return state.input.trim() !== "" || (state.irDirty && state.irText.trim() !== "");
}

/** Edited IR wins over the text box; the viewport always rides along. */
export function buildRequest(state: UiQueryState): QueryRequest {
  const bbox = viewportBBox(state.viewport);
  if (state.irDirty && state.irText.trim() !== "") {
    return { yaml: state.irText, bbox };
  }
  return { text: state.input, bbox };
}

export function beginSubmit(state: UiQueryState): { state: UiQueryState; seq: number } {
  const seq = state.seq + 1;
  return {
    state: { ...state, seq, inFlight: true, banner: null, chips: [] },
    seq,
  };
}

function stale(state: UiQueryState, seq: number): boolean {
  return seq !== state.seq;
}

export function applySuccess(state: UiQueryState, seq: number, body: QueryResponse): UiQueryState {
  if (stale(state, seq)) {
    return state;
  }
  const groups = withSelection(buildOverlays(body), 0);
  const warnings = body.diagnostics.warnings;
  return {
    ...state,
    inFlight: false,
    // executed IR verbatim; editing it later marks it dirty
    irText: body.ir,
    irDirty: false,
    selectedAssignment: 0,
    groups,
    banner:
      groups.length === 0
        ? { kind: "info", text: "no matching scenes in this area" }
        : warnings.length > 0
          ? { kind: "warning", text: warnings.join("; ") }
          : null,
    chips: [],
    failedDescriptor: null,
    lastResponse: body,
  };
}

function chipsFor(detail: ErrorDetail): SuggestionChip[] {
  const suggestions = detail.suggestions ?? [];
  return suggestions.map((entry) => {
    if (typeof entry === "string") {
      return { label: entry, replacement: entry };
    }
    const bundle = entry as BundleSuggestion;
    return { label: `${bundle.bundle_id} (${bundle.score.toFixed(2)})`, replacement: bundle.bundle_id };
  });
}

export function applyFailure(
  state: UiQueryState,
  seq: number,
  status: number,
  detail: ErrorDetail,
): UiQueryState {
  if (stale(state, seq)) {
    return state;
  }
  const banner: Banner = {
    kind: "error",
    text: status === 504 ? `backend timeout: ${detail.message}` : detail.message,
  };
  let failedDescriptor: string | null = null;
  if (detail.kind === "unresolvable" && detail.descriptor) {
    failedDescriptor = detail.descriptor;
  } else if (detail.kind === "unknown_area" && detail.name) {
    failedDescriptor = detail.name;
  }
  return {
    ...state,
    inFlight: false,
    banner,
    chips: chipsFor(detail),
    failedDescriptor,
  };
}

export function selectAssignment(state: UiQueryState, index: number): UiQueryState {
  return {
    ...state,
    selectedAssignment: index,
    groups: withSelection(state.groups, index),
  };
}

export function editIr(state: UiQueryState, text: string): UiQueryState {
  return { ...state, irText: text, irDirty: text !== (state.lastResponse?.ir ?? "") };
}

export function editInput(state: UiQueryState, text: string): UiQueryState {
  return { ...state, input: text };
}

export function setViewport(state: UiQueryState, viewport: Viewport): UiQueryState {
  return { ...state, viewport };
}

/** Swap the failing descriptor for the chip's replacement in the live input. */
export function applyChip(state: UiQueryState, chip: SuggestionChip): UiQueryState {
  let input = state.input;
  if (state.failedDescriptor && input.includes(state.failedDescriptor)) {
    input = input.replace(state.failedDescriptor, chip.replacement);
  }
  return {
    ...state,
    input,
    irDirty: false,
    banner: null,
    chips: [],
    failedDescriptor: null,
  };
}
