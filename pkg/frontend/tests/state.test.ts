import { readFileSync } from "node:fs";

import { describe, expect, it } from "vitest";

import type { ErrorDetail, QueryResponse } from "../src/api.js";
import { viewportBBox, type Viewport } from "../src/mercator.js";
import {
  applyChip,
  applyFailure,
  applySuccess,
  beginSubmit,
  buildRequest,
  canSubmit,
  editInput,
  editIr,
  initialState,
  selectAssignment,
  type UiQueryState,
} from "../src/state.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/fountain_response.json", import.meta.url), "utf-8"),
) as QueryResponse;

const unresolvable = JSON.parse(
  readFileSync(new URL("./fixtures/unresolvable_response.json", import.meta.url), "utf-8"),
).detail as ErrorDetail;

const VIEW: Viewport = {
  centerLat: 48.4355,
  centerLon: 9.951,
  zoom: 14,
  widthPx: 800,
  heightPx: 600,
};

function fresh(): UiQueryState {
  return initialState(VIEW);
}

describe("canSubmit", () => {
  it("rejects an empty state", () => {
    expect(canSubmit(fresh())).toBe(false);
    expect(canSubmit(editInput(fresh(), "   "))).toBe(false);
  });

  it("accepts typed text", () => {
    expect(canSubmit(editInput(fresh(), "find a fountain in a park"))).toBe(true);
  });

  it("accepts an edited IR without text", () => {
    const state = editIr(fresh(), "entities:\n- id: 0\n  name: cafe\n  type: nwr\n");
    expect(canSubmit(state)).toBe(true);
  });

  it("ignores an unedited IR", () => {
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, fixture);
    state = editInput(state, "");
    expect(state.irText).not.toBe("");
    expect(canSubmit(state)).toBe(false);
  });
});

describe("buildRequest", () => {
  it("always carries the viewport bbox", () => {
    const state = editInput(fresh(), "find a cafe");
    const request = buildRequest(state);
    expect(request.bbox).toEqual(viewportBBox(VIEW));
    expect(request.text).toBe("find a cafe");
    expect(request.yaml).toBeUndefined();
  });

  it("prefers the edited IR over the text box", () => {
    let state = editInput(fresh(), "find a cafe");
    state = editIr(state, "entities:\n- id: 0\n  name: cafe\n  type: nwr\n");
    const request = buildRequest(state);
    expect(request.yaml).toBe(state.irText);
    expect(request.text).toBeUndefined();
    expect(request.bbox).toEqual(viewportBBox(VIEW));
  });

  it("falls back to text once the IR matches the executed one again", () => {
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, fixture);
    state = editIr(state, state.irText + "# note\n");
    expect(buildRequest(state).yaml).toBeDefined();
    state = editIr(state, fixture.ir);
    expect(state.irDirty).toBe(false);
    expect(buildRequest(state).text).toBe("find a fountain in a park");
  });
});

describe("submit lifecycle", () => {
  it("increments the sequence and clears stale feedback", () => {
    let state = editInput(fresh(), "x y z w");
    state = { ...state, banner: { kind: "error", text: "old" }, chips: [{ label: "a", replacement: "a" }] };
    const { state: next, seq } = beginSubmit(state);
    expect(seq).toBe(1);
    expect(next.seq).toBe(1);
    expect(next.inFlight).toBe(true);
    expect(next.banner).toBeNull();
    expect(next.chips).toEqual([]);
  });

  it("applies a success: IR, groups, selection reset", () => {
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, fixture);
    expect(state.inFlight).toBe(false);
    expect(state.irText).toBe(fixture.ir);
    expect(state.irDirty).toBe(false);
    expect(state.selectedAssignment).toBe(0);
    expect(state.groups).toHaveLength(1);
    expect(state.groups[0]?.features.every((f) => f.highlighted)).toBe(true);
    expect(state.banner).toBeNull();
  });

  it("discards a stale success without touching state", () => {
    let state = editInput(fresh(), "find a fountain in a park");
    const first = beginSubmit(state);
    const second = beginSubmit(first.state);
    const after = applySuccess(second.state, first.seq, fixture);
    expect(after).toBe(second.state);
    expect(after.groups).toEqual([]);
    expect(after.inFlight).toBe(true);
  });

  it("discards a stale failure too", () => {
    let state = editInput(fresh(), "find a zorblax");
    const first = beginSubmit(state);
    const second = beginSubmit(first.state);
    const after = applyFailure(second.state, first.seq, 422, unresolvable);
    expect(after).toBe(second.state);
  });

  it("shows an info banner for an empty result set", () => {
    const empty: QueryResponse = JSON.parse(JSON.stringify(fixture));
    empty.results.features = [];
    empty.diagnostics.assignments = 0;
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, empty);
    expect(state.groups).toEqual([]);
    expect(state.banner?.kind).toBe("info");
  });

  it("surfaces diagnostics warnings as a banner", () => {
    const warned: QueryResponse = JSON.parse(JSON.stringify(fixture));
    warned.diagnostics.warnings = ["slot 1 joins without a relation edge (cartesian expansion)"];
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, warned);
    expect(state.banner?.kind).toBe("warning");
    expect(state.banner?.text).toContain("cartesian expansion");
  });
});

describe("failure handling", () => {
  function failWith(detail: ErrorDetail, status = 422): UiQueryState {
    const state = editInput(fresh(), "find a zorblax next to a park");
    const { state: submitted, seq } = beginSubmit(state);
    return applyFailure(submitted, seq, status, detail);
  }

  it("renders unresolvable suggestions as chips", () => {
    const state = failWith(unresolvable);
    expect(state.banner?.kind).toBe("error");
    expect(state.chips.length).toBeGreaterThanOrEqual(1);
    expect(state.chips[0]?.replacement).toBe(
      (unresolvable.suggestions?.[0] as { bundle_id: string }).bundle_id,
    );
    expect(state.chips[0]?.label).toContain(state.chips[0]!.replacement);
    expect(state.failedDescriptor).toBe(unresolvable.descriptor);
  });

  it("renders unknown-area name suggestions as chips", () => {
    const detail: ErrorDetail = {
      status: "error",
      kind: "unknown_area",
      message: "unknown area 'Miligen'",
      name: "Miligen",
      suggestions: ["Milligen", "Lakeview"],
    };
    const state = failWith(detail);
    expect(state.chips.map((c) => c.replacement)).toEqual(["Milligen", "Lakeview"]);
    expect(state.failedDescriptor).toBe("Miligen");
  });

  it("labels a 504 as a backend timeout", () => {
    const detail: ErrorDetail = { status: "error", kind: "timeout", message: "backend took too long" };
    const state = failWith(detail, 504);
    expect(state.banner?.text).toContain("timeout");
    expect(state.chips).toEqual([]);
  });

  it("clears the in-flight flag", () => {
    const state = failWith(unresolvable);
    expect(state.inFlight).toBe(false);
  });
});

describe("selection and chips", () => {
  it("selectAssignment re-highlights", () => {
    const two: QueryResponse = JSON.parse(JSON.stringify(fixture));
    const clone = JSON.parse(JSON.stringify(fixture.results.features[0]));
    clone.properties.assignment_index = 1;
    two.results.features = [...two.results.features, clone];
    let state = editInput(fresh(), "find a fountain in a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applySuccess(submitted, seq, two);
    state = selectAssignment(state, 1);
    expect(state.selectedAssignment).toBe(1);
    for (const group of state.groups) {
      for (const feature of group.features) {
        expect(feature.highlighted).toBe(group.assignmentIndex === 1);
      }
    }
  });

  it("applyChip swaps the failing descriptor in the input", () => {
    let state = editInput(fresh(), "find a zorblax next to a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applyFailure(submitted, seq, 422, unresolvable);
    const chip = state.chips[0]!;
    state = applyChip(state, chip);
    expect(state.input).toBe(`find a ${chip.replacement} next to a park`);
    expect(state.chips).toEqual([]);
    expect(state.banner).toBeNull();
    expect(state.failedDescriptor).toBeNull();
  });

  it("applyChip leaves the input alone when the descriptor is gone", () => {
    let state = editInput(fresh(), "find a zorblax next to a park");
    const { state: submitted, seq } = beginSubmit(state);
    state = applyFailure(submitted, seq, 422, unresolvable);
    const chip = state.chips[0]!;
    state = editInput(state, "something else entirely");
    state = applyChip(state, chip);
    expect(state.input).toBe("something else entirely");
  });
});
