/** Acceptance gate for the UI package, mirroring the service fixture flow:
 * the fountain-in-park query must render two highlighted features, expose
 * the executed IR for editing, and produce external links that embed the
 * selected coordinates to at least four decimals.
 */

import { readFileSync } from "node:fs";

import { describe, expect, it } from "vitest";

import { SequencedClient, type FetchLike, type QueryRequest, type QueryResponse } from "../src/api.js";
import { viewportBBox, type Viewport } from "../src/mercator.js";
import { openExternal } from "../src/overlays.js";
import {
  applySuccess,
  beginSubmit,
  buildRequest,
  canSubmit,
  editInput,
  editIr,
  initialState,
} from "../src/state.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/fountain_response.json", import.meta.url), "utf-8"),
) as QueryResponse;

const VIEW: Viewport = {
  centerLat: 48.4355,
  centerLon: 9.951,
  zoom: 14,
  widthPx: 800,
  heightPx: 600,
};

function embedsCoordinate(url: string, value: number): boolean {
  const literals = url.match(/-?\d+\.\d{4,}/g) ?? [];
  return literals.some((text) => Math.abs(Number(text) - value) < 0.00005);
}

describe("acceptance", () => {
  it("fountain-in-park fixture: 2 highlighted features, editable IR, 4-decimal links", async () => {
    let seenRequest: QueryRequest | undefined;
    const fetchFn: FetchLike = async (_url, init) => {
      seenRequest = JSON.parse(init.body as string) as QueryRequest;
      return { status: 200, json: async () => fixture };
    };
    const client = new SequencedClient("http://service:8000", fetchFn);

    let state = editInput(initialState(VIEW), "find a fountain in a park");
    expect(canSubmit(state)).toBe(true);

    const begun = beginSubmit(state);
    const settled = await client.submit(buildRequest(begun.state));
    expect(settled).not.toBeNull();
    expect(settled!.outcome.ok).toBe(true);
    if (!settled!.outcome.ok) return;
    state = applySuccess(begun.state, begun.seq, settled!.outcome.body);

    // the viewport bbox rides along for area-less queries
    expect(seenRequest?.bbox).toEqual(viewportBBox(VIEW));

    // two features, both highlighted under the default selection
    const features = state.groups.flatMap((group) => group.features);
    expect(state.groups).toHaveLength(1);
    expect(features).toHaveLength(2);
    expect(features.every((f) => f.highlighted)).toBe(true);

    // the IR panel shows the executed IR verbatim and accepts edits
    expect(state.irText).toBe(fixture.ir);
    expect(state.irDirty).toBe(false);
    const edited = editIr(state, state.irText.replace("park", "garden"));
    expect(edited.irDirty).toBe(true);
    expect(buildRequest(edited).yaml).toContain("garden");

    // every provider link embeds the selected coordinates to >= 4 decimals
    const providers = ["google", "bing", "yandex", "street_level"];
    for (const feature of features) {
      for (const provider of providers) {
        let opened = "";
        openExternal(feature, provider, (url) => {
          opened = url;
        });
        expect(opened, `${provider} link missing`).not.toBe("");
        expect(
          embedsCoordinate(opened, feature.position.lat),
          `${provider} lacks latitude: ${opened}`,
        ).toBe(true);
        expect(
          embedsCoordinate(opened, feature.position.lon),
          `${provider} lacks longitude: ${opened}`,
        ).toBe(true);
      }
    }

    console.log(
      "\nACCEPTANCE ui fixture flow: PASS " +
        `(${features.length} highlighted features, ${providers.length} providers, IR ${state.irText.length} chars)`,
    );
  });
});
