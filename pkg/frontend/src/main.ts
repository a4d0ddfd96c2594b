/** Entry point: wires the map, panels, and sequenced client together.
 *
 * Deployment knobs are read from globals so the static bundle works
 * unmodified behind any host: GEOSCENE_API for the service base URL
 * (default same-origin) and GEOSCENE_TILES for the tile endpoint.
 */

import { SequencedClient, type FetchLike } from "./api.js";
import { TileMap } from "./map.js";
import { fitView, type Viewport } from "./mercator.js";
import { openExternal } from "./overlays.js";
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
  setViewport,
  type SuggestionChip,
  type UiQueryState,
} from "./state.js";
import { renderAssignmentList, renderBanner, renderChips, renderDetail, syncIrPanel } from "./panels.js";

interface Globals {
  GEOSCENE_API?: string;
  GEOSCENE_TILES?: string;
}

function requireEl<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing #${id}`);
  }
  return el as T;
}

export function boot(): void {
  const globals = window as unknown as Globals;
  const baseUrl = globals.GEOSCENE_API ?? "";
  const fetchFn: FetchLike = (url, init) => fetch(url, init);
  const client = new SequencedClient(baseUrl, fetchFn);

  const mapEl = requireEl<HTMLDivElement>("map");
  const inputEl = requireEl<HTMLInputElement>("query-input");
  const submitEl = requireEl<HTMLButtonElement>("submit");
  const bannerEl = requireEl<HTMLDivElement>("banner");
  const chipsEl = requireEl<HTMLDivElement>("chips");
  const irEl = requireEl<HTMLTextAreaElement>("ir-panel");
  const assignmentsEl = requireEl<HTMLUListElement>("assignments");
  const detailEl = requireEl<HTMLDivElement>("detail");
  const zoomInEl = requireEl<HTMLButtonElement>("zoom-in");
  const zoomOutEl = requireEl<HTMLButtonElement>("zoom-out");

  const startView: Viewport = {
    centerLat: 48.4355,
    centerLon: 9.951,
    zoom: 14,
    widthPx: mapEl.clientWidth || 800,
    heightPx: mapEl.clientHeight || 600,
  };
  let state: UiQueryState = initialState(startView);

  const map = new TileMap(mapEl, startView, {
    tileTemplate: globals.GEOSCENE_TILES,
    onViewChange: (view) => {
      state = setViewport(state, view);
    },
  });

  function render(): void {
    submitEl.disabled = !canSubmit(state) || state.inFlight;
    renderBanner(bannerEl, state.banner);
    renderChips(chipsEl, state.chips, onChip);
    renderAssignmentList(assignmentsEl, state, onSelect);
    renderDetail(detailEl, state, (feature, provider) =>
      openExternal(feature, provider, (url) => window.open(url, "_blank", "noopener")),
    );
    syncIrPanel(irEl, state);
    map.setOverlays(state.groups);
  }

  function frameResults(): void {
    const points = state.groups.flatMap((group) =>
      group.features.map((feature) => feature.position),
    );
    if (points.length === 0) return;
    const fitted = fitView(points, state.viewport.widthPx, state.viewport.heightPx);
    map.setView(fitted);
  }

  async function submit(): Promise<void> {
    if (!canSubmit(state) || state.inFlight) return;
    const begun = beginSubmit(state);
    state = begun.state;
    render();
    const settled = await client.submit(buildRequest(state));
    if (settled === null) return;
    if (settled.outcome.ok) {
      state = applySuccess(state, settled.seq, settled.outcome.body);
      frameResults();
    } else {
      state = applyFailure(state, settled.seq, settled.outcome.status, settled.outcome.detail);
    }
    render();
  }

  function onSelect(index: number): void {
    state = selectAssignment(state, index);
    render();
  }

  function onChip(chip: SuggestionChip): void {
    state = applyChip(state, chip);
    inputEl.value = state.input;
    render();
    void submit();
  }

  inputEl.addEventListener("input", () => {
    state = editInput(state, inputEl.value);
    submitEl.disabled = !canSubmit(state) || state.inFlight;
  });
  inputEl.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      void submit();
    }
  });
  irEl.addEventListener("input", () => {
    state = editIr(state, irEl.value);
    submitEl.disabled = !canSubmit(state) || state.inFlight;
  });
  submitEl.addEventListener("click", () => void submit());
  zoomInEl.addEventListener("click", () => map.zoomBy(1));
  zoomOutEl.addEventListener("click", () => map.zoomBy(-1));

  render();
}

if (typeof document !== "undefined" && document.getElementById("map")) {
  boot();
}
