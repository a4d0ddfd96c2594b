/** Side-panel renderers: assignment list, detail view, banner, chips, IR.
 *
 * Each renderer replaces the children of the element it is handed; the
 * main loop calls them after every state transition.
 */

import type { DetailPayload, OverlayFeature } from "./overlays.js";
import { detailPayload } from "./overlays.js";
import type { Banner, SuggestionChip, UiQueryState } from "./state.js";

export function renderBanner(el: HTMLElement, banner: Banner | null): void {
  if (banner === null) {
    el.hidden = true;
    el.textContent = "";
    el.className = "banner";
    return;
  }
  el.hidden = false;
  el.textContent = banner.text;
  el.className = `banner ${banner.kind}`;
}

export function renderChips(
  el: HTMLElement,
  chips: SuggestionChip[],
  onChip: (chip: SuggestionChip) => void,
): void {
  const buttons = chips.map((chip) => {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "chip";
    button.textContent = chip.label;
    button.addEventListener("click", () => onChip(chip));
    return button;
  });
  el.replaceChildren(...buttons);
  el.hidden = chips.length === 0;
}

export function renderAssignmentList(
  el: HTMLElement,
  state: UiQueryState,
  onSelect: (index: number) => void,
): void {
  const items = state.groups.map((group) => {
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.type = "button";
    button.className =
      group.assignmentIndex === state.selectedAssignment ? "assignment selected" : "assignment";
    const names = group.features
      .map((feature) => feature.tags["name"] ?? `${feature.osmKind}/${feature.osmId}`)
      .join(" + ");
    button.textContent = `#${group.assignmentIndex + 1} ${names}`;
    button.addEventListener("click", () => onSelect(group.assignmentIndex));
    item.append(button);
    return item;
  });
  el.replaceChildren(...items);
}

function detailSection(
  payload: DetailPayload,
  feature: OverlayFeature,
  onOpen: (feature: OverlayFeature, provider: string) => void,
): HTMLElement {
  const section = document.createElement("section");
  section.className = "feature-detail";

  const title = document.createElement("h3");
  title.textContent = payload.title;
  title.style.borderColor = feature.color;
  section.append(title);

  const table = document.createElement("table");
  for (const [key, value] of payload.rows) {
    const row = document.createElement("tr");
    const keyCell = document.createElement("td");
    keyCell.textContent = key;
    const valueCell = document.createElement("td");
    valueCell.textContent = value;
    row.append(keyCell, valueCell);
    table.append(row);
  }
  section.append(table);

  const linkRow = document.createElement("div");
  linkRow.className = "link-row";
  for (const [provider] of payload.links) {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "external-link";
    button.textContent = provider.replace("_", " ");
    button.addEventListener("click", () => onOpen(feature, provider));
    linkRow.append(button);
  }
  section.append(linkRow);
  return section;
}

export function renderDetail(
  el: HTMLElement,
  state: UiQueryState,
  onOpen: (feature: OverlayFeature, provider: string) => void,
): void {
  const group = state.groups.find((g) => g.assignmentIndex === state.selectedAssignment);
  if (!group) {
    el.replaceChildren();
    return;
  }
  el.replaceChildren(...group.features.map((f) => detailSection(detailPayload(f), f, onOpen)));
}

/** Push state into the IR textarea unless the user is mid-edit. */
export function syncIrPanel(textarea: HTMLTextAreaElement, state: UiQueryState): void {
  if (state.irDirty || document.activeElement === textarea) {
    return;
  }
  if (textarea.value !== state.irText) {
    textarea.value = state.irText;
  }
}
