/** Result FeatureCollection to per-assignment overlay groups.
 *
 * One group per assignment index; selecting an assignment highlights
 * exactly the features of that group.  Colors cycle per slot id so the
 * same entity keeps its color across assignments.
 */

import type { FeatureGeometry, QueryResponse, ResultFeature } from "./api.js";

export interface OverlayFeature {
  slotId: number;
  assignmentIndex: number;
  osmKind: string;
  osmId: number;
  shape: "marker" | "polygon" | "line";
  position: { lat: number; lon: number };
  outline: { lat: number; lon: number }[];
  color: string;
  highlighted: boolean;
  tags: Record<string, string>;
  links: Record<string, string>;
}

export interface OverlayGroup {
  assignmentIndex: number;
  features: OverlayFeature[];
}

const SLOT_COLORS = ["#d1495b", "#1f6f8b", "#66a182", "#edae49", "#8d5a97", "#3d5a80"];

export function slotColor(slotId: number): string {
  const index = ((slotId % SLOT_COLORS.length) + SLOT_COLORS.length) % SLOT_COLORS.length;
  return SLOT_COLORS[index] as string;
}

function shapeOf(geometry: FeatureGeometry): "marker" | "polygon" | "line" {
  if (geometry.type === "Polygon") return "polygon";
  if (geometry.type === "LineString") return "line";
  return "marker";
}

function outlineOf(geometry: FeatureGeometry): { lat: number; lon: number }[] {
  // GeoJSON orders coordinates lon-first
  if (geometry.type === "Polygon") {
    const ring = geometry.coordinates[0] ?? [];
    return ring.map(([lon, lat]) => ({ lat, lon }));
  }
  if (geometry.type === "LineString") {
    return geometry.coordinates.map(([lon, lat]) => ({ lat, lon }));
  }
  return [];
}

function toOverlay(feature: ResultFeature): OverlayFeature {
  const props = feature.properties;
  return {
    slotId: props.slot_id,
    assignmentIndex: props.assignment_index,
    osmKind: props.osm_kind,
    osmId: props.osm_id,
    shape: shapeOf(feature.geometry),
    position: { lat: props.centroid.lat, lon: props.centroid.lon },
    outline: outlineOf(feature.geometry),
    color: slotColor(props.slot_id),
    highlighted: false,
    tags: props.tags,
    links: props.links,
  };
}

export function buildOverlays(response: QueryResponse): OverlayGroup[] {
  const groups = new Map<number, OverlayFeature[]>();
  for (const feature of response.results.features) {
    const overlay = toOverlay(feature);
    const bucket = groups.get(overlay.assignmentIndex);
    if (bucket) {
      bucket.push(overlay);
    } else {
      groups.set(overlay.assignmentIndex, [overlay]);
    }
  }
  return [...groups.entries()]
    .sort(([a], [b]) => a - b)
    .map(([assignmentIndex, features]) => ({ assignmentIndex, features }));
}

/** New groups with exactly the selected assignment's features highlighted. */
export function withSelection(groups: OverlayGroup[], selected: number): OverlayGroup[] {
  return groups.map((group) => ({
    assignmentIndex: group.assignmentIndex,
    features: group.features.map((feature) => ({
      ...feature,
      highlighted: group.assignmentIndex === selected,
    })),
  }));
}

export interface DetailPayload {
  title: string;
  rows: [string, string][];
  links: [string, string][];
}

export function detailPayload(feature: OverlayFeature): DetailPayload {
  const rows = Object.entries(feature.tags).sort(([a], [b]) => (a < b ? -1 : 1));
  const links = Object.entries(feature.links).sort(([a], [b]) => (a < b ? -1 : 1));
  return {
    title: `${feature.osmKind}/${feature.osmId}`,
    rows,
    links,
  };
}

/** Opens the prebuilt link for a provider; unknown providers warn and no-op. */
export function openExternal(
  feature: OverlayFeature,
  provider: string,
  opener: (url: string) => void,
  warn: (message: string) => void = (m) => console.warn(m),
): void {
  const url = feature.links[provider];
  if (url === undefined) {
    warn(`no external link for provider ${provider}`);
    return;
  }
  opener(url);
}
