/** Web Mercator math for the hand-rolled tile map.
 *
 * World coordinates are pixels at a given zoom: the world is a square of
 * TILE_SIZE * 2^zoom pixels, x growing east from lon -180, y growing south
 * from the projection's north clip.
 */

export const TILE_SIZE = 256;

/** Mercator blows up at the poles; the standard clip keeps the world square. */
export const MAX_LATITUDE = 85.05112878;

export interface WorldPoint {
  x: number;
  y: number;
}

export function clampLatitude(lat: number): number {
  return Math.max(-MAX_LATITUDE, Math.min(MAX_LATITUDE, lat));
}

export function worldSize(zoom: number): number {
  return TILE_SIZE * Math.pow(2, zoom);
}

export function project(lat: number, lon: number, zoom: number): WorldPoint {
  const size = worldSize(zoom);
  const clamped = clampLatitude(lat);
  const sinLat = Math.sin((clamped * Math.PI) / 180);
  const x = ((lon + 180) / 360) * size;
  const y = (0.5 - Math.log((1 + sinLat) / (1 - sinLat)) / (4 * Math.PI)) * size;
  return { x, y };
}

export function unproject(x: number, y: number, zoom: number): { lat: number; lon: number } {
  const size = worldSize(zoom);
  const lon = (x / size) * 360 - 180;
  const n = Math.PI - (2 * Math.PI * y) / size;
  const lat = (180 / Math.PI) * Math.atan(0.5 * (Math.exp(n) - Math.exp(-n)));
  return { lat, lon };
}

export interface TileCoord {
  x: number;
  y: number;
  z: number;
}

export function tileAt(lat: number, lon: number, zoom: number): TileCoord {
  const point = project(lat, lon, zoom);
  const max = Math.pow(2, zoom) - 1;
  return {
    x: Math.max(0, Math.min(max, Math.floor(point.x / TILE_SIZE))),
    y: Math.max(0, Math.min(max, Math.floor(point.y / TILE_SIZE))),
    z: zoom,
  };
}

export interface Viewport {
  centerLat: number;
  centerLon: number;
  zoom: number;
  widthPx: number;
  heightPx: number;
}

/** [min_lat, min_lon, max_lat, max_lon] of the visible map area. */
export function viewportBBox(view: Viewport): [number, number, number, number] {
  const center = project(view.centerLat, view.centerLon, view.zoom);
  const nw = unproject(center.x - view.widthPx / 2, center.y - view.heightPx / 2, view.zoom);
  const se = unproject(center.x + view.widthPx / 2, center.y + view.heightPx / 2, view.zoom);
  return [
    Math.min(nw.lat, se.lat),
    Math.min(nw.lon, se.lon),
    Math.max(nw.lat, se.lat),
    Math.max(nw.lon, se.lon),
  ];
}

/** Inclusive tile ranges covering the viewport, clipped to the world. */
export function visibleTiles(view: Viewport): TileCoord[] {
  const center = project(view.centerLat, view.centerLon, view.zoom);
  const max = Math.pow(2, view.zoom) - 1;
  const clip = (v: number) => Math.max(0, Math.min(max, v));
  const minX = clip(Math.floor((center.x - view.widthPx / 2) / TILE_SIZE));
  const maxX = clip(Math.floor((center.x + view.widthPx / 2) / TILE_SIZE));
  const minY = clip(Math.floor((center.y - view.heightPx / 2) / TILE_SIZE));
  const maxY = clip(Math.floor((center.y + view.heightPx / 2) / TILE_SIZE));
  const tiles: TileCoord[] = [];
  for (let y = minY; y <= maxY; y += 1) {
    for (let x = minX; x <= maxX; x += 1) {
      tiles.push({ x, y, z: view.zoom });
    }
  }
  return tiles;
}

/** Pixel offset of a lat/lon from the viewport's top-left corner. */
export function toScreen(view: Viewport, lat: number, lon: number): WorldPoint {
  const center = project(view.centerLat, view.centerLon, view.zoom);
  const point = project(lat, lon, view.zoom);
  return {
    x: point.x - center.x + view.widthPx / 2,
    y: point.y - center.y + view.heightPx / 2,
  };
}

/** Center and zoom fitting all points with some margin, for result framing. */
export function fitView(
  points: { lat: number; lon: number }[],
  widthPx: number,
  heightPx: number,
  maxZoom = 18,
): { centerLat: number; centerLon: number; zoom: number } {
  if (points.length === 0) {
    return { centerLat: 0, centerLon: 0, zoom: 2 };
  }
  const lats = points.map((p) => clampLatitude(p.lat));
  const lons = points.map((p) => p.lon);
  const minLat = Math.min(...lats);
  const maxLat = Math.max(...lats);
  const minLon = Math.min(...lons);
  const maxLon = Math.max(...lons);
  const centerLat = (minLat + maxLat) / 2;
  const centerLon = (minLon + maxLon) / 2;
  for (let zoom = maxZoom; zoom >= 2; zoom -= 1) {
    const a = project(minLat, minLon, zoom);
    const b = project(maxLat, maxLon, zoom);
    const needW = Math.abs(b.x - a.x);
    const needH = Math.abs(b.y - a.y);
    if (needW <= widthPx * 0.8 && needH <= heightPx * 0.8) {
      return { centerLat, centerLon, zoom };
    }
  }
  return { centerLat, centerLon, zoom: 2 };
}
