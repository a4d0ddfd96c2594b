/** Hand-rolled slippy map: a tile grid plus overlay layers, no map library.
 *
 * Tiles are absolutely positioned <img> elements refreshed on every view
 * change; overlays are divs (markers) and one SVG element (outlines).
 * The tile endpoint is configurable so deployments can point at their own
 * cache instead of the public default.
 */

import type { Viewport } from "./mercator.js";
import { project, TILE_SIZE, toScreen, unproject, visibleTiles } from "./mercator.js";
import type { OverlayFeature, OverlayGroup } from "./overlays.js";

export const DEFAULT_TILE_TEMPLATE = "https://tile.openstreetmap.org/{z}/{x}/{y}.png";

export const MIN_ZOOM = 2;
export const MAX_ZOOM = 19;

export function tileUrl(template: string, x: number, y: number, z: number): string {
  return template
    .replace("{x}", String(x))
    .replace("{y}", String(y))
    .replace("{z}", String(z));
}

export interface TileMapOptions {
  tileTemplate?: string;
  onViewChange?: (view: Viewport) => void;
  onFeatureClick?: (feature: OverlayFeature) => void;
}

export class TileMap {
  private view: Viewport;
  private readonly tileTemplate: string;
  private readonly tileLayer: HTMLDivElement;
  private readonly outlineLayer: SVGSVGElement;
  private readonly markerLayer: HTMLDivElement;
  private groups: OverlayGroup[] = [];
  private dragging = false;
  private lastPointer = { x: 0, y: 0 };

  constructor(
    private readonly container: HTMLElement,
    view: Viewport,
    private readonly options: TileMapOptions = {},
  ) {
    this.view = { ...view };
    this.tileTemplate = options.tileTemplate ?? DEFAULT_TILE_TEMPLATE;
    container.classList.add("tile-map");

    this.tileLayer = document.createElement("div");
    this.tileLayer.className = "tile-layer";
    this.outlineLayer = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.outlineLayer.classList.add("outline-layer");
    this.markerLayer = document.createElement("div");
    this.markerLayer.className = "marker-layer";
    container.append(this.tileLayer, this.outlineLayer, this.markerLayer);

    container.addEventListener("pointerdown", this.onPointerDown);
    container.addEventListener("pointermove", this.onPointerMove);
    container.addEventListener("pointerup", this.onPointerUp);
    container.addEventListener("pointercancel", this.onPointerUp);
    container.addEventListener("wheel", this.onWheel, { passive: false });

    this.syncSize();
    this.render();
  }

  getView(): Viewport {
    return { ...this.view };
  }

  setView(view: Partial<Viewport>): void {
    this.view = { ...this.view, ...view };
    this.clampZoom();
    this.render();
    this.options.onViewChange?.(this.getView());
  }

  setOverlays(groups: OverlayGroup[]): void {
    this.groups = groups;
    this.renderOverlays();
  }

  zoomBy(delta: number): void {
    this.setView({ zoom: this.view.zoom + delta });
  }

  destroy(): void {
    this.container.removeEventListener("pointerdown", this.onPointerDown);
    this.container.removeEventListener("pointermove", this.onPointerMove);
    this.container.removeEventListener("pointerup", this.onPointerUp);
    this.container.removeEventListener("pointercancel", this.onPointerUp);
    this.container.removeEventListener("wheel", this.onWheel);
    this.container.replaceChildren();
  }

  private clampZoom(): void {
    this.view.zoom = Math.max(MIN_ZOOM, Math.min(MAX_ZOOM, Math.round(this.view.zoom)));
  }

  private syncSize(): void {
    const width = this.container.clientWidth;
    const height = this.container.clientHeight;
    if (width > 0) this.view.widthPx = width;
    if (height > 0) this.view.heightPx = height;
  }

  private onPointerDown = (event: PointerEvent): void => {
    this.dragging = true;
    this.lastPointer = { x: event.clientX, y: event.clientY };
    this.container.setPointerCapture(event.pointerId);
  };

  private onPointerMove = (event: PointerEvent): void => {
    if (!this.dragging) return;
    const dx = event.clientX - this.lastPointer.x;
    const dy = event.clientY - this.lastPointer.y;
    this.lastPointer = { x: event.clientX, y: event.clientY };
    const center = project(this.view.centerLat, this.view.centerLon, this.view.zoom);
    const moved = unproject(center.x - dx, center.y - dy, this.view.zoom);
    this.view.centerLat = moved.lat;
    this.view.centerLon = moved.lon;
    this.render();
  };

  private onPointerUp = (event: PointerEvent): void => {
    if (!this.dragging) return;
    this.dragging = false;
    if (this.container.hasPointerCapture(event.pointerId)) {
      this.container.releasePointerCapture(event.pointerId);
    }
    this.options.onViewChange?.(this.getView());
  };

  private onWheel = (event: WheelEvent): void => {
    event.preventDefault();
    this.zoomBy(event.deltaY < 0 ? 1 : -1);
  };

  private render(): void {
    this.syncSize();
    this.renderTiles();
    this.renderOverlays();
  }

  private renderTiles(): void {
    const { view } = this;
    const center = project(view.centerLat, view.centerLon, view.zoom);
    const originX = center.x - view.widthPx / 2;
    const originY = center.y - view.heightPx / 2;
    const images: HTMLImageElement[] = [];
    for (const tile of visibleTiles(view)) {
      const img = document.createElement("img");
      img.src = tileUrl(this.tileTemplate, tile.x, tile.y, tile.z);
      img.alt = "";
      img.draggable = false;
      img.className = "tile";
      img.style.left = `${tile.x * TILE_SIZE - originX}px`;
      img.style.top = `${tile.y * TILE_SIZE - originY}px`;
      images.push(img);
    }
    this.tileLayer.replaceChildren(...images);
  }

  private renderOverlays(): void {
    const { view } = this;
    this.outlineLayer.setAttribute("width", String(view.widthPx));
    this.outlineLayer.setAttribute("height", String(view.heightPx));

    const shapes: SVGElement[] = [];
    const markers: HTMLDivElement[] = [];
    for (const group of this.groups) {
      for (const feature of group.features) {
        if (feature.outline.length > 0) {
          shapes.push(this.outlineShape(feature));
        }
        markers.push(this.marker(feature));
      }
    }
    this.outlineLayer.replaceChildren(...shapes);
    this.markerLayer.replaceChildren(...markers);
  }

  private outlineShape(feature: OverlayFeature): SVGElement {
    const tag = feature.shape === "polygon" ? "polygon" : "polyline";
    const shape = document.createElementNS("http://www.w3.org/2000/svg", tag);
    const points = feature.outline
      .map((vertex) => {
        const p = toScreen(this.view, vertex.lat, vertex.lon);
        return `${p.x.toFixed(1)},${p.y.toFixed(1)}`;
      })
      .join(" ");
    shape.setAttribute("points", points);
    shape.setAttribute("stroke", feature.color);
    shape.setAttribute("stroke-width", feature.highlighted ? "3" : "1.5");
    shape.setAttribute(
      "fill",
      feature.shape === "polygon" ? feature.color : "none",
    );
    shape.setAttribute("fill-opacity", feature.highlighted ? "0.25" : "0.1");
    return shape;
  }

  private marker(feature: OverlayFeature): HTMLDivElement {
    const el = document.createElement("div");
    el.className = feature.highlighted ? "marker highlighted" : "marker";
    el.style.background = feature.color;
    const p = toScreen(this.view, feature.position.lat, feature.position.lon);
    el.style.left = `${p.x}px`;
    el.style.top = `${p.y}px`;
    el.title = `${feature.osmKind}/${feature.osmId}`;
    el.addEventListener("click", (event) => {
      event.stopPropagation();
      this.options.onFeatureClick?.(feature);
    });
    return el;
  }
}
