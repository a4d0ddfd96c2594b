"""Immutable spatial store over OSM extracts plus an area gazetteer.

Ingest accepts OSM XML or a line-delimited JSON object dump.  Objects are
indexed in a packed (STR-built) R-tree over their bounding boxes; named
search areas come from a GeoJSON gazetteer.  All lookups are read-only
after the build.
"""

from __future__ import annotations

import difflib
import json
import logging
import math
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Literal

from geoscene.errors import GeoFormatError, OsmXmlError, UnknownAreaError
from geoscene.geometry import (
    BBox,
    Geometry,
    PointGeom,
    PolygonGeom,
    PolylineGeom,
    Region,
    centroid,
    distance_m,
    geometry_bbox,
    point_in_polygon,
    ring_is_simple,
)
from geoscene.ir import AreaSpec
from geoscene.tags import TagFilter, evaluate_tag_filter

log = logging.getLogger(__name__)

OsmKind = Literal["node", "way", "relation"]

# Closed ways become polygons when tagged with one of these keys (OSM's
# usual implicit-area keys), unless area=no overrides.
AREA_TAG_KEYS = frozenset({"building", "landuse", "leisure", "natural", "amenity", "boundary"})


@dataclass(frozen=True)
class GeoObject:
    osm_kind: OsmKind
    osm_id: int
    tags: dict[str, str]
    geometry: Geometry
    centroid: tuple[float, float]

    @property
    def key(self) -> tuple[str, int]:
        return (self.osm_kind, self.osm_id)

    # the generated hash would choke on the tags dict; keys are unique per store
    def __hash__(self) -> int:
        return hash((self.osm_kind, self.osm_id))


@dataclass
class IngestStats:
    nodes: int = 0
    ways: int = 0
    relations: int = 0
    points: int = 0
    polylines: int = 0
    polygons: int = 0
    skipped_ways: int = 0
    skipped_relations: int = 0
    demoted_rings: int = 0


def make_object(osm_kind: OsmKind, osm_id: int, tags: dict[str, str], geometry: Geometry) -> GeoObject:
    lat, lon = centroid(geometry)
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise GeoFormatError(f"{osm_kind}/{osm_id}: centroid ({lat}, {lon}) out of range")
    return GeoObject(osm_kind=osm_kind, osm_id=osm_id, tags=dict(tags), geometry=geometry, centroid=(lat, lon))


class _Node:
    __slots__ = ("box", "children", "indices")

    def __init__(self, box: BBox, children: list[_Node] | None, indices: list[int] | None):
        self.box = box
        self.children = children
        self.indices = indices


def _enclosing(boxes: list[BBox]) -> BBox:
    box = boxes[0]
    for other in boxes[1:]:
        box = box.union(other)
    return box


class _RTree:
    """Static R-tree packed with sort-tile-recursive bulk loading."""

    def __init__(self, boxes: list[BBox], cap: int = 16):
        self._cap = cap
        self._boxes = boxes
        self._root = self._build(list(range(len(boxes))))

    def _build(self, indices: list[int]) -> _Node:
        if len(indices) <= self._cap:
            return _Node(_enclosing([self._boxes[i] for i in indices]), None, indices)
        n = len(indices)
        slices = max(1, math.ceil(math.sqrt(math.ceil(n / self._cap))))
        per_slice = math.ceil(n / slices)
        by_lon = sorted(indices, key=lambda i: self._boxes[i].min_lon + self._boxes[i].max_lon)
        children: list[_Node] = []
        for s in range(0, n, per_slice):
            chunk = sorted(
                by_lon[s : s + per_slice],
                key=lambda i: self._boxes[i].min_lat + self._boxes[i].max_lat,
            )
            for g in range(0, len(chunk), self._cap):
                group = chunk[g : g + self._cap]
                children.append(_Node(_enclosing([self._boxes[i] for i in group]), None, group))
        while len(children) > self._cap:
            children = self._pack_nodes(children)
        return _Node(_enclosing([c.box for c in children]), children, None)

    def _pack_nodes(self, nodes: list[_Node]) -> list[_Node]:
        n = len(nodes)
        slices = max(1, math.ceil(math.sqrt(math.ceil(n / self._cap))))
        per_slice = math.ceil(n / slices)
        by_lon = sorted(nodes, key=lambda c: c.box.min_lon + c.box.max_lon)
        packed: list[_Node] = []
        for s in range(0, n, per_slice):
            chunk = sorted(by_lon[s : s + per_slice], key=lambda c: c.box.min_lat + c.box.max_lat)
            for g in range(0, len(chunk), self._cap):
                group = chunk[g : g + self._cap]
                packed.append(_Node(_enclosing([c.box for c in group]), group, None))
        return packed

    def query(self, probe: BBox) -> list[int]:
        out: list[int] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if not node.box.intersects(probe):
                continue
            if node.indices is not None:
                out.extend(i for i in node.indices if self._boxes[i].intersects(probe))
            else:
                stack.extend(node.children)
        return out


class GeoStore:
    """Immutable object store with an R-tree over object bounding boxes."""

    def __init__(self, objects: Iterable[GeoObject], gazetteer: Gazetteer | None = None):
        self.objects: tuple[GeoObject, ...] = tuple(sorted(objects, key=lambda o: o.key))
        self.gazetteer = gazetteer
        self._boxes = [geometry_bbox(o.geometry) for o in self.objects]
        self._tree = _RTree(self._boxes) if self.objects else None
        self._by_key = {o.key: i for i, o in enumerate(self.objects)}

    def __len__(self) -> int:
        return len(self.objects)

    def get(self, osm_kind: str, osm_id: int) -> GeoObject | None:
        i = self._by_key.get((osm_kind, osm_id))
        return self.objects[i] if i is not None else None

    def extent(self) -> BBox | None:
        if not self.objects:
            return None
        box = self._boxes[0]
        for other in self._boxes[1:]:
            box = box.union(other)
        return box

    def probe(self, box: BBox) -> list[GeoObject]:
        """Objects whose bbox intersects the probe box, in (kind, id) order."""
        if self._tree is None:
            return []
        hits = self._tree.query(box)
        hits.sort()
        return [self.objects[i] for i in hits]

    def probe_region(self, region: Region) -> list[GeoObject]:
        seen: set[int] = set()
        if self._tree is not None:
            for box in region.boxes:
                seen.update(self._tree.query(box))
        return [self.objects[i] for i in sorted(seen)]

    def with_gazetteer(self, gazetteer: Gazetteer) -> GeoStore:
        clone = GeoStore.__new__(GeoStore)
        clone.objects = self.objects
        clone.gazetteer = gazetteer
        clone._boxes = self._boxes
        clone._tree = self._tree
        clone._by_key = self._by_key
        return clone


# --- OSM XML ingest ---------------------------------------------------------


def _iter_tags(element: ET.Element) -> dict[str, str]:
    return {
        t.get("k"): t.get("v", "")
        for t in element.findall("tag")
        if t.get("k") is not None
    }


def _is_area_way(tags: dict[str, str]) -> bool:
    if tags.get("area") == "no":
        return False
    return any(key in tags for key in AREA_TAG_KEYS)


def _stitch_rings(chains: list[list[tuple[float, float]]]) -> list[list[tuple[float, float]]] | None:
    """Join open chains end-to-end into closed rings; None if any fail."""
    rings: list[list[tuple[float, float]]] = []
    open_chains = [list(c) for c in chains if c]
    while open_chains:
        ring = open_chains.pop()
        while ring[0] != ring[-1]:
            for i, other in enumerate(open_chains):
                if other[0] == ring[-1]:
                    ring.extend(other[1:])
                elif other[-1] == ring[-1]:
                    ring.extend(reversed(other[:-1]))
                else:
                    continue
                open_chains.pop(i)
                break
            else:
                return None
        if len(ring) >= 4:
            rings.append(ring)
        else:
            return None
    return rings


def _ring_area(ring: list[tuple[float, float]]) -> float:
    total = 0.0
    for i in range(len(ring) - 1):
        (y1, x1), (y2, x2) = ring[i], ring[i + 1]
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0


def ingest_osm_xml(source: str | IO) -> tuple[GeoStore, IngestStats]:
    """Parse an OSM XML document into a GeoStore.

    Element order does not matter: references are resolved after the whole
    document is read.  Ways or multipolygon relations with missing members
    are skipped and counted, never fatal.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "<" in source:
        text = source
    else:
        with open(source, "rb") as fh:
            text = fh.read()
    # bytes sidestep the fromstring() refusal of str + encoding declaration
    data = text.encode("utf-8") if isinstance(text, str) else text
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise OsmXmlError(f"not valid OSM XML: {exc}") from exc

    stats = IngestStats()
    coords: dict[int, tuple[float, float]] = {}
    objects: list[GeoObject] = []

    for node in root.findall("node"):
        stats.nodes += 1
        osm_id = int(node.get("id"))
        lat, lon = float(node.get("lat")), float(node.get("lon"))
        coords[osm_id] = (lat, lon)
        objects.append(make_object("node", osm_id, _iter_tags(node), PointGeom(lat, lon)))
        stats.points += 1

    way_vertices: dict[int, list[tuple[float, float]]] = {}
    for way in root.findall("way"):
        stats.ways += 1
        osm_id = int(way.get("id"))
        refs = [int(nd.get("ref")) for nd in way.findall("nd")]
        if any(ref not in coords for ref in refs) or len(refs) < 2:
            stats.skipped_ways += 1
            continue
        vertices = [coords[ref] for ref in refs]
        way_vertices[osm_id] = vertices
        tags = _iter_tags(way)
        closed = len(vertices) >= 4 and vertices[0] == vertices[-1]
        if closed and _is_area_way(tags):
            ring = tuple(vertices)
            if ring_is_simple(ring):
                objects.append(make_object("way", osm_id, tags, PolygonGeom(outer=ring)))
                stats.polygons += 1
                continue
            stats.demoted_rings += 1
            log.warning("way %d: self-intersecting ring, kept as polyline", osm_id)
        objects.append(make_object("way", osm_id, tags, PolylineGeom(tuple(vertices))))
        stats.polylines += 1

    for relation in root.findall("relation"):
        stats.relations += 1
        tags = _iter_tags(relation)
        if tags.get("type") != "multipolygon":
            stats.skipped_relations += 1
            continue
        osm_id = int(relation.get("id"))
        outers: list[list[tuple[float, float]]] = []
        inners: list[list[tuple[float, float]]] = []
        missing = False
        for member in relation.findall("member"):
            if member.get("type") != "way":
                continue
            ref = int(member.get("ref"))
            if ref not in way_vertices:
                missing = True
                break
            (outers if member.get("role") != "inner" else inners).append(way_vertices[ref])
        if missing or not outers:
            stats.skipped_relations += 1
            continue
        outer_rings = _stitch_rings(outers)
        inner_rings = _stitch_rings(inners) if inners else []
        if outer_rings is None or inner_rings is None:
            stats.skipped_relations += 1
            continue
        # multiple outer rings: keep the largest, a documented simplification
        outer = max(outer_rings, key=_ring_area)
        try:
            geometry = PolygonGeom(outer=tuple(outer), inners=tuple(tuple(r) for r in inner_rings))
        except ValueError:
            stats.skipped_relations += 1
            continue
        objects.append(make_object("relation", osm_id, tags, geometry))
        stats.polygons += 1

    return GeoStore(objects), stats


# --- line-delimited JSON dump ----------------------------------------------

DUMP_FORMAT = "geoscene-objects"
DUMP_VERSION = 1


def _geometry_to_node(geom: Geometry) -> dict:
    if isinstance(geom, PointGeom):
        return {"type": "point", "coordinates": [geom.lat, geom.lon]}
    if isinstance(geom, PolylineGeom):
        return {"type": "polyline", "coordinates": [list(v) for v in geom.vertices]}
    return {
        "type": "polygon",
        "outer": [list(v) for v in geom.outer],
        "inners": [[list(v) for v in ring] for ring in geom.inners],
    }


def _geometry_from_node(node: dict, where: str) -> Geometry:
    kind = node.get("type")
    try:
        if kind == "point":
            lat, lon = node["coordinates"]
            return PointGeom(float(lat), float(lon))
        if kind == "polyline":
            return PolylineGeom(tuple((float(a), float(b)) for a, b in node["coordinates"]))
        if kind == "polygon":
            return PolygonGeom(
                outer=tuple((float(a), float(b)) for a, b in node["outer"]),
                inners=tuple(
                    tuple((float(a), float(b)) for a, b in ring)
                    for ring in node.get("inners", [])
                ),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise GeoFormatError(f"{where}: bad geometry: {exc}") from exc
    raise GeoFormatError(f"{where}: unknown geometry type {kind!r}")


def dump_objects(store: GeoStore, path: str) -> None:
    """Write the documented line-delimited JSON dump (lat/lon pairs)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": DUMP_FORMAT, "version": DUMP_VERSION}) + "\n")
        for obj in store.objects:
            record = {
                "osm_kind": obj.osm_kind,
                "osm_id": obj.osm_id,
                "tags": obj.tags,
                "geometry": _geometry_to_node(obj.geometry),
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_objects(source: str | IO) -> GeoStore:
    """Read a dump produced by dump_objects."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        lines = source.splitlines()
    else:
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    if not lines:
        raise GeoFormatError("empty object dump")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise GeoFormatError(f"line 1: {exc}") from exc
    if header.get("format") != DUMP_FORMAT:
        raise GeoFormatError("missing dump header")
    if header.get("version") != DUMP_VERSION:
        raise GeoFormatError(f"unsupported dump version {header.get('version')!r}")
    objects = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GeoFormatError(f"line {lineno}: {exc}") from exc
        for key in ("osm_kind", "osm_id", "tags", "geometry"):
            if key not in record:
                raise GeoFormatError(f"line {lineno}: missing {key}")
        if record["osm_kind"] not in ("node", "way", "relation"):
            raise GeoFormatError(f"line {lineno}: bad osm_kind {record['osm_kind']!r}")
        objects.append(
            make_object(
                record["osm_kind"],
                int(record["osm_id"]),
                {str(k): str(v) for k, v in record["tags"].items()},
                _geometry_from_node(record["geometry"], f"line {lineno}"),
            )
        )
    return GeoStore(objects)


def geometry_to_geojson(geom: Geometry) -> dict:
    """GeoJSON geometry node ([lon, lat] order, per the standard)."""
    if isinstance(geom, PointGeom):
        return {"type": "Point", "coordinates": [geom.lon, geom.lat]}
    if isinstance(geom, PolylineGeom):
        return {"type": "LineString", "coordinates": [[lon, lat] for lat, lon in geom.vertices]}
    rings = [[[lon, lat] for lat, lon in ring] for ring in geom.rings()]
    return {"type": "Polygon", "coordinates": rings}


# --- gazetteer --------------------------------------------------------------


def _fold_name(name: str) -> str:
    folded = unicodedata.normalize("NFKD", name.strip().casefold())
    return "".join(c for c in folded if not unicodedata.combining(c))


@dataclass(frozen=True)
class AreaPolygon:
    name: str
    alt_names: tuple[str, ...]
    polygon: PolygonGeom
    bbox: BBox


class Gazetteer:
    def __init__(self, areas: Iterable[AreaPolygon]):
        self.areas = tuple(areas)
        self._by_name: dict[str, int] = {}
        for i, area in enumerate(self.areas):
            for name in (area.name, *area.alt_names):
                self._by_name.setdefault(_fold_name(name), i)

    def __len__(self) -> int:
        return len(self.areas)

    def names(self) -> list[str]:
        return [a.name for a in self.areas]

    def all_names(self) -> list[str]:
        return [n for a in self.areas for n in (a.name, *a.alt_names)]

    def resolve(self, name: str) -> AreaPolygon | None:
        i = self._by_name.get(_fold_name(name))
        return self.areas[i] if i is not None else None

    def suggestions(self, name: str, k: int = 3) -> list[str]:
        """Closest known names by string similarity, best first."""
        pool = self.all_names()
        folded = _fold_name(name)
        scored = sorted(
            pool,
            key=lambda cand: (-difflib.SequenceMatcher(None, folded, _fold_name(cand)).ratio(), cand),
        )
        out: list[str] = []
        for cand in scored:
            if cand not in out:
                out.append(cand)
            if len(out) == k:
                break
        return out


def _rings_from_geojson(coords, where: str) -> PolygonGeom:
    try:
        rings = [tuple((float(lat), float(lon)) for lon, lat in ring) for ring in coords]
    except (TypeError, ValueError) as exc:
        raise GeoFormatError(f"{where}: bad polygon coordinates: {exc}") from exc
    if not rings:
        raise GeoFormatError(f"{where}: polygon with no rings")
    fixed = []
    for ring in rings:
        if len(ring) >= 3 and ring[0] != ring[-1]:
            ring = ring + (ring[0],)
        if len(ring) < 4:
            raise GeoFormatError(f"{where}: ring with fewer than 3 distinct vertices")
        fixed.append(ring)
    return PolygonGeom(outer=fixed[0], inners=tuple(fixed[1:]))


def load_gazetteer(geojson_text: str) -> Gazetteer:
    """Load named areas from a GeoJSON FeatureCollection of (Multi)Polygons.

    alt_names come from an `alt_names` list property plus any `name:*`
    localized keys; lookups fold case and diacritics, so non-Latin names
    match verbatim.
    """
    try:
        root = json.loads(geojson_text)
    except json.JSONDecodeError as exc:
        raise GeoFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(root, dict) or root.get("type") != "FeatureCollection":
        raise GeoFormatError("expected a GeoJSON FeatureCollection")
    areas: list[AreaPolygon] = []
    for i, feature in enumerate(root.get("features", [])):
        where = f"features[{i}]"
        props = feature.get("properties") or {}
        name = props.get("name")
        if not isinstance(name, str) or not name.strip():
            raise GeoFormatError(f"{where}: missing name property")
        alt: list[str] = []
        for value in props.get("alt_names", []):
            if isinstance(value, str):
                alt.append(value)
        for key, value in props.items():
            if key.startswith("name:") and isinstance(value, str):
                alt.append(value)
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        if gtype == "Polygon":
            polygon = _rings_from_geojson(geometry.get("coordinates"), where)
        elif gtype == "MultiPolygon":
            parts = geometry.get("coordinates") or []
            if not parts:
                raise GeoFormatError(f"{where}: empty MultiPolygon")
            polygons = [_rings_from_geojson(part, where) for part in parts]
            polygon = max(polygons, key=lambda p: _ring_area(list(p.outer)))
        else:
            raise GeoFormatError(f"{where}: unsupported geometry type {gtype!r}")
        areas.append(
            AreaPolygon(
                name=name,
                alt_names=tuple(alt),
                polygon=polygon,
                bbox=geometry_bbox(polygon),
            )
        )
    return Gazetteer(areas)


# --- area resolution & candidate queries ------------------------------------


def resolve_area(
    spec: AreaSpec,
    gazetteer: Gazetteer | None,
    fallback_bbox: BBox | tuple[float, float, float, float] | None = None,
    store: GeoStore | None = None,
) -> Region:
    """Turn an AreaSpec into a concrete search region.

    Named areas look up the gazetteer (UnknownAreaError carries the nearest
    name suggestions).  bbox areas use the caller's rectangle; without one,
    the store extent; without either, everything but the polar caps.
    """
    if spec.kind == "named":
        if gazetteer is None:
            raise UnknownAreaError(spec.name, [])
        area = gazetteer.resolve(spec.name)
        if area is None:
            raise UnknownAreaError(spec.name, gazetteer.suggestions(spec.name))
        return Region.from_polygon(area.polygon, name=area.name)
    if fallback_bbox is not None:
        if isinstance(fallback_bbox, BBox):
            return Region.from_bbox(
                fallback_bbox.min_lat, fallback_bbox.min_lon,
                fallback_bbox.max_lat, fallback_bbox.max_lon,
            )
        return Region.from_bbox(*fallback_bbox)
    if store is not None:
        extent = store.extent()
        if extent is not None:
            grown = extent.inflate(10.0)
            return Region.from_bbox(
                max(-89.0, grown.min_lat), grown.min_lon,
                min(89.0, grown.max_lat), grown.max_lon,
            )
    return Region.from_bbox(-89.0, -180.0, 89.0, 180.0)


def query_candidates(
    store: GeoStore,
    region: Region,
    filter: TagFilter,
    limit: int | None = None,
) -> list[GeoObject]:
    """Objects with centroid in region whose tags satisfy the filter,
    in (osm_kind, osm_id) order, truncated to limit."""
    predicate = lambda obj: evaluate_tag_filter(filter, obj.tags)
    return candidates_in_region(store, region, predicate, limit)


def candidates_in_region(
    store: GeoStore,
    region: Region,
    predicate: Callable[[GeoObject], bool],
    limit: int | None = None,
) -> list[GeoObject]:
    out: list[GeoObject] = []
    for obj in store.probe_region(region):
        lat, lon = obj.centroid
        if not region.contains_point(lat, lon):
            continue
        if not predicate(obj):
            continue
        out.append(obj)
        if limit is not None and len(out) >= limit:
            break
    return out


def contains(outer: GeoObject, inner: GeoObject) -> bool:
    """True iff outer is a polygon and inner's centroid is strictly inside."""
    if not isinstance(outer.geometry, PolygonGeom):
        return False
    lat, lon = inner.centroid
    return point_in_polygon(lat, lon, outer.geometry)


def object_distance_m(a: GeoObject, b: GeoObject) -> float:
    return distance_m(a.geometry, b.geometry)
