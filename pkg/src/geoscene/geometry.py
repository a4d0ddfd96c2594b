"""Geometry primitives on the lat/lon sphere.

Distances use the haversine formula with a mean Earth radius of
6,371,000 m.  Point-to-segment distances project into a local tangent
plane around the query point, which is accurate at the scene scales this
engine works with (meters to a few kilometers).  Distances between
polygons are boundary distances: overlapping interiors are not detected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from geoscene.errors import UnsupportedRegionError

EARTH_RADIUS_M = 6_371_000.0
# One degree of latitude (and of longitude at the equator).
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

LatLon = tuple[float, float]


@dataclass(frozen=True)
class PointGeom:
    lat: float
    lon: float


@dataclass(frozen=True)
class PolylineGeom:
    vertices: tuple[LatLon, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(tuple(v) for v in self.vertices))
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least 2 vertices")


@dataclass(frozen=True)
class PolygonGeom:
    """Closed outer ring plus optional holes; rings repeat their first vertex."""

    outer: tuple[LatLon, ...]
    inners: tuple[tuple[LatLon, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outer", tuple(tuple(v) for v in self.outer))
        object.__setattr__(
            self, "inners", tuple(tuple(tuple(v) for v in ring) for ring in self.inners)
        )
        for ring in (self.outer, *self.inners):
            if len(ring) < 4 or ring[0] != ring[-1]:
                raise ValueError("ring needs >= 4 vertices with first == last")

    def rings(self) -> tuple[tuple[LatLon, ...], ...]:
        return (self.outer, *self.inners)


Geometry = PointGeom | PolylineGeom | PolygonGeom


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def _vertices(geom: Geometry) -> list[LatLon]:
    if isinstance(geom, PointGeom):
        return [(geom.lat, geom.lon)]
    if isinstance(geom, PolylineGeom):
        return list(geom.vertices)
    seen: list[LatLon] = []
    for ring in geom.rings():
        seen.extend(ring[:-1])
    return seen


def _segments(geom: Geometry) -> list[tuple[LatLon, LatLon]]:
    if isinstance(geom, PointGeom):
        return []
    if isinstance(geom, PolylineGeom):
        chains = [geom.vertices]
    else:
        chains = list(geom.rings())
    return [(chain[i], chain[i + 1]) for chain in chains for i in range(len(chain) - 1)]


def _local_xy(lat: float, lon: float, ref_lat: float, ref_lon: float) -> tuple[float, float]:
    dlon = lon - ref_lon
    if dlon > 180.0:
        dlon -= 360.0
    elif dlon < -180.0:
        dlon += 360.0
    return (
        dlon * M_PER_DEG * math.cos(math.radians(ref_lat)),
        (lat - ref_lat) * M_PER_DEG,
    )


def _point_segment_m(lat: float, lon: float, a: LatLon, b: LatLon) -> float:
    """Distance from a point to a segment; endpoints fall back to haversine."""
    ax, ay = _local_xy(a[0], a[1], lat, lon)
    bx, by = _local_xy(b[0], b[1], lat, lon)
    dx, dy = bx - ax, by - ay
    norm2 = dx * dx + dy * dy
    if norm2 > 0:
        t = -(ax * dx + ay * dy) / norm2
        if 0.0 < t < 1.0:
            cx, cy = ax + t * dx, ay + t * dy
            return math.hypot(cx, cy)
    return min(haversine_m(lat, lon, a[0], a[1]), haversine_m(lat, lon, b[0], b[1]))


def distance_m(a: Geometry, b: Geometry) -> float:
    """Minimum distance in meters between the boundaries of two geometries."""
    if isinstance(a, PointGeom) and isinstance(b, PointGeom):
        return haversine_m(a.lat, a.lon, b.lat, b.lon)
    best = math.inf
    segs_b = _segments(b)
    verts_b = _vertices(b)
    for lat, lon in _vertices(a):
        if segs_b:
            for seg in segs_b:
                d = _point_segment_m(lat, lon, seg[0], seg[1])
                if d < best:
                    best = d
        else:
            for vlat, vlon in verts_b:
                d = haversine_m(lat, lon, vlat, vlon)
                if d < best:
                    best = d
    segs_a = _segments(a)
    if segs_a:
        for lat, lon in verts_b:
            for seg in segs_a:
                d = _point_segment_m(lat, lon, seg[0], seg[1])
                if d < best:
                    best = d
    return best


def _ring_crossings(lat: float, lon: float, ring: tuple[LatLon, ...]) -> int:
    """Crossings of an eastward ray from (lat, lon) with a ring's edges."""
    count = 0
    for i in range(len(ring) - 1):
        (lat1, lon1), (lat2, lon2) = ring[i], ring[i + 1]
        if (lat1 > lat) != (lat2 > lat):
            t = (lat - lat1) / (lat2 - lat1)
            if lon1 + t * (lon2 - lon1) > lon:
                count += 1
    return count


def point_in_polygon(lat: float, lon: float, polygon: PolygonGeom) -> bool:
    """Even-odd containment over all rings, so points inside holes are out."""
    crossings = sum(_ring_crossings(lat, lon, ring) for ring in polygon.rings())
    return crossings % 2 == 1


def _ring_centroid(ring: tuple[LatLon, ...]) -> LatLon:
    # shift to a local origin first; raw coordinates cancel catastrophically
    y0, x0 = ring[0]
    area2 = 0.0
    cx = cy = 0.0
    for i in range(len(ring) - 1):
        (y1, x1), (y2, x2) = ring[i], ring[i + 1]
        y1, x1, y2, x2 = y1 - y0, x1 - x0, y2 - y0, x2 - x0
        cross = x1 * y2 - x2 * y1
        area2 += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if abs(area2) < 1e-12:
        pts = ring[:-1]
        return (
            sum(p[0] for p in pts) / len(pts),
            sum(p[1] for p in pts) / len(pts),
        )
    return y0 + cy / (3 * area2), x0 + cx / (3 * area2)


def centroid(geom: Geometry) -> LatLon:
    """Representative point: polygon centroids ignore holes."""
    if isinstance(geom, PointGeom):
        return (geom.lat, geom.lon)
    if isinstance(geom, PolylineGeom):
        n = len(geom.vertices)
        return (
            sum(v[0] for v in geom.vertices) / n,
            sum(v[1] for v in geom.vertices) / n,
        )
    return _ring_centroid(geom.outer)


@dataclass(frozen=True)
class BBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.min_lat <= lat <= self.max_lat
            and self.min_lon <= lon <= self.max_lon
        )

    def intersects(self, other: BBox) -> bool:
        return not (
            other.min_lat > self.max_lat
            or other.max_lat < self.min_lat
            or other.min_lon > self.max_lon
            or other.max_lon < self.min_lon
        )

    def union(self, other: BBox) -> BBox:
        return BBox(
            min(self.min_lat, other.min_lat),
            min(self.min_lon, other.min_lon),
            max(self.max_lat, other.max_lat),
            max(self.max_lon, other.max_lon),
        )

    def inflate(self, meters: float) -> BBox:
        """Grow by a metric margin; the longitude margin uses the worst-case
        (highest) latitude inside the box so the grown box never undershoots."""
        dlat = meters / M_PER_DEG
        max_abs_lat = min(89.0, max(abs(self.min_lat), abs(self.max_lat)))
        dlon = meters / (M_PER_DEG * math.cos(math.radians(max_abs_lat)))
        return BBox(
            max(-90.0, self.min_lat - dlat),
            max(-180.0, self.min_lon - dlon),
            min(90.0, self.max_lat + dlat),
            min(180.0, self.max_lon + dlon),
        )


def geometry_bbox(geom: Geometry) -> BBox:
    verts = _vertices(geom)
    lats = [v[0] for v in verts]
    lons = [v[1] for v in verts]
    return BBox(min(lats), min(lons), max(lats), max(lons))


@dataclass(frozen=True)
class Region:
    """A search region: one or two bboxes, optionally bounded by a polygon.

    Two boxes occur only for antimeridian-crossing rectangles.  When a
    polygon is present the boxes are its bounding box and membership tests
    the polygon itself.
    """

    boxes: tuple[BBox, ...]
    polygon: PolygonGeom | None = None
    name: str | None = None

    @classmethod
    def from_bbox(cls, min_lat: float, min_lon: float, max_lat: float, max_lon: float) -> Region:
        if not (-90.0 <= min_lat <= max_lat <= 90.0):
            raise UnsupportedRegionError(
                f"latitude span {min_lat}..{max_lat} out of range"
            )
        if max(abs(min_lat), abs(max_lat)) > 89.0:
            raise UnsupportedRegionError("polar-cap regions are not supported")
        if not (-180.0 <= min_lon <= 180.0 and -180.0 <= max_lon <= 180.0):
            raise UnsupportedRegionError(f"longitude out of range: {min_lon}..{max_lon}")
        if min_lon > max_lon:
            # crosses the antimeridian: split into two boxes
            return cls(
                boxes=(
                    BBox(min_lat, min_lon, max_lat, 180.0),
                    BBox(min_lat, -180.0, max_lat, max_lon),
                )
            )
        return cls(boxes=(BBox(min_lat, min_lon, max_lat, max_lon),))

    @classmethod
    def from_polygon(cls, polygon: PolygonGeom, name: str | None = None) -> Region:
        return cls(boxes=(geometry_bbox(polygon),), polygon=polygon, name=name)

    def contains_point(self, lat: float, lon: float) -> bool:
        if not any(box.contains(lat, lon) for box in self.boxes):
            return False
        if self.polygon is not None:
            return point_in_polygon(lat, lon, self.polygon)
        return True


# Self-intersection checks are quadratic; rings beyond this size are assumed
# simple rather than stalling ingest.
_SIMPLICITY_CHECK_LIMIT = 400


def _orient(p: LatLon, q: LatLon, r: LatLon) -> float:
    return (q[1] - p[1]) * (r[0] - p[0]) - (q[0] - p[0]) * (r[1] - p[1])


def _segments_cross(a: LatLon, b: LatLon, c: LatLon, d: LatLon) -> bool:
    """Proper crossing test; shared endpoints do not count."""
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def ring_is_simple(ring: tuple[LatLon, ...]) -> bool:
    """True when no two non-adjacent edges of the ring cross."""
    n = len(ring) - 1
    if n > _SIMPLICITY_CHECK_LIMIT:
        return True
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # first and last edge share the closing vertex
            if _segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]):
                return False
    return True
