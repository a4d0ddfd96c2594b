"""Assignment search: bind concrete map objects to the slots of a resolved
scene query so that every relation constraint holds.

The planner picks a seed slot and a greedy join order; execution expands
partial assignments along relation edges, narrowing each expansion with an
R-tree probe before the exact geometric checks.  Results are ranked by
compactness (total realized relation distance).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

from geoscene.bundles import ResolvedQuery, ResolvedRelation, ResolvedSlot
from geoscene.geometry import M_PER_DEG, BBox, Region, geometry_bbox
from geoscene.geostore import (
    GeoObject,
    GeoStore,
    candidates_in_region,
    contains,
    geometry_to_geojson,
    object_distance_m,
)

log = logging.getLogger(__name__)

# bindings are a single GeoObject (nwr slots) or a key-sorted tuple (clusters)

DEFAULT_MAX_RESULTS = 100


@dataclass(frozen=True)
class PlanStep:
    slot_id: int
    relations: tuple[ResolvedRelation, ...] = ()


@dataclass(frozen=True)
class QueryPlan:
    seed_slot: int
    steps: tuple[PlanStep, ...]
    cartesian: bool = False

    def join_order(self) -> tuple[int, ...]:
        return tuple(step.slot_id for step in self.steps)


@dataclass(frozen=True)
class Assignment:
    bindings: dict[int, object]
    compactness: float

    def binding_keys(self, slot_id: int) -> tuple:
        bound = self.bindings[slot_id]
        if isinstance(bound, tuple):
            return tuple(o.key for o in bound)
        return bound.key

    def signature(self) -> tuple:
        return tuple(
            (slot_id, self.binding_keys(slot_id)) for slot_id in sorted(self.bindings)
        )

    def objects(self, slot_id: int) -> tuple[GeoObject, ...]:
        bound = self.bindings[slot_id]
        return bound if isinstance(bound, tuple) else (bound,)


@dataclass
class ResultSet:
    assignments: list[Assignment]
    truncated: bool
    candidate_counts: dict[int, int]


def _members(binding) -> tuple[GeoObject, ...]:
    return binding if isinstance(binding, tuple) else (binding,)


def realized_distance(rel: ResolvedRelation, source, target) -> float | None:
    """Realized relation value in meters, or None when the relation fails.

    Cluster endpoints are held to the worst member: a distance relation needs
    every member pair within range, containment needs every member inside.
    A cluster never acts as the containing side.
    """
    if rel.kind == "contains":
        if isinstance(source, tuple):
            return None
        if all(contains(source, inner) for inner in _members(target)):
            return 0.0
        return None
    worst = max(
        object_distance_m(a, b)
        for a in _members(source)
        for b in _members(target)
    )
    if worst <= rel.max_distance_m:
        return worst
    return None


def _binding_bbox(binding) -> BBox:
    boxes = [geometry_bbox(o.geometry) for o in _members(binding)]
    box = boxes[0]
    for other in boxes[1:]:
        box = box.union(other)
    return box


# --- clusters ---------------------------------------------------------------

_EXACT_CLIQUE_LIMIT = 64


def _grid_cells(box: BBox, cell_lat: float, cell_lon: float):
    lo_r = math.floor(box.min_lat / cell_lat)
    hi_r = math.floor(box.max_lat / cell_lat)
    lo_c = math.floor(box.min_lon / cell_lon)
    hi_c = math.floor(box.max_lon / cell_lon)
    for r in range(lo_r, hi_r + 1):
        for c in range(lo_c, hi_c + 1):
            yield (r, c)


def _adjacency(candidates: list[GeoObject], max_spread_m: float) -> list[set[int]]:
    """Pairwise distance graph, with grid buckets limiting the pair tests."""
    boxes = [geometry_bbox(o.geometry) for o in candidates]
    cell_lat = max_spread_m / M_PER_DEG
    worst_lat = min(89.0, max(max(abs(b.min_lat), abs(b.max_lat)) for b in boxes))
    cell_lon = cell_lat / max(0.05, math.cos(math.radians(worst_lat)))
    grid: dict[tuple[int, int], list[int]] = {}
    for i, box in enumerate(boxes):
        for cell in _grid_cells(box, cell_lat, cell_lon):
            grid.setdefault(cell, []).append(i)
    adjacency: list[set[int]] = [set() for _ in candidates]
    seen: set[tuple[int, int]] = set()
    for i, box in enumerate(boxes):
        # two-cell expansion: generous, so metric/degree slack cannot drop a pair
        lo_r = math.floor(box.min_lat / cell_lat) - 2
        hi_r = math.floor(box.max_lat / cell_lat) + 2
        lo_c = math.floor(box.min_lon / cell_lon) - 2
        hi_c = math.floor(box.max_lon / cell_lon) + 2
        for r in range(lo_r, hi_r + 1):
            for c in range(lo_c, hi_c + 1):
                for j in grid.get((r, c), ()):
                    if j <= i or (i, j) in seen:
                        continue
                    seen.add((i, j))
                    if object_distance_m(candidates[i], candidates[j]) <= max_spread_m:
                        adjacency[i].add(j)
                        adjacency[j].add(i)
    return adjacency


def _components(adjacency: list[set[int]]) -> list[list[int]]:
    seen: set[int] = set()
    out: list[list[int]] = []
    for start in range(len(adjacency)):
        if start in seen:
            continue
        stack, component = [start], []
        seen.add(start)
        while stack:
            node = stack.pop()
            component.append(node)
            for neighbor in adjacency[node]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    stack.append(neighbor)
        out.append(sorted(component))
    return out


def _maximal_cliques(vertices: list[int], adjacency: list[set[int]]) -> list[frozenset[int]]:
    """Bron-Kerbosch with pivoting; exact, used for small components."""
    cliques: list[frozenset[int]] = []

    def expand(r: set[int], p: set[int], x: set[int]) -> None:
        if not p and not x:
            cliques.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda v: len(adjacency[v] & p))
        for v in sorted(p - adjacency[pivot]):
            expand(r | {v}, p & adjacency[v], x & adjacency[v])
            p.remove(v)
            x.add(v)

    expand(set(), set(vertices), set())
    return cliques


def _greedy_cliques(vertices: list[int], adjacency: list[set[int]]) -> list[frozenset[int]]:
    """Grow a clique from every vertex, then augment; cheap but incomplete."""
    found: set[frozenset[int]] = set()
    for start in vertices:
        clique = {start}
        for v in sorted(adjacency[start], key=lambda v: -len(adjacency[v])):
            if all(v in adjacency[u] for u in clique):
                clique.add(v)
        for v in vertices:
            if v not in clique and all(v in adjacency[u] for u in clique):
                clique.add(v)
        found.add(frozenset(clique))
    return sorted(found, key=sorted)


def find_clusters(
    candidates: list[GeoObject],
    min_count: int,
    max_spread_m: float,
) -> list[tuple[GeoObject, ...]]:
    """Maximal sets with pairwise distance <= max_spread and size >= min_count.

    Components up to 64 vertices are enumerated exactly; larger ones fall
    back to greedy growth.  Every returned set is re-verified pairwise.
    """
    if min_count < 2 or max_spread_m <= 0:
        raise ValueError("clusters need min_count >= 2 and a positive spread")
    if len(candidates) < min_count:
        return []
    adjacency = _adjacency(candidates, max_spread_m)
    clusters: list[tuple[GeoObject, ...]] = []
    for component in _components(adjacency):
        if len(component) < min_count:
            continue
        if len(component) <= _EXACT_CLIQUE_LIMIT:
            cliques = _maximal_cliques(component, adjacency)
        else:
            log.warning(
                "cluster component with %d members: falling back to greedy cliques",
                len(component),
            )
            cliques = _greedy_cliques(component, adjacency)
        for clique in cliques:
            if len(clique) < min_count:
                continue
            members = tuple(sorted((candidates[i] for i in clique), key=lambda o: o.key))
            ok = all(
                object_distance_m(a, b) <= max_spread_m
                for a, b in itertools.combinations(members, 2)
            )
            if ok:
                clusters.append(members)
    clusters.sort(key=lambda c: tuple(o.key for o in c))
    return clusters


# --- planning ---------------------------------------------------------------


def _slot_pool(store: GeoStore, region: Region, slot: ResolvedSlot) -> list:
    objects = candidates_in_region(store, region, lambda o: slot.matches(o.tags))
    if slot.kind == "cluster":
        return find_clusters(objects, slot.min_count, slot.max_spread_m)
    return objects


def _pools(rq: ResolvedQuery, store: GeoStore) -> dict[int, list]:
    region = rq.region
    if region is None:
        extent = store.extent()
        if extent is None:
            return {slot.entity_id: [] for slot in rq.slots}
        grown = extent.inflate(10.0)
        region = Region.from_bbox(
            max(-89.0, grown.min_lat), grown.min_lon,
            min(89.0, grown.max_lat), grown.max_lon,
        )
    return {slot.entity_id: _slot_pool(store, region, slot) for slot in rq.slots}


def compile_plan(rq: ResolvedQuery, store: GeoStore) -> QueryPlan:
    """Pick the most selective slot as seed and join greedily along edges.

    Slots with no relation path to the part already planned are appended
    as Cartesian expansions (flagged, and warned about in the log).
    """
    pools = _pools(rq, store)
    counts = {slot_id: len(pool) for slot_id, pool in pools.items()}
    remaining = set(counts)
    seed = min(remaining, key=lambda slot_id: (counts[slot_id], slot_id))
    order = [seed]
    remaining.remove(seed)
    cartesian = False
    while remaining:
        connected = {
            rel.target if rel.source in order else rel.source
            for rel in rq.relations
            if (rel.source in order) != (rel.target in order)
        } & remaining
        if connected:
            nxt = min(connected, key=lambda slot_id: (counts[slot_id], slot_id))
        else:
            cartesian = True
            nxt = min(remaining, key=lambda slot_id: (counts[slot_id], slot_id))
            log.warning("slot %d joins without a relation edge (cartesian expansion)", nxt)
        order.append(nxt)
        remaining.remove(nxt)
    bound: set[int] = set()
    steps: list[PlanStep] = []
    for slot_id in order:
        bound.add(slot_id)
        edges = tuple(
            rel for rel in rq.relations
            if slot_id in (rel.source, rel.target)
            and rel.source in bound and rel.target in bound
        )
        steps.append(PlanStep(slot_id=slot_id, relations=edges))
    return QueryPlan(seed_slot=seed, steps=tuple(steps), cartesian=cartesian)


# --- execution --------------------------------------------------------------


def _probe_keys(store: GeoStore, partial: dict, relations) -> set | None:
    """Keys reachable through the R-tree around already-bound endpoints,
    inflated by each relation's range; None when nothing narrows."""
    keys: set | None = None
    for rel in relations:
        if rel.kind != "distance":
            continue
        for endpoint in (rel.source, rel.target):
            if endpoint in partial:
                box = _binding_bbox(partial[endpoint]).inflate(rel.max_distance_m)
                reachable = {o.key for o in store.probe(box)}
                keys = reachable if keys is None else keys & reachable
    return keys


def _within_probe(binding, keys: set | None) -> bool:
    if keys is None:
        return True
    return all(o.key in keys for o in _members(binding))


def execute_plan(
    plan: QueryPlan,
    rq: ResolvedQuery,
    store: GeoStore,
    max_results: int = DEFAULT_MAX_RESULTS,
) -> ResultSet:
    """Expand the plan into concrete assignments (oracle-equal, then ranked)."""
    pools = _pools(rq, store)
    counts = {slot_id: len(pool) for slot_id, pool in pools.items()}
    if any(count == 0 for count in counts.values()):
        return ResultSet(assignments=[], truncated=False, candidate_counts=counts)

    partials: list[dict] = [{}]
    for step in plan.steps:
        pool = pools[step.slot_id]
        grown: list[dict] = []
        for partial in partials:
            keys = _probe_keys(store, partial, step.relations)
            for candidate in pool:
                if not _within_probe(candidate, keys):
                    continue
                trial = {**partial, step.slot_id: candidate}
                if all(
                    realized_distance(rel, trial[rel.source], trial[rel.target]) is not None
                    for rel in step.relations
                ):
                    grown.append(trial)
        partials = grown
        if not partials:
            break

    assignments: list[Assignment] = []
    for bindings in partials:
        compactness = 0.0
        ok = True
        for rel in rq.relations:
            realized = realized_distance(rel, bindings[rel.source], bindings[rel.target])
            if realized is None:
                ok = False
                break
            compactness += realized
        if ok:
            assignments.append(Assignment(bindings=bindings, compactness=compactness))
    ranked = rank_results(assignments, max_results)
    ranked.candidate_counts = counts
    return ranked


def rank_results(assignments: list[Assignment], max_results: int = DEFAULT_MAX_RESULTS) -> ResultSet:
    ordered = sorted(assignments, key=lambda a: (a.compactness, a.signature()))
    truncated = len(ordered) > max_results
    return ResultSet(
        assignments=ordered[:max_results],
        truncated=truncated,
        candidate_counts={},
    )


def execute(rq: ResolvedQuery, store: GeoStore, max_results: int = DEFAULT_MAX_RESULTS) -> ResultSet:
    return execute_plan(compile_plan(rq, store), rq, store, max_results)


def results_to_geojson(results: ResultSet) -> dict:
    """FeatureCollection with one feature per bound object per assignment."""
    features = []
    for index, assignment in enumerate(results.assignments):
        for slot_id in sorted(assignment.bindings):
            for obj in assignment.objects(slot_id):
                features.append(
                    {
                        "type": "Feature",
                        "properties": {
                            "slot_id": slot_id,
                            "assignment_index": index,
                            "osm_kind": obj.osm_kind,
                            "osm_id": obj.osm_id,
                            "tags": obj.tags,
                        },
                        "geometry": geometry_to_geojson(obj.geometry),
                    }
                )
    return {"type": "FeatureCollection", "features": features}
