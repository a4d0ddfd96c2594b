"""Executor tests against a Cartesian-product brute-force oracle.

The oracle shares the low-level geometry routines but nothing else: its own
candidate scan, its own clique enumeration (pivotless), its own predicate
checks, and no spatial index.
"""

import itertools
import random

import networkx
import pytest

from geoscene.bundles import ResolvedQuery, ResolvedRelation, ResolvedSlot
from geoscene.executor import (
    Assignment,
    PlanStep,
    QueryPlan,
    ResultSet,
    compile_plan,
    execute,
    execute_plan,
    find_clusters,
    rank_results,
    realized_distance,
    results_to_geojson,
)
from geoscene.geometry import PointGeom, PolygonGeom, Region, distance_m, point_in_polygon
from geoscene.geostore import GeoStore, make_object
from geoscene.tags import TagAtom, TagFilter


def eq_filter(key, value):
    return TagFilter(groups=((TagAtom(key=key, op="equals", value=value),),))


def slot(entity_id, key, value, kind="nwr", min_count=None, max_spread_m=None):
    return ResolvedSlot(
        entity_id=entity_id,
        descriptor=f"{value}",
        bundle_id=f"fixture-{value}",
        filter=eq_filter(key, value),
        score=1.0,
        kind=kind,
        min_count=min_count,
        max_spread_m=max_spread_m,
    )


def node(osm_id, lat, lon, tags):
    return make_object("node", osm_id, tags, PointGeom(lat, lon))


def square(osm_id, lat, lon, side_deg, tags):
    ring = (
        (lat, lon),
        (lat, lon + side_deg),
        (lat + side_deg, lon + side_deg),
        (lat + side_deg, lon),
        (lat, lon),
    )
    return make_object("way", osm_id, tags, PolygonGeom(outer=ring))


# --- independent oracle -----------------------------------------------------


def oracle_cliques(objects, min_count, max_spread_m):
    graph = networkx.Graph()
    graph.add_nodes_from(range(len(objects)))
    for i, j in itertools.combinations(range(len(objects)), 2):
        if distance_m(objects[i].geometry, objects[j].geometry) <= max_spread_m:
            graph.add_edge(i, j)
    return [
        tuple(sorted((objects[i] for i in clique), key=lambda o: o.key))
        for clique in networkx.find_cliques(graph)
        if len(clique) >= min_count
    ]


def oracle_relation_holds(rel, source, target):
    sources = source if isinstance(source, tuple) else (source,)
    targets = target if isinstance(target, tuple) else (target,)
    if rel.kind == "contains":
        if isinstance(source, tuple) or not isinstance(sources[0].geometry, PolygonGeom):
            return False
        return all(
            point_in_polygon(t.centroid[0], t.centroid[1], sources[0].geometry)
            for t in targets
        )
    worst = max(distance_m(a.geometry, b.geometry) for a in sources for b in targets)
    return worst <= rel.max_distance_m


def oracle_signatures(rq, store):
    pools = {}
    for s in rq.slots:
        objs = [
            o
            for o in store.objects
            if rq.region.contains_point(*o.centroid) and s.matches(o.tags)
        ]
        if s.kind == "cluster":
            pools[s.entity_id] = oracle_cliques(objs, s.min_count, s.max_spread_m)
        else:
            pools[s.entity_id] = objs
    ids = sorted(pools)
    signatures = set()
    for combo in itertools.product(*(pools[i] for i in ids)):
        bound = dict(zip(ids, combo))
        if all(oracle_relation_holds(r, bound[r.source], bound[r.target]) for r in rq.relations):
            signatures.add(
                tuple(
                    (i, tuple(o.key for o in b) if isinstance(b, tuple) else b.key)
                    for i, b in sorted(bound.items())
                )
            )
    return signatures


def executed_signatures(rq, store, max_results=10_000):
    return {a.signature() for a in execute(rq, store, max_results).assignments}


# --- fixtures ---------------------------------------------------------------

PAIR_REGION = Region.from_bbox(48.40, 9.90, 48.46, 9.98)


def milligen_pair_store():
    """One restroom/pitch pair 20 m apart; every other pairing >= 100 m."""
    return GeoStore(
        [
            node(1, 48.4300, 9.9400, {"amenity": "toilets"}),
            square(2, 48.43018, 9.9398, 0.0006, {"leisure": "pitch", "sport": "american_football"}),
            node(3, 48.4290, 9.9450, {"amenity": "toilets"}),
            square(4, 48.4330, 9.9480, 0.0006, {"leisure": "pitch", "sport": "american_football"}),
        ]
    )


def pair_query(max_distance_m=28.0):
    return ResolvedQuery(
        slots=(slot(0, "amenity", "toilets"), slot(1, "leisure", "pitch")),
        relations=(ResolvedRelation(source=0, target=1, kind="distance", max_distance_m=max_distance_m),),
        region=PAIR_REGION,
    )


def fountain_park_store():
    return GeoStore(
        [
            square(1, 48.4400, 9.9400, 0.0020, {"leisure": "park"}),
            node(2, 48.4410, 9.9410, {"amenity": "fountain"}),
            node(3, 48.4450, 9.9450, {"amenity": "fountain"}),
        ]
    )


class TestFixtureScenes:
    def test_single_pair_within_28m(self):
        store = milligen_pair_store()
        results = execute(pair_query(), store)
        assert len(results.assignments) == 1
        a = results.assignments[0]
        assert a.binding_keys(0) == ("node", 1)
        assert a.binding_keys(1) == ("way", 2)
        assert a.compactness == pytest.approx(20.0, abs=0.2)
        assert results.candidate_counts == {0: 2, 1: 2}
        assert not results.truncated

    def test_pair_matches_oracle(self):
        store = milligen_pair_store()
        assert executed_signatures(pair_query(), store) == oracle_signatures(pair_query(), store)

    def test_fountain_in_park(self):
        store = fountain_park_store()
        rq = ResolvedQuery(
            slots=(slot(0, "leisure", "park"), slot(1, "amenity", "fountain")),
            relations=(ResolvedRelation(source=0, target=1, kind="contains"),),
            region=PAIR_REGION,
        )
        results = execute(rq, store)
        assert len(results.assignments) == 1
        assert results.assignments[0].binding_keys(1) == ("node", 2)
        assert results.assignments[0].compactness == 0.0

    def test_empty_result_is_valid(self):
        store = milligen_pair_store()
        rq = ResolvedQuery(
            slots=(slot(0, "amenity", "cinema"),),
            relations=(),
            region=PAIR_REGION,
        )
        results = execute(rq, store)
        assert results.assignments == []
        assert results.candidate_counts == {0: 0}


class TestPlanner:
    def test_seed_is_most_selective(self):
        objects = [node(i, 48.43 + i * 1e-4, 9.94, {"man_made": "bridge"}) for i in range(50)]
        objects += [node(100, 48.432, 9.941, {"building": "church"}),
                    node(101, 48.433, 9.942, {"building": "church"})]
        store = GeoStore(objects)
        rq = ResolvedQuery(
            slots=(slot(0, "man_made", "bridge"), slot(1, "building", "church")),
            relations=(ResolvedRelation(source=1, target=0, kind="distance", max_distance_m=500.0),),
            region=PAIR_REGION,
        )
        plan = compile_plan(rq, store)
        assert plan.seed_slot == 1
        assert plan.join_order() == (1, 0)
        assert plan.steps[0].relations == ()
        assert plan.steps[1].relations == rq.relations
        assert not plan.cartesian

    def test_single_slot_plan(self):
        store = milligen_pair_store()
        rq = ResolvedQuery(slots=(slot(0, "amenity", "toilets"),), relations=(), region=PAIR_REGION)
        plan = compile_plan(rq, store)
        assert plan.join_order() == (0,)
        assert not plan.cartesian

    def test_disconnected_slots_flag_cartesian(self):
        store = milligen_pair_store()
        rq = ResolvedQuery(
            slots=(slot(0, "amenity", "toilets"), slot(1, "leisure", "pitch")),
            relations=(),
            region=PAIR_REGION,
        )
        plan = compile_plan(rq, store)
        assert plan.cartesian
        results = execute_plan(plan, rq, store)
        assert len(results.assignments) == 4  # full cross product

    def test_any_join_order_gives_same_assignments(self):
        rng = random.Random(31)
        store = random_scene(rng, 90)
        rq = ResolvedQuery(
            slots=(slot(0, "amenity", "cafe"), slot(1, "amenity", "pharmacy"), slot(2, "building", "house")),
            relations=(
                ResolvedRelation(source=0, target=1, kind="distance", max_distance_m=400.0),
                ResolvedRelation(source=1, target=2, kind="distance", max_distance_m=300.0),
            ),
            region=SCENE_REGION,
        )
        reference = None
        for order in itertools.permutations((0, 1, 2)):
            bound = set()
            steps = []
            for slot_id in order:
                bound.add(slot_id)
                edges = tuple(
                    r for r in rq.relations
                    if slot_id in (r.source, r.target) and {r.source, r.target} <= bound
                )
                steps.append(PlanStep(slot_id=slot_id, relations=edges))
            plan = QueryPlan(seed_slot=order[0], steps=tuple(steps))
            got = {a.signature() for a in execute_plan(plan, rq, store, 10_000).assignments}
            if reference is None:
                reference = got
            else:
                assert got == reference
        assert reference == oracle_signatures(rq, store)


# --- randomized oracle sweep ------------------------------------------------

SCENE_REGION = Region.from_bbox(48.425, 9.935, 48.4375, 9.9535)

CLASSES = [
    ("building", "church"),
    ("man_made", "bridge"),
    ("building", "house"),
    ("amenity", "cafe"),
    ("amenity", "pharmacy"),
    ("power", "generator"),
]


def random_scene(rng, n_objects):
    objects = []
    for i in range(n_objects):
        key, value = rng.choice(CLASSES)
        lat = rng.uniform(48.4255, 48.437)
        lon = rng.uniform(9.9355, 9.953)
        if rng.random() < 0.8:
            objects.append(node(i, lat, lon, {key: value}))
        else:
            objects.append(square(i, lat, lon, rng.uniform(0.0002, 0.0008), {key: value}))
    return GeoStore(objects)


def random_query(rng):
    classes = rng.sample(CLASSES, k=rng.randint(1, 3))
    slots = []
    for i, (key, value) in enumerate(classes):
        if value == "generator" and rng.random() < 0.5:
            slots.append(
                slot(i, key, value, kind="cluster", min_count=rng.randint(2, 3),
                     max_spread_m=rng.uniform(150.0, 500.0))
            )
        else:
            slots.append(slot(i, key, value))
    relations = []
    for i in range(1, len(slots)):
        if rng.random() < 0.85:
            source, target = (i - 1, i) if rng.random() < 0.5 else (i, i - 1)
            if rng.random() < 0.2 and slots[source].kind == "nwr":
                relations.append(ResolvedRelation(source=source, target=target, kind="contains"))
            else:
                relations.append(
                    ResolvedRelation(
                        source=source, target=target, kind="distance",
                        max_distance_m=rng.uniform(60.0, 900.0),
                    )
                )
    return ResolvedQuery(slots=tuple(slots), relations=tuple(relations), region=SCENE_REGION)


class TestOracleEquivalence:
    def test_fifty_random_scenes(self):
        for seed in range(50):
            rng = random.Random(1000 + seed)
            store = random_scene(rng, rng.randint(40, 120))
            rq = random_query(rng)
            got = executed_signatures(rq, store)
            want = oracle_signatures(rq, store)
            assert got == want, f"seed {seed}: executor disagrees with oracle"

    def test_monotone_in_max_distance(self):
        for seed in range(10):
            rng = random.Random(7000 + seed)
            store = random_scene(rng, 80)
            base = rng.uniform(80.0, 300.0)
            def query(dist):
                return ResolvedQuery(
                    slots=(slot(0, "amenity", "cafe"), slot(1, "building", "house")),
                    relations=(ResolvedRelation(source=0, target=1, kind="distance", max_distance_m=dist),),
                    region=SCENE_REGION,
                )
            assert executed_signatures(query(base), store) <= executed_signatures(query(2 * base), store)


class TestClusters:
    def test_five_generators_in_disc(self):
        objects = [
            node(i, 48.4300 + dlat, 9.9400 + dlon, {"power": "generator"})
            for i, (dlat, dlon) in enumerate(
                [(0.0, 0.0), (0.0002, 0.0001), (0.0001, 0.0003), (0.0003, 0.0002), (0.0002, 0.0004)]
            )
        ]
        clusters = find_clusters(objects, min_count=5, max_spread_m=100.0)
        assert len(clusters) == 1
        assert len(clusters[0]) == 5

    def test_far_pair_gives_nothing(self):
        objects = [
            node(1, 48.4300, 9.9400, {"power": "generator"}),
            node(2, 48.43135, 9.9400, {"power": "generator"}),  # ~150 m away
        ]
        assert find_clusters(objects, min_count=2, max_spread_m=100.0) == []

    def test_matches_clique_oracle(self):
        for seed in range(20):
            rng = random.Random(300 + seed)
            count = rng.randint(5, 60)
            objects = [
                node(i, 48.43 + rng.uniform(0, 0.004), 9.94 + rng.uniform(0, 0.004), {})
                for i in range(count)
            ]
            spread = rng.uniform(60.0, 250.0)
            min_count = rng.randint(2, 4)
            got = {tuple(o.key for o in c) for c in find_clusters(objects, min_count, spread)}
            want = {tuple(o.key for o in c) for c in oracle_cliques(objects, min_count, spread)}
            assert got == want, f"seed {seed}"

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            find_clusters([], min_count=1, max_spread_m=50.0)
        with pytest.raises(ValueError):
            find_clusters([], min_count=2, max_spread_m=0.0)

    def test_cluster_relation_holds_only_when_every_member_in_range(self):
        generators = [
            node(i, 48.4300 + dlat, 9.9400, {"power": "generator"})
            for i, dlat in enumerate([0.0, 0.0002, 0.0004])
        ]
        rq_slots = (
            slot(0, "building", "church"),
            slot(1, "power", "generator", kind="cluster", min_count=3, max_spread_m=100.0),
        )
        near = GeoStore(generators + [node(10, 48.4302, 9.9405, {"building": "church"})])
        far = GeoStore(generators + [node(10, 48.4340, 9.9400, {"building": "church"})])
        def rq_for(max_d):
            return ResolvedQuery(
                slots=rq_slots,
                relations=(ResolvedRelation(source=0, target=1, kind="distance", max_distance_m=max_d),),
                region=PAIR_REGION,
            )
        assert len(execute(rq_for(200.0), near).assignments) == 1
        # the only maximal clique includes the far member, so 200 m fails it
        assert execute(rq_for(200.0), far).assignments == []
        assert len(execute(rq_for(800.0), far).assignments) == 1

    def test_cluster_cannot_contain(self):
        members = (
            node(1, 48.43, 9.94, {}),
            node(2, 48.4301, 9.94, {}),
        )
        rel = ResolvedRelation(source=0, target=1, kind="contains")
        assert realized_distance(rel, members, node(3, 48.43, 9.94, {})) is None


class TestRanking:
    def _assignment(self, osm_id, compactness):
        obj = node(osm_id, 48.43, 9.94, {})
        return Assignment(bindings={0: obj}, compactness=compactness)

    def test_compactness_ascending(self):
        results = rank_results([self._assignment(1, 80.0), self._assignment(2, 30.0)])
        assert [a.compactness for a in results.assignments] == [30.0, 80.0]

    def test_tie_breaks_by_osm_id(self):
        results = rank_results([self._assignment(5, 40.0), self._assignment(3, 40.0)])
        assert [a.binding_keys(0) for a in results.assignments] == [("node", 3), ("node", 5)]

    def test_truncation_flag(self):
        results = rank_results([self._assignment(i, float(i)) for i in range(3)], max_results=1)
        assert len(results.assignments) == 1
        assert results.truncated
        assert results.assignments[0].compactness == 0.0


class TestGeoJson:
    def test_features_carry_slot_and_assignment(self):
        store = milligen_pair_store()
        results = execute(pair_query(), store)
        collection = results_to_geojson(results)
        assert collection["type"] == "FeatureCollection"
        assert len(collection["features"]) == 2
        first = collection["features"][0]
        assert set(first["properties"]) == {"slot_id", "assignment_index", "osm_kind", "osm_id", "tags"}
        assert first["properties"]["assignment_index"] == 0
        restroom = next(
            f for f in collection["features"] if f["properties"]["osm_kind"] == "node"
        )
        assert restroom["geometry"] == {"type": "Point", "coordinates": [9.94, 48.43]}

    def test_empty_results(self):
        assert results_to_geojson(ResultSet([], False, {}))["features"] == []
