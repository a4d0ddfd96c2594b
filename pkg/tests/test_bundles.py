"""Bundle loading, hybrid search, and descriptor resolution."""

from __future__ import annotations

import importlib.resources

import numpy as np
import pytest

from geoscene.distance import Distance
from geoscene.embeddings import (
    DEFAULT_DIM,
    HashingEmbedder,
    cosine,
    load_vector_sidecar,
    write_vector_sidecar,
)
from geoscene.errors import (
    BundleFormatError,
    DimensionMismatchError,
    DuplicateBundleIdError,
    EmptyQueryError,
    UnresolvableDescriptorError,
)
from geoscene.bundles import (
    BundleIndex,
    hybrid_score,
    load_bundles,
    resolve_query,
    search_bundles,
    search_many,
    tokenize,
)
from geoscene.ir import (
    AreaSpec,
    EntitySpec,
    PropertyConstraint,
    SceneQuery,
)

FIXTURE_BUNDLES = """\
- id: urban-rail
  canonical_name: smaller urban railway tracks
  descriptors: [light rail, subway, tram]
  applies_to: entity
  filters:
  - - {key: railway, op: equals, value: tram}
  - - {key: railway, op: equals, value: subway}
  - - {key: railway, op: equals, value: light_rail}
- id: restaurant
  canonical_name: restaurant
  descriptors: [restaurant, diner]
  applies_to: entity
  filters:
  - - {key: amenity, op: equals, value: restaurant}
- id: book-shop
  canonical_name: book shop
  descriptors: [book shop, bookstore]
  applies_to: entity
  filters:
  - - {key: shop, op: equals, value: books}
- id: tram-stop
  canonical_name: tram stop
  descriptors: [tram stop, streetcar stop]
  applies_to: entity
  filters:
  - - {key: railway, op: equals, value: tram_stop}
- id: church
  canonical_name: church
  descriptors: [church, cathedral]
  applies_to: entity
  filters:
  - - {key: building, op: equals, value: church}
- id: bridge
  canonical_name: bridge
  descriptors: [bridge, viaduct]
  applies_to: entity
  filters:
  - - {key: man_made, op: equals, value: bridge}
- id: prop-levels
  canonical_name: building levels
  descriptors: [levels, floors]
  applies_to: property
  filters:
  - - {key: "building:levels", op: exists}
- id: prop-name
  canonical_name: object name
  descriptors: [name, called]
  applies_to: property
  filters:
  - - {key: name, op: exists}
- id: prop-roof-colour
  canonical_name: roof colour
  descriptors: [roof colour, red roof]
  applies_to: property
  filters:
  - - {key: "roof:colour", op: exists}
"""


@pytest.fixture(scope="module")
def index() -> BundleIndex:
    return load_bundles(FIXTURE_BUNDLES)


def seed_bundle_text() -> str:
    return (
        importlib.resources.files("geoscene").joinpath("data/bundles.yaml").read_text("utf-8")
    )


def test_hybrid_score_frozen_values():
    assert hybrid_score(3.0, 0.9, alpha=1.0) == pytest.approx(0.75)
    assert hybrid_score(0.0, 0.8, alpha=0.0) == pytest.approx(0.8)
    assert hybrid_score(1.0, 0.6, alpha=0.5) == pytest.approx(0.55)
    # negative semantic clamps to zero
    assert hybrid_score(1.0, -0.9, alpha=0.5) == pytest.approx(0.25)


def test_hybrid_score_monotone():
    for alpha in (0.0, 0.3, 1.0):
        assert hybrid_score(2.0, 0.5, alpha) >= hybrid_score(1.0, 0.5, alpha)
        assert hybrid_score(1.0, 0.7, alpha) >= hybrid_score(1.0, 0.5, alpha)


def test_tokenize_folds_and_splits():
    assert tokenize("Café-Restaurant No.5") == ["cafe", "restaurant", "no", "5"]
    assert tokenize("  ") == []


def test_load_fixture(index):
    assert len(index) == 9
    assert index.bundle("urban-rail").canonical_name == "smaller urban railway tracks"


def test_load_rejects_empty_and_duplicates():
    with pytest.raises(BundleFormatError):
        load_bundles("[]")
    with pytest.raises(BundleFormatError):
        load_bundles("not: a list")
    dup = FIXTURE_BUNDLES + FIXTURE_BUNDLES.split("- id: restaurant")[0]
    with pytest.raises(DuplicateBundleIdError):
        load_bundles(FIXTURE_BUNDLES.replace("id: restaurant", "id: urban-rail", 1))
    with pytest.raises(BundleFormatError):
        load_bundles("- id: x\n  canonical_name: x\n  descriptors: []\n  filters: [[{key: a, op: exists}]]\n")


def test_sidecar_dimension_mismatch(tmp_path, index):
    vectors = {b.id: np.zeros(512) for b in index.bundles}
    path = tmp_path / "vectors.txt"
    write_vector_sidecar(str(path), vectors, dim=512)
    with pytest.raises(DimensionMismatchError):
        load_bundles(FIXTURE_BUNDLES, sidecar_path=str(path))


def test_sidecar_round_trip(tmp_path, index):
    rng = np.random.default_rng(3)
    vectors = {b.id: rng.normal(size=DEFAULT_DIM) for b in index.bundles}
    path = tmp_path / "vectors.txt"
    write_vector_sidecar(str(path), vectors, dim=DEFAULT_DIM)
    dim, loaded = load_vector_sidecar(str(path))
    assert dim == DEFAULT_DIM
    assert set(loaded) == set(vectors)
    for bundle_id in vectors:
        assert cosine(loaded[bundle_id], vectors[bundle_id]) > 0.999999
    sidecar_index = load_bundles(FIXTURE_BUNDLES, sidecar_path=str(path))
    hits = search_bundles(sidecar_index, "anything", k=2)
    assert len(hits) == 2


def test_tram_retrieves_urban_rail(index):
    hits = search_bundles(index, "tram", k=3)
    assert hits[0].bundle_id == "urban-rail"


def test_book_shop_and_bookstore_agree(index):
    top_a = search_bundles(index, "book shop", k=1)[0].bundle_id
    top_b = search_bundles(index, "bookstore", k=1)[0].bundle_id
    assert top_a == top_b == "book-shop"


def test_typo_still_in_top3(index):
    hits = search_bundles(index, "restuarant", k=3)
    assert "restaurant" in [h.bundle_id for h in hits]


def test_empty_query(index):
    with pytest.raises(EmptyQueryError):
        search_bundles(index, "   ", k=3)


def test_k_validation(index):
    with pytest.raises(ValueError):
        search_bundles(index, "tram", k=0)


def test_determinism(index):
    a = search_bundles(index, "light rail", k=5)
    b = search_bundles(index, "light rail", k=5)
    assert a == b


def test_zero_score_ties_break_by_id(index):
    # "???" has no word tokens, so both channels are exactly zero everywhere
    hits = search_bundles(index, "???", k=3)
    ids = [h.bundle_id for h in hits]
    assert ids == sorted(b.id for b in index.bundles)[:3]
    assert all(h.hybrid_score == 0.0 for h in hits)


def test_search_many_matches_single(index):
    queries = ["tram", "bookstore", "levels", "restuarant"]
    batched = search_many(index, queries, k=3)
    for query, hits in zip(queries, batched):
        single = search_bundles(index, query, k=3)
        assert [h.bundle_id for h in hits] == [h.bundle_id for h in single]
        for a, b in zip(hits, single):
            # GEMM rounding differs across batch shapes; scores agree closely
            assert a.hybrid_score == pytest.approx(b.hybrid_score, rel=1e-5)


def test_applies_to_namespaces(index):
    entity_hits = search_bundles(index, "name", k=3, applies_to="entity")
    assert "prop-name" not in [h.bundle_id for h in entity_hits]
    prop_hits = search_bundles(index, "name", k=1, applies_to="property")
    assert prop_hits[0].bundle_id == "prop-name"


def test_hit_scores_use_hybrid_formula(index):
    hit = search_bundles(index, "subway", k=1, alpha=0.3)[0]
    assert hit.hybrid_score == pytest.approx(
        hybrid_score(hit.lexical_score, hit.semantic_score, 0.3)
    )


# --- resolution -------------------------------------------------------------


def church_bridge_query() -> SceneQuery:
    return SceneQuery(
        area=AreaSpec(kind="bbox"),
        entities=(
            EntitySpec(id=0, name="church", properties=(PropertyConstraint("levels", ">", "56"),)),
            EntitySpec(id=1, name="bridge", properties=(PropertyConstraint("name", "~", "MK6"),)),
        ),
    )


def test_resolve_church_bridge(index):
    rq = resolve_query(church_bridge_query(), index)
    assert [s.bundle_id for s in rq.slots] == ["church", "bridge"]
    assert rq.slots[0].properties[0].bundle_id == "prop-levels"
    assert rq.slots[0].properties[0].keys == ("building:levels",)
    assert rq.slots[0].properties[0].operator == ">"
    assert rq.slots[0].properties[0].value == "56"
    assert rq.slots[1].properties[0].bundle_id == "prop-name"
    assert rq.region is None


def test_resolve_preserves_slot_set(index):
    q = church_bridge_query()
    rq = resolve_query(q, index)
    assert {s.entity_id for s in rq.slots} == {e.id for e in q.entities}
    assert len(rq.slots) == len(q.entities)


def test_resolve_red_roof_property(index):
    q = SceneQuery(
        area=AreaSpec(kind="bbox"),
        entities=(
            EntitySpec(id=0, name="church", properties=(PropertyConstraint("red roof", "=", "red"),)),
        ),
    )
    rq = resolve_query(q, index)
    prop = rq.slots[0].properties[0]
    assert prop.bundle_id == "prop-roof-colour"
    assert prop.keys == ("roof:colour",)
    assert prop.matches({"roof:colour": "red"})
    assert not prop.matches({"roof:colour": "green"})
    assert not prop.matches({})


def test_resolve_nonsense_raises_with_candidates(index):
    q = SceneQuery(
        area=AreaSpec(kind="bbox"),
        entities=(EntitySpec(id=0, name="zorblax"),),
    )
    with pytest.raises(UnresolvableDescriptorError) as err:
        resolve_query(q, index)
    assert err.value.slot_path == "entities[0].name"
    assert err.value.descriptor == "zorblax"
    assert len(err.value.candidates) == 3


def test_resolved_slot_matching(index):
    rq = resolve_query(church_bridge_query(), index)
    church = rq.slot(0)
    assert church.matches({"building": "church", "building:levels": "60"})
    assert not church.matches({"building": "church", "building:levels": "56"})  # > is strict
    assert not church.matches({"building": "church"})  # property key missing
    assert not church.matches({"building": "warehouse", "building:levels": "60"})
    bridge = rq.slot(1)
    assert bridge.matches({"man_made": "bridge", "name": "Bridge MK6 East"})
    assert not bridge.matches({"man_made": "bridge", "name": "Bridge MK7"})


def test_resolve_cluster_carries_parameters(index):
    q = SceneQuery(
        area=AreaSpec(kind="bbox"),
        entities=(
            EntitySpec(
                id=0, name="restaurant", kind="cluster",
                min_count=3, max_spread=Distance.from_meters(120),
            ),
        ),
    )
    slot = resolve_query(q, index).slots[0]
    assert slot.kind == "cluster"
    assert slot.min_count == 3
    assert slot.max_spread_m == 120.0


# --- seed list --------------------------------------------------------------


@pytest.fixture(scope="module")
def seed_index() -> BundleIndex:
    return load_bundles(seed_bundle_text())


def test_seed_list_size(seed_index):
    assert len(seed_index) >= 100


def test_seed_descriptors_globally_unique(seed_index):
    seen: dict[str, str] = {}
    for bundle in seed_index.bundles:
        for descriptor in bundle.descriptors:
            key = descriptor.casefold()
            assert key not in seen, f"{descriptor!r} in {bundle.id} and {seen[key]}"
            seen[key] = bundle.id


def test_seed_every_descriptor_rank_1(seed_index):
    queries = []
    expected = []
    for bundle in seed_index.bundles:
        for descriptor in bundle.descriptors:
            queries.append(descriptor)
            expected.append(bundle.id)
    batched = search_many(seed_index, queries, k=1)
    misses = [
        (q, want, hits[0].bundle_id)
        for q, want, hits in zip(queries, expected, batched)
        if hits[0].bundle_id != want
    ]
    assert misses == []


def test_seed_resolves_fixture_descriptors(seed_index):
    for name, bundle_id in [
        ("tram stop", "tram-stop"),
        ("restroom", "restroom"),
        ("american football field", "american-football-field"),
        ("wind turbine", "wind-generator"),
        ("public toilet", "restroom"),
    ]:
        hits = search_bundles(seed_index, name, k=1, applies_to="entity")
        assert hits[0].bundle_id == bundle_id, name
