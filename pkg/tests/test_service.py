"""HTTP service tests over a small ingested scene.

The fixture file sample_data/demo.osm holds, inside the Milligen polygon, a
restroom 20 m from an american football pitch, a fountain inside a park, a
cafe 28 m from a pharmacy, plus decoys (a second restroom far from any
pitch, a soccer pitch, a fountain outside every park, a remote pharmacy)
and one restroom north of the area boundary.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from geoscene.bundles import load_bundles
from geoscene.config import ConfigError, ServiceConfig
from geoscene.embeddings import HashingEmbedder
from geoscene.errors import (
    BackendTimeoutError,
    GrammarError,
    UnparsableOutputError,
)
from geoscene.geostore import dump_objects, ingest_osm_xml, load_gazetteer
from geoscene.ir import (
    AreaSpec,
    EntitySpec,
    SceneQuery,
    parse_scene_query,
    serialize_scene_query,
)
from geoscene.service import (
    EXTRACTION_PROMPT,
    BuiltinGrammarBackend,
    ExternalModelBackend,
    ServiceState,
    build_extraction_prompt,
    create_app,
    load_state,
    parse_natural_language,
    run_query,
)

ROOT = Path(__file__).resolve().parent.parent
DEMO_OSM = ROOT / "sample_data" / "demo.osm"

MILLIGEN_TEXT = (
    "Find a restroom and an american football field in Milligen, "
    "no more than 28 meters apart"
)
FOUNTAIN_TEXT = "find a fountain in a park"
CAFE_TEXT = "find a cafe next to a pharmacy"


@pytest.fixture(scope="module")
def state() -> ServiceState:
    store, _ = ingest_osm_xml(str(DEMO_OSM))
    index = load_bundles(
        (ROOT / "src/geoscene/data/bundles.yaml").read_text("utf-8"),
        embedder=HashingEmbedder(),
    )
    gazetteer = load_gazetteer(
        (ROOT / "src/geoscene/data/gazetteer.geojson").read_text("utf-8")
    )
    return ServiceState(
        config=ServiceConfig(),
        store=store,
        index=index,
        gazetteer=gazetteer,
        backend=BuiltinGrammarBackend(),
    )


@pytest.fixture(scope="module")
def client(state) -> TestClient:
    return TestClient(create_app(state))


def bindings(body: dict) -> dict[int, tuple[str, int]]:
    """slot_id -> (osm_kind, osm_id) of the first assignment."""
    out = {}
    for feature in body["results"]["features"]:
        props = feature["properties"]
        if props["assignment_index"] == 0:
            out[props["slot_id"]] = (props["osm_kind"], props["osm_id"])
    return out


class TestExtractionPrompt:
    def test_fixed_header_and_tasks(self):
        assert EXTRACTION_PROMPT.startswith(
            "You are a joint entity and relation extractor."
        )
        assert "There are two type of entities: cluster and nwr." in EXTRACTION_PROMPT
        assert "The other entity types belongs to nwr." in EXTRACTION_PROMPT
        assert "Let's think step by step." in EXTRACTION_PROMPT
        assert (
            "don't provide any explanation nor note" in EXTRACTION_PROMPT
        )

    def test_yaml_layout_block(self):
        assert "area:\n   type: area type\n   value: area name\n" in EXTRACTION_PROMPT
        assert " - name: [entity name 1]\n   id: [entity id 1]" in EXTRACTION_PROMPT
        assert "relations:\n - source: entity id 1" in EXTRACTION_PROMPT

    def test_user_text_appended(self):
        prompt = build_extraction_prompt("find a cafe")
        assert prompt.startswith(EXTRACTION_PROMPT)
        assert prompt.endswith("\nText: find a cafe\n")


class _Response:
    def __init__(self, payload, raw=None):
        self._payload = payload
        self._raw = raw

    def raise_for_status(self):
        return None

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class TestBackends:
    def test_builtin_grammar(self):
        query = BuiltinGrammarBackend().to_query("find a cafe in Milligen")
        assert [e.name for e in query.entities] == ["cafe"]
        assert query.area.name == "Milligen"

    def test_empty_input(self):
        with pytest.raises(GrammarError):
            parse_natural_language("   ", BuiltinGrammarBackend())

    def test_external_model_strips_fences(self, monkeypatch):
        yaml_text = serialize_scene_query(
            BuiltinGrammarBackend().to_query("find a cafe")
        )
        captured = {}

        def fake_post(url, json=None, timeout=None):
            captured["url"] = url
            captured["prompt"] = json["prompt"]
            return _Response({"text": f"```yaml\n{yaml_text}\n```"})

        monkeypatch.setattr(httpx, "post", fake_post)
        backend = ExternalModelBackend("http://model.local/v1")
        query = backend.to_query("find a cafe")
        assert [e.name for e in query.entities] == ["cafe"]
        assert captured["url"] == "http://model.local/v1"
        assert captured["prompt"] == build_extraction_prompt("find a cafe")

    def test_external_model_timeout(self, monkeypatch):
        def fake_post(url, json=None, timeout=None):
            raise httpx.ReadTimeout("slow")

        monkeypatch.setattr(httpx, "post", fake_post)
        with pytest.raises(BackendTimeoutError):
            ExternalModelBackend("http://model.local/v1").to_query("find a cafe")

    def test_external_model_bad_payloads(self, monkeypatch):
        cases = [
            _Response(ValueError("not json")),
            _Response({"answer": "no text key"}),
            _Response({"text": "entities: ["}),
            _Response({"text": "area:\n  type: bbox\nentities: []\n"}),
        ]
        for response in cases:
            monkeypatch.setattr(httpx, "post", lambda *a, **k: response)
            with pytest.raises(UnparsableOutputError):
                ExternalModelBackend("http://model.local/v1").to_query("find a cafe")


class TestQueryEndpoint:
    def test_distance_pair_in_named_area(self, client):
        response = client.post("/v1/query", json={"text": MILLIGEN_TEXT})
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["diagnostics"]["assignments"] == 1
        assert bindings(body) == {0: ("node", 101), 1: ("way", 201)}

    def test_containment(self, client):
        response = client.post("/v1/query", json={"text": FOUNTAIN_TEXT})
        assert response.status_code == 200
        assert bindings(response.json()) == {0: ("node", 103), 1: ("way", 202)}

    def test_relative_term(self, client):
        response = client.post("/v1/query", json={"text": CAFE_TEXT})
        assert response.status_code == 200
        assert bindings(response.json()) == {0: ("node", 105), 1: ("node", 106)}

    def test_response_ir_is_canonical(self, client):
        body = client.post("/v1/query", json={"text": MILLIGEN_TEXT}).json()
        query = parse_scene_query(body["ir"])
        assert serialize_scene_query(query) == body["ir"]
        assert query.area.name == "Milligen"
        assert query.relations[0].max_distance.meters == 28.0

    def test_resolution_names_bundles(self, client):
        body = client.post("/v1/query", json={"text": MILLIGEN_TEXT}).json()
        by_entity = {slot["entity_id"]: slot for slot in body["resolution"]}
        assert by_entity[0]["bundle_id"] == "restroom"
        assert by_entity[1]["bundle_id"] == "american-football-field"
        assert by_entity[1]["descriptor"] == "american football field"
        assert 0.0 < by_entity[0]["score"] <= 1.0

    def test_feature_property_keys(self, client):
        body = client.post("/v1/query", json={"text": CAFE_TEXT}).json()
        for feature in body["results"]["features"]:
            assert set(feature["properties"]) == {
                "slot_id",
                "assignment_index",
                "osm_kind",
                "osm_id",
                "tags",
                "centroid",
                "links",
            }
            links = feature["properties"]["links"]
            assert set(links) == {"google", "bing", "yandex", "street_level"}
            centroid = feature["properties"]["centroid"]
            assert 48.4 < centroid["lat"] < 48.46

    def test_text_and_yaml_conflict(self, client):
        response = client.post(
            "/v1/query", json={"text": CAFE_TEXT, "yaml": "area:\n  type: bbox\n"}
        )
        assert response.status_code == 400
        response = client.post("/v1/query", json={})
        assert response.status_code == 400

    def test_bad_bbox_order(self, client):
        response = client.post(
            "/v1/query",
            json={"text": CAFE_TEXT, "bbox": [48.44, 9.93, 48.42, 9.95]},
        )
        assert response.status_code == 400

    def test_yaml_mode_matches_text_mode(self, client):
        yaml_text = serialize_scene_query(
            BuiltinGrammarBackend().to_query(MILLIGEN_TEXT)
        )
        response = client.post("/v1/query", json={"yaml": yaml_text})
        assert response.status_code == 200
        assert bindings(response.json()) == {0: ("node", 101), 1: ("way", 201)}

    def test_yaml_mode_deterministic(self, client):
        yaml_text = serialize_scene_query(
            BuiltinGrammarBackend().to_query(MILLIGEN_TEXT)
        )
        bodies = []
        for _ in range(2):
            body = client.post("/v1/query", json={"yaml": yaml_text}).json()
            body["diagnostics"].pop("timings_ms")
            bodies.append(body)
        assert json.dumps(bodies[0], sort_keys=True) == json.dumps(
            bodies[1], sort_keys=True
        )

    def test_bbox_fallback_for_unnamed_area(self, client):
        yaml_text = (
            "area:\n  type: bbox\n"
            "entities:\n"
            "- id: 0\n  name: restroom\n  type: nwr\n"
            "- id: 1\n  name: american football field\n  type: nwr\n"
            "relations:\n"
            "- source: 0\n  target: 1\n  type: distance\n  value: 28 meters\n"
        )
        inside = client.post(
            "/v1/query", json={"yaml": yaml_text, "bbox": [48.42, 9.93, 48.44, 9.95]}
        ).json()
        assert bindings(inside) == {0: ("node", 101), 1: ("way", 201)}
        remote = client.post(
            "/v1/query", json={"yaml": yaml_text, "bbox": [10.0, 10.0, 11.0, 11.0]}
        ).json()
        assert remote["status"] == "ok"
        assert remote["diagnostics"]["assignments"] == 0

    def test_unresolvable_descriptor(self, client):
        response = client.post("/v1/query", json={"text": "find a zorblax"})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["kind"] == "unresolvable"
        assert detail["descriptor"] == "zorblax"
        assert len(detail["suggestions"]) >= 1
        first = detail["suggestions"][0]
        assert set(first) == {"bundle_id", "score"}

    def test_unknown_area(self, client):
        yaml_text = (
            "area:\n  type: area\n  value: Atlantis\n"
            "entities:\n- id: 0\n  name: restroom\n  type: nwr\n"
        )
        response = client.post("/v1/query", json={"yaml": yaml_text})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["kind"] == "unknown_area"
        assert detail["name"] == "Atlantis"
        assert isinstance(detail["suggestions"], list)

    def test_grammar_error_carries_span(self, client):
        response = client.post("/v1/query", json={"text": "purple monkey dishwasher"})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["kind"] == "grammar"
        assert detail["span"] == [0, 6]

    def test_yaml_syntax_error(self, client):
        response = client.post("/v1/query", json={"yaml": "entities: ["})
        assert response.status_code == 422
        assert response.json()["detail"]["kind"] == "schema"

    def test_invariant_breaking_yaml_is_schema_error(self, client):
        yaml_text = (
            "area:\n  type: area\n  value: Milligen\n"
            "entities:\n- id: 0\n  name: restroom\n  type: cluster\n"
        )
        response = client.post("/v1/query", json={"yaml": yaml_text})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["kind"] == "schema"
        assert "min_count" in detail["message"]

    def test_backend_query_revalidated(self, state):
        # a backend that skips its own validation must not reach the executor
        class BrokenBackend:
            mode = "external_model"

            def to_query(self, text):
                return SceneQuery(
                    area=AreaSpec(kind="bbox"),
                    entities=(EntitySpec(id=0, name="cafe", kind="cluster"),),
                    relations=(),
                )

        broken_state = copy.copy(state)
        broken_state.backend = BrokenBackend()
        broken_client = TestClient(create_app(broken_state))
        response = broken_client.post("/v1/query", json={"text": CAFE_TEXT})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["kind"] == "validation"
        assert detail["violations"]
        assert {"path", "message"} == set(detail["violations"][0])

    def test_backend_timeout_maps_to_504(self, state):
        class SlowBackend:
            mode = "external_model"

            def to_query(self, text):
                raise BackendTimeoutError("model took too long")

        slow_state = copy.copy(state)
        slow_state.backend = SlowBackend()
        slow_client = TestClient(create_app(slow_state))
        response = slow_client.post("/v1/query", json={"text": CAFE_TEXT})
        assert response.status_code == 504
        assert response.json()["detail"]["kind"] == "timeout"

    def test_max_results_must_be_positive(self, client):
        response = client.post(
            "/v1/query", json={"text": CAFE_TEXT, "max_results": 0}
        )
        assert response.status_code == 422


class TestBundlesEndpoint:
    def test_search(self, client):
        response = client.get("/v1/bundles", params={"q": "restroom"})
        assert response.status_code == 200
        body = response.json()
        assert body["query"] == "restroom"
        top = body["hits"][0]
        assert top["bundle_id"] == "restroom"
        assert top["canonical_name"] == "restroom"
        assert top["hybrid_score"] >= top["lexical_score"] * 0.0
        assert len(body["hits"]) <= 5

    def test_k_limits_hits(self, client):
        body = client.get("/v1/bundles", params={"q": "shop", "k": 2}).json()
        assert len(body["hits"]) <= 2

    def test_blank_query_rejected(self, client):
        response = client.get("/v1/bundles", params={"q": "   "})
        assert response.status_code == 400
        assert response.json()["detail"]["kind"] == "empty_query"

    def test_k_bounds(self, client):
        response = client.get("/v1/bundles", params={"q": "cafe", "k": 0})
        assert response.status_code == 422


class TestHealth:
    def test_reports_store_and_index(self, client, state):
        body = client.get("/v1/health").json()
        assert body["status"] == "ok"
        assert body["objects"] == len(state.store)
        assert body["bundles"] == len(state.index)
        assert body["gazetteer_areas"] == 10
        assert body["nl_mode"] == "builtin_grammar"
        min_lat, min_lon, max_lat, max_lon = body["extent"]
        assert min_lat <= 48.43 <= max_lat
        assert min_lon <= 9.94 <= max_lon


class TestLoadState:
    def test_round_trip_through_dump(self, state, tmp_path):
        dump_path = tmp_path / "objects.ndjson"
        dump_objects(state.store, str(dump_path))
        config = ServiceConfig(store_path=str(dump_path))
        loaded = load_state(config)
        assert len(loaded.store) == len(state.store)
        assert len(loaded.index) == len(state.index)
        assert loaded.gazetteer is not None
        assert isinstance(loaded.backend, BuiltinGrammarBackend)
        out = run_query(loaded, text=CAFE_TEXT)
        assert out["diagnostics"]["assignments"] == 1

    def test_empty_store_without_path(self):
        loaded = load_state(ServiceConfig())
        assert len(loaded.store) == 0

    def test_external_mode_needs_endpoint(self):
        with pytest.raises(ConfigError):
            load_state(ServiceConfig(nl_mode="external_model"))

    def test_external_mode_backend(self):
        config = ServiceConfig(
            nl_mode="external_model", nl_endpoint="http://model.local/v1"
        )
        loaded = load_state(config)
        assert isinstance(loaded.backend, ExternalModelBackend)
        assert loaded.backend.endpoint == "http://model.local/v1"
