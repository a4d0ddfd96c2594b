"""HTTP service tying the pipeline together.

POST /v1/query drives natural language (builtin grammar or an external
extraction model) or raw IR YAML through validation, bundle resolution and
execution, and answers with the executed canonical IR, per-slot resolution
details, enriched GeoJSON features and stage timings.  GET /v1/bundles is a
thin search endpoint, GET /v1/health reports store and index stats.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import httpx
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .bundles import BundleIndex, ResolvedQuery, load_bundles, resolve_query, search_bundles
from .config import ServiceConfig
from .embeddings import HashingEmbedder
from .errors import (
    BackendTimeoutError,
    EmptyQueryError,
    GeoSceneError,
    GrammarError,
    MagnitudeError,
    QueryReferenceError,
    QuerySchemaError,
    QuerySyntaxError,
    UnitError,
    UnknownAreaError,
    UnknownTermError,
    UnparsableOutputError,
    UnresolvableDescriptorError,
)
from .executor import execute, results_to_geojson
from .geostore import GeoStore, Gazetteer, load_gazetteer, load_objects, resolve_area
from .ir import SceneQuery, Violation, parse_scene_query, serialize_scene_query, validate_scene_query
from .links import build_external_links
from .nlgrammar import parse_template

_PARSE_ERRORS = (
    QuerySyntaxError,
    QuerySchemaError,
    QueryReferenceError,
    UnitError,
    MagnitudeError,
    UnknownTermError,
)


class ValidationRejectedError(GeoSceneError):
    """A structurally parsed query breaks IR invariants."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__(
            "; ".join(f"{v.path}: {v.message}" for v in violations)
        )

EXTRACTION_PROMPT = """You are a joint entity and relation extractor. Given a text that is provided by geo fact-checkers or investigative journalists, execute the following tasks:

1. Identify the area mentioned in the text. If no area is found, designate its type as 'bbox' and assign its name as 'bbox'. If area is found, designate its type as 'area'.

2. Detect and extract the geographical entities present in the text. Areas are not part of these entities. Entities are always present in a sentence. There are two type of entities: cluster and nwr. The 'cluster' type is clusters of entities, allowing queries like "3 Italian restaurants next to each other" or "at least 5 wind generators nearby." The other entity types belongs to nwr.

3. Extract properties associated with each identified entity, if available. The properties must be related to their types, colors, heights, etc.

4. Identify and extract any relations between the entities if mentioned in the text. We define two relation types: contains and dist. Assign one of them as the relation type. In contains relations, you can recognize relationships such as "a fountain within a park" and "a shop inside a mall.". In contain relation, there is no distance. In dist relation, you interpret both numeric distances (e.g., "100 meters") and written forms (e.g., "one hundred meters"), support terms like "next to," "opposite from," and "beside" to improve natural understanding of spatial relationships, and recognize Multiple distance-based relations are supported, including radius constraints (e "A to B and C") and entity chains (e.g., "A to B and B to C").

Let's think step by step.

Please provide the output as the following YAML format and don't provide any explanation nor note:

area:
   type: area type
   value: area name
entities:
 - name: [entity name 1]
   id: [entity id 1]
   type: [entity type 1]
   properties:
    - name: [property name 1]
      operator: [operator 1]
      value: [property value 1]
    - name: [property name 2]
      operator: [operator 2]
      value: [property value 2]
    - ...
 - name: entity name 2
   id: entity id 2
   type: entity type 2
 - ...
relations:
 - source: entity id 1
   target: entity id 2
   type: relation between entity 1 and entity 2
   value: relation distance if the type of relation is dist
 - ...
"""


def build_extraction_prompt(text: str) -> str:
    """The fixed zero-shot template with the user text appended."""
    return f"{EXTRACTION_PROMPT}\nText: {text}\n"


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1:
            text = text[first_newline + 1 :]
        if text.endswith("```"):
            text = text[:-3]
    return text.strip()


class BuiltinGrammarBackend:
    """Template-pattern parser; no model in the loop."""

    mode = "builtin_grammar"

    def to_query(self, text: str) -> SceneQuery:
        return parse_template(text)


class ExternalModelBackend:
    """Sends the extraction prompt to an external model endpoint.

    The endpoint accepts {"prompt": ...} and answers {"text": ...} holding
    the YAML (markdown fences tolerated).
    """

    mode = "external_model"

    def __init__(self, endpoint: str, timeout_s: float = 20.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def to_query(self, text: str) -> SceneQuery:
        try:
            response = httpx.post(
                self.endpoint,
                json={"prompt": build_extraction_prompt(text)},
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(
                f"extraction backend timed out after {self.timeout_s}s"
            ) from exc
        except (httpx.HTTPError, ValueError) as exc:
            raise UnparsableOutputError(f"extraction backend failed: {exc}") from exc
        if not isinstance(payload, dict) or "text" not in payload:
            raise UnparsableOutputError("extraction backend answer carries no 'text'")
        yaml_text = _strip_fences(str(payload["text"]))
        try:
            query = parse_scene_query(yaml_text)
        except _PARSE_ERRORS as exc:
            raise UnparsableOutputError(f"backend YAML rejected: {exc}") from exc
        violations = validate_scene_query(query)
        if violations:
            raise UnparsableOutputError(
                f"backend YAML invalid: {violations[0].path}: {violations[0].message}"
            )
        return query


def parse_natural_language(text: str, backend) -> SceneQuery:
    """Dispatch one NL input to the configured backend."""
    if not text.strip():
        raise GrammarError("empty input", span=(0, 0))
    return backend.to_query(text)


# --- pipeline ---------------------------------------------------------------


@dataclass
class ServiceState:
    config: ServiceConfig
    store: GeoStore
    index: BundleIndex
    gazetteer: Gazetteer | None
    backend: BuiltinGrammarBackend | ExternalModelBackend


def _make_backend(config: ServiceConfig):
    if config.nl_mode == "external_model":
        return ExternalModelBackend(config.nl_endpoint, config.nl_timeout_s)
    return BuiltinGrammarBackend()


def _packaged_text(name: str) -> str:
    import importlib.resources

    return importlib.resources.files("geoscene").joinpath(name).read_text("utf-8")


def load_state(config: ServiceConfig) -> ServiceState:
    """Read the store, bundle index and gazetteer off disk per config.

    Unset bundle and gazetteer paths fall back to the packaged defaults; an
    unset store path gives an empty store.
    """
    config.validate()
    if config.store_path:
        store = load_objects(Path(config.store_path).read_text("utf-8"))
    else:
        store = GeoStore([])
    bundles_text = (
        Path(config.bundles_path).read_text("utf-8")
        if config.bundles_path
        else _packaged_text("data/bundles.yaml")
    )
    index = load_bundles(
        bundles_text,
        embedder=HashingEmbedder(),
        sidecar_path=config.vectors_path,
    )
    gazetteer_text = (
        Path(config.gazetteer_path).read_text("utf-8")
        if config.gazetteer_path
        else _packaged_text("data/gazetteer.geojson")
    )
    gazetteer = load_gazetteer(gazetteer_text)
    return ServiceState(
        config=config,
        store=store,
        index=index,
        gazetteer=gazetteer,
        backend=_make_backend(config),
    )


def _resolution_payload(resolved: ResolvedQuery) -> list[dict]:
    out = []
    for slot in resolved.slots:
        out.append(
            {
                "entity_id": slot.entity_id,
                "descriptor": slot.descriptor,
                "bundle_id": slot.bundle_id,
                "score": slot.score,
                "properties": [
                    {
                        "descriptor": p.descriptor,
                        "bundle_id": p.bundle_id,
                        "keys": list(p.keys),
                        "score": p.score,
                    }
                    for p in slot.properties
                ],
            }
        )
    return out


def run_query(
    state: ServiceState,
    text: str | None = None,
    yaml_text: str | None = None,
    bbox: tuple[float, float, float, float] | None = None,
    max_results: int | None = None,
) -> dict:
    """The full pipeline for one request; raises geoscene errors untranslated."""
    if (text is None) == (yaml_text is None):
        raise ValueError("exactly one of text/yaml must be given")

    timings: dict[str, float] = {}
    warnings: list[str] = []

    started = time.perf_counter()
    if text is not None:
        query = parse_natural_language(text, state.backend)
    else:
        query = parse_scene_query(yaml_text)
    timings["parse_ms"] = 1000.0 * (time.perf_counter() - started)

    violations = validate_scene_query(query)
    if violations:
        raise ValidationRejectedError(violations)

    started = time.perf_counter()
    resolved = resolve_query(
        query, state.index, alpha=state.config.alpha, tau=state.config.tau
    )
    region = resolve_area(
        query.area, state.gazetteer, fallback_bbox=bbox, store=state.store
    )
    resolved = resolved.with_region(region)
    timings["resolve_ms"] = 1000.0 * (time.perf_counter() - started)

    started = time.perf_counter()
    limit = max_results if max_results is not None else state.config.max_results
    results = execute(resolved, state.store, max_results=limit)
    timings["execute_ms"] = 1000.0 * (time.perf_counter() - started)
    if results.truncated:
        warnings.append(f"results truncated to {limit}")

    started = time.perf_counter()
    collection = results_to_geojson(results)
    for feature in collection["features"]:
        properties = feature["properties"]
        obj = state.store.get(properties["osm_kind"], properties["osm_id"])
        lat, lon = obj.centroid
        properties["centroid"] = {"lat": lat, "lon": lon}
        properties["links"] = build_external_links(lat, lon)
    timings["render_ms"] = 1000.0 * (time.perf_counter() - started)

    return {
        "status": "ok",
        "ir": serialize_scene_query(query),
        "resolution": _resolution_payload(resolved),
        "results": collection,
        "diagnostics": {
            "warnings": warnings,
            "timings_ms": timings,
            "candidate_counts": {str(k): v for k, v in results.candidate_counts.items()},
            "assignments": len(results.assignments),
            "truncated": results.truncated,
        },
    }


# --- HTTP layer -------------------------------------------------------------


class QueryRequest(BaseModel):
    text: str | None = None
    yaml: str | None = None
    bbox: list[float] | None = Field(default=None, min_length=4, max_length=4)
    max_results: int | None = Field(default=None, ge=1)


def _error_body(kind: str, message: str, **extra) -> dict:
    return {"status": "error", "kind": kind, "message": message, **extra}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="geoscene", version="0.1.0")

    @app.post("/v1/query")
    def query(request: QueryRequest) -> dict:
        if (request.text is None) == (request.yaml is None):
            raise HTTPException(400, detail="provide exactly one of text or yaml")
        bbox = None
        if request.bbox is not None:
            min_lat, min_lon, max_lat, max_lon = request.bbox
            if not (min_lat < max_lat and min_lon < max_lon):
                raise HTTPException(400, detail="bbox must be [min_lat, min_lon, max_lat, max_lon]")
            bbox = (min_lat, min_lon, max_lat, max_lon)
        try:
            return run_query(
                state,
                text=request.text,
                yaml_text=request.yaml,
                bbox=bbox,
                max_results=request.max_results,
            )
        except GrammarError as exc:
            raise HTTPException(
                422, detail=_error_body("grammar", str(exc), span=list(exc.span))
            )
        except _PARSE_ERRORS as exc:
            raise HTTPException(422, detail=_error_body("schema", str(exc)))
        except ValidationRejectedError as exc:
            raise HTTPException(
                422,
                detail=_error_body(
                    "validation",
                    str(exc),
                    violations=[
                        {"path": v.path, "message": v.message} for v in exc.violations
                    ],
                ),
            )
        except UnresolvableDescriptorError as exc:
            raise HTTPException(
                422,
                detail=_error_body(
                    "unresolvable",
                    str(exc),
                    slot_path=exc.slot_path,
                    descriptor=exc.descriptor,
                    suggestions=[
                        {"bundle_id": c.bundle_id, "score": c.hybrid_score}
                        for c in exc.candidates
                    ],
                ),
            )
        except UnknownAreaError as exc:
            raise HTTPException(
                422,
                detail=_error_body(
                    "unknown_area", str(exc), name=exc.name, suggestions=exc.suggestions
                ),
            )
        except UnparsableOutputError as exc:
            raise HTTPException(422, detail=_error_body("unparsable_output", str(exc)))
        except BackendTimeoutError as exc:
            raise HTTPException(504, detail=_error_body("timeout", str(exc)))

    @app.get("/v1/bundles")
    def bundles(q: str = Query(...), k: int = Query(default=5, ge=1, le=50)) -> dict:
        try:
            hits = search_bundles(state.index, q, k, alpha=state.config.alpha)
        except EmptyQueryError as exc:
            raise HTTPException(400, detail=_error_body("empty_query", str(exc)))
        return {
            "query": q,
            "hits": [
                {
                    "bundle_id": hit.bundle_id,
                    "canonical_name": state.index.bundle(hit.bundle_id).canonical_name,
                    "lexical_score": hit.lexical_score,
                    "semantic_score": hit.semantic_score,
                    "hybrid_score": hit.hybrid_score,
                }
                for hit in hits
            ],
        }

    @app.get("/v1/health")
    def health() -> dict:
        extent = state.store.extent()
        return {
            "status": "ok",
            "objects": len(state.store),
            "bundles": len(state.index),
            "gazetteer_areas": 0 if state.gazetteer is None else len(state.gazetteer),
            "nl_mode": state.backend.mode,
            "extent": None
            if extent is None
            else [extent.min_lat, extent.min_lon, extent.max_lat, extent.max_lon],
        }

    return app


def create_app_from_config(config: ServiceConfig) -> FastAPI:
    return create_app(load_state(config))
