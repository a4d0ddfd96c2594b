"""Scoring predicted scene queries against gold ones.

Entities are paired greedily by name similarity, then every facet (area,
entity with and without properties, property, relation) is credited by the
rules below and micro-averaged over a dataset.  Anything the prediction adds
counts as hallucinated, anything it misses as omitted, and per-category
breakdowns come from the meta block carried next to each gold query.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distance import parse_distance
from .embeddings import EmbeddingProvider
from .errors import AlignmentError, GeoSceneError
from .ir import EntitySpec, PropertyConstraint, SceneQuery, parse_scene_query, validate_scene_query

SIMILARITY_THRESHOLD = 0.8
DISTANCE_REL_TOLERANCE = 0.01

FACETS = ("area", "entity", "entity_star", "property", "relation")


@dataclass(frozen=True)
class Prediction:
    """One model output, parsed if possible."""

    id: str
    raw_output: str
    parsed: SceneQuery | None = None

    @property
    def parse_ok(self) -> bool:
        return self.parsed is not None

    @classmethod
    def from_raw(cls, id: str, raw_output: str) -> Prediction:
        try:
            query = parse_scene_query(raw_output)
        except GeoSceneError:
            return cls(id=id, raw_output=raw_output)
        if validate_scene_query(query):
            return cls(id=id, raw_output=raw_output)
        return cls(id=id, raw_output=raw_output, parsed=query)


@dataclass(frozen=True)
class MatchOutcome:
    """Facet bookkeeping for one pred/gold pair.

    pairing maps gold entity id to pred entity id; it is a partial injection
    in both directions.  similarities carries the realized name similarity per
    pairing entry.
    """

    pairing: tuple[tuple[int, int], ...]
    similarities: tuple[float, ...]
    area_ok: bool
    gold_entities: int
    entity_star_hits: int
    entity_hits: int
    gold_properties: int
    property_hits: int
    gold_relations: int
    relation_hits: int
    hallucinated_entities: int
    omitted_entities: int
    hallucinated_properties: int
    omitted_properties: int
    hallucinated_relations: int

    def perfect(self) -> bool:
        return (
            self.area_ok
            and self.entity_hits == self.gold_entities
            and self.entity_star_hits == self.gold_entities
            and self.property_hits == self.gold_properties
            and self.relation_hits == self.gold_relations
            and self.hallucinated_entities == 0
            and self.hallucinated_properties == 0
            and self.hallucinated_relations == 0
        )


@dataclass(frozen=True)
class CategoryStat:
    total: int
    perfect: int

    @property
    def perfect_ratio(self) -> float:
        return 100.0 * self.perfect / self.total if self.total else 100.0


@dataclass(frozen=True)
class EvalReport:
    items: int
    parse_rate: float  # percent
    accuracies: dict[str, float]  # percent per facet
    omitted_entities: int
    hallucinated_entities: int
    omitted_properties: int
    hallucinated_properties: int
    categories: dict[str, CategoryStat]

    def to_dict(self) -> dict:
        return {
            "items": self.items,
            "parse_rate": self.parse_rate,
            "accuracies": dict(self.accuracies),
            "omitted_entities": self.omitted_entities,
            "hallucinated_entities": self.hallucinated_entities,
            "omitted_properties": self.omitted_properties,
            "hallucinated_properties": self.hallucinated_properties,
            "categories": {
                name: {
                    "total": stat.total,
                    "perfect": stat.perfect,
                    "perfect_ratio": stat.perfect_ratio,
                }
                for name, stat in sorted(self.categories.items())
            },
        }


# --- name matching ----------------------------------------------------------


def _normalize(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text.strip().casefold())
    folded = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(folded.split())


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.dot(a, b)) / norm


def match_names(a: str, b: str, embedder: EmbeddingProvider) -> tuple[bool, float]:
    """Name equivalence: normalized equality, else embedding cosine > 0.8."""
    if not a.strip() or not b.strip():
        return False, 0.0
    if _normalize(a) == _normalize(b):
        return True, 1.0
    vectors = embedder.encode([a, b])
    similarity = _cosine(vectors[0], vectors[1])
    return similarity > SIMILARITY_THRESHOLD, similarity


# --- property and relation equivalence --------------------------------------


def _property_values_equal(a: str, b: str) -> bool:
    if _normalize(a) == _normalize(b):
        return True
    try:
        if float(a) == float(b):
            return True
    except ValueError:
        pass
    try:
        return math.isclose(
            parse_distance(a).meters, parse_distance(b).meters, rel_tol=1e-9
        )
    except GeoSceneError:
        return False


def _property_matches(gold: PropertyConstraint, pred: PropertyConstraint) -> bool:
    return (
        _normalize(gold.name) == _normalize(pred.name)
        and gold.operator == pred.operator
        and _property_values_equal(gold.value, pred.value)
    )


def _cluster_fields_equal(gold: EntitySpec, pred: EntitySpec) -> bool:
    if gold.kind != pred.kind:
        return False
    if gold.kind != "cluster":
        return True
    if gold.min_count != pred.min_count:
        return False
    gold_spread = gold.max_spread.meters
    return abs(pred.max_spread.meters - gold_spread) <= DISTANCE_REL_TOLERANCE * gold_spread


# --- pairwise scoring -------------------------------------------------------


def score_pair(
    pred: SceneQuery, gold: SceneQuery, embedder: EmbeddingProvider
) -> MatchOutcome:
    """Score one prediction against its gold query."""
    # greedy pairing: best similarity first, ties by gold id then pred id
    candidates = []
    for g in gold.entities:
        for p in pred.entities:
            ok, similarity = match_names(g.name, p.name, embedder)
            if ok:
                candidates.append((-similarity, g.id, p.id))
    candidates.sort()
    paired_gold: dict[int, int] = {}
    used_pred: set[int] = set()
    similarities = []
    for neg_sim, g_id, p_id in candidates:
        if g_id in paired_gold or p_id in used_pred:
            continue
        paired_gold[g_id] = p_id
        used_pred.add(p_id)
        similarities.append(-neg_sim)

    gold_by_id = {e.id: e for e in gold.entities}
    pred_by_id = {e.id: e for e in pred.entities}

    entity_star_hits = len(paired_gold)
    entity_hits = 0
    property_hits = 0
    gold_properties = sum(len(e.properties) for e in gold.entities)
    matched_pred_properties = 0
    for g_id, p_id in paired_gold.items():
        g_entity = gold_by_id[g_id]
        p_entity = pred_by_id[p_id]
        unused_pred_props = list(p_entity.properties)
        all_props_ok = True
        for g_prop in g_entity.properties:
            hit = next(
                (p for p in unused_pred_props if _property_matches(g_prop, p)), None
            )
            if hit is None:
                all_props_ok = False
            else:
                unused_pred_props.remove(hit)
                property_hits += 1
                matched_pred_properties += 1
        if all_props_ok and _cluster_fields_equal(g_entity, p_entity):
            entity_hits += 1

    pred_properties = sum(len(e.properties) for e in pred.entities)
    hallucinated_properties = pred_properties - matched_pred_properties
    omitted_properties = gold_properties - property_hits

    # relations: endpoints travel through the pairing; distance is symmetric,
    # containment keeps its direction
    def relation_credited(g_rel) -> int | None:
        source = paired_gold.get(g_rel.source)
        target = paired_gold.get(g_rel.target)
        if source is None or target is None:
            return None
        for i, p_rel in enumerate(pred.relations):
            if i in used_pred_relations or p_rel.kind != g_rel.kind:
                continue
            if g_rel.kind == "contains":
                if (p_rel.source, p_rel.target) != (source, target):
                    continue
                return i
            if {p_rel.source, p_rel.target} != {source, target}:
                continue
            gold_m = g_rel.max_distance.meters
            if abs(p_rel.max_distance.meters - gold_m) <= DISTANCE_REL_TOLERANCE * gold_m:
                return i
        return None

    used_pred_relations: set[int] = set()
    relation_hits = 0
    for g_rel in gold.relations:
        hit = relation_credited(g_rel)
        if hit is not None:
            used_pred_relations.add(hit)
            relation_hits += 1

    area_ok, _ = _area_matches(pred, gold, embedder)

    return MatchOutcome(
        pairing=tuple(sorted(paired_gold.items())),
        similarities=tuple(similarities),
        area_ok=area_ok,
        gold_entities=len(gold.entities),
        entity_star_hits=entity_star_hits,
        entity_hits=entity_hits,
        gold_properties=gold_properties,
        property_hits=property_hits,
        gold_relations=len(gold.relations),
        relation_hits=relation_hits,
        hallucinated_entities=len(pred.entities) - len(used_pred),
        omitted_entities=len(gold.entities) - len(paired_gold),
        hallucinated_properties=hallucinated_properties,
        omitted_properties=omitted_properties,
        hallucinated_relations=len(pred.relations) - relation_hits,
    )


def _area_matches(
    pred: SceneQuery, gold: SceneQuery, embedder: EmbeddingProvider
) -> tuple[bool, float]:
    if gold.area.kind != pred.area.kind:
        return False, 0.0
    if gold.area.kind == "bbox":
        return True, 1.0
    return match_names(gold.area.name, pred.area.name, embedder)


# --- dataset evaluation -----------------------------------------------------


def categories_for_meta(meta: dict) -> list[str]:
    """Breakdown buckets an item belongs to, from its meta block."""
    buckets = []
    area_kind = meta.get("area_kind")
    if area_kind == "named":
        buckets.append("named_area")
    elif area_kind == "bbox":
        buckets.append("bbox")
    if meta.get("has_properties"):
        buckets.append("properties")
    if meta.get("has_typos_style"):
        buckets.append("typos")
    if meta.get("has_grammar_style"):
        buckets.append("grammar_mistakes")
    if meta.get("uses_relative_term"):
        buckets.append("relative_terms")
    kinds = meta.get("relation_kinds") or []
    if "contains" in kinds:
        buckets.append("contains")
    if "distance" in kinds:
        buckets.append("distance")
    if meta.get("non_latin_area"):
        buckets.append("non_latin_area")
    count = meta.get("entity_count")
    if isinstance(count, int):
        buckets.append(f"entities_{count}")
    return buckets


def evaluate_dataset(
    preds: list[Prediction],
    golds: dict[str, SceneQuery],
    metas: dict[str, dict],
    embedder: EmbeddingProvider,
) -> EvalReport:
    """Micro-averaged facet accuracies plus per-category perfect ratios.

    Unparsable predictions score zero on every facet and push their gold
    entities, properties and relations into the omitted counts.
    """
    pred_ids = {p.id for p in preds}
    if len(pred_ids) != len(preds):
        raise AlignmentError("duplicate prediction ids")
    missing = sorted(set(golds) - pred_ids)
    if missing:
        raise AlignmentError(f"predictions missing for ids {missing[:5]}")
    extra = sorted(pred_ids - set(golds))
    if extra:
        raise AlignmentError(f"predictions cover unknown ids {extra[:5]}")

    by_id = {p.id: p for p in preds}
    parsed = 0
    area_hits = 0
    entity_hits = entity_star_hits = gold_entities = 0
    property_hits = gold_properties = 0
    relation_hits = gold_relations = 0
    omitted_entities = hallucinated_entities = 0
    omitted_properties = hallucinated_properties = 0
    totals: dict[str, int] = {}
    perfects: dict[str, int] = {}

    for item_id in sorted(golds):
        gold = golds[item_id]
        pred = by_id[item_id]
        item_gold_entities = len(gold.entities)
        item_gold_properties = sum(len(e.properties) for e in gold.entities)
        gold_entities += item_gold_entities
        gold_properties += item_gold_properties
        gold_relations += len(gold.relations)

        if pred.parse_ok:
            parsed += 1
            outcome = score_pair(pred.parsed, gold, embedder)
            area_hits += outcome.area_ok
            entity_hits += outcome.entity_hits
            entity_star_hits += outcome.entity_star_hits
            property_hits += outcome.property_hits
            relation_hits += outcome.relation_hits
            omitted_entities += outcome.omitted_entities
            hallucinated_entities += outcome.hallucinated_entities
            omitted_properties += outcome.omitted_properties
            hallucinated_properties += outcome.hallucinated_properties
            is_perfect = outcome.perfect()
        else:
            omitted_entities += item_gold_entities
            omitted_properties += item_gold_properties
            is_perfect = False

        for bucket in categories_for_meta(metas.get(item_id, {})):
            totals[bucket] = totals.get(bucket, 0) + 1
            perfects[bucket] = perfects.get(bucket, 0) + is_perfect

    def percent(hits: int, denominator: int) -> float:
        return 100.0 * hits / denominator if denominator else 100.0

    items = len(golds)
    return EvalReport(
        items=items,
        parse_rate=percent(parsed, items),
        accuracies={
            "area": percent(area_hits, items),
            "entity": percent(entity_hits, gold_entities),
            "entity_star": percent(entity_star_hits, gold_entities),
            "property": percent(property_hits, gold_properties),
            "relation": percent(relation_hits, gold_relations),
        },
        omitted_entities=omitted_entities,
        hallucinated_entities=hallucinated_entities,
        omitted_properties=omitted_properties,
        hallucinated_properties=hallucinated_properties,
        categories={
            name: CategoryStat(total=totals[name], perfect=perfects.get(name, 0))
            for name in totals
        },
    )


# --- file loading -----------------------------------------------------------


def load_gold_file(path: str | Path) -> tuple[dict[str, SceneQuery], dict[str, dict]]:
    """Read a gold file: one JSON object {id, yaml, meta} per line."""
    golds: dict[str, SceneQuery] = {}
    metas: dict[str, dict] = {}
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            node = json.loads(line)
            item_id = node["id"]
            if item_id in golds:
                raise AlignmentError(f"{path}:{number}: duplicate gold id {item_id!r}")
            golds[item_id] = parse_scene_query(node["yaml"])
            metas[item_id] = node.get("meta", {})
    return golds, metas


def load_pred_file(path: str | Path) -> list[Prediction]:
    """Read predictions: {id, raw_output} per line ("yaml" accepted too)."""
    preds = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            node = json.loads(line)
            raw = node.get("raw_output", node.get("yaml", ""))
            preds.append(Prediction.from_raw(node["id"], raw))
    return preds
