"""The YAML scene-query intermediate representation.

A scene query describes a search area, one or more entities (with optional
property constraints) and spatial relations between them.  The YAML layout
is the contract between the language-model side and the execution engine:

    area:
      type: bbox            # or: type: area / value: <name>
    entities:
    - id: 0
      name: church
      properties:
      - name: levels
        operator: '>'
        value: '56'
      type: nwr
    relations:
    - source: 0
      target: 1
      type: distance
      value: 16460 m

Canonical serialization sorts keys alphabetically inside each mapping,
orders entities by id and relations by (source, target, type), uses
two-space indentation, and writes distance values as "<magnitude> <unit>".
For contains relations the source is the container and the target the
contained entity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Literal

import yaml

from geoscene.distance import Distance, parse_distance
from geoscene.errors import (
    GeoSceneError,
    QueryReferenceError,
    QuerySchemaError,
    QuerySyntaxError,
)

_Loader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)

AreaKind = Literal["named", "bbox"]
EntityKind = Literal["nwr", "cluster"]
RelationKind = Literal["distance", "contains"]

PROPERTY_OPERATORS = ("=", "~", ">", "<", ">=", "<=")
NUMERIC_OPERATORS = (">", "<", ">=", "<=")

_LEADING_NUMBER = re.compile(r"^\s*-?\d+(\.\d+)?")


@dataclass(frozen=True)
class AreaSpec:
    """Search area: a named place or the caller-supplied bounding box."""

    kind: AreaKind
    name: str | None = None


@dataclass(frozen=True)
class PropertyConstraint:
    """A constraint on one attribute of an entity, e.g. levels > 56."""

    name: str
    operator: str
    value: str


@dataclass(frozen=True)
class EntitySpec:
    """One searched object: a single node/way/relation or a cluster."""

    id: int
    name: str
    kind: EntityKind = "nwr"
    properties: tuple[PropertyConstraint, ...] = ()
    min_count: int | None = None
    max_spread: Distance | None = None

    def __post_init__(self):
        object.__setattr__(self, "properties", tuple(self.properties))


@dataclass(frozen=True)
class RelationSpec:
    """A spatial constraint between two entities.

    kind="distance" limits the two entities to max_distance of each other;
    kind="contains" requires the target to lie inside the source's polygon.
    """

    source: int
    target: int
    kind: RelationKind
    max_distance: Distance | None = None


@dataclass(frozen=True)
class SceneQuery:
    """A full scene query: area, entities and relations."""

    area: AreaSpec
    entities: tuple[EntitySpec, ...] = ()
    relations: tuple[RelationSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "relations", tuple(self.relations))

    def entity_ids(self) -> set[int]:
        return {e.id for e in self.entities}

    def entity(self, entity_id: int) -> EntitySpec:
        for e in self.entities:
            if e.id == entity_id:
                return e
        raise KeyError(entity_id)


@dataclass(frozen=True)
class Violation:
    """One invariant failure found by validate_scene_query."""

    code: str  # reference | duplicate-id | shape | value | empty
    path: str
    message: str


# --- parsing ----------------------------------------------------------------


def _require_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise QuerySchemaError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _require_list(node, path: str) -> list:
    if not isinstance(node, list):
        raise QuerySchemaError(f"{path}: expected a list, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set[str], path: str):
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise QuerySchemaError(f"{path}: unknown key(s) {', '.join(map(str, unknown))}")


def _text_value(node, path: str) -> str:
    """Coerce a YAML scalar to text; OSM-style booleans become yes/no."""
    if isinstance(node, bool):
        return "yes" if node else "no"
    if isinstance(node, (int, float)):
        return f"{node:g}" if isinstance(node, float) else str(node)
    if isinstance(node, str):
        return node
    raise QuerySchemaError(f"{path}: expected a scalar, got {type(node).__name__}")


def _parse_distance_field(node, path: str) -> Distance:
    if not isinstance(node, str):
        raise QuerySchemaError(
            f"{path}: distances must be text with a unit, got {type(node).__name__}"
        )
    try:
        return parse_distance(node)
    except GeoSceneError as exc:
        raise QuerySchemaError(f"{path}: {exc}") from exc


def _parse_area(node, path: str) -> AreaSpec:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, {"type", "value", "name"}, path)
    kind = mapping.get("type")
    if kind in ("area", "named"):
        raw = mapping.get("value", mapping.get("name"))
        if not isinstance(raw, str) or not raw.strip():
            raise QuerySchemaError(f"{path}.value: named area needs a name")
        return AreaSpec(kind="named", name=raw)
    if kind == "bbox":
        # The model-side contract may fill value with the literal "bbox".
        extra = mapping.get("value", mapping.get("name"))
        if extra not in (None, "bbox"):
            raise QuerySchemaError(f"{path}.value: bbox area carries no name")
        return AreaSpec(kind="bbox")
    raise QuerySchemaError(f"{path}.type: expected area or bbox, got {kind!r}")


def _parse_property(node, path: str) -> PropertyConstraint:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, {"name", "operator", "value"}, path)
    for key in ("name", "operator", "value"):
        if key not in mapping:
            raise QuerySchemaError(f"{path}.{key}: missing")
    name = _text_value(mapping["name"], f"{path}.name")
    operator = mapping["operator"]
    if not isinstance(operator, str):
        raise QuerySchemaError(f"{path}.operator: expected text")
    value = _text_value(mapping["value"], f"{path}.value")
    return PropertyConstraint(name=name, operator=operator, value=value)


def _parse_entity(node, path: str) -> EntitySpec:
    mapping = _require_mapping(node, path)
    _reject_unknown(
        mapping, {"id", "name", "type", "properties", "min_count", "max_spread"}, path
    )
    if "id" not in mapping:
        raise QuerySchemaError(f"{path}.id: missing")
    entity_id = mapping["id"]
    if not isinstance(entity_id, int) or isinstance(entity_id, bool):
        raise QuerySchemaError(f"{path}.id: expected an integer")
    if "name" not in mapping:
        raise QuerySchemaError(f"{path}.name: missing")
    name = _text_value(mapping["name"], f"{path}.name")
    kind = mapping.get("type")
    if kind not in ("nwr", "cluster"):
        raise QuerySchemaError(f"{path}.type: expected nwr or cluster, got {kind!r}")
    props = tuple(
        _parse_property(p, f"{path}.properties[{i}]")
        for i, p in enumerate(_require_list(mapping.get("properties", []), f"{path}.properties"))
    )
    min_count = mapping.get("min_count")
    if min_count is not None and (not isinstance(min_count, int) or isinstance(min_count, bool)):
        raise QuerySchemaError(f"{path}.min_count: expected an integer")
    max_spread = mapping.get("max_spread")
    if max_spread is not None:
        max_spread = _parse_distance_field(max_spread, f"{path}.max_spread")
    return EntitySpec(
        id=entity_id,
        name=name,
        kind=kind,
        properties=props,
        min_count=min_count,
        max_spread=max_spread,
    )


def _parse_relation(node, path: str) -> RelationSpec:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, {"source", "target", "type", "value"}, path)
    for key in ("source", "target", "type"):
        if key not in mapping:
            raise QuerySchemaError(f"{path}.{key}: missing")
    ends = []
    for key in ("source", "target"):
        value = mapping[key]
        if not isinstance(value, int) or isinstance(value, bool):
            raise QuerySchemaError(f"{path}.{key}: expected an entity id")
        ends.append(value)
    kind = mapping["type"]
    if kind == "dist":  # model-side short form
        kind = "distance"
    if kind not in ("distance", "contains"):
        raise QuerySchemaError(f"{path}.type: expected distance or contains, got {kind!r}")
    max_distance = None
    raw = mapping.get("value")
    if kind == "distance":
        if raw is None:
            raise QuerySchemaError(f"{path}.value: distance relation needs a value")
        max_distance = _parse_distance_field(raw, f"{path}.value")
    elif raw is not None:
        raise QuerySchemaError(f"{path}.value: contains relation carries no distance")
    return RelationSpec(source=ends[0], target=ends[1], kind=kind, max_distance=max_distance)


def parse_scene_query(yaml_text: str) -> SceneQuery:
    """Parse YAML text into a validated SceneQuery.

    Raises QuerySyntaxError for malformed YAML, QuerySchemaError for
    missing/mistyped/unknown fields (the message names the path) and
    QueryReferenceError for relations pointing at unknown entity ids.
    """
    try:
        root = yaml.load(yaml_text, Loader=_Loader)
    except (yaml.YAMLError, RecursionError) as exc:
        raise QuerySyntaxError(f"not valid YAML: {exc}") from exc
    mapping = _require_mapping(root, "query")
    _reject_unknown(mapping, {"area", "entities", "relations"}, "query")
    if "area" not in mapping:
        raise QuerySchemaError("query.area: missing")
    area = _parse_area(mapping["area"], "area")
    entities = tuple(
        _parse_entity(e, f"entities[{i}]")
        for i, e in enumerate(_require_list(mapping.get("entities", []), "entities"))
    )
    relations = tuple(
        _parse_relation(r, f"relations[{i}]")
        for i, r in enumerate(_require_list(mapping.get("relations") or [], "relations"))
    )
    query = SceneQuery(area=area, entities=entities, relations=relations)
    violations = validate_scene_query(query)
    if violations:
        refs = [v for v in violations if v.code == "reference"]
        summary = "; ".join(f"{v.path}: {v.message}" for v in violations)
        if refs:
            raise QueryReferenceError(summary)
        raise QuerySchemaError(summary)
    return query


# --- validation -------------------------------------------------------------


def validate_scene_query(query: SceneQuery) -> list[Violation]:
    """Check every type invariant; returns an empty list iff the query is valid."""
    violations: list[Violation] = []

    if not query.entities:
        violations.append(Violation("empty", "entities", "at least one entity required"))

    seen_ids: set[int] = set()
    for i, entity in enumerate(query.entities):
        path = f"entities[{i}]"
        if entity.id < 0:
            violations.append(Violation("value", f"{path}.id", "entity id must be non-negative"))
        if entity.id in seen_ids:
            violations.append(Violation("duplicate-id", f"{path}.id", f"duplicate entity id {entity.id}"))
        seen_ids.add(entity.id)
        if not entity.name.strip():
            violations.append(Violation("empty", f"{path}.name", "descriptor must be non-empty"))
        if entity.kind == "cluster":
            if entity.min_count is None or entity.max_spread is None:
                violations.append(
                    Violation("shape", path, "cluster entity needs min_count and max_spread")
                )
            elif entity.min_count < 2:
                violations.append(
                    Violation("value", f"{path}.min_count", "cluster min_count must be >= 2")
                )
        else:
            if entity.min_count is not None or entity.max_spread is not None:
                violations.append(
                    Violation("shape", path, "nwr entity carries no cluster fields")
                )
        for j, prop in enumerate(entity.properties):
            prop_path = f"{path}.properties[{j}]"
            if not prop.name.strip():
                violations.append(Violation("empty", f"{prop_path}.name", "property name must be non-empty"))
            if prop.operator not in PROPERTY_OPERATORS:
                violations.append(
                    Violation("value", f"{prop_path}.operator", f"unknown operator {prop.operator!r}")
                )
            elif prop.operator in NUMERIC_OPERATORS and not _LEADING_NUMBER.match(prop.value):
                violations.append(
                    Violation(
                        "value",
                        f"{prop_path}.value",
                        f"operator {prop.operator!r} needs a numeric value, got {prop.value!r}",
                    )
                )

    ids = {e.id for e in query.entities}
    for i, rel in enumerate(query.relations):
        path = f"relations[{i}]"
        for end, value in (("source", rel.source), ("target", rel.target)):
            if value not in ids:
                violations.append(
                    Violation("reference", f"{path}.{end}", f"unknown entity id {value}")
                )
        if rel.source == rel.target:
            violations.append(
                Violation("reference", path, "source and target must differ")
            )
        if rel.kind == "contains" and rel.max_distance is not None:
            violations.append(
                Violation("shape", f"{path}.value", "contains relation carries no distance")
            )
        if rel.kind == "distance" and rel.max_distance is None:
            violations.append(
                Violation("shape", f"{path}.value", "distance relation needs a value")
            )

    return violations


# --- serialization ----------------------------------------------------------


def _area_node(area: AreaSpec) -> dict:
    if area.kind == "named":
        return {"type": "area", "value": area.name}
    return {"type": "bbox"}


def _entity_node(entity: EntitySpec) -> dict:
    node: dict = {"id": entity.id, "name": entity.name, "type": entity.kind}
    if entity.properties:
        node["properties"] = [
            {"name": p.name, "operator": p.operator, "value": p.value}
            for p in entity.properties
        ]
    if entity.kind == "cluster":
        node["min_count"] = entity.min_count
        node["max_spread"] = entity.max_spread.original_text
    return node


def _relation_node(rel: RelationSpec) -> dict:
    node: dict = {"source": rel.source, "target": rel.target, "type": rel.kind}
    if rel.kind == "distance":
        node["value"] = rel.max_distance.original_text
    return node


def serialize_scene_query(query: SceneQuery) -> str:
    """Render a SceneQuery in canonical YAML (see module docstring).

    Entities are ordered by id and relations by (source, target, type);
    parsing the output yields an equal query for any canonically ordered
    input, and re-serializing is byte-stable.
    """
    root = {
        "area": _area_node(query.area),
        "entities": [
            _entity_node(e) for e in sorted(query.entities, key=lambda e: e.id)
        ],
        "relations": [
            _relation_node(r)
            for r in sorted(query.relations, key=lambda r: (r.source, r.target, r.kind))
        ],
    }
    return yaml.safe_dump(
        root,
        sort_keys=True,
        default_flow_style=False,
        allow_unicode=True,
        width=4096,
    )
