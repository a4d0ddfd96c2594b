"""Scene-based geographic search: YAML queries over OpenStreetMap extracts."""

from geoscene.distance import Distance, parse_distance, resolve_relative_spatial_term
from geoscene.ir import (
    AreaSpec,
    EntitySpec,
    PropertyConstraint,
    RelationSpec,
    SceneQuery,
    parse_scene_query,
    serialize_scene_query,
    validate_scene_query,
)

__version__ = "0.1.0"

__all__ = [
    "AreaSpec",
    "Distance",
    "EntitySpec",
    "PropertyConstraint",
    "RelationSpec",
    "SceneQuery",
    "__version__",
    "parse_distance",
    "parse_scene_query",
    "resolve_relative_spatial_term",
    "serialize_scene_query",
    "validate_scene_query",
]
