"""Exception hierarchy shared across the package.

Every error raised by geoscene code derives from GeoSceneError so callers
can catch the whole family at service boundaries.
"""

from __future__ import annotations


class GeoSceneError(Exception):
    """Base class for all geoscene errors."""


# --- scene-query IR ---------------------------------------------------------


class QuerySyntaxError(GeoSceneError):
    """The input is not well-formed YAML."""


class QuerySchemaError(GeoSceneError):
    """The YAML is well-formed but does not fit the scene-query schema.

    The message names the offending path (e.g. ``entities[1].type``).
    """


class QueryReferenceError(GeoSceneError):
    """A relation points at an entity id that does not exist."""


class UnitError(GeoSceneError):
    """A distance string carries an unknown or missing unit token."""


class MagnitudeError(GeoSceneError):
    """A distance string carries no parseable number."""


class UnknownTermError(GeoSceneError):
    """A phrase is not in the relative spatial term table."""


# --- bundle index -----------------------------------------------------------


class BundleFormatError(GeoSceneError):
    """The bundle file is malformed or empty."""


class DuplicateBundleIdError(BundleFormatError):
    """Two bundles share the same id."""


class DimensionMismatchError(GeoSceneError):
    """Attached vectors disagree with the configured embedding dimension."""


class EmptyQueryError(GeoSceneError):
    """A search was issued with a blank query string."""


class UnresolvableDescriptorError(GeoSceneError):
    """A free-text descriptor could not be mapped to any bundle.

    Carries the slot path and the best rejected candidates so callers can
    surface near misses.
    """

    def __init__(self, slot_path: str, descriptor: str, candidates: list):
        self.slot_path = slot_path
        self.descriptor = descriptor
        self.candidates = candidates
        names = ", ".join(f"{c.bundle_id} ({c.hybrid_score:.3f})" for c in candidates)
        super().__init__(
            f"{slot_path}: no bundle for {descriptor!r}; nearest: {names or 'none'}"
        )


# --- geodata store ----------------------------------------------------------


class OsmXmlError(GeoSceneError):
    """The OSM XML document is not parseable."""


class GeoFormatError(GeoSceneError):
    """A gazetteer or object-dump file violates its documented layout."""


class UnknownAreaError(GeoSceneError):
    """A named search area is not in the gazetteer."""

    def __init__(self, name: str, suggestions: list[str]):
        self.name = name
        self.suggestions = suggestions
        hint = f"; did you mean: {', '.join(suggestions)}" if suggestions else ""
        super().__init__(f"unknown area {name!r}{hint}")


class UnsupportedRegionError(GeoSceneError):
    """The requested search region cannot be represented (e.g. polar caps)."""


# --- data generation --------------------------------------------------------


class SinkIOError(GeoSceneError):
    """Writing a dataset file failed."""


# --- evaluation -------------------------------------------------------------


class AlignmentError(GeoSceneError):
    """Prediction and gold files do not cover the same ids."""


# --- service ----------------------------------------------------------------


class BackendTimeoutError(GeoSceneError):
    """The external language-model backend did not answer in time."""


class UnparsableOutputError(GeoSceneError):
    """The external backend returned text that is not a valid scene query."""


class GrammarError(GeoSceneError):
    """The builtin grammar cannot match the input.

    span is the (start, end) character range of the part that failed.
    """

    def __init__(self, message: str, span: tuple[int, int]):
        self.span = span
        super().__init__(f"{message}: {span!r}")
