"""Tag-bundle index: hybrid lexical+semantic search over descriptors.

Bundles group OSM tag filters under natural-language descriptors ("tram",
"light rail" -> railway=tram|subway|light_rail).  Free-text entity and
property names from scene queries resolve to their best-matching bundle via
a BM25 inverted index fused with embedding cosine similarity.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import yaml

from geoscene.embeddings import DEFAULT_DIM, EmbeddingProvider, HashingEmbedder, load_vector_sidecar
from geoscene.errors import (
    BundleFormatError,
    DimensionMismatchError,
    DuplicateBundleIdError,
    EmptyQueryError,
    UnresolvableDescriptorError,
)
from geoscene.geometry import Region
from geoscene.ir import SceneQuery
from geoscene.tags import TagAtom, TagFilter, evaluate_tag_filter, property_value_matches

DEFAULT_ALPHA = 0.5
DEFAULT_TAU = 0.35

BM25_K1 = 1.2
BM25_B = 0.75

AppliesTo = Literal["entity", "property", "both"]

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, fold diacritics to ASCII where possible, split on
    non-alphanumerics."""
    folded = unicodedata.normalize("NFKD", text.casefold())
    folded = "".join(c for c in folded if not unicodedata.combining(c))
    return _TOKEN_RE.findall(folded)


@dataclass(frozen=True)
class Bundle:
    id: str
    canonical_name: str
    descriptors: tuple[str, ...]
    filter: TagFilter
    applies_to: AppliesTo = "entity"

    def __post_init__(self):
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        if not self.descriptors:
            raise BundleFormatError(f"bundle {self.id!r} has no descriptors")


@dataclass(frozen=True)
class SearchHit:
    bundle_id: str
    lexical_score: float
    semantic_score: float
    hybrid_score: float


def hybrid_score(lexical: float, semantic: float, alpha: float) -> float:
    """Fuse a BM25 score and a cosine: α·(lex/(lex+1)) + (1−α)·max(0, sem)."""
    return alpha * (lexical / (lexical + 1.0)) + (1.0 - alpha) * max(0.0, semantic)


class BundleIndex:
    """Immutable search index over a bundle list.

    The lexical side is BM25 (k1=1.2, b=0.75) over one document per bundle
    (canonical name + all descriptors).  The semantic side embeds each
    descriptor separately and takes the best cosine per bundle, unless a
    sidecar supplied one precomputed vector per bundle.
    """

    def __init__(
        self,
        bundles: list[Bundle],
        embedder: EmbeddingProvider | None = None,
        bundle_vectors: dict[str, np.ndarray] | None = None,
    ):
        if not bundles:
            raise BundleFormatError("empty bundle list")
        self.embedder = embedder or HashingEmbedder(DEFAULT_DIM)
        self.dim = self.embedder.dim
        self.bundles = tuple(sorted(bundles, key=lambda b: b.id))
        seen: set[str] = set()
        for bundle in self.bundles:
            if bundle.id in seen:
                raise DuplicateBundleIdError(f"duplicate bundle id {bundle.id!r}")
            seen.add(bundle.id)
        self._position = {b.id: i for i, b in enumerate(self.bundles)}

        # lexical index
        docs = [
            tokenize(b.canonical_name) + [t for d in b.descriptors for t in tokenize(d)]
            for b in self.bundles
        ]
        self._doc_len = np.array([max(1, len(d)) for d in docs], dtype=np.float64)
        self._avg_len = float(self._doc_len.mean())
        postings: dict[str, dict[int, int]] = {}
        for pos, tokens in enumerate(docs):
            for token in tokens:
                postings.setdefault(token, {}).setdefault(pos, 0)
                postings[token][pos] += 1
        n = len(self.bundles)
        self._postings: dict[str, tuple[np.ndarray, np.ndarray, float]] = {}
        for token, per_doc in postings.items():
            positions = np.fromiter(per_doc.keys(), dtype=np.int64)
            tfs = np.fromiter(per_doc.values(), dtype=np.float64)
            df = len(per_doc)
            idf = float(np.log(1.0 + (n - df + 0.5) / (df + 0.5)))
            self._postings[token] = (positions, tfs, idf)

        # semantic rows, grouped contiguously per bundle
        if bundle_vectors is not None:
            missing = [b.id for b in self.bundles if b.id not in bundle_vectors]
            if missing:
                raise BundleFormatError(f"sidecar missing vectors for {missing}")
            rows = []
            for b in self.bundles:
                vec = np.asarray(bundle_vectors[b.id], dtype=np.float32)
                if vec.shape != (self.dim,):
                    raise DimensionMismatchError(
                        f"vector for {b.id!r} has dim {vec.size}, index expects {self.dim}"
                    )
                rows.append(vec)
            self._rows = np.stack(rows)
            self._row_starts = np.arange(len(self.bundles) + 1)
        else:
            texts: list[str] = []
            starts = [0]
            for b in self.bundles:
                texts.extend([b.canonical_name, *b.descriptors])
                starts.append(len(texts))
            self._rows = self.embedder.encode(texts)
            self._row_starts = np.array(starts)
        norms = np.linalg.norm(self._rows, axis=1, keepdims=True)
        self._rows = np.divide(self._rows, norms, where=norms > 0)

    def __len__(self) -> int:
        return len(self.bundles)

    def bundle(self, bundle_id: str) -> Bundle:
        return self.bundles[self._position[bundle_id]]

    def _lexical(self, tokens: list[str]) -> np.ndarray:
        scores = np.zeros(len(self.bundles))
        for token in tokens:
            entry = self._postings.get(token)
            if entry is None:
                continue
            positions, tfs, idf = entry
            denom = tfs + BM25_K1 * (1 - BM25_B + BM25_B * self._doc_len[positions] / self._avg_len)
            scores[positions] += idf * tfs * (BM25_K1 + 1) / denom
        return scores

    def _semantic(self, query_vectors: np.ndarray) -> np.ndarray:
        """Per-bundle best cosine for each query row -> (m, n_bundles)."""
        sims = query_vectors @ self._rows.T
        groups = np.maximum.reduceat(sims, self._row_starts[:-1], axis=1)
        return groups

    def _mask(self, applies_to: str | None) -> np.ndarray | None:
        if applies_to is None:
            return None
        allowed = {applies_to, "both"}
        return np.array([b.applies_to in allowed for b in self.bundles])


def _top_hits(
    index: BundleIndex,
    lexical: np.ndarray,
    semantic: np.ndarray,
    hybrid: np.ndarray,
    k: int,
) -> list[SearchHit]:
    n = hybrid.size
    if k < n:
        cut = np.argpartition(-hybrid, k - 1)[:k]
        threshold = hybrid[cut].min()
        candidates = np.flatnonzero(hybrid >= threshold)
    else:
        candidates = np.arange(n)
    candidates = candidates[hybrid[candidates] != -np.inf]  # applies_to mask
    order = sorted(candidates.tolist(), key=lambda pos: (-hybrid[pos], index.bundles[pos].id))
    return [
        SearchHit(
            bundle_id=index.bundles[pos].id,
            lexical_score=float(lexical[pos]),
            semantic_score=float(semantic[pos]),
            hybrid_score=float(hybrid[pos]),
        )
        for pos in order[:k]
    ]


def search_many(
    index: BundleIndex,
    queries: list[str],
    k: int,
    alpha: float = DEFAULT_ALPHA,
    applies_to: str | None = None,
) -> list[list[SearchHit]]:
    """Batched search_bundles; one GEMM for the whole query list."""
    if k < 1:
        raise ValueError("k must be >= 1")
    token_lists = []
    for query in queries:
        tokens = tokenize(query)
        if not query.strip():
            raise EmptyQueryError("empty query text")
        token_lists.append(tokens)
    lexical = np.stack([index._lexical(tokens) for tokens in token_lists])
    semantic = index._semantic(index.embedder.encode(queries))
    hybrid = alpha * (lexical / (lexical + 1.0)) + (1.0 - alpha) * np.maximum(semantic, 0.0)
    mask = index._mask(applies_to)
    if mask is not None:
        hybrid = np.where(mask, hybrid, -np.inf)
    return [
        _top_hits(index, lexical[i], semantic[i], hybrid[i], k)
        for i in range(len(queries))
    ]


def search_bundles(
    index: BundleIndex,
    query_text: str,
    k: int,
    alpha: float = DEFAULT_ALPHA,
    applies_to: str | None = None,
) -> list[SearchHit]:
    """Top-k bundles by hybrid score, ties broken by bundle id ascending."""
    return search_many(index, [query_text], k, alpha, applies_to)[0]


# --- bundle file loading ----------------------------------------------------

_ATOM_OPS = {"equals", "matches", "exists"}


def _parse_atom(node, where: str) -> TagAtom:
    if not isinstance(node, dict):
        raise BundleFormatError(f"{where}: atom must be a mapping")
    key = node.get("key")
    op = node.get("op", "equals")
    if not isinstance(key, str) or not key:
        raise BundleFormatError(f"{where}: atom needs a key")
    if op not in _ATOM_OPS:
        raise BundleFormatError(f"{where}: unknown op {op!r}")
    value = node.get("value")
    if isinstance(value, bool):
        value = "yes" if value else "no"
    elif value is not None and not isinstance(value, str):
        value = str(value)
    if op in ("equals", "matches") and value is None:
        raise BundleFormatError(f"{where}: {op} atom needs a value")
    return TagAtom(key=key, op=op, value=value)


def _parse_bundle(node, where: str) -> Bundle:
    if not isinstance(node, dict):
        raise BundleFormatError(f"{where}: bundle must be a mapping")
    for field_name in ("id", "canonical_name", "descriptors", "filters"):
        if field_name not in node:
            raise BundleFormatError(f"{where}: missing {field_name}")
    descriptors = node["descriptors"]
    if not isinstance(descriptors, list) or not all(isinstance(d, str) for d in descriptors):
        raise BundleFormatError(f"{where}: descriptors must be a list of strings")
    applies_to = node.get("applies_to", "entity")
    if applies_to not in ("entity", "property", "both"):
        raise BundleFormatError(f"{where}: bad applies_to {applies_to!r}")
    raw_groups = node["filters"]
    if not isinstance(raw_groups, list) or not raw_groups:
        raise BundleFormatError(f"{where}: filters must be a non-empty list of groups")
    groups = []
    for gi, group in enumerate(raw_groups):
        if not isinstance(group, list) or not group:
            raise BundleFormatError(f"{where}.filters[{gi}]: group must be a non-empty list")
        groups.append(tuple(_parse_atom(a, f"{where}.filters[{gi}][{ai}]") for ai, a in enumerate(group)))
    return Bundle(
        id=str(node["id"]),
        canonical_name=str(node["canonical_name"]),
        descriptors=tuple(descriptors),
        filter=TagFilter(groups=tuple(groups)),
        applies_to=applies_to,
    )


def load_bundles(
    source: str,
    embedder: EmbeddingProvider | None = None,
    sidecar_path: str | None = None,
) -> BundleIndex:
    """Build a BundleIndex from bundle-file YAML text.

    The file is a YAML list of {id, canonical_name, descriptors, applies_to,
    filters: [[{key, op, value}]]}.  With sidecar_path, precomputed vectors
    (one per bundle id) replace the embedder's descriptor vectors; their
    dimension must match the embedder's.
    """
    try:
        root = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise BundleFormatError(f"not valid YAML: {exc}") from exc
    if not isinstance(root, list) or not root:
        raise BundleFormatError("bundle file must be a non-empty YAML list")
    bundles = [_parse_bundle(node, f"bundles[{i}]") for i, node in enumerate(root)]
    vectors = None
    if sidecar_path is not None:
        dim, vectors = load_vector_sidecar(sidecar_path)
        want = (embedder.dim if embedder is not None else DEFAULT_DIM)
        if dim != want:
            raise DimensionMismatchError(f"sidecar dim {dim} != index dim {want}")
    return BundleIndex(bundles, embedder=embedder, bundle_vectors=vectors)


# --- query resolution -------------------------------------------------------


@dataclass(frozen=True)
class ResolvedProperty:
    """A property constraint with its descriptor mapped to concrete tag keys."""

    descriptor: str
    bundle_id: str
    keys: tuple[str, ...]
    operator: str
    value: str
    score: float

    def matches(self, tags: dict[str, str]) -> bool:
        return any(
            key in tags and property_value_matches(self.operator, self.value, tags[key])
            for key in self.keys
        )


@dataclass(frozen=True)
class ResolvedSlot:
    entity_id: int
    descriptor: str
    bundle_id: str
    filter: TagFilter
    score: float
    kind: Literal["nwr", "cluster"] = "nwr"
    min_count: int | None = None
    max_spread_m: float | None = None
    properties: tuple[ResolvedProperty, ...] = ()

    def matches(self, tags: dict[str, str]) -> bool:
        return evaluate_tag_filter(self.filter, tags) and all(
            p.matches(tags) for p in self.properties
        )


@dataclass(frozen=True)
class ResolvedRelation:
    source: int
    target: int
    kind: Literal["distance", "contains"]
    max_distance_m: float | None = None


@dataclass(frozen=True)
class ResolvedQuery:
    """A scene query with every descriptor replaced by a tag bundle.

    The region is attached later (resolve_area needs the gazetteer); slots
    keep the SceneQuery entity ids.
    """

    slots: tuple[ResolvedSlot, ...]
    relations: tuple[ResolvedRelation, ...]
    region: Region | None = None

    def slot(self, entity_id: int) -> ResolvedSlot:
        for slot in self.slots:
            if slot.entity_id == entity_id:
                return slot
        raise KeyError(entity_id)

    def with_region(self, region: Region) -> ResolvedQuery:
        return replace(self, region=region)


def _resolve_descriptor(
    index: BundleIndex,
    text: str,
    path: str,
    applies_to: str,
    alpha: float,
    tau: float,
) -> SearchHit:
    hits = search_bundles(index, text, k=3, alpha=alpha, applies_to=applies_to)
    if not hits or hits[0].hybrid_score < tau:
        raise UnresolvableDescriptorError(path, text, hits)
    return hits[0]


def resolve_query(
    q: SceneQuery,
    index: BundleIndex,
    alpha: float = DEFAULT_ALPHA,
    tau: float = DEFAULT_TAU,
) -> ResolvedQuery:
    """Replace every entity/property name with its top-1 bundle.

    Sub-threshold descriptors raise UnresolvableDescriptorError carrying the
    slot path and the rejected near misses; nothing falls back silently.
    """
    slots = []
    for i, entity in enumerate(sorted(q.entities, key=lambda e: e.id)):
        hit = _resolve_descriptor(
            index, entity.name, f"entities[{i}].name", "entity", alpha, tau
        )
        properties = []
        for j, prop in enumerate(entity.properties):
            prop_hit = _resolve_descriptor(
                index, prop.name, f"entities[{i}].properties[{j}].name", "property", alpha, tau
            )
            prop_bundle = index.bundle(prop_hit.bundle_id)
            keys = tuple(dict.fromkeys(
                atom.key for group in prop_bundle.filter.groups for atom in group
            ))
            properties.append(
                ResolvedProperty(
                    descriptor=prop.name,
                    bundle_id=prop_bundle.id,
                    keys=keys,
                    operator=prop.operator,
                    value=prop.value,
                    score=prop_hit.hybrid_score,
                )
            )
        slots.append(
            ResolvedSlot(
                entity_id=entity.id,
                descriptor=entity.name,
                bundle_id=hit.bundle_id,
                filter=index.bundle(hit.bundle_id).filter,
                score=hit.hybrid_score,
                kind=entity.kind,
                min_count=entity.min_count,
                max_spread_m=entity.max_spread.meters if entity.max_spread else None,
                properties=tuple(properties),
            )
        )
    relations = tuple(
        ResolvedRelation(
            source=r.source,
            target=r.target,
            kind=r.kind,
            max_distance_m=r.max_distance.meters if r.max_distance else None,
        )
        for r in q.relations
    )
    return ResolvedQuery(slots=tuple(slots), relations=relations)
