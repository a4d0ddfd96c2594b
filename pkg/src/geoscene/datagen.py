"""Synthetic training-data assembly.

Samples random scene queries over the packaged vocabulary, renders each one
into a parametric generation prompt (persona + writing style + a plain-text
listing of the objects and their relations), and asks a pluggable text client
for the matching natural-language sentence.  Records land in line-delimited
JSON with a meta block that is always re-derivable from the query itself.
"""

from __future__ import annotations

import json
import random
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .bundles import load_bundles
from .distance import RELATIVE_SPATIAL_TERMS, Distance, parse_distance
from .errors import BackendTimeoutError, SinkIOError, UnparsableOutputError
from .geostore import load_gazetteer
from .ir import (
    AreaSpec,
    EntitySpec,
    PropertyConstraint,
    RelationSpec,
    SceneQuery,
    serialize_scene_query,
    validate_scene_query,
)

PERSONAS: tuple[str, ...] = (
    "political journalist",
    "investigative journalist",
    "expert fact checker",
    "hobby fact checker",
    "human rights abuse monitoring OSINT Expert",
    "OSINT beginner",
    "legal professional",
)

STYLES: tuple[str, ...] = (
    "in perfect grammar and clear wording",
    "in simple language",
    "with very precise wording, short, to the point",
    "with very elaborate wording",
    "as a chain of thoughts split into multiple sentences",
)

# Optional style-line suffixes; they steer the text client only and never
# touch the YAML, so noisy fixtures stay structurally clean.
TYPO_STYLE_SUFFIX = ", with occasional typos and misspelled words"
GRAMMAR_STYLE_SUFFIX = ", with noticeable grammar mistakes"

INSTRUCTION_BLOCK = (
    "Generate one or more sentences simulating a user using a natural"
    " language interface for an AI geolocation search tool that finds"
    " locations based on descriptions of objects and their spatial relations."
    " Each object has one main descriptor and optionally additional"
    " properties. All properties must be put in a logical connection to the"
    " object. Objects can either be single instances, or clusters of multiple"
    ' of one object which are located in a specific distance radius (e.g.'
    ' "three houses next to/within 10m of each other").\n'
    "Mention the area, cover all entities and their respective properties,"
    " and describe the respective relations. Stick to the descriptions of"
    " entities and relations provided and don't add anything. When describing"
    " names or brand (names), be creative in your phrasing (examples being a"
    ' "book store of brand Thalia" vs. "a Thalia book store", or simply e.g.'
    ' "a Thalia" if the type of object is not given). Stick to the values of'
    " each relation. Distances always refer to a maximum distance. If no"
    " distance is given, do not use any terms such as close, near, create"
    ' sentences such as "find a house and a restaurant". Vary your phrasing.'
    " Do not affirm this request and return nothing but the answer."
)

CLOSING_LINE = (
    "Please take your time and make sure that all the provided information"
    " is contained in the sentence."
)

DATASET_FORMAT = "geoscene-dataset"
DATASET_VERSION = 1

# Distances that collide with the relative-term table are resampled, so a
# query uses a term value iff the sampler deliberately chose one.
_TERM_METERS = frozenset(RELATIVE_SPATIAL_TERMS.values())

_LONG_UNITS: tuple[tuple[str, str], ...] = (
    ("kilometers", "kilometers"),
    ("kilometres", "kilometers"),
    ("kilometer", "kilometers"),
    ("kilometre", "kilometers"),
    ("meters", "meters"),
    ("metres", "meters"),
    ("meter", "meters"),
    ("metre", "meters"),
    ("miles", "miles"),
    ("mile", "miles"),
    ("yards", "yards"),
    ("yard", "yards"),
    ("feet", "feet"),
    ("foot", "feet"),
    ("km", "kilometers"),
    ("yd", "yards"),
    ("ft", "feet"),
    ("mi", "miles"),
    ("m", "meters"),
)


@dataclass(frozen=True)
class PersonaStyle:
    """One draw from the closed persona and style lists."""

    persona: str
    style: str

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise ValueError(f"unknown persona {self.persona!r}")
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")


@dataclass(frozen=True)
class GenConfig:
    """Sampling knobs for the dataset generator.

    Weights need not sum to one; they are normalized per draw.  The split
    between named areas, properties, typo/grammar styles and so on is fully
    config-exposed so benchmark-like facet mixes can be dialed in.
    """

    seed: int = 0
    entity_count_range: tuple[int, int] = (1, 3)
    property_probability: float = 0.32
    relation_probability: float = 0.9
    topology_weights: dict[str, float] = field(
        default_factory=lambda: {"chain": 0.7, "star": 0.3}
    )
    relation_kind_weights: dict[str, float] = field(
        default_factory=lambda: {"distance": 0.75, "contains": 0.25}
    )
    relative_term_probability: float = 0.35
    area_kind_weights: dict[str, float] = field(
        default_factory=lambda: {"named": 0.73, "bbox": 0.27}
    )
    unit_weights: dict[str, float] = field(
        default_factory=lambda: {
            "m": 0.5,
            "km": 0.16,
            "ft": 0.1,
            "yd": 0.05,
            "mi": 0.07,
            "spelled": 0.12,
        }
    )
    typo_style_probability: float = 0.18
    grammar_style_probability: float = 0.2
    cluster_probability: float = 0.08
    absurd_distance_probability: float = 0.05

    def validate(self):
        lo, hi = self.entity_count_range
        if not (1 <= lo <= hi):
            raise ValueError(f"bad entity_count_range {self.entity_count_range}")
        for name in (
            "property_probability",
            "relation_probability",
            "relative_term_probability",
            "typo_style_probability",
            "grammar_style_probability",
            "cluster_probability",
            "absurd_distance_probability",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for name in (
            "topology_weights",
            "relation_kind_weights",
            "area_kind_weights",
            "unit_weights",
        ):
            weights = getattr(self, name)
            if not weights or any(w < 0 for w in weights.values()):
                raise ValueError(f"{name} must be non-empty and non-negative")
            if sum(weights.values()) <= 0:
                raise ValueError(f"{name} weights sum to zero")
        if set(self.topology_weights) - {"chain", "star"}:
            raise ValueError("topology_weights keys must be chain/star")
        if set(self.relation_kind_weights) - {"distance", "contains"}:
            raise ValueError("relation_kind_weights keys must be distance/contains")
        if set(self.area_kind_weights) - {"named", "bbox"}:
            raise ValueError("area_kind_weights keys must be named/bbox")
        if set(self.unit_weights) - {"m", "km", "ft", "yd", "mi", "spelled"}:
            raise ValueError("unit_weights carries an unknown unit")


@dataclass(frozen=True)
class DatasetRecord:
    """One training sample: prompt in, sentence out, query as ground truth."""

    id: str
    prompt: str
    yaml: str
    sentence: str
    meta: dict
    error: bool = False

    def to_json(self) -> str:
        node = {
            "id": self.id,
            "prompt": self.prompt,
            "yaml": self.yaml,
            "sentence": self.sentence,
            "meta": self.meta,
            "error": self.error,
        }
        return json.dumps(node, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> DatasetRecord:
        node = json.loads(line)
        return cls(
            id=node["id"],
            prompt=node["prompt"],
            yaml=node["yaml"],
            sentence=node["sentence"],
            meta=node["meta"],
            error=bool(node.get("error", False)),
        )


@dataclass(frozen=True)
class DatasetSummary:
    train_path: str
    dev_path: str
    train_count: int
    dev_count: int
    error_count: int


class TextGenClient(Protocol):
    def generate(self, prompt: str) -> str: ...


# --- vocabulary -------------------------------------------------------------


@dataclass(frozen=True)
class _PropertyRecipe:
    name: str
    operators: tuple[str, ...]
    values: tuple[str, ...]


# Property names are canonical names or descriptors of the packaged property
# bundles, so every sampled constraint resolves.
_PROPERTY_RECIPES: tuple[_PropertyRecipe, ...] = (
    _PropertyRecipe("levels", (">", "<", ">=", "<="), ("3", "5", "8", "12", "21", "34", "56")),
    _PropertyRecipe("height", (">", "<", ">=", "<="), ("10", "25", "48", "90", "120")),
    _PropertyRecipe("name", ("~", "="), ("MK6", "Thalia", "Aurora", "Black Pearl", "St. Nikolai", "Luna")),
    _PropertyRecipe("cuisine", ("=", "~"), ("italian", "kebab", "sushi", "greek", "burger")),
    _PropertyRecipe("roof colour", ("=",), ("red", "green", "black", "grey")),
    _PropertyRecipe("building material", ("=",), ("brick", "wood", "concrete", "steel")),
    _PropertyRecipe("house number", ("=",), ("7", "12", "36", "221")),
    _PropertyRecipe("religion", ("=",), ("christian", "muslim", "jewish", "buddhist")),
    _PropertyRecipe("start date", (">", "<", "="), ("1890", "1920", "1960", "2005")),
    _PropertyRecipe("operated by", ("=", "~"), ("Shell", "Aldi", "city council", "DB")),
    _PropertyRecipe("surface", ("=",), ("asphalt", "gravel", "grass", "cobblestone")),
    _PropertyRecipe("width", (">", "<", "<="), ("4", "8", "15", "30")),
)

_SPELLED_MAGNITUDES: tuple[tuple[str, float], ...] = (
    ("three", 3),
    ("five", 5),
    ("eight", 8),
    ("twelve", 12),
    ("seventeen", 17),
    ("forty", 40),
    ("sixty", 60),
    ("ninety", 90),
    ("two hundred", 200),
    ("three hundred", 300),
    ("six hundred", 600),
    ("one thousand two hundred", 1200),
    ("four thousand", 4000),
)


@dataclass(frozen=True)
class _Vocabulary:
    entity_names: tuple[str, ...]
    area_names: tuple[str, ...]


_VOCAB_CACHE: _Vocabulary | None = None


def _packaged_text(name: str) -> str:
    import importlib.resources

    return importlib.resources.files("geoscene").joinpath(name).read_text("utf-8")


def _vocabulary() -> _Vocabulary:
    global _VOCAB_CACHE
    if _VOCAB_CACHE is None:
        index = load_bundles(_packaged_text("data/bundles.yaml"))
        names: set[str] = set()
        for bundle in index.bundles:
            if bundle.applies_to in ("entity", "both"):
                names.add(bundle.canonical_name)
                names.update(bundle.descriptors)
        gazetteer = load_gazetteer(_packaged_text("data/gazetteer.geojson"))
        _VOCAB_CACHE = _Vocabulary(
            entity_names=tuple(sorted(names)),
            area_names=tuple(sorted(gazetteer.all_names())),
        )
    return _VOCAB_CACHE


# --- sampling ---------------------------------------------------------------


def _weighted(rng: random.Random, weights: dict[str, float]) -> str:
    keys = sorted(weights)
    return rng.choices(keys, weights=[weights[k] for k in keys], k=1)[0]


def _sample_numeric_distance(rng: random.Random, cfg: GenConfig) -> Distance:
    """A distance text whose meter value never collides with the term table."""
    for _ in range(100):
        if rng.random() < cfg.absurd_distance_probability:
            text = f"{rng.randint(10_000, 99_999)} miles"
        else:
            unit = _weighted(rng, cfg.unit_weights)
            if unit == "spelled":
                words, value = rng.choice(_SPELLED_MAGNITUDES)
                long_unit = rng.choice(("meters", "kilometers", "feet", "yards"))
                text = f"{words} {long_unit}"
            elif unit == "m":
                magnitude = rng.randint(5, 9_999)
                if magnitude >= 1_000 and rng.random() < 0.25:
                    text = f"{magnitude:,} m"
                else:
                    text = f"{magnitude} m"
            elif unit == "km":
                text = f"{rng.randint(1, 400)} km"
            elif unit == "ft":
                text = f"{rng.randint(10, 5_000)} ft"
            elif unit == "yd":
                text = f"{rng.randint(10, 2_000)} yd"
            else:
                text = f"{rng.randint(1, 200)} mi"
        parsed = parse_distance(text)
        if parsed.meters not in _TERM_METERS:
            return parsed
    raise AssertionError("distance sampler failed to avoid the term table")


def _sample_term_distance(rng: random.Random) -> Distance:
    meters = rng.choice(sorted(_TERM_METERS))
    return Distance(meters=float(meters), original_text=f"{meters:g} m")


def sample_scene_query(rng: random.Random, cfg: GenConfig) -> SceneQuery:
    """Draw one valid SceneQuery from the configured distributions."""
    cfg.validate()
    vocab = _vocabulary()

    count = rng.randint(*cfg.entity_count_range)
    names = rng.sample(vocab.entity_names, count)

    if _weighted(rng, cfg.area_kind_weights) == "named":
        area = AreaSpec(kind="named", name=rng.choice(vocab.area_names))
    else:
        area = AreaSpec(kind="bbox")

    cluster_idx = rng.randrange(count) if rng.random() < cfg.cluster_probability else -1
    prop_idx = rng.randrange(count) if rng.random() < cfg.property_probability else -1

    entities = []
    for i, name in enumerate(names):
        properties: tuple[PropertyConstraint, ...] = ()
        if i == prop_idx:
            recipe = rng.choice(_PROPERTY_RECIPES)
            properties = (
                PropertyConstraint(
                    name=recipe.name,
                    operator=rng.choice(recipe.operators),
                    value=rng.choice(recipe.values),
                ),
            )
        if i == cluster_idx:
            entities.append(
                EntitySpec(
                    id=i,
                    name=name,
                    kind="cluster",
                    properties=properties,
                    min_count=rng.randint(2, 6),
                    max_spread=_sample_numeric_distance(rng, cfg),
                )
            )
        else:
            entities.append(EntitySpec(id=i, name=name, properties=properties))

    relations = []
    if count >= 2 and rng.random() < cfg.relation_probability:
        if _weighted(rng, cfg.topology_weights) == "chain":
            edges = [(i, i + 1) for i in range(count - 1)]
        else:
            edges = [(0, i) for i in range(1, count)]
        term_pending = rng.random() < cfg.relative_term_probability
        for source, target in edges:
            kind = _weighted(rng, cfg.relation_kind_weights)
            # A cluster makes no sense as a container; flip such edges to
            # distance so the sampled query stays executable.
            if kind == "contains" and entities[source].kind == "cluster":
                kind = "distance"
            if kind == "contains":
                relations.append(
                    RelationSpec(source=source, target=target, kind="contains")
                )
                continue
            if term_pending:
                value = _sample_term_distance(rng)
                term_pending = False
            else:
                value = _sample_numeric_distance(rng, cfg)
            relations.append(
                RelationSpec(source=source, target=target, kind="distance", max_distance=value)
            )

    query = SceneQuery(area=area, entities=tuple(entities), relations=tuple(relations))
    violations = validate_scene_query(query)
    if violations:  # sampler bug, not user input
        raise AssertionError(f"sampled query invalid: {violations}")
    return query


def derive_meta(query: SceneQuery) -> dict:
    """The YAML-derivable meta slice; persona/style flags are layered on top.

    uses_relative_term covers relation distances only: numeric sampling
    rejects the seven table values, so membership is decisive.
    """
    area_name = query.area.name or ""
    return {
        "area_kind": "named" if query.area.kind == "named" else "bbox",
        "entity_count": len(query.entities),
        "has_properties": any(e.properties for e in query.entities),
        "relation_kinds": sorted({r.kind for r in query.relations}),
        "uses_relative_term": any(
            r.max_distance is not None and r.max_distance.meters in _TERM_METERS
            for r in query.relations
        ),
        "non_latin_area": any(ord(ch) > 0x024F for ch in area_name),
    }


@dataclass(frozen=True)
class RecordSpec:
    """Everything sampled for one record, before the client call."""

    query: SceneQuery
    persona_style: PersonaStyle
    typo_style: bool
    grammar_style: bool

    def meta(self) -> dict:
        base = derive_meta(self.query)
        base.update(
            persona=self.persona_style.persona,
            style=self.persona_style.style,
            has_typos_style=self.typo_style,
            has_grammar_style=self.grammar_style,
        )
        return base


def sample_record_spec(rng: random.Random, cfg: GenConfig) -> RecordSpec:
    query = sample_scene_query(rng, cfg)
    persona_style = PersonaStyle(persona=rng.choice(PERSONAS), style=rng.choice(STYLES))
    return RecordSpec(
        query=query,
        persona_style=persona_style,
        typo_style=rng.random() < cfg.typo_style_probability,
        grammar_style=rng.random() < cfg.grammar_style_probability,
    )


# --- prompt rendering -------------------------------------------------------


def _long_distance(distance: Distance) -> str:
    """Rewrite the unit token long-form ("16460 m" -> "16460 meters")."""
    text = distance.original_text.strip()
    lowered = text.lower()
    for alias, long_form in _LONG_UNITS:
        if not lowered.endswith(alias):
            continue
        head = text[: len(text) - len(alias)].rstrip()
        if head and head[-1].isalpha():
            continue  # alias was the tail of a longer word
        return f"{head} {long_form}" if head else long_form
    return text


def _property_phrase(prop: PropertyConstraint) -> str:
    if prop.operator == ">":
        return f"{prop.name}: above {prop.value}"
    if prop.operator == "<":
        return f"{prop.name}: below {prop.value}"
    if prop.operator == ">=":
        return f"{prop.name}: at least {prop.value}"
    if prop.operator == "<=":
        return f"{prop.name}: at most {prop.value}"
    if prop.operator == "~":
        return f'{prop.name}: "{prop.value}"'
    return f"{prop.name}: {prop.value}"


def _object_line(entity: EntitySpec) -> str:
    line = f"- Obj. {entity.id}: {entity.name}"
    if entity.kind == "cluster":
        line += (
            f" | Cluster -> at least {entity.min_count} within"
            f" {_long_distance(entity.max_spread)} of each other"
        )
    if entity.properties:
        line += " | Properties -> " + "; ".join(
            _property_phrase(p) for p in entity.properties
        )
    return line


def _distance_lines(query: SceneQuery) -> list[str]:
    if not query.relations:
        return []
    texts = {
        r.max_distance.original_text
        for r in query.relations
        if r.max_distance is not None
    }
    if len(texts) == 1 and all(r.kind == "distance" for r in query.relations):
        long = _long_distance(query.relations[0].max_distance)
        return [f"- All objects are no more than {long} from another."]
    lines = []
    for rel in query.relations:
        if rel.kind == "contains":
            lines.append(f"- Obj. {rel.target} is inside Obj. {rel.source}.")
        else:
            long = _long_distance(rel.max_distance)
            lines.append(
                f"- Obj. {rel.source} and Obj. {rel.target} are no more than"
                f" {long} from another."
            )
    return lines


def build_generation_prompt(
    query: SceneQuery,
    persona_style: PersonaStyle,
    typo_style: bool = False,
    grammar_style: bool = False,
) -> str:
    """Render the full parametric prompt for one query.

    Pure in its arguments: repeated calls are byte-equal.
    """
    style_line = persona_style.style
    if typo_style:
        style_line += TYPO_STYLE_SUFFIX
    if grammar_style:
        style_line += GRAMMAR_STYLE_SUFFIX

    lines = [
        INSTRUCTION_BLOCK,
        "==Persona==",
        persona_style.persona,
        "==Style==",
        style_line,
        "==Input==",
    ]
    if query.area.kind == "named":
        lines.append(f"Area: {query.area.name}")
    lines.append("Objects:")
    lines.extend(_object_line(e) for e in query.entities)
    distance_lines = _distance_lines(query)
    if distance_lines:
        lines.append("Distances:")
        lines.extend(distance_lines)
    lines.append(CLOSING_LINE)
    return "\n".join(lines)


# --- text clients -----------------------------------------------------------


_OBJ_LINE = re.compile(r"^- Obj\. (\d+): (.+)$")
_PAIR_LINE = re.compile(
    r"^- Obj\. (\d+) and Obj\. (\d+) are no more than (.+) from another\.$"
)
_ALL_LINE = re.compile(r"^- All objects are no more than (.+) from another\.$")
_INSIDE_LINE = re.compile(r"^- Obj\. (\d+) is inside Obj\. (\d+)\.$")

_VERBS = (
    "Find",
    "Locate",
    "Please find",
    "Show me",
    "I am looking for",
    "Search for",
)


class StubTextGenClient:
    """Offline sentence renderer, pure in (seed, prompt).

    Reassembles the ==Input== section into a template sentence with small
    seeded variations; the typo and grammar style suffixes trigger seeded
    character-level noise so downstream fixtures exist without any model.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, prompt: str) -> str:
        rng = random.Random(f"{self.seed}:{zlib.crc32(prompt.encode('utf-8'))}")
        area = None
        style_line = ""
        objects: dict[int, str] = {}
        clauses: list[str] = []
        section = None
        for raw in prompt.splitlines():
            line = raw.strip()
            if line == "==Style==":
                section = "style"
                continue
            if line == "==Input==":
                section = "input"
                continue
            if section == "style" and line and not line.startswith("=="):
                style_line = line
                section = None
                continue
            if section != "input":
                continue
            if line.startswith("Area: "):
                area = line[len("Area: "):]
            match = _OBJ_LINE.match(line)
            if match:
                objects[int(match.group(1))] = self._object_phrase(match.group(2))
            match = _ALL_LINE.match(line)
            if match:
                clauses.append(f"no more than {match.group(1)} from each other")
            match = _PAIR_LINE.match(line)
            if match:
                a, b, dist = match.groups()
                clauses.append(
                    f"the {self._head(objects, int(a))} at most {dist}"
                    f" from the {self._head(objects, int(b))}"
                )
            match = _INSIDE_LINE.match(line)
            if match:
                inner, outer = match.groups()
                clauses.append(
                    f"the {self._head(objects, int(inner))} inside"
                    f" the {self._head(objects, int(outer))}"
                )

        verb = rng.choice(_VERBS)
        listing = self._join([objects[k] for k in sorted(objects)])
        sentence = f"{verb} {listing}"
        if clauses:
            sentence += ", " + "; ".join(clauses)
        if area is not None:
            if rng.random() < 0.5:
                sentence = f"In {area}: {sentence}"
            else:
                sentence += f", somewhere in {area}"
        sentence += "."
        if TYPO_STYLE_SUFFIX.strip(", ") in style_line:
            sentence = self._add_typos(rng, sentence)
        if GRAMMAR_STYLE_SUFFIX.strip(", ") in style_line:
            sentence = self._mangle_grammar(rng, sentence)
        return sentence

    @staticmethod
    def _object_phrase(body: str) -> str:
        parts = [p.strip() for p in body.split(" | ")]
        name = parts[0]
        phrase = f"a {name}"
        for part in parts[1:]:
            if part.startswith("Cluster -> "):
                head, _, tail = part[len("Cluster -> "):].partition(" within ")
                phrase = f"{head} {name}s within {tail}"
            elif part.startswith("Properties -> "):
                phrase += f" with {part[len('Properties -> '):]}"
        return phrase

    @staticmethod
    def _head(objects: dict[int, str], key: int) -> str:
        phrase = objects.get(key, "object")
        return phrase.removeprefix("a ").split(" with ")[0]

    @staticmethod
    def _join(phrases: list[str]) -> str:
        if not phrases:
            return "anything"
        if len(phrases) == 1:
            return phrases[0]
        return ", ".join(phrases[:-1]) + " and " + phrases[-1]

    @staticmethod
    def _add_typos(rng: random.Random, text: str) -> str:
        chars = list(text)
        spots = [i for i in range(1, len(chars) - 1) if chars[i].isalpha()]
        for _ in range(1 + len(text) // 60):
            if not spots:
                break
            i = rng.choice(spots)
            op = rng.randrange(3)
            if op == 0:
                chars[i], chars[i - 1] = chars[i - 1], chars[i]
            elif op == 1:
                chars[i] = ""
            else:
                chars[i] = chars[i] * 2
        return "".join(chars)

    @staticmethod
    def _mangle_grammar(rng: random.Random, text: str) -> str:
        for article in (" a ", " an ", " the "):
            if article in text and rng.random() < 0.7:
                text = text.replace(article, " ", 1)
        return text


class HttpTextGenClient:
    """POSTs {"prompt": ...} to an endpoint answering {"text": ...}."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def generate(self, prompt: str) -> str:
        try:
            response = httpx.post(
                self.endpoint, json={"prompt": prompt}, timeout=self.timeout_s
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(
                f"text client timed out after {self.timeout_s}s"
            ) from exc
        except (httpx.HTTPError, ValueError) as exc:
            raise UnparsableOutputError(f"text client failed: {exc}") from exc
        if not isinstance(payload, dict) or "text" not in payload:
            raise UnparsableOutputError("text client answer carries no 'text' field")
        return str(payload["text"])


# --- dataset assembly -------------------------------------------------------

_CLIENT_ATTEMPTS = 3


def build_record(record_id: str, spec: RecordSpec, client: TextGenClient) -> DatasetRecord:
    prompt = build_generation_prompt(
        spec.query,
        spec.persona_style,
        typo_style=spec.typo_style,
        grammar_style=spec.grammar_style,
    )
    sentence = ""
    error = True
    for _ in range(_CLIENT_ATTEMPTS):
        try:
            sentence = client.generate(prompt)
            error = False
            break
        except Exception:
            continue
    return DatasetRecord(
        id=record_id,
        prompt=prompt,
        yaml=serialize_scene_query(spec.query),
        sentence=sentence,
        meta=spec.meta(),
        error=error,
    )


def generate_dataset(
    cfg: GenConfig,
    n: int,
    client: TextGenClient,
    split_dev: float = 0.05,
    out_dir: str | Path = ".",
) -> DatasetSummary:
    """Write n records to train/dev ndjson files under out_dir.

    Sampling, the dev split, and the stub client are all seeded, so the
    output bytes are a pure function of (cfg, n, split_dev).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= split_dev < 1.0:
        raise ValueError("split_dev must be in [0, 1)")
    cfg.validate()

    rng = random.Random(cfg.seed)
    records = []
    for i in range(n):
        spec = sample_record_spec(rng, cfg)
        records.append(build_record(f"sample-{i:06d}", spec, client))

    split_rng = random.Random(f"{cfg.seed}:dev-split")
    indices = list(range(n))
    split_rng.shuffle(indices)
    dev_indices = set(indices[: round(n * split_dev)])

    out = Path(out_dir)
    train_path = out / "train.jsonl"
    dev_path = out / "dev.jsonl"
    header = json.dumps(
        {"format": DATASET_FORMAT, "version": DATASET_VERSION}, sort_keys=True
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(train_path, "w", encoding="utf-8") as train_file, open(
            dev_path, "w", encoding="utf-8"
        ) as dev_file:
            train_file.write(header + "\n")
            dev_file.write(header + "\n")
            for i, record in enumerate(records):
                sink = dev_file if i in dev_indices else train_file
                sink.write(record.to_json() + "\n")
    except OSError as exc:
        raise SinkIOError(f"cannot write dataset under {out}: {exc}") from exc

    return DatasetSummary(
        train_path=str(train_path),
        dev_path=str(dev_path),
        train_count=n - len(dev_indices),
        dev_count=len(dev_indices),
        error_count=sum(1 for r in records if r.error),
    )


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Read one ndjson dataset file, checking the header line."""
    records = []
    with open(path, encoding="utf-8") as handle:
        header = json.loads(handle.readline())
        if header.get("format") != DATASET_FORMAT:
            raise SinkIOError(f"{path}: not a {DATASET_FORMAT} file")
        if header.get("version") != DATASET_VERSION:
            raise SinkIOError(f"{path}: unsupported version {header.get('version')}")
        for line in handle:
            if line.strip():
                records.append(DatasetRecord.from_json(line))
    return records
