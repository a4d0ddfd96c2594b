"""A deliberately narrow template grammar between sentences and queries.

parse_template reads sentences shaped like
    find <entity> [with <property>] and <entity> ... [in <Area>]
        [, no more than <distance> apart | within <distance> of each other]
with relative spatial connectors ("next to", "beside", ...) resolved through
the term table, "in a <thing>" treated as containment, and "at least N
<thing>" introducing a group entity.  render_template is the inverse for the
subset of queries the grammar can express; it returns None otherwise.

Free-form robustness is out of scope here by design: anything beyond the
template belongs to an external model backend.
"""

from __future__ import annotations

import re

from geoscene.distance import (
    RELATIVE_SPATIAL_TERMS,
    Distance,
    parse_distance,
    resolve_relative_spatial_term,
)
from geoscene.errors import GeoSceneError, GrammarError
from geoscene.ir import (
    AreaSpec,
    EntitySpec,
    PropertyConstraint,
    RelationSpec,
    SceneQuery,
    validate_scene_query,
)

_VERB = re.compile(r"(?i)^(?:please\s+)?(?:find|locate|show\s+me|search\s+for|look\s+for)\s+")

_ARTICLE = re.compile(r"(?i)^(?:a|an|the|some)\s+")

_TERMS_DESC = sorted(RELATIVE_SPATIAL_TERMS, key=len, reverse=True)
_TERM_ALT = "|".join(re.escape(t).replace("\\ ", r"\s+") for t in _TERMS_DESC)

_SPREAD_HEAD = re.compile(r"(?i),?\s+(?:no\s+more\s+than|at\s+most|within)\s+")
_SPREAD_TAIL = re.compile(
    r"(?i)^(?P<dist>.+?)\s+(?:apart|of\s+each\s+other|from\s+each\s+other)$"
)
_TAIL_TERM_SPREAD = re.compile(rf"(?i)\s+(?P<term>{_TERM_ALT})\s+each\s+other$")
_TAIL_AREA = re.compile(r"(?i),?\s+in\s+(?!(?:a|an|the|some)\s)(?P<name>[^,]+)$")

_CONNECTOR = re.compile(
    rf"(?i)(?:"
    rf"\s+within\s+(?P<wdist>[^,]+?)\s+of\s+(?=(?:a|an|the|some)\s)"
    rf"|\s+(?:in|inside)\s+(?=(?:a|an|the|some)\s)"
    rf"|\s+(?P<term>{_TERM_ALT})\s+(?=(?:a|an|the|some)\s)"
    rf"|,\s*and\s+|,\s+|\s+and\s+"
    rf")"
)

_WITH = re.compile(r"(?i)\s+with\s+(?P<prop>.+)$")

_OP_WORDS = (
    ("at least", ">="),
    ("at most", "<="),
    ("more than", ">"),
    ("greater than", ">"),
    ("above", ">"),
    ("over", ">"),
    ("less than", "<"),
    ("under", "<"),
    ("below", "<"),
    ("equal to", "="),
    ("of", "="),
    ("like", "~"),
    ("matching", "~"),
)
_PROP = re.compile(
    r"(?i)^(?P<name>.+?)\s+(?P<op>"
    + "|".join(re.escape(w).replace("\\ ", r"\s+") for w, _ in _OP_WORDS)
    + r")\s+(?P<value>.+)$"
)
_OP_BY_WORD = {w: op for w, op in _OP_WORDS}
_WORD_BY_OP = {">": "above", "<": "below", ">=": "at least", "<=": "at most", "=": "of", "~": "like"}

_SMALL_COUNTS = {
    "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}
_COUNT_HEAD = re.compile(
    r"(?i)^(?:at\s+least\s+)?(?P<count>\d+|" + "|".join(_SMALL_COUNTS) + r")\s+(?=\S)"
)


def _grammar_distance(text: str, span: tuple[int, int]) -> Distance:
    try:
        return parse_distance(text)
    except GeoSceneError as exc:
        raise GrammarError(f"cannot read distance {text!r}: {exc}", span=span) from exc


def _strip_spread_tail(work: str, base: int) -> tuple[Distance | None, str]:
    """Split a trailing "no more than <d> apart"-style clause off the sentence.

    Keyword heads are scanned right to left so a property phrase earlier in
    the sentence ("with height at most 25") never swallows the real clause.
    """
    heads = list(_SPREAD_HEAD.finditer(work))
    failure: GrammarError | None = None
    for m in reversed(heads):
        tail = _SPREAD_TAIL.match(work[m.end():])
        if not tail:
            continue
        span = (base + m.end() + tail.start("dist"), base + m.end() + tail.end("dist"))
        try:
            return _grammar_distance(tail.group("dist"), span), work[: m.start()]
        except GrammarError as exc:
            failure = failure or exc
    if failure is not None:
        raise failure
    return None, work


class _EntityDraft:
    def __init__(self, entity_id: int, phrase: str, span: tuple[int, int]):
        self.id = entity_id
        self.span = span
        self.min_count: int | None = None
        self.max_spread: Distance | None = None
        self.properties: list[PropertyConstraint] = []

        rest = phrase.strip()
        m = _WITH.search(rest)
        if m:
            self.properties.append(_parse_property(m.group("prop"), span))
            rest = rest[: m.start()]
        m = _COUNT_HEAD.match(rest)
        if m:
            raw = m.group("count").lower()
            self.min_count = int(raw) if raw.isdigit() else _SMALL_COUNTS[raw]
            if self.min_count < 2:
                raise GrammarError("a group needs at least two members", span=span)
            rest = rest[m.end():]
        rest = _ARTICLE.sub("", rest)
        self.name = rest.strip().lower()
        if not self.name:
            raise GrammarError("empty object phrase", span=span)

    def to_spec(self) -> EntitySpec:
        kind = "cluster" if self.min_count is not None else "nwr"
        return EntitySpec(
            id=self.id,
            name=self.name,
            kind=kind,
            properties=tuple(self.properties),
            min_count=self.min_count,
            max_spread=self.max_spread,
        )


def _parse_property(phrase: str, span: tuple[int, int]) -> PropertyConstraint:
    m = _PROP.match(phrase.strip())
    if not m:
        raise GrammarError(
            f"cannot read property phrase {phrase.strip()!r} "
            "(expected '<name> above/below/at least/at most/of/like <value>')",
            span=span,
        )
    word = re.sub(r"\s+", " ", m.group("op").lower())
    return PropertyConstraint(
        name=m.group("name").strip().lower(),
        operator=_OP_BY_WORD[word],
        value=m.group("value").strip(),
    )


def parse_template(text: str) -> SceneQuery:
    """Parse a template sentence; GrammarError carries the failing span."""
    if not text or not text.strip():
        raise GrammarError("empty input", span=(0, 0))
    base = len(text) - len(text.lstrip())
    work = text.strip().rstrip(".!?").rstrip()

    m = _VERB.match(work)
    if not m:
        first = work.split()[0] if work.split() else work
        raise GrammarError(
            f"expected a leading verb such as 'find', got {first!r}",
            span=(base, base + len(first)),
        )
    head_end = m.end()

    spread, work = _strip_spread_tail(work, base)
    if spread is None:
        m = _TAIL_TERM_SPREAD.search(work)
        if m:
            term = re.sub(r"\s+", " ", m.group("term").lower())
            spread = resolve_relative_spatial_term(term)
            work = work[: m.start()]

    area = AreaSpec(kind="bbox")
    m = _TAIL_AREA.search(work)
    if m:
        area = AreaSpec(kind="named", name=m.group("name").strip())
        work = work[: m.start()]

    body = work[head_end:]
    if not body.strip():
        raise GrammarError("nothing to search for", span=(base + head_end, base + len(work)))

    entities: list[_EntityDraft] = []
    relations: list[RelationSpec] = []
    pending: list[tuple[str, object]] = []  # connector between entity i and i+1
    cursor = 0
    for m in _CONNECTOR.finditer(body):
        phrase = body[cursor : m.start()]
        if not phrase.strip():
            raise GrammarError(
                "missing object phrase before connector",
                span=(base + head_end + m.start(), base + head_end + m.end()),
            )
        entities.append(
            _EntityDraft(len(entities), phrase, (base + head_end + cursor, base + head_end + m.start()))
        )
        if m.group("wdist") is not None:
            dist = _grammar_distance(
                m.group("wdist"),
                (base + head_end + m.start("wdist"), base + head_end + m.end("wdist")),
            )
            pending.append(("distance", dist))
        elif m.group("term") is not None:
            term = re.sub(r"\s+", " ", m.group("term").lower())
            pending.append(("distance", resolve_relative_spatial_term(term)))
        elif re.match(r"(?i)\s+(?:in|inside)\s+", m.group(0)):
            pending.append(("contains", None))
        else:
            pending.append(("plain", None))
        cursor = m.end()
    tail_phrase = body[cursor:]
    if not tail_phrase.strip():
        raise GrammarError(
            "missing object phrase at the end", span=(base + head_end + cursor, base + len(work))
        )
    entities.append(
        _EntityDraft(len(entities), tail_phrase, (base + head_end + cursor, base + head_end + len(body)))
    )

    for i, (kind, payload) in enumerate(pending):
        if kind == "distance":
            relations.append(
                RelationSpec(source=entities[i].id, target=entities[i + 1].id, kind="distance", max_distance=payload)
            )
        elif kind == "contains":
            relations.append(
                RelationSpec(source=entities[i + 1].id, target=entities[i].id, kind="contains")
            )

    if spread is not None:
        for draft in entities:
            if draft.min_count is not None and draft.max_spread is None:
                draft.max_spread = spread
        if len(entities) >= 2:
            for i in range(len(entities) - 1):
                if pending[i][0] == "plain":
                    relations.append(
                        RelationSpec(
                            source=entities[i].id,
                            target=entities[i + 1].id,
                            kind="distance",
                            max_distance=spread,
                        )
                    )
    for draft in entities:
        if draft.min_count is not None and draft.max_spread is None:
            raise GrammarError(
                f"group {draft.name!r} needs a spread "
                "(try 'within <distance> of each other')",
                span=draft.span,
            )

    query = SceneQuery(
        area=area,
        entities=tuple(draft.to_spec() for draft in entities),
        relations=tuple(relations),
    )
    violations = validate_scene_query(query)
    if violations:
        raise GrammarError(
            "; ".join(f"{v.path}: {v.message}" for v in violations),
            span=(base, base + len(text.strip())),
        )
    return query


# --- rendering --------------------------------------------------------------

_SAFE_NAME = re.compile(r"^[a-z][a-z' -]*$")
_SAFE_VALUE = re.compile(r"^[\w'.:%-]+(?: [\w'.:%-]+)*$")
_RESERVED = (
    " and ", " with ", " in ", " inside ", " within ", " apart",
    " each other", ",",
) + tuple(f" {t} " for t in RELATIVE_SPATIAL_TERMS)


def _phrase_safe(text: str, pattern: re.Pattern) -> bool:
    if not pattern.match(text):
        return False
    padded = f" {text} "
    return not any(res in padded for res in _RESERVED)


def _article(name: str) -> str:
    return "an" if name[:1] in "aeiou" else "a"


def _entity_clause(entity: EntitySpec, with_article: bool = True) -> str | None:
    if not _phrase_safe(entity.name, _SAFE_NAME):
        return None
    if _COUNT_HEAD.match(entity.name):
        return None
    if entity.kind == "cluster":
        head = f"at least {entity.min_count} {entity.name}"
    elif with_article:
        head = f"{_article(entity.name)} {entity.name}"
    else:
        head = entity.name
    if len(entity.properties) > 1:
        return None
    if entity.properties:
        prop = entity.properties[0]
        if prop.operator not in _WORD_BY_OP:
            return None
        if not _phrase_safe(prop.name, _SAFE_NAME) or not _phrase_safe(prop.value, _SAFE_VALUE):
            return None
        # an operator word inside the name would shift the parse split point
        if any(f" {word} " in f" {prop.name} " for word, _ in _OP_WORDS):
            return None
        head += f" with {prop.name} {_WORD_BY_OP[prop.operator]} {prop.value}"
    return head


def _area_clause(area: AreaSpec) -> str | None:
    if area.kind == "bbox":
        return ""
    name = area.name
    if not name or "," in name or _ARTICLE.match(name):
        return None
    if any(res in f" {name} " for res in _RESERVED):
        return None
    return f" in {name}"


def render_template(query: SceneQuery) -> str | None:
    """Template sentence for the query, or None when inexpressible.

    Expressible queries use ids 0..n-1 in order, at most one property per
    entity, and relations shaped like the grammar's clauses (a single
    containment, a uniform chain, or one group's spread).
    """
    entities = sorted(query.entities, key=lambda e: e.id)
    if [e.id for e in entities] != list(range(len(entities))):
        return None
    area = _area_clause(query.area)
    if area is None:
        return None

    clusters = [e for e in entities if e.kind == "cluster"]
    relations = query.relations

    if len(clusters) == 1 and len(entities) == 1 and not relations:
        clause = _entity_clause(entities[0])
        if clause is None:
            return None
        spread = entities[0].max_spread.original_text
        return f"find {clause}{area} within {spread} of each other"
    if clusters:
        return None

    if not relations:
        clauses = [_entity_clause(e) for e in entities]
        if any(c is None for c in clauses):
            return None
        return f"find {' and '.join(clauses)}{area}"

    if (
        len(relations) == 1
        and relations[0].kind == "contains"
        and len(entities) == 2
        and relations[0].source == 1
        and relations[0].target == 0
    ):
        contained = _entity_clause(entities[0])
        container = _entity_clause(entities[1], with_article=False)
        if contained is None or container is None:
            return None
        return f"find {contained} in {_article(entities[1].name)} {container}{area}"

    chain = all(
        rel.kind == "distance" and rel.source == i and rel.target == i + 1
        for i, rel in enumerate(relations)
    )
    if chain and len(relations) == len(entities) - 1 and len(entities) >= 2:
        texts = {rel.max_distance.original_text for rel in relations}
        if len(texts) != 1:
            return None
        text = texts.pop()
        if any(res in f" {text} " for res in _RESERVED):
            return None
        clauses = [_entity_clause(e) for e in entities]
        if any(c is None for c in clauses):
            return None
        return f"find {' and '.join(clauses)}{area}, no more than {text} apart"

    return None
