"""Build the 195-item benchmark-shaped gold fixture.

Pure index arithmetic decides which facets each record carries, so the facet
counts come out exactly at the published benchmark sizes: 195 total, 143
named-area / 52 bbox, 63 with properties, 36 typo-style, 39 grammar-style,
43 with relative-term distances, 48 containment, 121 distance.  Rerunning the
script must reproduce tests/fixtures/benchmark_mirror.jsonl byte for byte.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from geoscene.datagen import PERSONAS, STYLES, derive_meta  # noqa: E402
from geoscene.distance import Distance  # noqa: E402
from geoscene.ir import (  # noqa: E402
    AreaSpec,
    EntitySpec,
    PropertyConstraint,
    RelationSpec,
    SceneQuery,
    serialize_scene_query,
    validate_scene_query,
)

TOTAL = 195

EXPECTED_COUNTS = {
    "named_area": 143,
    "bbox": 52,
    "properties": 63,
    "typos": 36,
    "grammar_mistakes": 39,
    "relative_terms": 43,
    "contains": 48,
    "distance": 121,
}

NAME_CYCLE = (
    "church",
    "bridge",
    "fountain",
    "park",
    "restroom",
    "supermarket",
    "water tower",
    "wind generator",
    "chapel",
    "playground",
    "harbor",
    "windmill",
)

AREA_CYCLE = (
    "Milligen",
    "Dubrovnik",
    "東京都",
    "Paraíba",
    "North Rhine-Westphalia",
    "Springfield",
    "Lakeview",
    "Old Harbor",
    "Dinkelsbühl",
    "Üsküdar",
)

PROP_CYCLE = (
    ("levels", ">", "56"),
    ("height", "<=", "25"),
    ("name", "~", "MK6"),
    ("cuisine", "=", "italian"),
    ("start date", ">", "1920"),
)

TERM_VALUES = (25, 50, 100, 150, 250, 1000, 2000)


def _numeric_value(index: int, edge: int) -> int:
    value = 41 + ((index * 37 + edge * 13) % 9000)
    while value in TERM_VALUES:
        value += 1
    return value


def _distance(meters: int) -> Distance:
    return Distance(meters=float(meters), original_text=f"{meters} m")


def _entity_count(index: int) -> int:
    if index <= 99:
        return 2 + (index % 2)
    if index <= 120:
        return 3
    if index <= 147:
        return 2 + (index % 2)
    return 1 + (index % 3)


def build_query(index: int) -> SceneQuery:
    count = _entity_count(index)
    entities = []
    for k in range(count):
        properties = ()
        if k == 0 and index % 3 == 0 and index not in (189, 192):
            name, operator, value = PROP_CYCLE[(index // 3) % len(PROP_CYCLE)]
            properties = (PropertyConstraint(name=name, operator=operator, value=value),)
        entities.append(
            EntitySpec(
                id=k,
                name=NAME_CYCLE[(index + k) % len(NAME_CYCLE)],
                properties=properties,
            )
        )

    relations = []
    if index <= 42:
        for edge in range(count - 1):
            relations.append(
                RelationSpec(
                    source=edge,
                    target=edge + 1,
                    kind="distance",
                    max_distance=_distance(TERM_VALUES[(index + edge) % len(TERM_VALUES)]),
                )
            )
    elif index <= 99:
        for edge in range(count - 1):
            relations.append(
                RelationSpec(
                    source=edge,
                    target=edge + 1,
                    kind="distance",
                    max_distance=_distance(_numeric_value(index, edge)),
                )
            )
    elif index <= 120:
        relations.append(RelationSpec(source=0, target=1, kind="contains"))
        relations.append(
            RelationSpec(
                source=1,
                target=2,
                kind="distance",
                max_distance=_distance(_numeric_value(index, 1)),
            )
        )
    elif index <= 147:
        for edge in range(count - 1):
            relations.append(RelationSpec(source=edge, target=edge + 1, kind="contains"))

    if index < 143:
        area = AreaSpec(kind="named", name=AREA_CYCLE[index % len(AREA_CYCLE)])
    else:
        area = AreaSpec(kind="bbox")

    return SceneQuery(area=area, entities=tuple(entities), relations=tuple(relations))


def build_records() -> list[dict]:
    records = []
    for index in range(TOTAL):
        query = build_query(index)
        violations = validate_scene_query(query)
        if violations:
            raise AssertionError(f"record {index} invalid: {violations}")
        meta = derive_meta(query)
        meta.update(
            persona=PERSONAS[index % len(PERSONAS)],
            style=STYLES[index % len(STYLES)],
            has_typos_style=index % 5 == 1 and index <= 176,
            has_grammar_style=index % 5 == 2,
        )
        records.append(
            {
                "id": f"bench-{index:03d}",
                "yaml": serialize_scene_query(query),
                "meta": meta,
            }
        )
    return records


def render(records: list[dict]) -> str:
    return "".join(
        json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"
        for record in records
    )


def check_counts(records: list[dict]):
    counts = dict.fromkeys(EXPECTED_COUNTS, 0)
    for record in records:
        meta = record["meta"]
        counts["named_area"] += meta["area_kind"] == "named"
        counts["bbox"] += meta["area_kind"] == "bbox"
        counts["properties"] += meta["has_properties"]
        counts["typos"] += meta["has_typos_style"]
        counts["grammar_mistakes"] += meta["has_grammar_style"]
        counts["relative_terms"] += meta["uses_relative_term"]
        counts["contains"] += "contains" in meta["relation_kinds"]
        counts["distance"] += "distance" in meta["relation_kinds"]
    if counts != EXPECTED_COUNTS:
        raise AssertionError(f"facet counts off: {counts} != {EXPECTED_COUNTS}")


def main():
    records = build_records()
    check_counts(records)
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "benchmark_mirror.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render(records), encoding="utf-8")
    print(f"wrote {len(records)} records to {out}")


if __name__ == "__main__":
    main()
