"""Tag filters: DNF conditions over OSM key/value maps.

A TagFilter is a disjunction of conjunction groups.  A group matches a tag
map when every atom in the group matches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal

from geoscene.errors import BundleFormatError

AtomOp = Literal["equals", "matches", "exists"]

_LEADING_NUMBER = re.compile(r"^\s*(-?\d+(?:\.\d+)?)")


@dataclass(frozen=True)
class TagAtom:
    """One condition on a single tag key."""

    key: str
    op: AtomOp
    value: str | None = None

    def __post_init__(self):
        if self.op in ("equals", "matches") and self.value is None:
            raise BundleFormatError(f"{self.op} atom on {self.key!r} needs a value")

    def matches(self, tags: dict[str, str]) -> bool:
        actual = tags.get(self.key)
        if actual is None:
            return False
        if self.op == "exists":
            return True
        if self.op == "equals":
            return actual.strip().casefold() == self.value.strip().casefold()
        return self.value.casefold() in actual.casefold()


@dataclass(frozen=True)
class TagFilter:
    """Disjunction of conjunction groups of TagAtoms."""

    groups: tuple[tuple[TagAtom, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))
        if not self.groups or any(not g for g in self.groups):
            raise BundleFormatError("tag filter needs at least one non-empty group")

    def keys(self) -> set[str]:
        return {atom.key for group in self.groups for atom in group}


def evaluate_tag_filter(filter: TagFilter, tags: dict[str, str]) -> bool:
    """True iff some conjunction group has all of its atoms satisfied."""
    return any(all(atom.matches(tags) for atom in group) for group in filter.groups)


def leading_number(text: str) -> float | None:
    """The leading numeric token of a tag value ("56 m" -> 56.0), if any."""
    match = _LEADING_NUMBER.match(text)
    return float(match.group(1)) if match else None


def property_value_matches(operator: str, wanted: str, actual: str) -> bool:
    """Compare a tag value against a property constraint.

    Numeric operators compare leading numeric tokens, so "56" and "56 m"
    both read as 56.  '=' is case-insensitive and numeric-aware for pure
    numbers ("56" == "56.0"); '~' is a case-insensitive substring test.
    """
    if operator == "~":
        return wanted.casefold() in actual.casefold()
    if operator == "=":
        if actual.strip().casefold() == wanted.strip().casefold():
            return True
        wanted_n = _LEADING_NUMBER.fullmatch(wanted.strip())
        actual_n = _LEADING_NUMBER.fullmatch(actual.strip())
        return (
            wanted_n is not None
            and actual_n is not None
            and float(wanted_n.group(1)) == float(actual_n.group(1))
        )
    wanted_n = leading_number(wanted)
    actual_n = leading_number(actual)
    if wanted_n is None or actual_n is None:
        return False
    if operator == ">":
        return actual_n > wanted_n
    if operator == "<":
        return actual_n < wanted_n
    if operator == ">=":
        return actual_n >= wanted_n
    if operator == "<=":
        return actual_n <= wanted_n
    raise ValueError(f"unknown operator {operator!r}")
