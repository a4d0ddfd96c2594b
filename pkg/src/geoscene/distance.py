"""Distance values: unit-aware parsing and the relative spatial term table.

A Distance keeps both the meter value and the text it was parsed from, so
queries can be re-serialized without rewriting what the user (or a model)
wrote.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from geoscene.errors import MagnitudeError, UnitError, UnknownTermError

# Exact conversion factors to meters.
_UNIT_FACTORS = {
    "m": 1.0,
    "km": 1000.0,
    "ft": 0.3048,
    "yd": 0.9144,
    "mi": 1609.344,
}

_UNIT_ALIASES = {
    "m": "m",
    "meter": "m",
    "meters": "m",
    "metre": "m",
    "metres": "m",
    "km": "km",
    "kilometer": "km",
    "kilometers": "km",
    "kilometre": "km",
    "kilometres": "km",
    "ft": "ft",
    "foot": "ft",
    "feet": "ft",
    "yd": "yd",
    "yds": "yd",
    "yard": "yd",
    "yards": "yd",
    "mi": "mi",
    "mile": "mi",
    "miles": "mi",
}

# Longest aliases first so "meters" wins over the trailing "m".
_UNIT_RE = re.compile(
    r"^(?P<magnitude>.*?)\s*(?P<unit>"
    + "|".join(sorted(_UNIT_ALIASES, key=len, reverse=True))
    + r")\.?$",
    re.IGNORECASE,
)

# Thousands separators stripped before the numeric parse: comma and thin space.
_SEPARATORS = re.compile(r"[,  ]")

_NUMBER_RE = re.compile(r"^\d+(\.\d+)?$")

_WORD_UNITS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
}
_WORD_TENS = {
    "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50,
    "sixty": 60, "seventy": 70, "eighty": 80, "ninety": 90,
}
_WORD_SCALES = {"hundred": 100, "thousand": 1000, "million": 1_000_000}


@dataclass(frozen=True)
class Distance:
    """A positive length in meters plus the text it came from."""

    meters: float
    original_text: str

    def __post_init__(self):
        if not self.meters > 0:
            raise ValueError(f"distance must be positive, got {self.meters}")

    @classmethod
    def from_meters(cls, meters: float) -> Distance:
        """Build a Distance with a canonical "<n> m" text form."""
        return cls(meters=float(meters), original_text=f"{meters:g} m")


def _parse_spelled_number(words: list[str]) -> float:
    """Parse an English cardinal ("one hundred", "twenty-five thousand")."""
    total = 0.0
    current = 0.0
    seen = False
    for raw in words:
        for word in raw.split("-"):
            if word == "and" and seen:
                continue
            if word == "a" and current == 0:
                # "a hundred meters"
                current = 1
                seen = True
            elif word in _WORD_UNITS:
                current += _WORD_UNITS[word]
                seen = True
            elif word in _WORD_TENS:
                current += _WORD_TENS[word]
                seen = True
            elif word in _WORD_SCALES:
                scale = _WORD_SCALES[word]
                if current == 0:
                    current = 1
                if scale == 100:
                    current *= scale
                else:
                    total += current * scale
                    current = 0
                seen = True
            else:
                raise MagnitudeError(f"not a number word: {word!r}")
    if not seen:
        raise MagnitudeError("empty magnitude")
    return total + current


def parse_distance(text: str) -> Distance:
    """Parse a length like "16460 m", "85,800 yards" or "one hundred meters".

    The magnitude may be digits (with comma/thin-space thousands separators
    and an optional decimal point) or a spelled-out English cardinal up to
    millions.  Raises UnitError for an unknown or missing unit token and
    MagnitudeError when no number can be read.
    """
    stripped = text.strip()
    if not stripped:
        raise MagnitudeError("empty distance text")
    match = _UNIT_RE.match(stripped)
    if match is None:
        raise UnitError(f"no recognized unit in {text!r}")
    magnitude_text = match.group("magnitude").strip()
    unit = _UNIT_ALIASES[match.group("unit").lower()]
    if not magnitude_text:
        raise MagnitudeError(f"no magnitude in {text!r}")

    plain = _SEPARATORS.sub("", magnitude_text)
    if _NUMBER_RE.match(plain):
        value = float(plain)
    else:
        value = _parse_spelled_number(magnitude_text.lower().split())
    if value <= 0:
        raise MagnitudeError(f"distance must be positive: {text!r}")
    return Distance(meters=value * _UNIT_FACTORS[unit], original_text=stripped)


# Relative spatial terms and the concrete maximum distance each one stands
# for.  The table is closed: terms outside it raise UnknownTermError.
RELATIVE_SPATIAL_TERMS: dict[str, float] = {
    "not far away": 25.0,
    "enclosed by": 25.0,
    "next to": 50.0,
    "among": 50.0,
    "adjacent": 50.0,
    "beside": 50.0,
    "side by side": 50.0,
    "at": 50.0,
    "next door": 50.0,
    "near": 100.0,
    "around it": 100.0,
    "in close distance to": 100.0,
    "surrounded from": 100.0,
    "in front of": 150.0,
    "close to": 150.0,
    "opposite from": 150.0,
    "in surroundings": 150.0,
    "on the opposite side": 250.0,
    "on the edge": 1000.0,
    "nearby": 2000.0,
}

# Distinct distances, ascending: one entry per table row.
RELATIVE_TERM_DISTANCES = sorted(set(RELATIVE_SPATIAL_TERMS.values()))


def resolve_relative_spatial_term(term: str) -> Distance:
    """Map a vague proximity phrase ("next to", "nearby") to its distance.

    The returned Distance carries the canonical metric text ("50 m") so it
    can be embedded directly in a scene query.
    """
    key = " ".join(term.strip().lower().split())
    meters = RELATIVE_SPATIAL_TERMS.get(key)
    if meters is None:
        raise UnknownTermError(f"not a relative spatial term: {term!r}")
    return Distance.from_meters(meters)
