"""License-plate post-processing: grammar validation, voting and hashing."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import WeakSalt

DEFAULT_PATTERNS = ("AA00AA0000", "AA00A0000")
DEFAULT_CONFUSIONS = {
    "O": "0", "0": "O",
    "I": "1", "1": "I",
    "B": "8", "8": "B",
    "S": "5", "5": "S",
    "Z": "2", "2": "Z",
    "G": "6", "6": "G",
}
MIN_SALT_BYTES = 16
T_VOTE = 7
MIN_READINGS = 3


def _template_regex(template: str) -> str:
    out = []
    for ch in template:
        if ch == "A":
            out.append("[A-Z]")
        elif ch == "0":
            out.append("[0-9]")
        else:
            raise ValueError(f"bad template character {ch!r} (use A for letters, 0 for digits)")
    return "".join(out)


def _slot_ok(slot: str, ch: str) -> bool:
    return ch.isdigit() if slot == "0" else ("A" <= ch <= "Z")


@dataclass(frozen=True)
class PlateGrammar:
    patterns: tuple[str, ...] = DEFAULT_PATTERNS
    confusion_table: Mapping[str, frozenset] = field(
        default_factory=lambda: {k: frozenset(v) for k, v in DEFAULT_CONFUSIONS.items()})

    def __post_init__(self) -> None:
        if not self.patterns:
            raise ValueError("grammar needs at least one pattern")
        for c, subs in self.confusion_table.items():
            for s in subs:
                if c not in self.confusion_table.get(s, ()):
                    raise ValueError(f"confusion table not symmetric: {c}->{s} without {s}->{c}")
        object.__setattr__(self, "_regexes", tuple(re.compile(_template_regex(p) + r"\Z") for p in self.patterns))

    def matches(self, text: str) -> bool:
        return any(r.match(text) for r in self._regexes)  # type: ignore[attr-defined]

    @classmethod
    def from_dict(cls, raw: dict) -> "PlateGrammar":
        table: dict[str, set] = {}
        for k, v in raw.get("confusions", {}).items():
            for s in v:
                table.setdefault(k, set()).add(s)
                table.setdefault(s, set()).add(k)
        return cls(
            patterns=tuple(raw.get("patterns", DEFAULT_PATTERNS)),
            confusion_table={k: frozenset(v) for k, v in table.items()} if table else
            {k: frozenset(v) for k, v in DEFAULT_CONFUSIONS.items()},
        )

    @classmethod
    def load(cls, path) -> "PlateGrammar":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


DEFAULT_GRAMMAR = PlateGrammar()


class Verdict(str, enum.Enum):
    VALID = "VALID"
    CORRECTED = "CORRECTED"
    INVALID = "INVALID"


@dataclass(frozen=True)
class Validation:
    verdict: Verdict
    text: Optional[str] = None

    @property
    def usable(self) -> bool:
        return self.verdict is not Verdict.INVALID


def validate(text: str, grammar: PlateGrammar = DEFAULT_GRAMMAR) -> Validation:
    """Check ``text`` against the grammar, repairing at most one confused character."""
    if grammar.matches(text):
        return Validation(Verdict.VALID, text)
    candidates = set()
    for pattern in grammar.patterns:
        if len(pattern) != len(text):
            continue
        for i, (slot, ch) in enumerate(zip(pattern, text)):
            if _slot_ok(slot, ch):
                continue
            for sub in grammar.confusion_table.get(ch, ()):
                if not _slot_ok(slot, sub):
                    continue
                cand = text[:i] + sub + text[i + 1:]
                if grammar.matches(cand):
                    candidates.add(cand)
    if len(candidates) == 1:
        return Validation(Verdict.CORRECTED, candidates.pop())
    return Validation(Verdict.INVALID)


@dataclass(frozen=True)
class BallotReading:
    text: str
    confidence: float
    frame_index: int


@dataclass
class PlateBallot:
    """Rolling window of the last ``capacity`` plate readings for one track."""

    track_id: int
    readings: list[BallotReading] = field(default_factory=list)
    capacity: int = T_VOTE
    decided: Optional[tuple[str, float]] = None

    def add(self, text: str, confidence: float, frame_index: int) -> None:
        self.readings.append(BallotReading(text, confidence, frame_index))
        self.readings.sort(key=lambda r: r.frame_index)
        if len(self.readings) > self.capacity:
            del self.readings[: len(self.readings) - self.capacity]


def vote(ballot: PlateBallot | Sequence[BallotReading], grammar: PlateGrammar = DEFAULT_GRAMMAR,
         min_readings: int = MIN_READINGS) -> Optional[tuple[str, float]]:
    """Confidence-sum vote over validated readings.

    Returns ``(text, share)`` where ``share`` is the winner's confidence sum
    divided by the total over usable readings, or ``None`` below ``min_readings``.
    """
    readings = ballot.readings if isinstance(ballot, PlateBallot) else ballot
    groups: dict[str, list[float]] = {}
    latest: dict[str, int] = {}
    for r in readings:
        v = validate(r.text, grammar)
        if not v.usable:
            continue
        groups.setdefault(v.text, []).append(r.confidence)
        latest[v.text] = max(latest.get(v.text, r.frame_index), r.frame_index)
    if sum(len(g) for g in groups.values()) < min_readings:
        return None
    # fsum keeps scores independent of reading order
    scores = {t: math.fsum(g) for t, g in groups.items()}
    total = math.fsum(c for g in groups.values() for c in g)
    winner = min(scores, key=lambda t: (-scores[t], -latest[t], t))
    share = scores[winner] / total if total > 0 else 0.0
    if isinstance(ballot, PlateBallot):
        ballot.decided = (winner, share)
    return winner, share


def hash_plate(text: str, salt: bytes) -> str:
    """Lowercase hex SHA-256 of ``salt || text``."""
    if len(salt) < MIN_SALT_BYTES:
        raise WeakSalt(f"salt must be at least {MIN_SALT_BYTES} bytes, got {len(salt)}")
    return hashlib.sha256(salt + text.encode("utf-8")).hexdigest()


def plate_regex(grammar: PlateGrammar = DEFAULT_GRAMMAR) -> re.Pattern:
    """Regex that finds any grammar-valid plate as a substring."""
    return re.compile("|".join(_template_regex(p) for p in sorted(grammar.patterns, key=len, reverse=True)))
