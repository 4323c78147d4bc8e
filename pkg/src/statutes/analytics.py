"""Corpus-wide aggregation of tagged spans and population-threshold analysis.

All functions are pure over immutable tagged corpora. A "tagged law" is a
LawDocument plus per-paragraph span annotations with provenance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .model import DiscourseLabel, DiscourseSpan, LawDocument


class AnalyticsError(Exception):
    pass


class UnknownGroup(AnalyticsError):
    pass


@dataclass(frozen=True)
class ParagraphAnnotation:
    paragraph_index: int
    provenance: str  # "model" or "human"
    spans: tuple[DiscourseSpan, ...]

    def to_dict(self) -> dict:
        return {
            "paragraph_index": self.paragraph_index,
            "provenance": self.provenance,
            "spans": [s.to_dict() for s in self.spans],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParagraphAnnotation":
        return cls(
            paragraph_index=d["paragraph_index"],
            provenance=d["provenance"],
            spans=tuple(DiscourseSpan.from_dict(s) for s in d["spans"]),
        )


@dataclass(frozen=True)
class TaggedLaw:
    doc: LawDocument
    annotations: tuple[ParagraphAnnotation, ...]

    def to_dict(self) -> dict:
        d = self.doc.to_dict()
        d["annotations"] = [a.to_dict() for a in self.annotations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaggedLaw":
        annotations = tuple(
            ParagraphAnnotation.from_dict(a) for a in d.pop("annotations", [])
        )
        return cls(doc=LawDocument.from_dict(d), annotations=annotations)


def write_tagged(laws: Sequence[TaggedLaw], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for law in laws:
            f.write(json.dumps(law.to_dict(), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def load_tagged(path) -> list[TaggedLaw]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(TaggedLaw.from_dict(json.loads(line)))
    return out


# --- span aggregation -----------------------------------------------------

_WS_RE = re.compile(r"\s+")


def normalize_span_text(text: str) -> str:
    return _WS_RE.sub(" ", text).strip().lower()


@dataclass(frozen=True)
class SpanGroup:
    label: DiscourseLabel
    normalized_text: str
    count: int
    law_ids: frozenset[str]


def aggregate_spans(
    tagged_corpus: Sequence[TaggedLaw], label: DiscourseLabel
) -> list[SpanGroup]:
    """Groups by exact normalized text, sorted by (count desc, text asc)."""
    counts: dict[str, int] = {}
    law_ids: dict[str, set[str]] = {}
    for law in tagged_corpus:
        for annotation in law.annotations:
            for span in annotation.spans:
                if span.label is not label:
                    continue
                key = normalize_span_text(span.text)
                counts[key] = counts.get(key, 0) + 1
                law_ids.setdefault(key, set()).add(law.doc.id)
    groups = [
        SpanGroup(
            label=label,
            normalized_text=key,
            count=counts[key],
            law_ids=frozenset(law_ids[key]),
        )
        for key in counts
    ]
    groups.sort(key=lambda g: (-g.count, g.normalized_text))
    return groups


def laws_for_span(
    tagged_corpus: Sequence[TaggedLaw],
    label: DiscourseLabel,
    normalized_text: str,
) -> list[LawDocument]:
    """The laws of one group, sorted by citation."""
    for group in aggregate_spans(tagged_corpus, label):
        if group.normalized_text == normalized_text:
            docs = [law.doc for law in tagged_corpus if law.doc.id in group.law_ids]
            docs.sort(key=lambda d: d.citation.sort_key())
            return docs
    raise UnknownGroup(f"({label.name}, {normalized_text!r})")


# --- population thresholds --------------------------------------------------

_UNITS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
}
_TENS = {
    "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50,
    "sixty": 60, "seventy": 70, "eighty": 80, "ninety": 90,
}
_SCALES = {"hundred": 100, "thousand": 1_000, "million": 1_000_000}
_NUMBER_WORDS = set(_UNITS) | set(_TENS) | set(_SCALES) | {"and"}

_WORD_SEQ_RE = re.compile(
    r"\b(?:" + "|".join(sorted(_UNITS) + sorted(_TENS) + sorted(_SCALES))
    + r")(?:[\s-]+(?:and[\s-]+)?(?:"
    + "|".join(sorted(_UNITS) + sorted(_TENS) + sorted(_SCALES))
    + r"))*\b",
    re.IGNORECASE,
)
_DIGITS_RE = re.compile(r"\d{1,3}(?:,\d{3})+|\d+")
_PAREN_DIGITS_RE = re.compile(r"\s*\(\s*(\d{1,3}(?:,\d{3})*|\d+)\s*\)")


def words_to_number(phrase: str) -> Optional[int]:
    """Compositional English numerals up to millions; None when unparseable."""
    words = re.split(r"[\s-]+", phrase.lower().strip())
    total = 0
    current = 0
    seen = False
    for word in words:
        if word == "and":
            continue
        if word in _UNITS:
            current += _UNITS[word]
            seen = True
        elif word in _TENS:
            current += _TENS[word]
            seen = True
        elif word == "hundred":
            current = (current or 1) * 100
            seen = True
        elif word in ("thousand", "million"):
            total += (current or 1) * _SCALES[word]
            current = 0
            seen = True
        else:
            return None
    return total + current if seen else None


# Sentinels from the Unicode private-use area delimit parsed numerals in
# the normalized text; statute text never contains them.
_S, _E = "", ""


def _normalize_numerals(text: str) -> str:
    """Replace every numeral (words, digits, or words+(digits)) with a sentinel.

    A parenthesized digit numeral immediately after a number-word phrase
    wins on conflict.
    """
    spans: list[tuple[int, int, int]] = []  # (start, end, value)
    consumed = [False] * len(text)

    for m in _WORD_SEQ_RE.finditer(text):
        value = words_to_number(m.group())
        if value is None:
            continue
        end = m.end()
        paren = _PAREN_DIGITS_RE.match(text, end)
        if paren:
            value = int(paren.group(1).replace(",", ""))
            end = paren.end()
        spans.append((m.start(), end, value))
        for i in range(m.start(), end):
            consumed[i] = True

    for m in _DIGITS_RE.finditer(text):
        if any(consumed[m.start() : m.end()]):
            continue
        value = int(m.group().replace(",", ""))
        end = m.end()
        paren = _PAREN_DIGITS_RE.match(text, end)
        if paren and not any(consumed[end : paren.end()]):
            value = int(paren.group(1).replace(",", ""))
            end = paren.end()
        spans.append((m.start(), end, value))
        for i in range(m.start(), end):
            consumed[i] = True

    spans.sort()
    out = []
    pos = 0
    for start, end, value in spans:
        out.append(text[pos:start])
        out.append(f"{_S}{value}{_E}")
        pos = end
    out.append(text[pos:])
    return "".join(out).lower()


_NUM = f"{_S}(\\d+){_E}"
_TWO_SIDED_RE = re.compile(
    rf"not (?:less|fewer) than {_NUM} (?:nor|or) more than {_NUM}"
)
_NOT_LESS_RE = re.compile(rf"not (?:less|fewer) than {_NUM}")
_NOT_MORE_RE = re.compile(rf"not more than {_NUM}")
_LOWER_RE = re.compile(rf"(?:above|more than|over|exceeding|greater than) {_NUM}|{_NUM} or more")
_UPPER_RE = re.compile(rf"(?:below|fewer than|less than|under) {_NUM}|{_NUM} or (?:fewer|less)")


@dataclass(frozen=True)
class PopulationInterval:
    lower: Optional[int]
    upper: Optional[int]
    source_text: str

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")

    @property
    def bounded(self) -> bool:
        return self.lower is not None and self.upper is not None

    @property
    def width(self) -> Optional[int]:
        return self.upper - self.lower if self.bounded else None


def extract_population_threshold(test_text: str) -> list[PopulationInterval]:
    """Pure and total: unmatched text yields []."""
    normalized = _normalize_numerals(_WS_RE.sub(" ", test_text))
    intervals: list[tuple[int, PopulationInterval]] = []

    def consume(pattern, build):
        nonlocal normalized
        while True:
            m = pattern.search(normalized)
            if m is None:
                return
            intervals.append((m.start(), build(m)))
            normalized = normalized[: m.start()] + " " * (m.end() - m.start()) + normalized[m.end():]

    consume(
        _TWO_SIDED_RE,
        lambda m: PopulationInterval(int(m.group(1)), int(m.group(2)), m.group()),
    )
    consume(_NOT_LESS_RE, lambda m: PopulationInterval(int(m.group(1)), None, m.group()))
    consume(_NOT_MORE_RE, lambda m: PopulationInterval(None, int(m.group(1)), m.group()))
    consume(
        _UPPER_RE,
        lambda m: PopulationInterval(None, int(m.group(1) or m.group(2)), m.group()),
    )
    consume(
        _LOWER_RE,
        lambda m: PopulationInterval(int(m.group(1) or m.group(2)), None, m.group()),
    )
    intervals.sort(key=lambda pair: pair[0])
    return [interval for _, interval in intervals]


@dataclass(frozen=True)
class ThresholdReport:
    total_laws: int
    total_with_bounded_interval: int
    frac_width_lt: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "total_laws": self.total_laws,
            "total_with_bounded_interval": self.total_with_bounded_interval,
            "frac_width_lt": {str(w): f for w, f in self.frac_width_lt.items()},
        }


def threshold_width_report(
    tagged_corpus: Sequence[TaggedLaw],
    state_filter: Optional[str] = None,
    width_cutoffs: Sequence[int] = (100, 500),
) -> ThresholdReport:
    """Width fractions over laws having at least one bounded interval.

    A law counts toward frac_width_lt(w) when its narrowest bounded TEST
    interval is narrower than w.
    """
    laws = [
        law for law in tagged_corpus
        if state_filter is None or law.doc.state == state_filter
    ]
    min_widths: list[int] = []
    for law in laws:
        widths = []
        for annotation in law.annotations:
            for span in annotation.spans:
                if span.label is not DiscourseLabel.TEST:
                    continue
                for interval in extract_population_threshold(span.text):
                    if interval.bounded:
                        widths.append(interval.width)
        if widths:
            min_widths.append(min(widths))
    total = len(min_widths)
    frac = {
        w: (sum(1 for mw in min_widths if mw < w) / total if total else 0.0)
        for w in width_cutoffs
    }
    return ThresholdReport(
        total_laws=len(laws),
        total_with_bounded_interval=total,
        frac_width_lt=frac,
    )
