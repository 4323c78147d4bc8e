"""Core corpus types: documents, discourse spans, tokenization, BIO codec.

Everything here is immutable after construction and safe to share across
threads. Character offsets are always counted in Unicode scalar values
(Python string indices), never bytes, so frontend and backend agree.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional


class DiscourseLabel(Enum):
    """The five discourse roles tagged on statute paragraphs.

    Ordinal mapping to 0..4 is fixed and stable across serialization.
    """

    SUBJECT = 0
    CONSEQUENCE = 1
    OBJECT = 2
    PROBE = 3
    TEST = 4

    @classmethod
    def from_name(cls, name: str) -> "DiscourseLabel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown discourse label: {name!r}") from None


# BIO tag vocabulary: O at index 0, then B-/I- pairs in label-ordinal order.
BIO_TAGS: tuple[str, ...] = ("O",) + tuple(
    f"{prefix}-{label.name}" for label in DiscourseLabel for prefix in ("B", "I")
)
TAG_TO_INDEX: dict[str, int] = {t: i for i, t in enumerate(BIO_TAGS)}
NUM_TAGS = len(BIO_TAGS)  # 11


class CorpusError(Exception):
    """Base for all corpus-model validation errors."""


class OutOfBounds(CorpusError):
    def __init__(self, span_index: int, message: str):
        self.span_index = span_index
        super().__init__(f"span {span_index}: {message}")


class SliceMismatch(CorpusError):
    def __init__(self, span_index: int, expected: str, actual: str):
        self.span_index = span_index
        super().__init__(
            f"span {span_index}: stored text {actual!r} does not match slice {expected!r}"
        )


class Overlap(CorpusError):
    def __init__(self, span_index: int, other_index: int):
        self.span_index = span_index
        self.other_index = other_index
        super().__init__(f"span {span_index} overlaps span {other_index}")


class MisalignedSpan(CorpusError):
    def __init__(self, span_index: int, message: str):
        self.span_index = span_index
        super().__init__(f"span {span_index}: {message}")


class LengthMismatch(CorpusError):
    pass


class InvalidBio(CorpusError):
    pass


@dataclass(frozen=True)
class Token:
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class DiscourseSpan:
    start: int  # char offset, inclusive
    end: int  # char offset, exclusive
    label: DiscourseLabel
    text: str

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "label": self.label.name,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscourseSpan":
        return cls(
            start=d["start"],
            end=d["end"],
            label=DiscourseLabel.from_name(d["label"]),
            text=d["text"],
        )


@dataclass(frozen=True)
class Relation:
    """A typed link between two spans of one annotation.

    Relations are stored and transported but not modeled further.
    """

    from_span: int
    to_span: int
    kind: str

    def validate(self, num_spans: int) -> None:
        if self.from_span == self.to_span:
            raise CorpusError("relation endpoints must differ")
        for idx in (self.from_span, self.to_span):
            if not 0 <= idx < num_spans:
                raise CorpusError(f"relation references span {idx} of {num_spans}")

    def to_dict(self) -> dict:
        return {"from_span": self.from_span, "to_span": self.to_span, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "Relation":
        return cls(from_span=d["from_span"], to_span=d["to_span"], kind=d["kind"])


@dataclass(frozen=True)
class Paragraph:
    index: int
    text: str
    census_related: bool = False

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("paragraph index must be non-negative")
        if not self.text.strip():
            raise ValueError("paragraph text empty after whitespace normalization")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "text": self.text,
            "census_related": self.census_related,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Paragraph":
        return cls(
            index=d["index"], text=d["text"], census_related=d["census_related"]
        )


@dataclass(frozen=True)
class Citation:
    raw: str
    title: Optional[str] = None
    chapter: Optional[str] = None
    section: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "title": self.title,
            "chapter": self.chapter,
            "section": self.section,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Citation":
        return cls(
            raw=d["raw"],
            title=d.get("title"),
            chapter=d.get("chapter"),
            section=d.get("section"),
        )

    def sort_key(self) -> tuple:
        def num(x):
            return int(x) if x is not None and x.isdigit() else 0

        return (num(self.title), num(self.chapter), num(self.section), self.raw)


@dataclass(frozen=True)
class LawDocument:
    id: str
    state: str
    citation: Citation
    heading: str
    paragraphs: tuple[Paragraph, ...]
    source_url: str
    retrieved_at: str  # UTC timestamp, ISO 8601

    def __post_init__(self):
        if not self.paragraphs:
            raise ValueError("document must have at least one paragraph")
        for i, p in enumerate(self.paragraphs):
            if p.index != i:
                raise ValueError(f"paragraph indices must be contiguous from 0, got {p.index} at {i}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "citation": self.citation.to_dict(),
            "heading": self.heading,
            "paragraphs": [p.to_dict() for p in self.paragraphs],
            "source_url": self.source_url,
            "retrieved_at": self.retrieved_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LawDocument":
        return cls(
            id=d["id"],
            state=d["state"],
            citation=Citation.from_dict(d["citation"]),
            heading=d["heading"],
            paragraphs=tuple(Paragraph.from_dict(p) for p in d["paragraphs"]),
            source_url=d["source_url"],
            retrieved_at=d["retrieved_at"],
        )


# A token is either a maximal run of letters/digits or a single
# non-whitespace, non-alphanumeric character (underscore counts as
# punctuation here, not as a word character).
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_", re.UNICODE)


def tokenize(text: str) -> list[Token]:
    """Deterministic, offset-faithful tokenization.

    Letter/digit runs become single tokens; every punctuation mark is its
    own token; whitespace never appears inside a token.
    """
    return [
        Token(start=m.start(), end=m.end(), surface=m.group())
        for m in _TOKEN_RE.finditer(text)
    ]


def validate_spans(text: str, spans: Iterable[DiscourseSpan]) -> list[DiscourseSpan]:
    """Check bounds, slice agreement, and pairwise non-overlap.

    Returns the spans sorted by start offset.
    """
    spans = list(spans)
    for i, s in enumerate(spans):
        if not (0 <= s.start < s.end <= len(text)):
            raise OutOfBounds(i, f"[{s.start}, {s.end}) outside text of length {len(text)}")
        if text[s.start : s.end] != s.text:
            raise SliceMismatch(i, text[s.start : s.end], s.text)
    order = sorted(range(len(spans)), key=lambda i: (spans[i].start, spans[i].end))
    for a, b in zip(order, order[1:]):
        if spans[a].end > spans[b].start:
            raise Overlap(b, a)
    return [spans[i] for i in order]


def snap_spans_to_tokens(
    text: str, tokens: list[Token], spans: list[DiscourseSpan]
) -> list[DiscourseSpan]:
    """Repair gold spans whose boundaries cut tokens by snapping outward.

    Human annotations may split tokens; this widens each offending boundary
    to the enclosing token's boundary and warns. Codec-level misalignment
    remains an error (see spans_to_bio).
    """
    starts = {t.start for t in tokens}
    ends = {t.end for t in tokens}
    out = []
    for i, s in enumerate(spans):
        start, end = s.start, s.end
        if start not in starts:
            for t in tokens:
                if t.start < start < t.end:
                    start = t.start
                    break
        if end not in ends:
            for t in tokens:
                if t.start < end < t.end:
                    end = t.end
                    break
        if (start, end) != (s.start, s.end):
            warnings.warn(
                f"span {i} snapped from [{s.start},{s.end}) to [{start},{end})",
                stacklevel=2,
            )
            s = DiscourseSpan(start=start, end=end, label=s.label, text=text[start:end])
        out.append(s)
    return validate_spans(text, out)


def is_valid_bio(tags: list[str]) -> bool:
    """True iff no I-L follows O, start, or a tag of a different label."""
    prev = "O"
    for tag in tags:
        if tag not in TAG_TO_INDEX:
            return False
        if tag.startswith("I-"):
            label = tag[2:]
            if prev == "O" or prev[2:] != label:
                return False
        prev = tag
    return True


def spans_to_bio(tokens: list[Token], spans: list[DiscourseSpan]) -> list[str]:
    """Encode non-overlapping, token-aligned spans as per-token BIO tags."""
    tags = ["O"] * len(tokens)
    starts = {t.start: i for i, t in enumerate(tokens)}
    ends = {t.end: i for i, t in enumerate(tokens)}
    for si, s in enumerate(spans):
        if s.start not in starts or s.end not in ends:
            raise MisalignedSpan(si, f"[{s.start},{s.end}) cuts a token boundary")
        first, last = starts[s.start], ends[s.end]
        tags[first] = f"B-{s.label.name}"
        for t in range(first + 1, last + 1):
            tags[t] = f"I-{s.label.name}"
    return tags


def bio_to_spans(text: str, tokens: list[Token], tags: list[str]) -> list[DiscourseSpan]:
    """Decode BIO tags back to character-offset spans.

    Tolerant: a dangling I-L (after O or a different label) is read as B-L.
    Inverse of spans_to_bio on aligned spans.
    """
    if len(tags) != len(tokens):
        raise LengthMismatch(f"{len(tags)} tags for {len(tokens)} tokens")
    spans: list[DiscourseSpan] = []
    cur_label: Optional[str] = None
    cur_first: int = -1
    cur_last: int = -1

    def flush():
        nonlocal cur_label
        if cur_label is not None:
            start = tokens[cur_first].start
            end = tokens[cur_last].end
            spans.append(
                DiscourseSpan(
                    start=start,
                    end=end,
                    label=DiscourseLabel[cur_label],
                    text=text[start:end],
                )
            )
            cur_label = None

    for i, tag in enumerate(tags):
        if tag == "O":
            flush()
            continue
        if tag not in TAG_TO_INDEX:
            raise InvalidBio(f"unknown tag {tag!r} at position {i}")
        prefix, label = tag.split("-", 1)
        if prefix == "B" or cur_label != label:
            flush()
            cur_label = label
            cur_first = i
        cur_last = i
    flush()
    return spans
