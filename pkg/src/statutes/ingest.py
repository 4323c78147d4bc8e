"""Turning raw statute sources into the corpus format.

Fetching honors a politeness contract (bounded retries with exponential
backoff, per-host spacing, robots.txt); parsing is pure. The corpus file
is UTF-8 line-delimited JSON, one LawDocument per line.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.robotparser
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence
from urllib.parse import urlsplit, urlunsplit

import requests

from .model import Citation, LawDocument, Paragraph, tokenize


class IngestError(Exception):
    pass


class ExhaustedRetries(IngestError):
    def __init__(self, url: str, attempts: int):
        self.url = url
        self.attempts = attempts
        super().__init__(f"{url}: gave up after {attempts} attempts")


class FetchTimeout(IngestError):
    def __init__(self, url: str, attempts: int):
        self.url = url
        self.attempts = attempts
        super().__init__(f"{url}: timed out after {attempts} attempts")


class RobotsDisallowed(IngestError):
    def __init__(self, url: str):
        self.url = url
        super().__init__(f"{url}: disallowed by robots.txt")


class UnparseableCitation(IngestError):
    pass


class EmptyDocument(IngestError):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


@dataclass(frozen=True)
class FetchPolicy:
    max_retries: int = 3
    base_backoff: float = 500.0  # milliseconds
    backoff_factor: float = 2.0
    per_host_delay: float = 1000.0  # milliseconds
    request_timeout: float = 10000.0  # milliseconds
    respect_robots: bool = True

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.base_backoff <= 0:
            raise ValueError("base_backoff must be > 0")
        if self.backoff_factor < 1:
            raise ValueError("backoff_factor must be >= 1")


@dataclass(frozen=True)
class RawDocument:
    url: str
    body: str
    fetched_at: str
    status: int

    def __post_init__(self):
        if not 200 <= self.status <= 599:
            raise ValueError(f"status out of range: {self.status}")


RETRYABLE_STATUSES = frozenset({429, *range(500, 600)})


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class Fetcher:
    """One session: cookies persist across retries and requests.

    Per-host spacing holds under concurrent callers; the host-clock map
    is the single synchronization point.
    """

    def __init__(self, policy: FetchPolicy):
        self.policy = policy
        self.session = requests.Session()
        self._lock = threading.Lock()
        self._next_allowed: dict[str, float] = {}
        self._robots: dict[str, urllib.robotparser.RobotFileParser] = {}

    def _wait_for_host(self, host: str) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                allowed = self._next_allowed.get(host, 0.0)
                if now >= allowed:
                    self._next_allowed[host] = now + self.policy.per_host_delay / 1000.0
                    return
                wait = allowed - now
            time.sleep(wait)

    def _robots_allows(self, url: str) -> bool:
        host = urlsplit(url).netloc
        rp = self._robots.get(host)
        if rp is None:
            rp = urllib.robotparser.RobotFileParser()
            robots_url = urlunsplit((urlsplit(url).scheme, host, "/robots.txt", "", ""))
            try:
                self._wait_for_host(host)
                resp = self.session.get(
                    robots_url, timeout=self.policy.request_timeout / 1000.0
                )
                if resp.status_code == 200:
                    rp.parse(resp.text.splitlines())
                else:
                    rp.allow_all = True
            except requests.RequestException:
                rp.allow_all = True
            self._robots[host] = rp
        return rp.can_fetch("*", url)

    def fetch(self, url: str) -> RawDocument:
        policy = self.policy
        if policy.respect_robots and not self._robots_allows(url):
            raise RobotsDisallowed(url)
        host = urlsplit(url).netloc
        attempts = policy.max_retries + 1
        last_was_timeout = False
        for attempt in range(attempts):
            if attempt > 0:
                delay = policy.base_backoff * policy.backoff_factor ** (attempt - 1)
                time.sleep(delay / 1000.0)
            self._wait_for_host(host)
            try:
                resp = self.session.get(
                    url, timeout=policy.request_timeout / 1000.0
                )
            except requests.Timeout:
                last_was_timeout = True
                continue
            except requests.RequestException:
                last_was_timeout = False
                continue
            if resp.status_code in RETRYABLE_STATUSES:
                last_was_timeout = False
                continue
            return RawDocument(
                url=url, body=resp.text, fetched_at=_utc_now(), status=resp.status_code
            )
        if last_was_timeout:
            raise FetchTimeout(url, attempts)
        raise ExhaustedRetries(url, attempts)


def fetch_with_retry(url: str, policy: FetchPolicy) -> RawDocument:
    """Single-shot convenience wrapper around a fresh Fetcher session."""
    return Fetcher(policy).fetch(url)


# --- parsing ------------------------------------------------------------

_CITATION_RE = re.compile(r"§\s*(\d+)-(\d+)-(\d+)")
_WS_RE = re.compile(r"\s+")


def parse_citation(citation_raw: str) -> Citation:
    m = _CITATION_RE.search(citation_raw)
    if m is None:
        # UnparseableCitation handled by fallback: raw retained, numerals absent
        return Citation(raw=citation_raw)
    return Citation(
        raw=citation_raw, title=m.group(1), chapter=m.group(2), section=m.group(3)
    )


def parse_statute(
    raw_text: str,
    state: str,
    citation_raw: str,
    heading: str = "",
    source_url: str = "",
    retrieved_at: Optional[str] = None,
) -> LawDocument:
    """Blank-line paragraph splitting with whitespace normalization.

    Deterministic id: "<state>:<citation_raw>". Idempotent on its own
    rendered output (render_statute).
    """
    if not raw_text.strip():
        raise EmptyDocument("statute text is empty")
    blocks = re.split(r"\n\s*\n", raw_text)
    paragraphs = []
    for block in blocks:
        text = _WS_RE.sub(" ", block).strip()
        if text:
            paragraphs.append(
                Paragraph(index=len(paragraphs), text=text, census_related=False)
            )
    if not paragraphs:
        raise EmptyDocument("statute text has no paragraphs")
    return LawDocument(
        id=f"{state}:{citation_raw}",
        state=state,
        citation=parse_citation(citation_raw),
        heading=_WS_RE.sub(" ", heading).strip(),
        paragraphs=tuple(paragraphs),
        source_url=source_url,
        retrieved_at=retrieved_at or _utc_now(),
    )


def render_statute(doc: LawDocument) -> str:
    return "\n\n".join(p.text for p in doc.paragraphs)


# --- census filtering ----------------------------------------------------

DEFAULT_CENSUS_PHRASES = (
    "federal census",
    "census of",
    "decennial census",
)
DEFAULT_CENSUS_WINDOW = 5
_ACCORDING_RE = re.compile(r"according to the(?:\s+\S+){0,6}?\s+census", re.IGNORECASE)


@dataclass(frozen=True)
class CensusKeywordConfig:
    phrases: tuple[str, ...] = DEFAULT_CENSUS_PHRASES
    window: int = DEFAULT_CENSUS_WINDOW
    window_pair: tuple[str, str] = ("population", "census")

    @classmethod
    def load(cls, path) -> "CensusKeywordConfig":
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        return cls(
            phrases=tuple(d.get("phrases", DEFAULT_CENSUS_PHRASES)),
            window=d.get("window", DEFAULT_CENSUS_WINDOW),
            window_pair=tuple(d.get("window_pair", ("population", "census"))),
        )


def is_census_related(
    paragraph_text: str, config: CensusKeywordConfig = CensusKeywordConfig()
) -> bool:
    lower = paragraph_text.lower()
    if any(phrase in lower for phrase in config.phrases):
        return True
    if _ACCORDING_RE.search(paragraph_text):
        return True
    terms = [t.surface.lower() for t in tokenize(paragraph_text)]
    a, b = config.window_pair
    pos_a = [i for i, t in enumerate(terms) if t == a]
    pos_b = [i for i, t in enumerate(terms) if t == b]
    return any(abs(i - j) <= config.window for i in pos_a for j in pos_b)


def flag_census_paragraphs(
    doc: LawDocument, config: CensusKeywordConfig = CensusKeywordConfig()
) -> LawDocument:
    paragraphs = tuple(
        Paragraph(index=p.index, text=p.text, census_related=is_census_related(p.text, config))
        for p in doc.paragraphs
    )
    return LawDocument(
        id=doc.id,
        state=doc.state,
        citation=doc.citation,
        heading=doc.heading,
        paragraphs=paragraphs,
        source_url=doc.source_url,
        retrieved_at=doc.retrieved_at,
    )


# --- corpus files ---------------------------------------------------------


def write_corpus(docs: Sequence[LawDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc.to_dict(), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def load_corpus(path) -> list[LawDocument]:
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                docs.append(LawDocument.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise MalformedLine(line_no, str(e)) from e
    return docs
