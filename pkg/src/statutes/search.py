"""Inverted index with boolean/phrase/facet queries and BM25 ranking.

The index is immutable after build; rebuilds swap the whole object.
No stemming or stopwords: boolean semantics stay exactly equivalent to
a naive full-scan evaluator, which the tests exploit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import log
from typing import Optional, Sequence, Union

from .model import LawDocument, tokenize

BM25_K1 = 1.2
BM25_B = 0.75
INDEX_MAGIC = "SIDX1"


class SearchError(Exception):
    pass


class DuplicateDocId(SearchError):
    pass


class QuerySyntaxError(SearchError):
    def __init__(self, position: int, message: str):
        self.position = position
        super().__init__(f"at {position}: {message}")


# --- query AST ---------------------------------------------------------


@dataclass(frozen=True)
class Term:
    term: str


@dataclass(frozen=True)
class Phrase:
    terms: tuple[str, ...]


@dataclass(frozen=True)
class And:
    children: tuple["QueryAst", ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("And requires children")


@dataclass(frozen=True)
class Or:
    children: tuple["QueryAst", ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("Or requires children")


@dataclass(frozen=True)
class FacetFilter:
    name: str
    value: str


QueryAst = Union[Term, Phrase, And, Or, FacetFilter]


def _lex(q: str) -> list[tuple[str, str, int]]:
    """(kind, value, position) tokens: LPAREN, RPAREN, PHRASE, FACET, WORD."""
    out = []
    i = 0
    n = len(q)
    while i < n:
        ch = q[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            out.append(("LPAREN", ch, i))
            i += 1
        elif ch == ")":
            out.append(("RPAREN", ch, i))
            i += 1
        elif ch == '"':
            j = q.find('"', i + 1)
            if j == -1:
                raise QuerySyntaxError(i, "unbalanced quote")
            out.append(("PHRASE", q[i + 1 : j], i))
            i = j + 1
        else:
            j = i
            while j < n and not q[j].isspace() and q[j] not in '()"':
                j += 1
            word = q[i:j]
            if ":" in word:
                out.append(("FACET", word, i))
            else:
                out.append(("WORD", word, i))
            i = j
    return out


def _terms_of(text: str) -> tuple[str, ...]:
    return tuple(t.surface.lower() for t in tokenize(text))


class _Parser:
    """Recursive descent; OR binds looser than AND, adjacency is AND."""

    def __init__(self, q: str):
        self.q = q
        self.tokens = _lex(q)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def parse(self) -> QueryAst:
        if not self.tokens:
            raise QuerySyntaxError(0, "empty query")
        node = self.or_expr()
        if self.peek() is not None:
            raise QuerySyntaxError(self.peek()[2], "unexpected token")
        return node

    def or_expr(self) -> QueryAst:
        children = [self.and_expr()]
        while self._keyword("OR"):
            children.append(self.and_expr())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def and_expr(self) -> QueryAst:
        children = [self.unit()]
        while True:
            if self._keyword("AND"):
                children.append(self.unit())
                continue
            tok = self.peek()
            if tok is None or tok[0] == "RPAREN":
                break
            if tok[0] == "WORD" and tok[1].upper() == "OR":
                break
            children.append(self.unit())
        return children[0] if len(children) == 1 else And(tuple(children))

    def _keyword(self, kw: str) -> bool:
        tok = self.peek()
        if tok is not None and tok[0] == "WORD" and tok[1].upper() == kw:
            self.pos += 1
            return True
        return False

    def unit(self) -> QueryAst:
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError(len(self.q), "expected a term")
        kind, value, position = tok
        self.pos += 1
        if kind == "LPAREN":
            node = self.or_expr()
            closing = self.peek()
            if closing is None or closing[0] != "RPAREN":
                raise QuerySyntaxError(position, "unbalanced parenthesis")
            self.pos += 1
            return node
        if kind == "RPAREN":
            raise QuerySyntaxError(position, "unexpected ')'")
        if kind == "PHRASE":
            terms = _terms_of(value)
            if not terms:
                raise QuerySyntaxError(position, "empty phrase")
            return Phrase(terms)
        if kind == "FACET":
            name, _, facet_value = value.partition(":")
            if not name or not facet_value:
                raise QuerySyntaxError(position, "malformed facet filter")
            return FacetFilter(name.lower(), facet_value)
        terms = _terms_of(value)
        if not terms:
            raise QuerySyntaxError(position, f"unusable term {value!r}")
        return Term(terms[0]) if len(terms) == 1 else Phrase(terms)


def parse_query(q: str) -> QueryAst:
    return _Parser(q).parse()


# --- index --------------------------------------------------------------


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    snippet: str
    matched_paragraphs: tuple[int, ...]


FACET_NAMES = ("state", "census_related")


def _doc_facets(doc: LawDocument) -> dict[str, str]:
    return {
        "state": doc.state,
        "census_related": str(any(p.census_related for p in doc.paragraphs)).lower(),
    }


@dataclass
class Index:
    postings: dict[str, list[tuple[str, int, int]]]  # term -> (doc_id, para, tf)
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    facet_index: dict[str, dict[str, set[str]]]
    docs: dict[str, LawDocument]
    # lowercased token lists per paragraph, for phrase matching and snippets
    doc_tokens: dict[str, list[list[str]]] = field(default_factory=dict)

    def document_frequency(self, term: str) -> int:
        return len({doc_id for doc_id, _, _ in self.postings.get(term, [])})


def build_index(corpus: Sequence[LawDocument]) -> Index:
    postings: dict[str, list[tuple[str, int, int]]] = {}
    doc_lengths: dict[str, int] = {}
    facet_index: dict[str, dict[str, set[str]]] = {name: {} for name in FACET_NAMES}
    docs: dict[str, LawDocument] = {}
    doc_tokens: dict[str, list[list[str]]] = {}

    for doc in corpus:
        if doc.id in docs:
            raise DuplicateDocId(doc.id)
        docs[doc.id] = doc
        total = 0
        para_tokens = []
        for para in doc.paragraphs:
            terms = [t.surface.lower() for t in tokenize(para.text)]
            para_tokens.append(terms)
            total += len(terms)
            counts: dict[str, int] = {}
            for term in terms:
                counts[term] = counts.get(term, 0) + 1
            for term, tf in counts.items():
                postings.setdefault(term, []).append((doc.id, para.index, tf))
        doc_tokens[doc.id] = para_tokens
        doc_lengths[doc.id] = total
        for name, value in _doc_facets(doc).items():
            facet_index[name].setdefault(value, set()).add(doc.id)

    for plist in postings.values():
        plist.sort(key=lambda e: (e[0], e[1]))
    n = len(docs)
    avg = (sum(doc_lengths.values()) / n) if n else 0.0
    return Index(
        postings=postings,
        doc_lengths=doc_lengths,
        doc_count=n,
        avg_doc_length=avg,
        facet_index=facet_index,
        docs=docs,
        doc_tokens=doc_tokens,
    )


def _phrase_in_paragraph(terms: Sequence[str], para_terms: Sequence[str]) -> bool:
    k = len(terms)
    target = list(terms)
    return any(para_terms[i : i + k] == target for i in range(len(para_terms) - k + 1))


def _matched_docs(index: Index, node: QueryAst) -> set[str]:
    if isinstance(node, Term):
        return {doc_id for doc_id, _, _ in index.postings.get(node.term, [])}
    if isinstance(node, Phrase):
        candidates = None
        for term in node.terms:
            docs = {doc_id for doc_id, _, _ in index.postings.get(term, [])}
            candidates = docs if candidates is None else candidates & docs
            if not candidates:
                return set()
        return {
            doc_id
            for doc_id in candidates
            if any(
                _phrase_in_paragraph(node.terms, para)
                for para in index.doc_tokens[doc_id]
            )
        }
    if isinstance(node, And):
        result = _matched_docs(index, node.children[0])
        for child in node.children[1:]:
            result &= _matched_docs(index, child)
        return result
    if isinstance(node, Or):
        result = set()
        for child in node.children:
            result |= _matched_docs(index, child)
        return result
    if isinstance(node, FacetFilter):
        return set(index.facet_index.get(node.name, {}).get(node.value, set()))
    raise TypeError(f"unknown query node {node!r}")


def query_terms(node: QueryAst) -> list[str]:
    """Every Term and Phrase member, in AST order, deduplicated."""
    out: list[str] = []

    def walk(n):
        if isinstance(n, Term):
            out.append(n.term)
        elif isinstance(n, Phrase):
            out.extend(n.terms)
        elif isinstance(n, (And, Or)):
            for c in n.children:
                walk(c)

    walk(node)
    seen = set()
    unique = []
    for t in out:
        if t not in seen:
            seen.add(t)
            unique.append(t)
    return unique


def bm25_score(index: Index, doc_id: str, terms: Sequence[str]) -> float:
    dl = index.doc_lengths[doc_id]
    norm = BM25_K1 * (1 - BM25_B + BM25_B * dl / index.avg_doc_length)
    score = 0.0
    for term in terms:
        tf = sum(
            entry_tf
            for entry_doc, _, entry_tf in index.postings.get(term, [])
            if entry_doc == doc_id
        )
        if tf == 0:
            continue
        df = index.document_frequency(term)
        idf = log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))
        score += idf * tf * (BM25_K1 + 1) / (tf + norm)
    return score


SNIPPET_WINDOW = 8


def _snippet(index: Index, doc_id: str, terms: Sequence[str]) -> tuple[str, tuple[int, ...]]:
    term_set = set(terms)
    matched_paragraphs = []
    first: Optional[tuple[int, int]] = None  # (para index, token position)
    for pi, para_terms in enumerate(index.doc_tokens[doc_id]):
        hit = next((ti for ti, t in enumerate(para_terms) if t in term_set), None)
        if hit is not None:
            matched_paragraphs.append(index.docs[doc_id].paragraphs[pi].index)
            if first is None:
                first = (pi, hit)
    if first is None:
        return "", tuple(matched_paragraphs)
    pi, ti = first
    para_terms = index.doc_tokens[doc_id][pi]
    lo = max(0, ti - SNIPPET_WINDOW)
    hi = min(len(para_terms), ti + SNIPPET_WINDOW + 1)
    pieces = [
        f"[{t}]" if t in term_set else t for t in para_terms[lo:hi]
    ]
    return " ".join(pieces), tuple(matched_paragraphs)


def search(
    index: Index,
    ast: QueryAst,
    offset: int = 0,
    limit: Optional[int] = None,
) -> tuple[list[SearchHit], dict[str, dict[str, int]]]:
    """Boolean match, BM25 rank, facet counts over the full matched set.

    Facet counts are computed before pagination; unknown terms match nothing.
    """
    matched = _matched_docs(index, ast)
    terms = query_terms(ast)

    facet_counts: dict[str, dict[str, int]] = {}
    for name, values in index.facet_index.items():
        counts = {
            value: len(ids & matched) for value, ids in values.items() if ids & matched
        }
        if counts:
            facet_counts[name] = dict(sorted(counts.items()))

    scored = []
    for doc_id in matched:
        snippet, matched_paras = _snippet(index, doc_id, terms)
        scored.append(
            SearchHit(
                doc_id=doc_id,
                score=bm25_score(index, doc_id, terms),
                snippet=snippet,
                matched_paragraphs=matched_paras,
            )
        )
    scored.sort(key=lambda h: (-h.score, h.doc_id))
    end = None if limit is None else offset + limit
    return scored[offset:end], facet_counts


# --- persistence --------------------------------------------------------


def save_index(index: Index, path) -> None:
    """Versioned structured-text file: magic line + one JSON body line."""
    body = {
        "postings": {t: [list(e) for e in pl] for t, pl in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "facet_index": {
            name: {value: sorted(ids) for value, ids in values.items()}
            for name, values in index.facet_index.items()
        },
        "docs": [index.docs[doc_id].to_dict() for doc_id in sorted(index.docs)],
        "doc_tokens": {doc_id: toks for doc_id, toks in sorted(index.doc_tokens.items())},
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(INDEX_MAGIC + "\n")
        json.dump(body, f, ensure_ascii=False, sort_keys=True)
        f.write("\n")


def load_index(path) -> Index:
    with open(path, "r", encoding="utf-8") as f:
        magic = f.readline().strip()
        if magic != INDEX_MAGIC:
            raise SearchError(f"bad index file magic: {magic!r}")
        body = json.load(f)
    return Index(
        postings={
            t: [(d, p, tf) for d, p, tf in pl] for t, pl in body["postings"].items()
        },
        doc_lengths=body["doc_lengths"],
        doc_count=body["doc_count"],
        avg_doc_length=body["avg_doc_length"],
        facet_index={
            name: {value: set(ids) for value, ids in values.items()}
            for name, values in body["facet_index"].items()
        },
        docs={d["id"]: LawDocument.from_dict(d) for d in body["docs"]},
        doc_tokens=body["doc_tokens"],
    )
