"""Naive full-scan query evaluator: the independent oracle for search tests.

Evaluates the query AST directly against document text with no index,
postings, or caching involved.
"""

import random

from statutes.model import tokenize
from statutes.search import And, FacetFilter, Or, Phrase, Term


def _para_terms(paragraph):
    return [t.surface.lower() for t in tokenize(paragraph.text)]


def doc_matches(doc, node) -> bool:
    if isinstance(node, Term):
        return any(node.term in _para_terms(p) for p in doc.paragraphs)
    if isinstance(node, Phrase):
        target = list(node.terms)
        k = len(target)
        for p in doc.paragraphs:
            terms = _para_terms(p)
            if any(terms[i : i + k] == target for i in range(len(terms) - k + 1)):
                return True
        return False
    if isinstance(node, And):
        return all(doc_matches(doc, c) for c in node.children)
    if isinstance(node, Or):
        return any(doc_matches(doc, c) for c in node.children)
    if isinstance(node, FacetFilter):
        if node.name == "state":
            return doc.state == node.value
        if node.name == "census_related":
            actual = str(any(p.census_related for p in doc.paragraphs)).lower()
            return actual == node.value
        return False
    raise TypeError(node)


def scan_matches(corpus, node) -> set:
    return {doc.id for doc in corpus if doc_matches(doc, node)}


VOCAB = ["alcohol", "liquor", "beverage", "census", "federal", "population",
         "county", "judge", "court", "tax", "school", "road"]
STATES = ["TN", "NY", "IL", "CA"]


def random_corpus(rng: random.Random, make_doc, max_docs=30):
    n = rng.randint(1, max_docs)
    docs = []
    for i in range(n):
        paras = []
        for _ in range(rng.randint(1, 3)):
            words = rng.choices(VOCAB, k=rng.randint(1, 12))
            paras.append((" ".join(words), rng.random() < 0.3))
        docs.append(make_doc(f"doc{i:03d}", paras, state=rng.choice(STATES)))
    return docs


def random_query(rng: random.Random, depth=3):
    roll = rng.random()
    if depth == 0 or roll < 0.35:
        return Term(rng.choice(VOCAB))
    if roll < 0.5:
        return Phrase(tuple(rng.choices(VOCAB, k=rng.randint(2, 3))))
    if roll < 0.6:
        if rng.random() < 0.5:
            return FacetFilter("state", rng.choice(STATES))
        return FacetFilter("census_related", rng.choice(["true", "false"]))
    cls = And if rng.random() < 0.5 else Or
    children = tuple(
        random_query(rng, depth - 1) for _ in range(rng.randint(2, 3))
    )
    return cls(children)
