import random

import pytest

from conftest import make_doc
from search_oracle import random_corpus, random_query, scan_matches

from statutes.search import (
    And,
    DuplicateDocId,
    FacetFilter,
    Or,
    Phrase,
    QuerySyntaxError,
    Term,
    bm25_score,
    build_index,
    load_index,
    parse_query,
    save_index,
    search,
)


@pytest.fixture
def fixture_corpus():
    return [
        make_doc(
            "tn-liquor",
            ["liquor licenses shall be allocated by population", "see the federal census"],
            state="TN",
        ),
        make_doc(
            "ny-alcohol",
            [("alcohol may be sold in cities", True)],
            state="NY",
        ),
        make_doc(
            "il-roads",
            ["roads shall be maintained by the county"],
            state="IL",
        ),
        make_doc(
            "tn-split",
            ["the federal government paragraph one", "census data paragraph two"],
            state="TN",
        ),
    ]


@pytest.fixture
def fixture_index(fixture_corpus):
    return build_index(fixture_corpus)


class TestParseQuery:
    def test_liquor_query(self):
        ast = parse_query("alcohol OR liquor OR beverage")
        assert ast == Or((Term("alcohol"), Term("liquor"), Term("beverage")))

    def test_phrase_and_facet(self):
        ast = parse_query('"federal census" state:TN')
        assert ast == And((Phrase(("federal", "census")), FacetFilter("state", "TN")))

    def test_parens_and_precedence(self):
        ast = parse_query("(a OR b) c")
        assert ast == And((Or((Term("a"), Term("b"))), Term("c")))
        # OR binds looser than AND
        ast = parse_query("a b OR c")
        assert ast == Or((And((Term("a"), Term("b"))), Term("c")))

    def test_case_insensitive_keywords(self):
        assert parse_query("a or b") == parse_query("a OR b")
        assert parse_query("a and b") == And((Term("a"), Term("b")))

    def test_unbalanced_paren(self):
        with pytest.raises(QuerySyntaxError):
            parse_query("(a OR")

    def test_unbalanced_quote(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('"federal census')

    def test_empty_query(self):
        with pytest.raises(QuerySyntaxError):
            parse_query("   ")

    def test_multi_token_word_becomes_phrase(self):
        assert parse_query("10,000") == Phrase(("10", ",", "000"))


class TestBuildIndex:
    def test_empty_corpus(self):
        index = build_index([])
        hits, facets = search(index, Term("census"))
        assert hits == [] and facets == {}

    def test_postings_match_naive_scan(self, fixture_corpus, fixture_index):
        expected = scan_matches(fixture_corpus, Term("census"))
        got = {d for d, _, _ in fixture_index.postings["census"]}
        assert got == expected == {"tn-liquor", "tn-split"}

    def test_duplicate_id(self, fixture_corpus):
        with pytest.raises(DuplicateDocId):
            build_index(fixture_corpus + [fixture_corpus[0]])


class TestSearch:
    def test_or_semantics(self, fixture_index):
        hits, _ = search(fixture_index, parse_query("alcohol OR liquor OR beverage"))
        assert {h.doc_id for h in hits} == {"tn-liquor", "ny-alcohol"}

    def test_phrase_does_not_cross_paragraphs(self, fixture_index):
        hits, _ = search(fixture_index, parse_query('"federal census"'))
        assert {h.doc_id for h in hits} == {"tn-liquor"}

    def test_facet_filter(self, fixture_index):
        hits, _ = search(fixture_index, parse_query("census state:TN"))
        assert {h.doc_id for h in hits} == {"tn-liquor", "tn-split"}

    def test_facet_counts_before_pagination(self, fixture_index):
        _, facets = search(fixture_index, parse_query("federal OR county"), offset=0, limit=1)
        assert facets["state"] == {"IL": 1, "TN": 2}

    def test_unknown_term_matches_nothing(self, fixture_index):
        hits, facets = search(fixture_index, Term("zzzunknown"))
        assert hits == [] and facets == {}

    def test_snippet_brackets_matches(self, fixture_index):
        hits, _ = search(fixture_index, Term("liquor"))
        assert "[liquor]" in hits[0].snippet

    def test_sorted_score_desc_then_id(self, fixture_index):
        hits, _ = search(fixture_index, parse_query("federal OR county OR census"))
        keys = [(-h.score, h.doc_id) for h in hits]
        assert keys == sorted(keys)

    def test_pagination_concatenates(self, fixture_index):
        full, _ = search(fixture_index, parse_query("shall OR census OR the"))
        paged = []
        page = 0
        while True:
            hits, _ = search(fixture_index, parse_query("shall OR census OR the"), offset=page * 2, limit=2)
            if not hits:
                break
            paged.extend(hits)
            page += 1
        assert paged == full

    def test_scan_equivalence_randomized(self):
        rng = random.Random(1234)
        for _ in range(150):
            corpus = random_corpus(rng, make_doc, max_docs=15)
            index = build_index(corpus)
            query = random_query(rng)
            hits, _ = search(index, query)
            assert {h.doc_id for h in hits} == scan_matches(corpus, query)

    def test_bm25_monotonic_in_tf(self, fixture_corpus):
        # Same doc lengths, one more "liquor" occurrence in the second corpus.
        low = make_doc("x", ["liquor padding words here okay fine"], state="TN")
        high = make_doc("x", ["liquor padding words here okay liquor"], state="TN")
        others = fixture_corpus[1:]
        score_low = bm25_score(build_index([low] + others), "x", ["liquor"])
        score_high = bm25_score(build_index([high] + others), "x", ["liquor"])
        assert score_high > score_low


class TestPersistence:
    def test_round_trip(self, fixture_corpus, tmp_path):
        index = build_index(fixture_corpus)
        path = tmp_path / "corpus.sidx"
        save_index(index, path)
        assert path.read_text(encoding="utf-8").startswith("SIDX1\n")
        loaded = load_index(path)
        query = parse_query('"federal census" OR state:IL')
        assert search(loaded, query) == search(index, query)
        assert loaded.doc_count == index.doc_count
        assert loaded.postings == index.postings
