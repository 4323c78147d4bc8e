import pytest
from fastapi.testclient import TestClient

from conftest import make_doc
from search_oracle import scan_matches

from statutes.analytics import ParagraphAnnotation, TaggedLaw
from statutes.annotation import AnnotationService, InMemoryStore
from statutes.api import create_app
from statutes.model import DiscourseLabel, DiscourseSpan
from statutes.search import build_index, parse_query


def span_in(text, sub, label):
    start = text.index(sub)
    return DiscourseSpan(start, start + len(sub), label, sub)


@pytest.fixture
def corpus():
    return [
        make_doc("tn-liquor", ["liquor licenses shall be allocated by population"], state="TN"),
        make_doc("ny-alcohol", [("alcohol may be sold in cities", True)], state="NY"),
        make_doc("il-beverage", ["beverage taxes apply to counties"], state="IL"),
        make_doc("tn-courts", ["the trial court judge shall act"], state="TN"),
    ]


@pytest.fixture
def tagged(corpus):
    out = []
    for doc in corpus:
        text = doc.paragraphs[0].text
        spans = []
        if "judge" in text:
            spans.append(span_in(text, "the trial court judge", DiscourseLabel.SUBJECT))
            spans.append(span_in(text, "shall act", DiscourseLabel.CONSEQUENCE))
        out.append(
            TaggedLaw(
                doc=doc,
                annotations=(
                    ParagraphAnnotation(paragraph_index=0, provenance="model", spans=tuple(spans)),
                ),
            )
        )
    return out


@pytest.fixture
def client(corpus, tagged):
    service = AnnotationService(InMemoryStore(), {d.id: d for d in corpus})
    service.create_tasks([(d.id, 0) for d in corpus], k=2)
    app = create_app(build_index(corpus), tagged, service)
    return TestClient(app)


AUTH = {"Authorization": "Bearer helper-1"}


class TestSearchEndpoint:
    def test_liquor_query_matches_scan(self, client, corpus):
        resp = client.get("/api/search", params={"q": "alcohol OR liquor OR beverage"})
        assert resp.status_code == 200
        ids = {h["doc_id"] for h in resp.json()["hits"]}
        assert ids == scan_matches(corpus, parse_query("alcohol OR liquor OR beverage"))
        assert ids == {"tn-liquor", "ny-alcohol", "il-beverage"}

    def test_state_param(self, client):
        resp = client.get("/api/search", params={"q": "liquor OR alcohol", "state": "TN"})
        assert [h["doc_id"] for h in resp.json()["hits"]] == ["tn-liquor"]

    def test_syntax_error(self, client):
        resp = client.get("/api/search", params={"q": "("})
        assert resp.status_code == 400
        body = resp.json()
        assert body["code"] == "syntax_error" and body["status"] == 400

    def test_empty_query(self, client):
        assert client.get("/api/search", params={"q": " "}).status_code == 400

    def test_page_size_capped(self, client):
        resp = client.get("/api/search", params={"q": "liquor", "page_size": 10_000})
        assert resp.json()["page_size"] == 100


class TestLawEndpoint:
    def test_known_law_with_spans(self, client):
        resp = client.get("/api/laws/tn-courts")
        assert resp.status_code == 200
        body = resp.json()
        assert body["law"]["id"] == "tn-courts"
        spans = [s for a in body["annotations"] for s in a["spans"]]
        assert spans and all(s["provenance"] == "model" for s in spans)

    def test_unknown_law(self, client):
        resp = client.get("/api/laws/nope")
        assert resp.status_code == 404
        assert resp.json()["code"] == "not_found"

    def test_human_annotations_included(self, client):
        task = client.post("/api/tasks/next", headers=AUTH).json()["task"]
        client.post(
            "/api/annotations",
            headers=AUTH,
            json={"task_id": task["task_id"], "spans": [], "relations": []},
        )
        doc_id = task["doc_id"]
        annotations = client.get(f"/api/laws/{doc_id}").json()["annotations"]
        assert any(a["provenance"] == "human" for a in annotations)


class TestSpanEndpoints:
    def test_groups_sorted(self, client):
        resp = client.get("/api/spans", params={"label": "SUBJECT"})
        assert resp.status_code == 200
        groups = resp.json()["groups"]
        assert groups[0]["normalized_text"] == "the trial court judge"
        counts = [g["count"] for g in groups]
        assert counts == sorted(counts, reverse=True)

    def test_bad_label(self, client):
        resp = client.get("/api/spans", params={"label": "FOO"})
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_label"

    def test_group_laws(self, client):
        resp = client.get("/api/spans/SUBJECT/the trial court judge/laws")
        assert resp.status_code == 200
        assert [d["id"] for d in resp.json()["laws"]] == ["tn-courts"]

    def test_unknown_group(self, client):
        resp = client.get("/api/spans/SUBJECT/never said/laws")
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_group"


class TestTaskEndpoints:
    def test_fresh_token_gets_task(self, client):
        resp = client.post("/api/tasks/next", headers=AUTH)
        assert resp.status_code == 200
        body = resp.json()
        assert body["task"]["task_id"]
        assert body["paragraph"]
        assert body["ui_config"]["buttons"]

    def test_missing_token(self, client):
        assert client.post("/api/tasks/next").status_code == 401
        assert client.get("/api/stats").status_code == 401

    def test_drained_store_yields_204(self, client):
        while True:
            resp = client.post("/api/tasks/next", headers=AUTH)
            if resp.status_code == 204:
                break
            assert resp.status_code == 200

    def test_submit_and_resubmit(self, client):
        task = client.post("/api/tasks/next", headers=AUTH).json()["task"]
        payload = {"task_id": task["task_id"], "spans": [], "relations": []}
        first = client.post("/api/annotations", headers=AUTH, json=payload)
        assert first.status_code == 200 and first.json()["accepted"]
        second = client.post("/api/annotations", headers=AUTH, json=payload)
        assert second.status_code == 409
        assert second.json()["code"] == "duplicate_submission"

    def test_invalid_spans_rejected(self, client):
        task = client.post("/api/tasks/next", headers=AUTH).json()["task"]
        payload = {
            "task_id": task["task_id"],
            "spans": [{"start": 0, "end": 4, "label": "TEST", "text": "zzzz"}],
        }
        resp = client.post("/api/annotations", headers=AUTH, json=payload)
        assert resp.status_code == 400
        assert resp.json()["code"] == "invalid_spans"

    def test_stats_flow(self, client):
        fresh = client.get("/api/stats", headers=AUTH).json()
        assert fresh["tasks_completed"] == 0
        task = client.post("/api/tasks/next", headers=AUTH).json()["task"]
        client.post(
            "/api/annotations",
            headers=AUTH,
            json={"task_id": task["task_id"], "spans": []},
        )
        after = client.get("/api/stats", headers=AUTH).json()
        assert after["tasks_completed"] == 1
        assert task["task_id"] in after["tasks_seen"]

    def test_repeated_gets_side_effect_free(self, client):
        before = client.get("/api/stats", headers=AUTH).json()
        client.get("/api/spans", params={"label": "TEST"})
        client.get("/api/laws/tn-courts")
        client.get("/api/search", params={"q": "liquor"})
        assert client.get("/api/stats", headers=AUTH).json() == before
