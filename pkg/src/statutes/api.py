"""HTTP service: full-text search, span browsing, and annotation endpoints.

Handlers are stateless between requests; the only mutable shared state is
the annotation task store, which serializes writers via compare-and-set.
Task assignment mutates, so it lives under POST /api/tasks/next.
Endpoint schemas are documented in docs/api.md.
"""

from __future__ import annotations

from typing import Optional, Sequence

from fastapi import FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import analytics, annotation, search
from .analytics import TaggedLaw
from .annotation import AnnotationRecord, AnnotationService, UiConfig
from .model import DiscourseLabel, DiscourseSpan, Relation
from .search import Index, QuerySyntaxError

MAX_PAGE_SIZE = 100
DEFAULT_PAGE_SIZE = 10


class ApiError(Exception):
    """status in {400,401,404,409,500}; code is machine-stable."""

    def __init__(self, status: int, code: str, message: str):
        assert status in (400, 401, 404, 409, 500)
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)

    def to_body(self) -> dict:
        return {"status": self.status, "code": self.code, "message": self.message}


def _require_helper(authorization: Optional[str]) -> str:
    if not authorization or not authorization.startswith("Bearer "):
        raise ApiError(401, "unauthorized", "missing or malformed bearer token")
    token = authorization[len("Bearer ") :].strip()
    if not token:
        raise ApiError(401, "unauthorized", "empty bearer token")
    return token


def create_app(
    index: Index,
    tagged_corpus: Sequence[TaggedLaw],
    service: AnnotationService,
    ui_config: UiConfig = UiConfig(),
    static_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="statutes", docs_url=None, redoc_url=None)
    tagged_by_id = {law.doc.id: law for law in tagged_corpus}

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.to_body())

    @app.get("/api/search")
    def api_search(
        q: str = Query(default=""),
        state: Optional[str] = None,
        page: int = Query(default=0, ge=0),
        page_size: int = Query(default=DEFAULT_PAGE_SIZE, ge=1),
    ):
        if not q.strip():
            raise ApiError(400, "syntax_error", "query must be non-empty")
        page_size = min(page_size, MAX_PAGE_SIZE)
        try:
            ast = search.parse_query(q)
        except QuerySyntaxError as e:
            raise ApiError(400, "syntax_error", str(e))
        if state is not None:
            ast = search.And((ast, search.FacetFilter("state", state)))
        all_hits, facet_counts = search.search(index, ast)
        start = page * page_size
        hits = all_hits[start : start + page_size]
        return {
            "total": len(all_hits),
            "page": page,
            "page_size": page_size,
            "hits": [
                {
                    "doc_id": h.doc_id,
                    "score": h.score,
                    "snippet": h.snippet,
                    "matched_paragraphs": list(h.matched_paragraphs),
                }
                for h in hits
            ],
            "facet_counts": facet_counts,
        }

    def _human_annotations(doc_id: str) -> list[dict]:
        out = []
        for record in service.store.list_records():
            rec_doc, _, para = record.task_id.partition("#")
            if rec_doc != doc_id:
                continue
            out.append(
                {
                    "paragraph_index": int(para),
                    "provenance": "human",
                    "helper_id": record.helper_id,
                    "spans": [
                        {**s.to_dict(), "provenance": "human"} for s in record.spans
                    ],
                    "relations": [r.to_dict() for r in record.relations],
                }
            )
        return out

    @app.get("/api/laws/{doc_id}")
    def api_law(doc_id: str):
        law = tagged_by_id.get(doc_id)
        if law is None:
            raise ApiError(404, "not_found", f"no law with id {doc_id!r}")
        annotations = [
            {
                "paragraph_index": a.paragraph_index,
                "provenance": a.provenance,
                "spans": [
                    {**s.to_dict(), "provenance": a.provenance} for s in a.spans
                ],
            }
            for a in law.annotations
        ]
        return {
            "law": law.doc.to_dict(),
            "annotations": annotations + _human_annotations(doc_id),
        }

    def _parse_label(label: str) -> DiscourseLabel:
        try:
            return DiscourseLabel.from_name(label)
        except ValueError as e:
            raise ApiError(400, "bad_label", str(e))

    @app.get("/api/spans")
    def api_spans(
        label: str,
        page: int = Query(default=0, ge=0),
        page_size: int = Query(default=DEFAULT_PAGE_SIZE, ge=1),
    ):
        parsed = _parse_label(label)
        page_size = min(page_size, MAX_PAGE_SIZE)
        groups = analytics.aggregate_spans(tagged_corpus, parsed)
        start = page * page_size
        return {
            "label": parsed.name,
            "total": len(groups),
            "groups": [
                {
                    "normalized_text": g.normalized_text,
                    "count": g.count,
                    "law_ids": sorted(g.law_ids),
                }
                for g in groups[start : start + page_size]
            ],
        }

    @app.get("/api/spans/{label}/{key}/laws")
    def api_span_laws(label: str, key: str):
        parsed = _parse_label(label)
        try:
            docs = analytics.laws_for_span(tagged_corpus, parsed, key)
        except analytics.UnknownGroup as e:
            raise ApiError(404, "unknown_group", str(e))
        return {"laws": [d.to_dict() for d in docs]}

    @app.post("/api/tasks/next")
    def api_next_task(authorization: Optional[str] = Header(default=None)):
        helper_id = _require_helper(authorization)
        task = service.assign_task(helper_id)
        if task is None:
            return Response(status_code=204)
        text = service.paragraph_text(task.doc_id, task.paragraph_index)
        return {
            "task": task.to_dict(),
            "paragraph": text,
            "ui_config": ui_config.to_client_dict(),
        }

    @app.post("/api/annotations")
    def api_submit(
        payload: dict,
        authorization: Optional[str] = Header(default=None),
    ):
        helper_id = _require_helper(authorization)
        try:
            record = AnnotationRecord(
                task_id=payload["task_id"],
                helper_id=helper_id,
                spans=tuple(DiscourseSpan.from_dict(s) for s in payload.get("spans", [])),
                relations=tuple(
                    Relation.from_dict(r) for r in payload.get("relations", [])
                ),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ApiError(400, "invalid_spans", f"malformed payload: {e}")
        try:
            task = service.submit_annotation(record)
        except annotation.DuplicateSubmission as e:
            raise ApiError(409, "duplicate_submission", str(e))
        except annotation.NotAssigned as e:
            raise ApiError(409, "not_assigned", str(e))
        except annotation.InvalidSpans as e:
            raise ApiError(400, "invalid_spans", str(e))
        except annotation.UnknownParagraph as e:
            raise ApiError(404, "not_found", str(e))
        return {"accepted": True, "task": task.to_dict()}

    @app.get("/api/stats")
    def api_stats(authorization: Optional[str] = Header(default=None)):
        helper_id = _require_helper(authorization)
        stats = service.session_stats(helper_id)
        return stats.to_dict()

    if static_dir is not None:
        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="app")

    return app
