"""Annotation collection: tasks, no-repeat assignment, submissions, agreement.

The store is the single synchronization point. Every mutation goes
through compare-and-set on versioned entries; conflicting writers get
StoreConflict and retry. Two store implementations: in-memory, and an
append-only file log that replays to the same state.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from itertools import combinations
from typing import Optional, Sequence

from importlib import resources

from .model import CorpusError, DiscourseSpan, LawDocument, Relation, validate_spans

DEFAULT_K = 2


class AnnotationError(Exception):
    pass


class UnknownParagraph(AnnotationError):
    pass


class NotAssigned(AnnotationError):
    pass


class DuplicateSubmission(AnnotationError):
    pass


class InvalidSpans(AnnotationError):
    pass


class InsufficientRecords(AnnotationError):
    pass


class StoreConflict(AnnotationError):
    """Optimistic-concurrency collision; the operation is retryable."""


class AuditFailure(AnnotationError):
    pass


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    doc_id: str
    paragraph_index: int
    required_annotations: int
    completed: int = 0
    assigned_helpers: frozenset[str] = frozenset()
    submitted_helpers: frozenset[str] = frozenset()

    def __post_init__(self):
        if not 0 <= self.completed <= self.required_annotations:
            raise ValueError("completed must lie in [0, K]")

    @property
    def retired(self) -> bool:
        return self.completed == self.required_annotations

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "doc_id": self.doc_id,
            "paragraph_index": self.paragraph_index,
            "required_annotations": self.required_annotations,
            "completed": self.completed,
            "assigned_helpers": sorted(self.assigned_helpers),
            "submitted_helpers": sorted(self.submitted_helpers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationTask":
        return cls(
            task_id=d["task_id"],
            doc_id=d["doc_id"],
            paragraph_index=d["paragraph_index"],
            required_annotations=d["required_annotations"],
            completed=d["completed"],
            assigned_helpers=frozenset(d["assigned_helpers"]),
            submitted_helpers=frozenset(d["submitted_helpers"]),
        )


@dataclass(frozen=True)
class HelperStats:
    helper_id: str
    tasks_completed: int = 0
    tasks_seen: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.tasks_completed > len(self.tasks_seen):
            raise ValueError("tasks_completed cannot exceed tasks_seen")

    def to_dict(self) -> dict:
        return {
            "helper_id": self.helper_id,
            "tasks_completed": self.tasks_completed,
            "tasks_seen": sorted(self.tasks_seen),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HelperStats":
        return cls(
            helper_id=d["helper_id"],
            tasks_completed=d["tasks_completed"],
            tasks_seen=frozenset(d["tasks_seen"]),
        )


@dataclass(frozen=True)
class AnnotationRecord:
    task_id: str
    helper_id: str
    spans: tuple[DiscourseSpan, ...]
    relations: tuple[Relation, ...] = ()
    submitted_at: str = ""
    provenance: str = "human"

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "helper_id": self.helper_id,
            "spans": [s.to_dict() for s in self.spans],
            "relations": [r.to_dict() for r in self.relations],
            "submitted_at": self.submitted_at,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationRecord":
        return cls(
            task_id=d["task_id"],
            helper_id=d["helper_id"],
            spans=tuple(DiscourseSpan.from_dict(s) for s in d["spans"]),
            relations=tuple(Relation.from_dict(r) for r in d["relations"]),
            submitted_at=d["submitted_at"],
            provenance=d["provenance"],
        )


# --- stores ----------------------------------------------------------------

RECORD_LOG_VERSION = "ALOG1"


class TaskStore:
    """Versioned entries (tasks, helper stats) plus an append-only record log.

    get() returns (value, version); put() fails with StoreConflict unless
    expected_version matches the current one (None means "must not exist").
    """

    def get_task(self, task_id: str): ...
    def put_task(self, task: AnnotationTask, expected_version: Optional[int]): ...
    def list_tasks(self) -> list[AnnotationTask]: ...
    def get_helper(self, helper_id: str): ...
    def put_helper(self, stats: HelperStats, expected_version: Optional[int]): ...
    def append_record(self, record: AnnotationRecord): ...
    def list_records(self) -> list[AnnotationRecord]: ...


class InMemoryStore(TaskStore):
    def __init__(self):
        self._lock = threading.Lock()
        self._tasks: dict[str, tuple[AnnotationTask, int]] = {}
        self._helpers: dict[str, tuple[HelperStats, int]] = {}
        self._records: list[AnnotationRecord] = []

    def _cas(self, table, key, value, expected_version):
        with self._lock:
            current = table.get(key)
            current_version = current[1] if current else None
            if current_version != expected_version:
                raise StoreConflict(
                    f"{key}: expected version {expected_version}, found {current_version}"
                )
            table[key] = (value, (expected_version or 0) + 1)

    def get_task(self, task_id):
        with self._lock:
            return self._tasks.get(task_id, (None, None))

    def put_task(self, task, expected_version):
        self._cas(self._tasks, task.task_id, task, expected_version)

    def list_tasks(self):
        with self._lock:
            return [t for t, _ in self._tasks.values()]

    def get_helper(self, helper_id):
        with self._lock:
            return self._helpers.get(helper_id, (None, None))

    def put_helper(self, stats, expected_version):
        self._cas(self._helpers, stats.helper_id, stats, expected_version)

    def append_record(self, record):
        with self._lock:
            self._records.append(record)

    def list_records(self):
        with self._lock:
            return list(self._records)


class FileStore(TaskStore):
    """Append-only JSONL log; every write is one line, state is the replay.

    Line schema: {"v": "ALOG1", "kind": task|helper|record, ...payload}.
    """

    def __init__(self, path):
        self.path = path
        self._inner = InMemoryStore()
        self._lock = threading.Lock()
        try:
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        self._replay(json.loads(line))
        except FileNotFoundError:
            pass

    def _replay(self, entry):
        if entry.get("v") != RECORD_LOG_VERSION:
            raise AnnotationError(f"unknown log line version: {entry.get('v')!r}")
        kind = entry["kind"]
        if kind == "task":
            task = AnnotationTask.from_dict(entry["value"])
            self._inner._tasks[task.task_id] = (task, entry["version"])
        elif kind == "helper":
            stats = HelperStats.from_dict(entry["value"])
            self._inner._helpers[stats.helper_id] = (stats, entry["version"])
        elif kind == "record":
            self._inner._records.append(AnnotationRecord.from_dict(entry["value"]))
        else:
            raise AnnotationError(f"unknown log line kind: {kind!r}")

    def _append_line(self, entry):
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, ensure_ascii=False, sort_keys=True))
            f.write("\n")

    def get_task(self, task_id):
        return self._inner.get_task(task_id)

    def put_task(self, task, expected_version):
        with self._lock:
            self._inner.put_task(task, expected_version)
            self._append_line({
                "v": RECORD_LOG_VERSION,
                "kind": "task",
                "version": (expected_version or 0) + 1,
                "value": task.to_dict(),
            })

    def list_tasks(self):
        return self._inner.list_tasks()

    def get_helper(self, helper_id):
        return self._inner.get_helper(helper_id)

    def put_helper(self, stats, expected_version):
        with self._lock:
            self._inner.put_helper(stats, expected_version)
            self._append_line({
                "v": RECORD_LOG_VERSION,
                "kind": "helper",
                "version": (expected_version or 0) + 1,
                "value": stats.to_dict(),
            })

    def append_record(self, record):
        with self._lock:
            self._inner.append_record(record)
            self._append_line({
                "v": RECORD_LOG_VERSION,
                "kind": "record",
                "value": record.to_dict(),
            })

    def list_records(self):
        return self._inner.list_records()


# --- service -----------------------------------------------------------------

MAX_CAS_RETRIES = 25


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class AnnotationService:
    def __init__(self, store: TaskStore, corpus: dict[str, LawDocument]):
        self.store = store
        self.corpus = corpus

    def paragraph_text(self, doc_id: str, paragraph_index: int) -> str:
        doc = self.corpus.get(doc_id)
        if doc is None or not 0 <= paragraph_index < len(doc.paragraphs):
            raise UnknownParagraph(f"{doc_id}[{paragraph_index}]")
        return doc.paragraphs[paragraph_index].text

    def create_tasks(
        self, paragraph_refs: Sequence[tuple[str, int]], k: int = DEFAULT_K
    ) -> list[AnnotationTask]:
        if k < 1:
            raise ValueError("k must be >= 1")
        tasks = []
        for doc_id, paragraph_index in paragraph_refs:
            self.paragraph_text(doc_id, paragraph_index)  # raises UnknownParagraph
            task = AnnotationTask(
                task_id=f"{doc_id}#{paragraph_index}",
                doc_id=doc_id,
                paragraph_index=paragraph_index,
                required_annotations=k,
            )
            self.store.put_task(task, expected_version=None)
            tasks.append(task)
        return tasks

    def assign_task(self, helper_id: str) -> Optional[AnnotationTask]:
        """Pick the most-completed unretired task the helper has never seen.

        Ties break toward the lowest task_id. The assignment is recorded
        atomically; None means no eligible task exists.
        """
        if not helper_id:
            raise ValueError("helper_id must be non-empty")
        for _ in range(MAX_CAS_RETRIES):
            candidates = [
                t for t in self.store.list_tasks()
                if not t.retired and helper_id not in t.assigned_helpers
            ]
            if not candidates:
                return None
            chosen = min(candidates, key=lambda t: (-t.completed, t.task_id))
            current, version = self.store.get_task(chosen.task_id)
            if current is None or current.retired or helper_id in current.assigned_helpers:
                continue
            updated = replace(
                current, assigned_helpers=current.assigned_helpers | {helper_id}
            )
            try:
                self.store.put_task(updated, expected_version=version)
            except StoreConflict:
                continue
            self._record_seen(helper_id, updated.task_id)
            return updated
        raise StoreConflict(f"assignment for {helper_id!r} kept colliding")

    def _record_seen(self, helper_id: str, task_id: str) -> None:
        for _ in range(MAX_CAS_RETRIES):
            stats, version = self.store.get_helper(helper_id)
            if stats is None:
                stats = HelperStats(helper_id=helper_id)
            updated = replace(stats, tasks_seen=stats.tasks_seen | {task_id})
            try:
                self.store.put_helper(updated, expected_version=version)
                return
            except StoreConflict:
                continue
        raise StoreConflict(f"helper stats update for {helper_id!r} kept colliding")

    def submit_annotation(self, record: AnnotationRecord) -> AnnotationTask:
        for _ in range(MAX_CAS_RETRIES):
            task, version = self.store.get_task(record.task_id)
            if task is None:
                raise UnknownParagraph(record.task_id)
            if record.helper_id not in task.assigned_helpers:
                raise NotAssigned(f"{record.helper_id!r} was never assigned {record.task_id}")
            if record.helper_id in task.submitted_helpers:
                raise DuplicateSubmission(f"{record.helper_id!r} already submitted {record.task_id}")

            text = self.paragraph_text(task.doc_id, task.paragraph_index)
            try:
                spans = validate_spans(text, record.spans)
            except CorpusError as e:
                raise InvalidSpans(str(e)) from e
            for relation in record.relations:
                try:
                    relation.validate(len(spans))
                except CorpusError as e:
                    raise InvalidSpans(str(e)) from e

            stamped = replace(
                record,
                spans=tuple(spans),
                submitted_at=record.submitted_at or _utc_now(),
            )
            updated = replace(
                task,
                completed=task.completed + 1,
                submitted_helpers=task.submitted_helpers | {record.helper_id},
            )
            try:
                self.store.put_task(updated, expected_version=version)
            except StoreConflict:
                continue  # reread and revalidate against the newer version
            self.store.append_record(stamped)
            self._record_completed(record.helper_id)
            return updated
        raise StoreConflict(f"submission for {record.task_id!r} kept colliding")

    def _record_completed(self, helper_id: str) -> None:
        for _ in range(MAX_CAS_RETRIES):
            stats, version = self.store.get_helper(helper_id)
            if stats is None:
                stats = HelperStats(helper_id=helper_id)
            updated = replace(stats, tasks_completed=stats.tasks_completed + 1)
            try:
                self.store.put_helper(updated, expected_version=version)
                return
            except StoreConflict:
                continue
        raise StoreConflict(f"helper stats update for {helper_id!r} kept colliding")

    def session_stats(self, helper_id: str) -> HelperStats:
        """One snapshot read; unknown helpers get zeroed stats."""
        stats, _ = self.store.get_helper(helper_id)
        return stats or HelperStats(helper_id=helper_id)

    def audit(self) -> None:
        """Verify store counters against recomputation from the record log."""
        records = self.store.list_records()
        by_task: dict[str, list[AnnotationRecord]] = {}
        by_helper: dict[str, int] = {}
        for r in records:
            by_task.setdefault(r.task_id, []).append(r)
            by_helper[r.helper_id] = by_helper.get(r.helper_id, 0) + 1
        for task in self.store.list_tasks():
            recs = by_task.get(task.task_id, [])
            if task.completed != len(recs):
                raise AuditFailure(
                    f"{task.task_id}: completed={task.completed} but {len(recs)} records"
                )
            if task.submitted_helpers != {r.helper_id for r in recs}:
                raise AuditFailure(f"{task.task_id}: submitted helper set mismatch")
        for helper_id, count in by_helper.items():
            stats, _ = self.store.get_helper(helper_id)
            if stats is None or stats.tasks_completed != count:
                raise AuditFailure(f"{helper_id}: completed counter mismatch")


# --- agreement ----------------------------------------------------------------


def pairwise_agreement(records: Sequence[AnnotationRecord]) -> float:
    """Mean span-level F1 over annotator pairs; exact (start, end, label) match."""
    if len(records) < 2:
        raise InsufficientRecords("agreement needs at least two records")
    f1s = []
    for a, b in combinations(records, 2):
        set_a = {(s.start, s.end, s.label) for s in a.spans}
        set_b = {(s.start, s.end, s.label) for s in b.spans}
        if not set_a and not set_b:
            f1s.append(1.0)
            continue
        common = len(set_a & set_b)
        if common == 0:
            f1s.append(0.0)
            continue
        precision = common / len(set_a)
        recall = common / len(set_b)
        f1s.append(2 * precision * recall / (precision + recall))
    return sum(f1s) / len(f1s)


# --- static task pages ----------------------------------------------------------

DEFAULT_BUTTONS = (
    ("SUBJECT", "#a6e22e"),
    ("CONSEQUENCE", "#ae81ff"),
    ("OBJECT", "#66d9ef"),
    ("PROBE", "#f92672"),
    ("TEST", "#e6db74"),
)


@dataclass(frozen=True)
class UiConfig:
    page_height: int = 600
    buttons: tuple[tuple[str, str], ...] = DEFAULT_BUTTONS
    relations: tuple[str, ...] = ("depends-on",)
    pretag: bool = False
    pretag_spans: tuple[DiscourseSpan, ...] = ()
    endpoint: str = "static"  # API base URL, or "static" for AMT mode

    def __post_init__(self):
        if not self.buttons:
            raise ValueError("buttons must be non-empty")
        colors = [c for _, c in self.buttons]
        if len(set(colors)) != len(colors):
            raise ValueError("button colors must be distinct")

    def to_client_dict(self) -> dict:
        return {
            "page_height": self.page_height,
            "buttons": [{"name": n, "color": c} for n, c in self.buttons],
            "relations": list(self.relations),
            "pretag": self.pretag,
            "pretag_spans": [s.to_dict() for s in self.pretag_spans],
            "endpoint": self.endpoint,
        }


_PAGE_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Paragraph annotation task</title>
<style>
body {{ font-family: Georgia, serif; margin: 2rem auto; max-width: 46rem; }}
#annotate-text {{ line-height: 1.7; border: 1px solid #ccc; padding: 1rem; }}
.annotate-button {{ margin: 0.2rem; padding: 0.3rem 0.8rem; border: 1px solid #888; cursor: pointer; }}
#annotate-spans li {{ margin: 0.2rem 0; }}
</style>
</head>
<body>
<h1>Tag this paragraph</h1>
<div id="annotate-buttons"></div>
<div id="annotate-text"></div>
<ul id="annotate-spans"></ul>
<form id="annotate-form" method="post" action="{form_action}">
<input type="hidden" name="annotations" id="annotations" value="">
<button type="submit">Submit annotation</button>
</form>
<script id="annotate-config" type="application/json">{config_json}</script>
<script>{script}</script>
</body>
</html>
"""


def _annotator_script() -> str:
    return resources.files("statutes").joinpath("assets/annotator.js").read_text("utf-8")


def compile_static_task_page(
    paragraph_text: str,
    ui_config: UiConfig = UiConfig(),
    task_id: str = "",
    form_action: str = "",
) -> str:
    """One self-contained HTML document: inlined script, embedded text and
    config, no external resource references. Deterministic for fixed inputs.
    """
    if not paragraph_text.strip():
        raise ValueError("paragraph text must be non-empty")
    config = {
        "task_id": task_id,
        "paragraph": paragraph_text,
        **ui_config.to_client_dict(),
    }
    return _PAGE_TEMPLATE.format(
        form_action=form_action,
        config_json=json.dumps(config, ensure_ascii=False, sort_keys=True)
        .replace("</", "<\\/"),
        script=_annotator_script(),
    )
