import random
import re

import pytest

from conftest import make_doc

from statutes.annotation import (
    AnnotationRecord,
    AnnotationService,
    AnnotationTask,
    DuplicateSubmission,
    FileStore,
    HelperStats,
    InMemoryStore,
    InsufficientRecords,
    InvalidSpans,
    NotAssigned,
    StoreConflict,
    UiConfig,
    UnknownParagraph,
    compile_static_task_page,
    pairwise_agreement,
)
from statutes.model import DiscourseLabel, DiscourseSpan, Relation


def corpus_of(n_docs, paras_per_doc=1):
    docs = {}
    for i in range(n_docs):
        doc = make_doc(
            f"law{i:03d}",
            [f"the trial court judge shall act in county {i} paragraph {j}" for j in range(paras_per_doc)],
        )
        docs[doc.id] = doc
    return docs


def service(n_docs=3, store=None):
    return AnnotationService(store or InMemoryStore(), corpus_of(n_docs))


def record_for(svc, task, helper_id, spans=()):
    return AnnotationRecord(task_id=task.task_id, helper_id=helper_id, spans=tuple(spans))


def span_in(text, sub, label=DiscourseLabel.SUBJECT):
    start = text.index(sub)
    return DiscourseSpan(start, start + len(sub), label, sub)


class TestCreateTasks:
    def test_empty(self):
        assert service().create_tasks([]) == []

    def test_three_refs(self):
        svc = service()
        tasks = svc.create_tasks([("law000", 0), ("law001", 0), ("law002", 0)], k=2)
        assert len(tasks) == 3
        assert all(t.required_annotations == 2 and t.completed == 0 for t in tasks)

    def test_bad_ref(self):
        with pytest.raises(UnknownParagraph):
            service().create_tasks([("nope", 0)])
        with pytest.raises(UnknownParagraph):
            service().create_tasks([("law000", 7)])


class TestAssignTask:
    def test_fresh_helper_gets_task(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)])
        task = svc.assign_task("helper-a")
        assert task is not None and "helper-a" in task.assigned_helpers

    def test_no_repeat(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)])
        assert svc.assign_task("helper-a") is not None
        assert svc.assign_task("helper-a") is None

    def test_prefers_most_completed(self):
        svc = service(2)
        svc.create_tasks([("law000", 0), ("law001", 0)], k=2)
        first = svc.assign_task("h1")
        svc.submit_annotation(record_for(svc, first, "h1"))
        # h2 should get the task with completed=1, not the untouched one
        chosen = svc.assign_task("h2")
        assert chosen.task_id == first.task_id
        assert chosen.completed == 1

    def test_tie_breaks_lowest_task_id(self):
        svc = service(3)
        svc.create_tasks([("law002", 0), ("law000", 0), ("law001", 0)])
        assert svc.assign_task("h1").task_id == "law000#0"

    def test_retired_tasks_skipped(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)], k=1)
        t = svc.assign_task("h1")
        svc.submit_annotation(record_for(svc, t, "h1"))
        assert svc.assign_task("h2") is None

    def test_empty_helper_id(self):
        with pytest.raises(ValueError):
            service().assign_task("")


class TestSubmit:
    def test_first_submission(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)], k=2)
        t = svc.assign_task("h1")
        updated = svc.submit_annotation(record_for(svc, t, "h1"))
        assert updated.completed == 1 and not updated.retired

    def test_second_helper_retires(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)], k=2)
        t1 = svc.assign_task("h1")
        svc.submit_annotation(record_for(svc, t1, "h1"))
        t2 = svc.assign_task("h2")
        updated = svc.submit_annotation(record_for(svc, t2, "h2"))
        assert updated.retired

    def test_duplicate_submission(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)], k=2)
        t = svc.assign_task("h1")
        svc.submit_annotation(record_for(svc, t, "h1"))
        with pytest.raises(DuplicateSubmission):
            svc.submit_annotation(record_for(svc, t, "h1"))

    def test_not_assigned(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)])
        with pytest.raises(NotAssigned):
            svc.submit_annotation(
                AnnotationRecord(task_id="law000#0", helper_id="stranger", spans=())
            )

    def test_invalid_spans(self):
        svc = service(1)
        svc.create_tasks([("law000", 0)])
        t = svc.assign_task("h1")
        bad = DiscourseSpan(0, 3, DiscourseLabel.SUBJECT, "xxx")
        with pytest.raises(InvalidSpans):
            svc.submit_annotation(record_for(svc, t, "h1", [bad]))

    def test_valid_spans_and_relations(self):
        svc = service(1)
        text = svc.paragraph_text("law000", 0)
        svc.create_tasks([("law000", 0)])
        t = svc.assign_task("h1")
        spans = [
            span_in(text, "the trial court judge"),
            span_in(text, "shall act", DiscourseLabel.CONSEQUENCE),
        ]
        rec = AnnotationRecord(
            task_id=t.task_id,
            helper_id="h1",
            spans=tuple(spans),
            relations=(Relation(0, 1, "depends-on"),),
        )
        updated = svc.submit_annotation(rec)
        assert updated.completed == 1
        stored = svc.store.list_records()[0]
        assert stored.provenance == "human"
        assert stored.submitted_at


class TestSessionStats:
    def test_fresh_helper_zeros(self):
        stats = service().session_stats("nobody")
        assert stats == HelperStats(helper_id="nobody")

    def test_after_two_submissions(self):
        svc = service(2)
        svc.create_tasks([("law000", 0), ("law001", 0)])
        for _ in range(2):
            t = svc.assign_task("h1")
            svc.submit_annotation(record_for(svc, t, "h1"))
        stats = svc.session_stats("h1")
        assert stats.tasks_completed == 2
        assert len(stats.tasks_seen) == 2

    def test_snapshot_does_not_mutate(self):
        svc = service(1)
        svc.session_stats("h1")
        assert svc.store.get_helper("h1") == (None, None)


class TestAudit:
    def test_counters_match_log(self):
        svc = service(3)
        svc.create_tasks([(f"law{i:03d}", 0) for i in range(3)], k=2)
        rng = random.Random(5)
        helpers = [f"h{i}" for i in range(5)]
        while True:
            progressed = False
            for h in rng.sample(helpers, len(helpers)):
                t = svc.assign_task(h)
                if t is not None:
                    svc.submit_annotation(record_for(svc, t, h))
                    progressed = True
            if not progressed:
                break
        svc.audit()
        assert all(t.retired for t in svc.store.list_tasks())


class ConflictingStore(InMemoryStore):
    """Fails the first N task CAS writes to force the retry path."""

    def __init__(self, failures):
        super().__init__()
        self.failures = failures

    def put_task(self, task, expected_version):
        if self.failures > 0:
            self.failures -= 1
            raise StoreConflict("injected conflict")
        super().put_task(task, expected_version)


class TestConcurrencyDiscipline:
    def test_assignment_survives_forced_conflicts(self):
        store = ConflictingStore(failures=0)
        svc = AnnotationService(store, corpus_of(2))
        svc.create_tasks([("law000", 0), ("law001", 0)])
        store.failures = 3
        task = svc.assign_task("h1")
        assert task is not None
        svc.audit()

    def test_simulation_with_conflicts(self):
        store = ConflictingStore(failures=0)
        svc = AnnotationService(store, corpus_of(10))
        svc.create_tasks([(f"law{i:03d}", 0) for i in range(10)], k=2)
        rng = random.Random(11)
        assigned_pairs = set()
        helpers = [f"h{i}" for i in range(6)]
        done = False
        while not done:
            done = True
            for h in helpers:
                if rng.random() < 0.3:
                    store.failures = rng.randint(1, 2)
                t = svc.assign_task(h)
                store.failures = 0
                if t is None:
                    continue
                done = False
                pair = (h, t.task_id)
                assert pair not in assigned_pairs
                assigned_pairs.add(pair)
                svc.submit_annotation(record_for(svc, t, h))
        svc.audit()
        for t in svc.store.list_tasks():
            assert t.completed == 2


class TestFileStore:
    def test_replay_matches_state(self, tmp_path):
        path = tmp_path / "tasks.log"
        store = FileStore(path)
        svc = AnnotationService(store, corpus_of(2))
        svc.create_tasks([("law000", 0), ("law001", 0)], k=1)
        t = svc.assign_task("h1")
        svc.submit_annotation(record_for(svc, t, "h1"))

        reopened = FileStore(path)
        assert sorted(t.to_dict()["task_id"] for t in reopened.list_tasks()) == [
            "law000#0", "law001#0",
        ]
        assert reopened.list_records() == store.list_records()
        assert reopened.get_helper("h1")[0] == store.get_helper("h1")[0]
        AnnotationService(reopened, corpus_of(2)).audit()

    def test_cas_on_file_store(self, tmp_path):
        store = FileStore(tmp_path / "t.log")
        task = AnnotationTask("x#0", "x", 0, 2)
        store.put_task(task, None)
        with pytest.raises(StoreConflict):
            store.put_task(task, None)


class TestPairwiseAgreement:
    def span(self, start, end, label=DiscourseLabel.TEST):
        return DiscourseSpan(start, end, label, "x" * (end - start))

    def rec(self, helper, spans):
        return AnnotationRecord(task_id="t", helper_id=helper, spans=tuple(spans))

    def test_identical(self):
        spans = [self.span(0, 5), self.span(6, 9, DiscourseLabel.PROBE)]
        assert pairwise_agreement([self.rec("a", spans), self.rec("b", spans)]) == 1.0

    def test_disjoint(self):
        assert pairwise_agreement(
            [self.rec("a", [self.span(0, 5)]), self.rec("b", [self.span(6, 9)])]
        ) == 0.0

    def test_half_overlap(self):
        shared = self.span(0, 5)
        a = [shared, self.span(6, 9)]
        b = [shared, self.span(10, 12)]
        assert pairwise_agreement([self.rec("a", a), self.rec("b", b)]) == 0.5

    def test_insufficient(self):
        with pytest.raises(InsufficientRecords):
            pairwise_agreement([self.rec("a", [])])


class TestStaticTaskPage:
    TEXT = "in counties having a population above 10,000 the judge shall act"

    def test_self_contained(self):
        html = compile_static_task_page(self.TEXT)
        assert not re.search(r"https?://", html)
        assert 'name="annotations"' in html

    def test_embeds_paragraph(self):
        html = compile_static_task_page(self.TEXT)
        assert self.TEXT in html

    def test_deterministic(self):
        cfg = UiConfig(pretag=True, pretag_spans=(
            DiscourseSpan(3, 11, DiscourseLabel.PROBE, "counties"),
        ))
        a = compile_static_task_page(self.TEXT, cfg, task_id="t1")
        b = compile_static_task_page(self.TEXT, cfg, task_id="t1")
        assert a.encode() == b.encode()

    def test_duplicate_colors_rejected(self):
        with pytest.raises(ValueError):
            UiConfig(buttons=(("A", "#fff"), ("B", "#fff")))

    def test_empty_paragraph_rejected(self):
        with pytest.raises(ValueError):
            compile_static_task_page("   ")
