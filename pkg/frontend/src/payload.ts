/**
 * Submission payload. One serializer for both transports so the bytes an
 * online POST sends and a static (crowdsourcing) form field carries are
 * identical for the same annotation state — the server treats them as the
 * same document either way.
 */

export interface UiSpan {
  start: number;
  end: number;
  label: string;
  text: string;
}

export interface UiRelation {
  from_span: number;
  to_span: number;
  kind: string;
}

export interface SubmissionPayload {
  task_id: string;
  spans: UiSpan[];
  relations: UiRelation[];
}

/** Canonical bytes: spans ordered by start, fixed key order, no whitespace. */
export function serializePayload(
  taskId: string,
  spans: readonly UiSpan[],
  relations: readonly UiRelation[],
): string {
  const ordered = [...spans].sort((a, b) => a.start - b.start);
  const payload: SubmissionPayload = {
    task_id: taskId,
    spans: ordered.map((s) => ({ start: s.start, end: s.end, label: s.label, text: s.text })),
    relations: relations.map((r) => ({ from_span: r.from_span, to_span: r.to_span, kind: r.kind })),
  };
  return JSON.stringify(payload);
}
