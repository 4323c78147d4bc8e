/**
 * Stateful page object driving one annotation task: label buttons, span
 * highlighting, right-click relation drawing, and submission (online POST
 * or static form-field mode for crowdsourced task pages).
 */

import { scalarSlice, selectionToOffsets } from "./offsets.js";
import { serializePayload, UiRelation, UiSpan } from "./payload.js";

export interface ButtonConfig {
  name: string;
  color: string;
}

export interface PageHandlerConfig {
  page_height: number;
  buttons: ButtonConfig[];
  relations: string[];
  pretag: boolean;
  pretag_spans?: UiSpan[];
  /** API base URL, or the literal "static" for form-field mode. */
  endpoint: string;
  task_id: string;
  paragraph: string;
}

interface SpanRelation {
  from: UiSpan;
  to: UiSpan;
  kind: string;
}

export class PageHandler {
  readonly config: PageHandlerConfig;
  private spans: UiSpan[] = [];
  private relations: SpanRelation[] = [];
  private root: HTMLElement | null = null;
  private listEl: HTMLElement | null = null;
  private fieldEl: HTMLInputElement | null = null;
  private relationSource: UiSpan | null = null;
  private inFlight = false;
  private statsCache: unknown = null;
  onError: (message: string) => void = (message) => {
    if (typeof window !== "undefined" && window.alert) window.alert(message);
  };

  constructor(config: PageHandlerConfig) {
    if (!config.buttons || config.buttons.length === 0) {
      throw new Error("PageHandler: at least one label button is required");
    }
    const colors = new Set(config.buttons.map((b) => b.color.toLowerCase()));
    if (colors.size !== config.buttons.length) {
      throw new Error("PageHandler: button colors must be distinct");
    }
    this.config = config;
    if (config.pretag && config.pretag_spans) {
      for (const s of config.pretag_spans) this.spans.push({ ...s });
      this.spans.sort((a, b) => a.start - b.start);
    }
  }

  /** Render into `container`; its text becomes the paragraph display. */
  init(container: HTMLElement): void {
    const doc = container.ownerDocument;
    container.textContent = "";
    container.style.maxHeight = `${this.config.page_height}px`;

    const buttonBar = doc.createElement("div");
    for (const b of this.config.buttons) {
      const btn = doc.createElement("button");
      btn.type = "button";
      btn.textContent = b.name;
      btn.style.backgroundColor = b.color;
      btn.addEventListener("click", () => this.labelSelection(b.name));
      buttonBar.appendChild(btn);
    }
    container.appendChild(buttonBar);

    this.root = doc.createElement("p");
    this.root.id = "annotate-text";
    container.appendChild(this.root);

    this.listEl = doc.createElement("ul");
    container.appendChild(this.listEl);

    this.fieldEl = doc.createElement("input");
    this.fieldEl.type = "hidden";
    this.fieldEl.name = "annotations";
    container.appendChild(this.fieldEl);

    this.render();
  }

  /** Current selection -> span with backend-compatible scalar offsets. */
  selectionToSpan(label: string): UiSpan | null {
    if (!this.root) throw new Error("PageHandler: init() not called");
    const doc = this.root.ownerDocument;
    const offsets = selectionToOffsets(this.root, doc.defaultView?.getSelection() ?? null);
    if (offsets === null) return null;
    const span: UiSpan = {
      start: offsets.start,
      end: offsets.end,
      label,
      text: scalarSlice(this.config.paragraph, offsets.start, offsets.end),
    };
    for (const existing of this.spans) {
      if (span.start < existing.end && existing.start < span.end) {
        this.onError("Selection overlaps an existing span.");
        return null;
      }
    }
    return span;
  }

  labelSelection(label: string): UiSpan | null {
    const span = this.selectionToSpan(label);
    if (span) this.addSpan(span);
    return span;
  }

  addSpan(span: UiSpan): void {
    for (const existing of this.spans) {
      if (span.start < existing.end && existing.start < span.end) {
        throw new Error("span overlaps an existing span");
      }
    }
    this.spans.push(span);
    this.spans.sort((a, b) => a.start - b.start);
    this.render();
  }

  removeSpan(span: UiSpan): void {
    this.spans = this.spans.filter((s) => s !== span);
    this.relations = this.relations.filter((r) => r.from !== span && r.to !== span);
    if (this.relationSource === span) this.relationSource = null;
    this.render();
  }

  drawRelation(from: UiSpan, to: UiSpan, kind: string): UiRelation {
    if (from === to) throw new Error("a relation cannot connect a span to itself");
    if (!this.config.relations.includes(kind)) {
      throw new Error(`relation kind ${JSON.stringify(kind)} is not allowed`);
    }
    if (!this.spans.includes(from) || !this.spans.includes(to)) {
      throw new Error("both relation endpoints must be existing spans");
    }
    this.relations.push({ from, to, kind });
    this.render();
    return this.relationIndices({ from, to, kind });
  }

  getSpans(): readonly UiSpan[] {
    return this.spans;
  }

  getRelations(): UiRelation[] {
    return this.relations.map((r) => this.relationIndices(r));
  }

  /** Canonical payload bytes; identical in online and static mode. */
  serialize(): string {
    return serializePayload(this.config.task_id, this.spans, this.getRelations());
  }

  /**
   * Submit the pending annotation. Static mode only fills the hidden
   * "annotations" form field; online mode POSTs to the API. At most one
   * submission is in flight.
   */
  async submit(helperId?: string): Promise<{ ok: boolean; status?: number; code?: string }> {
    const body = this.serialize();
    if (this.fieldEl) this.fieldEl.value = body;
    if (this.config.endpoint === "static") {
      return { ok: true };
    }
    if (this.inFlight) throw new Error("a submission is already in flight");
    this.inFlight = true;
    try {
      const response = await fetch(`${this.config.endpoint}/api/annotations`, {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          Authorization: `Bearer ${helperId ?? ""}`,
        },
        body,
      });
      if (!response.ok) {
        const error = await response.json().catch(() => ({ code: "unknown" }));
        this.onError(`submission failed: ${error.code ?? response.status}`);
        return { ok: false, status: response.status, code: error.code };
      }
      this.spans = [];
      this.relations = [];
      this.render();
      return { ok: true, status: response.status };
    } finally {
      this.inFlight = false;
    }
  }

  /** Session stats, fetched once and cached (static mode: null). */
  async sessionStats(helperId: string): Promise<unknown> {
    if (this.config.endpoint === "static") return null;
    if (this.statsCache === null) {
      const response = await fetch(`${this.config.endpoint}/api/stats`, {
        headers: { Authorization: `Bearer ${helperId}` },
      });
      this.statsCache = await response.json();
    }
    return this.statsCache;
  }

  private relationIndices(r: SpanRelation): UiRelation {
    // Indices address the start-sorted span list the payload carries.
    return {
      from_span: this.spans.indexOf(r.from),
      to_span: this.spans.indexOf(r.to),
      kind: r.kind,
    };
  }

  private colorOf(label: string): string {
    const button = this.config.buttons.find((b) => b.name === label);
    return button ? button.color : "#dddddd";
  }

  private render(): void {
    if (!this.root || !this.listEl) return;
    const doc = this.root.ownerDocument;
    const chars = Array.from(this.config.paragraph);
    this.root.textContent = "";
    let cursor = 0;
    for (const span of this.spans) {
      if (cursor < span.start) {
        this.root.appendChild(doc.createTextNode(chars.slice(cursor, span.start).join("")));
      }
      const mark = doc.createElement("mark");
      mark.textContent = chars.slice(span.start, span.end).join("");
      mark.style.backgroundColor = this.colorOf(span.label);
      mark.title = span.label;
      // Right-click arms relation mode; second right-click completes it.
      mark.addEventListener("contextmenu", (event) => {
        event.preventDefault();
        this.handleRelationClick(span);
      });
      this.root.appendChild(mark);
      cursor = span.end;
    }
    if (cursor < chars.length) {
      this.root.appendChild(doc.createTextNode(chars.slice(cursor).join("")));
    }

    this.listEl.textContent = "";
    for (const span of this.spans) {
      const li = doc.createElement("li");
      li.textContent = `${span.label}: ${span.text} `;
      const del = doc.createElement("button");
      del.type = "button";
      del.textContent = "remove";
      del.addEventListener("click", () => this.removeSpan(span));
      li.appendChild(del);
      this.listEl.appendChild(li);
    }
    for (const r of this.getRelations()) {
      const li = doc.createElement("li");
      li.textContent = `relation ${r.kind}: #${r.from_span} -> #${r.to_span}`;
      this.listEl.appendChild(li);
    }
    if (this.fieldEl) this.fieldEl.value = this.serialize();
  }

  private handleRelationClick(span: UiSpan): void {
    if (this.relationSource === null) {
      this.relationSource = span;
      return;
    }
    const from = this.relationSource;
    this.relationSource = null;
    if (from === span) {
      this.onError("A relation cannot connect a span to itself.");
      return;
    }
    try {
      this.drawRelation(from, span, this.config.relations[0] ?? "related");
    } catch (error) {
      this.onError((error as Error).message);
    }
  }
}
