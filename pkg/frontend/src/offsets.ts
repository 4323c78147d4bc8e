/**
 * Selection-to-offset mapping.
 *
 * The backend counts character offsets in Unicode scalar values; DOM APIs
 * (Range offsets, string.length) count UTF-16 code units. Everything here
 * converts at the boundary so astral characters (§ symbols are fine, but
 * emoji or rare CJK in statute text are not unheard of) never skew spans.
 */

/** UTF-16 index -> Unicode scalar offset within `text`. */
export function toScalarOffset(text: string, utf16Index: number): number {
  let scalars = 0;
  let i = 0;
  while (i < utf16Index && i < text.length) {
    const code = text.codePointAt(i)!;
    i += code > 0xffff ? 2 : 1;
    scalars += 1;
  }
  return scalars;
}

/** Slice `text` by scalar offsets (what the backend does server-side). */
export function scalarSlice(text: string, start: number, end: number): string {
  return Array.from(text).slice(start, end).join("");
}

export function scalarLength(text: string): number {
  // String.length is UTF-16 units; spread iterates scalar values.
  return Array.from(text).length;
}

/**
 * UTF-16 offset of (node, offset) within `root`, by accumulating the text
 * nodes before it. Returns null when the position is outside `root`.
 */
export function positionIn(root: Node, node: Node, offset: number): number | null {
  // Element containers address child nodes, not characters.
  if (node.nodeType !== Node.TEXT_NODE) {
    if (!root.contains(node)) return null;
    let total = 0;
    const children = node.childNodes;
    for (let i = 0; i < Math.min(offset, children.length); i++) {
      total += textLengthOf(children[i]);
    }
    return positionOfNode(root, node) + total;
  }
  const doc = node.ownerDocument!;
  const walker = doc.createTreeWalker(root, NodeFilter.SHOW_TEXT);
  let total = 0;
  let current: Node | null;
  while ((current = walker.nextNode())) {
    if (current === node) return total + offset;
    total += (current.nodeValue ?? "").length;
  }
  return null;
}

function textLengthOf(node: Node): number {
  return (node.textContent ?? "").length;
}

function positionOfNode(root: Node, node: Node): number {
  let total = 0;
  const doc = node.ownerDocument!;
  const walker = doc.createTreeWalker(root, NodeFilter.SHOW_TEXT);
  let current: Node | null;
  while ((current = walker.nextNode())) {
    if (node.contains(current) || node === current) break;
    // Stop once we pass the node in document order.
    if (node.compareDocumentPosition(current) & Node.DOCUMENT_POSITION_FOLLOWING) {
      break;
    }
    total += (current.nodeValue ?? "").length;
  }
  return total;
}

export interface ScalarRange {
  start: number;
  end: number;
}

/**
 * Map the current selection to scalar offsets within `root`, whose text
 * content must be exactly the paragraph string. Null for collapsed,
 * missing, or out-of-container selections.
 */
export function selectionToOffsets(root: Node, selection: Selection | null): ScalarRange | null {
  if (!selection || selection.rangeCount === 0 || selection.isCollapsed) return null;
  const range = selection.getRangeAt(0);
  const fromUtf16 = positionIn(root, range.startContainer, range.startOffset);
  const toUtf16 = positionIn(root, range.endContainer, range.endOffset);
  if (fromUtf16 === null || toUtf16 === null) return null;
  const text = root.textContent ?? "";
  let start = toScalarOffset(text, fromUtf16);
  let end = toScalarOffset(text, toUtf16);
  if (start > end) [start, end] = [end, start];
  if (start === end) return null;
  return { start, end };
}
