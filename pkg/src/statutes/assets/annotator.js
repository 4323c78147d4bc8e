/* Minimal span/relation annotator for compiled task pages.
 *
 * Reads its configuration from the embedded #annotate-config JSON block,
 * renders the paragraph and label buttons, maps browser selections to
 * character offsets counted in Unicode scalar values (matching the
 * backend), and keeps the hidden "annotations" form field up to date.
 * No network access in static mode.
 */
(function () {
  "use strict";

  var config = JSON.parse(document.getElementById("annotate-config").textContent);
  var textEl = document.getElementById("annotate-text");
  var buttonsEl = document.getElementById("annotate-buttons");
  var listEl = document.getElementById("annotate-spans");
  var fieldEl = document.getElementById("annotations");
  var formEl = document.getElementById("annotate-form");

  var paragraph = config.paragraph;
  var spans = [];
  var relations = [];
  var relationSource = null;

  if (config.pretag && config.pretag_spans) {
    config.pretag_spans.forEach(function (s) { spans.push(s); });
  }

  function colorOf(label) {
    for (var i = 0; i < config.buttons.length; i++) {
      if (config.buttons[i].name === label) return config.buttons[i].color;
    }
    return "#dddddd";
  }

  /* UTF-16 index -> Unicode scalar value offset. */
  function toScalar(utf16Index) {
    return Array.from(paragraph.slice(0, utf16Index)).length;
  }

  /* Offset of a (node, utf16 offset) position within the paragraph element,
   * in UTF-16 units, by walking its text nodes. */
  function positionIn(node, offset) {
    var walker = document.createTreeWalker(textEl, NodeFilter.SHOW_TEXT);
    var total = 0;
    var current;
    while ((current = walker.nextNode())) {
      if (current === node) return total + offset;
      total += current.nodeValue.length;
    }
    return null;
  }

  function selectionToSpan(label) {
    var sel = window.getSelection();
    if (!sel || sel.rangeCount === 0 || sel.isCollapsed) return null;
    var range = sel.getRangeAt(0);
    var from = positionIn(range.startContainer, range.startOffset);
    var to = positionIn(range.endContainer, range.endOffset);
    if (from === null || to === null || from === to) return null;
    if (from > to) { var tmp = from; from = to; to = tmp; }
    var span = {
      start: toScalar(from),
      end: toScalar(to),
      label: label,
      text: Array.from(paragraph).slice(toScalar(from), toScalar(to)).join("")
    };
    for (var i = 0; i < spans.length; i++) {
      if (span.start < spans[i].end && spans[i].start < span.end) {
        window.alert("Selection overlaps an existing span.");
        return null;
      }
    }
    return span;
  }

  /* Relation indices address the start-sorted span list in the payload. */
  function relationIndices(ordered) {
    return relations.map(function (r) {
      return {
        from_span: ordered.indexOf(r.from),
        to_span: ordered.indexOf(r.to),
        kind: r.kind
      };
    });
  }

  function serialize() {
    var ordered = spans.slice().sort(function (a, b) { return a.start - b.start; });
    return JSON.stringify({
      task_id: config.task_id,
      spans: ordered,
      relations: relationIndices(ordered)
    });
  }

  function render() {
    var ordered = spans.slice().sort(function (a, b) { return a.start - b.start; });
    var chars = Array.from(paragraph);
    textEl.textContent = "";
    var cursor = 0;
    ordered.forEach(function (s) {
      if (cursor < s.start) {
        textEl.appendChild(document.createTextNode(chars.slice(cursor, s.start).join("")));
      }
      var mark = document.createElement("mark");
      mark.textContent = chars.slice(s.start, s.end).join("");
      mark.style.backgroundColor = colorOf(s.label);
      mark.title = s.label;
      textEl.appendChild(mark);
      cursor = s.end;
    });
    if (cursor < chars.length) {
      textEl.appendChild(document.createTextNode(chars.slice(cursor).join("")));
    }

    listEl.textContent = "";
    ordered.forEach(function (s) {
      var li = document.createElement("li");
      li.textContent = s.label + ": “" + s.text + "” ";
      li.oncontextmenu = function (event) {
        event.preventDefault();
        if (relationSource === null) {
          relationSource = s;
          li.style.fontWeight = "bold";
        } else if (relationSource !== s) {
          relations.push({
            from: relationSource,
            to: s,
            kind: config.relations[0] || "related"
          });
          relationSource = null;
          render();
        }
      };
      var del = document.createElement("button");
      del.type = "button";
      del.textContent = "remove";
      del.onclick = function () {
        spans.splice(spans.indexOf(s), 1);
        relations = relations.filter(function (r) {
          return r.from !== s && r.to !== s;
        });
        if (relationSource === s) relationSource = null;
        render();
      };
      li.appendChild(del);
      listEl.appendChild(li);
    });
    relationIndices(ordered).forEach(function (r) {
      var li = document.createElement("li");
      li.textContent = "relation " + r.kind + ": #" + r.from_span + " → #" + r.to_span;
      listEl.appendChild(li);
    });
    fieldEl.value = serialize();
  }

  config.buttons.forEach(function (b) {
    var btn = document.createElement("button");
    btn.type = "button";
    btn.className = "annotate-button";
    btn.textContent = b.name;
    btn.style.backgroundColor = b.color;
    btn.onclick = function () {
      var span = selectionToSpan(b.name);
      if (span) {
        spans.push(span);
        render();
      }
    };
    buttonsEl.appendChild(btn);
  });

  formEl.onsubmit = function () {
    fieldEl.value = serialize();
    if (spans.length === 0) {
      return window.confirm("Submit with nothing tagged?");
    }
    return true;
  };

  render();
})();
