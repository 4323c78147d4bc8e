import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from statutes.model import Citation, LawDocument, Paragraph


def make_doc(doc_id, paragraphs, state="TN", citation=None, heading="", url=""):
    """Build a LawDocument from plain strings or (text, census_related) pairs."""
    paras = []
    for i, p in enumerate(paragraphs):
        if isinstance(p, tuple):
            text, census = p
        else:
            text, census = p, False
        paras.append(Paragraph(index=i, text=text, census_related=census))
    return LawDocument(
        id=doc_id,
        state=state,
        citation=citation or Citation(raw=f"§ 1-2-{doc_id}"),
        heading=heading or f"Heading {doc_id}",
        paragraphs=tuple(paras),
        source_url=url or f"https://example.test/{doc_id}",
        retrieved_at="2026-01-01T00:00:00Z",
    )
