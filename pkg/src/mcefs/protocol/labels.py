"""Map free-text model answers onto the three polarity labels.

Rules, applied to the lowercased reply:

1. Find every whole-word ``positive`` / ``negative`` / ``neutral``.
2. None found -> unparsed. One distinct label -> that label.
3. Several distinct labels -> look for assertions ``is <label>``,
   ``was <label>`` or ``: <label>`` inside a clause that carries no
   negation (``not``, ``no``, ``never``, ``n't``). If those assertions name
   exactly one distinct label, return it; otherwise unparsed.

Clauses are split on sentence punctuation, semicolons and newlines.
"""
from __future__ import annotations

import re

from ..corpus import Polarity

UNPARSED = "unparsed"

_LABEL = re.compile(r"\b(positive|negative|neutral)\b")
_ASSERT = re.compile(r"(?:\b(?:is|was)\s+|:\s*)(positive|negative|neutral)\b")
_CLAUSE = re.compile(r"[.;!?\n]+")
_NEGATION = re.compile(r"\b(?:not|no|never)\b|n't\b")


def extract_label(raw: str | None) -> Polarity | None:
    """Return the predicted polarity, or ``None`` when the reply is unparseable."""
    if not raw:
        return None
    text = raw.lower()
    found = set(_LABEL.findall(text))
    if not found:
        return None
    if len(found) == 1:
        return Polarity(found.pop())

    asserted = set()
    for clause in _CLAUSE.split(text):
        if _NEGATION.search(clause):
            continue
        asserted.update(_ASSERT.findall(clause))
    if len(asserted) == 1:
        return Polarity(asserted.pop())
    return None


def label_name(label: Polarity | None) -> str:
    return label.value if label is not None else UNPARSED
