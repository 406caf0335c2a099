"""Rule-based word tokenizer and sentence splitter.

Tokens keep their character spans and the whitespace that follows them, so
``detokenize(tokenize(s)) == s`` for any string with at least one
non-whitespace character.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

MASK = "[MASK]"

WORD = "word"
PUNCT = "punctuation"
MASK_KIND = "mask"

SENTENCE_END = frozenset(".!?")
CLOSERS = frozenset("\"')]}”’»")
OPENERS = frozenset("\"'([{“‘«")

ABBREVIATIONS = frozenset(
    {
        "mr", "mrs", "ms", "mx", "dr", "prof", "st", "jr", "sr", "vs", "etc",
        "e.g", "i.e", "inc", "ltd", "co", "mt", "no", "fig", "approx", "dept",
    }
)


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int
    kind: str
    ws: str = ""
    lead: str = ""

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def lower(self) -> str:
        return self.surface.lower()

    @property
    def is_word(self) -> bool:
        return self.kind == WORD


def _split_word(chunk: str, offset: int) -> list[tuple[int, int, str]]:
    """Peel punctuation off both ends of ``chunk``; split on slashes."""
    pieces: list[tuple[int, int, str]] = []
    pos = 0
    for part in re.split(r"(/)", chunk):
        if not part:
            continue
        start = offset + pos
        pos += len(part)
        if part == "/":
            pieces.append((start, start + 1, PUNCT))
            continue
        lo, hi = 0, len(part)
        while lo < hi and not part[lo].isalnum():
            lo += 1
        while hi > lo and not part[hi - 1].isalnum():
            hi -= 1
        for i in range(lo):
            pieces.append((start + i, start + i + 1, PUNCT))
        if hi > lo:
            pieces.append((start + lo, start + hi, WORD))
        for i in range(hi, len(part)):
            pieces.append((start + i, start + i + 1, PUNCT))
    return pieces


def tokenize(text: str) -> list[Token]:
    spans: list[tuple[int, int, str]] = []
    for m in re.finditer(r"\S+", text):
        chunk, offset = m.group(), m.start()
        pos = 0
        for part in re.split(r"(\[MASK\])", chunk):
            if not part:
                continue
            if part == MASK:
                spans.append((offset + pos, offset + pos + len(MASK), MASK_KIND))
            else:
                spans.extend(_split_word(part, offset + pos))
            pos += len(part)

    tokens = []
    for i, (start, end, kind) in enumerate(spans):
        nxt = spans[i + 1][0] if i + 1 < len(spans) else len(text)
        lead = text[:start] if i == 0 else ""
        tokens.append(Token(text[start:end], start, end, kind, text[end:nxt], lead))
    return tokens


def detokenize(tokens: list[Token]) -> str:
    if not tokens:
        return ""
    return tokens[0].lead + "".join(t.surface + t.ws for t in tokens)


def _is_boundary(tokens: list[Token], i: int) -> int | None:
    """If a sentence ends at token ``i``, return the index of its last token."""
    tok = tokens[i]
    if tok.surface not in SENTENCE_END:
        return None
    if tok.surface == "." and i > 0 and not tokens[i - 1].ws:
        prev = tokens[i - 1].lower
        if prev in ABBREVIATIONS or (len(prev) == 1 and prev.isalpha() and prev != "i"):
            return None
    last = i
    while last + 1 < len(tokens) and not tokens[last].ws and (
        tokens[last + 1].surface in CLOSERS or tokens[last + 1].surface in SENTENCE_END
    ):
        last += 1
    if last + 1 == len(tokens):
        return last
    if not tokens[last].ws:
        return None
    nxt = tokens[last + 1]
    if nxt.kind == MASK_KIND or nxt.surface[0].isupper() or nxt.surface in OPENERS:
        return last
    return None


def sentence_spans(tokens: list[Token]) -> list[tuple[int, int]]:
    """Half-open token index ranges, one per sentence."""
    spans = []
    start = 0
    i = 0
    while i < len(tokens):
        last = _is_boundary(tokens, i)
        if last is not None:
            spans.append((start, last + 1))
            start = i = last + 1
            continue
        i += 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


def sentence_of(tokens: list[Token], index: int) -> tuple[int, int]:
    for lo, hi in sentence_spans(tokens):
        if lo <= index < hi:
            return lo, hi
    raise IndexError(index)
