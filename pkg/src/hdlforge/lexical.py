"""Comment and string-literal scanning for Verilog text.

Everything downstream that uses regexes runs on *masked* text: the same
string with comment and/or string-literal characters replaced by spaces
(newlines kept), so offsets line up with the original source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Separator characters for the optional separator-splitting token mode.
TOKEN_SEPARATORS = "()[]{},;:.@#=+-*/<>!&|^~?'\""
_SEPARATOR_SPLIT = re.compile("([" + re.escape(TOKEN_SEPARATORS) + "])")


@dataclass(frozen=True)
class Region:
    kind: str  # "line", "block" or "string"
    start: int
    end: int  # exclusive; delimiters included


def scan_regions(text: str) -> list[Region]:
    """Locate comments and string literals in source order."""
    regions: list[Region] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            regions.append(Region("line", i, j))
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            regions.append(Region("block", i, j))
            i = j
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n) if j < n and text[j] == '"' else j
            regions.append(Region("string", i, j))
            i = j
        else:
            i += 1
    return regions


def _blank(text: str, regions: list[Region]) -> str:
    chars = list(text)
    for r in regions:
        for k in range(r.start, r.end):
            if chars[k] != "\n":
                chars[k] = " "
    return "".join(chars)


def mask(text: str, comments: bool = True, strings: bool = True) -> str:
    kinds = set()
    if comments:
        kinds |= {"line", "block"}
    if strings:
        kinds.add("string")
    return _blank(text, [r for r in scan_regions(text) if r.kind in kinds])


def comment_regions(text: str) -> list[Region]:
    return [r for r in scan_regions(text) if r.kind != "string"]


def _clean_comment(raw: str, kind: str) -> str:
    if kind == "line":
        body = raw[2:]
        return body.strip()
    body = raw[2:-2] if raw.endswith("*/") and len(raw) >= 4 else raw[2:]
    lines = []
    for line in body.splitlines():
        line = line.strip()
        # decorative leading asterisks of /** ... */ blocks
        line = line.lstrip("*").strip()
        if line:
            lines.append(line)
    return " ".join(lines)


def extract_comments(text: str) -> list[str]:
    """Cleaned comment bodies in source order; empty comments are dropped."""
    out = []
    for r in comment_regions(text):
        cleaned = _clean_comment(text[r.start:r.end], r.kind)
        if cleaned:
            out.append(cleaned)
    return out


def estimate_tokens(text: str, split_separators: bool = False) -> int:
    """Approximate LLM token count.

    The default counts whitespace-delimited chunks. With
    ``split_separators`` each chunk is further split at the characters in
    ``TOKEN_SEPARATORS``, every separator counting as one token.
    """
    chunks = text.split()
    if not split_separators:
        return len(chunks)
    return sum(1 for chunk in chunks for piece in _SEPARATOR_SPLIT.split(chunk) if piece)


def line_count(text: str) -> int:
    """Number of lines with at least one non-whitespace character."""
    return sum(1 for line in text.splitlines() if line.strip())


def comment_density(text: str) -> float:
    """Percent of characters inside comments, delimiters included."""
    if not text:
        return 0.0
    inside = sum(r.end - r.start for r in comment_regions(text))
    return 100.0 * inside / len(text)
