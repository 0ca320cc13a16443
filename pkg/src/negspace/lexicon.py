"""Label sets: ID classes and candidate negative lexicons.

Two disk formats:
  lines  UTF-8, LF-separated, one label per line
  jsonl  one object per line: {"text": ..., "category": optional}

The candidate lexicon ships as a plain asset instead of depending on a
WordNet database.  To regenerate one from WordNet, dump every noun and
adjective lemma with its lexname, e.g. with nltk:
``wn.all_synsets()`` filtered to pos in {"n", "a", "s"}, writing jsonl
rows {"text": lemma, "category": synset.lexname()}.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from negspace.embstore import write_text_atomic
from negspace.errors import (
    DuplicateLabelError,
    EmptyLexiconError,
    FormatError,
    TemplateError,
)


@dataclass(frozen=True)
class LabelEntry:
    id: int
    text: str
    category: str | None = None


@dataclass(frozen=True)
class LabelSet:
    entries: tuple[LabelEntry, ...]

    def __post_init__(self):
        seen: dict[str, int] = {}
        for i, e in enumerate(self.entries):
            if e.id != i:
                raise FormatError(f"label ids must be contiguous; entry {i} has id {e.id}")
            if not e.text:
                raise FormatError(f"label {i} has empty text")
            key = _normalize_ws(e.text)
            if key in seen:
                raise DuplicateLabelError(e.text, seen[key] + 1, i + 1)
            seen[key] = i

    def __len__(self) -> int:
        return len(self.entries)

    def texts(self) -> list[str]:
        return [e.text for e in self.entries]


@dataclass(frozen=True)
class PromptTemplate:
    """Pattern with exactly one ``{}`` placeholder."""

    pattern: str

    def __post_init__(self):
        if self.pattern.count("{}") != 1:
            raise TemplateError(
                f"template must contain exactly one '{{}}' placeholder: {self.pattern!r}"
            )

    def render(self, text: str) -> str:
        return self.pattern.replace("{}", text)


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def from_texts(texts, categories=None) -> LabelSet:
    """Build a LabelSet from in-memory strings (test and fixture helper)."""
    cats = categories or [None] * len(texts)
    return LabelSet(tuple(
        LabelEntry(i, t, c) for i, (t, c) in enumerate(zip(texts, cats))
    ))


def load_labels(path: str | os.PathLike, format: str = "lines") -> LabelSet:
    """Load a label file; ids follow file order."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    if format == "lines":
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        entries = []
        for lineno, text in enumerate(lines, start=1):
            if not text.strip():
                raise FormatError(f"{path}:{lineno}: blank label line")
            entries.append(LabelEntry(len(entries), text, None))
    elif format == "jsonl":
        entries = []
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict) or "text" not in obj:
                raise FormatError(f"{path}:{lineno}: expected object with 'text' key")
            entries.append(LabelEntry(len(entries), obj["text"], obj.get("category")))
    else:
        raise FormatError(f"unknown label format {format!r}")
    if not entries:
        raise EmptyLexiconError(f"{path}: no labels")
    return LabelSet(tuple(entries))


def save_labels(labels: LabelSet, path: str | os.PathLike, format: str = "lines") -> None:
    if format == "lines":
        text = "".join(e.text + "\n" for e in labels.entries)
    elif format == "jsonl":
        rows = []
        for e in labels.entries:
            obj = {"text": e.text}
            if e.category is not None:
                obj["category"] = e.category
            rows.append(json.dumps(obj, ensure_ascii=False))
        text = "".join(r + "\n" for r in rows)
    else:
        raise FormatError(f"unknown label format {format!r}")
    write_text_atomic(path, text)


def apply_template(template: PromptTemplate, labels: LabelSet) -> list[str]:
    """One prompt string per label, in label order."""
    return [template.render(e.text) for e in labels.entries]


def filter_categories(labels: LabelSet, blocklist: set[str]) -> LabelSet:
    """Drop entries whose category is blocklisted; ids are re-compacted.

    Entries without a category are never filtered.  An empty blocklist
    returns the input unchanged.
    """
    if not blocklist:
        return labels
    kept = [e for e in labels.entries if e.category is None or e.category not in blocklist]
    return LabelSet(tuple(
        LabelEntry(i, e.text, e.category) for i, e in enumerate(kept)
    ))
