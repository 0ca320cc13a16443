"""Superclass and background-description generation via a chat endpoint.

Superclasses group the ID classes into coarser concepts; each superclass
additionally gets short background descriptions whose embeddings are later
subtracted to isolate core semantics.  All generation runs at temperature 0
and is cached on disk keyed by a hash of (model, messages), so a warm cache
(or a fixture file of canned responses) makes runs fully offline and
byte-deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from negspace.embstore import EmbeddingMatrix, write_text_atomic
from negspace.errors import (
    ConfigError,
    DataError,
    DegenerateRowError,
    IncompleteConceptError,
    LlmParseError,
    LlmUnavailableError,
    ShapeError,
)
from negspace.lexicon import LabelSet

DEFAULT_BG_COUNT = 10
DEFAULT_BG_WORDS = 3

PROMPT_TEMPLATES = {
    "superclass_v1": (
        "Group the following class labels into coarse superclasses. "
        "Use a short common noun for each superclass and assign every class "
        "to exactly one superclass. Respond with only a JSON array, one "
        "object per class in input order, each object "
        '{{"class": <class label>, "superclass": <superclass label>}}.\n'
        "Classes:\n{classes}"
    ),
    "background_v1": (
        "Describe generic background scenery or context in which a "
        "'{superclass}' typically appears. Give exactly {count} distinct "
        "descriptions, each exactly {words} words long, lowercase, no "
        "punctuation. Respond with only a JSON array of {count} strings."
    ),
}


@dataclass(frozen=True)
class LlmRequestSpec:
    """Endpoint configuration; temperature is pinned to 0."""

    endpoint: str = ""
    model: str = "claude-3-5-sonnet"
    temperature: float = 0.0
    prompt_template_id: str = "v1"
    max_retries: int = 3
    cache_dir: str | None = None
    api_key_env: str = "NEGSPACE_API_KEY"

    def __post_init__(self):
        if self.temperature != 0.0:
            raise ConfigError("LLM temperature is fixed at 0")


@dataclass
class ConceptMap:
    """Superclass texts, class->superclass assignment, background texts."""

    superclasses: list[str]
    assignment: dict[int, int]
    backgrounds: dict[int, list[str]] = field(default_factory=dict)

    def validate(self, require_backgrounds: bool = False) -> None:
        m = len(self.assignment)
        n = len(self.superclasses)
        if n == 0 or m == 0:
            raise IncompleteConceptError("empty concept map")
        if n > m:
            raise IncompleteConceptError(f"{n} superclasses for {m} classes (need n <= m)")
        if sorted(self.assignment) != list(range(m)):
            raise IncompleteConceptError("class ids must be contiguous 0..m-1")
        for cid, sc in self.assignment.items():
            if not 0 <= sc < n:
                raise IncompleteConceptError(f"class {cid} assigned to unknown superclass {sc}")
        if require_backgrounds:
            for j in range(n):
                if not self.backgrounds.get(j):
                    raise IncompleteConceptError(
                        f"superclass {j} ({self.superclasses[j]!r}) has no backgrounds"
                    )

    def to_json(self) -> str:
        doc = {
            "superclasses": self.superclasses,
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
            "backgrounds": {str(k): v for k, v in sorted(self.backgrounds.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConceptMap":
        doc = json.loads(text)
        return cls(
            superclasses=list(doc["superclasses"]),
            assignment={int(k): v for k, v in doc["assignment"].items()},
            backgrounds={int(k): list(v) for k, v in doc.get("backgrounds", {}).items()},
        )

    def save(self, path: str | os.PathLike) -> None:
        write_text_atomic(path, self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ConceptMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def request_key(model: str, messages: list[dict]) -> str:
    """Stable hash of a chat request (temperature-0 body)."""
    body = json.dumps(
        {"model": model, "temperature": 0, "messages": messages},
        sort_keys=True, ensure_ascii=True, separators=(",", ":"),
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class HttpTransport:
    """POSTs an OpenAI-style chat body to the configured endpoint."""

    def __init__(self, spec: LlmRequestSpec):
        if not spec.endpoint:
            raise ConfigError("LLM endpoint not configured")
        self.spec = spec
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.spec.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.spec.model, "temperature": 0, "messages": messages}
        last = None
        for attempt in range(self.spec.max_retries + 1):
            try:
                self.calls += 1
                resp = requests.post(self.spec.endpoint, json=body, headers=headers, timeout=60)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last = exc
                time.sleep(min(2 ** attempt, 8))
        raise LlmUnavailableError(f"endpoint failed after {self.spec.max_retries + 1} attempts: {last}")


class FixtureTransport:
    """Replays canned responses from a JSON file keyed by request hash."""

    def __init__(self, path: str | os.PathLike):
        with open(path, "r", encoding="utf-8") as fh:
            self.responses: dict[str, str] = json.load(fh)
        self.calls = 0

    def complete(self, messages: list[dict], *, model: str) -> str:
        self.calls += 1
        key = request_key(model, messages)
        if key not in self.responses:
            raise LlmUnavailableError(f"fixture has no response for request {key[:12]}...")
        return self.responses[key]


class CachedClient:
    """Disk cache in front of a transport; key = hash(model, messages)."""

    def __init__(self, spec: LlmRequestSpec, transport=None):
        self.spec = spec
        self.transport = transport if transport is not None else HttpTransport(spec)

    def _cache_path(self, key: str) -> str | None:
        if not self.spec.cache_dir:
            return None
        return os.path.join(self.spec.cache_dir, f"{key}.json")

    def complete(self, messages: list[dict]) -> str:
        key = request_key(self.spec.model, messages)
        path = self._cache_path(key)
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)["content"]
        if isinstance(self.transport, FixtureTransport):
            content = self.transport.complete(messages, model=self.spec.model)
        else:
            content = self.transport.complete(messages)
        if path:
            os.makedirs(self.spec.cache_dir, exist_ok=True)
            write_text_atomic(path, json.dumps(
                {"key": key, "model": self.spec.model, "messages": messages, "content": content},
                sort_keys=True, ensure_ascii=False, indent=2,
            ) + "\n")
        return content


def _parse_json_payload(raw: str, what: str):
    text = raw.strip()
    if text.startswith("```"):
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
        text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise LlmParseError(f"could not parse {what} response as JSON ({exc})", raw)


def superclass_messages(class_texts: list[str], template_id: str = "v1") -> list[dict]:
    tpl = PROMPT_TEMPLATES[f"superclass_{template_id}"]
    listing = "\n".join(f"- {t}" for t in class_texts)
    return [{"role": "user", "content": tpl.format(classes=listing)}]


def background_messages(
    superclass: str, count: int, words: int, template_id: str = "v1", attempt: int = 0
) -> list[dict]:
    tpl = PROMPT_TEMPLATES[f"background_{template_id}"]
    content = tpl.format(superclass=superclass, count=count, words=words)
    msgs = [{"role": "user", "content": content}]
    if attempt > 0:
        msgs.append({
            "role": "user",
            "content": (
                f"Attempt {attempt + 1}: the previous response did not have exactly "
                f"{count} descriptions of exactly {words} words each. Respond again, "
                "following the format strictly."
            ),
        })
    return msgs


def generate_superclasses(
    classes: LabelSet,
    spec: LlmRequestSpec,
    transport=None,
    batch_size: int = 50,
) -> ConceptMap:
    """Assign every class a superclass; superclass order is first appearance."""
    client = CachedClient(spec, transport)
    texts = classes.texts()
    superclasses: list[str] = []
    sc_index: dict[str, int] = {}
    assignment: dict[int, int] = {}
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        messages = superclass_messages(batch, spec.prompt_template_id)
        raw = client.complete(messages)
        payload = _parse_json_payload(raw, "superclass")
        if not isinstance(payload, list):
            raise LlmParseError("superclass response is not a JSON array", raw)
        mapping: dict[str, str] = {}
        for item in payload:
            if not isinstance(item, dict) or "class" not in item or "superclass" not in item:
                raise LlmParseError("superclass items need 'class' and 'superclass'", raw)
            mapping[str(item["class"])] = str(item["superclass"]).strip()
        for offset, text in enumerate(batch):
            if text not in mapping or not mapping[text]:
                raise IncompleteConceptError(f"class {text!r} left unassigned")
            sc = mapping[text]
            if sc not in sc_index:
                sc_index[sc] = len(superclasses)
                superclasses.append(sc)
            assignment[start + offset] = sc_index[sc]
    cm = ConceptMap(superclasses=superclasses, assignment=assignment)
    cm.validate()
    return cm


def generate_backgrounds(
    cm: ConceptMap,
    spec: LlmRequestSpec,
    count: int = DEFAULT_BG_COUNT,
    words_per_description: int = DEFAULT_BG_WORDS,
    transport=None,
) -> ConceptMap:
    """Fill each superclass with exactly `count` descriptions of exactly
    `words_per_description` words (over-long descriptions are truncated,
    short ones trigger a corrective re-prompt)."""
    if count < 1 or words_per_description < 1:
        raise ConfigError("count and words_per_description must be positive")
    client = CachedClient(spec, transport)
    backgrounds: dict[int, list[str]] = {}
    for j, sc in enumerate(cm.superclasses):
        descriptions = None
        raw = ""
        for attempt in range(spec.max_retries + 1):
            messages = background_messages(
                sc, count, words_per_description, spec.prompt_template_id, attempt
            )
            raw = client.complete(messages)
            payload = _parse_json_payload(raw, "background")
            if not isinstance(payload, list) or not all(isinstance(s, str) for s in payload):
                raise LlmParseError("background response is not a JSON array of strings", raw)
            fixed = []
            for desc in payload[:count]:
                tokens = desc.split()
                if len(tokens) < words_per_description:
                    fixed = None
                    break
                fixed.append(" ".join(tokens[:words_per_description]))
            if fixed is not None and len(fixed) == count:
                descriptions = fixed
                break
        if descriptions is None:
            raise LlmParseError(
                f"superclass {sc!r}: no conforming background list after "
                f"{spec.max_retries + 1} attempts", raw,
            )
        backgrounds[j] = descriptions
    out = replace(cm, backgrounds=backgrounds)
    out.validate(require_backgrounds=True)
    return out


def background_embedding(bg_texts: list[str], text_embeddings: EmbeddingMatrix) -> np.ndarray:
    """L2-normalized mean of the description embeddings (one row per text)."""
    if not bg_texts:
        raise IncompleteConceptError("no background descriptions to aggregate")
    if text_embeddings.rows != len(bg_texts):
        raise ShapeError(
            f"{len(bg_texts)} descriptions but {text_embeddings.rows} embedding rows"
        )
    if not text_embeddings.normalized:
        raise DataError("background embeddings must be normalized")
    mean = text_embeddings.array64().mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateRowError(0, "background descriptions cancel to a zero vector")
    return (mean / norm).astype(np.float32)
