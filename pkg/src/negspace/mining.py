"""Negative-label mining: quantile scoring, selection, grouping.

Three variants share one pipeline and differ only in the reference set the
candidate similarities are measured against:

  plain          ID class embeddings
  superclass     superclass embeddings
  superclass_bg  superclass embeddings with their background embedding
                 subtracted (then re-normalized)

A candidate's score is the q-quantile (linear interpolation on the order
statistics at index h = (n-1)q) of its similarities to the reference rows;
the lowest-p fraction of candidates becomes the negative set, partitioned
round-robin by score rank into K groups.  Ties always break by ascending
candidate id, which makes mining deterministic and order-invariant.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from negspace import kernels
from negspace.embstore import EmbeddingMatrix, write_text_atomic
from negspace.errors import (
    ConfigError,
    DataError,
    DegenerateRowError,
    EmptyLexiconError,
    EmptyReferenceError,
    GroupingError,
    ShapeError,
)
from negspace.lexicon import LabelSet

VARIANTS = ("plain", "superclass", "superclass_bg")


@dataclass(frozen=True)
class MiningConfig:
    q: float = 0.95
    p: float = 0.15
    k_groups: int = 10
    variant: str = "plain"

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"quantile q must be in [0, 1], got {self.q}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"selection fraction p must be in (0, 1], got {self.p}")
        if self.k_groups < 1:
            raise ConfigError(f"group count K must be >= 1, got {self.k_groups}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown mining variant {self.variant!r}")


@dataclass(frozen=True)
class NegativeSelection:
    """Mined negatives: ids ascending by (score, id), their scores, K groups."""

    selected: tuple[int, ...]
    scores: tuple[float, ...]
    groups: tuple[tuple[int, ...], ...]

    def to_json(self) -> str:
        doc = {
            "ids": list(self.selected),
            "scores": list(self.scores),
            "groups": [list(g) for g in self.groups],
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NegativeSelection":
        doc = json.loads(text)
        return cls(
            selected=tuple(doc["ids"]),
            scores=tuple(doc["scores"]),
            groups=tuple(tuple(g) for g in doc["groups"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        write_text_atomic(path, self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NegativeSelection":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def selection_size(p: float, n: int) -> int:
    # ceil(p*n) on the intended real value; the 1e-9 guard stops float
    # excess (0.15*1000 = 150.00000000000003) from selecting one extra
    return int(math.ceil(p * n - 1e-9))


def score_candidates(cand_emb: EmbeddingMatrix, ref_emb: EmbeddingMatrix, q: float) -> np.ndarray:
    """q-quantile similarity score per candidate (float64)."""
    if ref_emb.rows == 0:
        raise EmptyReferenceError("reference embedding set is empty")
    if cand_emb.dim != ref_emb.dim:
        raise ShapeError(f"embedding dims differ: {cand_emb.dim} vs {ref_emb.dim}")
    if not (cand_emb.normalized and ref_emb.normalized):
        raise DataError("score_candidates requires normalized inputs")
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"quantile q must be in [0, 1], got {q}")
    return kernels.quantile_scores(cand_emb.data, ref_emb.data, q)


def adjust_superclass_embeddings(
    sc_emb: EmbeddingMatrix, bg_vectors: EmbeddingMatrix
) -> EmbeddingMatrix:
    """Subtract each superclass's background embedding and re-normalize."""
    if sc_emb.rows != bg_vectors.rows:
        raise ShapeError(
            f"{sc_emb.rows} superclasses but {bg_vectors.rows} background vectors"
        )
    if sc_emb.dim != bg_vectors.dim:
        raise ShapeError(f"embedding dims differ: {sc_emb.dim} vs {bg_vectors.dim}")
    if not (sc_emb.normalized and bg_vectors.normalized):
        raise DataError("adjust_superclass_embeddings requires normalized inputs")
    diff = sc_emb.array64() - bg_vectors.array64()
    norms = np.linalg.norm(diff, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise DegenerateRowError(int(zero[0]), f"superclass {zero[0]} equals its background")
    out = (diff / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(out, normalized=True)


def select_negatives(scores: np.ndarray, p: float) -> list[int]:
    """Ids of the ceil(p*n) lowest-scoring candidates, ascending (score, id)."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        raise EmptyLexiconError("candidate pool is empty")
    if not np.isfinite(scores).all():
        raise DataError("candidate scores contain non-finite values")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"selection fraction p must be in (0, 1], got {p}")
    k = selection_size(p, n)
    order = np.lexsort((np.arange(n), scores))
    return [int(i) for i in order[:k]]


def partition_groups(selected: list[int], k_groups: int, strategy: str = "round_robin") -> list[list[int]]:
    """Round-robin by score rank: rank r goes to group r mod K."""
    if strategy != "round_robin":
        raise GroupingError(f"unknown grouping strategy {strategy!r}")
    if k_groups < 1 or k_groups > len(selected):
        raise GroupingError(
            f"group count {k_groups} invalid for {len(selected)} selected negatives"
        )
    return [list(selected[g::k_groups]) for g in range(k_groups)]


@dataclass(frozen=True)
class MiningInputs:
    """Reference-side embeddings; which ones are needed depends on variant."""

    class_emb: EmbeddingMatrix | None = None
    sc_emb: EmbeddingMatrix | None = None
    bg_vectors: EmbeddingMatrix | None = None


def reference_embeddings(cfg: MiningConfig, inputs: MiningInputs) -> EmbeddingMatrix:
    if cfg.variant == "plain":
        if inputs.class_emb is None:
            raise ConfigError("plain variant needs class embeddings")
        return inputs.class_emb
    if inputs.sc_emb is None:
        raise ConfigError(f"{cfg.variant} variant needs superclass embeddings")
    if cfg.variant == "superclass":
        return inputs.sc_emb
    if inputs.bg_vectors is None:
        raise ConfigError("superclass_bg variant needs background vectors")
    return adjust_superclass_embeddings(inputs.sc_emb, inputs.bg_vectors)


def mine(
    cands: LabelSet,
    cand_emb: EmbeddingMatrix,
    cfg: MiningConfig,
    inputs: MiningInputs,
) -> NegativeSelection:
    """Full pipeline: score -> select lowest-p -> partition into K groups."""
    if len(cands) != cand_emb.rows:
        raise ShapeError(f"{len(cands)} candidate labels but {cand_emb.rows} embedding rows")
    if len(cands) == 0:
        raise EmptyLexiconError("candidate pool is empty")
    ref = reference_embeddings(cfg, inputs)
    scores = score_candidates(cand_emb, ref, cfg.q)
    selected = select_negatives(scores, cfg.p)
    groups = partition_groups(selected, cfg.k_groups)
    return NegativeSelection(
        selected=tuple(selected),
        scores=tuple(float(scores[i]) for i in selected),
        groups=tuple(tuple(g) for g in groups),
    )


def materialize_groups(
    selection: NegativeSelection, cand_emb: EmbeddingMatrix
) -> list[np.ndarray]:
    """Float32 embedding rows per group, in group order (for scoring/tuning)."""
    if not cand_emb.normalized:
        raise DataError("materialize_groups requires normalized candidate embeddings")
    return [cand_emb.data[np.asarray(g, dtype=np.int64)] for g in selection.groups]
