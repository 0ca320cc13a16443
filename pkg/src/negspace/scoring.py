"""OOD scoring: grouped alpha score, MCM baseline, threshold detector.

The alpha score sums, over the K negative groups, the softmax probability
mass assigned to the positive embeddings against that group:

    alpha(x) = sum_k  P_pos / (P_pos + P_neg_k),
    P_pos    = sum_i exp(S(x, pos_i) / tau),
    P_neg_k  = sum_j exp(S(x, neg_kj) / tau)

evaluated in log domain (each group term is a sigmoid of a log-mass
difference), so small temperatures cannot overflow.  Every term lies in
(0, 1) and alpha in (0, K); in float64 a term saturates to exactly 1.0
once the log-mass gap exceeds ~37, which is the representability limit,
not a property violation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from negspace import kernels
from negspace.embstore import EmbeddingMatrix
from negspace.errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class ScoreConfig:
    tau: float = 0.01
    k_groups: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"temperature tau must be finite positive, got {self.tau}")
        if self.k_groups < 1:
            raise ConfigError(f"group count K must be >= 1, got {self.k_groups}")


def _pack_groups(neg_groups) -> tuple[np.ndarray, np.ndarray]:
    arrays = []
    offsets = [0]
    for g in neg_groups:
        arr = g.data if isinstance(g, EmbeddingMatrix) else np.ascontiguousarray(g, dtype=np.float32)
        if arr.shape[0] == 0:
            raise ShapeError("alpha requires every negative group to be non-empty")
        arrays.append(arr)
        offsets.append(offsets[-1] + arr.shape[0])
    if not arrays:
        raise ShapeError("alpha requires at least one negative group")
    return np.ascontiguousarray(np.concatenate(arrays, axis=0)), np.asarray(offsets, dtype=np.int64)


def _as_rows(x, what: str) -> np.ndarray:
    arr = x.data if isinstance(x, EmbeddingMatrix) else np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise ShapeError(f"{what} is empty")
    return arr


def alpha_batch(images, pos_emb, neg_groups, tau: float = 0.01) -> np.ndarray:
    """Alpha score per image row; all inputs unit-normalized, same dim."""
    if not (np.isfinite(tau) and tau > 0):
        raise ConfigError(f"temperature tau must be finite positive, got {tau}")
    imgs = _as_rows(images, "image batch")
    pos = _as_rows(pos_emb, "positive embedding set")
    negs, offsets = _pack_groups(neg_groups)
    if pos.shape[1] != imgs.shape[1] or negs.shape[1] != imgs.shape[1]:
        raise ShapeError("image, positive, and negative dims must match")
    return kernels.alpha_scores(imgs, pos, negs, offsets, float(tau))


def alpha(image_emb, pos_emb, neg_groups, tau: float = 0.01) -> float:
    """Alpha score for a single image embedding."""
    img = np.ascontiguousarray(image_emb, dtype=np.float32)
    if img.ndim != 1:
        raise ShapeError("alpha takes a single image vector; use alpha_batch for batches")
    return float(alpha_batch(img[None, :], pos_emb, neg_groups, tau)[0])


def mcm_batch(images, class_emb, tau: float = 1.0) -> np.ndarray:
    """Maximum softmax probability over classes, per image row."""
    if not (np.isfinite(tau) and tau > 0):
        raise ConfigError(f"temperature tau must be finite positive, got {tau}")
    imgs = _as_rows(images, "image batch").astype(np.float64)
    cls = _as_rows(class_emb, "class embedding set").astype(np.float64)
    if cls.shape[1] != imgs.shape[1]:
        raise ShapeError("image and class dims must match")
    logits = np.clip(imgs @ cls.T, -1.0, 1.0) / tau
    m = logits.max(axis=1)
    z = np.sum(np.exp(logits - m[:, None]), axis=1)
    return 1.0 / z


def mcm_score(image_emb, class_emb, tau: float = 1.0) -> float:
    img = np.ascontiguousarray(image_emb, dtype=np.float32)
    if img.ndim != 1:
        raise ShapeError("mcm_score takes a single image vector")
    return float(mcm_batch(img[None, :], class_emb, tau)[0])


def detect(score: float, gamma: float) -> str:
    """Threshold detector: "ID" iff score >= gamma (boundary inclusive)."""
    if np.isnan(score):
        raise DataError("cannot classify a NaN score")
    return "ID" if score >= gamma else "OOD"
