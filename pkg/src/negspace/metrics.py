"""Detection metrics: AUROC and FPR at a fixed TPR level.

AUROC uses the rank (Mann-Whitney) estimator with ties half-counted, which
equals P(random ID score > random OOD score) + 0.5 P(tie) exactly.  FPR@TPR
takes the threshold from the ID scores themselves: the largest ID score
gamma with mean(id >= gamma) >= level, matching the inclusive boundary of
the detector; the reported value is the fraction of OOD scores >= gamma.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from negspace.embstore import write_text_atomic
from negspace.errors import DataError, EmptyInputError


def _scores(x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyInputError(f"{what} score list is empty")
    if not np.isfinite(arr).all():
        raise DataError(f"{what} scores contain non-finite values")
    return arr


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(id_scores, ood_scores) -> float:
    """Probability a random ID score exceeds a random OOD score (ties 0.5)."""
    ids = _scores(id_scores, "ID")
    oods = _scores(ood_scores, "OOD")
    combined = np.concatenate([ids, oods])
    ranks = _average_ranks(combined)
    n_id, n_ood = ids.size, oods.size
    u = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * n_ood))


def fpr_at_tpr(id_scores, ood_scores, tpr_level: float = 0.95) -> float:
    """Fraction of OOD scores at or above the TPR-level ID threshold."""
    ids = _scores(id_scores, "ID")
    oods = _scores(ood_scores, "OOD")
    if not 0.0 < tpr_level <= 1.0:
        raise DataError(f"tpr_level must be in (0, 1], got {tpr_level}")
    gamma = tpr_threshold(ids, tpr_level)
    return float(np.mean(oods >= gamma))


def tpr_threshold(ids: np.ndarray, tpr_level: float) -> float:
    """Largest ID score gamma with mean(id >= gamma) >= tpr_level."""
    n = ids.size
    for gamma in np.unique(ids)[::-1]:
        if np.count_nonzero(ids >= gamma) / n >= tpr_level:
            return float(gamma)
    return float(ids.min())


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    fpr95: float
    n_id: int
    n_ood: int
    threshold: float
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.auroc <= 1.0 and 0.0 <= self.fpr95 <= 1.0):
            raise DataError("metric values outside [0, 1]")
        if self.n_id <= 0 or self.n_ood <= 0:
            raise EmptyInputError("report requires positive sample counts")

    def to_json(self) -> str:
        doc = {
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "threshold": self.threshold,
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            auroc=doc["auroc"], fpr95=doc["fpr95"], n_id=doc["n_id"],
            n_ood=doc["n_ood"], threshold=doc["threshold"], config=doc.get("config", {}),
        )

    def save(self, path: str | os.PathLike) -> None:
        write_text_atomic(path, self.to_json())

    def table(self) -> str:
        """Fixed-width FPR95/AUROC table (percentages)."""
        lines = [
            f"{'':<12}{'FPR95(%) v':>12}{'AUROC(%) ^':>12}",
            f"{'result':<12}{self.fpr95 * 100:>12.2f}{self.auroc * 100:>12.2f}",
            f"{'samples':<12}{self.n_id:>12}{self.n_ood:>12}",
        ]
        return "\n".join(lines)


def evaluate(id_scores, ood_scores, tpr_level: float = 0.95, config: dict | None = None) -> EvalReport:
    ids = _scores(id_scores, "ID")
    oods = _scores(ood_scores, "OOD")
    gamma = tpr_threshold(ids, tpr_level)
    return EvalReport(
        auroc=auroc(ids, oods),
        fpr95=float(np.mean(oods >= gamma)),
        n_id=int(ids.size),
        n_ood=int(oods.size),
        threshold=float(gamma),
        config=dict(config or {}),
    )
