"""Two-phase few-shot tuning surrogate.

Phase 1 tunes "positive label" vectors: one learnable d-vector per class,
initialized to the class-label embedding, standing in for prompt vectors
fed through a frozen text encoder.  Phase 2 tunes a single additive visual
offset applied to image embeddings, standing in for token-level visual
prompts.  Every loss below is defined on (re-normalized) encoder outputs,
so the surrogate preserves the loss formulas exactly while staying small
enough to verify gradients by finite differences.

Parameters are never projected back to the sphere after an SGD step;
similarities are always computed on normalized vectors and gradients flow
through the normalization, keeping the losses smooth.

All math is float64.  Losses are evaluated in log domain wherever a
softmax appears.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from negspace.embstore import EmbeddingMatrix, load as load_emb, save as save_emb, write_text_atomic
from negspace.errors import (
    ConfigError,
    DataError,
    DegenerateRowError,
    DivergenceError,
    LabelError,
    ShapeError,
)

GRAD_SCALE_EPS = 1e-12

OOD_MODES = ("sum_exp", "exp_sum")


def _as_unit_rows(x, what: str, atol: float = 1e-3) -> np.ndarray:
    """Float64 copy with rows re-normalized; rejects rows far from unit."""
    arr = x.array64() if isinstance(x, EmbeddingMatrix) else np.array(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateRowError(int(np.where(norms == 0.0)[0][0]), f"zero row in {what}")
    if np.any(np.abs(norms - 1.0) > atol):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise DataError(f"{what} row {bad} has norm {norms[bad]:.6f}; expected unit rows")
    return arr / norms[:, None]


@dataclass
class TuneState:
    """Learnable parameters plus every hyperparameter of the two phases."""

    positive_params: np.ndarray          # (m, d) float64, pre-normalization
    visual_offset: np.ndarray            # (d,) float64
    class_emb: np.ndarray                # (m, d) float64 unit rows, frozen
    lambda1: float = 0.25
    lambda2: float = 0.25
    lambda3: float = 0.3
    lambda4: float = 0.3
    tau: float = 0.01
    mix_weight: float = 0.5
    seed: int = 0
    lr_phase1: float = 0.025
    epochs_phase1: int = 200
    batch_size_phase1: int = 256
    lr_phase2: float = 0.2
    epochs_phase2: int = 5
    batch_size_phase2: int = 32
    ood_mode: str = "sum_exp"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.mix_weight <= 1.0:
            raise ConfigError("mix_weight must be in [0, 1]")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.ood_mode not in OOD_MODES:
            raise ConfigError(f"unknown ood_mode {self.ood_mode!r}")
        self.positive_params = np.array(self.positive_params, dtype=np.float64)
        self.visual_offset = np.array(self.visual_offset, dtype=np.float64)
        self.class_emb = np.array(self.class_emb, dtype=np.float64)
        if self.positive_params.shape != self.class_emb.shape:
            raise ShapeError("positive_params and class_emb shapes must match")
        if self.visual_offset.shape != (self.class_emb.shape[1],):
            raise ShapeError("visual_offset must be a d-vector")

    @property
    def num_classes(self) -> int:
        return self.class_emb.shape[0]

    @property
    def dim(self) -> int:
        return self.class_emb.shape[1]


def init_state(class_emb, seed: int, **hypers) -> TuneState:
    """Fresh state: positives start at the class embeddings, offset at zero."""
    cls = _as_unit_rows(class_emb, "class embeddings")
    return TuneState(
        positive_params=cls.copy(),
        visual_offset=np.zeros(cls.shape[1], dtype=np.float64),
        class_emb=cls,
        seed=seed,
        **hypers,
    )


@dataclass(frozen=True)
class FewShotBatch:
    """Unit image rows with class ids, plus OOD-proxy rows."""

    images: np.ndarray
    class_ids: np.ndarray
    ood_images: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "images", _as_unit_rows(self.images, "training images"))
        object.__setattr__(self, "ood_images", _as_unit_rows(self.ood_images, "OOD proxies"))
        ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != self.images.shape[0]:
            raise ShapeError("one class id per image row required")
        object.__setattr__(self, "class_ids", ids)


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class IdLossResult:
    value: float
    grad: np.ndarray
    group_index: int


def _unit_rows_with_norms(params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(params, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateRowError(int(np.where(norms == 0.0)[0][0]), "zero positive parameter row")
    return params / norms[:, None], norms


def _project_rows(grad_v: np.ndarray, v: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. unit rows back through the normalization."""
    radial = np.sum(grad_v * v, axis=1, keepdims=True)
    return (grad_v - radial * v) / norms[:, None]


def _project_vec(grad_z: np.ndarray, zhat: np.ndarray, nz: float) -> np.ndarray:
    return (grad_z - (grad_z @ zhat) * zhat) / nz


def _lse(logits: np.ndarray) -> float:
    m = logits.max()
    return float(m + np.log(np.sum(np.exp(logits - m))))


def id_loss(batch: FewShotBatch, state: TuneState, neg_groups) -> IdLossResult:
    """ID loss: worst (max) over groups of the batch-mean margin loss.

    Per sample (x, y) and group k the loss is a cross entropy whose positive
    logits blend image similarity with label-space dissimilarity terms and
    whose negative logits push the ground-truth positive away from group k:

        logit_pos_i = (S(x, P_i) + l1*(S(C_y, P_i) - S(P_y, P_i))) / tau
        logit_neg_j = l2*(S(x, N_j) + S(P_y, N_j) - 1) / tau
        F_k = -logit_pos_y + logsumexp(all logits)

    The gradient flows only through the argmax group (ties: lowest index).
    """
    if not neg_groups:
        raise ShapeError("id_loss requires at least one negative group")
    groups = [_as_unit_rows(g, f"negative group {k}") for k, g in enumerate(neg_groups)]
    v, norms = _unit_rows_with_norms(state.positive_params)
    m, d = v.shape
    nb = batch.images.shape[0]
    if nb == 0:
        raise ShapeError("id_loss requires a non-empty batch")
    ids = batch.class_ids
    if ids.min() < 0 or ids.max() >= m:
        raise LabelError(f"class id out of range 0..{m - 1}")
    lam1, lam2, tau = state.lambda1, state.lambda2, state.tau

    k_count = len(groups)
    val_sum = np.zeros(k_count)
    grad_sum = [np.zeros((m, d)) for _ in range(k_count)]

    for b in range(nb):
        x = batch.images[b]
        y = int(ids[b])
        cy = state.class_emb[y]
        spos = v @ x
        simc = v @ cy
        simpp = v @ v[y]
        lp = (spos + lam1 * (simc - simpp)) / tau
        for k, neg in enumerate(groups):
            simneg = neg @ x
            simpn = neg @ v[y]
            ln = lam2 * (simneg + simpn - 1.0) / tau
            logits = np.concatenate([lp, ln])
            lse = _lse(logits)
            val_sum[k] += -lp[y] + lse
            pi = np.exp(logits - lse)
            pp, pn = pi[:m], pi[m:]
            a = pp.copy()
            a[y] -= 1.0
            a /= tau
            # dF/dV_i for the i-indexed similarity terms
            gv = np.outer(a, x + lam1 * cy - lam1 * v[y])
            # terms reaching V_y through S(P_y, P_i) and S(P_y, N_j)
            gv[y] += -lam1 * (a @ v)
            gv[y] += (lam2 / tau) * (pn @ neg)
            grad_sum[k] += gv

    vals = val_sum / nb
    k_star = int(np.argmax(vals))
    grad = _project_rows(grad_sum[k_star] / nb, v, norms)
    return IdLossResult(value=float(vals[k_star]), grad=grad, group_index=k_star)


def ood_loss_pt(ood_batch, state: TuneState, bg_vectors, mode: str | None = None) -> LossResult:
    """OOD loss for prompt tuning: probability mass on positives vs backgrounds.

    sum_exp (default) reports the batch mean of

        G(x) = sum_i e^{S_i/tau} / (sum_i e^{S_i/tau} + sum_j e^{B_j/tau})

    exp_sum keeps the literal exp-of-summed-similarities numerator and, being
    numerically explosive, reports log G instead.
    """
    mode = state.ood_mode if mode is None else mode
    if mode not in OOD_MODES:
        raise ConfigError(f"unknown ood_mode {mode!r}")
    bg = _as_unit_rows(bg_vectors, "background vectors")
    imgs = _as_unit_rows(ood_batch, "OOD batch")
    if bg.shape[0] == 0 or imgs.shape[0] == 0:
        raise ShapeError("ood_loss_pt requires non-empty OOD batch and background set")
    v, norms = _unit_rows_with_norms(state.positive_params)
    m, d = v.shape
    tau = state.tau
    nb = imgs.shape[0]

    val = 0.0
    gv_sum = np.zeros((m, d))
    for b in range(nb):
        x = imgs[b]
        zp = (v @ x) / tau
        zb = (bg @ x) / tau
        if mode == "sum_exp":
            t = _lse(zp) - _lse(zb)
            g = 1.0 / (1.0 + np.exp(-t)) if t >= 0 else np.exp(t) / (1.0 + np.exp(t))
            sm = np.exp(zp - _lse(zp))
            coeff = g * (1.0 - g) * sm / tau
            val += g
        else:
            lse_all = _lse(np.concatenate([zp, zb]))
            val += float(np.sum(zp) - lse_all)
            pi_pos = np.exp(zp - lse_all)
            coeff = (1.0 - pi_pos) / tau
        gv_sum += np.outer(coeff, x)

    grad = _project_rows(gv_sum / nb, v, norms)
    return LossResult(value=val / nb, grad=grad)


def gradient_scale(grad_id: np.ndarray, grad_ood: np.ndarray, eps: float = GRAD_SCALE_EPS) -> float:
    """Constant s with ||s * grad_ood|| = ||grad_id|| (no gradient through s)."""
    return float(np.linalg.norm(grad_id) / (np.linalg.norm(grad_ood) + eps))


def enhance_positives(class_emb, learned_pos, w: float = 0.5) -> np.ndarray:
    """Normalized blend: row i = normalize(w*class_i + (1-w)*normalize(pos_i))."""
    if not 0.0 <= w <= 1.0:
        raise ConfigError("mix weight w must be in [0, 1]")
    cls = _as_unit_rows(class_emb, "class embeddings")
    pos = np.array(learned_pos, dtype=np.float64)
    if pos.shape != cls.shape:
        raise ShapeError("class and learned-positive shapes must match")
    pos_unit, _ = _unit_rows_with_norms(pos)
    blend = w * cls + (1.0 - w) * pos_unit
    norms = np.linalg.norm(blend, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateRowError(int(np.where(norms == 0.0)[0][0]), "blended positive cancels to zero")
    return blend / norms[:, None]


def _offset_image(x: np.ndarray, offset: np.ndarray) -> tuple[np.ndarray, float]:
    z = x + offset
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        raise DataError("visual offset cancels an image embedding to zero")
    return z / nz, nz


def vpt_ce_loss(batch: FewShotBatch, p_prime, state: TuneState) -> LossResult:
    """Cross entropy over S(normalize(x + v), P'_i)/tau at the true class."""
    pp = _as_unit_rows(p_prime, "enhanced positives")
    m = pp.shape[0]
    nb = batch.images.shape[0]
    if nb == 0:
        raise ShapeError("vpt_ce_loss requires a non-empty batch")
    ids = batch.class_ids
    if ids.min() < 0 or ids.max() >= m:
        raise LabelError(f"class id out of range 0..{m - 1}")
    tau = state.tau
    val = 0.0
    gv = np.zeros_like(state.visual_offset)
    for b in range(nb):
        zhat, nz = _offset_image(batch.images[b], state.visual_offset)
        logits = (pp @ zhat) / tau
        lse = _lse(logits)
        y = int(ids[b])
        val += -logits[y] + lse
        pi = np.exp(logits - lse)
        pi[y] -= 1.0
        gz = (pi / tau) @ pp
        gv += _project_vec(gz, zhat, nz)
    return LossResult(value=val / nb, grad=gv / nb)


def vpt_ood_loss(ood_batch, p_prime, bg_vectors, state: TuneState) -> LossResult:
    """OOD loss for visual tuning: mass of the single most similar positive.

        H(x) = max_i e^{S_i/tau} / (sum_i e^{S_i/tau} + sum_j e^{B_j/tau})

    Subgradient flows through the argmax positive (ties: lowest index).
    """
    pp = _as_unit_rows(p_prime, "enhanced positives")
    bg = _as_unit_rows(bg_vectors, "background vectors")
    tau = state.tau
    imgs = _as_unit_rows(ood_batch, "OOD batch")
    nb = imgs.shape[0]
    m = pp.shape[0]
    # an empty background set is allowed here: H degenerates to the max
    # positive's share of the positive mass
    if nb == 0 or m == 0:
        raise ShapeError("vpt_ood_loss requires non-empty batch and positives")
    val = 0.0
    gv = np.zeros_like(state.visual_offset)
    for b in range(nb):
        zhat, nz = _offset_image(imgs[b], state.visual_offset)
        zp = (pp @ zhat) / tau
        zb = (bg @ zhat) / tau
        star = int(np.argmax(zp))
        lse_all = _lse(np.concatenate([zp, zb]))
        h = float(np.exp(zp[star] - lse_all))
        val += h
        pi_pos = np.exp(zp - lse_all)
        pi_bg = np.exp(zb - lse_all)
        coeff_pos = -h * pi_pos
        coeff_pos[star] += h
        gz = (coeff_pos / tau) @ pp + ((-h * pi_bg) / tau) @ bg
        gv += _project_vec(gz, zhat, nz)
    return LossResult(value=val / nb, grad=gv / nb)


def select_ood_proxies(crop_emb, class_vec, keep: int) -> np.ndarray:
    """Rows least similar to the class vector, ascending (similarity, index)."""
    crops = crop_emb.array64() if isinstance(crop_emb, EmbeddingMatrix) else np.asarray(crop_emb, dtype=np.float64)
    if crops.ndim != 2:
        raise ShapeError("crop embeddings must be a matrix")
    if not 1 <= keep <= crops.shape[0]:
        raise ConfigError(f"keep must be in 1..{crops.shape[0]}, got {keep}")
    sims = crops @ np.asarray(class_vec, dtype=np.float64)
    order = np.lexsort((np.arange(crops.shape[0]), sims))
    return crops[order[:keep]]


def _check_finite(value: float, epoch: int, term: str) -> float:
    if not np.isfinite(value):
        raise DivergenceError(epoch, term)
    return value


def _cycled(perm: np.ndarray, start: int, size: int) -> tuple[np.ndarray, int]:
    n = perm.shape[0]
    idx = np.take(perm, np.arange(start, start + size) % n)
    return idx, (start + size) % n


def run_phase1(data: FewShotBatch, state: TuneState, neg_groups, bg_vectors):
    """Phase-1 SGD over positive params; returns (new state, loss trace).

    Per batch: total = s * L_OOD + lambda3 * L_ID with s the gradient-scale
    constant.  The trace has one (epoch, term, value) row per term per epoch
    for terms id, ood, scale, total.
    """
    params = state.positive_params.copy()
    rng = np.random.default_rng([state.seed, 1])
    n = data.images.shape[0]
    n_ood = data.ood_images.shape[0]
    if n == 0 or n_ood == 0:
        raise ShapeError("phase 1 needs non-empty training and OOD batches")
    bs = min(state.batch_size_phase1, n)
    bs_ood = min(state.batch_size_phase1, n_ood)
    trace: list[tuple[int, str, float]] = []
    for epoch in range(state.epochs_phase1):
        perm = rng.permutation(n)
        operm = rng.permutation(n_ood)
        opos = 0
        sums = {"id": 0.0, "ood": 0.0, "scale": 0.0, "total": 0.0}
        batches = 0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            oidx, opos = _cycled(operm, opos, bs_ood)
            st = replace(state, positive_params=params)
            sub = FewShotBatch(
                images=data.images[idx], class_ids=data.class_ids[idx],
                ood_images=data.ood_images[oidx],
            )
            id_res = id_loss(sub, st, neg_groups)
            ood_res = ood_loss_pt(sub.ood_images, st, bg_vectors)
            _check_finite(id_res.value, epoch, "id")
            _check_finite(ood_res.value, epoch, "ood")
            s = gradient_scale(id_res.grad, ood_res.grad)
            total = _check_finite(s * ood_res.value + state.lambda3 * id_res.value, epoch, "total")
            grad = s * ood_res.grad + state.lambda3 * id_res.grad
            params = params - state.lr_phase1 * grad
            with np.errstate(over="ignore"):
                if not np.isfinite(np.linalg.norm(params)):
                    raise DivergenceError(epoch, "params")
            sums["id"] += id_res.value
            sums["ood"] += ood_res.value
            sums["scale"] += s
            sums["total"] += total
            batches += 1
        for term in ("id", "ood", "scale", "total"):
            trace.append((epoch, term, float(sums[term] / batches)))
    return replace(state, positive_params=params), trace


def run_phase2(data: FewShotBatch, state: TuneState, p_prime, bg_vectors):
    """Phase-2 SGD over the visual offset with positives frozen.

    Per batch: total = L_CE + lambda4 * s * L_VPT_OOD.  Trace terms:
    ce, vpt_ood, scale, total.
    """
    offset = state.visual_offset.copy()
    rng = np.random.default_rng([state.seed, 2])
    n = data.images.shape[0]
    n_ood = data.ood_images.shape[0]
    if n == 0 or n_ood == 0:
        raise ShapeError("phase 2 needs non-empty training and OOD batches")
    bs = min(state.batch_size_phase2, n)
    bs_ood = min(state.batch_size_phase2, n_ood)
    trace: list[tuple[int, str, float]] = []
    for epoch in range(state.epochs_phase2):
        perm = rng.permutation(n)
        operm = rng.permutation(n_ood)
        opos = 0
        sums = {"ce": 0.0, "vpt_ood": 0.0, "scale": 0.0, "total": 0.0}
        batches = 0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            oidx, opos = _cycled(operm, opos, bs_ood)
            st = replace(state, visual_offset=offset)
            sub = FewShotBatch(
                images=data.images[idx], class_ids=data.class_ids[idx],
                ood_images=data.ood_images[oidx],
            )
            ce = vpt_ce_loss(sub, p_prime, st)
            oo = vpt_ood_loss(sub.ood_images, p_prime, bg_vectors, st)
            _check_finite(ce.value, epoch, "ce")
            _check_finite(oo.value, epoch, "vpt_ood")
            s = gradient_scale(ce.grad, oo.grad)
            total = _check_finite(ce.value + state.lambda4 * s * oo.value, epoch, "total")
            grad = ce.grad + state.lambda4 * s * oo.grad
            offset = offset - state.lr_phase2 * grad
            with np.errstate(over="ignore"):
                if not np.isfinite(np.linalg.norm(offset)):
                    raise DivergenceError(epoch, "params")
            sums["ce"] += ce.value
            sums["vpt_ood"] += oo.value
            sums["scale"] += s
            sums["total"] += total
            batches += 1
        for term in ("ce", "vpt_ood", "scale", "total"):
            trace.append((epoch, term, float(sums[term] / batches)))
    return replace(state, visual_offset=offset), trace


_SIDECAR_FIELDS = (
    "lambda1", "lambda2", "lambda3", "lambda4", "tau", "mix_weight", "seed",
    "lr_phase1", "epochs_phase1", "batch_size_phase1",
    "lr_phase2", "epochs_phase2", "batch_size_phase2", "ood_mode",
)


def save_checkpoint(state: TuneState, emb_path, sidecar_path) -> None:
    """Positive params + offset as one embedding file, hypers as JSON."""
    stacked = np.vstack([state.positive_params, state.visual_offset[None, :]])
    save_emb(EmbeddingMatrix(stacked.astype(np.float32)), emb_path)
    doc = {name: getattr(state, name) for name in _SIDECAR_FIELDS}
    doc["num_classes"] = state.num_classes
    doc["dim"] = state.dim
    write_text_atomic(sidecar_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_checkpoint(emb_path, sidecar_path, class_emb) -> TuneState:
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    stacked = load_emb(emb_path).array64()
    m = int(doc.pop("num_classes"))
    doc.pop("dim", None)
    if stacked.shape[0] != m + 1:
        raise ShapeError(f"checkpoint has {stacked.shape[0]} rows; expected {m + 1}")
    return TuneState(
        positive_params=stacked[:m],
        visual_offset=stacked[m],
        class_emb=_as_unit_rows(class_emb, "class embeddings"),
        **doc,
    )


def write_trace_csv(trace, path) -> None:
    lines = ["epoch,term,value"]
    lines += [f"{epoch},{term},{float(value)!r}" for epoch, term, value in trace]
    write_text_atomic(path, "\n".join(lines) + "\n")
