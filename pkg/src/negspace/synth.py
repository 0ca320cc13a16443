"""Synthetic Gaussian-cluster fixtures.

Builds a miniature embedding world that exercises the whole pipeline:
orthonormal class directions, superclasses contaminated with a background
direction (so background subtraction genuinely helps), a candidate lexicon
of mostly-far random words, clustered ID/OOD images, and per-image "crop"
embeddings with a few low-similarity outliers for OOD-proxy selection.

Everything derives from one integer seed and is byte-deterministic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from negspace.embstore import EmbeddingMatrix, save, write_text_atomic
from negspace.lexicon import LabelSet, from_texts, save_labels


@dataclass
class SynthFixture:
    class_emb: np.ndarray          # (m, d) unit rows
    class_labels: LabelSet
    assignment: dict[int, int]     # class -> superclass
    sc_emb: np.ndarray             # (n_sc, d) unit rows
    bg_desc_emb: list[np.ndarray]  # per superclass: (bg_count, d) unit rows
    bg_vectors: np.ndarray         # (n_sc, d) unit mean of descriptions
    cand_emb: np.ndarray           # (n_cand, d) unit rows
    cand_labels: LabelSet
    train_images: np.ndarray
    train_class_ids: np.ndarray
    crop_emb: list[np.ndarray]     # per training image: (crops, d) unit rows
    id_eval: np.ndarray
    ood_eval: np.ndarray
    seed: int
    dim: int


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def make_fixture(
    classes: int = 5,
    dim: int = 32,
    eval_per_class: int = 60,
    train_per_class: int = 16,
    ood_clusters: int = 2,
    ood_samples: int = 150,
    candidates: int = 400,
    superclasses: int = 2,
    bg_count: int = 10,
    crops_per_image: int = 16,
    noise: float = 0.22,
    modality_gap: float = 0.35,
    seed: int = 7,
) -> SynthFixture:
    """``modality_gap`` shifts every image cluster along one shared direction
    away from the text-side class embeddings, mimicking the constant offset
    between real image and text embedding cones; it is what visual tuning
    can genuinely correct."""
    if dim < classes + superclasses + ood_clusters + 1:
        raise ValueError("dim too small for orthogonal cluster directions")
    rng = np.random.default_rng([seed, 0])

    # orthonormal directions: classes, backgrounds, OOD clusters, modality gap
    basis, _ = np.linalg.qr(
        rng.standard_normal((dim, classes + superclasses + ood_clusters + 1))
    )
    basis = basis.T
    class_dirs = basis[:classes]
    bg_dirs = basis[classes:classes + superclasses]
    ood_dirs = basis[classes + superclasses:classes + superclasses + ood_clusters]
    gap_dir = basis[classes + superclasses + ood_clusters]

    assignment = {c: min(c * superclasses // classes, superclasses - 1) for c in range(classes)}
    sc_rows = []
    for j in range(superclasses):
        members = [c for c, sc in assignment.items() if sc == j]
        core = class_dirs[members].mean(axis=0)
        sc_rows.append(core + 0.6 * bg_dirs[j])
    sc_emb = _unit(np.asarray(sc_rows))

    bg_desc_emb = []
    for j in range(superclasses):
        descs = _unit(bg_dirs[j][None, :] + 0.12 * rng.standard_normal((bg_count, dim)))
        bg_desc_emb.append(descs.astype(np.float64))
    bg_vectors = _unit(np.asarray([d.mean(axis=0) for d in bg_desc_emb]))

    # candidate lexicon in three strata: far random words, class-aligned
    # words that mining must reject, and background-flavored words whose
    # scores drop once the references subtract their background component
    n_far = candidates // 2
    n_near = candidates // 4
    n_bg = candidates - n_far - n_near
    far = rng.standard_normal((n_far, dim))
    near = (class_dirs[rng.integers(0, classes, n_near)] * 3.0
            + rng.standard_normal((n_near, dim)))
    bgish = (bg_dirs[rng.integers(0, superclasses, n_bg)] * 2.0
             + rng.standard_normal((n_bg, dim)))
    cand_emb = _unit(np.vstack([far, near, bgish]))
    perm = rng.permutation(candidates)
    cand_emb = cand_emb[perm]
    categories = ["noun.artifact", "noun.animal", "noun.plant", "adj.all"]
    cand_labels = from_texts(
        [f"cand_{i:04d}" for i in range(candidates)],
        [categories[i % len(categories)] for i in range(candidates)],
    )

    def cluster(center: np.ndarray, count: int) -> np.ndarray:
        shifted = center + modality_gap * gap_dir
        return _unit(shifted[None, :] + noise * rng.standard_normal((count, dim)))

    id_eval = np.vstack([cluster(class_dirs[c], eval_per_class) for c in range(classes)])
    train_images = np.vstack([cluster(class_dirs[c], train_per_class) for c in range(classes)])
    train_class_ids = np.repeat(np.arange(classes), train_per_class)
    # near-OOD: novel objects photographed against the same background
    # scenery the ID superclasses live in
    ood_centers = [
        _unit((ood_dirs[k] + 0.7 * bg_dirs[k % superclasses])[None, :])[0]
        for k in range(ood_clusters)
    ]
    ood_eval = np.vstack([
        cluster(ood_centers[k], ood_samples // ood_clusters) for k in range(ood_clusters)
    ])

    # crops: mostly tight around the image, a few dominated by background
    crop_emb = []
    for img, cid in zip(train_images, train_class_ids):
        tight = img[None, :] + 0.1 * rng.standard_normal((crops_per_image - 3, dim))
        bg = bg_dirs[assignment[int(cid)]]
        off = (0.2 * img[None, :] + bg[None, :]
               + 0.3 * rng.standard_normal((3, dim)))
        crop_emb.append(_unit(np.vstack([tight, off])))

    return SynthFixture(
        class_emb=class_dirs,
        class_labels=from_texts([f"class_{c}" for c in range(classes)]),
        assignment=assignment,
        sc_emb=sc_emb,
        bg_desc_emb=bg_desc_emb,
        bg_vectors=bg_vectors,
        cand_emb=cand_emb,
        cand_labels=cand_labels,
        train_images=train_images,
        train_class_ids=train_class_ids,
        crop_emb=crop_emb,
        id_eval=id_eval,
        ood_eval=ood_eval,
        seed=seed,
        dim=dim,
    )


def _emb(rows: np.ndarray) -> EmbeddingMatrix:
    return EmbeddingMatrix(np.asarray(rows, dtype=np.float32), normalized=True)


def write_fixture(fix: SynthFixture, outdir: str | os.PathLike) -> dict:
    """Write the fixture as pipeline input files; returns the path map."""
    outdir = os.fspath(outdir)
    os.makedirs(os.path.join(outdir, "crops"), exist_ok=True)
    paths = {
        "class_emb": os.path.join(outdir, "class.emb"),
        "class_labels": os.path.join(outdir, "class_labels.txt"),
        "sc_emb": os.path.join(outdir, "superclass.emb"),
        "bg_vectors": os.path.join(outdir, "background.emb"),
        "cand_emb": os.path.join(outdir, "candidates.emb"),
        "cand_labels": os.path.join(outdir, "cand_labels.jsonl"),
        "train_emb": os.path.join(outdir, "train.emb"),
        "train_labels": os.path.join(outdir, "train_labels.csv"),
        "id_eval": os.path.join(outdir, "id_eval.emb"),
        "ood_eval": os.path.join(outdir, "ood_eval.emb"),
        "crops_manifest": os.path.join(outdir, "crops_manifest.json"),
        "concept_map": os.path.join(outdir, "concept_map.json"),
    }
    save(_emb(fix.class_emb), paths["class_emb"])
    save_labels(fix.class_labels, paths["class_labels"], "lines")
    save(_emb(fix.sc_emb), paths["sc_emb"])
    save(_emb(fix.bg_vectors), paths["bg_vectors"])
    save(_emb(fix.cand_emb), paths["cand_emb"])
    save_labels(fix.cand_labels, paths["cand_labels"], "jsonl")
    save(_emb(fix.train_images), paths["train_emb"])
    write_text_atomic(paths["train_labels"], "".join(
        f"{i},{cid}\n" for i, cid in enumerate(fix.train_class_ids)
    ))
    save(_emb(fix.id_eval), paths["id_eval"])
    save(_emb(fix.ood_eval), paths["ood_eval"])

    manifest = []
    for i, (crops, cid) in enumerate(zip(fix.crop_emb, fix.train_class_ids)):
        rel = os.path.join("crops", f"crop_{i:04d}.emb")
        save(_emb(crops), os.path.join(outdir, rel))
        manifest.append({"file": rel, "class_id": int(cid)})
    write_text_atomic(paths["crops_manifest"], json.dumps(manifest, indent=2) + "\n")

    concept_doc = {
        "superclasses": [f"superclass_{j}" for j in range(fix.sc_emb.shape[0])],
        "assignment": {str(c): sc for c, sc in sorted(fix.assignment.items())},
        "backgrounds": {
            str(j): [f"background {j} {i}" for i in range(fix.bg_desc_emb[j].shape[0])]
            for j in range(fix.sc_emb.shape[0])
        },
    }
    write_text_atomic(paths["concept_map"], json.dumps(concept_doc, indent=2, sort_keys=True) + "\n")
    return paths
