"""Command-line pipelines.

Subcommands: gen-concepts, mine, score, eval, tune, synthbench.
Options resolve with precedence flags > config file > defaults; the config
file is one JSON document with a section per command, e.g.
``{"mine": {"variant": "superclass_bg", "q": 0.95}}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 LLM unavailable,
5 divergence.
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys

import click
import numpy as np

from negspace import concepts, embstore, lexicon, metrics, mining, scoring, synth, tuning
from negspace.errors import ConfigError, NegspaceError


def _fail(exc: NegspaceError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NegspaceError as exc:
            _fail(exc)
    return wrapper


def resolve_options(config_path: str | None, section: str, defaults: dict, flags: dict) -> dict:
    """flags > config file section > defaults; unknown keys are errors."""
    out = dict(defaults)
    if config_path:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}")
        section_doc = doc.get(section, {})
        if not isinstance(section_doc, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in section_doc.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {section}.{key}")
            out[key] = value
    for key, value in flags.items():
        if value is not None:
            out[key] = value
    return out


def _require(opts: dict, *names: str) -> None:
    for name in names:
        if opts.get(name) is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")


def _require_files(*paths: str) -> None:
    for path in paths:
        if path is not None and not os.path.exists(path):
            raise ConfigError(f"input file not found: {path}")


def _load_normalized(path: str) -> embstore.EmbeddingMatrix:
    return embstore.normalize(embstore.load(path))


def _write_scores_csv(path: str, scores: np.ndarray) -> None:
    lines = ["sample_id,score"]
    lines += [f"{i},{float(s)!r}" for i, s in enumerate(scores)]
    embstore.write_text_atomic(path, "\n".join(lines) + "\n")


def _read_scores_csv(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0] == "sample_id":
        rows = rows[1:]
    try:
        return np.asarray([float(r[1]) for r in rows], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: not a sample_id,score CSV ({exc})")


@click.group()
@click.version_option(package_name="negspace")
def main():
    """Negative-label OOD detection over precomputed embeddings."""


# ---------------------------------------------------------------- gen-concepts

@main.command("gen-concepts")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--labels", type=str, default=None, help="ID class label file.")
@click.option("--labels-format", type=click.Choice(["lines", "jsonl"]), default=None)
@click.option("--endpoint", type=str, default=None, help="Chat-completion endpoint URL.")
@click.option("--model", type=str, default=None, help="Model name sent to the endpoint.")
@click.option("--fixture", type=str, default=None, help="Canned-response JSON (offline mode).")
@click.option("--cache-dir", type=str, default=None, help="Response cache directory.")
@click.option("--api-key-env", type=str, default=None, help="Env var holding the API key.")
@click.option("--max-retries", type=int, default=None)
@click.option("--template-id", type=str, default=None, help="Prompt template id.")
@click.option("--bg-count", type=int, default=None, help="Descriptions per superclass.")
@click.option("--bg-words", type=int, default=None, help="Words per description.")
@click.option("--out", type=str, default=None, help="Output concept-map JSON path.")
@handle_errors
def cmd_gen_concepts(config_path, **flags):
    """Generate superclasses and background descriptions for ID classes."""
    defaults = {
        "labels": None, "labels_format": "lines", "endpoint": "", "model": "claude-3-5-sonnet",
        "fixture": None, "cache_dir": None, "api_key_env": "NEGSPACE_API_KEY",
        "max_retries": 3, "template_id": "v1",
        "bg_count": concepts.DEFAULT_BG_COUNT, "bg_words": concepts.DEFAULT_BG_WORDS,
        "out": None,
    }
    opts = resolve_options(config_path, "gen_concepts", defaults, flags)
    _require(opts, "labels", "out")
    _require_files(opts["labels"], opts["fixture"])
    if not opts["endpoint"] and not opts["fixture"]:
        raise ConfigError("need --endpoint or --fixture")
    labels = lexicon.load_labels(opts["labels"], opts["labels_format"])
    spec = concepts.LlmRequestSpec(
        endpoint=opts["endpoint"], model=opts["model"],
        prompt_template_id=opts["template_id"], max_retries=opts["max_retries"],
        cache_dir=opts["cache_dir"], api_key_env=opts["api_key_env"],
    )
    transport = concepts.FixtureTransport(opts["fixture"]) if opts["fixture"] else None
    cm = concepts.generate_superclasses(labels, spec, transport)
    cm = concepts.generate_backgrounds(cm, spec, opts["bg_count"], opts["bg_words"], transport)
    cm.save(opts["out"])
    click.echo(f"wrote {opts['out']} ({len(cm.superclasses)} superclasses)")


# ------------------------------------------------------------------------ mine

@main.command("mine")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--cand-emb", type=str, default=None, help="Candidate embedding file.")
@click.option("--cand-labels", type=str, default=None, help="Candidate label file.")
@click.option("--cand-labels-format", type=click.Choice(["lines", "jsonl"]), default=None)
@click.option("--class-emb", type=str, default=None, help="ID class embedding file.")
@click.option("--sc-emb", type=str, default=None, help="Superclass embedding file.")
@click.option("--bg-emb", type=str, default=None, help="Background vector file (one row per superclass).")
@click.option("--variant", type=click.Choice(list(mining.VARIANTS)), default=None)
@click.option("--q", type=float, default=None, help="Similarity quantile.")
@click.option("--p", type=float, default=None, help="Selected fraction of candidates.")
@click.option("--k-groups", type=int, default=None, help="Negative group count.")
@click.option("--filter-categories", "filter_cats", type=str, default=None,
              help="Comma-separated category blocklist (off by default).")
@click.option("--out", type=str, default=None, help="Output selection JSON path.")
@handle_errors
def cmd_mine(config_path, **flags):
    """Mine negative labels and partition them into K groups."""
    defaults = {
        "cand_emb": None, "cand_labels": None, "cand_labels_format": "jsonl",
        "class_emb": None, "sc_emb": None, "bg_emb": None,
        "variant": "plain", "q": 0.95, "p": 0.15, "k_groups": 10,
        "filter_cats": "", "out": None,
    }
    opts = resolve_options(config_path, "mine", defaults, flags)
    _require(opts, "cand_emb", "cand_labels", "out")
    _require_files(opts["cand_emb"], opts["cand_labels"], opts["class_emb"],
                   opts["sc_emb"], opts["bg_emb"])
    cfg = mining.MiningConfig(
        q=opts["q"], p=opts["p"], k_groups=opts["k_groups"], variant=opts["variant"]
    )
    cand_labels = lexicon.load_labels(opts["cand_labels"], opts["cand_labels_format"])
    cand_emb = _load_normalized(opts["cand_emb"])
    inputs = mining.MiningInputs(
        class_emb=_load_normalized(opts["class_emb"]) if opts["class_emb"] else None,
        sc_emb=_load_normalized(opts["sc_emb"]) if opts["sc_emb"] else None,
        bg_vectors=_load_normalized(opts["bg_emb"]) if opts["bg_emb"] else None,
    )
    blocklist = {c.strip() for c in opts["filter_cats"].split(",") if c.strip()}
    selection = mine_with_filter(cand_labels, cand_emb, cfg, inputs, blocklist)
    selection.save(opts["out"])
    click.echo(f"wrote {opts['out']} ({len(selection.selected)} negatives, "
               f"{len(selection.groups)} groups)")


def mine_with_filter(cand_labels, cand_emb, cfg, inputs, blocklist) -> mining.NegativeSelection:
    """Mine after an optional category filter; ids stay in original indexing."""
    if not blocklist:
        return mining.mine(cand_labels, cand_emb, cfg, inputs)
    kept = [e.id for e in cand_labels.entries
            if e.category is None or e.category not in blocklist]
    filtered = lexicon.filter_categories(cand_labels, blocklist)
    sub_emb = embstore.EmbeddingMatrix(cand_emb.data[np.asarray(kept, dtype=np.int64)],
                                       normalized=cand_emb.normalized)
    sel = mining.mine(filtered, sub_emb, cfg, inputs)
    remap = np.asarray(kept, dtype=np.int64)
    return mining.NegativeSelection(
        selected=tuple(int(remap[i]) for i in sel.selected),
        scores=sel.scores,
        groups=tuple(tuple(int(remap[i]) for i in g) for g in sel.groups),
    )


# ----------------------------------------------------------------------- score

@main.command("score")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--images", type=str, default=None, help="Image embedding file to score.")
@click.option("--pos-emb", type=str, default=None,
              help="Positive embeddings (class labels or enhanced positives).")
@click.option("--cand-emb", type=str, default=None, help="Candidate embedding file.")
@click.option("--selection", type=str, default=None, help="NegativeSelection JSON.")
@click.option("--scorer", type=click.Choice(["alpha", "mcm"]), default=None)
@click.option("--tau", type=float, default=None, help="Softmax temperature.")
@click.option("--visual-offset-emb", type=str, default=None,
              help="1 x d embedding file added to images before scoring.")
@click.option("--out", type=str, default=None, help="Output scores CSV path.")
@handle_errors
def cmd_score(config_path, **flags):
    """Score image embeddings with the grouped alpha score or MCM."""
    defaults = {
        "images": None, "pos_emb": None, "cand_emb": None, "selection": None,
        "scorer": "alpha", "tau": 0.01, "visual_offset_emb": None, "out": None,
    }
    opts = resolve_options(config_path, "score", defaults, flags)
    _require(opts, "images", "pos_emb", "out")
    _require_files(opts["images"], opts["pos_emb"], opts["cand_emb"],
                   opts["selection"], opts["visual_offset_emb"])
    images = _load_normalized(opts["images"])
    pos = _load_normalized(opts["pos_emb"])
    img_rows = images.data
    if opts["visual_offset_emb"]:
        offset = embstore.load(opts["visual_offset_emb"]).array64()
        if offset.shape[0] != 1:
            raise ConfigError("--visual-offset-emb must contain exactly one row")
        shifted = images.array64() + offset[0][None, :]
        shifted /= np.linalg.norm(shifted, axis=1, keepdims=True)
        img_rows = shifted.astype(np.float32)
    if opts["scorer"] == "alpha":
        _require(opts, "cand_emb", "selection")
        selection = mining.NegativeSelection.load(opts["selection"])
        groups = mining.materialize_groups(selection, _load_normalized(opts["cand_emb"]))
        scores = scoring.alpha_batch(img_rows, pos, groups, opts["tau"])
    else:
        scores = scoring.mcm_batch(img_rows, pos, opts["tau"])
    _write_scores_csv(opts["out"], scores)
    click.echo(f"wrote {opts['out']} ({scores.shape[0]} samples)")


# ------------------------------------------------------------------------ eval

@main.command("eval")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--id-scores", type=str, default=None, help="CSV of ID sample scores.")
@click.option("--ood-scores", type=str, default=None, help="CSV of OOD sample scores.")
@click.option("--tpr-level", type=float, default=None, help="TPR level for FPR (default 0.95).")
@click.option("--out", type=str, default=None, help="Output report JSON path.")
@handle_errors
def cmd_eval(config_path, **flags):
    """Compute AUROC and FPR95 from two score CSVs."""
    defaults = {"id_scores": None, "ood_scores": None, "tpr_level": 0.95, "out": None}
    opts = resolve_options(config_path, "eval", defaults, flags)
    _require(opts, "id_scores", "ood_scores", "out")
    _require_files(opts["id_scores"], opts["ood_scores"])
    report = metrics.evaluate(
        _read_scores_csv(opts["id_scores"]),
        _read_scores_csv(opts["ood_scores"]),
        tpr_level=opts["tpr_level"],
        config={"id_scores": opts["id_scores"], "ood_scores": opts["ood_scores"],
                "tpr_level": opts["tpr_level"]},
    )
    report.save(opts["out"])
    click.echo(report.table())


# ------------------------------------------------------------------------ tune

def _load_train_labels(path: str, n_rows: int) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0] in ("sample_id", "row"):
        rows = rows[1:]
    try:
        ids = np.asarray([int(r[1]) for r in rows], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: not a sample_id,class_id CSV ({exc})")
    if ids.shape[0] != n_rows:
        raise ConfigError(f"{path}: {ids.shape[0]} labels for {n_rows} image rows")
    return ids


def _proxies_from_crops(manifest_path: str, class_emb, per_image: int) -> np.ndarray:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    root = os.path.dirname(os.path.abspath(manifest_path))
    chunks = []
    for item in manifest:
        crops = _load_normalized(os.path.join(root, item["file"]))
        class_vec = class_emb.array64()[int(item["class_id"])]
        chunks.append(tuning.select_ood_proxies(crops, class_vec, per_image))
    if not chunks:
        raise ConfigError(f"{manifest_path}: empty crops manifest")
    return np.vstack(chunks)


@main.command("tune")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--class-emb", type=str, default=None, help="ID class embedding file.")
@click.option("--train-emb", type=str, default=None, help="Few-shot training image embeddings.")
@click.option("--train-labels", type=str, default=None, help="CSV sample_id,class_id.")
@click.option("--cand-emb", type=str, default=None, help="Candidate embedding file.")
@click.option("--selection", type=str, default=None, help="NegativeSelection JSON.")
@click.option("--bg-emb", type=str, default=None, help="Background vector file.")
@click.option("--ood-emb", type=str, default=None, help="Precomputed OOD-proxy embeddings.")
@click.option("--crops-manifest", type=str, default=None,
              help="JSON manifest of per-image crop embedding files.")
@click.option("--proxies-per-image", type=int, default=None,
              help="Lowest-similarity crops kept per image (default 2).")
@click.option("--seed", type=int, default=None, help="RNG seed (required).")
@click.option("--tau", type=float, default=None)
@click.option("--lambda1", type=float, default=None)
@click.option("--lambda2", type=float, default=None)
@click.option("--lambda3", type=float, default=None)
@click.option("--lambda4", type=float, default=None)
@click.option("--mix-weight", type=float, default=None, help="Class-label weight in P'.")
@click.option("--lr-phase1", type=float, default=None)
@click.option("--epochs-phase1", type=int, default=None)
@click.option("--batch-size-phase1", type=int, default=None)
@click.option("--lr-phase2", type=float, default=None)
@click.option("--epochs-phase2", type=int, default=None)
@click.option("--batch-size-phase2", type=int, default=None)
@click.option("--ood-mode", type=click.Choice(list(tuning.OOD_MODES)), default=None)
@click.option("--outdir", type=str, default=None, help="Output directory.")
@handle_errors
def cmd_tune(config_path, **flags):
    """Run the two tuning phases; writes checkpoint, P', offset, traces."""
    defaults = {
        "class_emb": None, "train_emb": None, "train_labels": None,
        "cand_emb": None, "selection": None, "bg_emb": None,
        "ood_emb": None, "crops_manifest": None, "proxies_per_image": 2,
        "seed": None, "tau": 0.01,
        "lambda1": 0.25, "lambda2": 0.25, "lambda3": 0.3, "lambda4": 0.3,
        "mix_weight": 0.5,
        "lr_phase1": 0.025, "epochs_phase1": 200, "batch_size_phase1": 256,
        "lr_phase2": 0.2, "epochs_phase2": 5, "batch_size_phase2": 32,
        "ood_mode": "sum_exp", "outdir": None,
    }
    opts = resolve_options(config_path, "tune", defaults, flags)
    _require(opts, "class_emb", "train_emb", "train_labels", "cand_emb",
             "selection", "bg_emb", "outdir", "seed")
    _require_files(opts["class_emb"], opts["train_emb"], opts["train_labels"],
                   opts["cand_emb"], opts["selection"], opts["bg_emb"],
                   opts["ood_emb"], opts["crops_manifest"])
    if not opts["ood_emb"] and not opts["crops_manifest"]:
        raise ConfigError("need --ood-emb or --crops-manifest for OOD proxies")

    class_emb = _load_normalized(opts["class_emb"])
    train = _load_normalized(opts["train_emb"])
    train_ids = _load_train_labels(opts["train_labels"], train.rows)
    selection = mining.NegativeSelection.load(opts["selection"])
    groups = mining.materialize_groups(selection, _load_normalized(opts["cand_emb"]))
    bg = _load_normalized(opts["bg_emb"]).array64()
    if opts["ood_emb"]:
        proxies = _load_normalized(opts["ood_emb"]).array64()
    else:
        proxies = _proxies_from_crops(opts["crops_manifest"], class_emb,
                                      opts["proxies_per_image"])

    state = tuning.init_state(
        class_emb, seed=opts["seed"], tau=opts["tau"],
        lambda1=opts["lambda1"], lambda2=opts["lambda2"],
        lambda3=opts["lambda3"], lambda4=opts["lambda4"],
        mix_weight=opts["mix_weight"],
        lr_phase1=opts["lr_phase1"], epochs_phase1=opts["epochs_phase1"],
        batch_size_phase1=opts["batch_size_phase1"],
        lr_phase2=opts["lr_phase2"], epochs_phase2=opts["epochs_phase2"],
        batch_size_phase2=opts["batch_size_phase2"],
        ood_mode=opts["ood_mode"],
    )
    data = tuning.FewShotBatch(images=train.array64(), class_ids=train_ids,
                               ood_images=proxies)
    os.makedirs(opts["outdir"], exist_ok=True)
    state1, trace1 = tuning.run_phase1(data, state, groups, bg)
    p_prime = tuning.enhance_positives(state.class_emb, state1.positive_params,
                                       state.mix_weight)
    state2, trace2 = tuning.run_phase2(data, state1, p_prime, bg)

    out = lambda name: os.path.join(opts["outdir"], name)
    tuning.save_checkpoint(state2, out("checkpoint.emb"), out("checkpoint.json"))
    embstore.save(embstore.EmbeddingMatrix(p_prime.astype(np.float32), normalized=True),
                  out("p_prime.emb"))
    embstore.save(embstore.EmbeddingMatrix(state2.visual_offset[None, :].astype(np.float32)),
                  out("visual_offset.emb"))
    tuning.write_trace_csv(trace1, out("trace_phase1.csv"))
    tuning.write_trace_csv(trace2, out("trace_phase2.csv"))
    click.echo(f"tuning complete; outputs in {opts['outdir']}")


# ------------------------------------------------------------------ synthbench

@main.command("synthbench")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Fixture and tuning seed (default 7).")
@click.option("--outdir", type=str, default=None, help="Output directory.")
@click.option("--classes", type=int, default=None)
@click.option("--dim", type=int, default=None)
@click.option("--ood-clusters", type=int, default=None)
@click.option("--variant", type=click.Choice(list(mining.VARIANTS)), default=None)
@click.option("--q", type=float, default=None)
@click.option("--p", type=float, default=None)
@click.option("--k-groups", type=int, default=None)
@click.option("--tau", type=float, default=None, help="Scoring temperature.")
@click.option("--tau-tune", type=float, default=None,
              help="Loss temperature for the tuning phases.")
@click.option("--epochs-phase1", type=int, default=None)
@click.option("--epochs-phase2", type=int, default=None)
@handle_errors
def cmd_synthbench(config_path, **flags):
    """Full synthetic run: fixture, mining, zero-shot and tuned evaluation."""
    defaults = {
        "seed": 7, "outdir": None, "classes": 5, "dim": 32, "ood_clusters": 2,
        "variant": "superclass_bg", "q": 0.95, "p": 0.15, "k_groups": 10,
        "tau": 0.01, "tau_tune": 0.1, "epochs_phase1": 200, "epochs_phase2": 5,
    }
    opts = resolve_options(config_path, "synthbench", defaults, flags)
    _require(opts, "outdir")
    summary = run_synthbench(opts)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


def run_synthbench(opts: dict) -> dict:
    outdir = opts["outdir"]
    fixdir = os.path.join(outdir, "fixture")
    os.makedirs(fixdir, exist_ok=True)
    fix = synth.make_fixture(
        classes=opts["classes"], dim=opts["dim"], ood_clusters=opts["ood_clusters"],
        seed=opts["seed"],
    )
    paths = synth.write_fixture(fix, fixdir)

    # zero-shot pipeline, end to end through the files just written
    cand_labels = lexicon.load_labels(paths["cand_labels"], "jsonl")
    cand_emb = _load_normalized(paths["cand_emb"])
    class_emb = _load_normalized(paths["class_emb"])
    cfg = mining.MiningConfig(q=opts["q"], p=opts["p"], k_groups=opts["k_groups"],
                              variant=opts["variant"])
    inputs = mining.MiningInputs(
        class_emb=class_emb,
        sc_emb=_load_normalized(paths["sc_emb"]),
        bg_vectors=_load_normalized(paths["bg_vectors"]),
    )
    selection = mining.mine(cand_labels, cand_emb, cfg, inputs)
    selection.save(os.path.join(outdir, "selection.json"))
    groups = mining.materialize_groups(selection, cand_emb)

    id_eval = _load_normalized(paths["id_eval"])
    ood_eval = _load_normalized(paths["ood_eval"])
    id_scores = scoring.alpha_batch(id_eval, class_emb, groups, opts["tau"])
    ood_scores = scoring.alpha_batch(ood_eval, class_emb, groups, opts["tau"])
    _write_scores_csv(os.path.join(outdir, "id_scores_zeroshot.csv"), id_scores)
    _write_scores_csv(os.path.join(outdir, "ood_scores_zeroshot.csv"), ood_scores)
    echo = {"seed": opts["seed"], "variant": opts["variant"], "tau": opts["tau"],
            "q": opts["q"], "p": opts["p"], "k_groups": opts["k_groups"]}
    report0 = metrics.evaluate(id_scores, ood_scores,
                               config=dict(echo, pipeline="zero_shot"))
    report0.save(os.path.join(outdir, "report_zeroshot.json"))

    # two-phase tuning on the few-shot split with crop-based OOD proxies
    proxies = np.vstack([
        tuning.select_ood_proxies(crops, fix.class_emb[int(cid)], keep=2)
        for crops, cid in zip(fix.crop_emb, fix.train_class_ids)
    ])
    state = tuning.init_state(
        class_emb, seed=opts["seed"], tau=opts["tau_tune"],
        epochs_phase1=opts["epochs_phase1"], epochs_phase2=opts["epochs_phase2"],
    )
    data = tuning.FewShotBatch(
        images=_load_normalized(paths["train_emb"]).array64(),
        class_ids=fix.train_class_ids, ood_images=proxies,
    )
    bg = _load_normalized(paths["bg_vectors"]).array64()
    state1, trace1 = tuning.run_phase1(data, state, groups, bg)
    p_prime = tuning.enhance_positives(state.class_emb, state1.positive_params,
                                       state.mix_weight)
    state2, trace2 = tuning.run_phase2(data, state1, p_prime, bg)
    tuning.save_checkpoint(state2, os.path.join(outdir, "checkpoint.emb"),
                           os.path.join(outdir, "checkpoint.json"))
    tuning.write_trace_csv(trace1, os.path.join(outdir, "trace_phase1.csv"))
    tuning.write_trace_csv(trace2, os.path.join(outdir, "trace_phase2.csv"))

    def tuned_rows(m: embstore.EmbeddingMatrix) -> np.ndarray:
        shifted = m.array64() + state2.visual_offset[None, :]
        shifted /= np.linalg.norm(shifted, axis=1, keepdims=True)
        return shifted.astype(np.float32)

    id_scores_t = scoring.alpha_batch(tuned_rows(id_eval), p_prime.astype(np.float32),
                                      groups, opts["tau"])
    ood_scores_t = scoring.alpha_batch(tuned_rows(ood_eval), p_prime.astype(np.float32),
                                       groups, opts["tau"])
    _write_scores_csv(os.path.join(outdir, "id_scores_tuned.csv"), id_scores_t)
    _write_scores_csv(os.path.join(outdir, "ood_scores_tuned.csv"), ood_scores_t)
    report1 = metrics.evaluate(id_scores_t, ood_scores_t,
                               config=dict(echo, pipeline="tuned"))
    report1.save(os.path.join(outdir, "report_tuned.json"))

    summary = {
        "zero_shot": {"auroc": report0.auroc, "fpr95": report0.fpr95},
        "tuned": {"auroc": report1.auroc, "fpr95": report1.fpr95},
        "auroc_delta": report1.auroc - report0.auroc,
        "seed": opts["seed"],
    }
    embstore.write_text_atomic(os.path.join(outdir, "summary.json"),
                               json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


if __name__ == "__main__":
    main()
