import math

import numpy as np
import pytest

from negspace.embstore import EmbeddingMatrix
from negspace.errors import (
    ConfigError,
    DegenerateRowError,
    EmptyLexiconError,
    EmptyReferenceError,
    GroupingError,
    ShapeError,
)
from negspace.lexicon import from_texts
from negspace.mining import (
    MiningConfig,
    MiningInputs,
    NegativeSelection,
    adjust_superclass_embeddings,
    materialize_groups,
    mine,
    partition_groups,
    score_candidates,
    select_negatives,
    selection_size,
)

from conftest import random_unit_matrix, unit_rows


# ---------------------------------------------------------------- naive oracle

def oracle_quantile(sorted_sims: np.ndarray, q: float) -> float:
    n = sorted_sims.shape[0]
    h = (n - 1) * q
    lo = int(math.floor(h))
    if lo >= n - 1:
        return float(sorted_sims[-1])
    return float(sorted_sims[lo] + (h - lo) * (sorted_sims[lo + 1] - sorted_sims[lo]))


def oracle_mine(cand: np.ndarray, ref: np.ndarray, q: float, p: float, k_groups: int):
    """Full similarity matrix, per-row sort, explicit selection and grouping."""
    sims = np.clip(cand.astype(np.float64) @ ref.astype(np.float64).T, -1, 1)
    scores = np.array([oracle_quantile(np.sort(sims[i]), q) for i in range(cand.shape[0])])
    k = int(math.ceil(p * cand.shape[0] - 1e-9))
    order = sorted(range(cand.shape[0]), key=lambda i: (scores[i], i))[:k]
    groups = [order[g::k_groups] for g in range(k_groups)]
    return order, scores, groups


def sims_of(emb_from: EmbeddingMatrix, emb_to: EmbeddingMatrix) -> np.ndarray:
    return np.clip(emb_from.array64() @ emb_to.array64().T, -1, 1)


class TestScoreCandidates:
    def test_single_reference_any_quantile(self, rng):
        cand = random_unit_matrix(rng, 10, 6)
        ref = random_unit_matrix(rng, 1, 6)
        expected = sims_of(cand, ref)[:, 0]
        for q in (0.0, 0.3, 1.0):
            np.testing.assert_allclose(score_candidates(cand, ref, q), expected, atol=1e-12)

    def test_midpoint_interpolation(self):
        # candidate e1 against references e1 and e2: sims {1.0, 0.0}
        cand = EmbeddingMatrix(np.array([[1, 0]], dtype=np.float32), normalized=True)
        ref = EmbeddingMatrix(np.array([[1, 0], [0, 1]], dtype=np.float32), normalized=True)
        assert score_candidates(cand, ref, 0.5)[0] == pytest.approx(0.5, abs=1e-12)

    def test_frozen_quantile_example(self):
        # sims {0.1, 0.2, 0.3, 0.4} at q=0.95 -> 0.385 by h=(n-1)q interpolation
        sorted_sims = np.array([0.1, 0.2, 0.3, 0.4])
        assert oracle_quantile(sorted_sims, 0.95) == pytest.approx(0.385, abs=1e-12)
        d = 4
        ref_rows = np.eye(d, dtype=np.float32)[:4]
        cand_row = np.array([[0.1, 0.2, 0.3, 0.4]])
        cand_row = cand_row / np.linalg.norm(cand_row)
        # scale reference rows stay unit; candidate sims to e_i give exactly its coords
        cand = EmbeddingMatrix(cand_row.astype(np.float32), normalized=True)
        ref = EmbeddingMatrix(ref_rows, normalized=True)
        expected = oracle_quantile(np.sort(sims_of(cand, ref)[0]), 0.95)
        assert score_candidates(cand, ref, 0.95)[0] == pytest.approx(expected, abs=1e-12)

    def test_empty_reference(self, rng):
        cand = random_unit_matrix(rng, 3, 4)
        ref = EmbeddingMatrix(np.zeros((0, 4), dtype=np.float32), normalized=True)
        with pytest.raises(EmptyReferenceError):
            score_candidates(cand, ref, 0.95)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            score_candidates(random_unit_matrix(rng, 3, 4), random_unit_matrix(rng, 3, 5), 0.9)

    def test_quantile_monotone_in_similarities(self, rng):
        sims = np.sort(rng.uniform(-1, 1, 20))
        bumped = np.sort(np.clip(sims + rng.uniform(0, 0.2, 20), -1, 1))
        for q in (0.0, 0.4, 0.95, 1.0):
            assert oracle_quantile(bumped, q) >= oracle_quantile(sims, q)


class TestAdjustSuperclasses:
    def test_hand_arithmetic(self):
        sc = EmbeddingMatrix(np.array([[1, 0]], dtype=np.float32), normalized=True)
        bg = EmbeddingMatrix(np.array([[0, 1]], dtype=np.float32), normalized=True)
        out = adjust_superclass_embeddings(sc, bg)
        np.testing.assert_allclose(out.data, [[0.70710678, -0.70710678]], atol=1e-7)

    def test_orthogonal_bg_keeps_unit_norm(self, rng):
        sc = random_unit_matrix(rng, 4, 8)
        bg = random_unit_matrix(rng, 4, 8)
        out = adjust_superclass_embeddings(sc, bg)
        np.testing.assert_allclose(np.linalg.norm(out.array64(), axis=1), 1.0, atol=1e-6)

    def test_equal_sc_and_bg_degenerate(self, rng):
        sc = random_unit_matrix(rng, 3, 8)
        with pytest.raises(DegenerateRowError):
            adjust_superclass_embeddings(sc, sc)

    def test_row_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            adjust_superclass_embeddings(random_unit_matrix(rng, 3, 8), random_unit_matrix(rng, 2, 8))


class TestSelectNegatives:
    def test_p_one_selects_all(self, rng):
        scores = rng.standard_normal(17)
        assert len(select_negatives(scores, 1.0)) == 17

    def test_third_of_three(self):
        scores = np.array([0.9, 0.1, 0.5])
        assert select_negatives(scores, 1 / 3) == [1]

    def test_thousand_vs_sort_oracle(self, rng):
        scores = rng.standard_normal(1000)
        got = select_negatives(scores, 0.15)
        k = int(math.ceil(0.15 * 1000 - 1e-9))
        assert k == 150
        expected = sorted(range(1000), key=lambda i: (scores[i], i))[:k]
        assert got == expected

    def test_tie_break_by_id(self):
        scores = np.array([0.5, 0.5, 0.1, 0.5])
        assert select_negatives(scores, 0.75) == [2, 0, 1]

    def test_empty_pool(self):
        with pytest.raises(EmptyLexiconError):
            select_negatives(np.array([]), 0.5)

    def test_selection_size_guard(self):
        assert selection_size(0.15, 1000) == 150
        assert selection_size(1 / 3, 3) == 1
        assert selection_size(0.15, 10) == 2
        assert selection_size(1.0, 7) == 7

    def test_raising_score_never_selects(self, rng):
        scores = rng.standard_normal(100)
        base = set(select_negatives(scores, 0.2))
        outsider = next(i for i in range(100) if i not in base)
        for delta in (0.1, 1.0, 10.0):
            bumped = scores.copy()
            bumped[outsider] += delta
            assert outsider not in set(select_negatives(bumped, 0.2))


class TestPartitionGroups:
    def test_single_group(self):
        assert partition_groups([5, 2, 9], 1) == [[5, 2, 9]]

    def test_round_robin_six_by_three(self):
        ranked = [10, 11, 12, 13, 14, 15]
        assert partition_groups(ranked, 3) == [[10, 13], [11, 14], [12, 15]]

    def test_disjoint_union_property(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 60))
            k = int(rng.integers(1, n + 1))
            ids = list(rng.permutation(1000)[:n])
            groups = partition_groups(ids, k)
            flat = [i for g in groups for i in g]
            assert sorted(flat) == sorted(ids)
            sizes = [len(g) for g in groups]
            assert max(sizes) - min(sizes) <= 1

    def test_k_too_large(self):
        with pytest.raises(GroupingError):
            partition_groups([1, 2], 3)

    def test_unknown_strategy(self):
        with pytest.raises(GroupingError):
            partition_groups([1, 2], 1, strategy="striped")


class TestMine:
    def _instance(self, rng, n_cand=500, n_cls=50, n_sc=10, d=16):
        cand = random_unit_matrix(rng, n_cand, d)
        cls = random_unit_matrix(rng, n_cls, d)
        sc = random_unit_matrix(rng, n_sc, d)
        bg = random_unit_matrix(rng, n_sc, d)
        labels = from_texts([f"w{i}" for i in range(n_cand)])
        return labels, cand, cls, sc, bg

    def test_plain_matches_naive_oracle(self, rng):
        labels, cand, cls, sc, bg = self._instance(rng)
        cfg = MiningConfig(q=0.95, p=0.15, k_groups=10, variant="plain")
        sel = mine(labels, cand, cfg, MiningInputs(class_emb=cls))
        order, scores, groups = oracle_mine(cand.data, cls.data, 0.95, 0.15, 10)
        assert list(sel.selected) == order
        assert [list(g) for g in sel.groups] == groups
        np.testing.assert_allclose(sel.scores, [scores[i] for i in order], atol=1e-12)

    def test_superclass_bg_matches_naive_oracle(self, rng):
        labels, cand, cls, sc, bg = self._instance(rng, n_cand=200, d=12)
        cfg = MiningConfig(q=0.9, p=0.2, k_groups=7, variant="superclass_bg")
        sel = mine(labels, cand, cfg, MiningInputs(class_emb=cls, sc_emb=sc, bg_vectors=bg))
        adj = unit_rows(sc.array64() - bg.array64())
        order, _, groups = oracle_mine(cand.data, adj.astype(np.float32), 0.9, 0.2, 7)
        assert list(sel.selected) == order
        assert [list(g) for g in sel.groups] == groups

    def test_superclass_identity_equals_plain(self, rng):
        labels, cand, cls, _, _ = self._instance(rng, n_cand=120, n_cls=12, d=10)
        plain = mine(labels, cand, MiningConfig(variant="plain", k_groups=5),
                     MiningInputs(class_emb=cls))
        as_sc = mine(labels, cand, MiningConfig(variant="superclass", k_groups=5),
                     MiningInputs(sc_emb=cls))
        assert plain == as_sc

    def test_bg_equal_to_sc_degenerate(self, rng):
        labels, cand, cls, sc, _ = self._instance(rng, n_cand=50, d=8)
        cfg = MiningConfig(variant="superclass_bg", k_groups=2)
        with pytest.raises(DegenerateRowError):
            mine(labels, cand, cfg, MiningInputs(class_emb=cls, sc_emb=sc, bg_vectors=sc))

    def test_missing_variant_inputs(self, rng):
        labels, cand, cls, sc, bg = self._instance(rng, n_cand=30, d=8)
        with pytest.raises(ConfigError):
            mine(labels, cand, MiningConfig(variant="superclass", k_groups=2), MiningInputs(class_emb=cls))
        with pytest.raises(ConfigError):
            mine(labels, cand, MiningConfig(variant="superclass_bg", k_groups=2), MiningInputs(sc_emb=sc))

    def test_candidate_order_invariance(self, rng):
        labels, cand, cls, _, _ = self._instance(rng, n_cand=80, n_cls=9, d=8)
        cfg = MiningConfig(q=0.8, p=0.25, k_groups=4, variant="plain")
        base = mine(labels, cand, cfg, MiningInputs(class_emb=cls))
        perm = rng.permutation(80)
        permuted = EmbeddingMatrix(cand.data[perm], normalized=True)
        sel2 = mine(labels, permuted, cfg, MiningInputs(class_emb=cls))
        # map permuted ids back to original ids; the selected set must agree
        back = {new: orig for new, orig in enumerate(perm)}
        assert sorted(back[i] for i in sel2.selected) == sorted(base.selected)

    def test_selection_json_round_trip(self, tmp_path, rng):
        labels, cand, cls, _, _ = self._instance(rng, n_cand=40, n_cls=5, d=8)
        sel = mine(labels, cand, MiningConfig(variant="plain", k_groups=3),
                   MiningInputs(class_emb=cls))
        path = tmp_path / "sel.json"
        sel.save(path)
        assert NegativeSelection.load(path) == sel

    def test_fully_filtered_pool_rejected_downstream(self, rng):
        # filtering away every candidate is legal in the lexicon; mining is
        # where the empty pool becomes an error
        from negspace.lexicon import filter_categories, from_texts as ft
        labels = ft(["a", "b"], ["x", "x"])
        emptied = filter_categories(labels, {"x"})
        assert len(emptied) == 0
        cand = EmbeddingMatrix(np.zeros((0, 4), dtype=np.float32), normalized=True)
        cls = random_unit_matrix(rng, 2, 4)
        with pytest.raises(EmptyLexiconError):
            mine(emptied, cand, MiningConfig(variant="plain", k_groups=1),
                 MiningInputs(class_emb=cls))

    def test_materialize_groups_shapes(self, rng):
        labels, cand, cls, _, _ = self._instance(rng, n_cand=40, n_cls=5, d=8)
        sel = mine(labels, cand, MiningConfig(variant="plain", k_groups=3),
                   MiningInputs(class_emb=cls))
        groups = materialize_groups(sel, cand)
        assert len(groups) == 3
        assert sum(g.shape[0] for g in groups) == len(sel.selected)
        np.testing.assert_array_equal(groups[0][0], cand.data[sel.groups[0][0]])
