import numpy as np
import pytest

from negspace.errors import DataError, EmptyInputError
from negspace.metrics import EvalReport, auroc, evaluate, fpr_at_tpr, tpr_threshold


# ------------------------------------------------------------------ oracles

def auroc_pairwise(ids, oods):
    """O(n^2) pairwise definition: P(id > ood) + 0.5 P(tie)."""
    ids = np.asarray(ids, dtype=np.float64)[:, None]
    oods = np.asarray(oods, dtype=np.float64)[None, :]
    wins = np.count_nonzero(ids > oods)
    ties = np.count_nonzero(ids == oods)
    return (wins + 0.5 * ties) / (ids.size * oods.size)


def fpr_sweep(ids, oods, level):
    """Exhaustive threshold sweep over all ID score values."""
    ids = np.asarray(ids, dtype=np.float64)
    oods = np.asarray(oods, dtype=np.float64)
    feasible = [g for g in np.unique(ids) if np.mean(ids >= g) >= level]
    gamma = max(feasible)
    return float(np.mean(oods >= gamma))


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8], [0.1, 0.2]) == 1.0

    def test_all_ties_is_half(self):
        assert auroc([0.5] * 4, [0.5] * 6) == 0.5

    def test_three_of_four_pairs(self):
        assert auroc([0.8, 0.2], [0.5, 0.1]) == pytest.approx(0.75, abs=1e-15)

    def test_matches_pairwise_oracle(self, rng):
        for _ in range(40):
            n_id = int(rng.integers(1, 120))
            n_ood = int(rng.integers(1, 120))
            ids = rng.standard_normal(n_id)
            oods = rng.standard_normal(n_ood)
            if rng.random() < 0.4:  # force ties
                ids = np.round(ids, 1)
                oods = np.round(oods, 1)
            assert abs(auroc(ids, oods) - auroc_pairwise(ids, oods)) <= 1e-12

    def test_invariant_under_monotone_transform(self, rng):
        ids = rng.standard_normal(80)
        oods = rng.standard_normal(60)
        base = auroc(ids, oods)
        assert auroc(np.exp(ids), np.exp(oods)) == pytest.approx(base, abs=1e-12)
        assert auroc(3 * ids + 7, 3 * oods + 7) == pytest.approx(base, abs=1e-12)

    def test_symmetry_identity(self, rng):
        for _ in range(20):
            ids = np.round(rng.standard_normal(30), 1)
            oods = np.round(rng.standard_normal(50), 1)
            assert auroc(ids, oods) + auroc(oods, ids) == pytest.approx(1.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            auroc([], [0.1])
        with pytest.raises(EmptyInputError):
            auroc([0.1], [])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            auroc([np.nan], [0.1])


class TestFprAtTpr:
    def test_frozen_example_threshold_two(self):
        ids = np.arange(1.0, 21.0)  # 1..20
        assert tpr_threshold(ids, 0.95) == 2.0
        assert fpr_at_tpr(ids, [1.5, 2.5], 0.95) == 0.5

    def test_ood_all_below_min_id(self, rng):
        ids = rng.uniform(5, 6, 30)
        oods = rng.uniform(0, 1, 20)
        assert fpr_at_tpr(ids, oods) == 0.0

    def test_ood_all_above_max_id(self, rng):
        ids = rng.uniform(0, 1, 30)
        oods = rng.uniform(5, 6, 20)
        assert fpr_at_tpr(ids, oods) == 1.0

    def test_matches_sweep_oracle_exactly(self, rng):
        for _ in range(50):
            n_id = int(rng.integers(1, 150))
            n_ood = int(rng.integers(1, 150))
            ids = np.round(rng.standard_normal(n_id), 1)
            oods = np.round(rng.standard_normal(n_ood), 1)
            level = float(rng.choice([0.5, 0.8, 0.9, 0.95, 0.99, 1.0]))
            assert fpr_at_tpr(ids, oods, level) == fpr_sweep(ids, oods, level)

    def test_non_increasing_as_level_decreases(self, rng):
        ids = rng.standard_normal(100)
        oods = rng.standard_normal(100) + 0.5
        levels = [1.0, 0.99, 0.95, 0.9, 0.8, 0.5]
        values = [fpr_at_tpr(ids, oods, lv) for lv in levels]
        for higher, lower in zip(values, values[1:]):
            assert lower <= higher


class TestEvalReport:
    def test_evaluate_round_trip(self, tmp_path, rng):
        ids = rng.standard_normal(40) + 2
        oods = rng.standard_normal(40)
        report = evaluate(ids, oods, config={"pipeline": "test"})
        path = tmp_path / "report.json"
        report.save(path)
        back = EvalReport.from_json(path.read_text())
        assert back == report

    def test_table_layout(self, rng):
        report = evaluate([1.0, 2.0, 3.0], [0.0, 0.5])
        table = report.table()
        assert "FPR95" in table and "AUROC" in table
        assert "100.00" in table  # perfect separation

    def test_bounds_validated(self):
        with pytest.raises(DataError):
            EvalReport(auroc=1.5, fpr95=0.0, n_id=1, n_ood=1, threshold=0.0)
