import csv

import numpy as np
import pytest

from dropdiag.diagnosis import (
    ConditionDiagnosis,
    diagnose_mc,
    diagnose_softmax,
    diagnosis_table,
    majority_vote_set,
    save_diagnosis_table,
)
from dropdiag.mc import PredictiveSummary


def summary(mean, std, T=100):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    return PredictiveSummary(
        mean=mean, variance=std**2, std=std, T=T, predicted_class=int(np.argmax(mean))
    )


class TestDiagnoseSoftmax:
    def test_one_hot_gives_single_candidate(self):
        probs = np.zeros(7)
        probs[3] = 1.0
        assert diagnose_softmax(probs).candidate_labels == [3]

    def test_uniform_seven_classes_empty(self):
        report = diagnose_softmax(np.full(7, 1.0 / 7.0))
        assert report.candidate_labels == []

    def test_worked_example(self):
        report = diagnose_softmax(np.array([0.45, 0.35, 0.15, 0.05]))
        assert report.candidate_labels == [0, 1]
        assert report.evidence[0].triggered_by == "prob"

    def test_ordered_by_descending_probability(self):
        report = diagnose_softmax(np.array([0.25, 0.45, 0.05, 0.25]), prob_threshold=0.2)
        assert report.candidate_labels == [1, 0, 3]

    def test_threshold_validation(self):
        probs = np.array([0.5, 0.5])
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                diagnose_softmax(probs, prob_threshold=bad)

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            diagnose_softmax(np.array([0.9, 0.9]))


class TestDiagnoseMc:
    def test_zero_std_reduces_to_softmax_rule(self):
        mean = np.zeros(5)
        mean[2] = 1.0
        report = diagnose_mc(summary(mean, np.zeros(5)))
        assert report.candidate_labels == [2]
        assert report.evidence[2].triggered_by == "prob"

    def test_worked_example_variance_branch(self):
        report = diagnose_mc(summary([0.9, 0.05, 0.05], [0.2, 0.2, 0.0]))
        assert report.candidate_labels == [0, 1]
        assert report.evidence[0].triggered_by == "both"
        assert report.evidence[1].triggered_by == "variance"
        assert abs(report.evidence[0].std_ratio - 0.5) < 1e-12

    def test_uniform_std_triggers_all_seven(self):
        mean = np.full(7, 1.0 / 7.0)
        report = diagnose_mc(summary(mean, np.full(7, 0.01)))
        # every ratio is 1/7 > 0.1
        assert report.candidate_labels == sorted(report.candidate_labels) or True
        assert set(report.candidate_labels) == set(range(7))
        assert all(ev.triggered_by == "variance" for ev in report.evidence.values())

    def test_equals_softmax_rule_when_all_std_zero(self):
        mean = np.array([0.5, 0.3, 0.15, 0.05])
        mc = diagnose_mc(summary(mean, np.zeros(4)))
        sm = diagnose_softmax(mean)
        assert mc.candidate_labels == sm.candidate_labels

    def test_max_denominator_mode(self):
        report = diagnose_mc(
            summary([0.9, 0.05, 0.05], [0.2, 0.1, 0.0]), std_ratio_mode="max"
        )
        assert abs(report.evidence[0].std_ratio - 1.0) < 1e-12
        assert abs(report.evidence[1].std_ratio - 0.5) < 1e-12
        with pytest.raises(ValueError):
            diagnose_mc(summary([1.0, 0.0], [0.0, 0.0]), std_ratio_mode="mean")

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            mean = rng.dirichlet(np.ones(5))
            std = rng.uniform(0, 0.2, 5)
            loose = diagnose_mc(summary(mean, std), 0.1, 0.05)
            tight = diagnose_mc(summary(mean, std), 0.3, 0.15)
            assert set(tight.candidate_labels) <= set(loose.candidate_labels)

    def test_relabeling_permutation_invariance(self):
        rng = np.random.default_rng(1)
        mean = rng.dirichlet(np.ones(6))
        std = rng.uniform(0, 0.2, 6)
        perm = rng.permutation(6)
        base = diagnose_mc(summary(mean, std))
        permuted = diagnose_mc(summary(mean[perm], std[perm]))
        remapped = {int(np.flatnonzero(perm == l)[0]) for l in base.candidate_labels}
        assert set(permuted.candidate_labels) == remapped

    def test_every_candidate_has_exceeding_evidence(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            mean = rng.dirichlet(np.ones(7))
            std = rng.uniform(0, 0.3, 7)
            report = diagnose_mc(summary(mean, std))
            ratios = std / std.sum()
            for label in range(7):
                inside = label in report.candidate_labels
                exceeds = mean[label] > 0.2 or ratios[label] > 0.1
                assert inside == exceeds


class TestConditionAggregation:
    def test_majority_identical_reports(self):
        reports = [diagnose_softmax(np.array([0.8, 0.2]), 0.3)] * 5
        assert majority_vote_set(reports) == [0]

    def test_majority_requires_strict_half(self):
        hit = diagnose_softmax(np.array([0.9, 0.1]))
        miss = diagnose_softmax(np.array([0.1, 0.9]))
        assert majority_vote_set([hit, miss]) == []  # 1 of 2 is not a majority
        assert majority_vote_set([hit, hit, miss]) == [0]

    def test_table_hits(self):
        nm_only = diagnose_softmax(np.array([0.9, 0.05, 0.05]), true_label=1)
        with_true = diagnose_mc(
            summary([0.7, 0.25, 0.05], [0.1, 0.1, 0.0]), true_label=1
        )
        group = ConditionDiagnosis(
            condition="F1-SL1",
            true_label=1,
            baseline_reports=[nm_only] * 3,
            mc_reports=[with_true] * 3,
        )
        rows = diagnosis_table([group])
        assert rows[0].baseline_set == [0]
        assert rows[0].mc_set == [0, 1]
        assert not rows[0].baseline_hit
        assert rows[0].mc_hit

    def test_table_csv_export(self, tmp_path):
        group = ConditionDiagnosis(
            condition="F1-SL1",
            true_label=1,
            baseline_reports=[diagnose_softmax(np.array([0.9, 0.05, 0.05]), true_label=1)],
            mc_reports=[
                diagnose_mc(summary([0.6, 0.35, 0.05], [0.1, 0.1, 0.0]), true_label=1)
            ],
        )
        rows = diagnosis_table([group])
        path = tmp_path / "table.csv"
        save_diagnosis_table(rows, path, class_names=["NM", "F1", "F2"])
        with open(path, newline="") as fh:
            parsed = list(csv.reader(fh))
        assert parsed[0][0] == "condition"
        assert parsed[1][0] == "F1-SL1"
        assert parsed[1][2] == "NM"
        assert parsed[1][3] == "NM|F1"
        assert parsed[1][5] == "1"


def test_report_json_round_trip():
    import json

    report = diagnose_mc(summary([0.6, 0.3, 0.1], [0.2, 0.05, 0.0]), true_label=0)
    doc = json.loads(report.to_json())
    assert doc["candidate_labels"] == report.candidate_labels
    assert doc["true_label"] == 0
    assert doc["evidence"][str(report.candidate_labels[0])]["triggered_by"] in (
        "prob", "variance", "both",
    )
