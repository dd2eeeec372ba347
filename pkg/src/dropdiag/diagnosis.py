"""Candidate-fault diagnosis sets from network outputs.

Two rules produce candidates.  The probability rule admits every class whose
(mean) output probability exceeds a threshold, default 20%.  The uncertainty
rule, available only for dropout-sampled summaries, additionally admits
classes holding a large share of the total predictive standard deviation,
default above 10%.  An empty set is legal and means "no confident state";
evaluation treats it as a miss.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dropdiag.mc import PredictiveSummary


@dataclass
class LabelEvidence:
    mean_prob: float
    std_ratio: float
    triggered_by: str  # "prob" | "variance" | "both"


@dataclass
class DiagnosisReport:
    candidate_labels: list[int]
    evidence: dict[int, LabelEvidence]
    prob_threshold: float
    std_ratio_threshold: float | None = None
    std_ratio_mode: str | None = None
    true_label: int | None = None

    def to_dict(self) -> dict:
        return {
            "candidate_labels": self.candidate_labels,
            "evidence": {
                str(label): {
                    "mean_prob": ev.mean_prob,
                    "std_ratio": ev.std_ratio,
                    "triggered_by": ev.triggered_by,
                }
                for label, ev in self.evidence.items()
            },
            "prob_threshold": self.prob_threshold,
            "std_ratio_threshold": self.std_ratio_threshold,
            "std_ratio_mode": self.std_ratio_mode,
            "true_label": self.true_label,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_threshold(value: float, name: str) -> None:
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")


def diagnose_softmax(
    probs: np.ndarray, prob_threshold: float = 0.2, true_label: int | None = None
) -> DiagnosisReport:
    """Candidates = classes with output probability above the threshold,
    ordered by descending probability."""
    _check_threshold(prob_threshold, "prob_threshold")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size < 2:
        raise ValueError("probs must be a vector with at least 2 components")
    if abs(probs.sum() - 1.0) > 1e-6 or probs.min() < 0:
        raise ValueError("probs must be a probability distribution")

    hits = np.flatnonzero(probs > prob_threshold)
    order = hits[np.argsort(-probs[hits], kind="stable")]
    evidence = {
        int(i): LabelEvidence(mean_prob=float(probs[i]), std_ratio=0.0, triggered_by="prob")
        for i in order
    }
    return DiagnosisReport(
        candidate_labels=[int(i) for i in order],
        evidence=evidence,
        prob_threshold=prob_threshold,
        true_label=true_label,
    )


def diagnose_mc(
    summary: PredictiveSummary,
    prob_threshold: float = 0.2,
    std_ratio_threshold: float = 0.1,
    std_ratio_mode: str = "sum",
    true_label: int | None = None,
) -> DiagnosisReport:
    """Candidates from the probability rule plus the uncertainty rule.

    A class's std ratio is its predictive standard deviation divided by that
    of all classes together -- the sum by default, so ratios across classes
    add to 1; ``std_ratio_mode="max"`` divides by the largest instead.  When
    every std is zero the uncertainty rule contributes nothing and the result
    coincides with diagnose_softmax on the mean.
    """
    _check_threshold(prob_threshold, "prob_threshold")
    _check_threshold(std_ratio_threshold, "std_ratio_threshold")
    if std_ratio_mode not in ("sum", "max"):
        raise ValueError(f"std_ratio_mode must be 'sum' or 'max', got {std_ratio_mode!r}")

    mean, std = summary.mean, summary.std
    denom = std.sum() if std_ratio_mode == "sum" else (std.max() if std.size else 0.0)
    ratios = std / denom if denom > 0.0 else np.zeros_like(std)

    by_prob = mean > prob_threshold
    by_var = ratios > std_ratio_threshold if denom > 0.0 else np.zeros_like(by_prob)
    labels = np.flatnonzero(by_prob | by_var)
    order = labels[np.argsort(-mean[labels], kind="stable")]

    evidence = {}
    for i in order:
        i = int(i)
        if by_prob[i] and by_var[i]:
            trigger = "both"
        elif by_prob[i]:
            trigger = "prob"
        else:
            trigger = "variance"
        evidence[i] = LabelEvidence(
            mean_prob=float(mean[i]), std_ratio=float(ratios[i]), triggered_by=trigger
        )
    return DiagnosisReport(
        candidate_labels=[int(i) for i in order],
        evidence=evidence,
        prob_threshold=prob_threshold,
        std_ratio_threshold=std_ratio_threshold,
        std_ratio_mode=std_ratio_mode,
        true_label=true_label,
    )


# --- condition-level aggregation ---------------------------------------------


@dataclass
class ConditionDiagnosis:
    """All per-sample reports for one true condition, for both networks."""

    condition: str
    true_label: int
    baseline_reports: list[DiagnosisReport] = field(default_factory=list)
    mc_reports: list[DiagnosisReport] = field(default_factory=list)


@dataclass
class DiagnosisTableRow:
    condition: str
    true_label: int
    baseline_set: list[int]
    mc_set: list[int]
    baseline_hit: bool
    mc_hit: bool


def majority_vote_set(reports: Sequence[DiagnosisReport]) -> list[int]:
    """Labels appearing in strictly more than half of the reports, ascending."""
    if not reports:
        return []
    counts: dict[int, int] = {}
    for report in reports:
        for label in report.candidate_labels:
            counts[label] = counts.get(label, 0) + 1
    cutoff = len(reports) / 2.0
    return sorted(label for label, c in counts.items() if c > cutoff)


def diagnosis_table(groups: Sequence[ConditionDiagnosis]) -> list[DiagnosisTableRow]:
    """Condition-level comparison of the two networks' diagnosis sets.

    Per condition, each network's set is the majority vote across its member
    reports; a condition is a hit for a network when the true label made it
    into that set.
    """
    rows = []
    for group in groups:
        baseline = majority_vote_set(group.baseline_reports)
        mc = majority_vote_set(group.mc_reports)
        rows.append(
            DiagnosisTableRow(
                condition=group.condition,
                true_label=group.true_label,
                baseline_set=baseline,
                mc_set=mc,
                baseline_hit=group.true_label in baseline,
                mc_hit=group.true_label in mc,
            )
        )
    return rows


def save_diagnosis_table(
    rows: Sequence[DiagnosisTableRow], path, class_names: Sequence[str] | None = None
) -> None:
    """CSV with one line per condition: both sets and their hit flags."""

    def fmt(labels: Sequence[int]) -> str:
        if class_names is not None:
            return "|".join(class_names[i] for i in labels)
        return "|".join(str(i) for i in labels)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["condition", "true_label", "non_dropout_set", "mc_dropout_set",
             "non_dropout_hit", "mc_dropout_hit"]
        )
        for row in rows:
            true = class_names[row.true_label] if class_names else str(row.true_label)
            writer.writerow(
                [row.condition, true, fmt(row.baseline_set), fmt(row.mc_set),
                 int(row.baseline_hit), int(row.mc_hit)]
            )
