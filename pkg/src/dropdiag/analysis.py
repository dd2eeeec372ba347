"""Experiment procedures built on the library core.

Covers the supervised 2-D visualization (Fisher discriminant projection),
the dropout-rate sweep with its knee-based rate selection, dense 2-D field
scans of predictive mean/variance for two-feature models, and the
severity-by-severity comparison grid of a dropout network against its
non-dropout baseline.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from dropdiag.data import LabeledDataset
from dropdiag.diagnosis import (
    ConditionDiagnosis,
    DiagnosisTableRow,
    diagnose_mc,
    diagnose_softmax,
    diagnosis_table,
)
from dropdiag.mathops import symmetric_generalized_eig
from dropdiag.mc import PredictiveSummary, mc_predict, mc_predict_batch, mean_class_summary
from dropdiag.network import NetworkConfig, NetworkParams, forward_batch
from dropdiag.rng import RngStream
from dropdiag.trainer import TrainConfig, TrainingDivergedError, train

MAX_USABLE_DROPOUT_RATE = 0.5


# --- condition grouping -------------------------------------------------------


def condition_name(class_name: str, severity: int) -> str:
    return class_name if severity == 0 else f"{class_name}-SL{severity}"


def condition_groups(data: LabeledDataset) -> dict[str, np.ndarray]:
    """Row indices grouped by (class, severity), ordered by label then severity."""
    keys = sorted(
        {(int(l), int(s)) for l, s in zip(data.labels, data.severity)}
    )
    groups = {}
    for label, sev in keys:
        rows = np.flatnonzero((data.labels == label) & (data.severity == sev))
        groups[condition_name(data.class_names[label], sev)] = rows
    return groups


# --- Fisher discriminant projection -------------------------------------------


@dataclass
class LdaProjection:
    """Linear map onto the leading Fisher discriminant directions.

    Columns of ``matrix`` are within-scatter-orthonormal; data is centered on
    ``grand_mean`` before projection.
    """

    matrix: np.ndarray  # (d, k)
    grand_mean: np.ndarray
    eigenvalues: np.ndarray
    class_means_projected: np.ndarray  # (C, k); NaN rows for absent classes
    fingerprint: str

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


def _dataset_fingerprint(data: LabeledDataset) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(data.features).tobytes())
    digest.update(np.ascontiguousarray(data.labels).tobytes())
    return digest.hexdigest()


def lda_fit(data: LabeledDataset, k: int = 2) -> LdaProjection:
    """Fit the Fisher criterion: directions maximizing between-class over
    within-class scatter, via the generalized symmetric eigenproblem."""
    X, labels = data.features, data.labels
    d = X.shape[1]
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("need at least 2 classes to fit a discriminant projection")
    if k < 1 or k > len(present) - 1:
        raise ValueError(f"k must lie in [1, {len(present) - 1}]")
    if d > 32:
        raise ValueError("feature dimension above 32 is not supported")
    counts = np.bincount(labels, minlength=data.num_classes)
    if any(0 < c < 2 for c in counts):
        raise ValueError("every present class needs at least 2 samples")

    grand_mean = X.mean(axis=0)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for label in present:
        rows = X[labels == label]
        mu = rows.mean(axis=0)
        centered = rows - mu
        Sw += centered.T @ centered
        diff = (mu - grand_mean)[:, None]
        Sb += len(rows) * (diff @ diff.T)

    eigvals, vecs = symmetric_generalized_eig(Sb, Sw)
    matrix = vecs[:, :k]
    projected_means = np.full((data.num_classes, k), np.nan)
    for label in present:
        mu = X[labels == label].mean(axis=0)
        projected_means[label] = (mu - grand_mean) @ matrix
    return LdaProjection(
        matrix=matrix,
        grand_mean=grand_mean,
        eigenvalues=eigvals[:k],
        class_means_projected=projected_means,
        fingerprint=_dataset_fingerprint(data),
    )


def lda_transform(proj: LdaProjection, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != proj.matrix.shape[0]:
        raise ValueError("feature count does not match the fitted projection")
    return (X - proj.grand_mean) @ proj.matrix


# --- dropout-rate sweep ---------------------------------------------------------


@dataclass
class SweepEntry:
    rate: float
    params: NetworkParams | None
    error: str | None
    conditions: list[str]
    condition_labels: list[int]
    mean_rows: np.ndarray | None
    variance_rows: np.ndarray | None
    accuracy: float | None

    @property
    def diagonal_mean(self) -> float | None:
        """Average confidence assigned to the true class, across conditions."""
        if self.mean_rows is None:
            return None
        return float(
            np.mean([self.mean_rows[i, l] for i, l in enumerate(self.condition_labels)])
        )

    @property
    def total_variance(self) -> float | None:
        """Average per-condition total predictive variance."""
        if self.variance_rows is None:
            return None
        return float(self.variance_rows.sum(axis=1).mean())


@dataclass
class SweepResult:
    entries: list[SweepEntry]
    class_names: list[str]

    def entry(self, rate: float) -> SweepEntry:
        for e in self.entries:
            if e.rate == rate:
                return e
        raise KeyError(f"no sweep entry for rate {rate}")


def sweep_dropout(
    rates: Sequence[float],
    net_config: NetworkConfig,
    train_config: TrainConfig,
    train_data: LabeledDataset,
    eval_data: LabeledDataset,
    T: int = 100,
    eval_seed: int = 0,
) -> SweepResult:
    """Train one model per dropout rate and summarize condition-level behavior.

    All entries share data and seeds; only the rate differs.  Evaluation
    substreams are keyed by the rate's text form, so dropping a rate from the
    list cannot change any other entry.  A diverging rate records its error
    and the sweep continues.
    """
    rates = [float(r) for r in rates]
    if not rates:
        raise ValueError("rates must be nonempty")
    if len(set(rates)) != len(rates):
        raise ValueError("rates must be distinct")
    if any(not (0.0 <= r < 1.0) for r in rates):
        raise ValueError("every rate must lie in [0, 1)")

    groups = condition_groups(eval_data)
    cond_labels = [
        int(eval_data.labels[rows[0]]) for rows in groups.values()
    ]
    rng = RngStream(eval_seed)

    entries = []
    for rate in rates:
        config = replace(net_config, dropout_rate=rate)
        try:
            params, _ = train(config, train_config, train_data)
        except TrainingDivergedError as exc:
            entries.append(
                SweepEntry(
                    rate=rate, params=None, error=str(exc),
                    conditions=list(groups), condition_labels=cond_labels,
                    mean_rows=None, variance_rows=None, accuracy=None,
                )
            )
            continue
        summaries = mc_predict_batch(
            params, eval_data.features, T, rng.substream("rate", repr(rate))
        )
        rows = mean_class_summary(
            {name: [summaries[i] for i in idx] for name, idx in groups.items()}
        )
        predicted = np.array([s.predicted_class for s in summaries])
        entries.append(
            SweepEntry(
                rate=rate,
                params=params,
                error=None,
                conditions=rows.conditions,
                condition_labels=cond_labels,
                mean_rows=rows.mean_rows,
                variance_rows=rows.variance_rows,
                accuracy=float(np.mean(predicted == eval_data.labels)),
            )
        )
    return SweepResult(entries=entries, class_names=list(eval_data.class_names))


@dataclass
class SelectionReport:
    chosen_rate: float
    baseline_rate: float
    baseline_diagonal_mean: float
    degradation_floor: float
    max_usable_rate: float
    rates: list[float]
    diagonal_means: list[float | None]
    total_variances: list[float | None]
    eligible: list[bool]
    fallback_used: bool

    def to_dict(self) -> dict:
        return {
            "chosen_rate": self.chosen_rate,
            "baseline_rate": self.baseline_rate,
            "baseline_diagonal_mean": self.baseline_diagonal_mean,
            "degradation_floor": self.degradation_floor,
            "max_usable_rate": self.max_usable_rate,
            "curve": [
                {
                    "rate": r,
                    "diagonal_mean": dm,
                    "total_variance": tv,
                    "eligible": el,
                }
                for r, dm, tv, el in zip(
                    self.rates, self.diagonal_means, self.total_variances, self.eligible
                )
            ],
            "fallback_used": self.fallback_used,
        }


def select_dropout_rate(
    sweep: SweepResult,
    degradation_floor: float = 0.95,
    max_usable_rate: float = MAX_USABLE_DROPOUT_RATE,
) -> SelectionReport:
    """Pick the largest dropout rate that keeps in-distribution confidence.

    A rate is eligible when it is nonzero, strictly below ``max_usable_rate``
    (rates at or beyond it are treated as the excessive-randomness regime and
    never auto-selected), it trained successfully, and its true-class mean
    confidence stays at or above ``degradation_floor`` times the zero-rate
    baseline.  The largest eligible rate wins; if none qualify, the smallest
    nonzero trained rate is returned with ``fallback_used`` set.  The full
    per-rate curve is included so the choice can be audited or overridden.
    """
    entries = sorted(sweep.entries, key=lambda e: e.rate)
    if len(entries) < 3:
        raise ValueError("rate selection needs at least 3 swept rates")
    baseline = next((e for e in entries if e.rate == 0.0), None)
    if baseline is None:
        raise ValueError("rate selection needs a zero-rate baseline entry")
    if baseline.error is not None:
        raise ValueError("zero-rate baseline failed to train; cannot select a rate")
    baseline_diag = baseline.diagonal_mean

    eligible_flags = []
    for e in entries:
        ok = (
            0.0 < e.rate < max_usable_rate
            and e.error is None
            and e.diagonal_mean is not None
            and e.diagonal_mean >= degradation_floor * baseline_diag
        )
        eligible_flags.append(ok)

    eligible_rates = [e.rate for e, ok in zip(entries, eligible_flags) if ok]
    if eligible_rates:
        chosen, fallback = max(eligible_rates), False
    else:
        trained_nonzero = [e.rate for e in entries if e.rate > 0.0 and e.error is None]
        if not trained_nonzero:
            raise ValueError("no nonzero rate trained successfully")
        chosen, fallback = min(trained_nonzero), True

    return SelectionReport(
        chosen_rate=chosen,
        baseline_rate=baseline.rate,
        baseline_diagonal_mean=baseline_diag,
        degradation_floor=degradation_floor,
        max_usable_rate=max_usable_rate,
        rates=[e.rate for e in entries],
        diagonal_means=[e.diagonal_mean for e in entries],
        total_variances=[e.total_variance for e in entries],
        eligible=eligible_flags,
        fallback_used=fallback,
    )


# --- 2-D field scan -------------------------------------------------------------


@dataclass
class FieldScan:
    """Predictive mean/variance of class 1 on a regular 2-D grid."""

    xs: np.ndarray
    ys: np.ndarray
    mean: np.ndarray  # (len(ys), len(xs))
    variance: np.ndarray
    T: int

    @property
    def boundary_proximity(self) -> np.ndarray:
        """0.5 - |mean - 0.5|: maximal on the decision boundary, 0 at certainty."""
        return 0.5 - np.abs(self.mean - 0.5)

    def save_grid_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "mean1", "variance1"])
            for iy, y in enumerate(self.ys):
                for ix, x in enumerate(self.xs):
                    writer.writerow(
                        [repr(float(x)), repr(float(y)),
                         repr(float(self.mean[iy, ix])), repr(float(self.variance[iy, ix]))]
                    )


def field_scan_2d(
    params: NetworkParams,
    bounds: tuple[tuple[float, float], tuple[float, float]] = ((-1.2, 1.2), (-1.2, 1.2)),
    resolution: int = 100,
    T: int = 100,
    rng: RngStream | None = None,
) -> FieldScan:
    """Evaluate mc_predict on every cell of a regular grid.

    Cells draw from substreams keyed by their grid index, so the scan is a
    pure function of (params, grid, T, seed) regardless of evaluation order.
    """
    if params.config.input_dim != 2:
        raise ValueError("field scans require a model with exactly 2 input features")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if rng is None:
        rng = RngStream(0)
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    mean = np.empty((resolution, resolution))
    variance = np.empty((resolution, resolution))
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            summary = mc_predict(
                params, np.array([x, y]), T, rng.substream("cell", ix, iy)
            )
            mean[iy, ix] = summary.mean[1]
            variance[iy, ix] = summary.variance[1]
    return FieldScan(xs=xs, ys=ys, mean=mean, variance=variance, T=T)


# --- severity comparison grid -----------------------------------------------------


@dataclass
class SeverityPanel:
    severity: int
    conditions: list[str]
    condition_labels: list[int]
    baseline_rows: np.ndarray  # average softmax output of the non-dropout net
    mc_mean_rows: np.ndarray
    mc_variance_rows: np.ndarray


@dataclass
class SeverityGrid:
    panels: list[SeverityPanel]
    diagnosis_rows: dict[int, list[DiagnosisTableRow]]
    class_names: list[str]


def severity_grid(
    params_baseline: NetworkParams,
    params_mc: NetworkParams,
    datasets_by_severity: Mapping[int, LabeledDataset],
    T: int = 100,
    rng: RngStream | None = None,
    prob_threshold: float = 0.2,
    std_ratio_threshold: float = 0.1,
    diagnose_severities: tuple[int, ...] = (1, 2),
) -> SeverityGrid:
    """Side-by-side condition rows for the two networks, plus diagnosis tables.

    For each severity level's dataset: the baseline row is the average
    deterministic softmax output per condition; the dropout rows are the
    averaged predictive means and variances.  For the requested severities
    (default the two slightest), per-sample diagnosis reports are aggregated
    into a condition-level comparison table.
    """
    if rng is None:
        rng = RngStream(0)
    panels = []
    diagnosis: dict[int, list[DiagnosisTableRow]] = {}
    class_names: list[str] = []
    for sev in sorted(datasets_by_severity):
        data = datasets_by_severity[sev]
        class_names = list(data.class_names)
        groups = condition_groups(data)
        cond_labels = [int(data.labels[rows[0]]) for rows in groups.values()]

        base_probs, _, _ = forward_batch(params_baseline, data.features)
        baseline_rows = np.stack(
            [base_probs[rows].mean(axis=0) for rows in groups.values()]
        )
        summaries = mc_predict_batch(params_mc, data.features, T, rng.substream("sev", sev))
        rows = mean_class_summary(
            {name: [summaries[i] for i in idx] for name, idx in groups.items()}
        )
        panels.append(
            SeverityPanel(
                severity=sev,
                conditions=list(groups),
                condition_labels=cond_labels,
                baseline_rows=baseline_rows,
                mc_mean_rows=rows.mean_rows,
                mc_variance_rows=rows.variance_rows,
            )
        )

        if sev in diagnose_severities:
            entries = []
            for (name, idx), true_label in zip(groups.items(), cond_labels):
                entry = ConditionDiagnosis(condition=name, true_label=true_label)
                for i in idx:
                    entry.baseline_reports.append(
                        diagnose_softmax(base_probs[i], prob_threshold, true_label=true_label)
                    )
                    entry.mc_reports.append(
                        diagnose_mc(
                            summaries[i],
                            prob_threshold,
                            std_ratio_threshold,
                            true_label=true_label,
                        )
                    )
                entries.append(entry)
            diagnosis[sev] = diagnosis_table(entries)
    return SeverityGrid(panels=panels, diagnosis_rows=diagnosis, class_names=class_names)


# --- delimited exports -------------------------------------------------------------


def save_heatmap_csv(
    path, matrix: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str],
    corner: str = "condition",
) -> None:
    """Heatmap rows as CSV: header of column names, one labeled row per line."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(row_labels), len(col_labels)):
        raise ValueError("matrix shape does not match label counts")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner] + list(col_labels))
        for label, row in zip(row_labels, matrix):
            writer.writerow([label] + [repr(float(v)) for v in row])


def load_heatmap_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a heatmap CSV back into (row_labels, col_labels, matrix)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty heatmap CSV") from None
        if len(header) < 2:
            raise ValueError(f"{path}: heatmap CSV needs a label column and data columns")
        col_labels = header[1:]
        row_labels, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: line {line_no}: wrong cell count")
            row_labels.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ValueError(f"{path}: line {line_no}: non-numeric cell") from None
    if not rows:
        raise ValueError(f"{path}: heatmap CSV has no data rows")
    return row_labels, col_labels, np.asarray(rows, dtype=np.float64)


def save_sweep_outputs(sweep: SweepResult, outdir) -> list[str]:
    """Per-rate mean/variance heatmap CSVs plus a sweep manifest; returns filenames."""
    outdir = Path(outdir)
    written = []
    manifest = {"rates": [], "class_names": sweep.class_names}
    for entry in sweep.entries:
        tag = f"p{entry.rate:g}".replace(".", "_")
        record = {
            "rate": entry.rate,
            "error": entry.error,
            "accuracy": entry.accuracy,
            "diagonal_mean": entry.diagonal_mean,
            "total_variance": entry.total_variance,
        }
        if entry.error is None:
            mean_name = f"sweep_mean_{tag}.csv"
            var_name = f"sweep_variance_{tag}.csv"
            save_heatmap_csv(
                outdir / mean_name, entry.mean_rows, entry.conditions, sweep.class_names
            )
            save_heatmap_csv(
                outdir / var_name, entry.variance_rows, entry.conditions, sweep.class_names
            )
            record["mean_csv"] = mean_name
            record["variance_csv"] = var_name
            written += [mean_name, var_name]
        manifest["rates"].append(record)
    with open(outdir / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    written.append("sweep.json")
    return written
