"""Dataset model and generators.

Two synthetic sources are provided.  The 2-D toy set puts a healthy class
inside a small disk and a severe fault class on an outer annulus, with an
unobserved intermediate band between them; it exists to probe how a
classifier behaves on states it never trained on.  The chiller-like
generator emulates the structure of a multi-severity fault dataset: a
normal-operation cluster per operating condition, and six faults displaced
along fixed directions with four graded severity levels, where some faults
sit near the normal cluster and others far away.

Severity tags: 0 = fault-free (NM), 1..4 = slightest to severest.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from dropdiag.rng import RngStream

# Sensor channels of a water-cooled chiller test rig; synthetic values are
# placeholders carrying the real channel names only.
CHILLER_FEATURE_NAMES = (
    "TEI",
    "TEO",
    "TCI",
    "TCO",
    "Cond_Tons",
    "Cooling_Tons",
    "kW",
    "FWC_gpm",
    "FWE_gpm",
    "PRE",
    "PRC",
    "TRC_sub",
    "T_suc",
    "Tsh_suc",
    "TR_dis",
    "Tsh_dis",
)

CHILLER_FAULT_NAMES = ("FWE", "FWC", "RL", "RO", "CF", "NC")
CHILLER_CLASS_NAMES = ("NM",) + CHILLER_FAULT_NAMES

TOY_CLASS_NAMES = ("NM", "fault")

SEVERITY_MIN, SEVERITY_MAX = 0, 4


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class StandardizationRecord:
    """Per-feature mean/std fitted on some dataset; std is 1 for constant columns."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "StandardizationRecord":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
        )


@dataclass
class LabeledDataset:
    """Feature matrix plus per-row class label and severity tag.

    ``standardization`` records the statistics that were applied to
    ``features`` (fitted on this data or borrowed from a training set).
    """

    features: np.ndarray
    labels: np.ndarray
    severity: np.ndarray
    feature_names: list[str]
    class_names: list[str]
    standardization: StandardizationRecord | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.severity = np.asarray(self.severity, dtype=np.int64)
        n, d = self.features.shape
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if self.labels.shape != (n,) or self.severity.shape != (n,):
            raise ValueError("labels and severity must have one entry per row")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length must match feature count")
        if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
            raise ValueError("labels out of range for class_names")
        if self.severity.min() < SEVERITY_MIN or self.severity.max() > SEVERITY_MAX:
            raise ValueError(f"severity tags must lie in [{SEVERITY_MIN}, {SEVERITY_MAX}]")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if "NM" in self.class_names:
            nm = self.class_names.index("NM")
            if np.any((self.severity == 0) != (self.labels == nm)):
                raise ValueError("severity 0 must coincide exactly with the NM class")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, row_index: np.ndarray) -> "LabeledDataset":
        return replace(
            self,
            features=self.features[row_index],
            labels=self.labels[row_index],
            severity=self.severity[row_index],
        )


# --- generators -------------------------------------------------------------

TOY_HEALTHY_RADIUS = 0.3
TOY_FAULT_INNER_RADIUS = 0.7
TOY_FAULT_OUTER_RADIUS = 1.0


def _uniform_annulus(rng: RngStream, n: int, r_inner: float, r_outer: float) -> np.ndarray:
    # Radius via inverse CDF of the area measure, so density is uniform in area.
    u = rng.random(n)
    r = np.sqrt(r_inner**2 + u * (r_outer**2 - r_inner**2))
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def gen_toy2d(n_per_region: int, seed: int) -> LabeledDataset:
    """Three concentric regions in 2-D: healthy disk, unobserved band, fault annulus.

    Healthy points (label 0, severity 0) fill the disk r < 0.3; severe fault
    points (label 1, severity 4) the annulus 0.7 < r < 1.0; intermediate
    points (label 1, severity 2) the band in between.  Intermediate rows are
    meant for test-only splits: they model fault states absent from training.
    """
    if n_per_region < 1:
        raise ValueError("n_per_region must be at least 1")
    rng = RngStream(seed)
    healthy = _uniform_annulus(rng.substream("healthy"), n_per_region, 0.0, TOY_HEALTHY_RADIUS)
    severe = _uniform_annulus(
        rng.substream("severe"), n_per_region, TOY_FAULT_INNER_RADIUS, TOY_FAULT_OUTER_RADIUS
    )
    intermediate = _uniform_annulus(
        rng.substream("intermediate"), n_per_region, TOY_HEALTHY_RADIUS, TOY_FAULT_INNER_RADIUS
    )
    features = np.vstack([healthy, severe, intermediate])
    labels = np.concatenate(
        [np.zeros(n_per_region, int), np.ones(2 * n_per_region, int)]
    )
    severity = np.concatenate(
        [np.zeros(n_per_region, int), np.full(n_per_region, 4), np.full(n_per_region, 2)]
    )
    return LabeledDataset(
        features=features,
        labels=labels,
        severity=severity,
        feature_names=["x1", "x2"],
        class_names=list(TOY_CLASS_NAMES),
    )


@dataclass(frozen=True)
class ChillerSynthConfig:
    """Geometry of the synthetic chiller-like dataset.

    Each fault displaces samples from the operating-condition base point
    along a fixed direction; severity scales the displacement by
    ``severity_profile``.  Faults listed in ``near_faults`` get the smaller
    full-severity magnitude, emulating fault types whose signatures stay
    close to normal operation.
    """

    samples_per_state: int = 120
    operating_conditions: int = 3
    direction_seed: int = 0
    near_faults: tuple[str, ...] = ("RL", "RO", "CF")
    near_magnitude: float = 2.4
    far_magnitude: float = 5.0
    noise_scale: float = 0.8
    severity_profile: tuple[float, float, float, float] = (0.25, 0.5, 0.75, 1.0)
    offset_scale: float = 1.0

    def __post_init__(self):
        if self.samples_per_state < 1:
            raise ValueError("samples_per_state must be at least 1")
        if not (1 <= self.operating_conditions <= 27):
            raise ValueError("operating_conditions must lie in [1, 27]")
        unknown = set(self.near_faults) - set(CHILLER_FAULT_NAMES)
        if unknown:
            raise ValueError(f"unknown fault names in near_faults: {sorted(unknown)}")
        if not (0.0 < self.near_magnitude < self.far_magnitude):
            raise ValueError("require 0 < near_magnitude < far_magnitude")
        if self.noise_scale <= 0.0:
            raise ValueError("noise_scale must be positive")
        profile = self.severity_profile
        if len(profile) != 4 or any(p <= 0 for p in profile):
            raise ValueError("severity_profile needs 4 positive entries")
        if any(profile[i] >= profile[i + 1] for i in range(3)):
            raise ValueError("severity_profile must be strictly increasing")

    def magnitude(self, fault: str) -> float:
        return self.near_magnitude if fault in self.near_faults else self.far_magnitude


def _fault_directions(config: ChillerSynthConfig) -> np.ndarray:
    """Unit displacement directions, pseudo-orthogonalized via QR."""
    d = len(CHILLER_FEATURE_NAMES)
    raw = RngStream(config.direction_seed).substream("directions").normal(
        size=(d, len(CHILLER_FAULT_NAMES))
    )
    q, r = np.linalg.qr(raw)
    # Fix column signs so the decomposition is unambiguous.
    return q * np.sign(np.diag(r))


def gen_chiller(config: ChillerSynthConfig, seed: int) -> LabeledDataset:
    """Synthetic multi-severity fault data with chiller channel names.

    For each operating condition c there is a base point b_c; fault f at
    severity s centers its Gaussian cluster at
    b_c + severity_profile[s-1] * magnitude(f) * direction_f.  NM samples
    cluster at b_c itself.
    """
    rng = RngStream(seed)
    d = len(CHILLER_FEATURE_NAMES)
    directions = _fault_directions(config)
    offsets = config.offset_scale * rng.substream("offsets").normal(
        size=(config.operating_conditions, d)
    )

    rows, labels, severities = [], [], []
    states = [("NM", 0)] + [
        (fault, sev) for fault in CHILLER_FAULT_NAMES for sev in (1, 2, 3, 4)
    ]
    for state_name, sev in states:
        label = CHILLER_CLASS_NAMES.index(state_name)
        if state_name == "NM":
            displacement = np.zeros(d)
        else:
            direction = directions[:, CHILLER_FAULT_NAMES.index(state_name)]
            displacement = config.severity_profile[sev - 1] * config.magnitude(state_name) * direction
        counts = _split_evenly(config.samples_per_state, config.operating_conditions)
        for c, count in enumerate(counts):
            if count == 0:
                continue
            noise = rng.substream("samples", label, sev, c).normal(size=(count, d))
            rows.append(offsets[c] + displacement + config.noise_scale * noise)
            labels.append(np.full(count, label))
            severities.append(np.full(count, sev))

    return LabeledDataset(
        features=np.vstack(rows),
        labels=np.concatenate(labels),
        severity=np.concatenate(severities),
        feature_names=list(CHILLER_FEATURE_NAMES),
        class_names=list(CHILLER_CLASS_NAMES),
    )


def _split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


# --- CSV / sidecar IO -------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_csv(data: LabeledDataset, path) -> None:
    """Write rows as feature columns + label (class name) + severity, with a
    metadata sidecar (<path>.meta.json) preserving class order and scaling."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + ["label", "severity"])
        for i in range(data.num_samples):
            row = [repr(x) for x in data.features[i]]
            row.append(data.class_names[data.labels[i]])
            row.append(str(int(data.severity[i])))
            writer.writerow(row)
    meta = {
        "class_names": list(data.class_names),
        "feature_names": list(data.feature_names),
        "standardization": data.standardization.to_dict() if data.standardization else None,
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_csv(path) -> LabeledDataset:
    """Parse a dataset CSV (schema: feature columns, ``label``, optional
    ``severity``), using the metadata sidecar when present.

    Without a sidecar, class names are the distinct label strings sorted,
    with NM forced to index 0 when present; rows without a severity column
    get severity 0 for NM and 4 otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("empty file") from None
        if "label" not in header:
            raise DatasetFormatError("missing required `label` column", line=1)
        label_col = header.index("label")
        has_severity = "severity" in header
        severity_col = header.index("severity") if has_severity else None
        feature_cols = [
            i for i, name in enumerate(header) if i != label_col and i != severity_col
        ]
        if not feature_cols:
            raise DatasetFormatError("no feature columns found", line=1)
        feature_names = [header[i] for i in feature_cols]

        rows, label_strs, severities = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} cells, found {len(row)}", line=line_no
                )
            values = []
            for i in feature_cols:
                try:
                    values.append(float(row[i]))
                except ValueError:
                    raise DatasetFormatError(
                        f"non-numeric value {row[i]!r} in column {header[i]!r}", line=line_no
                    ) from None
            rows.append(values)
            label_strs.append(row[label_col])
            if has_severity:
                try:
                    severities.append(int(row[severity_col]))
                except ValueError:
                    raise DatasetFormatError(
                        f"non-integer severity {row[severity_col]!r}", line=line_no
                    ) from None
    if not rows:
        raise DatasetFormatError("file contains a header but no data rows")

    sidecar = _sidecar_path(path)
    standardization = None
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        class_names = list(meta["class_names"])
        if list(meta["feature_names"]) != feature_names:
            raise DatasetFormatError("sidecar feature_names disagree with CSV header")
        if meta.get("standardization"):
            standardization = StandardizationRecord.from_dict(meta["standardization"])
        unknown = sorted(set(label_strs) - set(class_names))
        if unknown:
            raise DatasetFormatError(f"labels not listed in sidecar class_names: {unknown}")
    else:
        class_names = sorted(set(label_strs))
        if "NM" in class_names:
            class_names.remove("NM")
            class_names.insert(0, "NM")

    name_to_idx = {name: i for i, name in enumerate(class_names)}
    labels = np.array([name_to_idx[s] for s in label_strs], dtype=np.int64)
    if not has_severity:
        nm = name_to_idx.get("NM")
        severities = [0 if lab == nm else 4 for lab in labels]

    counts = np.bincount(labels, minlength=len(class_names))
    small = [class_names[i] for i, c in enumerate(counts) if 0 < c < 0.05 * len(labels)]
    if small:
        warnings.warn(f"classes below 5% of the data: {small}", stacklevel=2)

    return LabeledDataset(
        features=np.asarray(rows, dtype=np.float64),
        labels=labels,
        severity=np.asarray(severities, dtype=np.int64),
        feature_names=feature_names,
        class_names=class_names,
        standardization=standardization,
    )


# --- standardization and splits ----------------------------------------------


def standardize(data: LabeledDataset) -> LabeledDataset:
    """Fit per-feature (mean, std) on ``data`` and apply it, keeping the record.

    Constant features are left unscaled (std recorded as 1).
    """
    mean = data.features.mean(axis=0)
    std = data.features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    record = StandardizationRecord(mean=mean, std=std)
    return replace(data, features=(data.features - mean) / std, standardization=record)


def apply_standardization(data: LabeledDataset, record: StandardizationRecord) -> LabeledDataset:
    """Scale ``data`` with statistics fitted elsewhere (e.g. on the training set)."""
    if record.mean.shape != (data.num_features,):
        raise ValueError("standardization record does not match feature count")
    return replace(
        data, features=(data.features - record.mean) / record.std, standardization=record
    )


def split_by_severity(
    data: LabeledDataset, train_severities: set[int], test_severities: set[int]
) -> tuple[LabeledDataset, LabeledDataset]:
    """Partition rows by severity tag; the two sets must be disjoint.

    The canonical split trains on fault-free plus severest data ({0, 4}) and
    holds out every intermediate severity ({1, 2, 3}).
    """
    train_severities, test_severities = set(train_severities), set(test_severities)
    if train_severities & test_severities:
        raise ValueError("train and test severity sets must be disjoint")
    train_rows = np.isin(data.severity, sorted(train_severities))
    test_rows = np.isin(data.severity, sorted(test_severities))
    if not train_rows.any():
        raise ValueError("train partition is empty")
    if not test_rows.any():
        raise ValueError("test partition is empty")
    return data.subset(np.flatnonzero(train_rows)), data.subset(np.flatnonzero(test_rows))
