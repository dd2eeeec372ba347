"""dropdiag: dropout-based predictive uncertainty for incipient-fault diagnosis.

Trains small feedforward classifiers with dropout, estimates per-class
predictive mean and variance by sampling stochastic forward passes at test
time, and turns those estimates into candidate-fault diagnosis sets.
"""

__version__ = "0.1.0"

from dropdiag.rng import RngStream
from dropdiag.network import (
    DropoutMaskSet,
    NetworkConfig,
    NetworkParams,
    backward,
    forward,
    init_params,
    load_model,
    sample_masks,
    save_model,
)
from dropdiag.trainer import TrainConfig, TrainingDivergedError, TrainTrace, evaluate, train
from dropdiag.mc import PredictiveSummary, mc_predict, mc_predict_batch, mean_class_summary
from dropdiag.diagnosis import DiagnosisReport, diagnose_mc, diagnose_softmax, diagnosis_table
from dropdiag.data import (
    ChillerSynthConfig,
    DatasetFormatError,
    LabeledDataset,
    StandardizationRecord,
    apply_standardization,
    gen_chiller,
    gen_toy2d,
    load_csv,
    save_csv,
    split_by_severity,
    standardize,
)
from dropdiag.analysis import (
    FieldScan,
    LdaProjection,
    SweepResult,
    field_scan_2d,
    lda_fit,
    lda_transform,
    select_dropout_rate,
    severity_grid,
    sweep_dropout,
)

__all__ = [
    "RngStream",
    "NetworkConfig",
    "NetworkParams",
    "DropoutMaskSet",
    "init_params",
    "sample_masks",
    "forward",
    "backward",
    "save_model",
    "load_model",
    "TrainConfig",
    "TrainTrace",
    "TrainingDivergedError",
    "train",
    "evaluate",
    "PredictiveSummary",
    "mc_predict",
    "mc_predict_batch",
    "mean_class_summary",
    "DiagnosisReport",
    "diagnose_softmax",
    "diagnose_mc",
    "diagnosis_table",
    "LabeledDataset",
    "StandardizationRecord",
    "ChillerSynthConfig",
    "DatasetFormatError",
    "gen_toy2d",
    "gen_chiller",
    "load_csv",
    "save_csv",
    "standardize",
    "apply_standardization",
    "split_by_severity",
    "LdaProjection",
    "SweepResult",
    "FieldScan",
    "lda_fit",
    "lda_transform",
    "sweep_dropout",
    "select_dropout_rate",
    "field_scan_2d",
    "severity_grid",
]
