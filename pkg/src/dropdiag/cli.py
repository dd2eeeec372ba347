"""Command-line front end.

Every output-producing subcommand resolves its parameters (defaults, then
config file, then flags), runs, and writes a ``manifest.json`` into the run
directory recording the resolved parameters and produced files.  ``replay``
re-executes a manifest; identical manifests reproduce byte-identical output
files.

Exit codes: 0 ok, 1 unexpected failure, 2 config/usage error, 3 missing
input file, 4 malformed data file, 5 training divergence.  Failures print a
single machine-parsable ``error[<kind>]: message`` line to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dropdiag import __version__
from dropdiag.analysis import (
    condition_groups,
    field_scan_2d,
    lda_fit,
    lda_transform,
    load_heatmap_csv,
    save_heatmap_csv,
    save_sweep_outputs,
    select_dropout_rate,
    severity_grid,
    sweep_dropout,
)
from dropdiag.data import (
    ChillerSynthConfig,
    DatasetFormatError,
    StandardizationRecord,
    apply_standardization,
    gen_chiller,
    gen_toy2d,
    load_csv,
    save_csv,
    split_by_severity,
    standardize,
)
from dropdiag.diagnosis import (
    diagnose_mc,
    diagnose_softmax,
    majority_vote_set,
    save_diagnosis_table,
)
from dropdiag.mc import mc_predict_batch, mean_class_summary
from dropdiag.network import NetworkConfig, load_model, save_model
from dropdiag.rng import RngStream
from dropdiag.trainer import TrainConfig, TrainingDivergedError, evaluate, train

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_DIVERGED = 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _config_error(message: str) -> CliError:
    return CliError("config", message, EXIT_CONFIG)


# --- parameter schema ----------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int | float | str | bool | ints | floats
    default: object = None
    help: str = ""
    required: bool = False


def _coerce(param: Param, value):
    if value is None:
        return None
    try:
        if param.kind == "int":
            return int(value)
        if param.kind == "float":
            return float(value)
        if param.kind == "str":
            return str(value)
        if param.kind == "bool":
            if isinstance(value, bool):
                return value
            raise ValueError("expected a boolean")
        if param.kind == "ints":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v != ""]
            return [int(v) for v in value]
        if param.kind == "floats":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v != ""]
            return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise _config_error(f"parameter --{param.name}: {exc}") from None
    raise AssertionError(f"unknown param kind {param.kind}")


def _resolve(schema, args, config_section):
    params = {}
    for p in schema:
        value = getattr(args, p.name.replace("-", "_"), None)
        if value is None:
            value = config_section.get(p.name, p.default)
        value = _coerce(p, value)
        if value is None and p.required:
            raise _config_error(f"missing required parameter --{p.name}")
        params[p.name] = value
    return params


def _severity_filter(data, spec: str):
    if spec is None or spec.strip() == "" or spec.strip().lower() == "all":
        return data
    try:
        wanted = {int(s) for s in spec.split(",")}
    except ValueError:
        raise _config_error(f"bad severity list: {spec!r}") from None
    rows = np.flatnonzero(np.isin(data.severity, sorted(wanted)))
    if rows.size == 0:
        raise _config_error(f"no rows with severities {sorted(wanted)}")
    return data.subset(rows)


def _load_dataset(path: str):
    return load_csv(path)


def _load_model_file(path: str):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"model file not found: {p}")
    params, std_doc = load_model(p)
    record = StandardizationRecord.from_dict(std_doc) if std_doc else None
    return params, record


def _apply_model_scaling(data, record):
    return apply_standardization(data, record) if record is not None else data


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --- subcommand runners ---------------------------------------------------------

SCHEMAS: dict[str, list[Param]] = {}
RUNNERS = {}


def subcommand(name: str, schema: list[Param]):
    def register(fn):
        SCHEMAS[name] = schema
        RUNNERS[name] = fn
        return fn

    return register


_FIGURES = Param("figures", "bool", True, "render figure files alongside the data")


@subcommand(
    "gen-toy2d",
    [
        Param("n", "int", 1000, "samples per region (healthy, severe, intermediate)"),
        Param("seed", "int", 0, "generator seed"),
        _FIGURES,
    ],
)
def run_gen_toy2d(params, outdir: Path):
    data = gen_toy2d(params["n"], params["seed"])
    save_csv(data, outdir / "data.csv")
    outputs = ["data.csv", "data.csv.meta.json"]
    if params["figures"]:
        from dropdiag import plots

        plots.save_scatter2d_png(outdir / "dataset.png", data, title="toy regions")
        outputs.append("dataset.png")
    print(f"wrote {data.num_samples} rows ({len(data.class_names)} classes)")
    return outputs


@subcommand(
    "gen-chiller",
    [
        Param("samples-per-state", "int", 120, "rows per (condition, severity) pair"),
        Param("operating-conditions", "int", 3, "number of base operating points"),
        Param("seed", "int", 0, "sampling seed"),
        Param("direction-seed", "int", 0, "seed fixing the fault displacement directions"),
        Param("near-magnitude", "float", 2.4, "full-severity displacement of near faults"),
        Param("far-magnitude", "float", 5.0, "full-severity displacement of far faults"),
        Param("noise-scale", "float", 0.8, "isotropic cluster noise"),
        Param("offset-scale", "float", 1.0, "spread of operating-condition base points"),
    ],
)
def run_gen_chiller(params, outdir: Path):
    config = ChillerSynthConfig(
        samples_per_state=params["samples-per-state"],
        operating_conditions=params["operating-conditions"],
        direction_seed=params["direction-seed"],
        near_magnitude=params["near-magnitude"],
        far_magnitude=params["far-magnitude"],
        noise_scale=params["noise-scale"],
        offset_scale=params["offset-scale"],
    )
    data = gen_chiller(config, params["seed"])
    save_csv(data, outdir / "data.csv")
    print(f"wrote {data.num_samples} rows ({len(data.class_names)} classes)")
    return ["data.csv", "data.csv.meta.json"]


@subcommand(
    "train",
    [
        Param("data", "str", None, "training dataset CSV", required=True),
        Param("dropout", "float", 0.0, "dropout rate p in [0, 1)"),
        Param("epochs", "int", 30, "training epochs"),
        Param("batch-size", "int", 64, "mini-batch size"),
        Param("learning-rate", "float", 1e-3, "optimizer step size"),
        Param("hidden", "ints", [20, 20, 20, 20], "hidden layer widths"),
        Param("init-seed", "int", 0, "weight initialization seed"),
        Param("shuffle-seed", "int", 0, "shuffling / dropout seed"),
        Param("train-severities", "str", "0,4", "severity tags used for training"),
        _FIGURES,
    ],
)
def run_train(params, outdir: Path):
    data = _load_dataset(params["data"])
    data = _severity_filter(data, params["train-severities"])
    data = standardize(data)
    net_config = NetworkConfig(
        input_dim=data.num_features,
        hidden_layers=tuple(params["hidden"]),
        num_classes=data.num_classes,
        dropout_rate=params["dropout"],
        init_seed=params["init-seed"],
    )
    train_config = TrainConfig(
        epochs=params["epochs"],
        batch_size=params["batch-size"],
        learning_rate=params["learning-rate"],
        shuffle_seed=params["shuffle-seed"],
    )
    model, trace = train(net_config, train_config, data)
    save_model(outdir / "model.json", model, data.standardization.to_dict())
    trace.save_csv(outdir / "trace.csv")
    outputs = ["model.json", "trace.csv"]
    if params["figures"]:
        from dropdiag import plots

        plots.save_trace_png(outdir / "trace.png", trace)
        outputs.append("trace.png")
    print(
        f"trained p={net_config.dropout_rate:g} for {train_config.epochs} epochs: "
        f"final loss {trace.losses[-1]:.4f}, accuracy {trace.accuracies[-1]:.3f}"
    )
    return outputs


@subcommand(
    "eval",
    [
        Param("model", "str", None, "model JSON file", required=True),
        Param("data", "str", None, "dataset CSV", required=True),
        Param("severities", "str", "all", "severity tags to evaluate (e.g. 0,4)"),
        _FIGURES,
    ],
)
def run_eval(params, outdir: Path):
    model, record = _load_model_file(params["model"])
    data = _severity_filter(_load_dataset(params["data"]), params["severities"])
    data = _apply_model_scaling(data, record)
    result = evaluate(model, data)
    _write_json(
        outdir / "metrics.json",
        {"accuracy": result.accuracy, "mean_loss": result.mean_loss, "n": data.num_samples},
    )
    save_heatmap_csv(
        outdir / "confusion.csv",
        result.confusion.astype(float),
        data.class_names,
        data.class_names,
        corner="true\\pred",
    )
    outputs = ["metrics.json", "confusion.csv"]
    if params["figures"]:
        from dropdiag import plots

        plots.save_heatmap_png(
            outdir / "confusion.png", result.confusion, data.class_names,
            data.class_names, title="confusion (rows: true)",
        )
        outputs.append("confusion.png")
    print(f"accuracy {result.accuracy:.4f}, mean loss {result.mean_loss:.4f}")
    return outputs


@subcommand(
    "mc-infer",
    [
        Param("model", "str", None, "model JSON file", required=True),
        Param("data", "str", None, "dataset CSV", required=True),
        Param("T", "int", 100, "Monte-Carlo samples per row"),
        Param("seed", "int", 0, "sampling seed"),
        Param("severities", "str", "all", "severity tags to include"),
        _FIGURES,
    ],
)
def run_mc_infer(params, outdir: Path):
    model, record = _load_model_file(params["model"])
    data = _severity_filter(_load_dataset(params["data"]), params["severities"])
    data = _apply_model_scaling(data, record)
    summaries = mc_predict_batch(
        model, data.features, params["T"], RngStream(params["seed"])
    )
    with open(outdir / "summaries.jsonl", "w", encoding="utf-8") as fh:
        for i, summary in enumerate(summaries):
            fh.write(json.dumps({"row": i, **summary.to_dict()}, sort_keys=True))
            fh.write("\n")
    groups = condition_groups(data)
    rows = mean_class_summary(
        {name: [summaries[i] for i in idx] for name, idx in groups.items()}
    )
    save_heatmap_csv(
        outdir / "condition_means.csv", rows.mean_rows, rows.conditions, data.class_names
    )
    save_heatmap_csv(
        outdir / "condition_variances.csv",
        rows.variance_rows,
        rows.conditions,
        data.class_names,
    )
    outputs = ["summaries.jsonl", "condition_means.csv", "condition_variances.csv"]
    if params["figures"]:
        from dropdiag import plots

        plots.save_heatmap_png(
            outdir / "condition_means.png", rows.mean_rows, rows.conditions,
            data.class_names, title="predictive mean", cmap="Oranges", vmin=0, vmax=1,
        )
        plots.save_heatmap_png(
            outdir / "condition_variances.png", rows.variance_rows, rows.conditions,
            data.class_names, title="predictive variance", cmap="Greens", vmin=0,
        )
        outputs += ["condition_means.png", "condition_variances.png"]
    print(f"summarized {data.num_samples} rows over {len(rows.conditions)} conditions")
    return outputs


@subcommand(
    "diagnose",
    [
        Param("model", "str", None, "model JSON file", required=True),
        Param("data", "str", None, "dataset CSV", required=True),
        Param("T", "int", 100, "Monte-Carlo samples per row (mc mode)"),
        Param("seed", "int", 0, "sampling seed"),
        Param("mode", "str", "mc", "diagnosis mode: mc | softmax"),
        Param("prob-threshold", "float", 0.2, "probability rule threshold"),
        Param("std-ratio-threshold", "float", 0.1, "uncertainty rule threshold"),
        Param("severities", "str", "all", "severity tags to include"),
    ],
)
def run_diagnose(params, outdir: Path):
    if params["mode"] not in ("mc", "softmax"):
        raise _config_error(f"mode must be 'mc' or 'softmax', got {params['mode']!r}")
    model, record = _load_model_file(params["model"])
    data = _severity_filter(_load_dataset(params["data"]), params["severities"])
    data = _apply_model_scaling(data, record)

    if params["mode"] == "mc":
        summaries = mc_predict_batch(
            model, data.features, params["T"], RngStream(params["seed"])
        )
        reports = [
            diagnose_mc(
                s,
                params["prob-threshold"],
                params["std-ratio-threshold"],
                true_label=int(data.labels[i]),
            )
            for i, s in enumerate(summaries)
        ]
    else:
        from dropdiag.network import forward_batch

        probs, _, _ = forward_batch(model, data.features)
        reports = [
            diagnose_softmax(probs[i], params["prob-threshold"], true_label=int(data.labels[i]))
            for i in range(data.num_samples)
        ]

    with open(outdir / "reports.jsonl", "w", encoding="utf-8") as fh:
        for i, report in enumerate(reports):
            fh.write(json.dumps({"row": i, **report.to_dict()}, sort_keys=True))
            fh.write("\n")

    import csv as _csv

    groups = condition_groups(data)
    with open(outdir / "condition_sets.csv", "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["condition", "true_label", "diagnosis_set", "hit"])
        hit_count = 0
        for name, idx in groups.items():
            true_label = int(data.labels[idx[0]])
            voted = majority_vote_set([reports[i] for i in idx])
            hit = true_label in voted
            hit_count += int(hit)
            writer.writerow(
                [name, data.class_names[true_label],
                 "|".join(data.class_names[l] for l in voted), int(hit)]
            )
    print(f"diagnosed {len(groups)} conditions; hits: {hit_count}/{len(groups)}")
    return ["reports.jsonl", "condition_sets.csv"]


@subcommand(
    "sweep",
    [
        Param("data", "str", None, "multi-severity dataset CSV", required=True),
        Param("eval-data", "str", None, "optional separate dataset for evaluation rows"),
        Param("rates", "floats", [0.0, 0.03, 0.1, 0.2, 0.5], "dropout rates to sweep"),
        Param("epochs", "int", 30, "training epochs per rate"),
        Param("batch-size", "int", 64, "mini-batch size"),
        Param("hidden", "ints", [20, 20, 20, 20], "hidden layer widths"),
        Param("T", "int", 100, "Monte-Carlo samples per row"),
        Param("seed", "int", 0, "seed for init, shuffling and evaluation"),
        _FIGURES,
    ],
)
def run_sweep(params, outdir: Path):
    data = _load_dataset(params["data"])
    train_set, _ = split_by_severity(data, {0, 4}, {1, 2, 3})
    train_set = standardize(train_set)
    eval_source = _load_dataset(params["eval-data"]) if params["eval-data"] else data
    eval_rows = np.flatnonzero(np.isin(eval_source.severity, [0, 4]))
    eval_set = apply_standardization(
        eval_source.subset(eval_rows), train_set.standardization
    )

    net_config = NetworkConfig(
        input_dim=train_set.num_features,
        hidden_layers=tuple(params["hidden"]),
        num_classes=train_set.num_classes,
        init_seed=params["seed"],
    )
    train_config = TrainConfig(
        epochs=params["epochs"],
        batch_size=params["batch-size"],
        shuffle_seed=params["seed"],
    )
    sweep = sweep_dropout(
        params["rates"], net_config, train_config, train_set, eval_set,
        T=params["T"], eval_seed=params["seed"],
    )
    outputs = save_sweep_outputs(sweep, outdir)
    report = select_dropout_rate(sweep)
    _write_json(outdir / "selection.json", report.to_dict())
    outputs.append("selection.json")
    if params["figures"]:
        from dropdiag import plots

        for entry in sweep.entries:
            if entry.error is not None:
                continue
            tag = f"p{entry.rate:g}".replace(".", "_")
            plots.save_heatmap_png(
                outdir / f"sweep_mean_{tag}.png", entry.mean_rows, entry.conditions,
                sweep.class_names, title=f"predictive mean, p={entry.rate:g}",
                cmap="Oranges", vmin=0, vmax=1,
            )
            plots.save_heatmap_png(
                outdir / f"sweep_variance_{tag}.png", entry.variance_rows,
                entry.conditions, sweep.class_names,
                title=f"predictive variance, p={entry.rate:g}", cmap="Greens", vmin=0,
            )
            outputs += [f"sweep_mean_{tag}.png", f"sweep_variance_{tag}.png"]
        plots.save_selection_png(outdir / "selection.png", report)
        outputs.append("selection.png")
    print(f"swept {len(sweep.entries)} rates; selected p={report.chosen_rate:g}")
    return outputs


@subcommand(
    "scan2d",
    [
        Param("model", "str", None, "model JSON file (2 input features)", required=True),
        Param("bounds", "floats", [-1.2, 1.2, -1.2, 1.2], "grid bounds x_lo,x_hi,y_lo,y_hi"),
        Param("resolution", "int", 100, "grid cells per axis"),
        Param("T", "int", 100, "Monte-Carlo samples per cell"),
        Param("seed", "int", 0, "sampling seed"),
        _FIGURES,
    ],
)
def run_scan2d(params, outdir: Path):
    model, record = _load_model_file(params["model"])
    if len(params["bounds"]) != 4:
        raise _config_error("bounds needs exactly 4 numbers: x_lo,x_hi,y_lo,y_hi")
    x_lo, x_hi, y_lo, y_hi = params["bounds"]

    scan_params = model
    if record is not None:
        # The grid is specified in raw data coordinates; fold the model's
        # standardization into an equivalent first-layer transform instead of
        # rescaling every grid point.
        scan_params = _absorb_standardization(model, record)
    scan = field_scan_2d(
        scan_params,
        bounds=((x_lo, x_hi), (y_lo, y_hi)),
        resolution=params["resolution"],
        T=params["T"],
        rng=RngStream(params["seed"]),
    )
    scan.save_grid_csv(outdir / "field_grid.csv")
    y_labels = [repr(float(v)) for v in scan.ys]
    x_labels = [repr(float(v)) for v in scan.xs]
    save_heatmap_csv(
        outdir / "boundary_proximity.csv", scan.boundary_proximity, y_labels, x_labels,
        corner="y\\x",
    )
    save_heatmap_csv(
        outdir / "variance_field.csv", scan.variance, y_labels, x_labels, corner="y\\x"
    )
    outputs = ["field_grid.csv", "boundary_proximity.csv", "variance_field.csv"]
    if params["figures"]:
        from dropdiag import plots

        plots.save_field_png(outdir / "fields.png", scan)
        outputs.append("fields.png")
    print(f"scanned {params['resolution']}x{params['resolution']} grid at T={params['T']}")
    return outputs


def _absorb_standardization(model, record):
    """Return params equal to ``model`` pre-composed with (x - mean) / std."""
    from dropdiag.network import NetworkParams

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    scaled = weights[0] / record.std
    biases[0] = biases[0] - scaled @ record.mean
    weights[0] = scaled
    return NetworkParams(config=model.config, weights=weights, biases=biases)


@subcommand(
    "severity-grid",
    [
        Param("model0", "str", None, "non-dropout model JSON", required=True),
        Param("model-p", "str", None, "dropout model JSON", required=True),
        Param("data", "str", None, "multi-severity dataset CSV", required=True),
        Param("T", "int", 100, "Monte-Carlo samples per row"),
        Param("seed", "int", 0, "sampling seed"),
        Param("prob-threshold", "float", 0.2, "probability rule threshold"),
        Param("std-ratio-threshold", "float", 0.1, "uncertainty rule threshold"),
        _FIGURES,
    ],
)
def run_severity_grid(params, outdir: Path):
    model0, record0 = _load_model_file(params["model0"])
    model_p, record_p = _load_model_file(params["model-p"])
    record = record_p or record0
    data = _load_dataset(params["data"])
    datasets = {}
    for sev in (1, 2, 3, 4):
        rows = np.flatnonzero(data.severity == sev)
        if rows.size:
            datasets[sev] = _apply_model_scaling(data.subset(rows), record)
    if not datasets:
        raise _config_error("dataset contains no rows with severity 1..4")

    grid = severity_grid(
        model0, model_p, datasets, T=params["T"], rng=RngStream(params["seed"]),
        prob_threshold=params["prob-threshold"],
        std_ratio_threshold=params["std-ratio-threshold"],
    )
    outputs = []
    for panel in grid.panels:
        tag = f"sl{panel.severity}"
        for name, rows in (
            (f"baseline_{tag}.csv", panel.baseline_rows),
            (f"mc_mean_{tag}.csv", panel.mc_mean_rows),
            (f"mc_variance_{tag}.csv", panel.mc_variance_rows),
        ):
            save_heatmap_csv(outdir / name, rows, panel.conditions, grid.class_names)
            outputs.append(name)
    for sev, rows in grid.diagnosis_rows.items():
        name = f"diagnosis_sl{sev}.csv"
        save_diagnosis_table(rows, outdir / name, class_names=grid.class_names)
        outputs.append(name)
    if params["figures"]:
        from dropdiag import plots

        for panel in grid.panels:
            tag = f"sl{panel.severity}"
            plots.save_heatmap_png(
                outdir / f"baseline_{tag}.png", panel.baseline_rows, panel.conditions,
                grid.class_names, title=f"non-dropout softmax, SL{panel.severity}",
                cmap="Oranges", vmin=0, vmax=1,
            )
            plots.save_heatmap_png(
                outdir / f"mc_mean_{tag}.png", panel.mc_mean_rows, panel.conditions,
                grid.class_names, title=f"predictive mean, SL{panel.severity}",
                cmap="Oranges", vmin=0, vmax=1,
            )
            plots.save_heatmap_png(
                outdir / f"mc_variance_{tag}.png", panel.mc_variance_rows,
                panel.conditions, grid.class_names,
                title=f"predictive variance, SL{panel.severity}", cmap="Greens", vmin=0,
            )
            outputs += [f"baseline_{tag}.png", f"mc_mean_{tag}.png", f"mc_variance_{tag}.png"]
    hit_line = ""
    for sev, rows in sorted(grid.diagnosis_rows.items()):
        mc_hits = sum(r.mc_hit for r in rows)
        base_hits = sum(r.baseline_hit for r in rows)
        hit_line += f" SL{sev}: mc {mc_hits}/{len(rows)} vs baseline {base_hits}/{len(rows)};"
    print(f"severity grid over {len(grid.panels)} levels;{hit_line}")
    return outputs


@subcommand(
    "lda",
    [
        Param("data", "str", None, "dataset CSV", required=True),
        Param("k", "int", 2, "projection dimensions"),
        Param("severities", "str", "all", "severity tags to include"),
        _FIGURES,
    ],
)
def run_lda(params, outdir: Path):
    data = _severity_filter(_load_dataset(params["data"]), params["severities"])
    proj = lda_fit(data, k=params["k"])
    projected = lda_transform(proj, data.features)
    _write_json(
        outdir / "projection.json",
        {
            "matrix": proj.matrix.tolist(),
            "grand_mean": proj.grand_mean.tolist(),
            "eigenvalues": proj.eigenvalues.tolist(),
            "class_means_projected": proj.class_means_projected.tolist(),
            "fingerprint": proj.fingerprint,
        },
    )
    import csv as _csv

    with open(outdir / "projected.csv", "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            [f"ld{i + 1}" for i in range(proj.k)] + ["label", "severity"]
        )
        for i in range(data.num_samples):
            writer.writerow(
                [repr(float(v)) for v in projected[i]]
                + [data.class_names[data.labels[i]], str(int(data.severity[i]))]
            )
    outputs = ["projection.json", "projected.csv"]
    if params["figures"] and proj.k >= 2:
        from dropdiag import plots

        plots.save_projection_png(outdir / "lda.png", projected, data, title="discriminant projection")
        outputs.append("lda.png")
    print(f"projected {data.num_samples} rows to {proj.k} dimensions")
    return outputs


@subcommand(
    "render",
    [
        Param("input", "str", None, "heatmap/field CSV to render", required=True),
        Param("name", "str", "render.svg", "output SVG filename"),
    ],
)
def run_render(params, outdir: Path):
    src = Path(params["input"])
    if not src.exists():
        raise FileNotFoundError(f"input CSV not found: {src}")
    try:
        row_labels, col_labels, matrix = load_heatmap_csv(src)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None
    svg = render_heatmap_svg(matrix, row_labels, col_labels)
    out = outdir / params["name"]
    out.write_bytes(svg.encode("utf-8"))
    print(f"rendered {matrix.shape[0]}x{matrix.shape[1]} cells to {out.name}")
    return [params["name"]]


# --- minimal SVG heatmap ---------------------------------------------------------

# Five-stop color ramp (dark blue -> green -> yellow), linearly interpolated.
_RAMP = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))


def _ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    scaled = t * (len(_RAMP) - 1)
    i = min(int(scaled), len(_RAMP) - 2)
    frac = scaled - i
    rgb = tuple(
        int(round(a + frac * (b - a))) for a, b in zip(_RAMP[i], _RAMP[i + 1])
    )
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_heatmap_svg(
    matrix: np.ndarray, row_labels: list[str], col_labels: list[str], cell: int = 22
) -> str:
    """Standalone SVG with one colored rect per cell; deterministic bytes.

    Values are mapped linearly from [min, max] onto the color ramp; a
    constant matrix renders as a uniform grid.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = matrix.shape
    lo, hi = float(matrix.min()), float(matrix.max())
    span = hi - lo
    left = 8 + 7 * max((len(s) for s in row_labels), default=1)
    top = 8 + 7 * max((len(s) for s in col_labels), default=1)
    width = left + cell * n_cols + 8
    height = top + cell * n_rows + 8

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for j, label in enumerate(col_labels):
        x = left + j * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{top - 6}" font-size="9" font-family="monospace" '
            f'text-anchor="start" transform="rotate(-60 {x} {top - 6})">{_xml(label)}</text>'
        )
    for i, label in enumerate(row_labels):
        y = top + i * cell + cell // 2 + 3
        parts.append(
            f'<text x="{left - 6}" y="{y}" font-size="9" font-family="monospace" '
            f'text-anchor="end">{_xml(label)}</text>'
        )
    for i in range(n_rows):
        for j in range(n_cols):
            t = 0.0 if span == 0.0 else (matrix[i, j] - lo) / span
            parts.append(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{_ramp_color(t)}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


# --- dispatch ---------------------------------------------------------------------


def _write_manifest(outdir: Path, command: str, params: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "dropdiag",
        "version": __version__,
        "command": command,
        "params": params,
        "outputs": sorted(outputs),
    }
    _write_json(outdir / "manifest.json", manifest)


def _execute(command: str, params: dict, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[command](params, outdir)
    _write_manifest(outdir, command, params, outputs)
    return EXIT_OK


def _resolve_and_execute(command: str, args, config: dict) -> int:
    params = _resolve(SCHEMAS[command], args, config.get(command, {}))
    # Store input paths absolutely so a manifest can be replayed from anywhere.
    for key in ("data", "eval-data", "model", "model0", "model-p", "input"):
        if params.get(key):
            params[key] = str(Path(params[key]).resolve())
    return _execute(command, params, Path(args.out))


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise _config_error(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise _config_error("config file must map subcommand names to parameter tables")
    return doc


def _add_subparser(subparsers, command: str, help_text: str):
    sub = subparsers.add_parser(command, help=help_text)
    for p in SCHEMAS[command]:
        flag = "--" + p.name
        dest = p.name.replace("-", "_")
        if p.kind == "bool":
            sub.add_argument(
                flag, dest=dest, action=argparse.BooleanOptionalAction, default=None,
                help=p.help,
            )
        else:
            sub.add_argument(flag, dest=dest, default=None, help=p.help)
    sub.add_argument("--out", required=True, help="run output directory")
    sub.set_defaults(command=command)
    return sub


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dropdiag",
        description="dropout-uncertainty workflows: generate, train, infer, diagnose",
    )
    parser.add_argument("--config", default=None, help="JSON config file with per-subcommand defaults")
    parser.add_argument("--version", action="version", version=f"dropdiag {__version__}")
    subparsers = parser.add_subparsers(dest="top", required=True)

    gen = subparsers.add_parser("gen", help="generate a synthetic dataset")
    gen_sub = gen.add_subparsers(dest="generator", required=True)
    for name, help_text in (
        ("gen-toy2d", "2-D disk/annulus toy data"),
        ("gen-chiller", "chiller-like multi-severity data"),
    ):
        sub = gen_sub.add_parser(name.removeprefix("gen-"), help=help_text)
        for p in SCHEMAS[name]:
            flag = "--" + p.name
            dest = p.name.replace("-", "_")
            if p.kind == "bool":
                sub.add_argument(
                    flag, dest=dest, action=argparse.BooleanOptionalAction,
                    default=None, help=p.help,
                )
            else:
                sub.add_argument(flag, dest=dest, default=None, help=p.help)
        sub.add_argument("--out", required=True, help="run output directory")
        sub.set_defaults(command=name)

    for name, help_text in (
        ("train", "train a classifier"),
        ("eval", "deterministic evaluation of a model"),
        ("mc-infer", "Monte-Carlo dropout inference"),
        ("diagnose", "emit diagnosis sets"),
        ("sweep", "dropout-rate sweep with rate selection"),
        ("scan2d", "dense 2-D field scan of a 2-feature model"),
        ("severity-grid", "compare dropout vs non-dropout across severities"),
        ("lda", "discriminant projection of a dataset"),
        ("render", "render a heatmap/field CSV to SVG"),
    ):
        _add_subparser(subparsers, name, help_text)

    replay = subparsers.add_parser("replay", help="re-execute a run manifest")
    replay.add_argument("manifest", help="path to a manifest.json")
    replay.add_argument("--out", required=True, help="run output directory")
    replay.set_defaults(command="replay")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
        if args.command == "replay":
            manifest_path = Path(args.manifest)
            if not manifest_path.exists():
                raise FileNotFoundError(f"manifest not found: {manifest_path}")
            with open(manifest_path, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
            command = manifest.get("command")
            if command not in RUNNERS:
                raise _config_error(f"manifest names unknown command {command!r}")
            return _execute(command, manifest["params"], Path(args.out))
        return _resolve_and_execute(args.command, args, config)
    except CliError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error[missing]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingDivergedError as exc:
        print(f"error[diverged]: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DatasetFormatError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        print(f"error[unexpected]: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
