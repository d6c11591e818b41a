"""Experiment orchestration: end-to-end pipelines, configs and reports.

Subcommands:
    occ-eval   train each configured detector on the normal rows of every
               split, calibrate the three-sigma threshold, classify the test
               fold and evaluate all consensus levels
    omission   the attack-omission grid (plain and noise arms) side by side
               with the one-class pipeline on identical folds
    demo       the two-feature synthetic walkthrough, emitting point-level
               predictions for external plotting
    report     recompute aggregates from the persisted per-run CSV and check
               them against the stored report

All outputs are deterministic given (config, seed); report.json carries the
only timestamp. Exit codes: 0 ok, 2 config error, 3 data error, 4 internal
consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate_threshold, classify
from .dataset import (
    Dataset,
    Schema,
    SplitPlan,
    apply_preprocessor,
    extract_labels,
    filter_normal,
    fit_preprocessor,
    generate_gaussian_demo,
    load_csv,
    load_schema,
    omit_attack_types,
    stratified_indices,
    stratified_split,
)
from .detectors import DetectorConfig, fit as fit_detector, score as score_detector
from .ensemble import PredictionMatrix, consensus
from .metrics import class_metrics, confusion, macro_f1
from .seeding import derive_seed
from .supervised import (
    ForestConfig,
    OmissionPlan,
    augment_with_noise,
    rf_fit,
    rf_predict,
    run_omission_experiment,
)

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "ExperimentConfig",
    "Report",
    "load_config",
    "cmd_occ_eval",
    "cmd_omission",
    "cmd_demo",
    "cmd_report",
    "main",
]

OCC_CSV_COLUMNS = (
    "run",
    "model",
    "kind",
    "n_models",
    "accuracy",
    "attack_precision",
    "attack_recall",
    "attack_f1",
    "normal_f1",
    "macro_f1",
)
OCC_METRIC_COLUMNS = OCC_CSV_COLUMNS[4:]

OMISSION_CSV_COLUMNS = (
    "k",
    "combination_id",
    "combination_tags",
    "run",
    "arm",
    "accuracy",
    "attack_precision",
    "attack_recall",
    "attack_f1",
    "macro_f1",
)
OMISSION_METRIC_COLUMNS = OMISSION_CSV_COLUMNS[5:]

_ARM_ORDER = {"plain": 0, "noise": 1, "occ": 2}

DEFAULT_DETECTORS = {
    "isolation-forest": {"variant": "isolation-forest"},
    "stochastic-forest": {"variant": "stochastic-forest"},
    "lof": {"variant": "lof"},
    "linear-recon": {"variant": "linear-recon"},
}

_DETECTOR_KEYS = {"variant", "n_trees", "subsample", "k_neighbors", "n_components"}
_RF_KEYS = {"n_trees", "max_depth", "min_leaf", "features_per_split"}


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


class ConsistencyError(Exception):
    """Stored aggregates disagree with the persisted per-run rows."""


@dataclass(frozen=True)
class Report:
    """Aggregated result blocks plus provenance."""

    experiment: str
    seed: int
    config_hash: str
    artifact_version: str
    created_utc: str
    n_runs: int
    blocks: dict

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed and validated experiment settings; `resolved` is the canonical dict."""

    experiment: str
    seed: int
    dataset: dict
    split: SplitPlan
    preprocessor_fit: str
    detectors: dict[str, DetectorConfig]
    ensemble_members: tuple[str, ...]
    ensemble_levels: tuple[int, ...]
    omission: dict
    resolved: dict

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def load_config(path: str | Path | None, *, experiment: str, seed_override: int | None) -> ExperimentConfig:
    """Load, validate and resolve a config file for the given experiment kind."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        _require(isinstance(raw, dict), "config must be a JSON object")

    seed = seed_override if seed_override is not None else raw.get("seed")
    _require(seed is not None, "a seed is required (config 'seed' or --seed); no wall-clock default")
    _require(isinstance(seed, int), f"seed must be an integer, got {seed!r}")

    dataset = raw.get("dataset", {"demo": {}})
    _require(isinstance(dataset, dict), "'dataset' must be an object")
    if "demo" in dataset:
        demo = dict(dataset["demo"])
        unknown = set(demo) - {"seed", "n_normal", "n_attack", "sigma"}
        _require(not unknown, f"dataset.demo has unknown keys {sorted(unknown)}")
        demo = {
            "seed": int(demo.get("seed", seed)),
            "n_normal": int(demo.get("n_normal", 600)),
            "n_attack": int(demo.get("n_attack", 200)),
            "sigma": float(demo.get("sigma", 0.03)),
        }
        dataset = {"demo": demo}
    else:
        _require(
            "csv" in dataset and "schema" in dataset,
            "'dataset' needs either a 'demo' block or 'csv' + 'schema' paths",
        )
        dataset = {"csv": str(dataset["csv"]), "schema": str(dataset["schema"])}

    split_raw = raw.get("split", {})
    _require(isinstance(split_raw, dict), "'split' must be an object")
    try:
        split = SplitPlan(
            ratio=float(split_raw.get("ratio", 0.8)),
            n_runs=int(split_raw.get("n_runs", 10)),
            base_seed=int(split_raw.get("base_seed", seed)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad split plan: {exc}") from exc

    preprocessor_fit = raw.get("preprocessor_fit", "full")
    _require(
        preprocessor_fit in ("full", "train"),
        f"preprocessor_fit must be 'full' or 'train', got {preprocessor_fit!r}",
    )
    _require(
        not (preprocessor_fit == "train" and experiment == "omission"),
        "leak-free preprocessor_fit='train' is only supported for occ-eval",
    )

    detectors_raw = raw.get("detectors", DEFAULT_DETECTORS)
    _require(isinstance(detectors_raw, dict) and detectors_raw, "'detectors' must be a non-empty object")
    detectors: dict[str, DetectorConfig] = {}
    resolved_detectors: dict[str, dict] = {}
    for name, entry in detectors_raw.items():
        _require(isinstance(entry, dict), f"detector {name!r} must be an object")
        unknown = set(entry) - _DETECTOR_KEYS
        _require(not unknown, f"detector {name!r} has unknown keys {sorted(unknown)} "
                              f"(seeds are derived from the global seed)")
        _require("variant" in entry, f"detector {name!r} needs a 'variant'")
        try:
            cfg = DetectorConfig(**entry)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"detector {name!r}: {exc}") from exc
        detectors[name] = cfg
        resolved_detectors[name] = {
            "variant": cfg.variant,
            "n_trees": cfg.n_trees,
            "subsample": cfg.subsample,
            "k_neighbors": cfg.k_neighbors,
            "n_components": cfg.n_components,
        }

    ensemble_raw = raw.get("ensemble", {})
    _require(isinstance(ensemble_raw, dict), "'ensemble' must be an object")
    members = tuple(ensemble_raw.get("members", list(detectors)))
    for member in members:
        _require(member in detectors, f"ensemble member {member!r} is not a configured detector")
    levels = tuple(int(k) for k in ensemble_raw.get("levels", range(1, len(members) + 1)))
    for k in levels:
        _require(1 <= k <= len(members), f"ensemble level {k} out of range 1..{len(members)}")

    omission_raw = raw.get("omission", {})
    _require(isinstance(omission_raw, dict), "'omission' must be an object")
    omission = {
        "k_values": [int(k) for k in omission_raw.get("k_values", [1])],
        "with_noise": bool(omission_raw.get("with_noise", True)),
        "combination_cap": int(omission_raw.get("combination_cap", 20)),
        "occ_detector": omission_raw.get("occ_detector"),
        "attack_types": omission_raw.get("attack_types"),
        "rf": dict(omission_raw.get("rf", {})),
    }
    unknown_rf = set(omission["rf"]) - _RF_KEYS
    _require(not unknown_rf, f"omission.rf has unknown keys {sorted(unknown_rf)}")
    if omission["occ_detector"] is not None:
        _require(
            omission["occ_detector"] in detectors,
            f"omission.occ_detector {omission['occ_detector']!r} is not a configured detector",
        )

    resolved = {
        "experiment": experiment,
        "seed": seed,
        "dataset": dataset,
        "split": {"ratio": split.ratio, "n_runs": split.n_runs, "base_seed": split.base_seed},
        "preprocessor_fit": preprocessor_fit,
        "detectors": resolved_detectors,
        "ensemble": {"members": list(members), "levels": list(levels)},
    }
    if experiment == "omission":
        resolved["omission"] = omission

    return ExperimentConfig(
        experiment=experiment,
        seed=seed,
        dataset=dataset,
        split=split,
        preprocessor_fit=preprocessor_fit,
        detectors=detectors,
        ensemble_members=members,
        ensemble_levels=levels,
        omission=omission,
        resolved=resolved,
    )


# ---------------------------------------------------------------------------
# data loading


class _DataSource:
    """Produces (train, test) datasets per run, honoring the leak-free flag."""

    def __init__(self, config: ExperimentConfig) -> None:
        self._train_fit = False
        self._table = None
        self._schema: Schema | None = None
        self._dataset: Dataset | None = None
        entry = config.dataset
        if "demo" in entry:
            demo = entry["demo"]
            self._dataset = generate_gaussian_demo(
                seed=demo["seed"],
                n_normal=demo["n_normal"],
                n_attack=demo["n_attack"],
                sigma=demo["sigma"],
            )
        else:
            schema = load_schema(entry["schema"])
            table = load_csv(entry["csv"], schema)
            if config.preprocessor_fit == "train":
                self._train_fit = True
                self._table = table
                self._schema = schema
            else:
                state = fit_preprocessor(table, schema)
                self._dataset = apply_preprocessor(state, table, schema)

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            raise ConfigError("this experiment needs preprocessor_fit='full' (or a demo dataset)")
        return self._dataset

    def split_for_run(self, plan: SplitPlan, run: int) -> tuple[Dataset, Dataset]:
        if not self._train_fit:
            return stratified_split(self.dataset, plan, run)
        assert self._table is not None and self._schema is not None
        y, _ = extract_labels(self._table, self._schema)
        rng = np.random.default_rng([plan.base_seed, run])
        train_idx, test_idx = stratified_indices(y, plan.ratio, rng)
        state = fit_preprocessor(self._table.subset(train_idx), self._schema)
        train = apply_preprocessor(state, self._table.subset(train_idx), self._schema)
        test = apply_preprocessor(state, self._table.subset(test_idx), self._schema)
        return train, test


# ---------------------------------------------------------------------------
# row bookkeeping


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _read_rows(path: Path, columns: tuple[str, ...]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != columns:
            raise ValueError(f"{path}: unexpected or missing CSV header")
        return [dict(zip(columns, row)) for row in reader]


def _mean_std(values: list[float]) -> dict[str, float]:
    mu = math.fsum(values) / len(values)
    var = math.fsum((v - mu) ** 2 for v in values) / len(values)
    return {"mean": mu, "std": math.sqrt(var)}


def _evaluate(y_true: np.ndarray, preds: np.ndarray) -> dict[str, float]:
    c = confusion(y_true, preds)
    attack = class_metrics(c)
    normal = class_metrics(c.swapped())
    return {
        "accuracy": attack.accuracy,
        "attack_precision": attack.precision,
        "attack_recall": attack.recall,
        "attack_f1": attack.f1,
        "normal_f1": normal.f1,
        "macro_f1": macro_f1(attack, normal),
    }


# ---------------------------------------------------------------------------
# occ-eval


def _occ_rows_for_run(config: ExperimentConfig, source: _DataSource, run: int) -> list[dict]:
    train, test = source.split_for_run(config.split, run)
    normals = filter_normal(train)
    rows = []
    preds_by_name: dict[str, np.ndarray] = {}
    for name, base_cfg in config.detectors.items():
        cfg = dataclasses.replace(base_cfg, seed=derive_seed(config.seed, "detector", name, run))
        det = fit_detector(cfg, normals.X)
        threshold = calibrate_threshold(score_detector(det, normals.X))
        preds = classify(score_detector(det, test.X), threshold)
        preds_by_name[name] = preds
        rows.append(
            {"run": run, "model": name, "kind": "detector", "n_models": 1, **_evaluate(test.y, preds)}
        )
    matrix = PredictionMatrix(
        preds=np.array([preds_by_name[m] for m in config.ensemble_members]),
        model_names=config.ensemble_members,
    )
    for k in config.ensemble_levels:
        preds = consensus(matrix, k)
        rows.append(
            {
                "run": run,
                "model": f"ensemble-{k}",
                "kind": "ensemble",
                "n_models": len(config.ensemble_members),
                **_evaluate(test.y, preds),
            }
        )
    return rows


def _aggregate_occ_rows(rows: list[dict]) -> dict:
    order: list[str] = []
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        model = row["model"]
        if model not in grouped:
            grouped[model] = []
            order.append(model)
        grouped[model].append(row)
    blocks = {}
    for model in order:
        model_rows = grouped[model]
        blocks[model] = {
            "kind": model_rows[0]["kind"],
            "n_models": int(model_rows[0]["n_models"]),
            "metrics": {
                m: _mean_std([float(r[m]) for r in model_rows]) for m in OCC_METRIC_COLUMNS
            },
        }
    return blocks


def _run_dir(config: ExperimentConfig, out_dir: Path) -> Path:
    run_dir = out_dir / config.experiment / config.config_hash
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _finalize(config: ExperimentConfig, run_dir: Path, blocks: dict) -> Report:
    report = Report(
        experiment=config.experiment,
        seed=config.seed,
        config_hash=config.config_hash,
        artifact_version=__version__,
        created_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        n_runs=config.split.n_runs,
        blocks=blocks,
    )
    with open(run_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def cmd_occ_eval(config: ExperimentConfig, out_dir: Path, workers: int = 1) -> Report:
    """Run the full one-class pipeline over every split and persist results.

    A failing run aborts the experiment with a diagnostic naming the run;
    rows from already-completed runs are preserved in per_run.partial.csv.
    """
    source = _DataSource(config)
    runs = range(config.split.n_runs)
    run_dir = _run_dir(config, out_dir)
    per_run: list[list[dict]] = []
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for chunk in pool.map(lambda r: _occ_rows_for_run(config, source, r), runs):
                    per_run.append(chunk)
        else:
            for r in runs:
                per_run.append(_occ_rows_for_run(config, source, r))
    except Exception as exc:
        completed = [row for chunk in per_run for row in chunk]
        if completed:
            _write_rows(run_dir / "per_run.partial.csv", OCC_CSV_COLUMNS, completed)
        raise ValueError(
            f"occ-eval aborted at run {len(per_run)}: {exc} "
            f"({len(per_run)} completed runs preserved)"
        ) from exc
    rows = [row for chunk in per_run for row in chunk]
    _write_rows(run_dir / "per_run.csv", OCC_CSV_COLUMNS, rows)
    # Aggregate from the re-parsed CSV so every report number is exactly
    # recomputable from the persisted rows.
    blocks = _aggregate_occ_rows(_read_rows(run_dir / "per_run.csv", OCC_CSV_COLUMNS))
    return _finalize(config, run_dir, blocks)


# ---------------------------------------------------------------------------
# omission


def _omission_metrics_row(y_true: np.ndarray, preds: np.ndarray) -> dict[str, float]:
    full = _evaluate(y_true, preds)
    return {m: full[m] for m in OMISSION_METRIC_COLUMNS}


def _aggregate_omission_rows(rows: list[dict]) -> dict:
    grouped: dict[tuple[int, str], dict[int, list[dict]]] = {}
    for row in rows:
        key = (int(row["k"]), str(row["arm"]))
        grouped.setdefault(key, {}).setdefault(int(row["combination_id"]), []).append(row)
    blocks = {}
    for (k, arm), by_combo in sorted(grouped.items(), key=lambda kv: (kv[0][0], _ARM_ORDER[kv[0][1]])):
        metrics = {}
        for m in OMISSION_METRIC_COLUMNS:
            combo_means = [
                math.fsum(float(r[m]) for r in combo_rows) / len(combo_rows)
                for _, combo_rows in sorted(by_combo.items())
            ]
            metrics[m] = _mean_std(combo_means)
        blocks[f"k={k}/{arm}"] = {"metrics": metrics}
    return blocks


def cmd_omission(config: ExperimentConfig, out_dir: Path, workers: int = 1) -> Report:
    """Run the omission grid plus the one-class pipeline on identical folds."""
    del workers  # grid cells are evaluated serially; output is order-independent anyway
    source = _DataSource(config)
    data = source.dataset
    tags = config.omission["attack_types"] or list(data.attack_tags())
    if not tags:
        raise ValueError("omission experiments need a dataset with attack-type tags")
    plan = OmissionPlan(
        attack_types=tuple(tags),
        k_values=tuple(config.omission["k_values"]),
        with_noise=config.omission["with_noise"],
        n_runs=config.split.n_runs,
        ratio=config.split.ratio,
        base_seed=config.split.base_seed,
        combination_cap=config.omission["combination_cap"],
    )
    rf_config = ForestConfig(**config.omission["rf"])
    result = run_omission_experiment(data, plan, rf_config)
    rows = [
        {
            "k": cell.k,
            "combination_id": cell.combination_id,
            "combination_tags": "|".join(cell.combination),
            "run": cell.run,
            "arm": cell.arm,
            **{m: cell.metric(m) for m in OMISSION_METRIC_COLUMNS},
        }
        for cell in result.cells
    ]

    # One-class rows on the same folds: training normals never change under
    # omission, so the per-run model is fitted once and evaluated everywhere.
    occ_name = config.omission["occ_detector"] or (
        "stochastic-forest" if "stochastic-forest" in config.detectors else next(iter(config.detectors))
    )
    base_cfg = config.detectors[occ_name]
    combos_per_k = {cell.k: set() for cell in result.cells}
    for cell in result.cells:
        combos_per_k[cell.k].add((cell.combination_id, cell.combination))
    for run in range(plan.n_runs):
        train, test = stratified_split(data, SplitPlan(plan.ratio, plan.n_runs, plan.base_seed), run)
        normals = filter_normal(train)
        cfg = dataclasses.replace(base_cfg, seed=derive_seed(config.seed, "occ", run))
        det = fit_detector(cfg, normals.X)
        threshold = calibrate_threshold(score_detector(det, normals.X))
        preds = classify(score_detector(det, test.X), threshold)
        metrics = _omission_metrics_row(test.y, preds)
        for k, combos in sorted(combos_per_k.items()):
            for combo_id, combo in sorted(combos):
                rows.append(
                    {
                        "k": k,
                        "combination_id": combo_id,
                        "combination_tags": "|".join(combo),
                        "run": run,
                        "arm": "occ",
                        **metrics,
                    }
                )

    rows.sort(key=lambda r: (r["k"], r["combination_id"], r["run"], _ARM_ORDER[r["arm"]]))
    run_dir = _run_dir(config, out_dir)
    _write_rows(run_dir / "per_run.csv", OMISSION_CSV_COLUMNS, rows)
    blocks = _aggregate_omission_rows(_read_rows(run_dir / "per_run.csv", OMISSION_CSV_COLUMNS))
    return _finalize(config, run_dir, blocks)


# ---------------------------------------------------------------------------
# demo


def cmd_demo(seed: int, out_dir: Path) -> Path:
    """Train both forest arms and one detector on the synthetic clusters.

    Omits attack type a1 (the cluster between the benign data and the far
    attack cluster) from the forest training sets, then emits one row per
    generated point with every model's prediction.
    """
    demo = generate_gaussian_demo(seed)
    reduced = omit_attack_types(demo, {"a1"})
    rf_config = ForestConfig()
    plain = rf_fit(reduced.X, reduced.y, rf_config, seed=derive_seed(seed, "demo-rf-plain"))
    noisy_train = augment_with_noise(reduced, derive_seed(seed, "demo-noise"))
    noisy = rf_fit(noisy_train.X, noisy_train.y, rf_config, seed=derive_seed(seed, "demo-rf-noise"))
    normals = filter_normal(demo)
    det = fit_detector(
        DetectorConfig(variant="stochastic-forest", seed=derive_seed(seed, "demo-occ")), normals.X
    )
    threshold = calibrate_threshold(score_detector(det, normals.X))

    pred_plain = rf_predict(plain, demo.X)
    pred_noise = rf_predict(noisy, demo.X)
    pred_occ = classify(score_detector(det, demo.X), threshold)

    resolved = {"experiment": "demo", "seed": seed}
    run_id = hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()[:12]
    run_dir = out_dir / "demo" / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    columns = ("x1", "x2", "true_label", "rf_plain", "rf_noise", "occ")
    rows = [
        {
            "x1": float(demo.X[i, 0]),
            "x2": float(demo.X[i, 1]),
            "true_label": int(demo.y[i]),
            "rf_plain": int(pred_plain[i]),
            "rf_noise": int(pred_noise[i]),
            "occ": int(pred_occ[i]),
        }
        for i in range(demo.n_rows)
    ]
    _write_rows(run_dir / "demo_points.csv", columns, rows)
    return run_dir


# ---------------------------------------------------------------------------
# report


def _render_blocks(report: Report) -> str:
    lines = [
        f"experiment: {report.experiment}   runs: {report.n_runs}   seed: {report.seed}   "
        f"config: {report.config_hash}",
    ]
    shown = ("accuracy", "attack_recall", "attack_f1", "macro_f1")
    header = f"{'block':<28}" + "".join(f"{m:>22}" for m in shown)
    lines.append(header)
    lines.append("-" * len(header))
    for name, block in report.blocks.items():
        cells = []
        for m in shown:
            stats = block["metrics"].get(m)
            cells.append(
                f"{stats['mean']:>13.2f} +/-{stats['std']:>5.2f}" if stats else " " * 22
            )
        lines.append(f"{name:<28}" + "".join(cells))
    return "\n".join(lines)


def _compare_blocks(stored: dict, recomputed: dict, tol: float = 1e-9) -> None:
    if set(stored) != set(recomputed):
        raise ConsistencyError(
            f"report blocks {sorted(stored)} do not match per-run CSV blocks {sorted(recomputed)}"
        )
    for name, block in recomputed.items():
        stored_metrics = stored[name]["metrics"]
        for metric, stats in block["metrics"].items():
            for field in ("mean", "std"):
                got = stats[field]
                want = stored_metrics.get(metric, {}).get(field)
                if want is None or abs(got - want) > tol:
                    raise ConsistencyError(
                        f"{name}.{metric}.{field}: stored {want!r} but per-run rows give {got!r}"
                    )


def cmd_report(run_dir: Path) -> Report:
    """Recompute aggregates from per_run.csv and verify them against report.json."""
    report_path = run_dir / "report.json"
    csv_path = run_dir / "per_run.csv"
    if not report_path.is_file() or not csv_path.is_file():
        raise ValueError(f"{run_dir} does not contain report.json and per_run.csv")
    with open(report_path, encoding="utf-8") as fh:
        stored = json.load(fh)
    experiment = stored.get("experiment")
    if experiment == "occ-eval":
        rows = _read_rows(csv_path, OCC_CSV_COLUMNS)
        recomputed = _aggregate_occ_rows(rows)
    elif experiment == "omission":
        rows = _read_rows(csv_path, OMISSION_CSV_COLUMNS)
        recomputed = _aggregate_omission_rows(rows)
    else:
        raise ValueError(f"report.json has unknown experiment kind {experiment!r}")
    _compare_blocks(stored["blocks"], recomputed)
    return Report(
        experiment=experiment,
        seed=stored["seed"],
        config_hash=stored["config_hash"],
        artifact_version=stored["artifact_version"],
        created_utc=stored["created_utc"],
        n_runs=stored["n_runs"],
        blocks=recomputed,
    )


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occkit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("occ-eval", "omission", "demo"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="experiment config JSON")
        p.add_argument("--out", type=Path, required=True, help="output directory root")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="worker threads for independent runs")
    p = sub.add_parser("report")
    p.add_argument("--run-dir", type=Path, default=None, help="run directory to audit")
    p.add_argument("--out", type=Path, default=None, help="alias for --run-dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            run_dir = args.run_dir or args.out
            if run_dir is None:
                raise ConfigError("report needs --run-dir (or --out) pointing at a run directory")
            report = cmd_report(run_dir)
            print(_render_blocks(report))
        elif args.command == "demo":
            config = load_config(args.config, experiment="demo", seed_override=args.seed)
            run_dir = cmd_demo(config.seed, args.out)
            print(f"demo artifacts written to {run_dir}")
        else:
            config = load_config(args.config, experiment=args.command, seed_override=args.seed)
            runner = cmd_occ_eval if args.command == "occ-eval" else cmd_omission
            report = runner(config, args.out, workers=args.workers)
            print(_render_blocks(report))
            print(f"artifacts written to {args.out / config.experiment / config.config_hash}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
