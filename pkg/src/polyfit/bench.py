"""Fit-quality metrics, benchmark grids, derivative traces, efficiency sweeps.

The train/evaluate grid mirrors the benchmarking protocol: fit on one
loading mode (or all), evaluate R^2/MAE on every mode, aggregate over
independent restarts. Biaxial modes score both stress components as one
concatenated series.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, fingerprint, split_protocol
from .errors import ConfigurationError, UndefinedMetricError
from .kinematics import InvariantBundle
from .loading import SCALAR_MODES, stress_for_mode
from .potential import ConvexTermBank, energy_derivatives, normalize_invariants

REFERENCE_RAW = {"i1": 3.0, "i2": 3.0, "i3": 1.0, "i4a": 1.0, "i4s": 1.0}


def r_squared(pred, obs) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    A prediction that blew up (extrapolated exponentials overflowing to
    inf) scores -inf rather than poisoning downstream aggregates with NaN.
    """
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape or pred.size < 2:
        raise ConfigurationError("series must have equal length >= 2")
    total = np.sum((obs - obs.mean()) ** 2)
    if total == 0.0:
        raise UndefinedMetricError("R^2 is undefined for a constant observation series")
    if not np.all(np.isfinite(pred)):
        return float("-inf")
    return float(1.0 - np.sum((obs - pred) ** 2) / total)


def mae(pred, obs) -> float:
    """Mean absolute error; inf when the prediction is non-finite."""
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape:
        raise ConfigurationError("series must have equal length")
    if not np.all(np.isfinite(pred)):
        return float("inf")
    return float(np.mean(np.abs(pred - obs)))


def predict_mode(model, dataset: Dataset, mode: str) -> tuple:
    """(predicted, observed) series for one mode; biaxial components concatenated."""
    lam_x, lam_y, p_xx, p_yy = dataset.curve(mode)
    if mode in SCALAR_MODES:
        pred = np.array([stress_for_mode(model, mode, lx) for lx in lam_x])
        return pred, p_xx
    pairs = [
        stress_for_mode(model, mode, lx, ly, dataset.frame)
        for lx, ly in zip(lam_x, lam_y)
    ]
    pred = np.concatenate([[p[0] for p in pairs], [p[1] for p in pairs]])
    return pred, np.concatenate([p_xx, p_yy])


def _predictions(model, dataset: Dataset) -> dict:
    # evaluation never clamps exponentials; far extrapolations may overflow
    # and are scored as -inf R^2 / inf MAE by the metrics above
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(model, ConvexTermBank):
            from .training import predict_dataset  # deferred: bench sits above training

            return predict_dataset(model, dataset)
        return {mode: predict_mode(model, dataset, mode) for mode in dataset.modes}


def evaluate_model(model, dataset: Dataset) -> dict:
    """Per-mode R^2 and MAE of a model against a dataset."""
    return {
        mode: {"r2": r_squared(pred, obs), "mae": mae(pred, obs)}
        for mode, (pred, obs) in _predictions(model, dataset).items()
    }


def pooled_mae(model, dataset: Dataset) -> float:
    """MAE over every sample and component of the dataset, pooled."""
    series = list(_predictions(model, dataset).values())
    return mae(
        np.concatenate([p for p, _ in series]), np.concatenate([o for _, o in series])
    )


def second_derivative_trace(
    bank: ConvexTermBank, target: str, invariant_range: tuple, n_points: int = 100
) -> tuple:
    """d2(psi)/dI_k^2 sampled over a raw-invariant range.

    Non-target invariants sit at the reference state, so blend terms read
    alpha-scaled versions of the traced invariant only.
    """
    if target not in bank.active_invariants():
        raise ConfigurationError(f"invariant {target!r} is not active in this bank")
    lo, hi = invariant_range
    grid = np.linspace(lo, hi, n_points)
    values = np.empty_like(grid)
    for idx, raw in enumerate(grid):
        raw_values = dict(REFERENCE_RAW)
        raw_values[target] = float(raw)
        bundle = normalize_invariants(InvariantBundle(**raw_values), bank.constants)
        values[idx] = energy_derivatives(bank, bundle).second[target]
    return grid, values


@dataclass
class BenchReport:
    """Aggregated benchmark outputs; tables are lists of flat row dicts."""

    r2_table: list = field(default_factory=list)
    mae_table: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    efficiency: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "r2_table": self.r2_table,
            "mae_table": self.mae_table,
            "traces": {k: {"grid": list(v[0]), "values": list(v[1])} for k, v in self.traces.items()},
            "efficiency": self.efficiency,
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def write_csvs(self, outdir) -> list:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []

        def table(name, rows):
            if not rows:
                return
            path = outdir / name
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
            written.append(path)

        table("r2.csv", self.r2_table)
        table("mae.csv", self.mae_table)
        table("efficiency.csv", self.efficiency)
        for target, (grid, values) in self.traces.items():
            path = outdir / f"trace_{target}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["invariant", "second_derivative"])
                writer.writerows(zip(map(repr, grid), map(repr, values)))
            written.append(path)
        return written


def _grid_cell(spec, dataset, train_modes, config):
    from .training import multi_restart  # deferred: bench sits above training

    train_ds, validation_ds = split_protocol(dataset, train_modes)
    results, _ = multi_restart(spec, train_ds, config)
    train_fp = fingerprint(train_ds)
    for result in results:
        if result.dataset_fingerprint != train_fp:
            raise ConfigurationError("fit does not carry the training fingerprint")
    if train_modes != "all" and validation_ds.n_samples > 0:
        if fingerprint(validation_ds) == train_fp:
            raise ConfigurationError("validation data overlaps the training data")
    scores = [evaluate_model(result.bank, dataset) for result in results]
    rows = []
    # divergent extrapolations carry -inf/inf scores; the aggregates stay
    # -inf/NaN rather than hiding the blow-up
    with np.errstate(invalid="ignore", over="ignore"):
        for eval_mode in dataset.modes:
            r2_values = [s[eval_mode]["r2"] for s in scores]
            mae_values = [s[eval_mode]["mae"] for s in scores]
            rows.append(
                {
                    "eval": eval_mode,
                    "r2_mean": float(np.mean(r2_values)),
                    "r2_std": float(np.std(r2_values)),
                    "mae_mean": float(np.mean(mae_values)),
                    "mae_std": float(np.std(mae_values)),
                }
            )
    return rows


def bench_grid(specs, dataset: Dataset, train_sets, config, max_workers: int = 1) -> BenchReport:
    """Full train/evaluate benchmark: families x training sets x restarts.

    `specs` maps a printable family label to a FamilySpec; `train_sets` is a
    list of mode tuples (or the sentinel 'all'). Cells are independent and
    may run in parallel processes.
    """
    cells = [
        (label, spec, train_modes)
        for label, spec in specs.items()
        for train_modes in train_sets
    ]
    if max_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            cell_rows = list(
                pool.map(
                    _grid_cell_star,
                    [(spec, dataset, tm, config) for _, spec, tm in cells],
                )
            )
    else:
        cell_rows = [_grid_cell(spec, dataset, tm, config) for _, spec, tm in cells]

    report = BenchReport(
        meta={
            "seed": config.seed,
            "restarts": config.restarts,
            "train_sets": [list(t) if t != "all" else "all" for t in train_sets],
        }
    )
    for (label, _, train_modes), rows in zip(cells, cell_rows):
        train_label = "all" if train_modes == "all" else "+".join(train_modes)
        for row in rows:
            base = {"family": label, "train": train_label, "eval": row["eval"]}
            report.r2_table.append(
                {**base, "r2_mean": row["r2_mean"], "r2_std": row["r2_std"]}
            )
            report.mae_table.append(
                {**base, "mae_mean": row["mae_mean"], "mae_std": row["mae_std"]}
            )
    return report


def _grid_cell_star(args):
    return _grid_cell(*args)


def efficiency_sweep(ladder, dataset: Dataset, config) -> list:
    """Median interpolation MAE per model size; >= 5 restarts per rung.

    `ladder` is a list of (label, FamilySpec). Returns one row per rung with
    the trainable-parameter count and median pooled MAE over restarts.
    """
    from .training import multi_restart  # deferred: bench sits above training

    if not ladder:
        raise ConfigurationError("efficiency ladder must not be empty")
    if config.restarts < 5:
        raise ConfigurationError("efficiency sweeps need at least 5 restarts")
    rows = []
    for label, spec in ladder:
        results, _ = multi_restart(spec, dataset, config)
        maes = [pooled_mae(r.bank, dataset) for r in results]
        rows.append(
            {
                "family": spec.family,
                "label": label,
                "n_params": results[0].n_params,
                "median_mae": float(np.median(maes)),
                "wall_time_s": float(np.median([r.wall_time for r in results])),
            }
        )
    return rows
