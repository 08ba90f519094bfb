"""Command line interface.

Commands:

    gen-data      synthesize a stress-stretch dataset from a closed-form oracle
    fit           train one model on a dataset and serialize the result
    bench         run the train/evaluate benchmark grid (optionally + efficiency)
    derivatives   trace second derivatives of a serialized model

Configuration precedence: explicit flags > --config JSON file > defaults.
The effective configuration is echoed into every output directory. Exit
codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import BenchReport, bench_grid, efficiency_sweep, second_derivative_trace
from .data import ORACLES, load_csv, make_oracle, save_csv, split_protocol, synth_generate
from .errors import (
    ConfigurationError,
    DataError,
    InvalidParameterError,
    PolyfitError,
    ProtocolMismatchError,
)
from .loading import ALL_MODES
from .potential import ConvexTermBank
from .training import FamilySpec, TrainingConfig, train

FAMILIES = ("cann", "icnn", "node")

GEN_DEFAULTS = {
    "oracle": "mooney-rivlin",
    "c1": None,
    "c2": None,
    "k1": None,
    "k2": None,
    "modes": "UT,PS,ET",
    "lam_min": 1.0,
    "lam_max": 2.0,
    "points": 20,
    "noise": 0.0,
    "seed": 0,
}

FIT_DEFAULTS = {
    "family": "cann",
    "ansatz": "reduced",
    "train_modes": "all",
    "seed": 0,
    "lr": 1e-3,
    "epochs": 20000,
    "grad_mode": "fd",
    "ode_steps": 20,
    "widths": None,
}

BENCH_DEFAULTS = {
    "families": "cann,icnn,node",
    "ansatz": "reduced",
    "restarts": 10,
    "seed": 0,
    "lr": 1e-3,
    "epochs": 20000,
    "grad_mode": "fd",
    "ode_steps": 20,
    "widths": None,
    "efficiency": False,
}

DERIV_DEFAULTS = {"range": None, "points": 100}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="polyfit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON file with default option values")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--oracle", choices=sorted(ORACLES))
    for name in ("c1", "c2", "k1", "k2", "lam-min", "lam-max", "noise"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--modes")
    p.add_argument("--points", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="fit one model to a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--ansatz", choices=("reduced", "full"))
    p.add_argument("--train-modes")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--grad-mode", choices=("fd", "analytic"))
    p.add_argument("--ode-steps", type=int)
    p.add_argument("--widths")
    p.add_argument("--restarts", type=int, default=1, help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="run the benchmark grid")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--families")
    p.add_argument("--ansatz", choices=("reduced", "full"))
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--grad-mode", choices=("fd", "analytic"))
    p.add_argument("--ode-steps", type=int)
    p.add_argument("--widths")
    p.add_argument("--efficiency", action="store_true", default=None)

    p = sub.add_parser("derivatives", help="trace second derivatives of a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--range", dest="range_", metavar="LO:HI")
    p.add_argument("--points", type=int)
    return parser


def _effective(args, defaults: dict) -> dict:
    """Merge defaults, config-file values, and explicitly set flags."""
    from_file = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        from_file = json.loads(path.read_text())
    merged = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key if key != "range" else "range_", None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in from_file:
            merged[key] = from_file[key]
        else:
            merged[key] = default
    return merged


def _parse_modes(text: str) -> tuple:
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    for mode in modes:
        if mode not in ALL_MODES:
            raise ConfigurationError(f"unknown loading mode {mode!r}")
    return modes


def _parse_widths(text):
    if text is None:
        return None
    try:
        return tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise ConfigurationError(f"cannot parse widths {text!r}") from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, command: str, config: dict, outputs: list) -> None:
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    manifest = {
        "command": command,
        "outputs": sorted(name for name in outputs + ["config.json", "manifest.json"]),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _family_spec(family: str, config: dict) -> FamilySpec:
    widths = _parse_widths(config.get("widths"))
    kwargs = {"family": family, "ansatz": config["ansatz"]}
    if widths:
        kwargs["icnn_widths"] = widths
        kwargs["node_widths"] = widths
    if config.get("ode_steps"):
        kwargs["node_steps"] = int(config["ode_steps"])
    return FamilySpec(**kwargs)


def _training_config(config: dict, restarts: int = 1) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=config["lr"],
        max_epochs=config["epochs"],
        restarts=restarts,
        seed=config["seed"],
        grad_mode=config["grad_mode"],
    )


def cmd_gen_data(args) -> int:
    config = _effective(args, GEN_DEFAULTS)
    out = _outdir(args)
    params = {
        k: config[k] for k in ("c1", "c2", "k1", "k2") if config.get(k) is not None
    }
    oracle = make_oracle(config["oracle"], **params)
    grid = np.linspace(config["lam_min"], config["lam_max"], config["points"])
    dataset = synth_generate(
        oracle,
        _parse_modes(config["modes"]),
        grid,
        noise_sigma=config["noise"],
        seed=config["seed"],
    )
    save_csv(dataset, out / "dataset.csv")
    _finish(out, "gen-data", config, ["dataset.csv", "dataset.meta.json"])
    print(f"wrote {dataset.n_samples} samples to {out / 'dataset.csv'}")
    return 0


def cmd_fit(args) -> int:
    config = _effective(args, FIT_DEFAULTS)
    out = _outdir(args)
    dataset = load_csv(args.data)
    train_modes = (
        "all" if config["train_modes"] == "all" else _parse_modes(config["train_modes"])
    )
    train_ds, _ = split_protocol(dataset, train_modes)
    result = train(
        _family_spec(config["family"], config), train_ds, _training_config(config)
    )
    result.bank.save(out / "model.json")
    (out / "fit.json").write_text(
        json.dumps(result.metrics_doc(), indent=2, sort_keys=True) + "\n"
    )
    with open(out / "loss_history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        writer.writerows(enumerate(map(repr, result.loss_history)))
    _finish(out, "fit", config, ["model.json", "fit.json", "loss_history.csv"])
    worst = min(result.r2.values())
    print(f"fit {config['family']} on {train_modes}: loss {result.final_loss:.3e}, "
          f"min R^2 {worst:.4f}")
    return 0


def cmd_bench(args) -> int:
    config = _effective(args, BENCH_DEFAULTS)
    out = _outdir(args)
    dataset = load_csv(args.data)
    families = tuple(f.strip() for f in config["families"].split(",") if f.strip())
    for family in families:
        if family not in FAMILIES:
            raise ConfigurationError(f"unknown model family {family!r}")
    specs = {family: _family_spec(family, config) for family in families}
    train_sets = [(mode,) for mode in dataset.modes] + ["all"]
    workers = int(os.environ.get("POLYFIT_THREADS", "1"))
    report = bench_grid(
        specs,
        dataset,
        train_sets,
        _training_config(config, restarts=config["restarts"]),
        max_workers=workers,
    )
    outputs = ["report.json"]
    if config["efficiency"]:
        ladder = [(f"{family}-default", spec) for family, spec in specs.items()]
        report.efficiency = efficiency_sweep(
            ladder,
            dataset,
            _training_config(config, restarts=max(5, config["restarts"])),
        )
    (out / "report.json").write_text(report.to_json() + "\n")
    outputs += [p.name for p in report.write_csvs(out)]
    _finish(out, "bench", config, outputs)
    print(f"benchmark grid written to {out / 'report.json'}")
    return 0


def cmd_derivatives(args) -> int:
    config = _effective(args, DERIV_DEFAULTS)
    out = _outdir(args)
    path = Path(args.model)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    bank = ConvexTermBank.load(path)
    outputs = []
    for target in bank.active_invariants():
        if config["range"]:
            lo, hi = (float(v) for v in str(config["range"]).split(":"))
        else:
            offset = bank.constants.offsets[target]
            lo, hi = offset, offset + 4.5 * bank.constants.scales[target]
        grid, values = second_derivative_trace(
            bank, target, (lo, hi), n_points=config["points"]
        )
        name = f"trace_{target}.csv"
        with open(out / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["invariant", "second_derivative"])
            writer.writerows(zip(map(repr, grid), map(repr, values)))
        outputs.append(name)
    _finish(out, "derivatives", config, outputs)
    print(f"wrote {len(outputs)} trace files to {out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "bench": cmd_bench,
    "derivatives": cmd_derivatives,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, InvalidParameterError, ProtocolMismatchError) as exc:
        print(f"polyfit: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"polyfit: data error: {exc}", file=sys.stderr)
        return 2
    except PolyfitError as exc:
        print(f"polyfit: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
