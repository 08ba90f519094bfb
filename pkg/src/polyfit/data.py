"""Stress-stretch datasets: CSV ingestion, synthetic oracles, protocol splits.

CSV schema (UTF-8, comma separated, dot decimal, header required):

    mode,lambda_x,lambda_y,P_xx,P_yy

Scalar protocols (UT, PS, ET) leave lambda_y and P_yy empty; biaxial
protocols (SX, SY, EB) fill every column. A JSON sidecar next to the CSV
(<name>.meta.json) carries the stress unit, fiber frame, and provenance.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, ParseError
from .kinematics import (
    DEFAULT_FRAME,
    DeformationState,
    INVARIANT_KEYS,
    MaterialFrame,
    NormalizationConstants,
    REFERENCE_OFFSETS,
    invariants_from_deformation,
)
from .loading import (
    ALL_MODES,
    BIAXIAL_MODES,
    SCALAR_MODES,
    biaxial_stretches,
    stress_biaxial,
    stress_equibiaxial,
    stress_pure_shear,
    stress_uniaxial,
)

CSV_HEADER = ["mode", "lambda_x", "lambda_y", "P_xx", "P_yy"]
MIN_SCALE = 1e-6


@dataclass(frozen=True)
class StressStretchSample:
    mode: str
    lam_x: float
    lam_y: float | None
    p_xx: float
    p_yy: float | None

    def primary_stretch(self) -> float:
        return self.lam_y if self.mode == "SY" else self.lam_x


@dataclass
class Dataset:
    """Samples grouped by loading mode, plus measurement metadata."""

    samples: dict
    unit: str = "MPa"
    frame: MaterialFrame = field(default_factory=lambda: DEFAULT_FRAME)
    provenance: str = ""

    def __post_init__(self):
        for mode, rows in self.samples.items():
            if mode not in ALL_MODES:
                raise DataError(f"unknown loading mode {mode!r}")
            if not rows:
                raise DataError(f"mode {mode} declared without samples")
            for s in rows:
                if s.lam_x <= 0.0 or (s.lam_y is not None and s.lam_y <= 0.0):
                    raise DataError(f"non-positive stretch in mode {mode}")
                stresses = [s.p_xx] + ([s.p_yy] if s.p_yy is not None else [])
                if not all(np.isfinite(v) for v in stresses):
                    raise DataError(f"non-finite stress in mode {mode}")
            primary = [s.primary_stretch() for s in rows]
            if any(b <= a for a, b in zip(primary, primary[1:])):
                raise DataError(f"stretches must be strictly increasing within mode {mode}")

    @classmethod
    def from_samples(cls, samples, **meta) -> "Dataset":
        grouped: dict = {}
        for s in samples:
            grouped.setdefault(s.mode, []).append(s)
        return cls(samples=grouped, **meta)

    @property
    def modes(self) -> tuple:
        return tuple(self.samples)

    @property
    def n_samples(self) -> int:
        return sum(len(rows) for rows in self.samples.values())

    def curve(self, mode: str):
        """(lam_x, lam_y, P_xx, P_yy) arrays for one mode; None where absent."""
        rows = self.samples[mode]
        lam_x = np.array([s.lam_x for s in rows])
        p_xx = np.array([s.p_xx for s in rows])
        if mode in SCALAR_MODES:
            return lam_x, None, p_xx, None
        lam_y = np.array([s.lam_y for s in rows])
        p_yy = np.array([s.p_yy for s in rows])
        return lam_x, lam_y, p_xx, p_yy

    def states(self, mode: str) -> list:
        """Incompressible deformation states for every sample of a mode."""
        builders = {
            "UT": DeformationState.uniaxial,
            "PS": DeformationState.pure_shear,
            "ET": DeformationState.equibiaxial,
        }
        out = []
        for s in self.samples[mode]:
            if mode in SCALAR_MODES:
                out.append(builders[mode](s.lam_x))
            else:
                out.append(DeformationState.incompressible_biaxial(s.lam_x, s.lam_y))
        return out


def fingerprint(dataset: Dataset) -> str:
    """Stable content hash used to prove train/validation separation."""
    doc = {
        "unit": dataset.unit,
        "a0": dataset.frame.a0.tolist(),
        "s0": dataset.frame.s0.tolist(),
        "samples": {
            mode: [(s.lam_x, s.lam_y, s.p_xx, s.p_yy) for s in rows]
            for mode, rows in dataset.samples.items()
        },
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def constants_from_dataset(dataset: Dataset) -> NormalizationConstants:
    """Normalization scales chosen so training invariants map to roughly [0, 3]."""
    peak = {k: MIN_SCALE * 3.0 for k in INVARIANT_KEYS}
    for mode in dataset.modes:
        for state in dataset.states(mode):
            bundle = invariants_from_deformation(state, dataset.frame)
            for k in INVARIANT_KEYS:
                peak[k] = max(peak[k], bundle.raw(k) - REFERENCE_OFFSETS[k])
    scales = {k: max(peak[k] / 3.0, MIN_SCALE) for k in INVARIANT_KEYS}
    return NormalizationConstants(offsets=dict(REFERENCE_OFFSETS), scales=scales)


# -- CSV round trip -----------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def save_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for mode in dataset.modes:
            for s in dataset.samples[mode]:
                writer.writerow(
                    [
                        s.mode,
                        repr(s.lam_x),
                        "" if s.lam_y is None else repr(s.lam_y),
                        repr(s.p_xx),
                        "" if s.p_yy is None else repr(s.p_yy),
                    ]
                )
    meta = {
        "unit": dataset.unit,
        "frame": {"a0": dataset.frame.a0.tolist(), "s0": dataset.frame.s0.tolist()},
        "provenance": dataset.provenance,
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty file, expected header") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise ParseError(f"line {lineno}: expected 5 columns, got {len(row)}")
            mode = row[0].strip()
            if mode not in ALL_MODES:
                raise ParseError(f"line {lineno}: unknown mode {mode!r}")
            try:
                lam_x = float(row[1])
                lam_y = float(row[2]) if row[2].strip() else None
                p_xx = float(row[3])
                p_yy = float(row[4]) if row[4].strip() else None
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if mode in BIAXIAL_MODES and (lam_y is None or p_yy is None):
                raise ParseError(f"line {lineno}: biaxial mode {mode} needs all columns")
            if mode in SCALAR_MODES:
                lam_y = None
                p_yy = None
            samples.append(StressStretchSample(mode, lam_x, lam_y, p_xx, p_yy))
    meta_file = _meta_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    frame = DEFAULT_FRAME
    if "frame" in meta:
        frame = MaterialFrame(
            a0=np.array(meta["frame"]["a0"]), s0=np.array(meta["frame"]["s0"])
        )
    return Dataset.from_samples(
        samples,
        unit=meta.get("unit", "MPa"),
        frame=frame,
        provenance=meta.get("provenance", ""),
    )


# -- synthetic oracles --------------------------------------------------------


def _require_positive(**params) -> None:
    for name, value in params.items():
        if value <= 0.0:
            raise ConfigurationError(f"oracle parameter {name} must be positive")


@dataclass(frozen=True)
class NeoHookeanOracle:
    """psi = c1 (I1 - 3)."""

    c1: float
    anisotropic = False

    def __post_init__(self):
        _require_positive(c1=self.c1)

    def invariant_derivatives(self, bundle) -> dict:
        return {"i1": self.c1, "i2": 0.0, "i4a": 0.0, "i4s": 0.0}


@dataclass(frozen=True)
class MooneyRivlinOracle:
    """psi = c1 (I1 - 3) + c2 (I2 - 3)."""

    c1: float
    c2: float
    anisotropic = False

    def __post_init__(self):
        _require_positive(c1=self.c1, c2=self.c2)

    def invariant_derivatives(self, bundle) -> dict:
        return {"i1": self.c1, "i2": self.c2, "i4a": 0.0, "i4s": 0.0}


@dataclass(frozen=True)
class FiberOracle:
    """Neo-Hookean matrix plus an exponential fiber family along a0:

    psi = c1 (I1 - 3) + k1/(2 k2) (exp(k2 (I4a - 1)^2) - 1)
    """

    c1: float
    k1: float
    k2: float
    anisotropic = True

    def __post_init__(self):
        _require_positive(c1=self.c1, k1=self.k1, k2=self.k2)

    def invariant_derivatives(self, bundle) -> dict:
        e = bundle.i4a - 1.0
        return {
            "i1": self.c1,
            "i2": 0.0,
            "i4a": self.k1 * e * np.exp(self.k2 * e * e),
            "i4s": 0.0,
        }


ORACLES = {
    "neo-hookean": NeoHookeanOracle,
    "mooney-rivlin": MooneyRivlinOracle,
    "fiber": FiberOracle,
}


def make_oracle(name: str, **params):
    if name not in ORACLES:
        raise ConfigurationError(f"unknown oracle {name!r}; options: {sorted(ORACLES)}")
    try:
        return ORACLES[name](**params)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def synth_generate(
    oracle,
    modes,
    grid,
    noise_sigma: float = 0.0,
    seed: int = 0,
    frame: MaterialFrame = DEFAULT_FRAME,
    unit: str = "MPa",
) -> Dataset:
    """Evaluate the oracle through the loading formulas on a stretch grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0.0):
        raise ConfigurationError("stretch grid must be strictly increasing")
    rng = np.random.default_rng(seed)
    scalar_stress = {"UT": stress_uniaxial, "PS": stress_pure_shear, "ET": stress_equibiaxial}
    samples = []
    for mode in modes:
        if mode not in ALL_MODES:
            raise ConfigurationError(f"unknown loading mode {mode!r}")
        for lam in grid:
            if mode in SCALAR_MODES:
                p = scalar_stress[mode](oracle, lam)
                if noise_sigma > 0.0:
                    p += rng.normal(0.0, noise_sigma)
                samples.append(StressStretchSample(mode, float(lam), None, float(p), None))
            else:
                lam_x, lam_y = biaxial_stretches(mode, float(lam))
                r = stress_biaxial(oracle, lam_x, lam_y, frame)
                p_xx, p_yy = r.p_xx, r.p_yy
                if noise_sigma > 0.0:
                    p_xx += rng.normal(0.0, noise_sigma)
                    p_yy += rng.normal(0.0, noise_sigma)
                samples.append(
                    StressStretchSample(mode, lam_x, lam_y, float(p_xx), float(p_yy))
                )
    return Dataset.from_samples(
        samples, unit=unit, frame=frame, provenance=f"synthetic {oracle!r}"
    )


def split_protocol(dataset: Dataset, train_modes) -> tuple[Dataset, Dataset]:
    """Partition by mode; the sentinel 'all' trains and validates on everything."""
    if train_modes == "all" or tuple(train_modes) == ("all",):
        return dataset, dataset
    train_modes = tuple(train_modes)
    for mode in train_modes:
        if mode not in dataset.modes:
            raise ConfigurationError(f"mode {mode!r} not present in dataset")
    meta = {"unit": dataset.unit, "frame": dataset.frame, "provenance": dataset.provenance}
    train = Dataset(
        samples={m: list(dataset.samples[m]) for m in dataset.modes if m in train_modes},
        **meta,
    )
    validation = Dataset(
        samples={m: list(dataset.samples[m]) for m in dataset.modes if m not in train_modes},
        **meta,
    )
    return train, validation
