"""Physics-constrained data-driven hyperelastic model fitting.

Three model families (CANN, ICNN, NODE) share one polyconvex
invariant-based energy expansion; this package builds, trains, and
benchmarks them on stress-stretch data.
"""

from .bench import (
    BenchReport,
    bench_grid,
    efficiency_sweep,
    evaluate_model,
    mae,
    r_squared,
    second_derivative_trace,
)
from .cann import CannTermParams
from .data import (
    Dataset,
    FiberOracle,
    MooneyRivlinOracle,
    NeoHookeanOracle,
    StressStretchSample,
    constants_from_dataset,
    fingerprint,
    load_csv,
    make_oracle,
    save_csv,
    split_protocol,
    synth_generate,
)
from .icnn import IcnnParams
from .kinematics import (
    DeformationState,
    InvariantBundle,
    MaterialFrame,
    MixedInvariant,
    NormalizationConstants,
    invariant_c_derivatives,
    invariants_from_deformation,
    isochoric_invariants,
    mixed_invariant,
    normalize_invariants,
)
from .loading import (
    StressResponse,
    stress_biaxial,
    stress_equibiaxial,
    stress_pure_shear,
    stress_uniaxial,
)
from .node import NodeParams
from .potential import (
    ConvexScalarTerm,
    ConvexTermBank,
    EnergyDerivatives,
    convexity_report,
    energy_derivatives,
    energy_value,
    new_bank,
)
from .training import FamilySpec, FitResult, TrainingConfig, loss, multi_restart, train

__version__ = "0.1.0"
