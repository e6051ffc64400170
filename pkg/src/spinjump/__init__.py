"""Spin-selective radical-pair recombination: models, trajectories, checks."""

from .analysis import (
    ComparisonReport,
    EarlyTimeReport,
    compare_models,
    early_time_check,
    effective_rate,
    singlet_probability,
    trace_distance,
)
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    NumericalFailureError,
    SingularProjectionError,
    StepSizeError,
    UnsupportedModelError,
)
from .master import (
    MixtureWeights,
    Model,
    ModelSpec,
    Solution,
    TimeGrid,
    analytic_eq1,
    analytic_eq2,
    analytic_eq3,
    integrate,
    mixture_weights,
    rhs_eq1,
    rhs_eq2,
    rhs_eq3,
)
from .spincore import (
    MAX_NUCLEI,
    PRESETS,
    SpinSystem,
    ValidationReport,
    build_spin_system,
    conditional_projected_state,
    density_from_preset,
    singlet_projector,
    spin_operator,
    triplet_projector,
    validate_density,
    zeeman_hamiltonian,
)
from .trajectory import (
    EnsembleEstimate,
    JumpProbabilities,
    MoleculeState,
    TrajectoryConfig,
    jump_probabilities,
    molecule_stream,
    run_ensemble,
    step_once,
    unnormalized_mean,
    unnormalized_se,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ComparisonReport",
    "ConfigError",
    "ContractError",
    "EarlyTimeReport",
    "EnsembleEstimate",
    "JumpProbabilities",
    "MAX_NUCLEI",
    "MixtureWeights",
    "Model",
    "ModelSpec",
    "MoleculeState",
    "NumericalFailureError",
    "PRESETS",
    "SingularProjectionError",
    "Solution",
    "SpinSystem",
    "StepSizeError",
    "TimeGrid",
    "TrajectoryConfig",
    "UnsupportedModelError",
    "ValidationReport",
    "analytic_eq1",
    "analytic_eq2",
    "analytic_eq3",
    "build_spin_system",
    "compare_models",
    "conditional_projected_state",
    "density_from_preset",
    "early_time_check",
    "effective_rate",
    "integrate",
    "jump_probabilities",
    "mixture_weights",
    "molecule_stream",
    "rhs_eq1",
    "rhs_eq2",
    "rhs_eq3",
    "run_ensemble",
    "singlet_probability",
    "singlet_projector",
    "spin_operator",
    "step_once",
    "trace_distance",
    "triplet_projector",
    "unnormalized_mean",
    "unnormalized_se",
    "validate_density",
    "zeeman_hamiltonian",
]
