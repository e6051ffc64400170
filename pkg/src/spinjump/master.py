"""Kinetic models for spin-selective singlet recombination of a radical pair.

Only the singlet channel recombines (rate k_s; the triplet rate is pinned
to zero). Three competing descriptions are implemented, named eq1 to eq3:

eq1, trace-decaying ensemble equation. The trace tracks the surviving
fraction::

    d rho / dt = -i [H, rho] - k_s (rho - QT rho QT)

eq2, trace-preserving flow of the normalized survivor state
rho_nr = rho / Tr(rho). Written multiplied through, so it is division-free
and regular even at a singlet-pure state::

    d rho_nr / dt = -i [H, rho_nr] - k_s (rho_nr - QT rho_nr QT)
                    + k_s Tr(QS rho_nr) rho_nr

eq3, a mixture ansatz for the survivors, printed exactly as it is used::

    d rho_nr / dt = -k_s [ rho_nr - QT rho_nr QT / Tr(QT rho_nr QT) ]

whose solution is the two-component mixture
``w0(t) rho0 + wT(t) rhoT`` with w0 = exp(-k_s t), wT = 1 - w0 and
rhoT = QT rho0 QT / Tr(QT rho0 QT).

For H = 0 all three have closed forms (analytic_eq1/2/3 below); those are
the oracles the fixed-step RK4 integrator is tested against. eq2 and eq3
share endpoints at t = 0 and t -> inf but differ in between, which is the
whole point of the comparison machinery in ``analysis``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    NumericalFailureError,
    SingularProjectionError,
    UnsupportedModelError,
)
from .spincore import (
    HERMITICITY_TOL,
    PROJECTION_CUTOFF,
    SpinSystem,
    conditional_projected_state,
)

# unit-trace enforcement for the trace-preserving right-hand sides
TRACE_TOL = 1e-6

# hermiticity drift and positivity floor tolerated during integration
INTEGRATION_TOL = 1e-8


class Model(enum.Enum):
    """Selector for the three right-hand sides."""

    EQ1_TRACED = "eq1"
    EQ2_NORMALIZED = "eq2"
    EQ3_MIXTURE = "eq3"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Validated bundle of system, rates and optional Hamiltonian.

    k_t is carried explicitly but pinned to zero; any other value is
    rejected. The mixture model (eq3) only makes sense without coherent
    drift, so combining it with a Hamiltonian is refused outright.
    """

    system: SpinSystem
    k_s: float
    k_t: float = 0.0
    hamiltonian: np.ndarray | None = None
    model: Model = Model.EQ1_TRACED

    def __post_init__(self):
        if self.k_s <= 0:
            raise ConfigError(f"k_s must be positive, got {self.k_s}")
        if self.k_t != 0.0:
            raise ConfigError(f"only k_t = 0 is supported, got {self.k_t}")
        h = self.hamiltonian
        if h is not None:
            if h.shape != (self.system.dim, self.system.dim):
                raise ConfigError(
                    f"hamiltonian shape {h.shape} does not match dim {self.system.dim}"
                )
            if np.abs(h - h.conj().T).max() > HERMITICITY_TOL:
                raise ConfigError("hamiltonian is not Hermitian within tolerance")
        if self.model is Model.EQ3_MIXTURE and h is not None:
            raise UnsupportedModelError(
                "the mixture model does not support a Hamiltonian"
            )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform integration grid; states are recorded every ``stride`` steps."""

    t_max: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ConfigError("t_max and dt must be positive")
        if self.dt > self.t_max:
            raise ConfigError(f"dt={self.dt} exceeds t_max={self.t_max}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_max / self.dt))
        if n < 1:
            raise ConfigError("grid has no steps")
        return n

    def record_steps(self) -> list[int]:
        """Step indices kept in the output: 0, stride, 2*stride, ... and the last."""
        n = self.n_steps
        steps = list(range(0, n + 1, self.stride))
        if steps[-1] != n:
            steps.append(n)
        return steps


@dataclass(frozen=True)
class Solution:
    times: np.ndarray
    states: list = field(default_factory=list)


@dataclass(frozen=True)
class MixtureWeights:
    w0: float
    wT: float


def _check_state(rho: np.ndarray, spec: ModelSpec) -> None:
    if rho.shape != (spec.system.dim, spec.system.dim):
        raise ContractError(
            f"state shape {rho.shape} does not match dim {spec.system.dim}"
        )


def _check_unit_trace(rho: np.ndarray) -> None:
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ContractError(f"state trace {tr!r} deviates from 1 beyond {TRACE_TOL}")


def _commutator_term(h: np.ndarray | None, rho: np.ndarray) -> np.ndarray | None:
    if h is None:
        return None
    return -1j * (h @ rho - rho @ h)


def rhs_eq1(rho: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Trace-decaying right-hand side; d Tr(rho)/dt = -k_s Tr(QS rho)."""
    _check_state(rho, spec)
    qt = spec.system.qt
    out = -spec.k_s * (rho - qt @ rho @ qt)
    drift = _commutator_term(spec.hamiltonian, rho)
    if drift is not None:
        out = out + drift
    return out


def rhs_eq2(rho: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Normalized-survivor flow, multiplied through so no division appears.

    For a unit-trace state this is exactly the time derivative of
    rho / Tr(rho) under eq1, and it is regular even when the state is
    singlet-pure. Traceless for unit-trace input.
    """
    _check_state(rho, spec)
    _check_unit_trace(rho)
    qs, qt = spec.system.qs, spec.system.qt
    p_s = np.einsum("ij,ji->", qs, rho).real
    out = -spec.k_s * (rho - qt @ rho @ qt) + spec.k_s * p_s * rho
    drift = _commutator_term(spec.hamiltonian, rho)
    if drift is not None:
        out = out + drift
    return out


def rhs_eq3(rho: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Mixture-model right-hand side, exactly as printed.

    The division by Tr(QT rho QT) is kept literal: a state with vanishing
    triplet weight has no defined update and raises
    SingularProjectionError. No Hamiltonian support.
    """
    _check_state(rho, spec)
    if spec.hamiltonian is not None:
        raise UnsupportedModelError("the mixture model does not support a Hamiltonian")
    qt = spec.system.qt
    m = qt @ rho @ qt
    weight = np.trace(m).real
    if weight <= PROJECTION_CUTOFF:
        raise SingularProjectionError(
            f"Tr(QT rho QT) = {weight:.3e} at or below {PROJECTION_CUTOFF:.0e}"
        )
    return -spec.k_s * (rho - m / weight)


_RHS = {
    Model.EQ1_TRACED: rhs_eq1,
    Model.EQ2_NORMALIZED: rhs_eq2,
    Model.EQ3_MIXTURE: rhs_eq3,
}


def integrate(
    model: Model, rho0: np.ndarray, spec: ModelSpec, grid: TimeGrid
) -> Solution:
    """Classical fixed-step RK4 on the selected right-hand side.

    After every step the state is re-symmetrized, rho <- (rho + rho^dag)/2;
    hermiticity drift beyond INTEGRATION_TOL, or a recorded state whose
    smallest eigenvalue falls below -INTEGRATION_TOL, aborts with
    NumericalFailureError carrying the offending time.
    """
    model = Model(model)
    rhs = _RHS[model]
    if model is not Model.EQ1_TRACED:
        _check_unit_trace(rho0)
    rho = np.array(rho0, dtype=complex)
    dt = grid.dt
    record = set(grid.record_steps())
    times: list[float] = []
    states: list[np.ndarray] = []

    def _record(step: int, state: np.ndarray) -> None:
        t = step * dt
        if np.linalg.eigvalsh(state)[0] < -INTEGRATION_TOL:
            raise NumericalFailureError(
                f"state lost positivity at t={t:.6g}", t=t
            )
        times.append(t)
        states.append(state.copy())

    if 0 in record:
        _record(0, rho)
    half = 0.5 * dt
    for step in range(1, grid.n_steps + 1):
        k1 = rhs(rho, spec)
        k2 = rhs(rho + half * k1, spec)
        k3 = rhs(rho + half * k2, spec)
        k4 = rhs(rho + dt * k3, spec)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        defect = np.abs(rho - rho.conj().T).max()
        if defect > INTEGRATION_TOL:
            t = step * dt
            raise NumericalFailureError(
                f"hermiticity defect {defect:.3e} at t={t:.6g}", t=t
            )
        rho = 0.5 * (rho + rho.conj().T)
        if step in record:
            _record(step, rho)
    return Solution(np.array(times), states)


def mixture_weights(k_s: float, t: float) -> MixtureWeights:
    """Survivor mixture weights w0 = exp(-k_s t), wT = 1 - w0."""
    if k_s <= 0:
        raise ConfigError(f"k_s must be positive, got {k_s}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    w0 = math.exp(-k_s * t)
    return MixtureWeights(w0, 1.0 - w0)


def analytic_eq1(
    system: SpinSystem, rho0: np.ndarray, k_s: float, t: float
) -> np.ndarray:
    """Closed form for eq1 with H = 0.

    rho(t) = exp(-k_s t) (rho0 - QT rho0 QT) + QT rho0 QT. The triplet
    block is frozen and everything else decays at rate k_s.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    qt = system.qt
    frozen = qt @ rho0 @ qt
    return math.exp(-k_s * t) * (rho0 - frozen) + frozen


def analytic_eq2(
    system: SpinSystem, rho0: np.ndarray, k_s: float, t: float
) -> np.ndarray:
    """Closed form for eq2: the eq1 solution divided by its trace."""
    _check_unit_trace(rho0)
    r = analytic_eq1(system, rho0, k_s, t)
    return r / np.trace(r).real


def analytic_eq3(
    system: SpinSystem, rho0: np.ndarray, k_s: float, t: float
) -> np.ndarray:
    """Closed form for eq3: exponential-weight mixture of rho0 and rhoT.

    Undefined (SingularProjectionError) when rho0 has no triplet weight.
    """
    _check_unit_trace(rho0)
    w = mixture_weights(k_s, t)
    rho_t = conditional_projected_state(rho0, system.qt)
    return w.w0 * rho0 + w.wT * rho_t
