"""Observables and model-versus-model comparisons.

The quantities of interest are the surviving-ensemble singlet probability
under each model, the trace distance between the two trace-preserving
models, and the early-time display: the one-step finite difference of the
normalized eq1 flow against each candidate right-hand side. The finite
difference converges to the eq2 right-hand side as dt -> 0 while staying
a fixed distance away from the eq3 one whenever the initial state has
both singlet and triplet weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularProjectionError, StepSizeError, UnsupportedModelError
from .master import (
    Model,
    ModelSpec,
    TimeGrid,
    analytic_eq1,
    integrate,
    rhs_eq2,
    rhs_eq3,
)
from .spincore import PROJECTION_CUTOFF, SpinSystem

# early-time probe needs k_s*dt small enough that O(dt) terms dominate noise
MAX_PROBE_K_DT = 1e-3


def singlet_probability(system: SpinSystem, rho: np.ndarray) -> float:
    """Tr(QS rho) / Tr(rho); the division makes sub-normalized states usable."""
    tr = np.trace(rho).real
    if tr <= PROJECTION_CUTOFF:
        raise ValueError(f"state trace {tr:.3e} too small to normalize")
    return float(np.einsum("ij,ji->", system.qs, rho).real / tr)


def effective_rate(system: SpinSystem, rho: np.ndarray, k_s: float) -> float:
    """Instantaneous survivor decay rate k_s * Tr(QT rho QT) of the eq2 flow."""
    qt = system.qt
    return float(k_s * np.trace(qt @ rho @ qt).real)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """(1/2) sum |eigenvalues| of the Hermitian difference rho1 - rho2."""
    if rho1.shape != rho2.shape:
        raise ValueError(f"shape mismatch: {rho1.shape} vs {rho2.shape}")
    diff = rho1 - rho2
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


@dataclass(frozen=True)
class ComparisonReport:
    """Per-recorded-time comparison of the three models.

    ps_eq3 and dist_eq2_eq3 are NaN throughout when the mixture model is
    undefined for the initial state (no triplet weight) or when a
    Hamiltonian is present. ps_eq1norm is NaN at any point where the eq1
    trace has decayed below the normalization cutoff.
    """

    times: np.ndarray
    trace_eq1: np.ndarray
    ps_eq1norm: np.ndarray
    ps_eq2: np.ndarray
    ps_eq3: np.ndarray
    dist_eq2_eq3: np.ndarray
    effective_rate_eq2: np.ndarray

    @property
    def eq3_defined(self) -> bool:
        return bool(np.isfinite(self.ps_eq3).all())


@dataclass(frozen=True)
class EarlyTimeReport:
    """One-step derivative probe at t = 0.

    fd_derivative is [analytic_eq1(dt)/trace - rho0]/dt. defect_eq2 and
    defect_eq3 are max-entry distances of that probe from the respective
    right-hand sides; the eq3 entries are None when the mixture model is
    undefined for rho0. recombined_fraction_x is the ensemble fraction
    lost during the first step, 1 - Tr(analytic_eq1(dt)).
    """

    fd_derivative: np.ndarray
    rhs2_at_0: np.ndarray
    rhs3_at_0: np.ndarray | None
    defect_eq2: float
    defect_eq3: float | None
    recombined_fraction_x: float


def compare_models(
    rho0: np.ndarray, spec: ModelSpec, grid: TimeGrid
) -> ComparisonReport:
    """Integrate every applicable model from rho0 and tabulate observables."""
    system = spec.system
    sol1 = integrate(Model.EQ1_TRACED, rho0, spec, grid)
    sol2 = integrate(Model.EQ2_NORMALIZED, rho0, spec, grid)
    qt = system.qt
    eq3_defined = (
        spec.hamiltonian is None
        and np.trace(qt @ rho0 @ qt).real > PROJECTION_CUTOFF
    )
    sol3 = (
        integrate(Model.EQ3_MIXTURE, rho0, spec, grid) if eq3_defined else None
    )

    n = len(sol1.times)
    trace_eq1 = np.array([np.trace(s).real for s in sol1.states])
    ps_eq1norm = np.full(n, np.nan)
    for i, s in enumerate(sol1.states):
        if trace_eq1[i] > PROJECTION_CUTOFF:
            ps_eq1norm[i] = singlet_probability(system, s)
    ps_eq2 = np.array([singlet_probability(system, s) for s in sol2.states])
    eff_rate = np.array(
        [effective_rate(system, s, spec.k_s) for s in sol2.states]
    )
    ps_eq3 = np.full(n, np.nan)
    dist = np.full(n, np.nan)
    if sol3 is not None:
        for i, (s2, s3) in enumerate(zip(sol2.states, sol3.states)):
            ps_eq3[i] = singlet_probability(system, s3)
            dist[i] = trace_distance(s2, s3)
    return ComparisonReport(
        times=sol1.times,
        trace_eq1=trace_eq1,
        ps_eq1norm=ps_eq1norm,
        ps_eq2=ps_eq2,
        ps_eq3=ps_eq3,
        dist_eq2_eq3=dist,
        effective_rate_eq2=eff_rate,
    )


def early_time_check(rho0: np.ndarray, spec: ModelSpec, dt: float) -> EarlyTimeReport:
    """Finite-difference derivative of the normalized flow versus each model.

    Uses the closed-form eq1 flow, not the integrator, so the probe is
    independent of the integration machinery it is meant to arbitrate.
    """
    if spec.hamiltonian is not None:
        raise UnsupportedModelError("early-time probe requires H absent")
    if spec.k_s * dt > MAX_PROBE_K_DT:
        raise StepSizeError(
            f"k_s*dt = {spec.k_s * dt:.4g} exceeds {MAX_PROBE_K_DT} for the probe"
        )
    system = spec.system
    r1 = analytic_eq1(system, rho0, spec.k_s, dt)
    trace = np.trace(r1).real
    fd = (r1 / trace - rho0) / dt
    rhs2 = rhs_eq2(rho0, spec)
    defect2 = float(np.abs(fd - rhs2).max())
    try:
        rhs3 = rhs_eq3(rho0, spec)
        defect3 = float(np.abs(fd - rhs3).max())
    except SingularProjectionError:
        rhs3 = None
        defect3 = None
    return EarlyTimeReport(
        fd_derivative=fd,
        rhs2_at_0=rhs2,
        rhs3_at_0=rhs3,
        defect_eq2=defect2,
        defect_eq3=defect3,
        recombined_fraction_x=float(1.0 - trace),
    )
