"""Three-outcome jump Monte Carlo for spin-selective recombination.

Each molecule carries its own state sigma. Over one step dt it either

  (i)   recombines through the singlet channel, probability
        pS = k_s dt Tr(QS sigma), and leaves the ensemble;
  (ii)  suffers a triplet projection, probability
        pT = k_s dt Tr(QT sigma), after which
        sigma <- QT sigma QT / Tr(QT sigma QT);
  (iii) survives untouched, probability p0 = 1 - pS - pT.

For a unit-trace state pS + pT = k_s dt regardless of sigma, so the
fraction of molecules that have never jumped decays as (1 - k_s dt)^n,
i.e. exp(-k_s t) in the continuum limit. Recombined molecules are kept as
tombstones with their recombination time.

Determinism contract: molecule i draws from its own stream, seeded as
SeedSequence(entropy=seed, spawn_key=(i,)) feeding numpy's default
generator. The ensemble is processed in fixed blocks of _BLOCK molecules
and block partials are reduced in block order, so results are bit
identical for a given config no matter how many workers execute the
blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, StepSizeError
from .master import ModelSpec, TimeGrid
from .spincore import conditional_projected_state

# first-order scheme sanity bound on the step
MAX_K_DT = 0.01

# fixed reduction granularity; part of the determinism contract
_BLOCK = 1024

_TRACE_TOL = 1e-6


@dataclass(frozen=True)
class JumpProbabilities:
    p0: float
    ps: float
    pt: float


@dataclass(frozen=True)
class MoleculeState:
    """Either an unrecombined state matrix or a recombination tombstone."""

    state: np.ndarray | None
    recombined_at: float | None = None

    @property
    def recombined(self) -> bool:
        return self.state is None

    @classmethod
    def unrecombined(cls, state: np.ndarray) -> "MoleculeState":
        return cls(state=state)

    @classmethod
    def make_recombined(cls, at_time: float) -> "MoleculeState":
        return cls(state=None, recombined_at=at_time)


@dataclass(frozen=True)
class TrajectoryConfig:
    n_traj: int
    dt: float
    t_max: float
    seed: int
    record_stride: int = 1

    def __post_init__(self):
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.dt <= 0 or self.t_max <= 0:
            raise ConfigError("dt and t_max must be positive")
        if self.dt > self.t_max:
            raise ConfigError(f"dt={self.dt} exceeds t_max={self.t_max}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in u64, got {self.seed}")
        if self.record_stride < 1:
            raise ConfigError(f"record_stride must be >= 1, got {self.record_stride}")

    @property
    def n_steps(self) -> int:
        return TimeGrid(self.t_max, self.dt, self.record_stride).n_steps

    def record_steps(self) -> list[int]:
        return TimeGrid(self.t_max, self.dt, self.record_stride).record_steps()


@dataclass(frozen=True)
class EnsembleEstimate:
    """Per-recorded-time statistics of a jump ensemble.

    Conditional quantities (w0_frac, p_singlet_nr and its standard error)
    are NaN, and rho_nr_est is None, at times where no molecule survives.
    rho_all_mean is the unnormalized ensemble mean with recombined
    molecules counted as the zero matrix; rho_all_sq_mean holds the
    matching entrywise mean of |entry|**2 for standard-error estimates.
    """

    times: np.ndarray
    n_unrec: np.ndarray
    survival_frac: np.ndarray
    survival_se: np.ndarray
    w0_frac: np.ndarray
    rho_nr_est: list
    p_singlet_nr: np.ndarray
    p_singlet_nr_se: np.ndarray
    rho_all_mean: list = field(default_factory=list)
    rho_all_sq_mean: list = field(default_factory=list)
    n_traj: int = 0


def molecule_stream(seed: int, index: int) -> np.random.Generator:
    """The per-molecule random stream; part of the determinism contract."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def jump_probabilities(
    system, sigma: np.ndarray, k_s: float, dt: float
) -> JumpProbabilities:
    """Branch probabilities for one step; requires k_s * dt <= 0.01."""
    if k_s * dt > MAX_K_DT:
        raise StepSizeError(
            f"k_s*dt = {k_s * dt:.4g} exceeds {MAX_K_DT}; refine the step"
        )
    tr = np.trace(sigma).real
    if abs(tr - 1.0) > _TRACE_TOL:
        raise ContractError(f"sigma trace {tr!r} deviates from 1 beyond {_TRACE_TOL}")
    ps = max(k_s * dt * np.einsum("ij,ji->", system.qs, sigma).real, 0.0)
    pt = max(k_s * dt * np.einsum("ij,ji->", system.qt, sigma).real, 0.0)
    return JumpProbabilities(1.0 - ps - pt, ps, pt)


def _propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) via the eigendecomposition of the Hermitian H."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def step_once(
    m: MoleculeState,
    spec: ModelSpec,
    dt: float,
    draw: float,
    t_now: float = 0.0,
) -> MoleculeState:
    """Advance one molecule by one step using a single uniform draw.

    The draw is tested against the thresholds in the fixed order
    [pS | pT | p0]. Tombstones pass through unchanged. In the survive
    branch the coherent drift exp(-i H dt) is applied when a Hamiltonian
    is present; pT > 0 guarantees the projection branch is well defined.
    """
    if m.recombined:
        return m
    sigma = m.state
    jp = jump_probabilities(spec.system, sigma, spec.k_s, dt)
    if draw < jp.ps:
        return MoleculeState.make_recombined(t_now + dt)
    if draw < jp.ps + jp.pt:
        return MoleculeState.unrecombined(
            conditional_projected_state(sigma, spec.system.qt)
        )
    if spec.hamiltonian is not None:
        u = _propagator(spec.hamiltonian, dt)
        sigma = u @ sigma @ u.conj().T
    return MoleculeState.unrecombined(sigma)


def _simulate_block(args) -> tuple:
    """Simulate molecules [lo, hi) and return per-record-point partials.

    Everything here must stay a pure function of the arguments: block
    partials are later reduced in block order and the result is part of
    the bit-for-bit determinism contract.
    """
    (rho0, qs, qt, ham, k_s, dt, n_steps, rec_steps, seed, lo, hi) = args
    b = hi - lo
    d = rho0.shape[0]
    states = np.repeat(rho0[None, :, :], b, axis=0)
    alive = np.ones(b, dtype=bool)
    ever_projected = np.zeros(b, dtype=bool)
    s0 = np.einsum("ij,ji->", qs, rho0).real
    t0 = np.einsum("ij,ji->", qt, rho0).real
    sing = np.full(b, s0)
    trip = np.full(b, t0)

    draws = np.empty((n_steps, b))
    for j in range(b):
        draws[:, j] = molecule_stream(seed, lo + j).random(n_steps)

    u_prop = _propagator(ham, dt) if ham is not None else None
    ks_dt = k_s * dt

    n_rec = len(rec_steps)
    alive_count = np.zeros(n_rec, dtype=np.int64)
    never_count = np.zeros(n_rec, dtype=np.int64)
    s_sum = np.zeros(n_rec)
    s2_sum = np.zeros(n_rec)
    state_sum = np.zeros((n_rec, d, d), dtype=complex)
    sq_sum = np.zeros((n_rec, d, d))

    def _accumulate(r: int) -> None:
        alive_count[r] = int(alive.sum())
        never_count[r] = int((alive & ~ever_projected).sum())
        s = sing[alive]
        s_sum[r] = s.sum()
        s2_sum[r] = (s * s).sum()
        sub = states[alive]
        state_sum[r] = sub.sum(axis=0)
        sq_sum[r] = (sub.real * sub.real + sub.imag * sub.imag).sum(axis=0)

    r = 0
    if rec_steps[r] == 0:
        _accumulate(r)
        r += 1
    for step in range(1, n_steps + 1):
        u = draws[step - 1]
        p_s = ks_dt * sing
        p_st = ks_dt * (sing + trip)
        recombined = alive & (u < p_s)
        projected = alive & ~recombined & (u < p_st)
        if recombined.any():
            alive &= ~recombined
        if projected.any():
            idx = np.flatnonzero(projected)
            sub = qt @ states[idx] @ qt
            w = np.einsum("pii->p", sub).real
            sub /= w[:, None, None]
            states[idx] = sub
            ever_projected[idx] = True
            sing[idx] = np.einsum("ij,pji->p", qs, sub).real
            trip[idx] = np.einsum("ij,pji->p", qt, sub).real
        if u_prop is not None:
            surv = alive & ~projected
            if surv.any():
                idx = np.flatnonzero(surv)
                sub = u_prop @ states[idx] @ u_prop.conj().T
                states[idx] = sub
                sing[idx] = np.einsum("ij,pji->p", qs, sub).real
                trip[idx] = np.einsum("ij,pji->p", qt, sub).real
        if r < n_rec and step == rec_steps[r]:
            _accumulate(r)
            r += 1
    return alive_count, never_count, s_sum, s2_sum, state_sum, sq_sum


def run_ensemble(
    rho0: np.ndarray,
    spec: ModelSpec,
    cfg: TrajectoryConfig,
    workers: int = 1,
) -> EnsembleEstimate:
    """Simulate cfg.n_traj independent molecules and aggregate statistics.

    Molecules are independent, so blocks may run on any number of worker
    processes; the fixed block decomposition and in-order reduction keep
    the output identical either way.
    """
    if spec.k_s * cfg.dt > MAX_K_DT:
        raise StepSizeError(
            f"k_s*dt = {spec.k_s * cfg.dt:.4g} exceeds {MAX_K_DT}; refine the step"
        )
    tr = np.trace(rho0).real
    if abs(tr - 1.0) > _TRACE_TOL:
        raise ContractError(f"rho0 trace {tr!r} deviates from 1 beyond {_TRACE_TOL}")

    n_steps = cfg.n_steps
    rec_steps = cfg.record_steps()
    base = (
        np.asarray(rho0, dtype=complex),
        np.asarray(spec.system.qs),
        np.asarray(spec.system.qt),
        None if spec.hamiltonian is None else np.asarray(spec.hamiltonian),
        spec.k_s,
        cfg.dt,
        n_steps,
        rec_steps,
        cfg.seed,
    )
    blocks = [
        base + (lo, min(lo + _BLOCK, cfg.n_traj))
        for lo in range(0, cfg.n_traj, _BLOCK)
    ]
    if workers <= 1 or len(blocks) == 1:
        partials = [_simulate_block(b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_simulate_block, blocks))

    n_rec = len(rec_steps)
    d = rho0.shape[0]
    alive_count = np.zeros(n_rec, dtype=np.int64)
    never_count = np.zeros(n_rec, dtype=np.int64)
    s_sum = np.zeros(n_rec)
    s2_sum = np.zeros(n_rec)
    state_sum = np.zeros((n_rec, d, d), dtype=complex)
    sq_sum = np.zeros((n_rec, d, d))
    for p in partials:
        alive_count += p[0]
        never_count += p[1]
        s_sum += p[2]
        s2_sum += p[3]
        state_sum += p[4]
        sq_sum += p[5]

    n = cfg.n_traj
    qs = spec.system.qs
    times = np.array([k * cfg.dt for k in rec_steps])
    survival = alive_count / n
    survival_se = np.sqrt(survival * (1.0 - survival) / n)
    w0_frac = np.full(n_rec, np.nan)
    p_nr = np.full(n_rec, np.nan)
    p_nr_se = np.full(n_rec, np.nan)
    rho_nr_est: list = []
    rho_all_mean: list = []
    rho_all_sq_mean: list = []
    for r in range(n_rec):
        m = alive_count[r]
        rho_all_mean.append(state_sum[r] / n)
        rho_all_sq_mean.append(sq_sum[r] / n)
        if m == 0:
            rho_nr_est.append(None)
            continue
        w0_frac[r] = never_count[r] / m
        est = state_sum[r] / m
        rho_nr_est.append(est)
        p_nr[r] = np.einsum("ij,ji->", qs, est).real
        if m > 1:
            var = max(s2_sum[r] - s_sum[r] ** 2 / m, 0.0) / (m - 1)
            p_nr_se[r] = math.sqrt(var / m)
        else:
            p_nr_se[r] = 0.0
    return EnsembleEstimate(
        times=times,
        n_unrec=alive_count,
        survival_frac=survival,
        survival_se=survival_se,
        w0_frac=w0_frac,
        rho_nr_est=rho_nr_est,
        p_singlet_nr=p_nr,
        p_singlet_nr_se=p_nr_se,
        rho_all_mean=rho_all_mean,
        rho_all_sq_mean=rho_all_sq_mean,
        n_traj=n,
    )


def unnormalized_mean(est: EnsembleEstimate, index: int) -> np.ndarray:
    """Ensemble mean with recombined molecules counted as the zero matrix.

    This is the estimator whose expectation is the eq1 solution, which is
    what makes the unraveling testably unbiased.
    """
    return est.rho_all_mean[index]


def unnormalized_se(est: EnsembleEstimate, index: int) -> np.ndarray:
    """Entrywise standard error of unnormalized_mean at a recorded time."""
    mean = est.rho_all_mean[index]
    sq = est.rho_all_sq_mean[index]
    var = np.maximum(sq - (mean.real**2 + mean.imag**2), 0.0)
    return np.sqrt(var / est.n_traj)
