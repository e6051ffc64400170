"""Spin Hilbert space, projectors and density matrices for a radical pair.

The system is two electron spin-1/2 sites followed by ``n_nuclei`` spin-1/2
nuclei, so dim = 4 * 2**n_nuclei. States live in the lexicographic product
basis with spin-up ordered before spin-down; for the bare pair (dim 4) the
order is ``|uu>, |ud>, |du>, |dd>``.

The electron-pair singlet projector is built algebraically,

    QS = I/4 - S1.S2,        QT = I - QS,

acting as the identity on every nuclear site. rank(QS) = 2**n_nuclei.
Building QS from the spin operators rather than from an explicit singlet
ket keeps the projector identities (idempotency, orthogonality,
completeness) an actual test surface instead of a tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError, SingularProjectionError

# dim = 4 * 2**10 = 4096 is the largest space the dense representation
# is expected to handle.
MAX_NUCLEI = 10

# weight below which a conditional projection is treated as undefined
PROJECTION_CUTOFF = 1e-12

HERMITICITY_TOL = 1e-10

# spin-1/2 operators, hbar = 1
_SPIN_HALF = {
    "x": np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex),
    "y": np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex),
    "z": np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex),
}

PRESETS = ("S", "T0", "Tplus", "Tminus", "ud", "du", "mixed")

_SQ2 = np.sqrt(2.0)

# electron-pair kets in the |uu>, |ud>, |du>, |dd> basis
_ELECTRON_KETS = {
    "S": np.array([0.0, 1.0 / _SQ2, -1.0 / _SQ2, 0.0], dtype=complex),
    "T0": np.array([0.0, 1.0 / _SQ2, 1.0 / _SQ2, 0.0], dtype=complex),
    "Tplus": np.array([1.0, 0.0, 0.0, 0.0], dtype=complex),
    "Tminus": np.array([0.0, 0.0, 0.0, 1.0], dtype=complex),
    "ud": np.array([0.0, 1.0, 0.0, 0.0], dtype=complex),
    "du": np.array([0.0, 0.0, 1.0, 0.0], dtype=complex),
}


class SpinSystem:
    """Operator workspace for one radical pair.

    Caches the identity and the singlet/triplet projectors; the cached
    arrays are marked read-only so they can be shared freely.
    """

    def __init__(self, n_nuclei: int = 0):
        if n_nuclei < 0:
            raise ConfigError(f"n_nuclei must be non-negative, got {n_nuclei}")
        if n_nuclei > MAX_NUCLEI:
            raise CapacityError(
                f"n_nuclei={n_nuclei} exceeds the cap of {MAX_NUCLEI} "
                f"(dim 4*2**{MAX_NUCLEI})"
            )
        self.n_nuclei = int(n_nuclei)
        self.n_sites = 2 + self.n_nuclei
        self.dim = 4 * 2 ** self.n_nuclei
        self.identity = np.eye(self.dim, dtype=complex)
        dot = sum(
            spin_operator(self, 0, ax) @ spin_operator(self, 1, ax) for ax in "xyz"
        )
        self.qs = 0.25 * self.identity - dot
        self.qt = self.identity - self.qs
        for m in (self.identity, self.qs, self.qt):
            m.flags.writeable = False

    def __repr__(self) -> str:
        return f"SpinSystem(n_nuclei={self.n_nuclei}, dim={self.dim})"


def build_spin_system(n_nuclei: int = 0) -> SpinSystem:
    """Construct the workspace for two electrons plus n_nuclei spin-1/2 nuclei."""
    return SpinSystem(n_nuclei)


def spin_operator(system: SpinSystem, site: int, axis: str) -> np.ndarray:
    """Spin component ``axis`` at ``site``, embedded in the full space.

    Sites are ordered electron 1, electron 2, then nuclei. The operator is
    the single-site spin matrix tensored with identities elsewhere.
    """
    if not 0 <= site < system.n_sites:
        raise IndexError(f"site {site} out of range for {system.n_sites} sites")
    if axis not in _SPIN_HALF:
        raise ConfigError(f"axis must be one of x, y, z, got {axis!r}")
    op = np.eye(1, dtype=complex)
    for k in range(system.n_sites):
        op = np.kron(op, _SPIN_HALF[axis] if k == site else np.eye(2, dtype=complex))
    return op


def singlet_projector(system: SpinSystem) -> np.ndarray:
    return system.qs


def triplet_projector(system: SpinSystem) -> np.ndarray:
    return system.qt


def density_from_preset(system: SpinSystem, preset: str) -> np.ndarray:
    """Initial density matrix for a named electron state.

    The electron pair is pure (or maximally mixed for ``mixed``); the
    nuclear register is always maximally mixed.
    """
    if preset == "mixed":
        rho_e = np.eye(4, dtype=complex) / 4.0
    elif preset in _ELECTRON_KETS:
        ket = _ELECTRON_KETS[preset]
        rho_e = np.outer(ket, ket.conj())
    else:
        raise ConfigError(
            f"unknown initial-state preset {preset!r}; expected one of {PRESETS}"
        )
    d_nuc = system.dim // 4
    return np.kron(rho_e, np.eye(d_nuc, dtype=complex) / d_nuc)


def conditional_projected_state(rho: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Normalized projection Q rho Q / Tr{Q rho Q}.

    Raises SingularProjectionError when the projection weight is at or
    below PROJECTION_CUTOFF, and rejects q that is not a Hermitian
    idempotent within tolerance.
    """
    if np.abs(q - q.conj().T).max() > HERMITICITY_TOL:
        raise ConfigError("q is not Hermitian within tolerance")
    if np.abs(q @ q - q).max() > HERMITICITY_TOL:
        raise ConfigError("q is not idempotent within tolerance")
    m = q @ rho @ q
    weight = np.trace(m).real
    if weight <= PROJECTION_CUTOFF:
        raise SingularProjectionError(
            f"projection weight {weight:.3e} at or below cutoff {PROJECTION_CUTOFF:.0e}"
        )
    return m / weight


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_defect: float
    min_eigenvalue: float
    trace: float
    ok: bool


def validate_density(rho: np.ndarray, tol: float = 1e-10) -> ValidationReport:
    """Check hermiticity, positivity and trace of a candidate density matrix.

    ok means: max entrywise |rho - rho^dag| <= tol, smallest eigenvalue of
    the Hermitian part >= -tol, and 0 < Tr(rho) <= 1 + tol.
    """
    defect = float(np.abs(rho - rho.conj().T).max())
    herm = 0.5 * (rho + rho.conj().T)
    min_eig = float(np.linalg.eigvalsh(herm)[0])
    trace = float(np.trace(rho).real)
    ok = defect <= tol and min_eig >= -tol and 0.0 < trace <= 1.0 + tol
    return ValidationReport(defect, min_eig, trace, ok)


def zeeman_hamiltonian(system: SpinSystem, omega1: float, omega2: float) -> np.ndarray:
    """H = omega1 * S1z + omega2 * S2z (plumbing for coherent-drift runs)."""
    return omega1 * spin_operator(system, 0, "z") + omega2 * spin_operator(
        system, 1, "z"
    )
