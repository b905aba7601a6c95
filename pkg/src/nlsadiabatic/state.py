"""Quantum states, gauge reduction and canonical coordinates.

A state ``|Psi> = e^{i lam} |Phi>`` is split into an overall phase ``lam``
(the phase of the gauge component) and a projective state ``|Phi>`` described
by populations ``Q_k = |psi_k|^2`` and relative phases
``P_k = arg psi_k - arg psi_g`` of the non-gauge levels.

Level indices are zero-based; the default gauge level is the last one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GaugeSingular

NORM_TOL = 1e-12
GAUGE_FLOOR = 1e-14


def _gauge(n: int, gauge_index: int | None) -> int:
    if gauge_index is None:
        return n - 1
    g = int(gauge_index)
    if g < 0:
        g += n
    if not 0 <= g < n:
        raise IndexError(f"gauge_index {gauge_index} out of range for {n} levels")
    return g


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm vector of ``N >= 2`` complex amplitudes."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 2:
            raise ValueError("a state needs at least two levels")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.sqrt(np.vdot(amps, amps).real)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)

    @property
    def n_levels(self) -> int:
        return self.amplitudes.size

    def __len__(self):
        return self.amplitudes.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    # two-level aliases
    @property
    def a(self) -> complex:
        return complex(self.amplitudes[0])

    @property
    def b(self) -> complex:
        return complex(self.amplitudes[1])

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def projector(self) -> np.ndarray:
        """Gauge-invariant density matrix ``|Psi><Psi|``."""
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class ProjectiveCoords:
    """Populations ``Q`` and unwrapped phases ``P`` of the non-gauge levels."""

    Q: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float).reshape(-1)
        P = np.array(self.P, dtype=float).reshape(-1)
        if Q.shape != P.shape or Q.size < 1:
            raise ValueError("Q and P must be non-empty and of equal length")
        if np.any(Q < -NORM_TOL) or np.any(Q > 1 + NORM_TOL) or Q.sum() > 1 + NORM_TOL:
            raise ValueError(f"populations out of the simplex: {Q}")
        Q = np.clip(Q, 0.0, 1.0)
        Q.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.Q.size

    # two-level aliases: p = |a|^2, q = arg a - arg b
    @property
    def p(self) -> float:
        return float(self.Q[0])

    @property
    def q(self) -> float:
        return float(self.P[0])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.Q, self.P])

    @classmethod
    def from_vector(cls, z) -> "ProjectiveCoords":
        z = np.asarray(z, dtype=float)
        d = z.size // 2
        return cls(z[:d], z[d:])


@dataclass(frozen=True)
class PhaseLedger:
    """Overall phase split into its geometric and dynamical parts.

    ``lam`` is the unwrapped phase of the gauge component; ``aa_integrand_accum``
    accumulates ``<Phi|i d/dt|Phi>`` and ``dynamical_accum`` accumulates
    ``-<Phi|H|Phi>``. Their sum equals the change of ``lam``.
    """

    lam: float = 0.0
    aa_integrand_accum: float = 0.0
    dynamical_accum: float = 0.0

    def residual(self, lam0: float = 0.0) -> float:
        return self.lam - lam0 - self.aa_integrand_accum - self.dynamical_accum


def reduce(state, gauge_index: int | None = None, floor: float = GAUGE_FLOOR):
    """Split a state into projective coordinates and the overall phase.

    Returns ``(coords, lam)`` with ``lam = arg psi_g``.
    """
    psi = np.asarray(state.amplitudes if isinstance(state, StateVector) else state, dtype=complex)
    n = psi.size
    g = _gauge(n, gauge_index)
    if abs(psi[g]) ** 2 < floor:
        raise GaugeSingular(f"|psi_{g}|^2 = {abs(psi[g])**2:.3e} below floor {floor:.1e}")
    lam = float(np.angle(psi[g]))
    others = np.delete(psi, g)
    Q = np.abs(others) ** 2
    P = np.angle(others) - lam
    # keep P in (-pi, pi] at a single point; trajectories unwrap on their own
    P = np.angle(np.exp(1j * P))
    return ProjectiveCoords(Q, P), lam


def reconstruct(coords: ProjectiveCoords, overall_phase: float = 0.0,
                gauge_index: int | None = None) -> StateVector:
    n = coords.dim + 1
    g = _gauge(n, gauge_index)
    rest = max(0.0, 1.0 - float(coords.Q.sum()))
    others = np.sqrt(coords.Q) * np.exp(1j * (coords.P + overall_phase))
    psi = np.insert(others, g, np.sqrt(rest) * np.exp(1j * overall_phase))
    # absorb the <=1e-12 clipping slack so the result is exactly unit norm
    return StateVector.normalized(psi)


def aa_integrand(state, time_derivative, gauge_index: int | None = None,
                 floor: float = GAUGE_FLOOR) -> float:
    """``<Phi|i d/dt|Phi>`` for ``Phi = e^{-i arg psi_g} Psi`` (quantum side)."""
    psi = np.asarray(state, dtype=complex)
    dpsi = np.asarray(time_derivative, dtype=complex)
    g = _gauge(psi.size, gauge_index)
    if abs(psi[g]) ** 2 < floor:
        raise GaugeSingular(f"|psi_{g}|^2 below floor {floor:.1e}")
    lam_dot = (dpsi[g] / psi[g]).imag
    return float((1j * np.vdot(psi, dpsi)).real + lam_dot)


def canonical_aa_integrand(state, time_derivative, gauge_index: int | None = None,
                           floor: float = GAUGE_FLOOR) -> float:
    """The same rate from canonical coordinates: ``-Q . dP/dt``."""
    psi = np.asarray(state, dtype=complex)
    dpsi = np.asarray(time_derivative, dtype=complex)
    g = _gauge(psi.size, gauge_index)
    if abs(psi[g]) ** 2 < floor:
        raise GaugeSingular(f"|psi_{g}|^2 below floor {floor:.1e}")
    others = np.delete(psi, g)
    d_others = np.delete(dpsi, g)
    Q = np.abs(others) ** 2
    # Q_k dP_k/dt = Im(conj(psi_k) dpsi_k) - Q_k Im(dpsi_g / psi_g); finite as Q_k -> 0
    Q_dP = np.imag(others.conj() * d_others) - Q * (dpsi[g] / psi[g]).imag
    return float(-Q_dP.sum())


def bloch_vector(state) -> np.ndarray:
    """``(<sigma_x>, <sigma_y>, <sigma_z>)`` of a two-level state."""
    a, b = np.asarray(state, dtype=complex)[:2]
    ab = np.conj(a) * b
    return np.array([2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2])


def random_state(n: int, rng: np.random.Generator) -> StateVector:
    """Haar-random state."""
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    return StateVector.normalized(z)
