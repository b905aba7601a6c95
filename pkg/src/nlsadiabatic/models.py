"""Nonlinear Hamiltonians and their classical counterparts.

Every model supplies the total energy ``E(psi)`` (defined for unnormalized
vectors so that functional derivatives make sense), the operator action
``H(psi) psi = dE/d<psi|`` and, through the gauge reduction, a classical
Hamiltonian ``H_cl(Q, P)`` with gradients and Hessian. Canonical vectors are
ordered ``z = (Q, P)`` and obey ``dQ/dt = dH/dP``, ``dP/dt = -dH/dQ``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import CoordinateSingular, NonHermitian
from .state import ProjectiveCoords, reconstruct

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

POLE_GUARD = 1e-9
HESSIAN_STEP = 1e-5


class Model(ABC):
    """Contract for a gauge-invariant nonlinear Hamiltonian on ``n_levels`` levels."""

    n_levels: int

    @abstractmethod
    def apply(self, psi, R) -> np.ndarray:
        """``H(psi, psi*, R) psi``."""

    @abstractmethod
    def energy(self, psi, R) -> float:
        """Total energy; not ``<psi|H|psi>`` unless the model is linear."""

    def rhs(self, psi, R) -> np.ndarray:
        return -1j * self.apply(psi, R)

    def chemical_potential(self, psi, R) -> float:
        """``<psi|H(psi)|psi>``: the eigenvalue at a stationary state."""
        psi = np.asarray(psi, dtype=complex)
        return float(np.vdot(psi, self.apply(psi, R)).real)

    # -- classical side -------------------------------------------------
    @property
    def dim(self) -> int:
        return self.n_levels - 1

    def _phi(self, z):
        z = np.asarray(z, dtype=float)
        d = self.dim
        Q, P = z[:d], z[d:]
        if np.any(Q < POLE_GUARD) or 1.0 - Q.sum() < POLE_GUARD:
            raise CoordinateSingular(f"populations {Q} touch a pole of the chart")
        rest = np.sqrt(1.0 - Q.sum())
        return np.append(np.sqrt(Q) * np.exp(1j * P), rest), Q

    def classical_hamiltonian(self, z, R) -> float:
        z = np.asarray(z, dtype=float)
        d = self.dim
        psi = reconstruct(ProjectiveCoords(z[:d], z[d:])).amplitudes
        return self.energy(psi, R)

    def grad(self, z, R) -> np.ndarray:
        """``(dH/dQ, dH/dP)`` from the operator action (chain rule through psi)."""
        phi, Q = self._phi(z)
        h = self.apply(phi, R)
        k = phi[:-1].conj() * h[:-1]
        dH_dP = 2.0 * k.imag
        dH_dQ = k.real / Q - h[-1].real / phi[-1].real
        return np.concatenate([dH_dQ, dH_dP])

    def hessian(self, z, R) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = z.size
        out = np.empty((n, n))
        for i in range(n):
            dz = np.zeros(n)
            dz[i] = HESSIAN_STEP
            out[:, i] = (self.grad(z + dz, R) - self.grad(z - dz, R)) / (2 * HESSIAN_STEP)
        return 0.5 * (out + out.T)

    def grad_R(self, z, R, step: float = 1e-6) -> np.ndarray:
        """Derivative of the gradient with respect to the control parameter."""
        return (self.grad(z, R + step) - self.grad(z, R - step)) / (2 * step)

    def flow(self, z, R) -> np.ndarray:
        g = self.grad(z, R)
        d = self.dim
        return np.concatenate([g[d:], -g[:d]])


# ---------------------------------------------------------------------------
# nonlinear two-level model
# ---------------------------------------------------------------------------

def two_level_apply(psi, R, c, v):
    """``[(R/2) sz - (c/2)<sz> sz + (v/2) sx] psi``."""
    a, b = np.asarray(psi, dtype=complex)
    sz = abs(a) ** 2 - abs(b) ** 2
    d = 0.5 * (R - c * sz)
    return np.array([d * a + 0.5 * v * b, 0.5 * v * a - d * b])


def two_level_energy(psi, R, c, v):
    a, b = np.asarray(psi, dtype=complex)
    sx = 2.0 * (np.conj(a) * b).real
    sz = abs(a) ** 2 - abs(b) ** 2
    return float(0.5 * v * sx + 0.5 * R * sz - 0.25 * c * sz ** 2)


def two_level_hcl(q, p, R, c, v):
    """Classical Hamiltonian of the two-level model; vectorized."""
    p = np.asarray(p, dtype=float)
    s = 2 * p - 1
    return v * np.sqrt(np.clip(p * (1 - p), 0.0, None)) * np.cos(q) + 0.5 * R * s - 0.25 * c * s ** 2


def _check_interior(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < POLE_GUARD) or np.any(p > 1 - POLE_GUARD):
        raise CoordinateSingular("p at a pole of the (q, p) chart; integrate the quantum form")


def two_level_grad(q, p, R, c, v):
    """``(dH/dq, dH/dp)``; raises CoordinateSingular at the poles."""
    _check_interior(p)
    p = np.asarray(p, dtype=float)
    w = np.sqrt(p * (1 - p))
    dq = -v * w * np.sin(q)
    dp = v * (1 - 2 * p) * np.cos(q) / (2 * w) + R - c * (2 * p - 1)
    return dq, dp


def two_level_hessian(q, p, R, c, v):
    """``(H_qq, H_qp, H_pp)``; vectorized."""
    _check_interior(p)
    p = np.asarray(p, dtype=float)
    w = np.sqrt(p * (1 - p))
    h_qq = -v * w * np.cos(q)
    h_qp = -v * (1 - 2 * p) / (2 * w) * np.sin(q)
    h_pp = -v * np.cos(q) / (4 * w ** 3) - 2 * c
    return h_qq, h_qp, h_pp


@dataclass(frozen=True)
class TwoLevelModel(Model):
    """Two-mode mean-field model: interaction ``c``, coupling ``v``, bias ``R``."""

    c: float
    v: float = 1.0
    n_levels: int = field(default=2, init=False)

    def __post_init__(self):
        if not np.isfinite(self.c) or self.c < 0:
            raise ValueError(f"interaction c must be >= 0, got {self.c}")
        if not np.isfinite(self.v) or self.v <= 0:
            raise ValueError(f"coupling v must be > 0, got {self.v}")

    def apply(self, psi, R):
        return two_level_apply(psi, R, self.c, self.v)

    def energy(self, psi, R):
        return two_level_energy(psi, R, self.c, self.v)

    def classical_hamiltonian(self, z, R):
        z = np.asarray(z, dtype=float)
        return float(two_level_hcl(z[1], z[0], R, self.c, self.v))

    def grad(self, z, R):
        z = np.asarray(z, dtype=float)
        dq, dp = two_level_grad(z[1], z[0], R, self.c, self.v)
        return np.array([dp, dq], dtype=float)

    def hessian(self, z, R):
        z = np.asarray(z, dtype=float)
        h_qq, h_qp, h_pp = two_level_hessian(z[1], z[0], R, self.c, self.v)
        return np.array([[h_pp, h_qp], [h_qp, h_qq]], dtype=float)

    def grad_R(self, z, R, step=None):
        return np.array([1.0, 0.0])

    def linear_part(self, R) -> np.ndarray:
        """The model's Hamiltonian matrix with the interaction switched off."""
        return 0.5 * R * SIGMA_Z + 0.5 * self.v * SIGMA_X

    def mean_field_matrix(self, psi, R) -> np.ndarray:
        a, b = np.asarray(psi, dtype=complex)
        sz = abs(a) ** 2 - abs(b) ** 2
        return 0.5 * (R - self.c * sz) * SIGMA_Z + 0.5 * self.v * SIGMA_X

    @staticmethod
    def mirror(psi):
        """Image of a state under the symmetry ``(q, p, R) -> (-q, 1 - p, -R)``: swap the modes."""
        a, b = np.asarray(psi, dtype=complex)
        return np.array([b, a])


# ---------------------------------------------------------------------------
# linear N-level model
# ---------------------------------------------------------------------------

def check_hermitian(matrix, tol: float = 1e-12) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonHermitian(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise NonHermitian(f"max |H - H^dagger| = {dev:.3e} exceeds {tol:.0e}")
    return m


def linear_apply(psi, matrix):
    m = check_hermitian(matrix)
    return m @ np.asarray(psi, dtype=complex)


class LinearModel(Model):
    """``H(R) = H0 + R * H1`` with Hermitian matrices."""

    def __init__(self, matrix, r_matrix=None):
        self.matrix = check_hermitian(matrix)
        self.r_matrix = (np.zeros_like(self.matrix) if r_matrix is None
                         else check_hermitian(r_matrix))
        if self.r_matrix.shape != self.matrix.shape:
            raise ValueError("matrix and r_matrix shapes differ")
        self.n_levels = self.matrix.shape[0]
        if self.n_levels < 2:
            raise ValueError("need at least two levels")

    @classmethod
    def two_level(cls, v: float = 1.0) -> "LinearModel":
        """The ``c = 0`` two-level model: ``(R/2) sz + (v/2) sx``."""
        return cls(0.5 * v * SIGMA_X, 0.5 * SIGMA_Z)

    def hamiltonian(self, R) -> np.ndarray:
        return self.matrix + R * self.r_matrix

    def apply(self, psi, R):
        return self.hamiltonian(R) @ np.asarray(psi, dtype=complex)

    def energy(self, psi, R):
        psi = np.asarray(psi, dtype=complex)
        return float(np.vdot(psi, self.hamiltonian(R) @ psi).real)

    def linear_part(self, R):
        return self.hamiltonian(R)

    def mean_field_matrix(self, psi, R):
        return self.hamiltonian(R)

    def eigh(self, R):
        return np.linalg.eigh(self.hamiltonian(R))
