"""Geometric phase and canonical action of closed orbits.

Conventions (two-level, gauge on the last level):

* ``gamma`` is the Aharonov-Anandan phase, the integral of
  ``<Phi|i d/dt|Phi> = -Q . dP/dt`` over one period. It is reported unwrapped
  in the working gauge and also modulo ``2 pi`` (the gauge-free part).
* ``loop_area = -oint Q dP`` is the signed area of the orbit in the
  ``(P, Q)`` plane; for librations it equals ``gamma`` exactly.
* the action is ``I = (gamma / 2 pi) mod 1``. In the linear limit this is the
  occupation of the upper level, and librations around an energy minimum give
  the usual positive area over ``2 pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, evolve_quantum, find_period
from .errors import DegenerateSpectrum, NotClosed, UnsupportedTopology
from .models import LinearModel, Model
from .state import StateVector, _gauge

TWO_PI = 2.0 * math.pi
CLOSURE_TOL = 1e-6
N_SAMPLES = 1024
CONVENTION = "I = (gamma/2pi) mod 1; gamma = -oint Q dP in the last-level gauge"


def _psi(state):
    psi = np.asarray(state.amplitudes if isinstance(state, StateVector) else state, dtype=complex)
    return psi / np.linalg.norm(psi)


def closure_error(psi_start, psi_end) -> float:
    """Frobenius distance between the projectors of two states."""
    a, b = _psi(psi_start), _psi(psi_end)
    return float(np.linalg.norm(np.outer(a, a.conj()) - np.outer(b, b.conj())))


def _check_closed(traj: Trajectory, closure_tol):
    err = closure_error(traj.states[0], traj.states[-1])
    if err > closure_tol:
        raise NotClosed(f"orbit does not close: projector distance {err:.3e} > {closure_tol:.0e}")
    return err


def aa_phase(traj: Trajectory, closure_tol: float = CLOSURE_TOL) -> float:
    """AA phase of a trajectory spanning exactly one period (ledger quadrature)."""
    if len(traj) < 2:
        return 0.0
    _check_closed(traj, closure_tol)
    return float(traj.aa[-1] - traj.aa[0])


def pancharatnam_phase(traj: Trajectory) -> float:
    """Gauge-free AA phase modulo ``2 pi``: ``arg<psi(0)|psi(tau)> - dynamical phase``."""
    total = np.angle(np.vdot(traj.states[0], traj.states[-1]))
    return float(np.mod(total - (traj.dyn[-1] - traj.dyn[0]), TWO_PI))


def loop_integral(times, states, gauge_index: int | None = None):
    """``(-oint Q . dP, winding)`` over one closed, uniformly sampled period.

    ``states`` holds ``M + 1`` samples with the last one the return point.
    Using ``sum_k Q_k dP_k = Im<psi|dpsi> - d arg psi_g`` the integral becomes
    ``-oint Im<psi~|dpsi~> + 2 pi m`` with ``psi~ = exp(-i theta t / tau) psi``
    smooth and periodic, so the spectral quadrature keeps its accuracy on
    orbits that pass through or near a pole. Only the integer ``m`` (the
    branch of the unwrapped gauge phase) depends on the chart.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(states, dtype=complex)
    psi = psi / np.linalg.norm(psi, axis=1, keepdims=True)
    M = times.size - 1
    if M < 4:
        raise ValueError("need at least 5 samples over the period")
    tau = times[-1] - times[0]
    dt = np.diff(times)
    if np.max(np.abs(dt - tau / M)) > 1e-9 * max(tau, 1.0):
        raise ValueError("loop_integral expects uniformly spaced samples")
    n = psi.shape[1]
    g = _gauge(n, gauge_index)

    # smooth part
    theta = float(np.angle(np.vdot(psi[0], psi[M])))
    s = times[:M] - times[0]
    tilde = psi[:M] * np.exp(-1j * theta * s / tau)[:, None]
    k = np.fft.fftfreq(M, d=tau / M) * TWO_PI
    if M % 2 == 0:
        k[M // 2] = 0.0
    dtilde = np.fft.ifft(1j * k[:, None] * np.fft.fft(tilde, axis=0), axis=0)
    smooth = -tau * float(np.mean(np.imag(np.sum(np.conj(tilde) * dtilde, axis=1))))

    # branch: total turn of the gauge phase against theta; samples on the gauge pole are skipped
    ok = np.abs(psi[:, g]) ** 2 > 1e-24
    arg_g = np.unwrap(np.angle(psi[ok, g]))
    if ok[0] and ok[M] and arg_g.size > 1:
        m = np.rint((arg_g[-1] - arg_g[0] - theta) / TWO_PI)
    else:
        m = 0.0

    # winding of the relative phases, borrowing neighbours on the pole
    others = np.delete(psi, g, axis=1)
    rel = np.angle(others) - np.angle(psi[:, [g]])
    if not ok.any():
        return 0.0, np.zeros(n - 1, dtype=int)
    if not ok.all():
        idx = np.flatnonzero(ok)
        rel = rel[idx[np.abs(np.arange(M + 1)[:, None] - idx[None, :]).argmin(axis=1)]]
    P = np.unwrap(rel, axis=0)
    winding = np.rint((P[-1] - P[0]) / TWO_PI).astype(int)
    return smooth + TWO_PI * m, winding


def shoelace_area(Q, P) -> float:
    """Signed polygon area in the ``(P, Q)`` plane (counter-clockwise positive)."""
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    return 0.5 * float(np.sum(P * np.roll(Q, -1) - np.roll(P, -1) * Q))


def action_from_phase(gamma: float) -> float:
    I = float(np.mod(gamma / TWO_PI, 1.0))
    # rounding noise around a whole number of turns is a degenerate orbit, not I = 1
    return 0.0 if min(I, 1.0 - I) < 1e-12 else I


@dataclass(frozen=True, eq=False)
class Orbit:
    trajectory: Trajectory
    tau: float
    gamma_aa: float         # ledger value, unwrapped
    gamma_loop: float       # -oint Q dP from the samples
    gamma_mod: float        # gauge-free value in [0, 2 pi)
    action: float
    kind: str               # libration | rotation
    winding: int
    omega: float            # angle rate 2 pi / tau
    loop_area: float
    orientation: int        # +1 counter-clockwise in (P, Q)
    closure: float

    def report(self) -> dict:
        return {
            "tau": self.tau, "I": self.action, "gamma_aa": self.gamma_aa,
            "gamma_aa_mod_2pi": self.gamma_mod, "gamma_loop": self.gamma_loop,
            "kind": self.kind, "winding": self.winding, "omega": self.omega,
            "loop_area": self.loop_area, "orientation": self.orientation,
            "closure_error": self.closure, "convention": CONVENTION,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.report(), sort_keys=True, indent=2) + "\n")


def orbit_from_trajectory(traj: Trajectory, closure_tol: float = CLOSURE_TOL,
                          gauge_index: int | None = None) -> Orbit:
    closure = _check_closed(traj, closure_tol)
    tau = float(traj.times[-1] - traj.times[0])
    gamma = float(traj.aa[-1] - traj.aa[0])
    loop, winding = loop_integral(traj.times, traj.states, gauge_index)
    w = int(winding[0]) if winding.size == 1 else int(np.abs(winding).max())
    kind = "libration" if np.all(winding == 0) else "rotation"
    return Orbit(
        trajectory=traj, tau=tau, gamma_aa=gamma, gamma_loop=loop,
        gamma_mod=pancharatnam_phase(traj), action=action_from_phase(loop),
        kind=kind, winding=w, omega=TWO_PI / tau, loop_area=loop,
        orientation=1 if loop >= 0 else -1, closure=closure)


def compute_orbit(model: Model, initial, R, config: IntegratorConfig | None = None,
                  n_samples: int = N_SAMPLES, closure_tol: float = CLOSURE_TOL,
                  max_time: float = 1e3, gauge_index: int | None = None) -> Orbit:
    """Detect the period of the orbit through ``initial`` and sample it uniformly."""
    config = config or IntegratorConfig()
    psi0 = _psi(initial)
    tau = find_period(model, psi0, R, config, max_time=max_time, closure_tol=closure_tol)
    times = np.linspace(0.0, tau, n_samples + 1)
    traj = evolve_quantum(psi0, model, R, (0.0, tau), config, t_eval=times)
    return orbit_from_trajectory(traj, closure_tol, gauge_index)


def action(orbit, single_action: bool = False, closure_tol: float = CLOSURE_TOL) -> float:
    """Canonical action ``I`` of a closed orbit (an Orbit or a one-period Trajectory)."""
    if isinstance(orbit, Trajectory):
        if orbit.states.shape[1] > 2 and not single_action:
            raise UnsupportedTopology("actions of N > 2 orbits need a single-action cyclic state")
        if len(orbit) < 2 or np.ptp(orbit.aa) == 0.0:
            return 0.0
        orbit = orbit_from_trajectory(orbit, closure_tol)
    if orbit.trajectory.states.shape[1] > 2 and not single_action:
        raise UnsupportedTopology("actions of N > 2 orbits need a single-action cyclic state")
    return orbit.action


def linear_actions(state, model: LinearModel, R=0.0, spacing_floor: float = 1e-10) -> np.ndarray:
    """``I_n = |c_n|^2`` on the eigenlevels, highest energy first; the lowest level is the gauge."""
    psi = _psi(state)
    w, U = np.linalg.eigh(model.hamiltonian(R))
    if np.min(np.diff(w)) < spacing_floor:
        raise DegenerateSpectrum(f"level spacing {np.min(np.diff(w)):.3e} below {spacing_floor:.0e}")
    c = U.conj().T @ psi
    pops = np.abs(c[::-1]) ** 2
    return pops[:-1]
