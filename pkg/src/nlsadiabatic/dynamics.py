"""Time integration in the quantum and the canonical representation.

The quantum integrator evolves ``i d|psi>/dt = H|psi>`` together with two
phase accumulators (geometric ``<Phi|i d/dt|Phi>`` and dynamical
``-<Phi|H|Phi>``). The canonical integrator evolves ``(Q, P)`` under the
classical Hamiltonian and hands over to the quantum form whenever a
population comes close to a pole of the chart.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq, minimize_scalar

from .errors import CoordinateSingular, NotPeriodic, StepFailure
from .models import POLE_GUARD, Model, TwoLevelModel
from .state import GAUGE_FLOOR, ProjectiveCoords, StateVector, PhaseLedger, reconstruct

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "dop853"          # "dop853" (adaptive) or "rk4" (fixed step)
    rtol: float = 1e-10
    atol: float = 1e-12
    step: float = 1e-3              # rk4 step
    max_step: float = math.inf
    renormalize: bool = True
    pole_switch_threshold: float = 1e-6
    gauge_handoff: float = 1e-6

    def __post_init__(self):
        if self.method not in ("dop853", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0 or self.step <= 0 or self.max_step <= 0:
            raise ValueError("tolerances and steps must be positive")


def as_schedule(R) -> Callable[[float], float]:
    if callable(R):
        return R
    value = float(R)
    return lambda t: value


def _wrap_near(angle, reference):
    """``angle + 2 pi k`` closest to ``reference``."""
    return angle + TWO_PI * np.round((reference - angle) / TWO_PI)


def _reanchor(lam, aa, amp):
    """Move ``lam`` onto ``arg`` of the new gauge amplitude at a gauge switch.

    The gauge-fixed state jumps by a phase at a switch; ``lam`` and ``aa``
    take the same jump, which keeps the ledger identity and makes ``aa`` over a
    closed orbit equal to the single-gauge value modulo ``2 pi``.
    """
    new = float(_wrap_near(np.angle(amp), lam))
    return new, aa + (new - lam)


# ---------------------------------------------------------------------------
# fixed-step RK4 with the OdeSolver stepping interface
# ---------------------------------------------------------------------------

class _HermiteDense:
    def __init__(self, t0, t1, y0, y1, f0, f1):
        self.t_min, self.t_max = min(t0, t1), max(t0, t1)
        self.t0, self.h = t0, t1 - t0
        self.y0, self.y1, self.f0, self.f1 = y0, y1, f0, f1

    def __call__(self, t):
        # scalar t gives shape (n,), an array of times (n, len(t)), as scipy's dense output
        x = (np.asarray(t, dtype=float) - self.t0) / self.h
        out = np.multiply.outer
        return (out(self.y0, 2 * x**3 - 3 * x**2 + 1) + out(self.h * self.f0, x**3 - 2 * x**2 + x)
                + out(self.y1, -2 * x**3 + 3 * x**2) + out(self.h * self.f1, x**3 - x**2))


class _RK4:
    def __init__(self, fun, t0, y0, t_bound, h):
        self.fun, self.t, self.y, self.t_bound = fun, t0, np.array(y0, dtype=float), t_bound
        self.direction = 1.0 if t_bound >= t0 else -1.0
        self.h = abs(h)
        self.f = fun(t0, self.y)
        self.status = "running" if t_bound != t0 else "finished"
        self.step_size = None

    def step(self):
        t, y, f = self.t, self.y, self.f
        h = self.direction * min(self.h, abs(self.t_bound - t))
        k1 = f
        k2 = self.fun(t + h / 2, y + h / 2 * k1)
        k3 = self.fun(t + h / 2, y + h / 2 * k2)
        k4 = self.fun(t + h, y + h * k3)
        y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        self.t_old, self.y_old, self.f_old = t, y, f
        self.t = t + h
        if abs(self.t - self.t_bound) < 1e-12 * max(1.0, abs(self.t_bound)):
            self.t = self.t_bound
        self.y = y_new
        self.f = self.fun(self.t, y_new)
        self.step_size = abs(h)
        if self.t == self.t_bound:
            self.status = "finished"
        return None

    def dense_output(self):
        return _HermiteDense(self.t_old, self.t, self.y_old, self.y, self.f_old, self.f)


def _make_solver(fun, t0, y0, t_bound, config, first_step=None):
    if config.method == "rk4":
        return _RK4(fun, t0, y0, t_bound, config.step)
    if first_step is not None:
        first_step = min(first_step, abs(t_bound - t0))
        if first_step <= 0:
            first_step = None
    return DOP853(fun, t0, y0, t_bound, rtol=config.rtol, atol=config.atol,
                  max_step=config.max_step, first_step=first_step)


def _advance(solver):
    msg = solver.step()
    if solver.status == "failed":
        raise StepFailure(f"integration failed: {msg}", t_reached=solver.t)


def _first_crossing(fn, t_a, t_b, n_probe=8):
    """First root of ``fn`` on ``[t_a, t_b]`` where ``fn`` goes from <0 to >=0."""
    ts = np.linspace(t_a, t_b, n_probe + 1)
    vals = [fn(t) for t in ts]
    for i in range(n_probe):
        if vals[i] < 0 <= vals[i + 1]:
            if vals[i + 1] == 0:
                return ts[i + 1]
            return brentq(fn, ts[i], ts[i + 1], xtol=1e-14, rtol=1e-15)
    return None


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    R: np.ndarray
    states: np.ndarray          # (M, N) complex
    Q: np.ndarray               # (M, N-1)
    P: np.ndarray               # (M, N-1), unwrapped
    lam: np.ndarray
    aa: np.ndarray
    dyn: np.ndarray
    energies: np.ndarray
    quantum_mask: np.ndarray    # True where the sample came from the quantum form
    norm_drift: float = 0.0     # max | |psi|^2 - 1 | before renormalization
    segments: list = field(default_factory=list, repr=False)

    def __len__(self):
        return self.times.size

    def state(self, i) -> StateVector:
        return StateVector.normalized(self.states[i])

    def coords(self, i) -> ProjectiveCoords:
        return ProjectiveCoords(np.clip(self.Q[i], 0, 1), self.P[i])

    def ledger(self, i) -> PhaseLedger:
        return PhaseLedger(float(self.lam[i]), float(self.aa[i]), float(self.dyn[i]))

    def ledger_residual(self) -> np.ndarray:
        return (self.lam - self.lam[0]) - (self.aa - self.aa[0]) - (self.dyn - self.dyn[0])

    def state_at(self, t) -> np.ndarray:
        """Dense state at time ``t`` (requires ``keep_dense``)."""
        for t0, t1, fn in self.segments:
            if min(t0, t1) <= t <= max(t0, t1):
                return fn(t)
        raise ValueError(f"t = {t} outside the dense record")

    def to_csv(self, path, metadata: dict | None = None):
        """CSV with a leading ``# {json}`` metadata line."""
        d = self.Q.shape[1]
        header = ["t", "R"] + [f"Q{k+1}" for k in range(d)] + [f"P{k+1}" for k in range(d)]
        header += ["lambda", "aa_phase", "dynamical_phase", "energy"]
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(metadata or {}, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                row = [self.times[i], self.R[i], *self.Q[i], *self.P[i],
                       self.lam[i], self.aa[i], self.dyn[i], self.energies[i]]
                w.writerow([repr(float(x)) for x in row])


class _Recorder:
    def __init__(self, model, schedule, t_eval, direction):
        self.model, self.schedule = model, schedule
        self.t_eval = None if t_eval is None else np.asarray(t_eval, dtype=float)
        self.direction = direction
        self.next_eval = 0
        self.rows = []
        self.segments = []

    def add(self, t, psi, Q, P, lam, aa, dyn, quantum):
        R = self.schedule(t)
        self.rows.append((t, R, psi, Q, P, lam, aa, dyn, self.model.energy(psi, R), quantum))

    def pending(self, t_old, t_new):
        """Requested sample times inside ``(t_old, t_new]`` (or all step ends)."""
        if self.t_eval is None:
            return [t_new]
        out = []
        while self.next_eval < self.t_eval.size:
            te = self.t_eval[self.next_eval]
            if self.direction * (te - t_new) > 0:
                break
            if self.direction * (te - t_old) >= 0:
                out.append(te)
            self.next_eval += 1
        return out

    def build(self, norm_drift):
        if not self.rows:
            raise ValueError("empty trajectory")
        cols = list(zip(*self.rows))
        P = np.array(cols[4], dtype=float)
        return Trajectory(
            times=np.array(cols[0], dtype=float), R=np.array(cols[1], dtype=float),
            states=np.array(cols[2], dtype=complex), Q=np.array(cols[3], dtype=float), P=P,
            lam=np.array(cols[5], dtype=float), aa=np.array(cols[6], dtype=float),
            dyn=np.array(cols[7], dtype=float), energies=np.array(cols[8], dtype=float),
            quantum_mask=np.array(cols[9], dtype=bool), norm_drift=norm_drift,
            segments=self.segments)


# ---------------------------------------------------------------------------
# integration engine
# ---------------------------------------------------------------------------

class _Engine:
    """Shared machinery for both representations.

    Carries the overall phase ``lam``, related to the active gauge component
    through ``lam = arg psi_g + offset (mod 2 pi)``. Gauge switches reset
    ``offset`` to zero (see ``_reanchor``), so ``lam`` is continuous between
    switches and jumps together with ``aa`` at them.
    """

    def __init__(self, model: Model, schedule, config: IntegratorConfig, recorder: _Recorder,
                 keep_dense=False):
        self.model, self.schedule, self.config = model, schedule, config
        self.rec = recorder
        self.N = model.n_levels
        self.keep_dense = keep_dense
        self.norm_drift = 0.0

    # -- quantum form ---------------------------------------------------
    def _quantum_fun(self, gauge):
        N, model, schedule = self.N, self.model, self.schedule

        def fun(t, y):
            psi = y[:N] + 1j * y[N:2 * N]
            h = model.apply(psi, schedule(t))
            e = np.vdot(psi, h).real
            rate_aa = e - (h[gauge] * np.conj(psi[gauge])).real / abs(psi[gauge]) ** 2
            dpsi = -1j * h
            return np.concatenate([dpsi.real, dpsi.imag, [rate_aa, -e]])
        return fun

    def _unpack_q(self, y):
        N = self.N
        return y[:N] + 1j * y[N:2 * N], y[2 * N], y[2 * N + 1]

    def _coords_from_psi(self, psi, P_ref):
        g = self.N - 1
        Q = np.abs(psi[:g]) ** 2 / np.vdot(psi, psi).real
        if abs(psi[g]) ** 2 < 1e-300:
            return Q, P_ref.copy()
        P = np.angle(psi[:g]) - np.angle(psi[g])
        return Q, _wrap_near(P, P_ref)

    def _gauge_dip(self, dense, gauge, t_old, t_new):
        """First time inside the step where the gauge population drops below the handoff level.

        Checked on the dense output, so a pole passed within one step is not missed.
        """
        thr = self.config.gauge_handoff

        def pop(t):
            p_ = self._unpack_q(dense(t))[0]
            return abs(p_[gauge]) ** 2 / np.vdot(p_, p_).real

        ts = np.linspace(t_old, t_new, 9)
        Y = dense(ts)
        amp2 = Y[:self.N] ** 2 + Y[self.N:2 * self.N] ** 2
        vals = amp2[gauge] / amp2.sum(axis=0)
        if vals[0] < thr or vals.min() > 0.05:
            return None
        k = int(np.argmin(vals))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, 8)]
        res = minimize_scalar(pop, bounds=(min(lo, hi), max(lo, hi)), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, abs(t_new))})
        t_min = res.x if res.fun < vals[k] else ts[k]
        if min(res.fun, vals[k]) >= thr:
            return None
        return _first_crossing(lambda t: thr - pop(t), t_old, t_min)

    def run_quantum(self, t0, t1, psi, lam, aa, dyn, gauge, offset, P_ref, stop=None,
                    on_step=None):
        """Integrate the quantum form; returns the end point and the reason for stopping.

        ``stop(psi) >= 0`` ends the segment at the located crossing time.
        ``on_step(t_old, t_new, dense_psi)`` may return True to stop early.
        """
        cfg = self.config
        y = np.concatenate([psi.real, psi.imag, [aa, dyn]])
        solver = _make_solver(self._quantum_fun(gauge), t0, y, t1, cfg)
        direction = 1.0 if t1 >= t0 else -1.0
        while solver.status == "running":
            t_old, y_old = solver.t, solver.y.copy()
            lam_old = lam
            _advance(solver)
            t_new = solver.t
            dense = solver.dense_output()
            psi_old, aa_old, dyn_old = self._unpack_q(y_old)
            g_old = gauge

            def lam_at(yy, lam_old=lam_old, aa_old=aa_old, dyn_old=dyn_old, g=g_old, off=offset):
                p_, a_, d_ = self._unpack_q(yy)
                pred = lam_old + (a_ - aa_old) + (d_ - dyn_old)
                return float(_wrap_near(np.angle(p_[g]) + off, pred))

            t_end, reason = t_new, None
            if stop is not None and stop(self._unpack_q(solver.y)[0]) >= 0:
                tc = _first_crossing(lambda t: stop(self._unpack_q(dense(t))[0]), t_old, t_new)
                if tc is not None:
                    t_end, reason = tc, "stop"
            dip = None
            if reason is None:
                dip = self._gauge_dip(dense, gauge, t_old, t_new)
                if dip is not None:
                    t_end = dip
            if on_step is not None and reason is None:
                psi_fn = (lambda t, dense=dense: self._normalize(self._unpack_q(dense(t))[0]))
                if on_step(t_old, t_end, psi_fn):
                    reason = "callback"
            if self.keep_dense:
                self.rec.segments.append(
                    (t_old, t_end, lambda t, dense=dense: self._normalize(self._unpack_q(dense(t))[0])))

            for te in self.rec.pending(t_old, t_end):
                yy = dense(te) if te != t_new else solver.y
                p_, a_, d_ = self._unpack_q(yy)
                p_ = self._normalize(p_)
                Q, P_ref = self._coords_from_psi(p_, P_ref)
                self.rec.add(te, p_, Q, P_ref.copy(), lam_at(yy), a_, d_, True)

            y_end = dense(t_end) if t_end != t_new else solver.y.copy()
            lam = lam_at(y_end)
            psi_end, aa, dyn = self._unpack_q(y_end)
            _, P_ref = self._coords_from_psi(psi_end, P_ref)
            if reason is not None:
                return t_end, self._normalize(psi_end), lam, aa, dyn, gauge, offset, P_ref, reason

            # renormalization and gauge handoff restart the solver
            restart = False
            nrm2 = np.vdot(psi_end, psi_end).real
            self.norm_drift = max(self.norm_drift, abs(nrm2 - 1.0))
            if cfg.renormalize and nrm2 != 1.0:
                psi_end = psi_end / math.sqrt(nrm2)
                restart = True
            if dip is not None or abs(psi_end[gauge]) ** 2 < cfg.gauge_handoff:
                new_gauge = int(np.argmax(np.abs(psi_end)))
                lam, aa = _reanchor(lam, aa, psi_end[new_gauge])
                offset = 0.0
                gauge = new_gauge
                restart = True
            elif gauge != self.N - 1 and abs(psi_end[self.N - 1]) ** 2 >= 10 * cfg.gauge_handoff:
                lam, aa = _reanchor(lam, aa, psi_end[self.N - 1])
                offset = 0.0
                gauge = self.N - 1
                restart = True
            if restart and (solver.status == "running" or t_end != t_new):
                y = np.concatenate([psi_end.real, psi_end.imag, [aa, dyn]])
                solver = _make_solver(self._quantum_fun(gauge), t_end, y, t1, cfg,
                                      first_step=solver.step_size)
        psi_end, aa, dyn = self._unpack_q(solver.y)
        return solver.t, self._normalize(psi_end), lam, aa, dyn, gauge, offset, P_ref, "end"

    @staticmethod
    def _normalize(psi):
        return psi / math.sqrt(np.vdot(psi, psi).real)

    # -- canonical form -------------------------------------------------
    def _classical_fun(self):
        d, model, schedule = self.N - 1, self.model, self.schedule
        if isinstance(model, TwoLevelModel):
            return self._two_level_classical_fun()

        def fun(t, y):
            z = y[:2 * d]
            R = schedule(t)
            g = model.grad(z, R)
            dQ, dP = g[d:], -g[:d]
            phi = np.append(np.sqrt(z[:d]) * np.exp(1j * z[d:2 * d]), math.sqrt(max(0.0, 1 - z[:d].sum())))
            mu = model.chemical_potential(phi, R)
            rate_aa = -float(np.dot(z[:d], dP))
            return np.concatenate([dQ, dP, [rate_aa - mu, rate_aa, -mu]])
        return fun

    def _two_level_classical_fun(self):
        """Scalar closed form of the canonical right-hand side for the two-level model."""
        c, v, schedule = self.model.c, self.model.v, self.schedule

        def fun(t, y):
            p, q = y[0], y[1]
            if p < POLE_GUARD or p > 1 - POLE_GUARD:
                raise CoordinateSingular("p at a pole of the (q, p) chart; integrate the quantum form")
            R = schedule(t)
            w = math.sqrt(p * (1 - p))
            cq, sq = math.cos(q), math.sin(q)
            sz = 2 * p - 1
            dQ = -v * w * sq
            dP = -(v * (1 - 2 * p) * cq / (2 * w) + R - c * sz)
            mu = v * w * cq + 0.5 * R * sz - 0.5 * c * sz * sz
            rate_aa = -p * dP
            return np.array([dQ, dP, rate_aa - mu, rate_aa, -mu])
        return fun

    def margin(self, Q):
        return min(float(np.min(Q)), 1.0 - float(np.sum(Q)))

    def run_classical(self, t0, t1, z, lam, aa, dyn, offset):
        cfg = self.config
        d = self.N - 1
        thr = cfg.pole_switch_threshold
        y = np.concatenate([z, [lam, aa, dyn]])
        fun = self._classical_fun()
        solver = _make_solver(fun, t0, y, t1, cfg)

        def to_psi(yy):
            Q = np.clip(yy[:d], 0.0, 1.0)
            phi = reconstruct(ProjectiveCoords(Q, yy[d:2 * d]), yy[2 * d] - offset).amplitudes
            return phi

        while solver.status == "running":
            t_old, y_old = solver.t, solver.y.copy()
            try:
                _advance(solver)
            except CoordinateSingular:
                # a trial stage left the chart: retry with a shorter step, or hand over
                h = getattr(solver, "h_abs", None)
                if cfg.method == "rk4" or not h or h < 1e-12:
                    return t_old, y_old[:2 * d], y_old[2 * d], y_old[2 * d + 1], y_old[2 * d + 2], "pole"
                solver = _make_solver(fun, t_old, y_old, t1, cfg, first_step=h / 4)
                continue
            t_new = solver.t
            dense = solver.dense_output()
            t_end, reason = t_new, None
            if self.margin(solver.y[:d]) < thr:
                tc = _first_crossing(lambda t: thr - self.margin(dense(t)[:d]), t_old, t_new)
                if tc is not None:
                    t_end, reason = tc, "pole"
            if self.keep_dense:
                self.rec.segments.append((t_old, t_end, lambda t, dense=dense: to_psi(dense(t))))
            for te in self.rec.pending(t_old, t_end):
                yy = dense(te) if te != t_new else solver.y
                self.rec.add(te, to_psi(yy), np.clip(yy[:d], 0, 1), yy[d:2 * d].copy(),
                             yy[2 * d], yy[2 * d + 1], yy[2 * d + 2], False)
            if reason is not None:
                y_end = dense(t_end)
                return t_end, y_end[:2 * d], y_end[2 * d], y_end[2 * d + 1], y_end[2 * d + 2], reason
        y_end = solver.y
        return solver.t, y_end[:2 * d], y_end[2 * d], y_end[2 * d + 1], y_end[2 * d + 2], "end"


def evolve_quantum(initial, model: Model, R, t_span, config: IntegratorConfig | None = None,
                   t_eval=None, keep_dense=False, on_step=None) -> Trajectory:
    """Integrate ``i d|psi>/dt = H(psi, R(t)) psi`` with phase bookkeeping."""
    config = config or IntegratorConfig()
    schedule = as_schedule(R)
    psi0 = np.asarray(initial.amplitudes if isinstance(initial, StateVector) else initial, dtype=complex)
    psi0 = psi0 / math.sqrt(np.vdot(psi0, psi0).real)
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    rec = _Recorder(model, schedule, t_eval, direction)
    eng = _Engine(model, schedule, config, rec, keep_dense)
    N = model.n_levels
    gauge = N - 1
    if abs(psi0[gauge]) ** 2 < config.gauge_handoff:
        gauge = int(np.argmax(np.abs(psi0)))
    lam = float(np.angle(psi0[gauge]))
    offset = 0.0
    Q0, P0 = eng._coords_from_psi(psi0, np.zeros(N - 1))
    if rec.t_eval is None or (rec.t_eval.size and rec.t_eval[0] == t0):
        rec.add(t0, psi0, Q0, P0.copy(), lam, 0.0, 0.0, True)
        if rec.t_eval is not None:
            rec.next_eval = 1
    if t1 != t0:
        eng.run_quantum(t0, t1, psi0, lam, 0.0, 0.0, gauge, offset, P0, on_step=on_step)
    return rec.build(eng.norm_drift)


def evolve_classical(initial: ProjectiveCoords, model: Model, R, t_span,
                     config: IntegratorConfig | None = None, t_eval=None, overall_phase=0.0,
                     keep_dense=False) -> Trajectory:
    """Integrate ``dQ/dt = dH/dP, dP/dt = -dH/dQ``.

    Near a pole (any population, including the gauge level's, below
    ``pole_switch_threshold``) the quantum form takes over until every
    population is back above ten times the threshold.
    """
    config = config or IntegratorConfig()
    schedule = as_schedule(R)
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    rec = _Recorder(model, schedule, t_eval, direction)
    eng = _Engine(model, schedule, config, rec, keep_dense)
    N, d = model.n_levels, model.n_levels - 1
    thr = config.pole_switch_threshold
    z = initial.as_vector()
    lam, aa, dyn, offset = float(overall_phase), 0.0, 0.0, 0.0
    psi0 = reconstruct(initial, lam).amplitudes
    if rec.t_eval is None or (rec.t_eval.size and rec.t_eval[0] == t0):
        rec.add(t0, psi0, z[:d].copy(), z[d:].copy(), lam, 0.0, 0.0, eng.margin(z[:d]) < thr)
        if rec.t_eval is not None:
            rec.next_eval = 1
    t = t0
    quantum = eng.margin(z[:d]) < thr
    while direction * (t1 - t) > 0:
        if not quantum:
            t, z, lam, aa, dyn, reason = eng.run_classical(t, t1, z, lam, aa, dyn, offset)
            if reason == "end":
                break
            quantum = True
        else:
            psi = reconstruct(ProjectiveCoords(np.clip(z[:d], 0, 1), z[d:]), lam - offset).amplitudes
            gauge = N - 1
            if abs(psi[gauge]) ** 2 < max(config.gauge_handoff, 2 * thr):
                gauge = int(np.argmax(np.abs(psi)))
                lam, aa = _reanchor(lam, aa, psi[gauge])
                offset = 0.0
            back = (lambda p: eng.margin(np.abs(p[:d]) ** 2) - 10 * thr)
            t, psi, lam, aa, dyn, gauge, offset, P, reason = eng.run_quantum(
                t, t1, psi, lam, aa, dyn, gauge, offset, z[d:].copy(), stop=back)
            if reason == "end":
                break
            # back on the chart: fix the gauge to the last level
            lam, aa = _reanchor(lam, aa, psi[N - 1])
            offset = 0.0
            z = np.concatenate([np.abs(psi[:d]) ** 2, P])
            quantum = False
    return rec.build(eng.norm_drift)


# ---------------------------------------------------------------------------
# periods
# ---------------------------------------------------------------------------

def _projector(psi):
    return np.outer(psi, np.conj(psi))


def _section(model, psi0, R0):
    """Transverse section through ``psi0`` in the space of projectors."""
    rho0 = _projector(psi0)
    dpsi = model.rhs(psi0, R0)
    drho = np.outer(dpsi, np.conj(psi0)) + np.outer(psi0, np.conj(dpsi))
    scale = np.linalg.norm(drho)

    def g(psi):
        return float(np.real(np.vdot(drho, _projector(psi) - rho0))) / scale

    def dist(psi):
        return float(np.linalg.norm(_projector(psi) - rho0))

    return g, dist, scale


def find_period(model: Model, initial, R, config: IntegratorConfig | None = None,
                max_time: float = 1e3, closure_tol: float = 1e-6, min_time: float = 0.0):
    """Integrate from ``initial`` at fixed ``R`` until it first returns; returns ``tau``."""
    config = config or IntegratorConfig()
    psi0 = np.asarray(initial.amplitudes if isinstance(initial, StateVector) else initial, dtype=complex)
    psi0 = psi0 / np.linalg.norm(psi0)
    R0 = float(R)
    g, dist, scale = _section(model, psi0, R0)
    if scale < 1e-12:
        raise NotPeriodic("initial state is stationary")
    found = {}
    far = [0.0]

    def on_step(t_old, t_new, psi_fn):
        psi_new = psi_fn(t_new)
        far[0] = max(far[0], dist(psi_new))
        if t_new <= min_time:
            return False
        g_new = g(psi_new)
        g_old = g(psi_fn(t_old))
        if not (g_old < 0 <= g_new):
            return False
        tc = brentq(lambda t: g(psi_fn(t)), t_old, t_new, xtol=1e-14, rtol=1e-15)
        if dist(psi_fn(tc)) <= max(closure_tol, 0.0) and far[0] > 10 * closure_tol:
            found["tau"] = tc
            return True
        return False

    evolve_quantum(psi0, model, R0, (0.0, max_time), config, t_eval=[0.0], on_step=on_step)
    if "tau" not in found:
        raise NotPeriodic(f"no return to the initial state within t = {max_time}")
    return found["tau"]


def period_detect(traj: Trajectory, closure_tol: float = 1e-6, model: Model | None = None):
    """Period of a fixed-R trajectory recorded with ``keep_dense=True``.

    The section is the hyperplane through the initial projector, transverse to
    the flow; crossings are refined on the dense output.
    """
    if not traj.segments:
        raise ValueError("trajectory has no dense record; integrate with keep_dense=True")
    psi0 = traj.states[0] / np.linalg.norm(traj.states[0])
    if model is None:
        # finite-difference velocity from the dense record
        t0, t1, fn = traj.segments[0]
        h = 1e-6 * (t1 - t0)
        rho0 = _projector(psi0)
        drho = (_projector(fn(t0 + h)) - rho0) / h
        scale = np.linalg.norm(drho)

        def g(psi):
            return float(np.real(np.vdot(drho, _projector(psi) - rho0))) / max(scale, 1e-300)

        def dist(psi):
            return float(np.linalg.norm(_projector(psi) - rho0))
    else:
        g, dist, scale = _section(model, psi0, float(traj.R[0]))
    if scale < 1e-12:
        raise NotPeriodic("trajectory starts at a stationary state")
    far = 0.0
    for t_old, t_new, fn in traj.segments:
        if t_new <= t_old:
            continue
        psi_new = fn(t_new)
        far = max(far, dist(psi_new))
        g_old, g_new = g(fn(t_old)), g(psi_new)
        if g_old < 0 <= g_new:
            tc = brentq(lambda t: g(fn(t)), t_old, t_new, xtol=1e-14, rtol=1e-15)
            if dist(fn(tc)) <= closure_tol and far > 10 * closure_tol:
                return tc - traj.times[0]
    raise NotPeriodic("no return to the initial state within the trajectory")
