"""Slow sweeps of the bias ``R(t) = R0 + alpha t`` in the two-level model.

A sweep integrates the state with the compiled stepper and, alongside,
follows the elliptic fixed point the state started on: its frequency
``omega(R)``, the state's distance to it, and the event where it annihilates
at a fold. The running AA phase is the phase of each closed quasi-cycle
(successive maxima of ``p``), held between cycles.

Level convention for sweep records: level 1 is the lower and level 2 the
upper eigenstate of the linear part ``(R/2) sz + (v/2) sx``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _sweep_kernel as K
from .errors import EndpointsNotLinear, StepFailure
from .models import TwoLevelModel
from .state import ProjectiveCoords, reconstruct
from .stationary import (BranchDiagram, ContinuationConfig, classify, continue_branches,
                         _P_MIN, _segments, _wrap_angle)

TWO_PI = 2.0 * math.pi

DELTA_FOLLOW = 0.05
OMEGA_FLOOR = 1e-3
SAMPLES_PER_PERIOD = 12     # so that dR between samples < alpha (2 pi / omega_min) / 10
OMEGA_REF_FLOOR = 0.25      # x v; bounds the automatic spacing where omega -> 0 at a fold
MAX_CYCLES = 200_000
LINEAR_ERROR = 5.0      # endpoints must satisfy |R| >= 5 max(c, v)
LINEAR_WARN = 20.0      # and trigger a warning below 20 max(c, v)


class LinearityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SweepSpec:
    R0: float = -10.0
    R1: float = 10.0
    alpha: float = 1e-4
    upper_population: float | None = 0.1    # probability on level 2 at R0
    phase: float = 0.0                      # relative phase of the upper component
    label: str | None = None                # start on this fixed point instead
    state: tuple | None = None              # or on an explicit (a, b)
    linear_endpoints: bool = True
    sample_dR: float | None = None          # None: resolve the slowest regular orbit
    sample_dt: float | None = None          # overrides sample_dR
    rtol: float = 1e-10
    atol: float = 1e-12
    max_cycles: int = MAX_CYCLES

    def __post_init__(self):
        if not (np.isfinite(self.R0) and np.isfinite(self.R1)) or self.R0 == self.R1:
            raise ValueError("R0 and R1 must be finite and distinct")
        if self.alpha == 0 or (self.R1 - self.R0) / self.alpha <= 0:
            raise ValueError("alpha must be nonzero and point from R0 to R1")
        given = sum(x is not None for x in (self.label, self.state))
        if given > 1:
            raise ValueError("give at most one of label and state")
        if given == 0 and self.upper_population is None:
            raise ValueError("no initial condition")
        if self.upper_population is not None and not 0.0 <= self.upper_population <= 1.0:
            raise ValueError("upper_population must lie in [0, 1]")
        for name in ("sample_dR", "sample_dt"):
            x = getattr(self, name)
            if x is not None and not x > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def duration(self) -> float:
        return (self.R1 - self.R0) / self.alpha

    def as_dict(self):
        d = dataclasses.asdict(self)
        if self.state is not None:
            d["state"] = [[complex(x).real, complex(x).imag] for x in self.state]
        return d


def check_linear_endpoints(model: TwoLevelModel, R_values, error=LINEAR_ERROR, warn=LINEAR_WARN):
    scale = max(model.c, model.v)
    worst = min(abs(R) for R in R_values)
    if worst < error * scale:
        raise EndpointsNotLinear(
            f"|R| = {worst:g} at an endpoint is below {error:g} max(c, v) = {error * scale:g}")
    if worst < warn * scale:
        warnings.warn(f"|R| = {worst:g} at an endpoint is below {warn:g} max(c, v); "
                      "linear-limit bookkeeping is approximate", LinearityWarning, stacklevel=3)


def level_basis(R, v):
    """Lower and upper eigenvectors of ``(R/2) sz + (v/2) sx``; larger component positive."""
    w, U = np.linalg.eigh(np.array([[0.5 * R, 0.5 * v], [0.5 * v, -0.5 * R]]))
    out = []
    for k in range(2):
        u = U[:, k]
        u = u * np.sign(u[np.argmax(np.abs(u))])
        out.append(u.astype(complex))
    return out[0], out[1]


def level_populations(states, R, v):
    """``(lower, upper)`` populations of each state in the instantaneous linear basis."""
    states = np.atleast_2d(states)
    R = np.broadcast_to(np.asarray(R, dtype=float), states.shape[:1])
    # closed form for the real symmetric 2x2 eigenvectors
    theta = 0.5 * np.arctan2(v, R)                 # mixing angle
    up = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    low = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    p_up = np.abs(np.sum(up * states, axis=1)) ** 2
    p_low = np.abs(np.sum(low * states, axis=1)) ** 2
    return p_low, p_up


def initial_state(spec: SweepSpec, model: TwoLevelModel, diagram: BranchDiagram | None = None):
    if spec.state is not None:
        psi = np.asarray(spec.state, dtype=complex)
        return psi / np.linalg.norm(psi)
    if spec.label is not None:
        fp = _labelled_point(diagram, spec.label, spec.R0, model)
        return reconstruct(fp.coords).amplitudes
    low, up = level_basis(spec.R0, model.v)
    I = spec.upper_population
    return math.sqrt(1 - I) * low + math.sqrt(I) * np.exp(1j * spec.phase) * up


# ---------------------------------------------------------------------------
# fixed-point tracking
# ---------------------------------------------------------------------------

class _Segment:
    def __init__(self, branch_idx, seg_idx, points, folds=()):
        self.key = (branch_idx, seg_idx)
        self.points = points
        R = [f.R for f in points]
        z = [f.coords.as_vector() for f in points]
        w = [f.omega for f in points]
        k = [f.kappa for f in points]
        # the folds bounding the segment, where both rates vanish
        for where, tp in folds:
            pos = 0 if where == "start" else len(R)
            R.insert(pos, tp.R)
            z.insert(pos, np.array([tp.z[0], _wrap_angle(tp.z[1])]))
            w.insert(pos, 0.0)
            k.insert(pos, 0.0)
        self.R = np.array(R)
        self.z = np.array(z)
        self.z[:, 1] = np.unwrap(self.z[:, 1])
        self.omega = np.array(w)
        self.kappa = np.array(k)
        self.stability = points[len(points) // 2].stability
        self.label = points[0].label
        self.lo, self.hi = float(self.R.min()), float(self.R.max())

    def covers(self, R):
        return self.lo - 1e-12 <= R <= self.hi + 1e-12

    def at(self, R, model):
        """Fixed point on this segment at ``R`` (polished), or an interpolated stand-in."""
        p, q, w, k = self.at_many(np.array([float(R)]), model)
        return float(p[0]), float(q[0]), float(w[0]), float(k[0])

    def at_many(self, R, model, iters=8):
        """Vectorized :meth:`at`: interpolate along the segment, then Newton-polish."""
        order = np.argsort(self.R)
        Rs, zs = self.R[order], self.z[order]
        p = np.interp(R, Rs, zs[:, 0])
        q = np.interp(R, Rs, zs[:, 1])
        omega = np.interp(R, Rs, self.omega[order])
        kappa = np.interp(R, Rs, self.kappa[order])
        c, v = model.c, model.v
        pn, qn = p.copy(), q.copy()
        with np.errstate(all="ignore"):
            for _ in range(iters):
                pc = np.clip(pn, _P_MIN, 1 - _P_MIN)
                w = np.sqrt(pc * (1 - pc))
                gq = -v * w * np.sin(qn)
                gp = v * (1 - 2 * pc) * np.cos(qn) / (2 * w) + R - c * (2 * pc - 1)
                hqq = -v * w * np.cos(qn)
                hqp = -v * (1 - 2 * pc) / (2 * w) * np.sin(qn)
                hpp = -v * np.cos(qn) / (4 * w ** 3) - 2 * c
                det = hqq * hpp - hqp ** 2
                qn = qn - (hpp * gq - hqp * gp) / det
                pn = pc - (hqq * gp - hqp * gq) / det
            pc = np.clip(pn, _P_MIN, 1 - _P_MIN)
            w = np.sqrt(pc * (1 - pc))
            res = np.maximum(np.abs(v * w * np.sin(qn)),
                             np.abs(v * (1 - 2 * pc) * np.cos(qn) / (2 * w) + R - c * (2 * pc - 1)))
            hqq = -v * w * np.cos(qn)
            hqp = -v * (1 - 2 * pc) / (2 * w) * np.sin(qn)
            hpp = -v * np.cos(qn) / (4 * w ** 3) - 2 * c
            det = hqq * hpp - hqp ** 2
        # the linearization of the flow has eigenvalues +-sqrt(-det Hess)
        same = (det > 0) if self.stability == "elliptic" else (det < 0)
        good = (np.isfinite(pn) & np.isfinite(qn) & (res < 1e-10) & same
                & (np.abs(pn - p) < 1e-2) & (np.abs(qn - q) < 1e-2)
                & (pn > _P_MIN) & (pn < 1 - _P_MIN))
        p = np.where(good, pn, p)
        q = np.where(good, qn, q)
        omega = np.where(good, np.sqrt(np.clip(det, 0, None)), omega)
        kappa = np.where(good, np.sqrt(np.clip(-det, 0, None)), kappa)
        return p, _wrap_angle(q), omega, kappa


def _segments_of(diagram):
    segs = []
    for bi, b in enumerate(diagram.branches):
        tps = {tp.index: tp for tp in diagram.turning_points if tp.branch == bi}
        for si, (i0, i1) in enumerate(_segments(b)):
            folds = []
            if i0 - 1 in tps:
                folds.append(("start", tps[i0 - 1]))
            if i1 - 1 in tps:
                folds.append(("end", tps[i1 - 1]))
            if i1 - i0 + len(folds) >= 2:
                segs.append(_Segment(bi, si, b.points[i0:i1], folds))
    return segs


def _labelled_point(diagram, label, R, model):
    for seg in _segments_of(diagram):
        if seg.label == label and seg.covers(R):
            p, q, _, _ = seg.at(R, model)
            return classify(ProjectiveCoords([p], [q]), model, R)
    raise ValueError(f"no fixed point labelled {label!r} at R = {R}")


def _bloch(p, q):
    s = np.sqrt(np.clip(p * (1 - p), 0, None))
    return np.stack([2 * s * np.cos(q), -2 * s * np.sin(q), 2 * p - 1], axis=-1)


def _nearest_elliptic(segs, R, p, q, model):
    best, best_d = None, np.inf
    target = _bloch(p, q)
    for seg in segs:
        if seg.stability != "elliptic" or not seg.covers(R):
            continue
        fp = seg.at(R, model)
        d = float(np.linalg.norm(_bloch(fp[0], fp[1]) - target))
        if d < best_d:
            best, best_d = seg, d
    return best


def _qp_distance(p, q, fp_p, fp_q):
    dq = np.angle(np.exp(1j * (q - fp_q)))
    return np.sqrt((p - fp_p) ** 2 + dq ** 2)


def _fold_end(seg, direction):
    """R at which ``seg`` ends when swept in ``direction``."""
    return seg.hi if direction > 0 else seg.lo


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepRecord:
    spec: SweepSpec
    params: dict
    t: np.ndarray
    R: np.ndarray
    states: np.ndarray          # (M, 2) complex
    pop_lower: np.ndarray
    pop_upper: np.ndarray
    p: np.ndarray               # bare population |a|^2
    gamma_aa: np.ndarray        # running AA phase, held between cycles
    omega: np.ndarray           # tracked fixed point; 0 where it is hyperbolic or gone
    kappa: np.ndarray
    dist_fp: np.ndarray
    tracked: list               # label per sample
    cycle_t: np.ndarray
    cycle_R: np.ndarray
    cycle_gamma: np.ndarray     # unwrapped per-cycle AA phase
    cycle_period: np.ndarray
    events: list
    norm_drift: float
    n_steps: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def action(self) -> np.ndarray:
        """Running action ``gamma / 2 pi`` per cycle (unwrapped)."""
        return self.cycle_gamma / TWO_PI

    @property
    def omega_min(self) -> float:
        return float(np.min(self.omega)) if self.omega.size else float("nan")

    def gamma_jump(self) -> float:
        """Change of the running AA phase between the first and the last cycle."""
        if self.cycle_gamma.size < 2:
            return 0.0
        return float(self.cycle_gamma[-1] - self.cycle_gamma[0])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "R", "pop1", "pop2", "gamma_aa", "omega", "dist_fp"])
            for i in range(len(self)):
                w.writerow([repr(float(x)) for x in (self.t[i], self.R[i], self.pop_lower[i],
                                                     self.pop_upper[i], self.gamma_aa[i],
                                                     self.omega[i], self.dist_fp[i])])

    def to_cycles_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "R", "gamma_aa", "action", "period"])
            for row in zip(self.cycle_t, self.cycle_R, self.cycle_gamma, self.action,
                           self.cycle_period):
                w.writerow([repr(float(x)) for x in row])

    def summary(self) -> dict:
        out = {
            "spec": self.spec.as_dict(), "params": self.params,
            "initial_populations": [float(self.pop_lower[0]), float(self.pop_upper[0])],
            "final_populations": [float(self.pop_lower[-1]), float(self.pop_upper[-1])],
            "omega_min": self.omega_min, "gamma_jump": self.gamma_jump(),
            "n_cycles_recorded": int(self.cycle_t.size), "events": self.events,
            "norm_drift": self.norm_drift, "n_steps": self.n_steps,
        }
        out.update(self.meta)
        return out


def auto_sample_dt(diagram: BranchDiagram, R_range, model: TwoLevelModel) -> float:
    """Sample spacing in time giving SAMPLES_PER_PERIOD samples on the slowest regular orbit."""
    lo, hi = min(R_range), max(R_range)
    w = [f.omega for b in diagram.branches for f in b.points
         if f.stability == "elliptic" and lo <= f.R <= hi]
    w_ref = max(min(w, default=model.v), OMEGA_REF_FLOOR * model.v)
    return TWO_PI / (SAMPLES_PER_PERIOD * w_ref)


def _estimate_cycles(spec, model):
    Rs = np.linspace(spec.R0, spec.R1, 201)
    freq = np.sqrt(Rs ** 2 + model.v ** 2) + model.c
    return float(np.mean(freq) * spec.duration / TWO_PI)


def sweep(spec: SweepSpec, model: TwoLevelModel, diagram: BranchDiagram | None = None,
          delta_follow: float = DELTA_FOLLOW, omega_floor: float = OMEGA_FLOOR) -> SweepRecord:
    """Integrate the state through the ramp and follow its fixed point."""
    if not isinstance(model, TwoLevelModel):
        raise TypeError("sweeps are implemented for the two-level model")
    if spec.linear_endpoints:
        check_linear_endpoints(model, (spec.R0, spec.R1))
    lo, hi = sorted((spec.R0, spec.R1))
    if diagram is None:
        diagram = continue_branches(model, (min(lo, -0.05), max(hi, -0.05)),
                                    ContinuationConfig(ds_max=0.02))
    psi0 = initial_state(spec, model, diagram)

    # integrate
    T = spec.duration
    if spec.sample_dt is not None:
        dt = spec.sample_dt
    elif spec.sample_dR is not None:
        dt = spec.sample_dR / abs(spec.alpha)
    else:
        dt = auto_sample_dt(diagram, (lo, hi), model)
    n_samp = int(math.floor(T / dt + 1e-9)) + 3
    stride = max(1, int(math.ceil(_estimate_cycles(spec, model) / spec.max_cycles)))
    samples = np.zeros((n_samp, K.SAMPLE_COLS))
    cycles = np.zeros((spec.max_cycles + 1, K.CYCLE_COLS))
    y0 = np.array([psi0[0].real, psi0[0].imag, psi0[1].real, psi0[1].imag, 0.0, 0.0])
    ns, nc, status, t_end, steps, drift = K.sweep_kernel(
        y0, 0.0, T, float(spec.R0), float(spec.alpha), float(model.c), float(model.v),
        spec.rtol, spec.atol, 1e-6, dt, stride, samples, cycles, 10 ** 10, np.inf)
    if status != K.OK:
        raise StepFailure(f"sweep integration stopped (status {status}) at t = {t_end:.6g}",
                          t_reached=t_end)
    S = samples[:ns]
    C = cycles[:nc]
    t, R = S[:, 0], S[:, 1]
    states = np.column_stack([S[:, 2] + 1j * S[:, 3], S[:, 4] + 1j * S[:, 5]])
    p_low, p_up = level_populations(states, R, model.v)
    p = np.abs(states[:, 0]) ** 2
    q = np.angle(states[:, 0] * np.conj(states[:, 1]))

    cyc_gamma = np.unwrap(C[:, 9]) if nc else np.zeros(0)
    if nc:
        # anchor the branch of the unwrapped sequence at the gauge-fixed first value
        cyc_gamma += TWO_PI * np.round((C[0, 10] - cyc_gamma[0]) / TWO_PI)
    idx = np.searchsorted(C[:, 0], t, side="right") - 1 if nc else np.full(t.size, -1)
    gamma_run = np.where(idx >= 0, cyc_gamma[np.clip(idx, 0, None)] if nc else 0.0, np.nan)

    # fixed-point tracking
    segs = _segments_of(diagram)
    direction = np.sign(spec.alpha)
    if spec.label is not None:
        seg = next(s for s in segs if s.label == spec.label and s.covers(spec.R0))
    else:
        seg = _nearest_elliptic(segs, spec.R0, p[0], q[0], model)
    events = []
    omega = np.zeros(t.size)
    kappa = np.zeros(t.size)
    dist = np.full(t.size, np.nan)
    tracked = [None] * t.size
    extra_rows = []
    i = 0
    while i < t.size and seg is not None:
        # R is monotone, so the segment holds until R first leaves its range
        out = np.flatnonzero((R[i:] < seg.lo - 1e-12) | (R[i:] > seg.hi + 1e-12))
        j = i + int(out[0]) if out.size else t.size
        fp_p, fp_q, w, k = seg.at_many(R[i:j], model)
        omega[i:j] = w if seg.stability == "elliptic" else 0.0
        kappa[i:j] = k
        dist[i:j] = _qp_distance(p[i:j], q[i:j], fp_p, fp_q)
        tracked[i:j] = [seg.label] * (j - i)
        if j == t.size:
            break
        R_fold = _fold_end(seg, direction)
        fp_p, fp_q, _, _ = seg.at(R_fold, model)
        events.append({"event": "TrackingLost", "R": float(R_fold), "label": seg.label,
                       "t": float((R_fold - spec.R0) / spec.alpha),
                       "p": float(fp_p), "q": float(fp_q)})
        extra_rows.append((float(R_fold), seg.label))
        seg = _nearest_elliptic(segs, R[j], p[j], q[j], model)
        if seg is not None:
            events.append({"event": "Reacquired", "R": float(R[j]), "label": seg.label})
        i = j

    # the fold itself is a sample with omega = 0
    if extra_rows:
        for R_fold, lab in extra_rows:
            t_f = (R_fold - spec.R0) / spec.alpha
            j = int(np.searchsorted(t, t_f))
            st = states[min(j, t.size - 1)]
            t = np.insert(t, j, t_f)
            R = np.insert(R, j, R_fold)
            states = np.insert(states, j, st, axis=0)
            p_low = np.insert(p_low, j, np.nan)
            p_up = np.insert(p_up, j, np.nan)
            p = np.insert(p, j, np.nan)
            gamma_run = np.insert(gamma_run, j, gamma_run[min(j, gamma_run.size - 1)])
            omega = np.insert(omega, j, 0.0)
            kappa = np.insert(kappa, j, 0.0)
            dist = np.insert(dist, j, np.nan)
            tracked.insert(j, lab)

    meta = {"delta_follow": delta_follow, "omega_floor": omega_floor,
            "cycle_stride": stride, "sample_dt": dt,
            "omega_floor_hit": bool(np.any(omega[np.isfinite(omega)] < omega_floor)
                                    or any(e["event"] == "TrackingLost" for e in events))}
    return SweepRecord(
        spec=spec, params={"c": model.c, "v": model.v}, t=t, R=R, states=states,
        pop_lower=p_low, pop_upper=p_up, p=p, gamma_aa=gamma_run, omega=omega, kappa=kappa,
        dist_fp=dist, tracked=tracked, cycle_t=C[:, 0].copy(), cycle_R=C[:, 1].copy(),
        cycle_gamma=cyc_gamma, cycle_period=C[:, 11].copy(), events=events,
        norm_drift=float(drift), n_steps=int(steps), meta=meta)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FollowingVerdict:
    verdict: str                    # followed | broke_down
    R_break: float | None
    t_break: float | None
    divergence_rate: float | None   # fitted growth rate of the distance before the break

    def as_dict(self):
        return dataclasses.asdict(self)


def _divergence_rate(t, dist, lo, hi):
    """Log-linear growth rate of ``dist`` inside ``(lo, hi)``."""
    ok = np.isfinite(dist) & (dist > lo) & (dist < hi)
    # the first contiguous run inside the window
    idx = np.flatnonzero(ok)
    if idx.size < 3:
        return None
    run = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)[0]
    if run.size < 3:
        return None
    slope = np.polyfit(t[run], np.log(dist[run]), 1)[0]
    return float(slope)


def eigenstate_following(label: str, model: TwoLevelModel, spec: SweepSpec,
                         delta_follow: float = DELTA_FOLLOW, diagram=None):
    """Start exactly on fixed point ``label`` at ``R0`` and sweep; returns ``(record, verdict)``."""
    spec = dataclasses.replace(spec, label=label, state=None, upper_population=None)
    rec = sweep(spec, model, diagram=diagram, delta_follow=delta_follow)
    d = np.where(np.isfinite(rec.dist_fp), rec.dist_fp, np.inf)
    lost = [e for e in rec.events if e["event"] == "TrackingLost"]
    bad = np.flatnonzero(d >= delta_follow)
    if bad.size == 0 and not lost:
        return rec, FollowingVerdict("followed", None, None, None)
    if lost and (bad.size == 0 or rec.t[bad[0]] >= lost[0]["t"]):
        # the fixed point annihilated: the break is where the state leaves the fold point
        ev = lost[0]
        after = np.flatnonzero(rec.t >= ev["t"])
        gone = _qp_distance(rec.p[after], np.angle(rec.states[after, 0] * np.conj(rec.states[after, 1])),
                            ev["p"], ev["q"]) >= delta_follow
        i = int(after[np.argmax(gone)]) if gone.any() else int(after[-1])
        end = int(after[0]) if after.size else d.size
    else:
        i = end = int(bad[0])
    R_b, t_b = float(rec.R[i]), float(rec.t[i])
    # well above the O(alpha) forced drift, below the nonlinear scale
    rate = _divergence_rate(rec.t[:end + 1], rec.dist_fp[:end + 1],
                            delta_follow / 50, delta_follow / 2)
    return rec, FollowingVerdict("broke_down", R_b, t_b, rate)


@dataclass(frozen=True)
class TunnelingResult:
    probability: float
    delta_I: tuple          # (level 1, level 2) population changes
    gamma_jump: float
    omega_floor_hit: bool

    def as_dict(self):
        return dataclasses.asdict(self)


def tunneling_probability(record: SweepRecord, error=LINEAR_ERROR) -> TunnelingResult:
    """Population transferred between the levels over the sweep, ``|P2(end) - P2(start)|``."""
    c, v = record.params["c"], record.params["v"]
    scale = max(c, v)
    for R in (record.R[0], record.R[-1]):
        if abs(R) < error * scale:
            raise EndpointsNotLinear(f"endpoint |R| = {abs(R):g} < {error:g} max(c, v)")
    d_low = float(record.pop_lower[-1] - record.pop_lower[0])
    d_up = float(record.pop_upper[-1] - record.pop_upper[0])
    return TunnelingResult(abs(d_up), (d_low, d_up), record.gamma_jump(),
                           bool(record.meta.get("omega_floor_hit", False)))


@dataclass(frozen=True, eq=False)
class InvarianceReport:
    alphas: np.ndarray
    action_drift: np.ndarray        # max |I(R) - I(R0)| over recorded cycles
    population_drift: np.ndarray    # |P2(end) - P2(start)|
    monotone: bool
    order: float                    # least-squares slope of log drift vs log alpha

    def rows(self):
        return [{"alpha": float(a), "action_drift": float(d), "population_drift": float(p)}
                for a, d, p in zip(self.alphas, self.action_drift, self.population_drift)]

    def as_dict(self):
        return {"rows": self.rows(), "monotone": self.monotone, "order": self.order}


def invariance_report(records) -> InvarianceReport:
    recs = sorted(records, key=lambda r: -abs(r.spec.alpha))
    alphas = np.array([abs(r.spec.alpha) for r in recs])
    act = []
    for r in recs:
        a = r.action
        act.append(float(np.max(np.abs(a - a[0]))) if a.size else float("nan"))
    act = np.array(act)
    pop = np.array([abs(r.pop_upper[-1] - r.pop_upper[0]) for r in recs])
    monotone = bool(np.all(np.diff(act) < 0))
    ok = act > 0
    order = float(np.polyfit(np.log(alphas[ok]), np.log(act[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return InvarianceReport(alphas, act, pop, monotone, order)


def mirror_spec(spec: SweepSpec) -> SweepSpec:
    """The sweep related by ``(a, b, R) -> (b, a, -R)``."""
    state = spec.state
    if spec.label is not None:
        raise ValueError("mirror a labelled sweep through its explicit state")
    return dataclasses.replace(spec, R0=-spec.R0, R1=-spec.R1, alpha=-spec.alpha,
                               state=None if state is None else (state[1], state[0]))


def record_json(record: SweepRecord, path, extra: dict | None = None):
    out = record.summary()
    if extra:
        out.update(extra)
    Path(path).write_text(json.dumps(out, sort_keys=True, indent=2, default=float) + "\n")
