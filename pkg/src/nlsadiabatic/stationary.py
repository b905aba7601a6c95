"""Eigenstates as fixed points of the canonical flow.

Fixed points are roots of ``grad H_cl``; their linearization
``A = J Hess`` (``J`` the symplectic unit) decides stability. Branches are
followed in ``R`` by pseudo-arclength continuation, and saddle-node folds are
located where ``det Hess`` changes sign along a branch.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import CoordinateSingular, NotStationary, StepCollapse
from .models import POLE_GUARD, Model, TwoLevelModel, two_level_grad, two_level_hessian
from .state import ProjectiveCoords, reconstruct

TWO_PI = 2.0 * math.pi

GRID = 64
EDGE = 1e-4
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 100
DEDUPE = 1e-6
RESIDUAL_MAX = 1e-8
MARGINAL = 1e-8
REFERENCE_R = -0.05
_P_MIN = 2 * POLE_GUARD


def _wrap_angle(P):
    """Phases into ``[0, 2 pi)`` with values a hair below ``2 pi`` sent to 0."""
    P = np.mod(np.asarray(P, dtype=float), TWO_PI)
    return np.where(P > TWO_PI - 1e-9, P - TWO_PI, P)


def _params(model) -> dict:
    if dataclasses.is_dataclass(model):
        return {f.name: getattr(model, f.name) for f in dataclasses.fields(model) if f.init}
    return {}


def _symplectic(d):
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return J


@dataclass(frozen=True, eq=False)
class FixedPoint:
    coords: ProjectiveCoords
    R: float
    params: dict
    eigenvalues: np.ndarray
    stability: str                  # elliptic | hyperbolic | mixed | marginal
    omega: float                    # smallest elliptic frequency (0 if none)
    kappa: float                    # largest real exponent (0 if none)
    chemical_potential: float       # E, the eigenvalue of H(psi) psi = E psi
    total_energy: float             # H_cl
    residual: float                 # |grad H_cl|
    quantum_residual: float         # |H psi - E psi|
    spectrum_asymmetry: float       # distance between the spectrum and its negative
    boundary: bool = False
    label: str | None = None

    @property
    def q(self):
        return self.coords.q

    @property
    def p(self):
        return self.coords.p

    def state(self):
        return reconstruct(self.coords)

    def with_label(self, label):
        return dataclasses.replace(self, label=label)

    def as_dict(self) -> dict:
        return {
            "R": self.R, "Q": self.coords.Q.tolist(), "P": self.coords.P.tolist(),
            "stability": self.stability, "omega": self.omega, "kappa": self.kappa,
            "E": self.chemical_potential, "H_cl": self.total_energy,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "label": self.label, "boundary": self.boundary,
        }


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _spectrum_class(ev, scale):
    tol = MARGINAL * max(1.0, scale)
    if np.min(np.abs(ev)) < tol:
        return "marginal"
    real = np.abs(ev.imag) <= tol
    imag = np.abs(ev.real) <= tol
    if np.all(imag):
        return "elliptic"
    if np.all(real):
        return "hyperbolic"
    return "mixed"


def _assemble(model, coords, R, A, residual, boundary, psi):
    ev = np.linalg.eigvals(A)
    ev = ev[np.lexsort((ev.imag, ev.real))]
    scale = float(np.max(np.abs(ev))) if ev.size else 0.0
    neg = np.sort_complex(-ev)
    asym = float(np.max(np.abs(np.sort_complex(ev) - neg))) if ev.size else 0.0
    stability = _spectrum_class(ev, scale)
    tol = MARGINAL * max(1.0, scale)
    freqs = np.abs(ev.imag[(np.abs(ev.real) <= tol) & (ev.imag > tol)])
    rates = ev.real[(np.abs(ev.imag) <= tol) & (ev.real > tol)]
    E = model.chemical_potential(psi, R)
    q_res = float(np.linalg.norm(model.apply(psi, R) - E * psi))
    return FixedPoint(
        coords=coords, R=float(R), params=_params(model), eigenvalues=ev,
        stability=stability, omega=float(freqs.min()) if freqs.size else 0.0,
        kappa=float(rates.max()) if rates.size else 0.0,
        chemical_potential=float(E), total_energy=float(model.energy(psi, R)),
        residual=float(residual), quantum_residual=q_res,
        spectrum_asymmetry=asym, boundary=boundary)


def classify(coords, model: Model, R, residual_max: float = RESIDUAL_MAX) -> FixedPoint:
    """Linearize the canonical flow at a stationary point and classify it."""
    if not isinstance(coords, ProjectiveCoords):
        coords = ProjectiveCoords.from_vector(coords)
    z = coords.as_vector()
    try:
        g = model.grad(z, R)
    except CoordinateSingular:
        return classify_boundary(reconstruct(coords).amplitudes, model, R, residual_max)
    res = float(np.linalg.norm(g))
    if not res < residual_max:
        raise NotStationary(f"|grad H_cl| = {res:.3e} at {z} exceeds {residual_max:.0e}")
    A = _symplectic(model.dim) @ model.hessian(z, R)
    psi = reconstruct(coords).amplitudes
    return _assemble(model, coords, R, A, res, False, psi)


def classify_boundary(psi, model: Model, R, residual_max: float = RESIDUAL_MAX,
                      step: float = 1e-6) -> FixedPoint:
    """Classify a stationary state on a pole of the canonical chart.

    The flow is linearized in the affine chart ``w_j = psi_j / psi_k`` around
    the dominant component ``k``, which is regular there.
    """
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    E = model.chemical_potential(psi, R)
    res = float(np.linalg.norm(model.apply(psi, R) - E * psi))
    if not res < residual_max:
        raise NotStationary(f"|H psi - E psi| = {res:.3e} exceeds {residual_max:.0e}")
    n = psi.size
    k = int(np.argmax(np.abs(psi)))
    idx = [j for j in range(n) if j != k]
    w0 = psi[idx] / psi[k]

    def field_(w):
        full = np.insert(w, k, 1.0)
        full = full / np.linalg.norm(full)
        d = model.rhs(full, R)
        return (d[idx] * full[k] - full[idx] * d[k]) / full[k] ** 2

    m = len(idx)
    A = np.empty((2 * m, 2 * m))
    for j in range(2 * m):
        dw = np.zeros(m, dtype=complex)
        dw[j % m] = step if j < m else 1j * step
        df = (field_(w0 + dw) - field_(w0 - dw)) / (2 * step)
        A[:m, j] = df.real
        A[m:, j] = df.imag
    pops = np.abs(psi) ** 2
    phases = np.angle(psi) - np.angle(psi[-1]) if abs(psi[-1]) > 0 else np.zeros(n)
    coords = ProjectiveCoords(pops[:-1], _wrap_angle(phases[:-1]))
    return _assemble(model, coords, R, A, res, True, psi)


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _newton_two_level(q, p, R, c, v, tol, maxiter):
    """Batched Newton on ``(dH/dq, dH/dp) = 0``; returns converged ``(q, p)``."""
    q = q.astype(float).copy()
    p = p.astype(float).copy()
    alive = np.ones(q.shape, bool)
    done = np.zeros(q.shape, bool)
    for _ in range(maxiter):
        act = alive & ~done
        if not act.any():
            break
        qa, pa = q[act], p[act]
        gq, gp = two_level_grad(qa, pa, R, c, v)
        gmax = np.maximum(np.abs(gq), np.abs(gp))
        hqq, hqp, hpp = two_level_hessian(qa, pa, R, c, v)
        det = hqq * hpp - hqp ** 2
        ok = np.abs(det) > 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            dq = np.where(ok, (hpp * gq - hqp * gp) / det, 0.0)
            dp = np.where(ok, (hqq * gp - hqp * gq) / det, 0.0)
        # near a pole the residual floor sits above tol; a rounding-level step is convergence
        eps = 8 * np.finfo(float).eps
        stalled = (np.abs(dp) <= eps * pa) & (np.abs(dq) <= eps * np.maximum(1.0, np.abs(qa)))
        conv = (gmax < tol) | (stalled & (gmax < RESIDUAL_MAX))
        # keep p inside the chart
        shrink = np.ones_like(dp)
        big = np.abs(dp) > 0.25
        shrink[big] = 0.25 / np.abs(dp[big])
        pn = pa - shrink * dp
        for _h in range(30):
            bad = (pn <= _P_MIN) | (pn >= 1 - _P_MIN)
            if not bad.any():
                break
            shrink[bad] *= 0.5
            pn = pa - shrink * dp
        qn = qa - shrink * dq
        bad = (pn <= _P_MIN) | (pn >= 1 - _P_MIN) | ~ok | ~np.isfinite(pn) | ~np.isfinite(qn)
        new_q = np.where(conv, qa, qn)
        new_p = np.where(conv, pa, pn)
        q[act], p[act] = new_q, new_p
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
        alive[idx[bad & ~conv]] = False
    return q[done], p[done]


def _newton_generic(model, z, R, tol, maxiter):
    d = model.dim
    for _ in range(maxiter):
        try:
            g = model.grad(z, R)
        except CoordinateSingular:
            return None
        if np.max(np.abs(g)) < tol:
            return z
        try:
            dz = np.linalg.solve(model.hessian(z, R), g)
        except (np.linalg.LinAlgError, CoordinateSingular):
            return None
        step = 1.0
        while step > 1e-6:
            zn = z - step * dz
            Q = zn[:d]
            if np.all(Q > 1e-12) and Q.sum() < 1 - 1e-12:
                break
            step *= 0.5
        else:
            return None
        z = zn
    return None


def _dedupe(points, radius, d):
    """Keep one representative per cluster; phases compared on the circle."""
    kept = []
    for z in points:
        for k in kept:
            dQ = np.abs(z[:d] - k[:d])
            dP = np.abs(np.angle(np.exp(1j * (z[d:] - k[d:]))))
            if max(dQ.max(), dP.max()) < radius:
                break
        else:
            kept.append(z)
    return kept


def _boundary_candidates(model, R, residual_max):
    out = []
    for k in range(model.n_levels):
        psi = np.zeros(model.n_levels, dtype=complex)
        psi[k] = 1.0
        E = model.chemical_potential(psi, R)
        if np.linalg.norm(model.apply(psi, R) - E * psi) < residual_max:
            out.append(classify_boundary(psi, model, R, residual_max))
    return out


def find_fixed_points(model: Model, R, seeds=None, grid: int = GRID, edge: float = EDGE,
                      tol: float = NEWTON_TOL, maxiter: int = NEWTON_MAXITER,
                      dedupe: float = DEDUPE, n_random: int = 256,
                      rng: np.random.Generator | None = None) -> list[FixedPoint]:
    """All interior roots of ``grad H_cl`` reachable from the seeds, plus pole eigenstates.

    Default seeds: a ``grid x grid`` lattice over ``P in [0, 2 pi)``,
    ``Q in (edge, 1 - edge)`` plus log-spaced rows nearer the poles for
    two-level models; ``n_random`` uniformly
    drawn points of the simplex times the torus otherwise.
    """
    R = float(R)
    d = model.dim
    if seeds is None:
        if isinstance(model, TwoLevelModel):
            qs = np.linspace(0.0, TWO_PI, grid, endpoint=False)
            # extra rows close to the poles, where large |R| pushes the roots
            near = np.logspace(-8, math.log10(edge), 9)[:-1]
            ps = np.concatenate([near, np.linspace(edge, 1 - edge, grid), 1 - near[::-1]])
            qg, pg = np.meshgrid(qs, ps)
            seeds = np.column_stack([pg.ravel(), qg.ravel()])
        else:
            rng = rng or np.random.default_rng(0)
            Q = rng.dirichlet(np.ones(d + 1), size=n_random)[:, :d]
            P = rng.uniform(0, TWO_PI, size=(n_random, d))
            seeds = np.hstack([Q, P])
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))

    if isinstance(model, TwoLevelModel):
        q, p = _newton_two_level(seeds[:, 1], seeds[:, 0], R, model.c, model.v, tol, maxiter)
        roots = np.column_stack([p, q])
    else:
        roots = [r for r in (_newton_generic(model, s, R, tol, maxiter) for s in seeds)
                 if r is not None]
        roots = np.array(roots).reshape(-1, 2 * d)
    if roots.size:
        roots[:, d:] = _wrap_angle(roots[:, d:])
        order = np.lexsort(roots.T[::-1])
        roots = roots[order]
    unique = _dedupe(list(roots), dedupe, d)
    fps = [classify(ProjectiveCoords(z[:d], z[d:]), model, R) for z in unique]
    fps += _boundary_candidates(model, R, RESIDUAL_MAX)
    fps.sort(key=lambda f: (tuple(f.coords.P), tuple(f.coords.Q)))
    return fps


def assign_labels(fps: list[FixedPoint]) -> list[FixedPoint]:
    """``f1..f4`` naming for the two-level portrait.

    The hyperbolic point is ``f3``; elliptic points ordered by ``H_cl`` are
    ``f1`` (lowest), then ``f4`` (middle, only when a hyperbolic partner
    exists), then ``f2`` (highest).
    """
    ell = sorted([f for f in fps if f.stability == "elliptic"], key=lambda f: f.total_energy)
    hyp = [f for f in fps if f.stability == "hyperbolic"]
    names = {}
    if len(ell) == 2:
        names[id(ell[0])], names[id(ell[1])] = "f1", "f2"
    elif len(ell) == 3:
        names[id(ell[0])], names[id(ell[1])], names[id(ell[2])] = "f1", "f4", "f2"
    else:
        for i, f in enumerate(ell):
            names[id(f)] = f"e{i + 1}"
    for i, f in enumerate(hyp):
        names[id(f)] = "f3" if len(hyp) == 1 else f"h{i + 1}"
    return [f.with_label(names.get(id(f))) for f in fps]


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuationConfig:
    ds: float = 0.01
    ds_min: float = 1e-10
    ds_max: float = 0.05
    max_points: int = 20000
    corrector_tol: float = 1e-12
    corrector_maxiter: int = 12
    pole_margin: float = 1e-8


@dataclass(frozen=True, eq=False)
class Branch:
    points: list
    turning_indices: list = field(default_factory=list)   # fold lies between i and i+1

    @property
    def R(self):
        return np.array([f.R for f in self.points])

    @property
    def Q(self):
        return np.array([f.coords.Q for f in self.points])

    @property
    def P(self):
        return np.array([f.coords.P for f in self.points])

    @property
    def E(self):
        return np.array([f.chemical_potential for f in self.points])

    @property
    def H_cl(self):
        return np.array([f.total_energy for f in self.points])

    @property
    def omega(self):
        return np.array([f.omega for f in self.points])

    @property
    def stability(self):
        return [f.stability for f in self.points]

    @property
    def labels(self):
        return [f.label for f in self.points]


@dataclass(frozen=True)
class TurningPoint:
    R: float
    z: np.ndarray
    branch: int
    index: int
    labels: tuple = (None, None)     # (elliptic side, hyperbolic side)
    min_abs_eigenvalue: float = 0.0

    def as_dict(self):
        return {"R": self.R, "Q": self.z[: self.z.size // 2].tolist(),
                "P": self.z[self.z.size // 2:].tolist(), "branch": self.branch,
                "labels": list(self.labels), "min_abs_eigenvalue": self.min_abs_eigenvalue}


@dataclass(frozen=True, eq=False)
class BranchDiagram:
    branches: list
    turning_points: list
    R_range: tuple
    params: dict

    def summary(self) -> dict:
        return {
            "R_range": list(self.R_range),
            "params": self.params,
            "n_branches": len(self.branches),
            "turning_points": [tp.as_dict() for tp in self.turning_points],
            "branch_lengths": [len(b.points) for b in self.branches],
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), sort_keys=True, indent=2) + "\n")

    def to_csv(self, directory, prefix="branch"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, b in enumerate(self.branches):
            path = directory / f"{prefix}_{i}.csv"
            d = b.points[0].coords.dim
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                if d == 1:
                    w.writerow(["R", "q", "p", "E", "H_cl", "stability", "omega", "label"])
                else:
                    w.writerow(["R", *[f"Q{k+1}" for k in range(d)], *[f"P{k+1}" for k in range(d)],
                                "E", "H_cl", "stability", "omega", "label"])
                for f in b.points:
                    coords = [f.q, f.p] if d == 1 else [*f.coords.Q, *f.coords.P]
                    w.writerow([repr(float(f.R)), *[repr(float(x)) for x in coords],
                                repr(f.chemical_potential), repr(f.total_energy),
                                f.stability, repr(f.omega), f.label or ""])
            paths.append(path)
        return paths


def _tangent(model, z, R, prev=None):
    M = np.column_stack([model.hessian(z, R), model.grad_R(z, R)])
    t = np.linalg.svd(M)[2][-1]
    if prev is not None:
        if np.dot(t, prev) < 0:
            t = -t
    elif t[-1] < 0:
        t = -t
    return t


def _correct(model, u_pred, t, u_base, s, cfg):
    """Newton on ``{grad H = 0, t . (u - u_base) = s}``."""
    n = u_pred.size - 1
    u = u_pred.copy()
    for it in range(cfg.corrector_maxiter):
        z, R = u[:n], u[n]
        try:
            F = model.grad(z, R)
        except CoordinateSingular:
            return None, it
        G = np.append(F, np.dot(t, u - u_base) - s)
        J = np.vstack([np.column_stack([model.hessian(z, R), model.grad_R(z, R)]), t])
        try:
            du = np.linalg.solve(J, G)
        except np.linalg.LinAlgError:
            return None, it
        u = u - du
        # stagnation at rounding level counts as converged (the residual floor grows near a pole)
        if np.all(np.abs(du) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(u))) or (
                np.max(np.abs(G)) < cfg.corrector_tol
                                         and np.max(np.abs(du)) < 1e-11):
            return u, it + 1
    z, R = u[:n], u[n]
    try:
        ok = np.max(np.abs(model.grad(z, R))) < 1e-10
    except CoordinateSingular:
        ok = False
    return (u if ok else None), cfg.corrector_maxiter


def _fixed_R_newton(model, z, R, tol=NEWTON_TOL):
    return _newton_generic(model, np.asarray(z, float), R, tol, 50)


def _inside(model, z, margin):
    Q = z[: model.dim]
    return np.all(Q > margin) and Q.sum() < 1 - margin


def _trace(model, z0, R0, R_lo, R_hi, cfg, sign=1.0):
    """March along the branch through ``(z0, R0)``; ``sign`` picks the direction in ``R``."""
    n = z0.size
    u = np.append(z0, R0)
    t = sign * _tangent(model, z0, R0)
    pts = [u.copy()]
    tans = [t.copy()]
    ds = cfg.ds
    while len(pts) < cfg.max_points:
        u_new, iters = _correct(model, u + ds * t, t, u, ds, cfg)
        if u_new is None or np.linalg.norm(u_new - u) > 2 * ds:
            ds *= 0.5
            if ds < cfg.ds_min:
                raise StepCollapse(f"arclength step below {cfg.ds_min:g} near R = {u[n]:.6g}",
                                   location=u.copy())
            continue
        if not _inside(model, u_new[:n], cfg.pole_margin):
            break
        if u_new[n] > R_hi or u_new[n] < R_lo:
            bound = R_hi if u_new[n] > R_hi else R_lo
            w = (bound - u[n]) / (u_new[n] - u[n])
            z_b = _fixed_R_newton(model, u[:n] + w * (u_new[:n] - u[:n]), bound)
            if z_b is not None:
                pts.append(np.append(z_b, bound))
                tans.append(t.copy())
            break
        t_new = _tangent(model, u_new[:n], u_new[n], t)
        pts.append(u_new)
        tans.append(t_new)
        u, t = u_new, t_new
        if iters <= 3:
            ds = min(ds * 1.3, cfg.ds_max)
    return np.array(pts), np.array(tans)


def _on_branch(pts, z, R, tol=1e-4):
    n = z.size
    Rs = pts[:, n]
    for i in range(len(pts) - 1):
        a, b = Rs[i], Rs[i + 1]
        if min(a, b) - 1e-12 <= R <= max(a, b) + 1e-12:
            w = 0.5 if a == b else (R - a) / (b - a)
            zi = pts[i, :n] + w * (pts[i + 1, :n] - pts[i, :n])
            dz = zi - z
            dz[n // 2:] = np.angle(np.exp(1j * dz[n // 2:]))
            if np.max(np.abs(dz)) < tol:
                return True
    return False


def _refine_fold(model, u_i, t_i, s_hi, cfg):
    n = u_i.size - 1

    def point(s):
        u, _ = _correct(model, u_i + s * t_i, t_i, u_i, s, cfg)
        if u is None:
            raise StepCollapse("corrector failed while refining a fold", location=u_i)
        return u

    def det(s):
        u = point(s)
        return float(np.linalg.det(model.hessian(u[:n], u[n])))

    s_star = brentq(det, 0.0, s_hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return point(s_star)


def continue_branches(model: Model, R_range, config: ContinuationConfig | None = None,
                      reference_R: float = REFERENCE_R, seeds=None) -> BranchDiagram:
    """Follow every fixed point found at the ends of ``R_range`` across the range."""
    cfg = config or ContinuationConfig()
    R_lo, R_hi = float(R_range[0]), float(R_range[1])
    if not (np.isfinite(R_lo) and np.isfinite(R_hi)) or R_hi <= R_lo:
        raise ValueError(f"invalid R range {R_range}")
    n = 2 * model.dim
    traced = []
    for R0 in (R_lo, R_hi, reference_R if R_lo < reference_R < R_hi else None):
        if R0 is None:
            continue
        for fp in find_fixed_points(model, R0, seeds=seeds):
            if fp.boundary:
                continue
            z0 = fp.coords.as_vector()
            if any(_on_branch(p, z0, R0) for p, _ in traced):
                continue
            if R0 == R_lo:
                traced.append(_trace(model, z0, R0, R_lo, R_hi, cfg))
            else:
                # trace both ways and join
                fwd = _trace(model, z0, R0, R_lo, R_hi, cfg)
                bwd = _trace(model, z0, R0, R_lo, R_hi, cfg, sign=-1.0)
                pts = np.vstack([bwd[0][::-1], fwd[0][1:]])
                tans = np.vstack([-bwd[1][::-1], fwd[1][1:]])
                traced.append((pts, tans))

    branches, turning = [], []
    for bi, (pts, tans) in enumerate(traced):
        fps = []
        for u in pts:
            fps.append(classify(ProjectiveCoords(u[: n // 2], _wrap_angle(u[n // 2: n])),
                                model, u[n]))
        folds = []
        for i in range(len(pts) - 1):
            if tans[i][-1] * tans[i + 1][-1] < 0:
                s_hi = float(np.dot(tans[i], pts[i + 1] - pts[i]))
                u_star = _refine_fold(model, pts[i], tans[i], s_hi, cfg)
                folds.append((i, u_star))
        branches.append(Branch(fps, [i for i, _ in folds]))
        for i, u_star in folds:
            A = _symplectic(model.dim) @ model.hessian(u_star[:n], u_star[n])
            turning.append(TurningPoint(R=float(u_star[n]), z=u_star[:n].copy(), branch=bi,
                                        index=i,
                                        min_abs_eigenvalue=float(np.min(np.abs(np.linalg.eigvals(A))))))

    branches, turning = _label_branches(model, branches, turning, reference_R)
    turning.sort(key=lambda tp: tp.R)
    return BranchDiagram(branches, turning, (R_lo, R_hi), _params(model))


def _segments(branch):
    bounds = [0] + [i + 1 for i in branch.turning_indices] + [len(branch.points)]
    return [(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)]


def _label_branches(model, branches, turning, R_ref):
    """Label each segment between folds by the fixed point it passes at ``R_ref``."""
    found = []   # (branch, segment, FixedPoint)
    for bi, b in enumerate(branches):
        for si, (i0, i1) in enumerate(_segments(b)):
            pts = b.points[i0:i1]
            for k in range(len(pts) - 1):
                a, c = pts[k].R, pts[k + 1].R
                if min(a, c) <= R_ref <= max(a, c):
                    w = 0.5 if a == c else (R_ref - a) / (c - a)
                    za, zc = pts[k].coords.as_vector(), pts[k + 1].coords.as_vector()
                    d = model.dim
                    dz = zc - za
                    dz[d:] = np.angle(np.exp(1j * dz[d:]))
                    z = _fixed_R_newton(model, za + w * dz, R_ref)
                    if z is not None:
                        fp = classify(ProjectiveCoords(z[:d], _wrap_angle(z[d:])), model, R_ref)
                        found.append((bi, si, fp))
                    break
    labelled = assign_labels([f for _, _, f in found])
    seg_label = {(bi, si): f.label for (bi, si, _), f in zip(found, labelled)}
    new_branches = []
    for bi, b in enumerate(branches):
        pts = list(b.points)
        for si, (i0, i1) in enumerate(_segments(b)):
            lab = seg_label.get((bi, si))
            for k in range(i0, i1):
                pts[k] = pts[k].with_label(lab)
        new_branches.append(Branch(pts, list(b.turning_indices)))
    new_turning = []
    for tp in turning:
        b = new_branches[tp.branch]
        segs = _segments(b)
        si = next(k for k, (i0, i1) in enumerate(segs) if i0 <= tp.index < i1)
        left, right = b.points[tp.index], b.points[tp.index + 1]
        pair = [(left.stability, left.label), (right.stability, right.label)]
        ell = next((lab for st, lab in pair if st == "elliptic"), None)
        hyp = next((lab for st, lab in pair if st == "hyperbolic"), None)
        new_turning.append(dataclasses.replace(tp, labels=(ell, hyp)))
    return new_branches, new_turning


@dataclass(frozen=True)
class Collision:
    R: float
    elliptic: str | None
    hyperbolic: str | None
    marginal: bool
    min_abs_eigenvalue: float

    def as_dict(self):
        return dataclasses.asdict(self)


def detect_collision(diagram: BranchDiagram, marginal_tol: float = 1e-6) -> list[Collision]:
    """Saddle-node events: each fold with its elliptic and hyperbolic partners."""
    return [Collision(tp.R, tp.labels[0], tp.labels[1],
                      tp.min_abs_eigenvalue < marginal_tol, tp.min_abs_eigenvalue)
            for tp in diagram.turning_points]


def fold_bias(c: float, v: float) -> float:
    """Closed-form fold location ``(c^(2/3) - v^(2/3))^(3/2)``; 0 when ``c <= v``."""
    if c <= v:
        return 0.0
    return float((c ** (2 / 3) - v ** (2 / 3)) ** 1.5)
