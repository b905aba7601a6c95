"""Compiled DOP853 integrator for long two-level sweeps ``R(t) = R0 + alpha t``.

A sweep at ``alpha = 1e-4`` spans ~1e5 oscillation periods, far beyond what a
Python right-hand side can integrate in reasonable time. The stepper below
uses the same Dormand-Prince 8(5,3) tableau and step controller as
``scipy.integrate.DOP853`` and records:

* uniform samples every ``sample_dt``;
* quasi-cycle crossings, i.e. the maxima of ``p = |a|^2`` (``dp/dt`` going
  from positive to negative). Each carries the geometric phase of the cycle
  since the previous crossing, both gauge-free
  (``arg<psi_i|psi_i+1> + int <H> dt``) and as the difference of the
  gauge-fixed accumulator.

State vector: ``(Re a, Im a, Re b, Im b, aa_accum, dyn_accum)``.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

_NS = _dop.N_STAGES
A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
B = np.ascontiguousarray(_dop.B)
C = np.ascontiguousarray(_dop.C[:_NS])
E3 = np.ascontiguousarray(_dop.E3)
E5 = np.ascontiguousarray(_dop.E5)
D = np.ascontiguousarray(_dop.D)
A_EXTRA = np.ascontiguousarray(_dop.A[_NS + 1:])
C_EXTRA = np.ascontiguousarray(_dop.C[_NS + 1:])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0

# status codes
OK = 0
STEP_UNDERFLOW = 1
MAX_STEPS = 2

SAMPLE_COLS = 9   # t, R, ar, ai, br, bi, aa, dyn, lam
CYCLE_COLS = 12   # same + gamma_cycle, delta_aa, period


@njit(cache=True)
def _rhs(t, y, R0, alpha, c, v, gauge, out):
    R = R0 + alpha * t
    a = complex(y[0], y[1])
    b = complex(y[2], y[3])
    sz = (a.real * a.real + a.imag * a.imag) - (b.real * b.real + b.imag * b.imag)
    d = 0.5 * (R - c * sz)
    ha = d * a + 0.5 * v * b
    hb = 0.5 * v * a - d * b
    e = (a.conjugate() * ha + b.conjugate() * hb).real
    if gauge == 1:
        rate = e - (hb * b.conjugate()).real / (b.real * b.real + b.imag * b.imag)
    else:
        rate = e - (ha * a.conjugate()).real / (a.real * a.real + a.imag * a.imag)
    da = -1j * ha
    db = -1j * hb
    out[0] = da.real
    out[1] = da.imag
    out[2] = db.real
    out[3] = db.imag
    out[4] = rate
    out[5] = -e


@njit(cache=True)
def _dense_coeffs(t, y, f, h, y_new, f_new, K, R0, alpha, c, v, gauge, F):
    n = y.size
    tmp = np.empty(n)
    for s in range(3):
        a_row = A_EXTRA[s]
        for i in range(n):
            acc = 0.0
            for j in range(_NS + 1 + s):
                acc += a_row[j] * K[j, i]
            tmp[i] = y[i] + h * acc
        _rhs(t + C_EXTRA[s] * h, tmp, R0, alpha, c, v, gauge, K[_NS + 1 + s])
    for i in range(n):
        dy = y_new[i] - y[i]
        F[0, i] = dy
        F[1, i] = h * f[i] - dy
        F[2, i] = 2.0 * dy - h * (f_new[i] + f[i])
    for r in range(4):
        for i in range(n):
            acc = 0.0
            for j in range(16):
                acc += D[r, j] * K[j, i]
            F[3 + r, i] = h * acc


@njit(cache=True)
def _dense_eval(F, y_old, x, out):
    n = y_old.size
    for i in range(n):
        out[i] = 0.0
    for k in range(7):
        idx = 6 - k
        for i in range(n):
            out[i] += F[idx, i]
            if k % 2 == 0:
                out[i] *= x
            else:
                out[i] *= 1.0 - x
    for i in range(n):
        out[i] += y_old[i]


@njit(cache=True)
def _pdot(y, v):
    # dp/dt = v Im(conj(a) b)
    return v * (y[0] * y[3] - y[1] * y[2])


@njit(cache=True)
def _wrap_near(angle, ref):
    return angle + 2.0 * math.pi * np.round((ref - angle) / (2.0 * math.pi))


@njit(cache=True)
def _lam_from(y, gauge, offset, pred):
    if gauge == 1:
        ang = math.atan2(y[3], y[2])
    else:
        ang = math.atan2(y[1], y[0])
    return _wrap_near(ang + offset, pred)


@njit(cache=True)
def _store(row, t, R, y, lam):
    row[0] = t
    row[1] = R
    for i in range(6):
        row[2 + i] = y[i]
    row[8] = lam


@njit(cache=True)
def sweep_kernel(y0, t0, t1, R0, alpha, c, v, rtol, atol, handoff, sample_dt,
                 cycle_stride, samples, cycles, max_steps, max_step):
    """Integrate from ``t0`` to ``t1``; fills ``samples`` and ``cycles`` in place.

    Returns ``(n_samples, n_cycles, status, t_reached, n_steps, norm_drift)``.
    """
    n = 6
    y = y0.copy()
    gauge = 1
    if y[2] * y[2] + y[3] * y[3] < handoff:
        gauge = 0
    offset = 0.0
    lam = math.atan2(y[3], y[2]) if gauge == 1 else math.atan2(y[1], y[0])
    K = np.empty((16, n))
    F = np.empty((7, n))
    f = np.empty(n)
    y_new = np.empty(n)
    tmp = np.empty(n)
    yd = np.empty(n)
    _rhs(t0, y, R0, alpha, c, v, gauge, f)

    n_samp = 0
    n_cyc = 0
    max_samp = samples.shape[0]
    max_cyc = cycles.shape[0]
    _store(samples[0], t0, R0 + alpha * t0, y, lam)
    n_samp = 1
    next_sample = t0 + sample_dt

    t = t0
    scale_f = max(abs(R0), abs(R0 + alpha * (t1 - t0)), c, v, 1.0)
    h_abs = min(0.01 / scale_f, max_step)
    have_cycle = False
    last_cross_t = t0
    last_cross_aa = 0.0
    last_cross_dyn = 0.0
    last_psi = np.zeros(4)
    cycle_count = 0
    norm_drift = 0.0
    steps = 0
    pd_old = _pdot(y, v)

    while t < t1:
        if steps >= max_steps:
            return n_samp, n_cyc, MAX_STEPS, t, steps, norm_drift
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs > max_step:
            h_abs = max_step
        rejected = False
        while True:
            if h_abs < min_step:
                return n_samp, n_cyc, STEP_UNDERFLOW, t, steps, norm_drift
            h = h_abs
            t_new = t + h
            if t_new > t1:
                t_new = t1
            h = t_new - t
            h_abs = h
            # stages
            for i in range(n):
                K[0, i] = f[i]
            for s in range(1, _NS):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A[s, j] * K[j, i]
                    tmp[i] = y[i] + h * acc
                _rhs(t + C[s] * h, tmp, R0, alpha, c, v, gauge, K[s])
            for i in range(n):
                acc = 0.0
                for j in range(_NS):
                    acc += B[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            _rhs(t_new, y_new, R0, alpha, c, v, gauge, K[_NS])
            # error estimate
            e5 = 0.0
            e3 = 0.0
            for i in range(n):
                sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
                a5 = 0.0
                a3 = 0.0
                for j in range(_NS + 1):
                    a5 += E5[j] * K[j, i]
                    a3 += E3[j] * K[j, i]
                e5 += (a5 / sc) ** 2
                e3 += (a3 / sc) ** 2
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h * e5 / math.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                h_next = h_abs * factor
                break
            h_abs *= max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
            rejected = True
        steps += 1
        f_new = K[_NS]
        lam_pred = lam + (y_new[4] - y[4]) + (y_new[5] - y[5])
        pd_new = _pdot(y_new, v)
        dense_ready = False

        # uniform samples
        while next_sample <= t_new and n_samp < max_samp:
            if not dense_ready:
                _dense_coeffs(t, y, f, h, y_new, f_new, K, R0, alpha, c, v, gauge, F)
                dense_ready = True
            _dense_eval(F, y, (next_sample - t) / h, yd)
            lp = lam + (yd[4] - y[4]) + (yd[5] - y[5])
            _store(samples[n_samp], next_sample, R0 + alpha * next_sample, yd,
                   _lam_from(yd, gauge, offset, lp))
            n_samp += 1
            next_sample = t0 + n_samp * sample_dt

        # quasi-cycle crossing: maximum of p
        if pd_old > 0.0 and pd_new <= 0.0:
            if not dense_ready:
                _dense_coeffs(t, y, f, h, y_new, f_new, K, R0, alpha, c, v, gauge, F)
                dense_ready = True
            lo = 0.0
            hi = 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                _dense_eval(F, y, mid, yd)
                if _pdot(yd, v) > 0.0:
                    lo = mid
                else:
                    hi = mid
            xc = 0.5 * (lo + hi)
            _dense_eval(F, y, xc, yd)
            tc = t + xc * h
            if have_cycle:
                cycle_count += 1
                if cycle_count % cycle_stride == 0 and n_cyc < max_cyc:
                    lp = lam + (yd[4] - y[4]) + (yd[5] - y[5])
                    row = cycles[n_cyc]
                    _store(row, tc, R0 + alpha * tc, yd, _lam_from(yd, gauge, offset, lp))
                    ov_re = (last_psi[0] * yd[0] + last_psi[1] * yd[1]
                             + last_psi[2] * yd[2] + last_psi[3] * yd[3])
                    ov_im = (last_psi[0] * yd[1] - last_psi[1] * yd[0]
                             + last_psi[2] * yd[3] - last_psi[3] * yd[2])
                    row[9] = math.atan2(ov_im, ov_re) - (yd[5] - last_cross_dyn)
                    row[10] = yd[4] - last_cross_aa
                    row[11] = tc - last_cross_t
                    n_cyc += 1
            have_cycle = True
            last_cross_t = tc
            last_cross_aa = yd[4]
            last_cross_dyn = yd[5]
            for i in range(4):
                last_psi[i] = yd[i]

        # accept: renormalize, update phase, maybe hand the gauge over
        nrm2 = y_new[0] ** 2 + y_new[1] ** 2 + y_new[2] ** 2 + y_new[3] ** 2
        if abs(nrm2 - 1.0) > norm_drift:
            norm_drift = abs(nrm2 - 1.0)
        inv = 1.0 / math.sqrt(nrm2)
        for i in range(4):
            y_new[i] *= inv
        lam = _lam_from(y_new, gauge, offset, lam_pred)
        pop_g = y_new[2] ** 2 + y_new[3] ** 2 if gauge == 1 else y_new[0] ** 2 + y_new[1] ** 2
        if pop_g < handoff:
            gauge = 1 - gauge
            ang = math.atan2(y_new[3], y_new[2]) if gauge == 1 else math.atan2(y_new[1], y_new[0])
            offset = lam - ang
        elif gauge == 0 and y_new[2] ** 2 + y_new[3] ** 2 >= 10.0 * handoff:
            gauge = 1
            offset = lam - math.atan2(y_new[3], y_new[2])
        for i in range(n):
            y[i] = y_new[i]
        _rhs(t_new, y, R0, alpha, c, v, gauge, f)
        pd_old = pd_new
        t = t_new
        h_abs = h_next

    if n_samp < max_samp and samples[n_samp - 1, 0] < t1 - 1e-12 * max(1.0, abs(t1)):
        _store(samples[n_samp], t1, R0 + alpha * t1, y, lam)
        n_samp += 1
    return n_samp, n_cyc, OK, t, steps, norm_drift
