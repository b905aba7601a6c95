import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import label
from scipy.optimize import fsolve

from nlsadiabatic.dynamics import find_period
from nlsadiabatic.errors import NotStationary, StepCollapse
from nlsadiabatic.models import LinearModel, TwoLevelModel
from nlsadiabatic.state import ProjectiveCoords, reconstruct
from nlsadiabatic.stationary import (ContinuationConfig, assign_labels, classify, continue_branches,
                                     detect_collision, find_fixed_points, fold_bias)


@pytest.fixture(scope="module")
def loop_diagram():
    return continue_branches(TwoLevelModel(2.0, 1.0), (-4.0, 4.0))


def _qp(fps):
    # q folded into [0, 2 pi) so that -1e-12 lands on 0
    return sorted((round(math.remainder(f.q, 2 * math.pi), 9) % round(2 * math.pi, 9), round(f.p, 9))
                  for f in fps)


def test_census_weak_coupling():
    fps = find_fixed_points(TwoLevelModel(1.0, 2.0), 0.0)
    assert _qp(fps) == [(0.0, 0.5), (round(math.pi, 9), 0.5)]


def test_census_strong_coupling():
    fps = find_fixed_points(TwoLevelModel(2.0, 1.0), 0.0)
    h = math.sqrt(3) / 4
    expected = sorted([(0.0, 0.5), (round(math.pi, 9), 0.5), (round(math.pi, 9), round(0.5 + h, 9)),
                       (round(math.pi, 9), round(0.5 - h, 9))])
    assert _qp(fps) == expected


def _sign_change_count(c, v, R, n=801):
    """Brute-force count of grad roots: cells where both gradient components change sign."""
    q = np.linspace(-0.5, 2 * math.pi - 0.5, n)
    p = np.linspace(1e-4, 1 - 1e-4, n)
    Q, P = np.meshgrid(q, p)
    s = np.sqrt(P * (1 - P))
    gq = -v * s * np.sin(Q)
    gp = v * (1 - 2 * P) / (2 * s) * np.cos(Q) + R - c * (2 * P - 1)

    def changes(g):
        m = np.sign(g)
        return (m[:-1, :-1] != m[1:, :-1]) | (m[:-1, :-1] != m[:-1, 1:]) | (m[:-1, :-1] != m[1:, 1:])

    # a root sits where both components change sign; adjacent flagged cells form one cluster
    return label(changes(gq) & changes(gp))[1]


@pytest.mark.parametrize("R", [1.0, -1.0, 0.2, 0.0])
def test_census_matches_sign_change_scan(R):
    fps = find_fixed_points(TwoLevelModel(2.0, 1.0), R)
    assert len(fps) == _sign_change_count(2.0, 1.0, R)
    assert len(fps) == (2 if abs(R) > fold_bias(2.0, 1.0) else 4)


def test_classify_examples():
    model = TwoLevelModel(2.0, 1.0)
    hyp = classify(ProjectiveCoords([0.5], [math.pi]), model, 0.0)
    assert hyp.stability == "hyperbolic"
    np.testing.assert_allclose(np.sort(hyp.eigenvalues.real), [-1, 1], atol=1e-12)
    for p in (0.5 + math.sqrt(3) / 4, 0.5 - math.sqrt(3) / 4):
        ell = classify(ProjectiveCoords([p], [math.pi]), model, 0.0)
        assert ell.stability == "elliptic"
        assert abs(ell.omega - math.sqrt(3)) < 1e-6
    lin = classify(ProjectiveCoords([0.5], [0.0]), TwoLevelModel(0.0, 1.0), 0.0)
    assert lin.stability == "elliptic" and abs(lin.omega - 1) < 1e-12


def test_classify_rejects_non_stationary():
    with pytest.raises(NotStationary):
        classify(ProjectiveCoords([0.3], [1.0]), TwoLevelModel(2.0, 1.0), 0.0)


@given(st.floats(0.1, 3.0), st.floats(0.2, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=30)
def test_fixed_point_invariants(c, v, R):
    model = TwoLevelModel(c, v)
    fps = find_fixed_points(model, R)
    # count: 2, or 4 inside the loop (saddle-node boundaries excluded)
    Rs = fold_bias(c, v)
    if abs(abs(R) - Rs) > 1e-3:
        assert len(fps) == (4 if abs(R) < Rs else 2)
    for f in fps:
        assert f.residual < 1e-10
        assert f.quantum_residual < 1e-8
        assert f.spectrum_asymmetry < 1e-8
        sz = 2 * f.p - 1
        assert abs(f.chemical_potential - (f.total_energy - c / 4 * sz ** 2)) < 1e-10
        # mirror (p, R) -> (1 - p, -R) with the same spectrum
        m = classify(ProjectiveCoords([1 - f.p], [f.q]), model, -R)
        assert m.stability == f.stability
        np.testing.assert_allclose(np.sort_complex(m.eigenvalues), np.sort_complex(f.eigenvalues),
                                   atol=1e-8)


def test_labels_at_reference_portrait():
    fps = assign_labels(find_fixed_points(TwoLevelModel(2.0, 1.0), -0.05))
    by = {f.label: f for f in fps}
    assert set(by) == {"f1", "f2", "f3", "f4"}
    assert by["f3"].stability == "hyperbolic"
    assert by["f1"].total_energy < by["f4"].total_energy < by["f2"].total_energy
    assert abs(by["f2"].q) < 1e-9 and abs(abs(by["f1"].q) - math.pi) < 1e-9
    assert by["f1"].p > 0.5 > by["f4"].p


def test_weak_coupling_branches():
    d = continue_branches(TwoLevelModel(1.0, 2.0), (-4.0, 4.0))
    assert len(d.branches) == 2
    assert d.turning_points == []
    assert detect_collision(d) == []
    for b in d.branches:
        assert set(b.stability) == {"elliptic"}
        assert b.R.min() == -4.0 and b.R.max() == 4.0
    # the two levels never meet; the closest approach is the gap v at R = 0
    R = np.linspace(-4.0, 4.0, 801)
    gap = np.abs(np.interp(R, d.branches[0].R, d.branches[0].E)
                 - np.interp(R, d.branches[1].R, d.branches[1].E))
    assert gap.min() > 2.0 - 1e-3 and abs(R[np.argmin(gap)]) < 0.02
    E0 = sorted(f.chemical_potential for f in find_fixed_points(TwoLevelModel(1.0, 2.0), 0.0))
    np.testing.assert_allclose(E0, [-1.0, 1.0], atol=1e-12)


def _fold_oracle(c, v):
    """Solve dH/dp = 0 and det Hess = 0 on q = pi for (p, R), independently of the package."""
    def eqs(x):
        p, R = x
        s = math.sqrt(p * (1 - p))
        dHdp = -v * (1 - 2 * p) / (2 * s) + R - c * (2 * p - 1)
        Hpp = v / (4 * s ** 3) - 2 * c
        return [dHdp, Hpp]
    out = []
    for guess in ([0.8, 0.4], [0.2, -0.4]):
        sol, info, ier, _ = fsolve(eqs, guess, full_output=True, xtol=1e-14)
        assert ier == 1
        out.append(sol[1])
    return sorted(out)


def test_turning_points(loop_diagram):
    oracle = _fold_oracle(2.0, 1.0)
    closed = fold_bias(2.0, 1.0)
    np.testing.assert_allclose(oracle, [-closed, closed], atol=1e-12)
    Rs = [tp.R for tp in loop_diagram.turning_points]
    np.testing.assert_allclose(Rs, oracle, atol=1e-9)
    events = {(c.elliptic, c.hyperbolic): c for c in detect_collision(loop_diagram)}
    assert set(events) == {("f1", "f3"), ("f4", "f3")}
    assert events[("f1", "f3")].R > 0 > events[("f4", "f3")].R
    assert all(c.marginal for c in events.values())


def test_branch_continuity(loop_diagram):
    cfg = ContinuationConfig()
    for b in loop_diagram.branches:
        z = np.column_stack([b.Q, np.unwrap(b.P, axis=0), b.R])
        assert np.linalg.norm(np.diff(z, axis=0), axis=1).max() < 2 * cfg.ds_max
        assert max(f.residual for f in b.points) < 1e-10


def test_count_along_R(loop_diagram):
    for R in np.linspace(-1.0, 1.0, 21):
        n = sum(int(np.sum((b.R[:-1] - R) * (b.R[1:] - R) <= 0)) for b in loop_diagram.branches)
        assert n == (4 if abs(R) < fold_bias(2.0, 1.0) else 2)


def test_omega_square_root_scaling(loop_diagram):
    """omega^2 vanishes like (R* - R)^(1/2) at the fold."""
    Rs = fold_bias(2.0, 1.0)
    model = TwoLevelModel(2.0, 1.0)
    dR = np.logspace(-7, -4, 8)
    omega = []
    for d in dR:
        f1 = [f for f in assign_labels(find_fixed_points(model, Rs - d)) if f.stability == "elliptic"
              and abs(abs(f.q) - math.pi) < 1e-6 and f.p > 0.5]
        assert len(f1) == 1
        omega.append(f1[0].omega)
    slope = np.polyfit(np.log(dR), np.log(np.square(omega)), 1)[0]
    assert abs(slope - 0.5) < 0.05


def test_omega_matches_small_orbit_period():
    model = TwoLevelModel(2.0, 1.0)
    f = [f for f in assign_labels(find_fixed_points(model, -0.05)) if f.label == "f2"][0]
    # period at shrinking radius, extrapolated linearly in radius^2 to zero
    rs = np.array([4e-3, 2e-3, 1e-3])
    freq = [2 * math.pi / find_period(model, reconstruct(ProjectiveCoords([f.p + r], [f.q])), -0.05)
            for r in rs]
    w0 = np.polyval(np.polyfit(rs ** 2, freq, 1), 0.0)
    assert abs(w0 / f.omega - 1) < 1e-3


def test_energy_asymptote():
    model = TwoLevelModel(2.0, 1.0)
    for R in (-100.0, -400.0):
        top = max(find_fixed_points(model, R), key=lambda f: f.p)
        assert top.p > 0.999 and abs(abs(top.q) - math.pi) < 1e-9
        # the nonlinear term shifts the level by c/2
        assert abs(top.chemical_potential - (R / 2 - 1.0)) / abs(R / 2) < 1e-3
    top = max(find_fixed_points(model, -400.0), key=lambda f: f.p)
    assert abs(top.chemical_potential - (-200.0)) / 200.0 < 1e-2


def test_linear_model_fixed_points_are_eigenvectors():
    H = np.array([[1.0, 0.3, 0.1j], [0.3, -0.4, 0.2], [-0.1j, 0.2, 0.5]])
    model = LinearModel(H)
    fps = find_fixed_points(model, 0.0, rng=np.random.default_rng(1))
    E = np.sort([f.chemical_potential for f in fps])
    np.testing.assert_allclose(E, np.linalg.eigvalsh(H), atol=1e-9)


def test_step_collapse_reports_location():
    cfg = ContinuationConfig(ds=1e-3, ds_min=1e-3, ds_max=1e-3, corrector_maxiter=1,
                             corrector_tol=1e-30)
    with pytest.raises(StepCollapse) as err:
        continue_branches(TwoLevelModel(2.0, 1.0), (-1.0, 1.0), cfg)
    assert err.value.location is not None


def test_diagram_export(tmp_path, loop_diagram):
    paths = loop_diagram.to_csv(tmp_path)
    assert len(paths) == len(loop_diagram.branches)
    head = paths[0].read_text().splitlines()[0]
    assert head == "R,q,p,E,H_cl,stability,omega,label"
    loop_diagram.to_json(tmp_path / "d.json")
    summary = json.loads((tmp_path / "d.json").read_text())
    assert len(summary["turning_points"]) == 2


def test_invalid_range():
    with pytest.raises(ValueError):
        continue_branches(TwoLevelModel(2.0, 1.0), (1.0, -1.0))
