import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from nlsadiabatic.dynamics import evolve_quantum
from nlsadiabatic.errors import DegenerateSpectrum, NotClosed, NotPeriodic, UnsupportedTopology
from nlsadiabatic.geometry import (aa_phase, action, compute_orbit, linear_actions, loop_integral,
                                   shoelace_area)
from nlsadiabatic.models import LinearModel, TwoLevelModel
from nlsadiabatic.state import ProjectiveCoords, reconstruct
from nlsadiabatic.stationary import assign_labels, find_fixed_points

TWO_PI = 2 * math.pi


def _labelled(c=2.0, v=1.0, R=-0.05):
    return {f.label: f for f in assign_labels(find_fixed_points(TwoLevelModel(c, v), R))}


def _superposition(upper_pop, phase=0.0):
    """Linear two-level (v = 1, R = 0) state with the given upper-level population."""
    up = np.array([1, 1]) / math.sqrt(2)
    low = np.array([1, -1]) / math.sqrt(2)
    return math.sqrt(1 - upper_pop) * low + math.sqrt(upper_pop) * np.exp(1j * phase) * up


def test_fixed_point_has_no_phase():
    model = TwoLevelModel(2.0, 1.0)
    f = _labelled()["f1"]
    tr = evolve_quantum(f.state(), model, -0.05, (0, 5), t_eval=np.linspace(0, 5, 65))
    assert abs(aa_phase(tr)) < 1e-10
    assert action(tr) == 0.0


def test_linear_superposition_phase():
    model = TwoLevelModel(0.0, 1.0)
    orbit = compute_orbit(model, _superposition(0.25), 0.0)
    assert abs(orbit.tau - TWO_PI) < 1e-6
    assert abs(abs(orbit.gamma_loop) - TWO_PI * 0.25) < 1e-6
    assert abs(orbit.action - 0.25) < 1e-6
    assert abs(orbit.gamma_mod - TWO_PI * orbit.action) < 1e-6


def test_libration_area_matches_shoelace():
    model = TwoLevelModel(2.0, 1.0)
    f = _labelled()["f2"]
    orbit = compute_orbit(model, reconstruct(ProjectiveCoords([f.p + 0.02], [f.q])), -0.05,
                          n_samples=4096)
    tr = orbit.trajectory
    assert orbit.kind == "libration" and orbit.winding == 0
    area = shoelace_area(tr.Q[:-1, 0], tr.P[:-1, 0])
    assert abs(orbit.gamma_loop - area) < 1e-5
    assert abs(orbit.gamma_aa - orbit.gamma_loop) < 1e-6


@pytest.mark.parametrize("dp", [1e-3, 5e-4])
def test_harmonic_action(dp):
    model = TwoLevelModel(2.0, 1.0)
    f = _labelled()["f1"]
    coords = ProjectiveCoords([f.p + dp], [f.q])
    dE = model.classical_hamiltonian(coords.as_vector(), -0.05) - f.total_energy
    assert dE / f.omega <= 1e-3
    orbit = compute_orbit(model, reconstruct(coords), -0.05)
    assert abs(orbit.action / (dE / f.omega) - 1) < 1e-2


def test_nested_orbits_increase_action():
    model = TwoLevelModel(2.0, 1.0)
    f = _labelled()["f1"]
    actions = [compute_orbit(model, reconstruct(ProjectiveCoords([f.p + d], [f.q])), -0.05).action
               for d in (0.005, 0.01, 0.02, 0.03)]
    assert np.all(np.diff(actions) > 0)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
@settings(max_examples=15)
def test_aa_equals_two_pi_action(seed, c):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=2) + 1j * rng.normal(size=2)
    model = TwoLevelModel(c, 1.0)
    R = rng.uniform(-0.5, 0.5)
    try:
        orbit = compute_orbit(model, z, R, max_time=300)
    except NotPeriodic:
        # separatrix-adjacent orbits may not return within max_time
        assume(False)
    # ledger quadrature and canonical loop integral agree, and both are 2 pi I mod 2 pi
    assert abs(math.remainder(orbit.gamma_aa - orbit.gamma_loop, TWO_PI)) < 1e-6
    d = math.remainder(orbit.gamma_loop - TWO_PI * orbit.action, TWO_PI)
    assert abs(d) < 1e-6
    assert abs(math.remainder(orbit.gamma_mod - orbit.gamma_loop, TWO_PI)) < 1e-6


@pytest.mark.parametrize("pop", [0.5, 0.5 + 1e-4, 0.5 - 1e-7])
def test_orbits_through_and_near_a_pole(pop):
    orbit = compute_orbit(TwoLevelModel(0.0, 1.0), _superposition(pop), 0.0)
    assert abs(orbit.action - pop) < 1e-6
    assert abs(math.remainder(orbit.gamma_aa - TWO_PI * pop, TWO_PI)) < 1e-6
    assert abs(math.remainder(orbit.gamma_mod - TWO_PI * pop, TWO_PI)) < 1e-6


def test_gauge_invariance():
    model = TwoLevelModel(2.0, 1.0)
    orbit = compute_orbit(model, reconstruct(ProjectiveCoords([0.8], [2.5])), -0.05)
    tr = orbit.trajectory
    g1, _ = loop_integral(tr.times, tr.states, gauge_index=1)
    g0, _ = loop_integral(tr.times, tr.states, gauge_index=0)
    assert abs(math.remainder(g1 - g0, TWO_PI)) < 1e-8


def test_rotation_orbit():
    # linear Rabi orbits wind the relative phase once per period
    orbit = compute_orbit(TwoLevelModel(0.0, 1.0), [1, 0.3j], 0.0)
    assert orbit.kind == "rotation" and abs(orbit.winding) == 1
    assert abs(math.remainder(orbit.gamma_loop - orbit.gamma_aa, TWO_PI)) < 1e-6


def test_not_closed():
    tr = evolve_quantum([0.6, 0.8], TwoLevelModel(0.0, 1.0), 0.0, (0, 2.0), t_eval=np.linspace(0, 2, 9))
    with pytest.raises(NotClosed):
        aa_phase(tr)


def test_multi_level_orbit_unsupported():
    model = LinearModel(np.diag([2.0, 1.0, 0.0]))
    tr = evolve_quantum(np.ones(3) / math.sqrt(3), model, 0.0, (0, TWO_PI),
                        t_eval=np.linspace(0, TWO_PI, 65))
    with pytest.raises(UnsupportedTopology):
        action(tr)


def test_linear_actions_three_levels():
    model = LinearModel(np.diag([2.0, 1.0, 0.0]))
    np.testing.assert_allclose(linear_actions([0.6, 0.8, 0.0], model), [0.36, 0.64], atol=1e-15)
    np.testing.assert_allclose(linear_actions([0, 0, 1.0], model), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(linear_actions([1.0, 0, 0], model), [1.0, 0.0], atol=1e-15)


def test_linear_actions_degenerate():
    with pytest.raises(DegenerateSpectrum):
        linear_actions([0.6, 0.8], LinearModel(np.eye(2)))


@given(st.floats(0.02, 0.98), st.floats(-math.pi, math.pi))
@settings(max_examples=15)
def test_linear_actions_match_dynamics(pop, phase):
    state = _superposition(pop, phase)
    dynamic = compute_orbit(TwoLevelModel(0.0, 1.0), state, 0.0).action
    static = linear_actions(state, LinearModel.two_level(1.0))[0]
    assert abs(static - pop) < 1e-12
    assert abs(dynamic - static) < 1e-6


def test_orbit_report(tmp_path):
    orbit = compute_orbit(TwoLevelModel(0.0, 1.0), _superposition(0.25), 0.0)
    rep = orbit.report()
    for key in ("tau", "I", "gamma_aa", "kind", "winding", "omega"):
        assert key in rep
    orbit.to_json(tmp_path / "o.json")
    assert (tmp_path / "o.json").read_text().startswith("{")
