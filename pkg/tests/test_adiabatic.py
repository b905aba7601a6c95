import csv
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsadiabatic.adiabatic import (LinearityWarning, SweepSpec, check_linear_endpoints,
                                    eigenstate_following, initial_state, invariance_report,
                                    level_basis, level_populations, mirror_spec, record_json, sweep,
                                    tunneling_probability)
from nlsadiabatic.dynamics import IntegratorConfig, evolve_quantum
from nlsadiabatic.errors import EndpointsNotLinear
from nlsadiabatic.models import TwoLevelModel
from nlsadiabatic.stationary import ContinuationConfig, continue_branches, fold_bias

STRONG = TwoLevelModel(2.0, 1.0)
WEAK = TwoLevelModel(0.5, 1.0)
LINEAR = TwoLevelModel(0.0, 1.0)


@pytest.fixture(scope="module")
def strong_diagram():
    return continue_branches(STRONG, (-1.0, 1.0), ContinuationConfig(ds_max=0.02))


@pytest.fixture(scope="module")
def linear_diagram():
    return continue_branches(LINEAR, (-10.0, 10.0), ContinuationConfig(ds_max=0.02))


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(R0=1.0, R1=1.0)
    with pytest.raises(ValueError):
        SweepSpec(R0=-1.0, R1=1.0, alpha=-1e-3)
    with pytest.raises(ValueError):
        SweepSpec(label="f1", state=(1, 0))
    with pytest.raises(ValueError):
        SweepSpec(upper_population=1.5)
    with pytest.raises(ValueError):
        SweepSpec(upper_population=None)
    assert SweepSpec().duration == pytest.approx(2e5)


@given(st.floats(-20, 20), st.floats(0.1, 3), st.floats(0, 1), st.floats(-math.pi, math.pi))
@settings(max_examples=50)
def test_level_populations(R, v, I, phase):
    low, up = level_basis(R, v)
    H = np.array([[R / 2, v / 2], [v / 2, -R / 2]])
    assert np.linalg.norm(H @ low + 0.5 * math.hypot(R, v) * low) < 1e-12
    assert np.linalg.norm(H @ up - 0.5 * math.hypot(R, v) * up) < 1e-12
    psi = math.sqrt(1 - I) * low + math.sqrt(I) * np.exp(1j * phase) * up
    p_low, p_up = level_populations(psi, R, v)
    assert abs(p_up[0] - I) < 1e-12 and abs(p_low[0] + p_up[0] - 1) < 1e-12


def test_initial_state_populations():
    spec = SweepSpec(upper_population=0.8)
    psi = initial_state(spec, STRONG)
    assert abs(level_populations(psi, -10.0, 1.0)[1][0] - 0.8) < 1e-14
    psi = initial_state(SweepSpec(state=(3, 4j)), STRONG)
    np.testing.assert_allclose(psi, [0.6, 0.8j])


def test_linear_endpoint_checks():
    with pytest.raises(EndpointsNotLinear):
        check_linear_endpoints(STRONG, (-9.0, 10.0))
    with pytest.warns(LinearityWarning):
        check_linear_endpoints(STRONG, (-10.0, 10.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_linear_endpoints(STRONG, (-40.0, 40.0))


def test_sweep_matches_direct_integration(strong_diagram):
    spec = SweepSpec(R0=-1.0, R1=1.0, alpha=1e-2, state=(0.6, 0.8), linear_endpoints=False,
                     sample_dR=0.05)
    rec = sweep(spec, STRONG, diagram=strong_diagram)
    ref = evolve_quantum(spec.state, STRONG, lambda t: -1.0 + 1e-2 * t, (0, spec.duration),
                         IntegratorConfig(rtol=1e-12, atol=1e-14), t_eval=rec.t)
    # compare projective states: populations and the relative phase
    assert np.abs(rec.p - ref.Q[:, 0]).max() < 1e-6
    rel = rec.states[:, 0] * np.conj(rec.states[:, 1])
    rel_ref = ref.states[:, 0] * np.conj(ref.states[:, 1])
    assert np.abs(rel - rel_ref).max() < 1e-6
    assert rec.norm_drift < 1e-9
    np.testing.assert_allclose(rec.R, -1.0 + 1e-2 * rec.t, atol=1e-12)


def test_mirror_sweep(strong_diagram):
    spec = SweepSpec(R0=-1.0, R1=1.0, alpha=1e-2, state=(0.6, 0.8j), linear_endpoints=False,
                     sample_dR=0.05)
    a = sweep(spec, STRONG, diagram=strong_diagram)
    b = sweep(mirror_spec(spec), STRONG, diagram=strong_diagram)
    np.testing.assert_allclose(b.R, -a.R, atol=1e-12)
    assert np.abs(b.p - (1 - a.p)).max() < 1e-6


def test_mirror_of_labelled_spec_is_rejected():
    with pytest.raises(ValueError):
        mirror_spec(SweepSpec(label="f1", upper_population=None))


def test_hyperbolic_point_breaks_down_at_rate_kappa(strong_diagram):
    spec = SweepSpec(R0=0.0, R1=0.05, alpha=1e-4, sample_dt=0.05, linear_endpoints=False)
    _, verdict = eigenstate_following("f3", STRONG, spec, diagram=strong_diagram)
    kappa = math.sqrt(STRONG.v * (STRONG.c - STRONG.v))
    assert verdict.verdict == "broke_down"
    assert abs(verdict.divergence_rate / kappa - 1) < 0.2
    assert verdict.R_break < 0.01


def test_elliptic_point_breaks_down_at_the_fold(strong_diagram):
    alpha = 1e-4
    spec = SweepSpec(R0=-0.05, R1=1.0, alpha=alpha, linear_endpoints=False)
    rec, verdict = eigenstate_following("f1", STRONG, spec, diagram=strong_diagram)
    Rs = fold_bias(2.0, 1.0)
    assert verdict.verdict == "broke_down"
    assert Rs <= verdict.R_break < Rs + 5 * math.sqrt(alpha)
    lost = [e for e in rec.events if e["event"] == "TrackingLost"]
    assert lost and abs(lost[0]["R"] - Rs) < 1e-6
    # followed closely until then
    before = rec.R < Rs - 0.05
    assert np.nanmax(rec.dist_fp[before]) < 0.01


@pytest.mark.parametrize("label", ["f1", "f2"])
def test_weak_coupling_eigenstates_follow(label):
    model = WEAK
    diagram = continue_branches(model, (-2.0, 2.0), ContinuationConfig(ds_max=0.02))
    spec = SweepSpec(R0=-2.0, R1=2.0, alpha=1e-3, linear_endpoints=False)
    rec, verdict = eigenstate_following(label, model, spec, diagram=diagram)
    assert verdict.verdict == "followed"
    assert np.nanmax(rec.dist_fp) < 0.05
    assert rec.omega_min > 0.5


def test_tunneling_needs_linear_endpoints(strong_diagram):
    rec = sweep(SweepSpec(R0=-1.0, R1=1.0, alpha=1e-2, linear_endpoints=False), STRONG,
                diagram=strong_diagram)
    with pytest.raises(EndpointsNotLinear):
        tunneling_probability(rec)


def test_linear_ladder_is_invariant(linear_diagram, tmp_path):
    recs = [sweep(SweepSpec(alpha=a, upper_population=0.3, rtol=1e-13, atol=1e-15), LINEAR,
                  diagram=linear_diagram) for a in (1e-3, 5e-4, 2.5e-4)]
    rep = invariance_report(recs)
    assert np.all(rep.action_drift < 1e-6)
    assert np.all(rep.population_drift < 1e-6)
    assert rep.monotone and rep.order > 1
    for r in recs:
        T = tunneling_probability(r)
        assert T.probability < 1e-6 and not T.omega_floor_hit
        # endpoint identity: the cycle action (mod 1) equals the upper level population
        assert abs(math.remainder(r.action[0] - r.pop_upper[0], 1.0)) < 1e-6
        assert abs(math.remainder(r.action[-1] - r.pop_upper[-1], 1.0)) < 1e-6
    assert [row["alpha"] for row in rep.rows()] == [1e-3, 5e-4, 2.5e-4]

    rec = recs[0]
    rec.to_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "R", "pop1", "pop2", "gamma_aa", "omega", "dist_fp"]
    assert len(rows) == len(rec) + 1
    record_json(rec, tmp_path / "s.json", {"note": 1})
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["note"] == 1 and data["spec"]["alpha"] == 1e-3
    # sample spacing stays below a tenth of the distance R moves per period
    dR = np.diff(rec.R).max()
    assert dR < 1e-3 * (2 * math.pi / rec.omega_min) / 10 + 1e-12
