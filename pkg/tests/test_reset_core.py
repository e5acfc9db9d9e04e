import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resetloop import presets
from resetloop.errors import ConfigError
from resetloop.linsys import TransferFunction, tf_eval
from resetloop.reset_core import (
    LoopTopology,
    ResetElement,
    base_loop,
    blc,
    bls_sensitivity,
    clegg,
    identity_jump,
    open_loop_reset_stable,
    resolvent_columns,
)
from resetloop.sidf import crossover


def rel(a, b):
    return abs(a - b) / abs(b)


def test_clegg_blc_is_integrator():
    g = blc(ResetElement([[0.0]], [[1.0]], [[1.0]], 0.0, 0.0))
    assert np.allclose(g.num.coef, [1.0]) and np.allclose(g.den.coef, [0.0, 1.0])


def test_feedthrough_only_blc():
    g = blc(ResetElement([[-1.0]], [[1.0]], [[0.0]], 2.5, 0.0))
    assert tf_eval(g, 17.0) == pytest.approx(2.5)


def test_case2_blc():
    r = presets.case(2).reset
    assert r.gamma == 0.0
    assert rel(tf_eval(blc(r), 3.0), 125.7 / 3j) < 1e-12


def test_case5_gamma():
    assert presets.case(5).reset.gamma == 0.3


def test_case6_shaper():
    cs = presets.case(6).cs
    assert rel(tf_eval(cs, 2.0), (2j + 1) / (2j + 2)) < 1e-14


def test_a_rho_structure():
    r = ResetElement(np.diag([-1.0, -2.0, -3.0]), [1, 1, 1], [1, 0, 1], 0.0, 0.4)
    assert np.array_equal(r.A_rho, np.diag([0.4, 1.0, 1.0]))


@settings(max_examples=60, deadline=None)
@given(st.one_of(st.floats(1.0, 1e6), st.floats(-1e6, -1.0)))
def test_gamma_outside_unit_interval_rejected(g):
    with pytest.raises(ConfigError):
        clegg(g)


def test_identity_jump_fixture_bypasses_gamma_check():
    r = identity_jump(clegg(0.0))
    assert np.array_equal(r.A_rho, np.eye(1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_blc_matches_direct_evaluation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    A = -np.diag(rng.uniform(1, 100, n)) + 0.3 * rng.normal(size=(n, n))
    r = ResetElement(A, rng.normal(size=n), rng.normal(size=n), rng.normal(), 0.2)
    g = blc(r)
    for w in rng.uniform(0.01, 1e4, 100):
        direct = r.C_R @ np.linalg.solve(1j * w * np.eye(n) - r.A_R, r.B_R) + r.D_R
        assert rel(tf_eval(g, w), direct[0, 0]) < 1e-9


def test_resolvent_columns():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    r = ResetElement(A, [1.0, 0.0], [1.0, 0.0])
    cols = np.array([[1.0, 0.0], [2.0, 1.0]])
    g = resolvent_columns(r, cols)
    w = 5.0
    ref = np.linalg.solve(1j * w * np.eye(2) - A, cols)
    got = np.array([tf_eval(x, w) for x in g]).reshape(2, 2)
    assert np.allclose(got, ref, rtol=1e-12)


def test_ci_stability_gamma_zero():
    rep = open_loop_reset_stable(clegg(0.0))
    assert rep.stable and rep.radius == 0.0


def test_ci_stability_radius_equals_gamma():
    rep = open_loop_reset_stable(clegg(0.3))
    assert rep.stable and rep.radius == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.999, 0.999))
def test_ci_stability_is_gamma_check(g):
    assert open_loop_reset_stable(clegg(g)).stable


def test_unstable_flow_detected():
    r = ResetElement([[0.5]], [[1.0]], [[1.0]], 0.0, 0.9)
    rep = open_loop_reset_stable(r)
    assert not rep.stable and rep.radius > 1.0


def test_bad_delta_grid():
    with pytest.raises(ConfigError):
        open_loop_reset_stable(clegg(0.0), [])
    with pytest.raises(ConfigError):
        open_loop_reset_stable(clegg(0.0), [0.0, 1.0])


def test_trivial_base_loop():
    top = LoopTopology(reset=clegg(0.0), plant=TransferFunction([1.0]))
    w = 3.0
    assert rel(tf_eval(base_loop(top), w), 1 / (1j * w) + 1) < 1e-14


def test_zero_loop_sensitivity():
    top = LoopTopology(reset=ResetElement([[-1.0]], [[1.0]], [[0.0]]), plant=TransferFunction([0.0]),
                       c2=TransferFunction([0.0]))
    assert tf_eval(bls_sensitivity(top), 4.0) == pytest.approx(1.0)


def test_sensitivity_rolls_off_to_one(cases):
    s = bls_sensitivity(cases[1])
    assert abs(tf_eval(s, 1e8)) == pytest.approx(1.0, abs=1e-3)


def test_case1_bls_crossover_near_100hz(cases):
    L = base_loop(cases[1])
    w = crossover(lambda w: tf_eval(L, w), 2 * np.pi, 2 * np.pi * 1e4)
    assert w / (2 * np.pi * 100) == pytest.approx(1.0, rel=0.05)


def test_case1_sensitivity_below_one_at_10hz(cases):
    assert abs(tf_eval(bls_sensitivity(cases[1]), 2 * np.pi * 10)) < 1


@pytest.mark.parametrize("k", range(1, 7))
def test_base_loop_is_factor_product(cases, k):
    top = cases[k]
    L = base_loop(top)
    for w in np.logspace(0, 4, 25):
        assert rel(tf_eval(L, w), top.base_loop_at(w)) < 1e-9


def test_case6_base_loop_independent_product(cases):
    top = cases[6]
    w = 2 * np.pi * 38
    s = 1j * w
    c1 = 1 / (s / (150 * np.pi) + 1)
    bl = 30 * np.pi / s + 1
    c3 = (20.5 * (s / (150 * np.pi) + 1) / (s / (3000 * np.pi) + 1) * (s / (62.5 * np.pi) + 1)
          / (s / (1440 * np.pi) + 1) * (1 + 15 * np.pi / s) / (s / (3000 * np.pi) + 1))
    p = 6.615e5 / (83.57 * s * s + 279.4 * s + 5.837e5)
    assert rel(tf_eval(base_loop(top), w), c1 * bl * c3 * p) < 1e-9


@pytest.mark.parametrize("name", sorted(presets.CATALOG))
def test_topology_json_roundtrip(name):
    top = presets.get(name)
    back = LoopTopology.from_dict(json.loads(json.dumps(top.to_dict())))
    assert back.reset.identity_jump == top.reset.identity_jump
    assert back.reset.gamma == top.reset.gamma
    for w in (3.0, 300.0, 3e4):
        assert rel(tf_eval(base_loop(back), w), tf_eval(base_loop(top), w)) < 1e-14


def test_ci_shorthand():
    d = presets.case(2).to_dict()
    d["reset"] = {"ci": {"gamma": 0.3}}
    top = LoopTopology.from_dict(d)
    assert top.reset.gamma == 0.3
    assert rel(top.reset.blc_response(2.0), 1 / 2j) < 1e-15


def test_malformed_topology():
    with pytest.raises(ConfigError):
        LoopTopology.from_dict({"reset": {"ci": {"gamma": 0.0}}})
