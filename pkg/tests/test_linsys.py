import numpy as np
import pytest
import scipy.linalg
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from resetloop import presets
from resetloop.errors import (
    DegreeOverflow,
    ImproperTransferFunction,
    NonFinite,
    PoleOnAxis,
    SingularTustin,
)
from resetloop.linsys import (
    Polynomial,
    StateSpace,
    TransferFunction,
    expm,
    gain,
    impulse_response,
    integrator,
    limit_at_zero,
    lowpass,
    ss_freqresp,
    dss_freqresp,
    dss_simulate,
    tf_eval,
    tf_feedback_unity,
    tf_parallel,
    tf_sensitivity,
    tf_series,
    tf_to_ss,
    tf_to_ss_scaled,
    tustin,
)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# --- polynomials and transfer functions ------------------------------------


def test_polynomial_trims_trailing_zeros():
    p = Polynomial([1.0, 2.0, 0.0, 0.0])
    assert p.degree == 1
    assert np.array_equal(p.coef, [1.0, 2.0])


def test_zero_polynomial():
    assert Polynomial([0.0, 0.0]).is_zero()


def test_zero_denominator_rejected():
    with pytest.raises(Exception):
        TransferFunction([1.0], [0.0])


def test_properness_queries():
    assert TransferFunction([1.0], [1.0, 1.0]).is_strictly_proper
    assert TransferFunction([1.0, 1.0], [1.0, 1.0]).is_proper
    assert not TransferFunction([1.0, 1.0], [1.0]).is_proper


def test_plant_dc_gain():
    assert abs(tf_eval(presets.plant(), 1e-9)) == pytest.approx(6.615e5 / 5.837e5, rel=1e-9)


def test_unit_gain_eval():
    assert tf_eval(gain(1.0), 123.0) == 1 + 0j


def test_integrator_eval():
    g = tf_eval(integrator(125.7), 125.7)
    assert abs(g) == pytest.approx(1.0, rel=1e-12)
    assert np.degrees(np.angle(g)) == pytest.approx(-90.0, abs=1e-10)


def test_pole_on_axis():
    with pytest.raises(PoleOnAxis):
        tf_eval(integrator(), 0.0)
    osc = TransferFunction([1.0], [4.0, 0.0, 1.0])
    with pytest.raises(PoleOnAxis):
        tf_eval(osc, 2.0)


def test_series_identity():
    g = presets.plant()
    assert rel(tf_eval(tf_series(gain(1.0), g), 30.0), tf_eval(g, 30.0)) < 1e-12


def test_feedback_unity_is_one_minus_sensitivity():
    L = tf_series(integrator(300.0), lowpass(2000.0))
    for w in (1.0, 50.0, 300.0, 5e3):
        t = tf_eval(tf_feedback_unity(L), w)
        s = tf_eval(tf_sensitivity(L), w)
        assert abs(t - (1 - s)) < 1e-12


def test_case2_loop_matches_factor_product():
    top = presets.case(2)
    w = 2 * np.pi * 40
    L = tf_series(top.c1, tf_parallel(integrator(125.7), top.c2), top.c3, top.plant, top.c4)
    direct = (125.7 / (1j * w) + 1) * tf_eval(top.c3, w) * tf_eval(top.plant, w)
    assert rel(tf_eval(L, w), direct) < 1e-9


def test_degree_cap():
    g = TransferFunction([1.0], [1.0, 1.0])
    with pytest.raises(DegreeOverflow):
        tf_series(*([g] * 65))


def test_serialization_roundtrip():
    g = presets.plant()
    h = TransferFunction.from_dict(g.to_dict())
    assert rel(tf_eval(h, 70.0), tf_eval(g, 70.0)) < 1e-15


stable_tf = st.builds(
    lambda z, p, k: tf_series(gain(k), TransferFunction([z, 1.0], [p, 1.0])),
    st.floats(0.1, 1e3),
    st.floats(0.1, 1e3),
    st.floats(0.1, 10.0),
)


@settings(max_examples=50, deadline=None)
@given(stable_tf, stable_tf, st.lists(st.floats(1e-2, 1e4), min_size=1, max_size=20))
def test_series_composition_property(a, b, ws):
    for w in ws:
        assert rel(tf_eval(tf_series(a, b), w), tf_eval(a, w) * tf_eval(b, w)) < 1e-10


# --- realizations -----------------------------------------------------------


def test_static_gain_realization():
    ss = tf_to_ss(gain(3.5))
    assert ss.n_states == 0
    assert ss.D[0, 0] == 3.5


def test_integrator_realization():
    ss = tf_to_ss(integrator())
    assert np.array_equal(ss.A, [[0.0]])
    assert np.array_equal(ss.B, [[1.0]])
    assert np.array_equal(ss.C, [[1.0]])
    assert np.array_equal(ss.D, [[0.0]])


def test_improper_realization_rejected():
    with pytest.raises(ImproperTransferFunction):
        tf_to_ss(TransferFunction([1.0, 1.0], [1.0]))


@pytest.mark.parametrize("realize", [tf_to_ss, tf_to_ss_scaled])
def test_plant_realization_frequency_response(realize):
    P = presets.plant()
    ss = realize(P)
    assert ss.n_states == 2
    for f in np.logspace(0, 4, 100):
        w = 2 * np.pi * f
        assert rel(ss_freqresp(ss, w)[0, 0], tf_eval(P, w)) < 1e-9


@pytest.mark.parametrize("k", range(1, 7))
def test_case_controller_realizations(k):
    c3 = tf_series(presets.case(k).c3, presets.plant())
    ss = tf_to_ss_scaled(c3)
    for w in np.logspace(0, 5, 40):
        assert rel(ss_freqresp(ss, w)[0, 0], tf_eval(c3, w)) < 1e-9


# --- matrix exponential ------------------------------------------------------


def test_expm_zero():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))


def test_expm_diagonal():
    E = expm(np.diag([0.3, -2.0]))
    assert np.allclose(E, np.diag(np.exp([0.3, -2.0])), rtol=1e-13, atol=0)


def test_expm_nilpotent():
    assert np.allclose(expm(np.array([[0.0, 1.0], [0.0, 0.0]])), [[1.0, 1.0], [0.0, 1.0]], rtol=0, atol=1e-15)


def test_expm_overflow():
    with pytest.raises(NonFinite):
        expm(np.array([[1e4]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e6))
def test_expm_matches_scipy(seed, scale):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    A *= scale / np.linalg.norm(A, 1)
    # keep the result representable
    A -= np.eye(4) * max(np.max(np.linalg.eigvals(A).real), 0) * 1.0
    ref = scipy.linalg.expm(A)
    got = expm(A)
    assert np.linalg.norm(got - ref) <= 1e-12 * max(np.linalg.norm(ref), 1e-300) * max(1.0, scale / 1e3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_expm_group_property(seed, t1, t2):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    A *= 10.0 / max(np.linalg.norm(A, 2), 1e-12)
    lhs = expm(A * t1) @ expm(A * t2)
    rhs = expm(A * (t1 + t2))
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


# --- impulse responses ---------------------------------------------------------


def test_integrator_impulse_is_unit_step():
    t = np.linspace(0.01, 1.0, 50)
    h = impulse_response(tf_to_ss(integrator()), t).samples[:, 0, 0]
    assert np.allclose(h, 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("method", ["auto", "expm"])
@pytest.mark.parametrize("grid", ["uniform", "irregular"])
def test_first_order_impulse(method, grid):
    a = 37.0
    t = np.linspace(0.0, 0.2, 301) if grid == "uniform" else np.sort(np.random.default_rng(1).uniform(0, 0.2, 200))
    h = impulse_response(tf_to_ss(TransferFunction([1.0], [a, 1.0])), t, method=method).samples[:, 0, 0]
    assert np.allclose(h, np.exp(-a * t), rtol=1e-10, atol=1e-14)


def test_zero_system_impulse():
    ss = StateSpace([[-1.0]], [[1.0]], [[0.0]], [[0.0]])
    assert not np.any(impulse_response(ss, np.linspace(0, 1, 10)).samples)


def test_feedthrough_is_flagged_not_folded():
    ss = tf_to_ss(TransferFunction([2.0, 1.0], [1.0, 1.0]))
    ir = impulse_response(ss, np.array([0.0, 0.5]))
    assert ir.has_feedthrough
    # (s+2)/(s+1) = 1 + 1/(s+1)
    assert ir.samples[0, 0, 0] == pytest.approx(1.0)
    assert ir.samples[1, 0, 0] == pytest.approx(np.exp(-0.5))


def test_defective_matrix_uses_exponential_route():
    # double pole: eigenvectors are degenerate, so the modal route must refuse
    ss = tf_to_ss(TransferFunction([1.0], [1.0, 2.0, 1.0]))
    t = np.linspace(0, 5, 101)
    h = impulse_response(ss, t).samples[:, 0, 0]
    assert np.allclose(h, t * np.exp(-t), rtol=1e-10, atol=1e-14)
    with pytest.raises(NonFinite):
        impulse_response(ss, t, method="modal")


# --- Tustin --------------------------------------------------------------------


def test_tustin_static_gain():
    d = tustin(tf_to_ss(gain(4.0)), 1e4)
    assert d.n_states == 0 and d.D[0, 0] == 4.0


def test_tustin_integrator_slope():
    fs = 1e4
    d = tustin(tf_to_ss(integrator()), fs)
    y = dss_simulate(d, np.ones(1000))[:, 0]
    # trapezoid of a unit step: y_k = (k + 1/2)/fs
    assert np.allclose(np.diff(y) * fs, 1.0, rtol=0, atol=1e-9)
    assert y[0] == pytest.approx(0.5 / fs, abs=1e-15)


def test_tustin_matches_scipy_bilinear():
    ss = tf_to_ss(presets.plant())
    d = tustin(ss, 1e4)
    Ad, Bd, Cd, Dd, _ = scipy.signal.cont2discrete((ss.A, ss.B, ss.C, ss.D), 1e-4, method="bilinear")
    for f in (1.0, 10.0, 100.0, 1000.0):
        w = 2 * np.pi * f
        z = np.exp(1j * w * 1e-4)
        ref = (Cd @ np.linalg.solve(z * np.eye(2) - Ad, Bd) + Dd)[0, 0]
        assert rel(dss_freqresp(d, w)[0, 0], ref) < 1e-10


def test_tustin_dc_gain_and_warping():
    P = presets.plant()
    d = tustin(tf_to_ss(P), 1e4)
    dc = (d.C @ np.linalg.solve(np.eye(2) - d.A, d.B) + d.D)[0, 0]
    assert rel(dc, tf_eval(P, 0.0)) < 1e-10
    w = 2 * np.pi * 10
    assert rel(dss_freqresp(d, w)[0, 0], tf_eval(P, w)) < 1e-3


def test_tustin_singular():
    fs = 1e4
    with pytest.raises(SingularTustin):
        tustin(StateSpace([[2 * fs]], [[1.0]], [[1.0]], [[0.0]]), fs)


# --- limits at zero ---------------------------------------------------------------


def test_limit_finite():
    lim = limit_at_zero(TransferFunction([2.0, 1.0], [4.0, 1.0]))
    assert lim.kind == "finite" and lim.value == 0.5


def test_limit_cancelled():
    lim = limit_at_zero(TransferFunction([0.0, 1.0], [0.0, 1.0, 1.0]))
    assert lim.kind == "zero_over_zero_resolved" and lim.value == 1.0


def test_limit_infinite():
    assert limit_at_zero(integrator()).kind == "infinite"


@settings(max_examples=50, deadline=None)
@given(stable_tf)
def test_limit_agrees_with_evaluation(g):
    lim = limit_at_zero(g)
    assert lim.kind == "finite"
    assert rel(tf_eval(g, 1e-8).real, lim.value) < 1e-4
