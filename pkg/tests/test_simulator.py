import numpy as np
import pytest

from resetloop import presets
from resetloop.errors import ConfigError, NonFiniteState, UnstableBLS
from resetloop.linsys import TransferFunction, dss_simulate, gain, tf_to_ss_scaled, tustin
from resetloop.reset_core import LoopTopology, ResetElement, bls_sensitivity, clegg
from resetloop.sidf import closed_sensitivity
from resetloop.simulator import (
    Composite,
    DiscreteLoop,
    Samples,
    SimulationConfig,
    Sine,
    boundary_frequency_sim,
    debounce,
    final_value_zs,
    metrics,
    simulate,
    step_response,
    sweep_metrics,
)

W = lambda f: 2 * np.pi * f  # noqa: E731


@pytest.fixture(scope="module")
def case1():
    return presets.case(1)


@pytest.fixture(scope="module")
def case1_50hz(case1):
    return simulate(case1, SimulationConfig(Sine(1.0, 50.0)))


@pytest.mark.parametrize("k, f", [(1, 10.0), (1, 50.0), (4, 7.0), (6, 20.0)])
def test_linear_fixture_matches_bls_tustin(k, f):
    top = presets.case(k)
    cfg = SimulationConfig(Sine(1.0, f), transient_cycles=3, measure_cycles=2)
    tr = simulate(top.linear_fixture(), cfg)
    assert tr.linear
    ref = dss_simulate(tustin(tf_to_ss_scaled(bls_sensitivity(top)), cfg.sample_rate), tr.r)[:, 0]
    assert np.max(np.abs(tr.channels["e"] - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_two_resets_per_cycle_at_50hz(case1_50hz):
    assert metrics(case1_50hz).resets_per_cycle == 2.0


def test_multiple_resets_at_10hz(case1):
    assert metrics(simulate(case1, SimulationConfig(Sine(1.0, 10.0)))).resets_per_cycle > 2


def test_resets_pair_half_a_period_apart(case1_50hz):
    tr = case1_50hz
    fs = tr.config.sample_rate
    half = fs / 50.0 / 2
    k0 = tr.measure_start()
    idx = tr.event_indices[tr.event_indices >= k0]
    assert idx.size >= 10
    for a in idx[:-1]:
        assert np.min(np.abs(idx - (a + half))) <= 2


def test_trigger_changes_sign_at_every_reset(case1):
    tr = simulate(case1, SimulationConfig(Sine(1.0, 15.0)))
    zs = tr.channels["z_s"]
    assert tr.reset_indices.size > 0
    for k in tr.reset_indices:
        j = k - 1
        while zs[j] == 0.0:
            j -= 1
        assert zs[j] * zs[k] < 0


def test_reset_instants_are_interpolated_inside_sample(case1_50hz):
    tr = case1_50hz
    T = 1 / tr.config.sample_rate
    lo = tr.t[tr.reset_indices - 1]
    assert np.all(tr.reset_instants >= lo - 1e-15)
    assert np.all(tr.reset_instants <= lo + T + 1e-15)


def test_reset_states_recorded_before_jump(case1_50hz):
    tr = case1_50hz
    assert len(tr.reset_states) == tr.reset_indices.size
    t_k, x = tr.reset_states[-1]
    assert t_k == tr.t[tr.reset_indices[-1]]
    assert x.shape == (1,) and x[0] != 0


@pytest.mark.parametrize("f", [5.0, 10.0, 50.0, 200.0])
def test_sample_rate_doubling(case1, f):
    a = metrics(simulate(case1, SimulationConfig(Sine(1.0, f), sample_rate=1e4)))
    b = metrics(simulate(case1, SimulationConfig(Sine(1.0, f), sample_rate=2e4)))
    assert abs(b.einf_over_rinf - a.einf_over_rinf) < 0.02 * a.einf_over_rinf
    assert (a.resets_per_cycle > 2.5) == (b.resets_per_cycle > 2.5)


def test_sensitivity_matches_sidf_at_50hz(case1_50hz):
    s = abs(closed_sensitivity(presets.case(1), W(50.0)))
    assert metrics(case1_50hz).einf_over_rinf == pytest.approx(s, rel=0.05)


@pytest.mark.parametrize("f", [60.0, 100.0, 300.0])
def test_sensitivity_cross_check_in_two_reset_regime(case1, f):
    m = metrics(simulate(case1, SimulationConfig(Sine(1.0, f))))
    assert m.resets_per_cycle == 2.0
    assert m.einf_over_rinf == pytest.approx(abs(closed_sensitivity(case1, W(f))), rel=0.10)


def _tail_mean(res):
    zs = res.trace.channels["z_s"]
    return float(np.mean(zs[int(0.75 * zs.size):]))


def test_final_value_matches_step_tail_linear_fixture(pcid_shaped):
    lim = final_value_zs(pcid_shaped)
    assert lim.kind == "zero_over_zero_resolved" and lim.value != 0
    res = step_response(pcid_shaped.linear_fixture(), noise_rms=0.0)
    assert _tail_mean(res) == pytest.approx(lim.value, rel=0.05)


def test_final_value_matches_step_tail(pcid_shaped):
    res = step_response(pcid_shaped, noise_rms=0.0)
    assert _tail_mean(res) == pytest.approx(final_value_zs(pcid_shaped).value, rel=0.05)


def test_shaped_tail_is_shaper_gain_times_error_integral(pcid_shaped):
    # the shaper integrator accumulates e; its other factors have unit DC gain
    res = step_response(pcid_shaped, noise_rms=0.0)
    e = res.trace.channels["e"]
    fs = res.trace.config.sample_rate
    area = np.trapezoid(e, dx=1 / fs)
    sh = presets.SHAPER
    assert _tail_mean(res) == pytest.approx(sh.k_s * sh.w_alpha * area, rel=1e-3)


def test_final_value_zero_for_unshaped(pcid):
    assert final_value_zs(pcid).is_zero
    # a zero limit is compared against the step amplitude
    assert abs(_tail_mean(step_response(pcid, noise_rms=0.0))) < 0.05


def test_final_value_constant_shaper():
    # first-order lag loop with unit plant: S(0) = 1/2, so z_s -> k * 1/2
    lag = ResetElement([[-1.0]], [[1.0]], [[1.0]])
    top = LoopTopology(reset=lag, plant=gain(1.0), c2=TransferFunction([0.0]), cs=gain(3.0))
    lim = final_value_zs(top)
    assert lim.kind == "finite" and lim.value == pytest.approx(1.5)
    # an integrating loop drives the trigger to zero whatever the constant
    ci = LoopTopology(reset=clegg(0.0, 5.0), plant=TransferFunction([1.0], [1.0, 1.0]),
                      c2=TransferFunction([0.0]), cs=gain(3.0))
    assert final_value_zs(ci).is_zero


def test_unstable_bls():
    top = LoopTopology(reset=clegg(0.0, 1e-3), plant=TransferFunction([1.0], [-1.0, 1.0]), c2=TransferFunction([0.0]))
    with pytest.raises(UnstableBLS):
        DiscreteLoop(top)


def test_divergence_reported(case1):
    with pytest.raises(NonFiniteState):
        simulate(case1, SimulationConfig(Samples(tuple(np.full(50, 1e13)))))


def test_zero_reference_ratio_is_none(case1):
    m = metrics(simulate(case1, SimulationConfig(Samples(tuple(np.zeros(100))))))
    assert m.einf_over_rinf is None and m.einf == 0.0


def test_config_validation(case1):
    with pytest.raises(ConfigError):
        SimulationConfig(Sine(1.0, 600.0), sample_rate=1e4)
    with pytest.raises(ConfigError):
        SimulationConfig(Sine(1.0, 10.0), measure_cycles=1)
    with pytest.raises(ConfigError):
        step_response(case1, duration=0.01)
    with pytest.raises(ConfigError):
        DiscreteLoop(case1).run(SimulationConfig(Sine(1.0, 10.0), sample_rate=2e4))
    with pytest.raises(ConfigError):
        boundary_frequency_sim(case1.linear_fixture())


def test_improper_c3_is_merged_with_plant():
    tr = simulate(presets.case(2, as_printed=True), SimulationConfig(Sine(1.0, 50.0), transient_cycles=5))
    assert np.all(np.isnan(tr.channels["u"]))
    assert np.all(np.isfinite(tr.channels["y"]))


def test_composite_noise_variance():
    cfg = SimulationConfig(Composite((), noise_power=2e-6, duration=10.0, seed=3))
    r = cfg.reference()
    assert np.var(r) == pytest.approx(2e-6 * 1e4, rel=0.02)
    assert np.array_equal(r, SimulationConfig(Composite((), 2e-6, 10.0, 3)).reference())


def test_debounce():
    assert debounce(np.array([10, 12, 13, 20, 24]), 3).tolist() == [10, 20, 24]
    assert debounce(np.array([], dtype=int), 3).size == 0


def test_threaded_sweep_is_deterministic(case1):
    a = sweep_metrics(case1, [5.0, 20.0, 40.0], threads=1)
    b = sweep_metrics(case1, [5.0, 20.0, 40.0], threads=3)
    assert [m.to_dict() for m in a] == [m.to_dict() for m in b]


def test_step_overshoot_and_linear_step(pid):
    res = step_response(pid)
    assert not res.limit_cycle
    assert 0 < res.overshoot < 1
    assert res.trace.channels["y"][-1] == pytest.approx(1.0, abs=1e-3)
