import math

import numpy as np
import pytest

from loopshape.freq_analysis import sensitivity
from loopshape.glm_design import PolyBasisSpec, design_poly
from loopshape.loop_sim import (
    DF2Filter,
    GaussianNoise,
    LoopConfig,
    PIDGains,
    SignalSpec,
    SimulationError,
    Sinusoid,
    df2_step,
    gaussian_noise,
    residual_amplitude,
    simulate,
    simulate_lss,
    step_metrics,
)
from loopshape.plant_tools import lss_design, motor_model, sim_plant, zoh_discretize
from loopshape.ratfun import RationalTF, impulse_response, rf_eval

T = 0.05
OMEGA_Q = math.pi / 32
PRINTED_PLANT = RationalTF.from_coeffs([0.0, 0.001193, 0.001139], [1.0, -1.867, 0.8688], T)
FIELDS = ("r", "e", "u", "c", "dq", "dr")


def motor_pi_config(**kw):
    return LoopConfig(motor_model(), K_e=0.05, Ki=0.05, T=T, **kw)


def lss_config(**kw):
    return LoopConfig(motor_model(), controller=lss_design(motor_model(), [0.75] * 3, [0.25] * 2), T=T, **kw)


# --- direct-form filter ------------------------------------------------------------


def test_identity_filter_passes_input():
    x = np.random.default_rng(0).normal(size=20)
    assert np.array_equal(DF2Filter(RationalTF.constant(1.0)).run(x), x)


def test_unit_delay_filter():
    x = np.arange(1.0, 6.0)
    assert np.array_equal(DF2Filter(RationalTF.delay(1)).run(x), [0, 1, 2, 3, 4])


def test_filter_impulse_matches_long_division():
    x = np.zeros(100)
    x[0] = 1.0
    y = DF2Filter(PRINTED_PLANT).run(x)
    assert np.max(np.abs(y - impulse_response(PRINTED_PLANT, 100))) < 1e-12


def test_df2_step_function():
    f = DF2Filter(RationalTF.from_coeffs([0.5], [1.0, -0.5]))
    assert [df2_step(f, 1.0) for _ in range(3)] == [0.5, 0.75, 0.875]


def test_filter_rejects_complex_coefficients():
    with pytest.raises(SimulationError):
        DF2Filter(RationalTF.from_coeffs([1.0], [1.0, -0.5j]))


def test_filter_steady_state_gain():
    h = design_poly(PolyBasisSpec(2, -0.8, 1.0)).h
    y = DF2Filter(h).run(np.ones(300))
    assert y[-1] == pytest.approx(rf_eval(h, 1.0), abs=1e-12)


# --- configuration ---------------------------------------------------------------


def test_plant_must_be_strictly_proper():
    with pytest.raises(SimulationError):
        LoopConfig(RationalTF.from_coeffs([1.0, 0.2], [1.0, -0.5]))


@pytest.mark.parametrize("kw", [dict(io_delay=-1), dict(io_delay=1.5), dict(saturation=(1.0, 0.0))])
def test_invalid_loop_settings(kw):
    with pytest.raises(SimulationError):
        LoopConfig(motor_model(), **kw)


def test_invalid_signals():
    with pytest.raises(SimulationError):
        Sinusoid(1.0, 0.0)
    with pytest.raises(SimulationError):
        Sinusoid(1.0, 4.0)
    with pytest.raises(SimulationError):
        GaussianNoise(0.0, -1.0, 1)
    with pytest.raises(SimulationError):
        GaussianNoise(0.0, 1.0, None)
    with pytest.raises(SimulationError):
        SignalSpec("impulse")


def test_reference_kinds():
    assert np.array_equal(SignalSpec("step", 2.0, 3).reference_samples(5), [0, 0, 0, 2, 2])
    assert np.array_equal(SignalSpec("ramp", 0.5, 1).reference_samples(4), [0, 0, 0.5, 1.0])
    assert not SignalSpec("zero").reference_samples(4).any()


def test_open_loop_includes_round_trip_delay():
    cfg = motor_pi_config(io_delay=2)
    base = motor_pi_config().open_loop()
    z = 1.2 * np.exp(0.5j)
    assert rf_eval(cfg.open_loop(), z) == pytest.approx(rf_eval(base, z) * z ** -4)


# --- CMP / PID loops ---------------------------------------------------------------


@pytest.mark.parametrize("cfg", [motor_pi_config(), LoopConfig(motor_model(), controller=PIDGains(0.05, 0.05, 0.01), T=T), lss_config()])
def test_zero_inputs_give_zero_trace(cfg):
    tr = simulate(cfg, SignalSpec("zero"), 100)
    assert tr.length == 100
    for f in FIELDS:
        assert not np.any(getattr(tr, f))


def test_pi_loop_tracks_step():
    tr = simulate(motor_pi_config(), SignalSpec("step", 20.0), 600)
    m = step_metrics(tr)
    assert abs(m.steady_state_error) < 1e-6
    assert m.settling_time_samples is not None


def test_pid_matches_pi_when_kd_zero():
    a = simulate(motor_pi_config(), SignalSpec("step"), 200)
    b = simulate(LoopConfig(motor_model(), controller=PIDGains(0.05, 0.05, 0.0), T=T), SignalSpec("step"), 200)
    assert np.allclose(a.u, b.u, atol=1e-12)


def test_pid_derivative_kick():
    cfg = LoopConfig(motor_model(), controller=PIDGains(0.05, 0.05, 0.01), T=T)
    tr = simulate(cfg, SignalSpec("step", 1.0, 10), 50)
    # the D term acts on the error, so the step produces a spike Kd/T on top of P and I
    assert tr.u[10] == pytest.approx(0.05 + 0.05 * T + 0.01 / T)
    assert tr.u[11] < tr.u[10] / 2


def test_gain_only_disturbance_residual():
    cfg = LoopConfig(PRINTED_PLANT, K_e=10.0, T=T)
    tr = simulate(cfg, SignalSpec("step", disturbance=Sinusoid(1.0, OMEGA_Q)), 4096)
    amp = residual_amplitude(tr, OMEGA_Q)
    assert amp == pytest.approx(0.74, abs=0.02)
    assert amp == pytest.approx(abs(rf_eval(sensitivity(cfg.open_loop()), np.exp(1j * OMEGA_Q))), abs=1e-3)


def test_lag_compensated_disturbance_residual():
    ge = design_poly(PolyBasisSpec(1, -0.5, 2), T).h
    cfg = LoopConfig(PRINTED_PLANT, K_e=12.5, G_e=ge, T=T)
    tr = simulate(cfg, SignalSpec("zero", disturbance=Sinusoid(1.0, OMEGA_Q, 0.7)), 4096)
    assert step_metrics(tr, OMEGA_Q).residual_amplitude == pytest.approx(0.69, abs=0.02)


def test_disturbance_is_added_after_plant():
    cfg = LoopConfig(PRINTED_PLANT, K_e=0.0, T=T)
    tr = simulate(cfg, SignalSpec("zero", disturbance=Sinusoid(0.5, 0.3)), 80)
    assert np.allclose(tr.c, tr.dq)
    assert np.allclose(tr.e, -tr.dq)


def test_sensor_noise_enters_error_not_output():
    cfg = LoopConfig(PRINTED_PLANT, K_e=0.0, T=T)
    tr = simulate(cfg, SignalSpec("zero", noise=GaussianNoise(0.1, 1e-2, 3)), 80)
    assert not tr.c.any()
    assert np.allclose(tr.e, -tr.dr)


def test_reference_shaper_and_gain():
    shaper = RationalTF.from_coeffs([0.5], [1.0, -0.5], T)
    cfg = LoopConfig(PRINTED_PLANT, K_e=0.0, G_r=shaper, K_r=2.0, T=T)
    tr = simulate(cfg, SignalSpec("step"), 70)
    expected = 2.0 * DF2Filter(shaper).run(np.ones(70))
    assert np.allclose(tr.e, expected)


def test_saturation_clamps_control():
    cfg = motor_pi_config(saturation=(0.0, 0.1))
    tr = simulate(cfg, SignalSpec("step", 20.0), 300)
    assert tr.u.max() <= 0.1 and tr.u.min() >= 0.0
    assert np.any(tr.u == 0.1)


def test_determinism_with_noise():
    sig = SignalSpec("step", disturbance=Sinusoid(0.3, 0.1), noise=GaussianNoise(0.0, 1e-4, 11))
    a, b = simulate(motor_pi_config(), sig, 400), simulate(motor_pi_config(), sig, 400)
    for f in FIELDS:
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


@pytest.mark.parametrize("cfg", [motor_pi_config(io_delay=2), lss_config()])
def test_linearity(cfg):
    a = simulate(cfg, SignalSpec("step", 1.0), 300)
    b = simulate(cfg, SignalSpec("step", -2.5), 300)
    for f in ("r", "e", "u", "c"):
        x, y = getattr(a, f), getattr(b, f)
        assert np.max(np.abs(-2.5 * x - y)) <= 1e-9 * np.max(np.abs(y))


@pytest.mark.parametrize("d", [1, 2, 5])
def test_delay_equivariance_open_loop(d):
    base = simulate(motor_pi_config(feedback=False), SignalSpec("step"), 120)
    shifted = simulate(motor_pi_config(feedback=False, io_delay=d), SignalSpec("step"), 120)
    assert np.array_equal(shifted.c[2 * d:], base.c[: 120 - 2 * d])
    assert not shifted.c[: 2 * d].any()


def test_open_loop_step_matches_continuous_plant():
    gz = zoh_discretize(sim_plant(), T)
    cfg = LoopConfig(gz, K_e=1.0, T=T, feedback=False)
    tr = simulate(cfg, SignalSpec("step"), 500)
    n = np.arange(500)
    assert np.max(np.abs(tr.c - sim_plant().step_response(n * T))) < 1e-8


def test_trace_rows_layout():
    tr = simulate(motor_pi_config(), SignalSpec("step"), 3)
    rows = list(tr.rows())
    assert len(rows) == 3
    assert rows[1][:2] == (1, T)


# --- LSS -------------------------------------------------------------------------------


def test_lss_step_has_no_offset():
    tr = simulate(lss_config(), SignalSpec("step", 20.0), 300)
    m = step_metrics(tr)
    assert abs(m.steady_state_error) < 1e-6
    assert m.settling_time_samples is not None and m.settling_time_samples < 100


def test_observer_converges_to_plant_state():
    tr = simulate_lss(lss_config(), SignalSpec("step", 5.0), 120, plant_x0=[0.3, -0.2])
    err = np.abs(tr.x_true - tr.x_hat)
    assert err[0].max() > 0.01
    assert err[50:].max() < 1e-6


def test_lss_dimension_mismatch():
    gains = lss_design(motor_model(), [0.75] * 3, [0.25] * 2)
    plant3 = RationalTF.from_coeffs([0.0, 1.0], [1.0, -0.5, 0.1, -0.01], T)
    with pytest.raises(SimulationError):
        simulate(LoopConfig(plant3, controller=gains, T=T), SignalSpec("step"), 10)


def test_lss_requires_gains_and_closed_loop():
    with pytest.raises(SimulationError):
        simulate_lss(motor_pi_config(), SignalSpec("step"), 10)
    with pytest.raises(SimulationError):
        simulate(lss_config(feedback=False), SignalSpec("step"), 10)
    with pytest.raises(SimulationError):
        lss_config().controller_tf()


# --- metrics and noise -------------------------------------------------------------------


def test_residual_of_pure_sinusoid():
    n = np.arange(1024)
    assert residual_amplitude(1.7 * np.sin(0.2 * n + 0.4), 0.2) == pytest.approx(1.7, abs=1e-9)


def test_residual_of_constant_is_zero():
    assert residual_amplitude(np.full(256, 3.0), 0.2) == pytest.approx(0.0, abs=1e-12)


def test_metrics_need_long_trace():
    with pytest.raises(SimulationError):
        residual_amplitude(np.zeros(10), 0.1)
    with pytest.raises(SimulationError):
        step_metrics(simulate(motor_pi_config(), SignalSpec("step"), 20))


def test_step_metrics_on_known_trace():
    tr = simulate(motor_pi_config(), SignalSpec("step", 1.0), 800)
    m = step_metrics(tr)
    final = tr.c[-80:].mean()
    assert m.overshoot_pct == pytest.approx((tr.c.max() - final) / final * 100)
    s = m.settling_time_samples
    assert np.all(np.abs(tr.c[s:] - final) <= 0.02 * final)
    assert abs(tr.c[s - 1] - final) > 0.02 * final
    assert m.residual_amplitude is None
    assert set(m.as_dict()) == {"overshoot_pct", "settling_time_samples", "steady_state_error", "residual_amplitude"}


def test_never_settled_trace():
    cfg = LoopConfig(PRINTED_PLANT, K_e=10.0, T=T)
    tr = simulate(cfg, SignalSpec("step", disturbance=Sinusoid(1.0, OMEGA_Q)), 512)
    m = step_metrics(tr, OMEGA_Q)
    assert m.settling_time_samples is None
    assert m.residual_amplitude >= 0


def test_noise_zero_variance_is_constant():
    assert np.array_equal(gaussian_noise(0.4, 0.0, 1, 5), np.full(5, 0.4))


def test_noise_same_seed_same_stream():
    a = gaussian_noise(0.0, 1.0, 42, 1001)
    b = gaussian_noise(0.0, 1.0, 42, 1001)
    assert a.tobytes() == b.tobytes() and len(a) == 1001
    assert not np.array_equal(a, gaussian_noise(0.0, 1.0, 43, 1001))


def test_noise_moments():
    n = 10 ** 6
    mu, var = 0.5, 1e-4
    x = gaussian_noise(mu, var, 2024, n)
    assert abs(x.mean() - mu) < 4 * math.sqrt(var) / math.sqrt(n)
    assert x.var() == pytest.approx(var, rel=0.01)


def test_noise_rejects_negative_variance():
    with pytest.raises(ValueError):
        gaussian_noise(0.0, -1.0, 1, 3)
