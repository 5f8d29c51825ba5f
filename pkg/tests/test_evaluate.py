import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttekf import ballistics as bl
from ttekf import ekf
from ttekf import evaluate as ev
from ttekf import params as pm
from ttekf import simulate as sm
from ttekf.data import Measurement, Trajectory
from ttekf.errors import DegenerateDesign, DegenerateDisplacement, DataError, TooShort
from ttekf.spin_net import SpinNetParams, rot_z
from ttekf.transforms import inv_softplus_eps


def _line(L, drop=()):
    ms = [Measurement(n, None, False) if n in drop else Measurement(n, [0.0, -0.01 * n, 1.0])
          for n in range(L)]
    return Trajectory(ms)


def test_prediction_split_rules():
    assert ev.prediction_split(_line(200), 1.0) == 20
    assert ev.prediction_split(_line(200), 2.0) == 10     # at least ten filtered
    assert ev.prediction_split(_line(200), 0.0) == 195    # last five always predicted
    # dropout: the last five available samples are predicted
    assert ev.prediction_split(_line(200, drop={196, 198}), 0.0) == 193
    with pytest.raises(TooShort):
        ev.prediction_split(_line(10), 0.0)
    assert ev.prediction_split(_line(11), 1.0) == 10


def test_exact_model_predicts_exactly():
    # without gravity the two-point velocity initialization is exact as well
    consts = bl.PhysicalConstants(eps=0.0, g_z=0.0)
    z0 = bl.make_state([0, 1.5, 0.4], [0.5, -3.0, 0.3], [0, 0, 0], 0.0, 0.0)
    tr = sm.simulate_trajectory(z0, 120, bl.bounce_matrix(), sm.SimNoise((0, 0, 0)), consts,
                                box=None)
    assert len(tr) == 120
    P = pm.init_parameters(0, 8)
    P.a_d = P.a_m = 0.0
    P.sigma_a_d_raw = P.sigma_a_m_raw = inv_softplus_eps(2e-6)
    P.sigma_q_raw = inv_softplus_eps(np.full(11, 2e-6))
    P.sigma_r_raw = inv_softplus_eps(np.full(3, 2e-6))
    assert ev.prediction_error(tr, P, 0.3, consts, use_launch_info=False) < 1e-6


def test_frozen_predictor_error_is_definitional(consts):
    tr = sm.simulate_launch(0, 0, sm.LauncherConfig(), sm.SimSettings(), consts)
    P = pm.init_parameters(0, 16)
    start = ev.prediction_split(tr, 0.5)
    beliefs, _ = ekf.filter_trajectory(tr.measurements[:start], tr.launch, P, consts)
    frozen = beliefs[-1].mu[:3]
    err = ev.prediction_error(tr, P, 0.5, consts,
                              predictor=lambda b, steps: np.tile(b.mu[:3], (steps, 1)))
    pos = tr.positions()[start:]
    last = pos[~np.isnan(pos[:, 0])][-5:]
    assert err == pytest.approx(np.max(np.linalg.norm(last - frozen, axis=1)), rel=1e-15)


def test_error_invariant_under_z_rotation(consts):
    tr = sm.simulate_launch(2, 0, sm.LauncherConfig(), sm.SimSettings(), consts)
    P = pm.init_parameters(1, 16)
    base = ev.prediction_error(tr, P, 0.5, consts)
    for phi in (0.4, 2.5):
        rotated = sm.augment(tr, phi)
        assert ev.prediction_error(rotated, P, 0.5, consts) == pytest.approx(base, rel=1e-7, abs=1e-12)


def test_short_horizon_error_is_near_noise_floor(consts):
    ds = sm.generate_dataset(5, sm.LauncherConfig(), sm.SimSettings(), consts, 3)
    # ground-truth drag and spin-free Magnus: the only model error left is the first bounce
    P = pm.init_parameters(0, 16)
    P.a_m = 0.0
    P.a_d = sm.LauncherConfig().a_d
    P.sigma_r_raw = inv_softplus_eps(np.full(3, 1e-6 + 1e-9))
    P.sigma_q_raw = inv_softplus_eps(np.full(11, 2e-6))
    # launch spins reach ~100 rad/s, far outside the unit prior
    P.sigma_omega_raw = inv_softplus_eps(np.full(3, 1e4))
    rep = ev.horizon_sweep(ds, P, [0.0], consts, use_launch_info=False)[0]
    assert rep.median < 5e-3


def test_horizon_sweep_reports(consts):
    tr = sm.simulate_launch(0, 0, sm.LauncherConfig(), sm.SimSettings(), consts)
    P = pm.init_parameters(0, 16)
    reps = ev.horizon_sweep([tr, _line(10)], P, [0.25, 0.5], consts, use_launch_info=False)
    for r in reps:
        assert r.errors.size == 1 and r.skipped == 1
        assert r.p10 == r.median == r.p90
    s = reps[0].summary()
    assert set(s) == {"horizon", "count", "skipped", "p10", "p50", "p90"}
    empty = ev.PredictionReport(1.0, np.array([]))
    assert np.isnan(empty.median)
    with pytest.raises(DataError):
        ev.PredictionReport(1.0, np.array([-1.0]))
    assert ev.PredictionReport(1.0, np.arange(11.0)).p10 == pytest.approx(1.0)


def test_pearson_examples():
    x = np.arange(5.0)
    assert ev.pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert ev.pearson(x, -x) == pytest.approx(-1.0)
    assert ev.pearson(np.zeros(4), np.zeros(4)) == 1.0
    assert ev.pearson(np.zeros(4), x[:4]) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=20), st.integers(0, 1000))
def test_pearson_bounded(a, seed):
    b = np.random.default_rng(seed).normal(size=len(a))
    assert -1.0 <= ev.pearson(a, b) <= 1.0


def _exact_spin_net(lc, scale=1.0):
    """A network whose canonical spin is the wheel-spin model itself (times ``scale``)."""
    slope = lc.wheel_map.knots[1][1] / lc.wheel_map.knots[1][0]
    M = slope * sm.WHEEL_AXES.T @ np.diag(lc.gains)
    W2 = np.zeros((6, 3))
    W2[:3] = scale * rot_z(np.pi / 2) @ M
    return SpinNetParams(np.eye(3), W2)


def _motor_draws(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return [sm.sample_launch_params(rng)[2] for _ in range(n)]


def test_spin_correlation_self_consistent():
    lc = sm.LauncherConfig(alpha=0.4, beta=0.7, gamma=0.55)
    fit = ev.spin_correlation(_motor_draws(), _exact_spin_net(lc), lc)
    np.testing.assert_allclose(fit.gains, [0.4, 0.7, 0.55], rtol=1e-10)
    np.testing.assert_allclose(fit.pearson_r, 1.0, atol=1e-12)
    scaled = ev.spin_correlation(_motor_draws(), _exact_spin_net(lc, 3.0), lc)
    np.testing.assert_allclose(scaled.gains, 3.0 * fit.gains, rtol=1e-10)
    np.testing.assert_allclose(scaled.pearson_r, 1.0, atol=1e-12)


def test_spin_gains_scale_with_wheel_speed():
    lc = sm.LauncherConfig()
    psi = _exact_spin_net(lc)
    fast = sm.LauncherConfig(wheel_map=sm.PiecewiseLinearMap([(0, 0), (1, 2400.0)]))
    a = ev.spin_correlation(_motor_draws(), psi, lc)
    b = ev.spin_correlation(_motor_draws(), psi, fast)
    np.testing.assert_allclose(b.gains, a.gains / 2, rtol=1e-10)


def test_spin_correlation_degenerate():
    lc = sm.LauncherConfig()
    psi = _exact_spin_net(lc)
    with pytest.raises(DegenerateDesign):
        ev.spin_correlation([(0.1, 0.15, 0.15)] * 5, psi, lc)
    # motor settings with fixed ratios give a rank-one design
    with pytest.raises(DegenerateDesign):
        ev.spin_correlation([(0.1 * c, 0.15 * c, 0.15 * c) for c in (1, 1.1, 1.2)], psi, lc)


def test_rescale_spin_examples():
    m, r, rho, Cm = 2.7e-3, 0.02, 1.18, 0.4
    k_star = Cm * rho * (np.pi * r * r) * r / (2 * m)
    assert k_star == pytest.approx(2.19678e-3, rel=1e-5)   # desk arithmetic
    w = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(ev.rescale_spin(w, k_star, m, Cm, rho, r), w, rtol=1e-14)
    np.testing.assert_allclose(ev.rescale_spin(w, 0.1, 2 * m, Cm, rho, r),
                               2 * ev.rescale_spin(w, 0.1, m, Cm, rho, r), rtol=1e-14)
    with pytest.raises(DataError):
        ev.rescale_spin(w, 0.1, 0.0, Cm, rho, r)


def test_azimuth_examples():
    def az(d):
        return ev.azimuth_from_measurements([0, 0, 1], [d[0], d[1], 1])
    assert az((1, 0)) == 0.0
    assert az((0, -1)) == pytest.approx(-np.pi / 2)
    assert az((-1, -1)) == pytest.approx(-3 * np.pi / 4)
    with pytest.raises(DegenerateDisplacement):
        az((0, 0))
