import numpy as np
import pytest

from spinshuttle.trajectory import ShuttleTrajectory, TrajectoryDomainError, basis_frequencies


def test_constant_speed():
    traj = ShuttleTrajectory(v=2.0, L=100.0)
    t = np.linspace(0, traj.T, 11)
    assert np.allclose(traj.position(t), 2.0 * t)


def test_endpoints_pinned_for_any_coefficients():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        u = rng.normal(scale=50.0, size=rng.integers(1, 12))
        traj = ShuttleTrajectory(v=5.0, L=10000.0, u=tuple(u))
        assert traj.position(0.0) == pytest.approx(0.0, abs=1e-9)
        assert traj.position(traj.T) == pytest.approx(traj.L, abs=1e-9)


def test_quarter_period_example():
    traj = ShuttleTrajectory(v=5.0, L=10000.0, u=(100.0,))
    # T = 2000 ns; at T/4 the fundamental sine is at its crest
    assert traj.position(traj.T / 4) == pytest.approx(2600.0, rel=1e-12)


def test_basis_frequencies():
    traj = ShuttleTrajectory(v=5.0, L=10000.0, u=(0.0,) * 9)
    nu = traj.frequencies
    assert nu[0] == pytest.approx(5.0e-4)      # 0.5 MHz in GHz
    assert nu[8] == pytest.approx(4.5e-3)      # 4.5 MHz
    assert np.allclose(nu, basis_frequencies(9, 5.0, 10000.0))
    single = basis_frequencies(1, 2.0, 100.0)
    assert single.shape == (1,) and single[0] == pytest.approx(2.0 / 100.0)
    with pytest.raises(ValueError):
        basis_frequencies(0, 1.0, 1.0)


def test_position_sensitivity():
    traj = ShuttleTrajectory(v=5.0, L=10000.0, u=(10.0, -20.0, 5.0))
    for k in range(1, 4):
        assert traj.position_sensitivity(0.0, k) == 0.0
        # crest of component k
        assert traj.position_sensitivity(traj.T / (4 * k), k) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        traj.position_sensitivity(0.0, 4)


def test_sensitivity_matches_finite_difference():
    rng = np.random.default_rng(3)
    traj = ShuttleTrajectory(v=2.0, L=500.0, u=tuple(rng.normal(size=5)))
    t = rng.uniform(0, traj.T, size=20)
    h = 1e-6
    for k in range(1, 6):
        u_p = list(traj.u)
        u_p[k - 1] += h
        u_m = list(traj.u)
        u_m[k - 1] -= h
        fd = (traj.with_coefficients(u_p).position(t) - traj.with_coefficients(u_m).position(t)) / (2 * h)
        assert np.allclose(traj.position_sensitivity(t, k), fd, atol=1e-10)


def test_linearity_of_correction():
    rng = np.random.default_rng(7)
    u1 = rng.normal(size=6)
    u2 = rng.normal(size=6)
    base = ShuttleTrajectory(v=1.0, L=300.0)
    t = np.linspace(0, base.T, 50)
    x0 = base.position(t)
    d1 = base.with_coefficients(u1).position(t) - x0
    d2 = base.with_coefficients(u2).position(t) - x0
    d12 = base.with_coefficients(u1 + u2).position(t) - x0
    assert np.allclose(d12, d1 + d2, atol=1e-9)


def test_time_out_of_range():
    traj = ShuttleTrajectory(v=1.0, L=10.0)
    with pytest.raises(ValueError):
        traj.position(traj.T + 1.0)
    with pytest.raises(ValueError):
        traj.position(-0.5)


def test_domain_check_reports_offending_time():
    # huge negative first coefficient drives x below 0 early on
    traj = ShuttleTrajectory(v=1.0, L=100.0, u=(-80.0,))
    t = np.linspace(0, traj.T, 201)
    with pytest.raises(TrajectoryDomainError) as err:
        traj.check_in_domain(t)
    assert "x(" in str(err.value)


def test_serialize_roundtrip_text():
    traj = ShuttleTrajectory(v=5.0, L=100.0, u=(1.5, -2.25))
    text = traj.serialize()
    assert "v_m_per_s=5.0" in text and "1.5" in text and "-2.25" in text
