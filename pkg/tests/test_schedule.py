"""Noise schedule values against independent quadrature and closed forms."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tmpd import DiscreteSchedule, VeSchedule, VpSchedule, discretize


def quad_alpha(schedule: VpSchedule, t: float) -> float:
    """alpha_t by adaptive quadrature of beta, independent of int_beta."""
    integral, err = quad(lambda s: schedule.beta(s), 0.0, t, limit=200)
    assert err < 1e-10
    return np.exp(-integral)


class TestVpSchedule:
    def test_alpha_matches_quadrature_mild(self):
        sched = VpSchedule(0.1, 20.0)
        for t in [0.0, 0.1, 0.37, 0.5, 0.99, 1.0]:
            assert sched.alpha(t) == pytest.approx(quad_alpha(sched, t), rel=1e-10)

    def test_alpha_at_horizon_mild(self):
        # int_0^1 (0.1 + 19.9 t) dt = 10.05
        assert VpSchedule(0.1, 20.0).alpha(1.0) == pytest.approx(
            np.exp(-10.05), rel=1e-12
        )

    def test_alpha_at_horizon_aggressive(self):
        # The mixture benchmark schedule: log alpha(1) = -250.05.
        sched = VpSchedule(0.1, 500.0)
        assert np.log(sched.alpha(1.0)) == pytest.approx(-250.05, rel=1e-12)
        assert sched.alpha(1.0) > 0.0

    def test_alpha_plus_v_is_one_exactly(self):
        sched = VpSchedule(0.1, 500.0)
        for t in np.linspace(0.0, 1.0, 37):
            assert sched.alpha(t) + sched.v(t) == 1.0

    def test_beta_linear(self):
        sched = VpSchedule(0.5, 3.5, T=2.0)
        assert sched.beta(0.0) == 0.5
        assert sched.beta(2.0) == pytest.approx(0.5 + 2.0 * 3.0)

    def test_time_domain_checked(self):
        sched = VpSchedule()
        with pytest.raises(ValueError):
            sched.alpha(-0.01)
        with pytest.raises(ValueError):
            sched.beta(1.5)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            VpSchedule(beta_min=0.0)
        with pytest.raises(ValueError):
            VpSchedule(beta_min=2.0, beta_max=1.0)
        with pytest.raises(ValueError):
            VpSchedule(T=0.0)

    @given(
        beta_min=st.floats(0.01, 1.0),
        spread=st.floats(0.0, 100.0),
        t=st.floats(0.0, 1.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_alpha_decreasing_v_increasing(self, beta_min, spread, t):
        sched = VpSchedule(beta_min, beta_min + spread)
        t2 = min(1.0, t + 0.05)
        assert sched.alpha(t2) <= sched.alpha(t)
        assert sched.v(t2) >= sched.v(t)
        assert 0.0 <= sched.v(t) <= 1.0


class TestVeSchedule:
    def test_v_zero_at_origin(self):
        assert VeSchedule(0.01, 50.0).v(0.0) == 0.0

    def test_v_at_horizon(self):
        # sigma_min^2 ((sigma_max/sigma_min)^2 - 1) = 2500 - 1e-4
        assert VeSchedule(0.01, 50.0).v(1.0) == pytest.approx(
            2500.0 - 1e-4, rel=1e-12
        )

    def test_alpha_identically_one(self):
        sched = VeSchedule()
        assert sched.alpha(0.3) == 1.0
        assert np.all(sched.alpha(np.linspace(0, 1, 7)) == 1.0)

    def test_dv_dt_matches_finite_differences(self):
        sched = VeSchedule(0.01, 50.0)
        h = 1e-7
        for t in [0.1, 0.4, 0.8]:
            fd = (sched.v(t + h) - sched.v(t - h)) / (2 * h)
            assert sched.dv_dt(t) == pytest.approx(fd, rel=1e-6)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            VeSchedule(sigma_min=0.0)
        with pytest.raises(ValueError):
            VeSchedule(sigma_min=2.0, sigma_max=1.0)

    @given(t=st.floats(0.0, 0.95))
    @settings(max_examples=50, deadline=None)
    def test_v_monotone(self, t):
        sched = VeSchedule(0.01, 50.0)
        assert sched.v(t + 0.05) > sched.v(t)


class TestDiscretize:
    def test_vp_endpoint_alpha_matches_continuous(self):
        sched = VpSchedule(0.1, 20.0)
        d = discretize(sched, 1000)
        assert d.alphas[-1] == pytest.approx(sched.alpha(1.0), rel=1e-6)

    def test_vp_recursions(self):
        d = discretize(VpSchedule(0.1, 20.0), 100)
        assert d.alphas_prev[0] == 1.0
        assert d.vs_prev[0] == 0.0
        np.testing.assert_allclose(d.alphas_prev[1:], d.alphas[:-1])
        np.testing.assert_allclose(d.alphas, np.cumprod(1.0 - d.betas))
        np.testing.assert_allclose(d.vs, 1.0 - d.alphas)
        np.testing.assert_allclose(
            d.sigmas, np.sqrt(d.vs_prev * d.betas / d.vs)
        )
        assert np.all(d.betas > 0.0) and np.all(d.betas <= 0.999)

    def test_vp_aggressive_stays_positive(self):
        d = discretize(VpSchedule(0.1, 500.0), 1000)
        assert np.all(d.alphas > 0.0)
        assert np.all(np.isfinite(d.sigmas))

    def test_ve_recursions(self):
        sched = VeSchedule(0.01, 50.0)
        d = discretize(sched, 64)
        assert np.all(np.diff(d.vs) > 0.0)
        assert np.all(d.alphas == 1.0) and np.all(d.alphas_prev == 1.0)
        assert d.vs_prev[0] == 0.0
        np.testing.assert_allclose(
            d.sigmas, np.sqrt(d.vs_prev * (d.vs - d.vs_prev) / d.vs)
        )
        np.testing.assert_allclose(d.vs, sched.v(d.ts))

    def test_grid_lookup(self):
        d = discretize(VpSchedule(0.1, 20.0), 50)
        k = 17
        assert d.alpha(float(d.ts[k])) == d.alphas[k]
        assert d.v(float(d.ts[k])) == d.vs[k]
        with pytest.raises(ValueError):
            d.alpha(0.12345)

    def test_grid_spans_eps_to_horizon(self):
        sched = VpSchedule(0.1, 20.0)
        d = discretize(sched, 11)
        assert d.ts[0] == pytest.approx(sched.eps)
        assert d.ts[-1] == sched.T

    def test_arrays_read_only(self):
        d = discretize(VpSchedule(), 16)
        with pytest.raises(ValueError):
            d.betas[0] = 0.5

    def test_needs_two_steps(self):
        with pytest.raises(ValueError):
            discretize(VpSchedule(), 1)

    def test_unknown_kind_rejected(self):
        class Odd:
            kind = "other"
            eps = 1e-3
            T = 1.0

        with pytest.raises(ValueError):
            discretize(Odd(), 10)

    @given(n=st.integers(2, 300))
    @settings(max_examples=30, deadline=None)
    def test_vp_sigma_below_sqrt_beta(self, n):
        # v_prev/v < 1, so the posterior noise never exceeds sqrt(beta_n).
        d = discretize(VpSchedule(0.1, 20.0), n)
        assert isinstance(d, DiscreteSchedule)
        assert np.all(d.sigmas**2 <= d.betas + 1e-15)
