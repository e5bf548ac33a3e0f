"""Guidance variants against hand-expanded scalar arithmetic and the
conjugate Gaussian update.
"""
import numpy as np
import pytest

from tmpd import (
    Diagnostics,
    GaussianPrior,
    GuidanceKind,
    MeasurementModel,
    TweedieMoments,
    UnsupportedOperatorError,
    VpSchedule,
    bayes_update_mean,
    likelihood_score,
    likelihood_score_dps,
    likelihood_score_dtmpd,
    likelihood_score_pigdm,
    likelihood_score_tmpd,
    moments,
    parse_guidance,
)

SCHED = VpSchedule(0.1, 20.0)


def rand_moments(d, seed, batch=None):
    """A TweedieMoments with a random mean, SPD-shaped J and C = scale * J."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    J = a @ a.T / d + np.eye(d)
    t = 0.5
    scale = SCHED.v(t) / np.sqrt(SCHED.alpha(t))
    shape = (d,) if batch is None else (batch, d)
    return TweedieMoments(m=rng.standard_normal(shape), J=J, C=scale * J), t


class TestParse:
    def test_round_trips(self):
        assert parse_guidance("tmpd") == GuidanceKind("tmpd")
        assert parse_guidance("dtmpd") == GuidanceKind("dtmpd")
        assert parse_guidance("dtmpd:rowsum") == GuidanceKind("dtmpd-rowsum")
        assert parse_guidance("pigdm") == GuidanceKind("pigdm")
        assert parse_guidance("dps") == GuidanceKind("dps")
        assert parse_guidance("dps-chung:0.15") == GuidanceKind("dps-chung", 0.15)
        assert parse_guidance("none") is None
        assert parse_guidance(" TMPD ") == GuidanceKind("tmpd")

    def test_rejects_bad_strings(self):
        for text in ["tmpd:x", "dtmpd:bogus", "dps-chung", "dps:0.1", "mystery"]:
            with pytest.raises(ValueError):
                parse_guidance(text)

    def test_zeta_range(self):
        with pytest.raises(ValueError):
            GuidanceKind("dps-chung", zeta=0.05)
        with pytest.raises(ValueError):
            GuidanceKind("dps-chung", zeta=1.5)
        with pytest.raises(ValueError):
            GuidanceKind("tmpd", zeta=0.5)


class TestScalarObservationOracle:
    """d_y = 1 lets every solve be written out as plain float arithmetic."""

    def setup_method(self):
        self.tm, self.t = rand_moments(3, seed=0)
        self.h = np.array([[0.4, -1.2, 0.25]])
        self.mm = MeasurementModel(H=self.h, sigma_y=0.3, y=np.array([1.7]))
        self.r = float(self.mm.y[0] - self.h[0] @ self.tm.m)

    def test_tmpd(self):
        k = float(self.h[0] @ self.tm.C @ self.h[0]) + 0.3**2
        ref = self.tm.J @ self.h[0] * (self.r / k)
        got = likelihood_score_tmpd(self.tm, self.mm, self.t, SCHED)
        np.testing.assert_allclose(got, ref, rtol=1e-10)

    def test_dtmpd_diag(self):
        k = float(self.h[0] ** 2 @ np.diag(self.tm.C)) + 0.3**2
        ref = self.tm.J @ self.h[0] * (self.r / k)
        got = likelihood_score_dtmpd(self.tm, self.mm, self.t, SCHED)
        np.testing.assert_allclose(got, ref, rtol=1e-10)

    def test_pigdm(self):
        alpha, v = SCHED.alpha(self.t), SCHED.v(self.t)
        r2 = v / (v + alpha)
        k = r2 * float(self.h[0] @ self.h[0]) + 0.3**2
        ref = self.tm.J @ self.h[0] * (self.r / k)
        got = likelihood_score_pigdm(self.tm, self.mm, self.t, SCHED)
        np.testing.assert_allclose(got, ref, rtol=1e-10)

    def test_dps(self):
        ref = self.tm.J @ self.h[0] * (self.r / 0.3**2)
        got = likelihood_score_dps(self.tm, self.mm, GuidanceKind("dps"))
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_dps_chung(self):
        kind = GuidanceKind("dps-chung", zeta=0.4)
        ref = self.tm.J @ self.h[0] * self.r * (0.4 / abs(self.r))
        got = likelihood_score_dps(self.tm, self.mm, kind)
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_bayes_update(self):
        k = float(self.h[0] @ self.tm.C @ self.h[0]) + 0.3**2
        ref = self.tm.m + self.tm.C @ self.h[0] * (self.r / k)
        got = bayes_update_mean(self.tm, self.mm, self.t, SCHED)
        np.testing.assert_allclose(got, ref, rtol=1e-10)


class TestConjugateGaussianOracle:
    def test_bayes_update_matches_direct_solve(self):
        rng = np.random.default_rng(1)
        tm, t = rand_moments(5, seed=2, batch=7)
        H = rng.standard_normal((3, 5))
        mm = MeasurementModel(H=H, sigma_y=0.4, y=rng.standard_normal(3))
        got = bayes_update_mean(tm, mm, t, SCHED)
        S = H @ tm.C @ H.T + 0.4**2 * np.eye(3)
        for i in range(7):
            ref = tm.m[i] + tm.C @ H.T @ np.linalg.solve(S, mm.y - H @ tm.m[i])
            np.testing.assert_allclose(got[i], ref, rtol=1e-10, atol=1e-12)

    def test_zero_covariance_reduces_to_dps(self):
        tm, t = rand_moments(4, seed=3)
        tm = TweedieMoments(m=tm.m, J=tm.J, C=np.zeros((4, 4)))
        H = np.random.default_rng(4).standard_normal((2, 4))
        mm = MeasurementModel(H=H, sigma_y=0.6, y=np.array([0.3, -1.1]))
        full = likelihood_score_tmpd(tm, mm, t, SCHED)
        dps = likelihood_score_dps(tm, mm, GuidanceKind("dps"))
        np.testing.assert_allclose(full, dps, rtol=1e-10, atol=1e-14)


class TestVariantCoincidence:
    def test_isotropic_covariance_collapses_variants(self):
        # Standard normal prior: C_t = c I, so diag and masked row sums
        # equal the full covariance inside the system matrix.
        prior = GaussianPrior(np.zeros(4), np.eye(4))
        t = 0.5
        x = np.random.default_rng(5).standard_normal((6, 4))
        tm = moments(
            prior.score_t(x, t, SCHED), prior.hessian_t(x, t, SCHED), x, t, SCHED
        )
        H = np.zeros((2, 4))
        H[0, 1] = 1.0
        H[1, 3] = -0.5
        mm = MeasurementModel(H=H, sigma_y=0.2, y=np.array([0.7, 0.1]))
        full = likelihood_score_tmpd(tm, mm, t, SCHED)
        diag = likelihood_score_dtmpd(tm, mm, t, SCHED, "diag")
        rowsum = likelihood_score_dtmpd(tm, mm, t, SCHED, "rowsum")
        np.testing.assert_allclose(diag, full, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(rowsum, full, rtol=1e-10, atol=1e-12)

    def test_pigdm_matches_tmpd_at_horizon(self):
        # For N(0, I), C_T = v_T I while pigdm posits v_T/(v_T + alpha_T) I;
        # the two agree as alpha vanishes.
        prior = GaussianPrior(np.zeros(3), np.eye(3))
        t = 1.0
        x = np.random.default_rng(6).standard_normal(3)
        tm = moments(
            prior.score_t(x, t, SCHED), prior.hessian_t(x, t, SCHED), x, t, SCHED
        )
        mm = MeasurementModel(
            H=np.array([[1.0, 0.5, -0.3]]), sigma_y=0.5, y=np.array([0.9])
        )
        a = likelihood_score_tmpd(tm, mm, t, SCHED)
        b = likelihood_score_pigdm(tm, mm, t, SCHED)
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestStructure:
    def test_rowsum_requires_selection_rows(self):
        tm, t = rand_moments(3, seed=7)
        H = np.array([[1.0, 1.0, 0.0]])
        mm = MeasurementModel(H=H, sigma_y=0.1, y=np.array([0.0]))
        with pytest.raises(UnsupportedOperatorError):
            likelihood_score_dtmpd(tm, mm, t, SCHED, "rowsum")

    def test_unknown_mode_rejected(self):
        tm, t = rand_moments(3, seed=8)
        mm = MeasurementModel(H=np.eye(3)[:1], sigma_y=0.1, y=np.zeros(1))
        with pytest.raises(ValueError):
            likelihood_score_dtmpd(tm, mm, t, SCHED, "banded")

    def test_dispatcher_covers_all_kinds(self):
        tm, t = rand_moments(3, seed=9, batch=4)
        mm = MeasurementModel(H=np.eye(3)[:2], sigma_y=0.3, y=np.array([1.0, -1.0]))
        for text, fn in [
            ("tmpd", likelihood_score_tmpd),
            ("pigdm", likelihood_score_pigdm),
        ]:
            kind = parse_guidance(text)
            np.testing.assert_array_equal(
                likelihood_score(kind, tm, mm, t, SCHED), fn(tm, mm, t, SCHED)
            )
        np.testing.assert_array_equal(
            likelihood_score(parse_guidance("dtmpd:rowsum"), tm, mm, t, SCHED),
            likelihood_score_dtmpd(tm, mm, t, SCHED, "rowsum"),
        )
        for text in ["dps", "dps-chung:0.5"]:
            kind = parse_guidance(text)
            np.testing.assert_array_equal(
                likelihood_score(kind, tm, mm, t, SCHED),
                likelihood_score_dps(tm, mm, kind),
            )

    def test_batched_matches_single(self):
        tm, t = rand_moments(4, seed=10, batch=5)
        H = np.random.default_rng(11).standard_normal((2, 4))
        mm = MeasurementModel(H=H, sigma_y=0.3, y=np.array([0.2, 0.4]))
        batch = likelihood_score_tmpd(tm, mm, t, SCHED)
        for i in range(5):
            one = TweedieMoments(m=tm.m[i], J=tm.J, C=tm.C)
            np.testing.assert_allclose(
                batch[i],
                likelihood_score_tmpd(one, mm, t, SCHED),
                rtol=1e-12,
            )

    def test_chung_zero_residual_gives_zero(self):
        tm, _ = rand_moments(3, seed=12)
        H = np.eye(3)[:1]
        mm = MeasurementModel(H=H, sigma_y=0.1, y=np.array([float(tm.m[0])]))
        kind = GuidanceKind("dps-chung", zeta=1.0)
        out = likelihood_score_dps(tm, mm, kind)
        assert np.all(out == 0.0)
        assert np.all(np.isfinite(out))

    def test_ridge_fallback_counted(self):
        # A numerically singular system: rank-1 H H^T against a noise term
        # crushed by the covariance scale v/alpha of an aggressive schedule.
        sched = VpSchedule(0.1, 500.0)
        t = 1.0
        scale = sched.v(t) / sched.alpha(t)
        d = 3
        tm = TweedieMoments(
            m=np.zeros(d), J=np.eye(d), C=scale * np.eye(d)
        )
        H = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        mm = MeasurementModel(H=H, sigma_y=0.01, y=np.array([1.0, 1.0]))
        diag = Diagnostics()
        out = likelihood_score_tmpd(tm, mm, t, sched, diag)
        assert diag.ridge_fallbacks == 1
        assert np.all(np.isfinite(out))
