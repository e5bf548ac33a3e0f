"""Analytic priors with closed-form smoothed scores and exact posteriors.

Two prior families are provided, chosen so that every quantity a diffusion
posterior sampler needs is available in closed form:

* ``GaussianPrior``: N(m0, C0).  The noised marginal at time t is
  N(sqrt(alpha_t) m0, alpha_t C0 + v_t I), and the posterior under a
  linear-Gaussian measurement is again Gaussian.

* ``GmmPrior``: an equally-weighted mixture of identity-covariance
  Gaussians.  The noised marginal stays a mixture with component
  covariance (alpha_t + v_t) I, and the posterior under a
  linear-Gaussian measurement is a reweighted mixture (``PosteriorGmm``).

Both expose ``score_t`` / ``hessian_t`` (gradient and Hessian of
log p_t) so samplers can run with exact scores, plus ``exact_posterior``
for ground-truth comparison.  ``grf_build`` constructs a Matern-5/2
Gaussian random field on a square grid and ``gmm_build`` the 5 x 5 lattice
mixture used by the benchmarks.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

__all__ = [
    "GaussianPrior",
    "GmmPrior",
    "PosteriorGmm",
    "MeasurementModel",
    "grf_build",
    "gmm_build",
    "generate_measurement",
    "matern52",
]


def matern52(r):
    """Matern kernel with smoothness 5/2 and unit length scale.

    k(r) = (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r), so k(0) = 1.
    """
    r = np.asarray(r, dtype=np.float64)
    s = np.sqrt(5.0) * r
    return (1.0 + s + s**2 / 3.0) * np.exp(-s)


def _as_batch(x, d: int):
    """View x as (n, d); return the batch and whether the input was 1-d."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"expected a vector of length {d}, got {x.shape}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"expected shape (n, {d}), got {x.shape}")
    return x, False


@dataclasses.dataclass(frozen=True)
class MeasurementModel:
    """Linear-Gaussian measurement y = H x + sigma_y * noise.

    Attributes:
        H: observation operator, shape (d_y, d_x).
        sigma_y: observation noise scale, > 0.
        y: observed data, shape (d_y,).
        x_star: the latent sample that generated y, when known.
    """

    H: np.ndarray
    sigma_y: float
    y: np.ndarray
    x_star: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if H.ndim != 2:
            raise ValueError("H must be a matrix")
        if H.shape[0] > H.shape[1]:
            raise ValueError("need d_y <= d_x")
        if y.shape != (H.shape[0],):
            raise ValueError(f"y must have shape ({H.shape[0]},), got {y.shape}")
        if not np.all(np.isfinite(H)) or not np.all(np.isfinite(y)):
            raise ValueError("H and y must be finite")
        if not self.sigma_y > 0.0:
            raise ValueError("need sigma_y > 0")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", y)

    @property
    def d_y(self) -> int:
        return self.H.shape[0]

    @property
    def d_x(self) -> int:
        return self.H.shape[1]


class GaussianPrior:
    """Gaussian prior N(mean, cov) with closed-form noised marginals.

    The covariance must be symmetric positive definite; construction
    fails with a hint to add diagonal jitter otherwise.  Instances are
    immutable after construction and all queries are pure.
    """

    batched_hessian = False

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("mean must be (d,) and cov (d, d)")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mean and cov must be finite")
        if not np.allclose(cov, cov.T, atol=1e-10 * max(1.0, np.abs(cov).max())):
            raise ValueError("cov must be symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                "cov is not positive definite; add diagonal jitter "
                "(e.g. cov + 1e-6 * I)"
            ) from exc
        self.mean = mean
        self.cov = cov
        self._chol = chol
        self._marginal_cache: dict = {}

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _marginal(self, t: float, schedule):
        """Factorizations of C_t = alpha_t C0 + v_t I at one time point.

        Keyed by the (alpha, v) pair, which fully determines C_t; samplers
        query score and Hessian at the same t back to back.  The cache is
        per process.
        """
        alpha = float(schedule.alpha(t))
        v = float(schedule.v(t))
        key = (alpha, v)
        hit = self._marginal_cache.get(key)
        if hit is not None:
            return hit
        cov_t = alpha * self.cov + v * np.eye(self.dim)
        chol_t = cho_factor(cov_t, lower=True)
        prec_t = cho_solve(chol_t, np.eye(self.dim))
        prec_t = 0.5 * (prec_t + prec_t.T)
        entry = (alpha, v, cov_t, chol_t, prec_t)
        if len(self._marginal_cache) > 4:
            self._marginal_cache.clear()
        self._marginal_cache[key] = entry
        return entry

    def logpdf_t(self, x, t: float, schedule):
        """Log density of the noised marginal p_t at x; x is (d,) or (n, d)."""
        alpha, _, _, chol_t, _ = self._marginal(t, schedule)
        xb, single = _as_batch(x, self.dim)
        delta = xb - np.sqrt(alpha) * self.mean
        solved = cho_solve(chol_t, delta.T).T
        quad = np.einsum("nd,nd->n", delta, solved)
        logdet = 2.0 * np.sum(np.log(np.diag(chol_t[0])))
        out = -0.5 * (quad + logdet + self.dim * np.log(2.0 * np.pi))
        return out[0] if single else out

    def score_t(self, x, t: float, schedule):
        """Gradient of log p_t at x: -C_t^{-1} (x - sqrt(alpha_t) m0)."""
        alpha, _, _, chol_t, _ = self._marginal(t, schedule)
        xb, single = _as_batch(x, self.dim)
        delta = xb - np.sqrt(alpha) * self.mean
        out = -cho_solve(chol_t, delta.T).T
        return out[0] if single else out

    def hessian_t(self, x, t: float, schedule):
        """Hessian of log p_t: the constant matrix -C_t^{-1}, shape (d, d)."""
        _, _, _, _, prec_t = self._marginal(t, schedule)
        return -prec_t

    def sample(self, n: int, rng: np.random.Generator):
        z = rng.standard_normal((n, self.dim))
        lower = np.tril(self._chol[0])
        return self.mean + z @ lower.T

    def exact_posterior(self, mm: MeasurementModel) -> "GaussianPrior":
        """Posterior N(mu, Sigma) given y = H x + sigma_y * noise.

        Computed via the Kalman gain K = C0 H^T (H C0 H^T + sigma^2 I)^{-1}
        to avoid inverting C0.
        """
        H, y, sig2 = mm.H, mm.y, mm.sigma_y**2
        CHt = self.cov @ H.T
        S = H @ CHt + sig2 * np.eye(mm.d_y)
        chol_s = cho_factor(0.5 * (S + S.T), lower=True)
        gain = cho_solve(chol_s, CHt.T).T
        mean = self.mean + gain @ (y - H @ self.mean)
        cov = self.cov - gain @ CHt.T
        return GaussianPrior(mean, 0.5 * (cov + cov.T))


class GmmPrior:
    """Mixture of identity-covariance Gaussians sum_k w_k N(mu_k, I).

    The noised marginal at time t keeps the mixture structure with
    component means sqrt(alpha_t) mu_k and isotropic component variance
    alpha_t + v_t.  Responsibilities are always formed in log space.
    """

    batched_hessian = True

    def __init__(self, means, weights):
        means = np.asarray(means, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError("means must be (K, d)")
        if weights.shape != (means.shape[0],):
            raise ValueError("weights must be (K,)")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(weights)):
            raise ValueError("means and weights must be finite")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        self.means = means
        self.weights = weights
        self._log_weights = np.log(weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def _smoothed(self, t: float, schedule):
        alpha = float(schedule.alpha(t))
        v = float(schedule.v(t))
        return np.sqrt(alpha) * self.means, alpha + v

    def _log_joint(self, xb, t: float, schedule):
        """log w_k + log N(x; sqrt(alpha) mu_k, s2 I) up to the shared constant."""
        means_t, s2 = self._smoothed(t, schedule)
        # (n, K) squared distances to the scaled component means.
        d2 = cdist(xb, means_t, "sqeuclidean")
        return self._log_weights - 0.5 * d2 / s2, means_t, s2

    def logpdf_t(self, x, t: float, schedule):
        """Log density of the noised marginal; x is (d,) or (n, d)."""
        xb, single = _as_batch(x, self.dim)
        log_joint, _, s2 = self._log_joint(xb, t, schedule)
        out = logsumexp(log_joint, axis=1) - 0.5 * self.dim * np.log(
            2.0 * np.pi * s2
        )
        return out[0] if single else out

    def responsibilities_t(self, x, t: float, schedule):
        """Posterior component probabilities at x under p_t, shape (n, K)."""
        xb, single = _as_batch(x, self.dim)
        log_joint, _, _ = self._log_joint(xb, t, schedule)
        log_r = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
        r = np.exp(log_r)
        return r[0] if single else r

    def score_t(self, x, t: float, schedule):
        """Gradient of log p_t: (sum_k r_k sqrt(alpha) mu_k - x) / s2."""
        xb, single = _as_batch(x, self.dim)
        log_joint, means_t, s2 = self._log_joint(xb, t, schedule)
        log_r = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
        r = np.exp(log_r)
        out = (r @ means_t - xb) / s2
        return out[0] if single else out

    def hessian_t(self, x, t: float, schedule):
        """Hessian of log p_t, shape (n, d, d) for batched x, (d, d) for a vector.

        With responsibilities r_k, scaled means m_k = sqrt(alpha) mu_k and
        m_bar = sum_k r_k m_k:

            hess = (1/s2^2) sum_k r_k (m_k - m_bar)(m_k - m_bar)^T - I/s2.

        The quadratic term is centred in mean space, never through x: the
        uncentred form sum r s s^T - s_bar s_bar^T leaves O(eps) rounding
        noise that downstream (I + v_t hess)/sqrt(alpha_t) amplifies
        catastrophically once alpha_t is below machine precision.
        """
        xb, single = _as_batch(x, self.dim)
        log_joint, means_t, s2 = self._log_joint(xb, t, schedule)
        log_r = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
        r = np.exp(log_r)
        mu_bar = r @ means_t
        w = means_t[None, :, :] - mu_bar[:, None, :]
        hess = np.matmul(np.swapaxes(w, 1, 2) * r[:, None, :], w) / s2**2
        hess -= np.eye(self.dim) / s2
        return hess[0] if single else hess

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        return self.means[idx] + rng.standard_normal((n, self.dim))

    def exact_posterior(self, mm: MeasurementModel) -> "PosteriorGmm":
        """Exact posterior mixture given y = H x + sigma_y * noise.

        Every component shares Sigma = (I + H^T H / sigma^2)^{-1}; the
        component means are Sigma (H^T y / sigma^2 + mu_k) and the weights
        are reweighted by the marginal likelihood N(y; H mu_k,
        sigma^2 I + H H^T), normalized in log space.
        """
        H, y, sig2 = mm.H, mm.y, mm.sigma_y**2
        d = self.dim
        S = sig2 * np.eye(mm.d_y) + H @ H.T
        chol_s = cho_factor(0.5 * (S + S.T), lower=True)
        # Woodbury: Sigma = I - H^T S^{-1} H, and Sigma H^T y / sigma^2
        # collapses to H^T S^{-1} y.
        cov = np.eye(d) - H.T @ cho_solve(chol_s, H)
        cov = 0.5 * (cov + cov.T)
        shift = H.T @ cho_solve(chol_s, y)
        means = shift + self.means @ cov.T
        resid = y - self.means @ H.T
        quad = np.einsum("kd,kd->k", resid, cho_solve(chol_s, resid.T).T)
        logdet = 2.0 * np.sum(np.log(np.diag(chol_s[0])))
        log_w = self._log_weights - 0.5 * quad - 0.5 * logdet
        log_w -= logsumexp(log_w)
        return PosteriorGmm(means, cov, np.exp(log_w))


class PosteriorGmm:
    """Gaussian mixture with one shared covariance across components."""

    def __init__(self, means, cov, weights):
        means = np.asarray(means, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (means.shape[0],):
            raise ValueError("weights must be (K,)")
        if abs(weights.sum() - 1.0) > 1e-8 or np.any(weights < 0.0):
            raise ValueError("weights must be a probability vector")
        self.means = means
        self.cov = cov
        self.weights = weights / weights.sum()
        self._chol_lower = np.linalg.cholesky(cov)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.choice(self.means.shape[0], size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[idx] + z @ self._chol_lower.T


def grf_build(grid_side: int, domain=(-5.0, 5.0), jitter: float = 1e-6) -> GaussianPrior:
    """Matern-5/2 Gaussian random field on a grid_side^2 grid over domain^2.

    Grid points are row-major over the square; the prior mean is zero and
    the covariance gets ``jitter * I`` added for a stable factorization.
    """
    if grid_side < 1:
        raise ValueError("need grid_side >= 1")
    lo, hi = domain
    axis = np.linspace(lo, hi, grid_side)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    cov = matern52(cdist(pts, pts)) + jitter * np.eye(pts.shape[0])
    return GaussianPrior(np.zeros(pts.shape[0]), cov)


def gmm_build(d_x: int) -> GmmPrior:
    """Equally weighted 25-component mixture on the 8 * {-2..2}^2 lattice.

    Component (i, j) has mean (8i, 8j, 8i, 8j, ...) in R^{d_x}; d_x must
    be even.  Components are ordered by i then j.
    """
    if d_x < 2 or d_x % 2:
        raise ValueError("need even d_x >= 2")
    offsets = [(8.0 * i, 8.0 * j) for i in range(-2, 3) for j in range(-2, 3)]
    means = np.array([np.tile(o, d_x // 2) for o in offsets])
    return GmmPrior(means, np.full(25, 1.0 / 25.0))


def generate_measurement(
    prior, d_y: int, sigma_y: float, rng: np.random.Generator
) -> MeasurementModel:
    """Draw a random observation operator and a data vector from the prior.

    H starts from an iid standard normal matrix whose singular values are
    replaced with iid Uniform[0, 1] draws, so H is full rank with a
    controlled spectrum.  Then x* ~ prior and y = H x* + sigma_y * noise.
    """
    d_x = prior.dim
    if not 1 <= d_y <= d_x:
        raise ValueError("need 1 <= d_y <= d_x")
    raw = rng.standard_normal((d_y, d_x))
    u, _, vt = np.linalg.svd(raw, full_matrices=False)
    s = rng.uniform(size=min(d_y, d_x))
    H = (u * s) @ vt
    x_star = prior.sample(1, rng)[0]
    y = H @ x_star + sigma_y * rng.standard_normal(d_y)
    return MeasurementModel(H=H, sigma_y=sigma_y, y=y, x_star=x_star)
