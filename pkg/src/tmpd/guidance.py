"""Likelihood guidance terms for linear-Gaussian measurements.

Given Tweedie moments (m, J, C) of x_0 | x_t and a measurement
y = H x_0 + sigma_y * noise, each variant approximates the gradient of
log p(y | x_t) as J^T H^T K^{-1} (y - H m) with a variant-specific system
matrix K:

* tmpd:          K = H C H^T + sigma_y^2 I        (full covariance)
* dtmpd:         K = H diag(C) H^T + sigma_y^2 I  (diagonal covariance)
* dtmpd-rowsum:  as dtmpd with diag(C) replaced by masked row sums of C;
                 only valid when every row of H has at most one nonzero
* pigdm:         K = r_t^2 H H^T + sigma_y^2 I with r_t^2 = v_t/(v_t+alpha_t)
* dps / dps-chung: K = sigma_y^2 I (zero covariance); the chung flavour
                 instead scales the raw gradient of 0.5 ||y - H m||^2 by
                 zeta' / ||y - H m||

``bayes_update_mean`` applies the same full-covariance solve to the mean:
m + C H^T K^{-1} (y - H m).

All systems are solved via Cholesky, never by forming an inverse.  If a
factorization fails, the symmetrized system is regularized with +1e-10 I
and retried once; the event is counted on the ``Diagnostics`` object.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .prior import MeasurementModel
from .tweedie import TweedieMoments

__all__ = [
    "GuidanceKind",
    "Diagnostics",
    "UnsupportedOperatorError",
    "parse_guidance",
    "likelihood_score",
    "likelihood_score_tmpd",
    "likelihood_score_dtmpd",
    "likelihood_score_pigdm",
    "likelihood_score_dps",
    "bayes_update_mean",
]

RIDGE = 1e-10

_VALID_KINDS = frozenset(
    {"tmpd", "dtmpd", "dtmpd-rowsum", "dps", "dps-chung", "pigdm"}
)


class UnsupportedOperatorError(ValueError):
    """The observation operator violates a variant's structural assumption."""


@dataclasses.dataclass(frozen=True)
class GuidanceKind:
    """A guidance variant tag plus its scalar parameter, if any.

    ``zeta`` is the step-size constant of the dps-chung flavour and must
    lie in [0.1, 1.0]; all other variants take no parameter.
    """

    name: str
    zeta: float | None = None

    def __post_init__(self):
        if self.name not in _VALID_KINDS:
            raise ValueError(f"unknown guidance kind {self.name!r}")
        if self.name == "dps-chung":
            if self.zeta is None or not 0.1 <= self.zeta <= 1.0:
                raise ValueError("dps-chung requires zeta in [0.1, 1.0]")
        elif self.zeta is not None:
            raise ValueError(f"{self.name} takes no parameter")


def parse_guidance(text: str) -> GuidanceKind | None:
    """Parse a guidance config string.

    Accepted forms: "tmpd", "dtmpd", "dtmpd:rowsum", "dps",
    "dps-chung:<zeta>", "pigdm", and "none" (returns None, meaning
    unconditional sampling).
    """
    text = text.strip().lower()
    if text == "none":
        return None
    head, _, arg = text.partition(":")
    if head == "dtmpd" and arg:
        if arg != "rowsum":
            raise ValueError(f"unknown dtmpd mode {arg!r}")
        return GuidanceKind("dtmpd-rowsum")
    if head == "dps-chung":
        if not arg:
            raise ValueError("dps-chung requires a zeta, e.g. 'dps-chung:0.15'")
        return GuidanceKind("dps-chung", zeta=float(arg))
    if arg:
        raise ValueError(f"guidance {head!r} takes no argument")
    return GuidanceKind(head)


@dataclasses.dataclass
class Diagnostics:
    """Counters accumulated across guidance evaluations."""

    ridge_fallbacks: int = 0


def _solve_spd(S, rhs, diag: Diagnostics | None):
    """Solve S u = rhs for symmetric positive definite S via Cholesky.

    S is (k, k) or (n, k, k); rhs is (n, k) (or (k,)).  On a failed
    factorization the symmetrized system is regularized with +1e-10 I and
    retried; a second failure propagates.
    """
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        if diag is not None:
            diag.ridge_fallbacks += 1
        S = S + RIDGE * np.eye(S.shape[-1])
        L = np.linalg.cholesky(S)
    if S.ndim == 2 and rhs.ndim == 2:
        # One shared system, many right-hand sides.
        half = np.linalg.solve(L, rhs.T)
        return np.linalg.solve(L.T, half).T
    half = np.linalg.solve(L, rhs[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), half)[..., 0]


def _moment_scale(t: float, schedule) -> float:
    """The factor v_t / alpha_t relating C to I + v_t * hessian."""
    return float(schedule.v(t)) / float(schedule.alpha(t))


def _scaled_cov_solve(cov_like, scale: float, mm: MeasurementModel, rhs, diag):
    """Solve (H C H^T + sigma^2 I) u = rhs with C given as scale * B.

    The solve runs on the de-scaled system H B H^T + (sigma^2/scale) I.
    B = I + v_t * hessian has O(1) entries at every t, whereas C inflates
    by v_t/alpha_t, which reaches ~1e108 for aggressive VP schedules and
    would amplify rounding-level asymmetry in C past any fixed ridge.
    """
    if scale == 0.0:
        # v_t = 0: the posterior covariance vanishes and the system is
        # sigma^2 I.
        return rhs / mm.sigma_y**2
    S = _cov_system(cov_like / scale, mm, mm.sigma_y**2 / scale)
    return _solve_spd(S, rhs, diag) / scale


def _mat_vec(M, u):
    """Apply a (d, d) or (n, d, d) symmetric matrix stack to (n, d) vectors."""
    if M.ndim == 2:
        return u @ M.T
    return np.einsum("nij,nj->ni", M, u)


def _batched(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return m[None, :], True
    return m, False


def _residual(m, mm: MeasurementModel):
    return mm.y - m @ mm.H.T


def _cov_system(cov_like, mm: MeasurementModel, noise_var: float):
    """H A H^T + noise_var I for a full matrix A, (d, d) or (n, d, d)."""
    H = mm.H
    if cov_like.ndim == 2:
        S = H @ cov_like @ H.T
    else:
        S = np.einsum("nyj,zj->nyz", np.einsum("yi,nij->nyj", H, cov_like), H)
    return S + noise_var * np.eye(mm.d_y)


def _scaled_diag_solve(dvec, scale: float, mm: MeasurementModel, rhs, diag):
    """As _scaled_cov_solve for a diagonal covariance model diag(dvec)."""
    if scale == 0.0:
        return rhs / mm.sigma_y**2
    H = mm.H
    S = np.einsum("yi,...i,zi->...yz", H, dvec / scale, H)
    S = S + (mm.sigma_y**2 / scale) * np.eye(mm.d_y)
    return _solve_spd(S, rhs, diag) / scale


def likelihood_score_tmpd(
    tm: TweedieMoments,
    mm: MeasurementModel,
    t: float,
    schedule,
    diag: Diagnostics | None = None,
):
    """Full-covariance guidance J^T H^T (H C H^T + sigma^2 I)^{-1} (y - H m).

    The gradient acts on the mean only; C is held constant.  Output
    matches the shape of tm.m.
    """
    m, single = _batched(tm.m)
    r = _residual(m, mm)
    u = _scaled_cov_solve(tm.C, _moment_scale(t, schedule), mm, r, diag)
    f = _mat_vec(tm.J, u @ mm.H)
    return f[0] if single else f


def likelihood_score_dtmpd(
    tm: TweedieMoments,
    mm: MeasurementModel,
    t: float,
    schedule,
    mode: str = "diag",
    diag: Diagnostics | None = None,
):
    """Diagonal-covariance guidance.

    mode "diag" replaces C by its exact diagonal inside the system matrix;
    the outer Jacobian stays full.  mode "rowsum" instead uses the row
    sums of C restricted to observed columns, which is only meaningful
    when every row of H has at most one nonzero entry.
    """
    if mode not in ("diag", "rowsum"):
        raise ValueError(f"unknown dtmpd mode {mode!r}")
    m, single = _batched(tm.m)
    if mode == "rowsum":
        if np.max(np.count_nonzero(mm.H, axis=1)) > 1:
            raise UnsupportedOperatorError(
                "dtmpd:rowsum requires at most one nonzero per row of H"
            )
        observed = np.any(mm.H != 0.0, axis=0).astype(np.float64)
        dvec = np.einsum("...ij,j->...i", tm.C, observed)
    else:
        dvec = np.diagonal(tm.C, axis1=-2, axis2=-1)
    r = _residual(m, mm)
    u = _scaled_diag_solve(dvec, _moment_scale(t, schedule), mm, r, diag)
    f = _mat_vec(tm.J, u @ mm.H)
    return f[0] if single else f


def likelihood_score_pigdm(
    tm: TweedieMoments,
    mm: MeasurementModel,
    t: float,
    schedule,
    diag: Diagnostics | None = None,
):
    """Isotropic-covariance guidance with r_t^2 = v_t / (v_t + alpha_t).

    The system matrix r_t^2 H H^T + sigma^2 I is shared across the batch.
    """
    alpha = float(schedule.alpha(t))
    v = float(schedule.v(t))
    r2 = v / (v + alpha)
    m, single = _batched(tm.m)
    r = _residual(m, mm)
    S = r2 * (mm.H @ mm.H.T) + mm.sigma_y**2 * np.eye(mm.d_y)
    u = _solve_spd(S, r, diag)
    f = _mat_vec(tm.J, u @ mm.H)
    return f[0] if single else f


def likelihood_score_dps(
    tm: TweedieMoments,
    mm: MeasurementModel,
    kind: GuidanceKind,
    diag: Diagnostics | None = None,
):
    """Zero-covariance guidance.

    The unified flavour returns J^T H^T (y - H m) / sigma^2, which the
    other variants reduce to when C = 0.  The chung flavour rescales the
    raw gradient of 0.5 ||y - H m||^2 to have norm-independent step size
    zeta': zeta' J^T H^T (y - H m) / ||y - H m||, defined as 0 where the
    residual vanishes.
    """
    if kind.name not in ("dps", "dps-chung"):
        raise ValueError(f"expected a dps kind, got {kind.name!r}")
    m, single = _batched(tm.m)
    r = _residual(m, mm)
    grad = _mat_vec(tm.J, r @ mm.H)
    if kind.name == "dps":
        f = grad / mm.sigma_y**2
    else:
        norm = np.linalg.norm(r, axis=-1, keepdims=True)
        scale = np.divide(
            kind.zeta, norm, out=np.zeros_like(norm), where=norm > 0.0
        )
        f = grad * scale
    return f[0] if single else f


def bayes_update_mean(
    tm: TweedieMoments,
    mm: MeasurementModel,
    t: float,
    schedule,
    diag: Diagnostics | None = None,
):
    """Conditioned mean m + C H^T (H C H^T + sigma^2 I)^{-1} (y - H m)."""
    m, single = _batched(tm.m)
    r = _residual(m, mm)
    u = _scaled_cov_solve(tm.C, _moment_scale(t, schedule), mm, r, diag)
    out = m + _mat_vec(tm.C, u @ mm.H)
    return out[0] if single else out


def likelihood_score(
    kind: GuidanceKind,
    tm: TweedieMoments,
    mm: MeasurementModel,
    t: float,
    schedule,
    diag: Diagnostics | None = None,
):
    """Dispatch to the guidance variant named by ``kind``."""
    if kind.name == "tmpd":
        return likelihood_score_tmpd(tm, mm, t, schedule, diag)
    if kind.name == "dtmpd":
        return likelihood_score_dtmpd(tm, mm, t, schedule, "diag", diag)
    if kind.name == "dtmpd-rowsum":
        return likelihood_score_dtmpd(tm, mm, t, schedule, "rowsum", diag)
    if kind.name == "pigdm":
        return likelihood_score_pigdm(tm, mm, t, schedule, diag)
    return likelihood_score_dps(tm, mm, kind, diag)
