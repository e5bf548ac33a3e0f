"""Posterior moments of the clean signal given a noised state.

For a forward kernel x_t | x_0 ~ N(sqrt(alpha_t) x_0, v_t I), the first
two moments of x_0 | x_t follow from the score and Hessian of the noised
marginal log p_t:

    m_{0|t} = (x_t + v_t * score) / sqrt(alpha_t)
    C_{0|t} = (v_t / alpha_t) (I + v_t * hessian)

The Jacobian J = d m_{0|t} / d x_t = (I + v_t * hessian) / sqrt(alpha_t)
ties the two together: C_{0|t} = (v_t / sqrt(alpha_t)) J.  The VE case is
the same with alpha_t = 1.

These operations take score and Hessian *values*, not a prior object, so
they apply unchanged to learned score models.
"""
from __future__ import annotations

import dataclasses

import numpy as np

__all__ = ["TweedieMoments", "moments_vp", "moments_ve", "moments"]


@dataclasses.dataclass
class TweedieMoments:
    """First two moments of x_0 | x_t and the denoiser Jacobian.

    Attributes:
        m: posterior mean, shape (..., d).
        J: Jacobian of m with respect to x_t, shape (..., d, d); shared
            across a batch when the Hessian is state independent.
        C: posterior covariance (v_t / sqrt(alpha_t)) J, symmetrized,
            same shape as J.
    """

    m: np.ndarray
    J: np.ndarray
    C: np.ndarray


def _symmetrized_jac(hessian, v: float, scale: float):
    hessian = np.asarray(hessian, dtype=np.float64)
    d = hessian.shape[-1]
    J = (np.eye(d) + v * hessian) / scale
    return 0.5 * (J + np.swapaxes(J, -1, -2))


def moments_vp(score, hessian, x_t, t: float, schedule) -> TweedieMoments:
    """Tweedie moments under a variance preserving schedule.

    Args:
        score: gradient of log p_t at x_t, shape (..., d).
        hessian: Hessian of log p_t, shape (..., d, d) or (d, d) shared.
        x_t: noised state, shape (..., d).
        t: time in the schedule domain.
        schedule: VP schedule (continuous or discrete).

    Raises:
        ValueError: if alpha_t has underflowed to zero, in which case the
            1/sqrt(alpha_t) rescaling is not representable.
    """
    if schedule.kind != "vp":
        raise ValueError(f"expected a VP schedule, got kind {schedule.kind!r}")
    alpha = float(schedule.alpha(t))
    v = float(schedule.v(t))
    if alpha == 0.0:
        raise ValueError(f"alpha underflowed to zero at t={t!r}")
    sqrt_alpha = np.sqrt(alpha)
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    m = (x_t + v * score) / sqrt_alpha
    J = _symmetrized_jac(hessian, v, sqrt_alpha)
    return TweedieMoments(m=m, J=J, C=(v / sqrt_alpha) * J)


def moments_ve(score, hessian, x_t, t: float, schedule) -> TweedieMoments:
    """Tweedie moments under a variance exploding schedule."""
    if schedule.kind != "ve":
        raise ValueError(f"expected a VE schedule, got kind {schedule.kind!r}")
    v = float(schedule.v(t))
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    m = x_t + v * score
    J = _symmetrized_jac(hessian, v, 1.0)
    return TweedieMoments(m=m, J=J, C=v * J)


def moments(score, hessian, x_t, t: float, schedule) -> TweedieMoments:
    """Dispatch to moments_vp or moments_ve on the schedule kind."""
    if schedule.kind == "vp":
        return moments_vp(score, hessian, x_t, t, schedule)
    if schedule.kind == "ve":
        return moments_ve(score, hessian, x_t, t, schedule)
    raise ValueError(f"unknown schedule kind {schedule.kind!r}")
