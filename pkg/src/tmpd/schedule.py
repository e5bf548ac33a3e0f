"""Noise schedules for the forward diffusion, in continuous and discrete time.

Two families are supported, both running on t in [0, T]:

* Variance preserving (VP): an Ornstein-Uhlenbeck process with linear
  noise rate beta(t) = beta_min + t * (beta_max - beta_min).  The
  transition kernel is

      x_t | x_0  ~  N(sqrt(alpha_t) x_0, v_t I),

  with alpha_t = exp(-int_0^t beta(s) ds) and v_t = 1 - alpha_t.

* Variance exploding (VE): pure Brownian motion with a geometric noise
  ramp.  The transition kernel is N(x_0, v_t I) with

      v_t = sigma_min^2 ((sigma_max / sigma_min)^(2 t) - 1),

  so that v_0 = 0 exactly and v_T ~= sigma_max^2 for sigma_max >> sigma_min.

``discretize`` turns either schedule into the per-step quantities used by
ancestral sampling on a uniform time grid.
"""
from __future__ import annotations

import dataclasses

import numpy as np

__all__ = ["VpSchedule", "VeSchedule", "DiscreteSchedule", "discretize"]

# Relative clip of the integration interval: continuous-time samplers run on
# [eps, T] with eps = EPS_REL * T to stay away from the t = 0 boundary.
EPS_REL = 1e-3

# Per-step noise rates are clamped below this value so that the ancestral
# update coefficients stay well defined even for very aggressive schedules.
BETA_CLAMP = 0.999


def _check_time(t, T: float):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > T):
        raise ValueError(f"time must lie in [0, {T}], got {t!r}")
    return t


@dataclasses.dataclass(frozen=True)
class VpSchedule:
    """Variance preserving schedule with linear beta(t).

    Args:
        beta_min: noise rate at t = 0.
        beta_max: noise rate at t = T.
        T: time horizon.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0
    T: float = 1.0

    kind = "vp"

    def __post_init__(self):
        if not (0.0 < self.beta_min <= self.beta_max):
            raise ValueError("need 0 < beta_min <= beta_max")
        if self.T <= 0.0:
            raise ValueError("need T > 0")

    @property
    def eps(self) -> float:
        return EPS_REL * self.T

    def beta(self, t):
        t = _check_time(t, self.T)
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def int_beta(self, t):
        """Integral of beta from 0 to t."""
        t = _check_time(t, self.T)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t**2

    def alpha(self, t):
        """Squared signal scale alpha_t = exp(-int_0^t beta)."""
        return np.exp(-self.int_beta(t))

    def v(self, t):
        """Marginal noise variance v_t = 1 - alpha_t.

        Defined literally as ``1.0 - alpha(t)`` so that alpha_t + v_t == 1
        holds exactly in floating point.
        """
        return 1.0 - self.alpha(t)


@dataclasses.dataclass(frozen=True)
class VeSchedule:
    """Variance exploding schedule with a geometric noise ramp.

    Args:
        sigma_min: noise scale reached at (just after) t = 0.
        sigma_max: noise scale at t = T.
        T: time horizon.
    """

    sigma_min: float = 0.01
    sigma_max: float = 50.0
    T: float = 1.0

    kind = "ve"

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.T <= 0.0:
            raise ValueError("need T > 0")

    @property
    def eps(self) -> float:
        return EPS_REL * self.T

    def alpha(self, t):
        """Squared signal scale; identically 1 (no signal shrinkage)."""
        t = _check_time(t, self.T)
        return np.ones_like(t, dtype=np.float64) if t.ndim else 1.0

    def v(self, t):
        """Marginal noise variance sigma_min^2 ((sigma_max/sigma_min)^(2t) - 1)."""
        t = _check_time(t, self.T)
        log_ratio = np.log(self.sigma_max / self.sigma_min)
        return self.sigma_min**2 * np.expm1(2.0 * t * log_ratio / self.T)

    def dv_dt(self, t):
        """Time derivative of the noise variance (squared diffusion g^2)."""
        t = _check_time(t, self.T)
        log_ratio = np.log(self.sigma_max / self.sigma_min)
        rate = 2.0 * log_ratio / self.T
        return self.sigma_min**2 * rate * np.exp(rate * t)


@dataclasses.dataclass(frozen=True, eq=False)
class DiscreteSchedule:
    """Per-step quantities for ancestral sampling on a uniform time grid.

    Steps are indexed n = 0..N-1 with ts[0] the smallest time; sampling
    walks n = N-1 down to 0.  ``alphas_prev[n]`` and ``vs_prev[n]`` refer
    to step n-1, with the t = 0 boundary values (alpha = 1, v = 0) at
    n = 0.

    For VP, ``betas[n] = 1 - alphas[n]/alphas_prev[n]`` clamped to
    (0, 0.999] and ``sigmas[n]`` is the conditional posterior noise scale
    sqrt(vs_prev[n] * betas[n] / vs[n]).  For VE, ``betas[n]`` is the
    noise variance increment ratio (vs[n] - vs_prev[n]) / vs[n] and
    ``sigmas[n] = sqrt(vs_prev[n] (vs[n] - vs_prev[n]) / vs[n])``.

    ``alpha(t)`` and ``v(t)`` look the per-step values up at an exact grid
    time, so a DiscreteSchedule can stand in for its continuous parent
    wherever scores are queried.
    """

    kind: str
    ts: np.ndarray
    alphas: np.ndarray
    vs: np.ndarray
    alphas_prev: np.ndarray
    vs_prev: np.ndarray
    betas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.ts.shape[0]

    def _index(self, t: float) -> int:
        i = int(np.searchsorted(self.ts, t))
        if i == self.n_steps or self.ts[i] != t:
            raise ValueError(f"t={t!r} is not a grid time of this schedule")
        return i

    def alpha(self, t: float) -> float:
        return float(self.alphas[self._index(t)])

    def v(self, t: float) -> float:
        return float(self.vs[self._index(t)])


def discretize(schedule, n_steps: int) -> DiscreteSchedule:
    """Evaluate a continuous schedule on a uniform grid over [eps, T].

    Args:
        schedule: a VpSchedule or VeSchedule.
        n_steps: number of grid points N; must be >= 2.

    Returns:
        DiscreteSchedule with arrays of length N.
    """
    if n_steps < 2:
        raise ValueError("need n_steps >= 2")
    t = np.linspace(schedule.eps, schedule.T, n_steps)
    if schedule.kind == "vp":
        int_beta = schedule.int_beta(t)
        int_prev = np.concatenate(([0.0], int_beta[:-1]))
        # Per-step noise rate from the exact transition over [t_{n-1}, t_n].
        beta = -np.expm1(-(int_beta - int_prev))
        beta = np.minimum(beta, BETA_CLAMP)
        alpha = np.cumprod(1.0 - beta)
        v = 1.0 - alpha
        alpha_prev = np.concatenate(([1.0], alpha[:-1]))
        v_prev = 1.0 - alpha_prev
        sigma = np.sqrt(v_prev * beta / v)
    elif schedule.kind == "ve":
        v = schedule.v(t)
        v_prev = np.concatenate(([0.0], v[:-1]))
        alpha = np.ones_like(v)
        alpha_prev = np.ones_like(v)
        beta = np.minimum((v - v_prev) / v, BETA_CLAMP)
        sigma = np.sqrt(v_prev * (v - v_prev) / v)
    else:
        raise ValueError(f"unknown schedule kind {schedule.kind!r}")
    return DiscreteSchedule(
        kind=schedule.kind,
        ts=t,
        alphas=alpha,
        vs=v,
        alphas_prev=alpha_prev,
        vs_prev=v_prev,
        betas=beta,
        sigmas=sigma,
    )
