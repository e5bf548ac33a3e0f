"""Reverse-time samplers driven by exact prior scores plus guidance.

Two integrators are provided, each for both schedule families:

* ``em_reverse``: Euler-Maruyama on the reverse SDE.  For VP the drift is
  0.5 beta(t) x + beta(t) (score + guidance) with diffusion sqrt(beta(t));
  for VE the drift is g^2(t) (score + guidance) with diffusion g(t),
  g^2 = dv/dt.  Integration runs over N uniform steps from T - eps down
  to eps.

* ``ddpm_ancestral``: the discrete ancestral chain.  Per step the Tweedie
  mean is conditioned on the data, either exactly through
  ``bayes_update_mean`` (tmpd) or by shifting it with a likelihood score
  f as m + (v_n / sqrt(alpha_n)) f (VP; v_n f for VE), then

      x_{n-1} = sqrt(1 - beta_n) (v_{n-1} / v_n) x_n
                + sqrt(alpha_{n-1}) (beta_n / v_n) m^y + sigma_n z

  for VP, and x_{n-1} = (v_{n-1}/v_n) x_n + (1 - v_{n-1}/v_n) m^y
  + sigma_n z for VE.  The n = 0 coefficients make the final state equal
  m^y with no noise.  The one exception is the step-size-normalized DPS
  variant, whose correction f(x_n) is added to x_{n-1} directly with
  unit coefficient (the update it was tuned on) while m^y stays at the
  unconditional Tweedie mean.

``batch_run`` executes many independent chains, optionally across a
process pool, with failures isolated per chain.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import guidance as gd
from . import tweedie
from .schedule import DiscreteSchedule, discretize

__all__ = [
    "SamplerConfig",
    "Trajectory",
    "ChainSpec",
    "ChainResult",
    "SamplingError",
    "em_reverse",
    "ddpm_ancestral",
    "batch_run",
]

_METHODS = ("em-vp", "em-ve", "ddpm-vp", "ddpm-ve")

# Workspace budget (bytes) for one chunk of per-sample (d, d) Hessians.
_CHUNK_BYTES = 1 << 27


class SamplingError(RuntimeError):
    """A chain produced a non-finite state."""


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    """Integrator choice and chain size.

    Attributes:
        method: one of "em-vp", "em-ve", "ddpm-vp", "ddpm-ve".
        steps: number of integrator steps N >= 2.
        batch: number of samples drawn jointly.
        seed: RNG seed for this chain.
        guidance: guidance variant, or None for unconditional sampling.
    """

    method: str
    steps: int
    batch: int
    seed: int
    guidance: gd.GuidanceKind | None = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.steps < 2:
            raise ValueError("need steps >= 2")
        if self.batch < 1:
            raise ValueError("need batch >= 1")

    @property
    def sde_kind(self) -> str:
        return self.method.split("-")[1]

    @property
    def integrator(self) -> str:
        return self.method.split("-")[0]


@dataclasses.dataclass
class Trajectory:
    """Final samples of one chain plus light per-run diagnostics.

    ``diagnostics`` carries "ridge_fallbacks" (count of regularized
    guidance solves) and "guidance_norm" (per-step mean norm of the
    applied data shift; zeros for unconditional runs).
    """

    samples: np.ndarray
    diagnostics: dict


def _check_compat(cfg: SamplerConfig, schedule, integrator: str, mm):
    if cfg.integrator != integrator:
        raise ValueError(f"config method {cfg.method!r} is not an {integrator} method")
    if schedule.kind != cfg.sde_kind:
        raise ValueError(
            f"schedule kind {schedule.kind!r} does not match method {cfg.method!r}"
        )
    if cfg.guidance is not None and mm is None:
        raise ValueError("guided sampling requires a measurement model")


def _chunk_slices(n: int, dim: int, batched_hessian: bool):
    if not batched_hessian:
        return [slice(0, n)]
    size = max(1, _CHUNK_BYTES // (8 * dim * dim))
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _score_and_shift(prior, mm, x, t, schedule, kind, diag):
    """Score of p_t at x and the guidance term, chunked over the batch.

    Returns (score, shift) where shift is None for unconditional runs.
    """
    n = x.shape[0]
    if kind is None:
        return prior.score_t(x, t, schedule), None
    score = np.empty_like(x)
    shift = np.empty_like(x)
    for sl in _chunk_slices(n, x.shape[1], prior.batched_hessian):
        xc = x[sl]
        score_c = prior.score_t(xc, t, schedule)
        hess_c = prior.hessian_t(xc, t, schedule)
        tm = tweedie.moments(score_c, hess_c, xc, t, schedule)
        score[sl] = score_c
        shift[sl] = gd.likelihood_score(kind, tm, mm, t, schedule, diag)
    return score, shift


def _guided_mean(prior, mm, x, t, schedule, kind, diag):
    """Data-conditioned Tweedie mean m^y for one ancestral step.

    Returns (m^y, post_kick, mean guidance norm).  post_kick is None for
    every variant except the step-size-normalized DPS one, which corrects
    the iterate directly after the ancestral update (the update its
    normalization was tuned for) instead of folding into m^y.
    """
    n = x.shape[0]
    out = np.empty_like(x)
    shift_norm = 0.0
    scale = 0.0
    chung = kind is not None and kind.name == "dps-chung"
    kick = np.empty_like(x) if chung else None
    if kind is not None and kind.name not in ("tmpd", "dps-chung"):
        alpha = float(schedule.alpha(t))
        scale = float(schedule.v(t)) / np.sqrt(alpha)
    for sl in _chunk_slices(n, x.shape[1], prior.batched_hessian):
        xc = x[sl]
        score_c = prior.score_t(xc, t, schedule)
        hess_c = prior.hessian_t(xc, t, schedule)
        tm = tweedie.moments(score_c, hess_c, xc, t, schedule)
        if kind is None:
            out[sl] = tm.m
        elif kind.name == "tmpd":
            out[sl] = gd.bayes_update_mean(tm, mm, t, schedule, diag)
        elif chung:
            out[sl] = tm.m
            kick[sl] = gd.likelihood_score(kind, tm, mm, t, schedule, diag)
            shift_norm += float(np.sum(np.linalg.norm(kick[sl], axis=1)))
        else:
            f = gd.likelihood_score(kind, tm, mm, t, schedule, diag)
            out[sl] = tm.m + scale * f
        if kind is not None and not chung:
            shift_norm += float(np.sum(np.linalg.norm(out[sl] - tm.m, axis=1)))
    return out, kick, shift_norm / n


def _abort_if_not_finite(x, step: int, t: float, cfg: SamplerConfig):
    if not np.all(np.isfinite(x)):
        raise SamplingError(
            f"non-finite state at step {step} (t={t:.6g}) for method "
            f"{cfg.method!r}, guidance "
            f"{cfg.guidance.name if cfg.guidance else 'none'!r}, "
            f"seed {cfg.seed}"
        )


def em_reverse(prior, mm, schedule, cfg: SamplerConfig, rng=None) -> Trajectory:
    """Integrate the reverse SDE with Euler-Maruyama.

    Args:
        prior: object exposing score_t / hessian_t / batched_hessian / dim.
        mm: MeasurementModel, or None for unconditional sampling.
        schedule: continuous VpSchedule or VeSchedule.
        cfg: sampler configuration with an "em-*" method.
        rng: numpy Generator; defaults to one seeded with cfg.seed.
    """
    _check_compat(cfg, schedule, "em", mm)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    diag = gd.Diagnostics()
    d = prior.dim
    taus = np.linspace(schedule.T - schedule.eps, schedule.eps, cfg.steps + 1)
    h = (schedule.T - 2.0 * schedule.eps) / cfg.steps
    if schedule.kind == "vp":
        x = rng.standard_normal((cfg.batch, d))
    else:
        x = np.sqrt(float(schedule.v(taus[0]))) * rng.standard_normal((cfg.batch, d))
    norms = np.zeros(cfg.steps)
    for k in range(cfg.steps):
        t = float(taus[k])
        score, shift = _score_and_shift(prior, mm, x, t, schedule, cfg.guidance, diag)
        total = score if shift is None else score + shift
        if schedule.kind == "vp":
            beta = float(schedule.beta(t))
            drift = 0.5 * beta * x + beta * total
            diffusion2 = beta
        else:
            g2 = float(schedule.dv_dt(t))
            drift = g2 * total
            diffusion2 = g2
        x = x + h * drift + np.sqrt(diffusion2 * h) * rng.standard_normal(x.shape)
        if shift is not None:
            norms[k] = float(np.mean(np.linalg.norm(shift, axis=1)))
        _abort_if_not_finite(x, k, t, cfg)
    return Trajectory(
        samples=x,
        diagnostics={
            "ridge_fallbacks": diag.ridge_fallbacks,
            "guidance_norm": norms,
        },
    )


def ddpm_ancestral(
    prior, mm, dschedule: DiscreteSchedule, cfg: SamplerConfig, rng=None
) -> Trajectory:
    """Run the guided ancestral chain on a discrete schedule."""
    _check_compat(cfg, dschedule, "ddpm", mm)
    if dschedule.n_steps != cfg.steps:
        raise ValueError(
            f"schedule has {dschedule.n_steps} steps, config wants {cfg.steps}"
        )
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    diag = gd.Diagnostics()
    d = prior.dim
    if dschedule.kind == "vp":
        x = rng.standard_normal((cfg.batch, d))
    else:
        x = np.sqrt(dschedule.vs[-1]) * rng.standard_normal((cfg.batch, d))
    norms = np.zeros(cfg.steps)
    for j in range(cfg.steps - 1, -1, -1):
        t = float(dschedule.ts[j])
        mean_y, kick, norms[j] = _guided_mean(
            prior, mm, x, t, dschedule, cfg.guidance, diag
        )
        v, v_prev = dschedule.vs[j], dschedule.vs_prev[j]
        if dschedule.kind == "vp":
            beta = dschedule.betas[j]
            coef_x = np.sqrt(1.0 - beta) * (v_prev / v)
            coef_m = np.sqrt(dschedule.alphas_prev[j]) * (beta / v)
        else:
            coef_x = v_prev / v
            coef_m = (v - v_prev) / v
        x = coef_x * x + coef_m * mean_y
        if j > 0:
            x = x + dschedule.sigmas[j] * rng.standard_normal(x.shape)
        if kick is not None:
            x = x + kick
        _abort_if_not_finite(x, j, t, cfg)
    return Trajectory(
        samples=x,
        diagnostics={
            "ridge_fallbacks": diag.ridge_fallbacks,
            "guidance_norm": norms,
        },
    )


@dataclasses.dataclass
class ChainSpec:
    """One independent chain: problem instance plus sampler config.

    ``schedule`` is continuous; ddpm methods discretize it to cfg.steps.
    """

    prior: object
    mm: object
    schedule: object
    cfg: SamplerConfig


@dataclasses.dataclass
class ChainResult:
    trajectory: Trajectory | None
    error: str | None = None


def _run_chain(spec: ChainSpec) -> Trajectory:
    if spec.cfg.integrator == "em":
        return em_reverse(spec.prior, spec.mm, spec.schedule, spec.cfg)
    dsched = discretize(spec.schedule, spec.cfg.steps)
    return ddpm_ancestral(spec.prior, spec.mm, dsched, spec.cfg)


def _run_chain_guarded(spec: ChainSpec) -> ChainResult:
    try:
        return ChainResult(trajectory=_run_chain(spec))
    except Exception as exc:  # noqa: BLE001 - per-chain isolation is the contract
        return ChainResult(trajectory=None, error=f"{type(exc).__name__}: {exc}")


def batch_run(chains, workers: int = 1) -> list[ChainResult]:
    """Run independent chains, optionally on a process pool.

    Each chain is seeded by its own config, so results are identical for
    any worker count; per-chain failures are returned as ChainResult
    errors rather than raised.
    """
    chains = list(chains)
    if workers <= 1 or len(chains) <= 1:
        return [_run_chain_guarded(spec) for spec in chains]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain_guarded, chains))
