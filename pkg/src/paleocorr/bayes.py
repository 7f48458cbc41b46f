"""Bayesian estimation of the correlation of a bivariate normal model.

Priors (for data normalized to zero mean and unit variance):

* means ~ Normal(0, 10)
* standard deviations ~ HalfCauchy(2.5)
* correlation ~ LKJ(eta) on 2x2 correlation matrices, i.e. a density
  proportional to (1 - rho^2)^(eta - 1)
* eta ~ Uniform(0, 5)

A random-walk Metropolis sampler explores the unconstrained vector
(mu_x, mu_y, log sigma_x, log sigma_y, atanh rho, eta).  The data enter
only through five sufficient statistics, so each step is O(1).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .alignment import AlignedPairs
from .errors import ParameterError

log = logging.getLogger(__name__)

MU_PRIOR_SD = 10.0
SIGMA_PRIOR_SCALE = 2.5
ETA_MAX = 5.0
DEFAULT_PROPOSAL_SCALES = (0.1, 0.1, 0.1, 0.1, 0.15, 0.25)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BnmParams:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float
    eta: float

    @property
    def in_domain(self) -> bool:
        return (self.sigma_x > 0 and self.sigma_y > 0 and -1.0 < self.rho < 1.0
                and 0.0 < self.eta < ETA_MAX)

    @property
    def covariance(self) -> np.ndarray:
        c = self.rho * self.sigma_x * self.sigma_y
        return np.array([[self.sigma_x**2, c], [c, self.sigma_y**2]])


@dataclass(frozen=True)
class InferenceConfig:
    n_steps: int = 30000
    burn_fraction: float = 1.0 / 3.0
    n_keep: int = 1000
    proposal_scales: tuple = DEFAULT_PROPOSAL_SCALES
    seed: int = 0
    adapt: bool = True

    def __post_init__(self):
        if self.n_steps < 1 or self.n_keep < 1:
            raise ParameterError("n_steps and n_keep must be positive")
        if not 0.0 <= self.burn_fraction < 1.0:
            raise ParameterError("burn_fraction must lie in [0, 1)")
        if self.n_keep > self.n_steps - self.n_burn:
            raise ParameterError(
                f"cannot keep {self.n_keep} draws from {self.n_steps - self.n_burn} post-burn-in steps")
        if len(self.proposal_scales) != 6 or min(self.proposal_scales) < 0:
            raise ParameterError("proposal_scales needs 6 non-negative entries")
        object.__setattr__(self, "proposal_scales", tuple(float(s) for s in self.proposal_scales))

    @property
    def n_burn(self) -> int:
        return int(round(self.n_steps * self.burn_fraction))

    def with_seed(self, seed) -> InferenceConfig:
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class PosteriorSample:
    rho_draws: np.ndarray
    n_members: int = 1
    acceptance_rate: float = float("nan")
    split_half_gap: float = float("nan")
    warnings: tuple = field(default=())

    def __post_init__(self):
        d = np.asarray(self.rho_draws, dtype=float)
        if d.ndim != 1 or len(d) == 0:
            raise ParameterError("posterior needs a non-empty 1-D array of draws")
        if np.any(np.abs(d) >= 1.0) or not np.all(np.isfinite(d)):
            raise ParameterError("correlation draws must lie strictly inside (-1, 1)")
        d.setflags(write=False)
        object.__setattr__(self, "rho_draws", d)

    @property
    def provenance(self) -> str:
        return "single" if self.n_members == 1 else f"pooled({self.n_members})"

    @property
    def converged(self) -> bool:
        return not self.warnings

    def __len__(self):
        return len(self.rho_draws)


# --- log density -----------------------------------------------------------

@numba.njit(cache=True)
def _log1m_tanh2(z):
    # log(1 - tanh(z)^2) = -2 log cosh z, stable for large |z|
    a = abs(z)
    return -2.0 * (a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0))


@numba.njit(cache=True)
def _lkj2_logpdf(log1mr2, eta):
    lbeta = 2.0 * math.lgamma(eta) - math.lgamma(2.0 * eta)
    return (eta - 1.0) * log1mr2 - lbeta - (2.0 * eta - 1.0) * math.log(2.0)


@numba.njit(cache=True)
def _log_target(theta, stats, use_lik):
    """Log posterior density of the unconstrained parameter vector (incl. Jacobian)."""
    mx, my, lsx, lsy, z, eta = theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]
    if not (0.0 < eta < ETA_MAX):
        return -np.inf
    rho = math.tanh(z)
    if not (-1.0 < rho < 1.0):
        return -np.inf
    log1mr2 = _log1m_tanh2(z)
    sx = math.exp(lsx)
    sy = math.exp(lsy)
    if sx <= 0.0 or sy <= 0.0 or not math.isfinite(sx) or not math.isfinite(sy):
        return -np.inf

    lp = 0.0
    if use_lik:
        n, s_x, s_y, s_xx, s_yy, s_xy = stats[0], stats[1], stats[2], stats[3], stats[4], stats[5]
        saa = s_xx - 2.0 * mx * s_x + n * mx * mx
        sbb = s_yy - 2.0 * my * s_y + n * my * my
        sab = s_xy - my * s_x - mx * s_y + n * mx * my
        q = (saa / (sx * sx) - 2.0 * rho * sab / (sx * sy) + sbb / (sy * sy)) / math.exp(log1mr2)
        lp += -n * (math.log(2.0 * math.pi) + lsx + lsy + 0.5 * log1mr2) - 0.5 * q

    # Normal(0, 10) means
    lp += -0.5 * (mx / 10.0) ** 2 - 0.5 * (my / 10.0) ** 2
    # HalfCauchy(2.5) standard deviations
    lp += -math.log1p((sx / 2.5) ** 2) - math.log1p((sy / 2.5) ** 2)
    lp += _lkj2_logpdf(log1mr2, eta)
    # Jacobians of sigma = exp(s) and rho = tanh(z)
    lp += lsx + lsy + log1mr2
    return lp


@numba.njit(cache=True)
def _run_chain(stats, init, scales, n_steps, n_burn, adapt, use_lik, seed):
    np.random.seed(seed)
    d = 6
    theta = init.copy()
    cur = _log_target(theta, stats, use_lik)
    scales = scales.copy()
    rho = np.empty(n_steps)
    prop = np.empty(d)
    accepted = 0
    batch_acc = 0
    factor = 1.0
    # running moments over the second quarter of burn-in for scale estimation
    w_lo = n_burn // 4
    w_hi = n_burn // 2
    w_n = 0
    w_mean = np.zeros(d)
    w_m2 = np.zeros(d)
    for i in range(n_steps):
        for k in range(d):
            prop[k] = theta[k] + factor * scales[k] * np.random.standard_normal()
        new = _log_target(prop, stats, use_lik)
        if math.log(np.random.random()) < new - cur:
            theta[:] = prop
            cur = new
            if i >= n_burn:
                accepted += 1
            batch_acc += 1
        rho[i] = math.tanh(theta[4])

        if adapt and i < n_burn:
            if w_lo <= i < w_hi:
                w_n += 1
                for k in range(d):
                    delta = theta[k] - w_mean[k]
                    w_mean[k] += delta / w_n
                    w_m2[k] += delta * (theta[k] - w_mean[k])
            if i == w_hi - 1 and w_n > 10:
                for k in range(d):
                    if scales[k] > 0.0:
                        sd = math.sqrt(w_m2[k] / (w_n - 1))
                        if sd > 0.0:
                            scales[k] = 2.38 / math.sqrt(d) * sd
                factor = 1.0
            if (i + 1) % 100 == 0:
                rate = batch_acc / 100.0
                if rate < 0.2:
                    factor *= 0.8
                elif rate > 0.4:
                    factor *= 1.25
                batch_acc = 0
    n_post = n_steps - n_burn
    acc_rate = accepted / n_post if n_post > 0 else np.nan
    return rho, acc_rate, scales * factor


def sufficient_stats(pairs) -> np.ndarray:
    """(n, sum x, sum y, sum x^2, sum y^2, sum xy) of AlignedPairs or an (x, y) tuple."""
    if isinstance(pairs, AlignedPairs):
        x, y = pairs.x, pairs.y
    else:
        x, y = (np.atleast_1d(np.asarray(a, dtype=float)) for a in pairs)
        if x.shape != y.shape or x.ndim != 1:
            raise ParameterError("x and y must be 1-D arrays of equal length")
    return np.array([len(x), x.sum(), y.sum(), x @ x, y @ y, x @ y], dtype=float)


def _as_theta(params: BnmParams) -> np.ndarray:
    return np.array([params.mu_x, params.mu_y, math.log(params.sigma_x),
                     math.log(params.sigma_y), math.atanh(params.rho), params.eta])


def log_posterior(params: BnmParams, pairs) -> float:
    """Log posterior density (up to a constant) of ``params`` given ``pairs``.

    ``pairs`` is an AlignedPairs or an ``(x, y)`` tuple of arrays.  Evaluated
    on the natural parameters, so without the sampler's Jacobian.
    ``pairs=None`` gives the log prior.  Out-of-domain parameters give -inf.
    """
    if not params.in_domain:
        return -math.inf
    theta = _as_theta(params)
    stats = sufficient_stats(pairs) if pairs is not None else np.zeros(6)
    z = theta[4]
    return float(_log_target(theta, stats, pairs is not None)
                 - theta[2] - theta[3] - _log1m_tanh2(z))


def log_likelihood(params: BnmParams, pairs) -> float:
    if not params.in_domain:
        return -math.inf
    return log_posterior(params, pairs) - log_posterior(params, None)


def _initial_state(pairs, fixed_eta):
    if pairs is None:
        return np.array([0.0, 0.0, 0.0, 0.0, 0.0, fixed_eta or 1.0])
    x, y = pairs.x, pairs.y
    sx = max(np.std(x), 1e-3)
    sy = max(np.std(y), 1e-3)
    r = np.corrcoef(x, y)[0, 1] if sx > 1e-3 and sy > 1e-3 else 0.0
    r = float(np.clip(np.nan_to_num(r), -0.9, 0.9))
    return np.array([x.mean(), y.mean(), math.log(sx), math.log(sy), math.atanh(r),
                     fixed_eta or 1.0])


def metropolis(pairs: AlignedPairs | None, cfg: InferenceConfig = InferenceConfig(),
               fixed_eta=None) -> PosteriorSample:
    """Sample the correlation posterior by random-walk Metropolis.

    ``pairs=None`` samples the prior.  ``fixed_eta`` pins the LKJ shape
    instead of sampling it.
    """
    if pairs is not None and pairs.effective_n < 3:
        raise ParameterError("need at least 3 pairs")
    scales = np.array(cfg.proposal_scales, dtype=float)
    if fixed_eta is not None:
        if not 0.0 < fixed_eta < ETA_MAX:
            raise ParameterError(f"eta must lie in (0, {ETA_MAX:g})")
        scales[5] = 0.0
    stats = sufficient_stats(pairs) if pairs is not None else np.zeros(6)
    init = _initial_state(pairs, fixed_eta)
    seed = int(np.random.SeedSequence(cfg.seed).generate_state(1)[0])
    chain, acc, _ = _run_chain(stats, init, scales, cfg.n_steps, cfg.n_burn,
                               cfg.adapt, pairs is not None, seed)
    n_burn = cfg.n_burn
    post = cfg.n_steps - n_burn
    idx = n_burn + (np.arange(1, cfg.n_keep + 1) * post) // cfg.n_keep - 1
    draws = chain[idx]

    warnings = []
    if not 0.01 <= acc <= 0.99:
        warnings.append(f"acceptance rate {acc:.3f} outside [0.01, 0.99]")
    half = len(draws) // 2
    gap = float(abs(draws[:half].mean() - draws[half:].mean())) if half else float("nan")
    log.debug("metropolis: acceptance %.3f, split-half rho gap %.4f", acc, gap)
    return PosteriorSample(draws, 1, float(acc), gap, tuple(warnings))


# --- posterior summaries -------------------------------------------------------

def silverman_bandwidth(draws) -> float:
    d = np.asarray(draws, dtype=float)
    sd = d.std(ddof=1) if len(d) > 1 else 0.0
    q75, q25 = np.percentile(d, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * len(d) ** -0.2


def kde(draws, grid, bandwidth=None) -> np.ndarray:
    """Gaussian kernel density of ``draws`` evaluated on ``grid``."""
    d = np.asarray(draws, dtype=float)
    h = silverman_bandwidth(d) if bandwidth is None else bandwidth
    grid = np.asarray(grid, dtype=float)
    dens = np.zeros(len(grid))
    for start in range(0, len(d), 2048):
        chunk = d[start:start + 2048]
        z = (grid[:, None] - chunk[None, :]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    return dens / (len(d) * h * math.sqrt(2 * math.pi))


def _draws(s):
    return s.rho_draws if isinstance(s, PosteriorSample) else np.asarray(s, dtype=float)


def posterior_mode(s, n_grid=512) -> float:
    """Location of the maximum of a Silverman-bandwidth KDE on a 512-point grid."""
    d = _draws(s)
    lo, hi = d.min(), d.max()
    if hi == lo:
        return float(lo)
    h = silverman_bandwidth(d)
    if not h > 0:
        # more than half the draws coincide: the repeated value is the mode
        vals, counts = np.unique(d, return_counts=True)
        return float(vals[np.argmax(counts)])
    grid = np.linspace(lo, hi, n_grid)
    return float(grid[np.argmax(kde(d, grid, h))])


def quantiles(s, q=(5, 95)):
    return np.percentile(_draws(s), q)


def idr(s) -> float:
    """Interdecile-style range Q95 - Q5 of the draws."""
    q5, q95 = quantiles(s, (5, 95))
    return float(q95 - q5)


POSITIVE, NEGATIVE, INDIFFERENT = "positive", "negative", "indifferent"


def fraction_positive(s) -> float:
    return float(np.mean(_draws(s) > 0))


def sign_decision(s, alpha=0.05) -> str:
    if not 0.0 < alpha < 0.5:
        raise ParameterError(f"alpha must lie in (0, 0.5), got {alpha}")
    d = _draws(s)
    if np.mean(d > 0) >= 1.0 - alpha:
        return POSITIVE
    if np.mean(d < 0) >= 1.0 - alpha:
        return NEGATIVE
    return INDIFFERENT


def pool_ensemble(samples) -> PosteriorSample:
    """Union of the members' draws."""
    samples = list(samples)
    if not samples:
        raise ParameterError("cannot pool an empty ensemble")
    if len(samples) == 1:
        return samples[0]
    draws = np.concatenate([s.rho_draws for s in samples])
    n = sum(s.n_members for s in samples)
    acc = float(np.mean([s.acceptance_rate for s in samples]))
    warnings = tuple(w for s in samples for w in s.warnings)
    return PosteriorSample(draws, n, acc, float("nan"), warnings)


@dataclass(frozen=True)
class Summary:
    mode: float
    idr: float
    q5: float
    q95: float
    sign: str
    frac_positive: float
    n_draws: int

    def as_dict(self):
        return {"mode": self.mode, "idr": self.idr, "q5": self.q5, "q95": self.q95,
                "sign": self.sign, "frac_positive": self.frac_positive,
                "n_draws": self.n_draws}


def summarize(s: PosteriorSample, alpha=0.05) -> Summary:
    q5, q95 = quantiles(s)
    return Summary(posterior_mode(s), float(q95 - q5), float(q5), float(q95),
                   sign_decision(s, alpha), fraction_positive(s), len(s))
