"""Bayesian zero-inflated power series regression.

Priors follow the usual conjugate choices when a parameter is constant
across observations (intercept-only design): ``omega ~ Beta(b1, b2)`` and
``pi(theta) ~ theta**a1 / f(theta)**a2``.  Once covariates enter, every
coefficient gets an independent uniform prior on a wide box.

Sampling is blockwise random-walk Metropolis within Gibbs (one block for
``beta``, one for ``gamma``) with proposal scales tuned during burn-in and
frozen afterwards.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .diagnostics import PosteriorSummary, summarize_draws
from .families import PowerSeriesFamily
from .mle import mle_regression
from .regression import (
    CoefficientSet,
    DesignData,
    LikelihoodEvaluator,
    LinkOverflowError,
    theta_link_name,
)

__all__ = [
    "PriorSpec",
    "McmcConfig",
    "ChainSet",
    "log_prior",
    "log_posterior",
    "run_mcmc",
    "diagnostics",
    "dic",
    "write_chains_csv",
]


@dataclass(frozen=True)
class PriorSpec:
    omega_prior: tuple[float, float] = (1.0, 1.0)
    theta_prior: tuple[float, float] = (0.0, 0.0)
    beta_bounds: tuple[float, float] = (-1e5, 1e5)
    gamma_bounds: tuple[float, float] = (-1e5, 1e5)

    def __post_init__(self):
        b1, b2 = self.omega_prior
        a1, a2 = self.theta_prior
        if not (b1 > 0 and b2 > 0):
            raise ValueError("Beta prior parameters must be positive")
        if not (a1 >= 0 and a2 >= 0):
            raise ValueError("conjugate prior exponents must be non-negative")
        for lo, hi in (self.beta_bounds, self.gamma_bounds):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("coefficient bounds must be finite with lower < upper")


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings; ``iterations`` counts burn-in too."""

    chains: int = 3
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    target_accept: float = 0.30

    def __post_init__(self):
        if self.chains < 1 or self.thin < 1 or self.adapt_window < 1:
            raise ValueError("chains, thin and adapt_window must be positive")
        if self.burn_in < 0 or self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn_in")
        if self.kept < 1:
            raise ValueError("no draws left after burn-in and thinning")

    @property
    def kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainSet:
    draws: np.ndarray  # (chains, kept, dim)
    loglik_draws: np.ndarray  # (chains, kept)
    acceptance_rates: np.ndarray  # (chains, blocks, windows)
    parameter_names: list[str]
    p: int
    config: McmcConfig
    prior: PriorSpec
    family: PowerSeriesFamily
    warm_start_ok: bool = True
    messages: list[str] = field(default_factory=list)
    evaluator: LikelihoodEvaluator | None = field(default=None, repr=False)
    mle: object = field(default=None, repr=False)

    @property
    def inflated(self) -> bool:
        return self.draws.shape[2] > self.p

    def coefficients(self, vector) -> CoefficientSet:
        return CoefficientSet.from_vector(vector, self.p)

    def post_burn_acceptance(self) -> np.ndarray:
        """Mean acceptance per (chain, block) after burn-in."""
        w = self.config.adapt_window
        first = self.config.burn_in // w
        rates = self.acceptance_rates[:, :, first:]
        if rates.shape[2] == 0:
            rates = self.acceptance_rates
        return rates.mean(axis=2)


def _constant_design(m) -> bool:
    return m is not None and m.shape[1] == 1


def _block_priors(data: DesignData, family: PowerSeriesFamily, prior: PriorSpec,
                  inflated: bool, jacobian: bool):
    """Per-block log-prior functions on the coefficient scale.

    With ``jacobian`` the constant-parameter priors are converted to densities
    over the intercept (the scale the sampler moves on).
    """
    link = theta_link_name(family)
    p = data.x_matrix.shape[1]
    q = data.z_matrix.shape[1] if inflated else 0
    blo, bhi = prior.beta_bounds
    glo, ghi = prior.gamma_bounds
    beta_const = -p * math.log(bhi - blo)
    gamma_const = -q * math.log(ghi - glo)
    a1, a2 = prior.theta_prior
    b1, b2 = prior.omega_prior
    theta_conj = _constant_design(data.x_matrix)
    omega_beta = inflated and _constant_design(data.z_matrix)

    def beta_prior(beta):
        if np.any(beta <= blo) or np.any(beta >= bhi):
            return -math.inf
        out = beta_const
        if theta_conj:
            b0 = float(beta[0])
            if link == "logit":
                log_t = -math.log1p(math.exp(-b0)) if b0 > -700 else b0
                log_1mt = -math.log1p(math.exp(b0)) if b0 < 700 else -b0
                theta = math.exp(log_t)
                if not 0.0 < theta < 1.0:
                    return -math.inf
                log_f = float(family.log_f(theta))
                out += a1 * log_t - a2 * log_f
                if jacobian:
                    out += log_t + log_1mt
            else:
                if abs(b0) > 700:
                    return -math.inf
                theta = math.exp(b0)
                out += a1 * b0 - a2 * float(family.log_f(theta))
                if jacobian:
                    out += b0
        return out

    def gamma_prior(gamma):
        if q == 0:
            return 0.0
        if np.any(gamma <= glo) or np.any(gamma >= ghi):
            return -math.inf
        out = gamma_const
        if omega_beta:
            g0 = float(gamma[0])
            log_w = -math.log1p(math.exp(-g0)) if g0 > -700 else g0
            log_1mw = -math.log1p(math.exp(g0)) if g0 < 700 else -g0
            out += (b1 - 1.0) * log_w + (b2 - 1.0) * log_1mw - _log_beta_fn(b1, b2)
            if jacobian:
                out += log_w + log_1mw
        return out

    return beta_prior, gamma_prior


def _log_beta_fn(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def log_prior(data: DesignData, family: PowerSeriesFamily, coeffs: CoefficientSet,
              prior: PriorSpec) -> float:
    """Log prior density of the model parameters.

    Constant-parameter priors are densities over ``theta`` and ``omega``;
    uniform box priors are densities over the coefficients.
    """
    inflated = coeffs.gamma.size > 0
    bp, gp = _block_priors(data, family, prior, inflated, jacobian=False)
    return bp(coeffs.beta) + gp(coeffs.gamma)


def log_posterior(data: DesignData, family: PowerSeriesFamily, coeffs: CoefficientSet,
                  prior: PriorSpec) -> float:
    """Unnormalized log posterior; ``-inf`` outside the prior support."""
    lp = log_prior(data, family, coeffs, prior)
    if not np.isfinite(lp):
        return -math.inf
    ev = LikelihoodEvaluator(data, family)
    try:
        return ev(coeffs) + lp
    except LinkOverflowError:
        return -math.inf


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain,))))


def _safe_chol(cov, d, fallback):
    if cov is not None:
        try:
            cov = 0.5 * (cov + cov.T)
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            pass
    return np.eye(d) * fallback


def _conditional_cov(cov, a, b):
    cab = cov[a, b]
    return cov[a, a] - cab @ np.linalg.solve(cov[b, b], cab.T)


def _run_chain(ev, p, inflated, beta_prior, gamma_prior, x0, chols, config, rng):
    q = x0.size - p
    blocks = [(0, p)] + ([(p, p + q)] if inflated else [])
    x = x0.copy()
    count = ev.count_terms(x[:p])
    zero = ev.zero_terms(x[p:]) if inflated else None
    ll = ev.combine(count, zero)
    lps = [beta_prior(x[:p]), gamma_prior(x[p:])]
    if not np.isfinite(ll + sum(lps)):
        raise ValueError("chain start has zero posterior density")
    log_scale = [math.log(2.38 / math.sqrt(hi - lo)) for lo, hi in blocks]
    w = config.adapt_window
    n_windows = -(-config.iterations // w)
    rates = np.zeros((len(blocks), n_windows))
    accepted = np.zeros(len(blocks))
    kept = config.kept
    draws = np.empty((kept, x.size))
    lls = np.empty(kept)
    k = 0
    for it in range(config.iterations):
        for b, (lo, hi) in enumerate(blocks):
            prop_block = x[lo:hi] + math.exp(log_scale[b]) * (chols[b] @ rng.standard_normal(hi - lo))
            if b == 0:
                lp_new = beta_prior(prop_block)
                if np.isfinite(lp_new):
                    try:
                        count_new = ev.count_terms(prop_block)
                        ll_new = ev.combine(count_new, zero)
                    except LinkOverflowError:
                        ll_new = -math.inf
                else:
                    ll_new = -math.inf
            else:
                lp_new = gamma_prior(prop_block)
                if np.isfinite(lp_new):
                    zero_new = ev.zero_terms(prop_block)
                    ll_new = ev.combine(count, zero_new)
                else:
                    ll_new = -math.inf
            log_ratio = ll_new + lp_new - ll - lps[b]
            if np.isfinite(ll_new) and math.log(rng.random()) < log_ratio:
                x[lo:hi] = prop_block
                ll = ll_new
                lps[b] = lp_new
                if b == 0:
                    count = count_new
                else:
                    zero = zero_new
                accepted[b] += 1
        if (it + 1) % w == 0 or it + 1 == config.iterations:
            win = it // w
            span = (it % w) + 1
            rates[:, win] = accepted / span
            if it < config.burn_in:
                # Robbins-Monro step on the log proposal scale
                step = 2.0 / math.sqrt(win + 1)
                for b in range(len(blocks)):
                    log_scale[b] += step * (rates[b, win] - config.target_accept)
            accepted[:] = 0
        if it >= config.burn_in and (it - config.burn_in) % config.thin == config.thin - 1:
            if k < kept:
                draws[k] = x
                lls[k] = ll
                k += 1
    return draws, lls, rates


def run_mcmc(data: DesignData, family: PowerSeriesFamily, prior: PriorSpec | None = None,
             config: McmcConfig | None = None, inflated: bool | None = None) -> ChainSet:
    """Run ``config.chains`` independent chains started near the MLE.

    Each chain draws from its own counter-based stream keyed by
    ``(seed, chain index)``, so output is reproducible and independent of
    execution order.
    """
    prior = prior or PriorSpec()
    config = config or McmcConfig()
    if inflated is None:
        inflated = data.z_matrix is not None
    if inflated and data.z_matrix is None:
        raise ValueError("inflated model needs a z_matrix")
    p = data.x_matrix.shape[1]
    q = data.z_matrix.shape[1] if inflated else 0
    ev = LikelihoodEvaluator(data, family)
    messages = []
    warm_ok = True
    mle = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mle = mle_regression(data, family, inflated)
        if not mle.converged:
            raise RuntimeError("; ".join(mle.messages))
        center = mle.estimates.vector()
        cov = mle.covariance
    except (RuntimeError, ValueError) as exc:
        warm_ok = False
        messages.append(f"MLE warm start unavailable ({exc}); starting at zeros")
        center = np.zeros(p + q)
        cov = None
    fallback = 0.1 if warm_ok else 1.0
    if cov is None:
        chols = [np.eye(p) * fallback] + ([np.eye(q) * fallback] if inflated else [])
        full_chol = np.eye(p + q) * fallback
    elif inflated:
        # each block moves conditionally on the other, so shape its proposal
        # by the conditional covariance
        chols = [_safe_chol(_conditional_cov(cov, slice(0, p), slice(p, p + q)), p, fallback),
                 _safe_chol(_conditional_cov(cov, slice(p, p + q), slice(0, p)), q, fallback)]
        full_chol = _safe_chol(cov, p + q, fallback)
    else:
        chols = [_safe_chol(cov, p, fallback)]
        full_chol = chols[0]
    beta_prior, gamma_prior = _block_priors(data, family, prior, inflated, jacobian=True)
    if warm_ok:
        lp0 = beta_prior(center[:p]) + gamma_prior(center[p:])
        if not np.isfinite(lp0):
            messages.append("MLE warm start lies outside the prior support")

    all_draws, all_ll, all_rates = [], [], []
    for c in range(config.chains):
        rng = _chain_rng(config.seed, c)
        for _ in range(100):
            x0 = center + full_chol @ rng.standard_normal(p + q)
            ok = np.isfinite(beta_prior(x0[:p]) + gamma_prior(x0[p:]))
            if ok:
                try:
                    ok = np.isfinite(ev(CoefficientSet.from_vector(x0, p)) if inflated
                                     else ev.combine(ev.count_terms(x0[:p])))
                except LinkOverflowError:
                    ok = False
            if ok:
                break
        else:
            x0 = center.copy()
        d, lls, rates = _run_chain(ev, p, inflated, beta_prior, gamma_prior, x0, chols,
                                   config, rng)
        all_draws.append(d)
        all_ll.append(lls)
        all_rates.append(rates)

    names = [f"beta:{c}" for c in data.x_names]
    if inflated:
        names += [f"gamma:{c}" for c in data.z_names]
    return ChainSet(
        draws=np.stack(all_draws), loglik_draws=np.stack(all_ll),
        acceptance_rates=np.stack(all_rates), parameter_names=names, p=p, config=config,
        prior=prior, family=family, warm_start_ok=warm_ok, messages=messages, evaluator=ev,
        mle=mle,
    )


def diagnostics(chains: ChainSet) -> PosteriorSummary:
    """Posterior means, sds, equal-tailed intervals, R-hat, ESS and stars."""
    return summarize_draws(chains.draws, chains.parameter_names)


def dic(chains: ChainSet) -> tuple[float, float]:
    """Deviance information criterion and effective parameter count.

    ``D(theta_bar)`` is evaluated at the posterior mean of the coefficients.
    A non-finite plug-in deviance is reported with a warning.
    """
    dev = -2.0 * chains.loglik_draws
    d_bar = float(dev.mean())
    mean_coef = chains.draws.reshape(-1, chains.draws.shape[2]).mean(axis=0)
    coeffs = chains.coefficients(mean_coef)
    try:
        d_hat = -2.0 * chains.evaluator(coeffs)
    except LinkOverflowError:
        d_hat = math.inf
    if not np.isfinite(d_hat):
        warnings.warn("posterior mean lies outside the admissible region; DIC is not valid",
                      stacklevel=2)
    p_d = d_bar - d_hat
    return d_bar + p_d, p_d


def write_chains_csv(chains: ChainSet, path) -> None:
    """One row per kept draw: chain, iteration, parameters, loglik."""
    cfg = chains.config
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iteration", *chains.parameter_names, "loglik"])
        for c in range(chains.draws.shape[0]):
            for k in range(chains.draws.shape[1]):
                it = cfg.burn_in + (k + 1) * cfg.thin
                w.writerow([c, it, *map(repr, map(float, chains.draws[c, k])),
                            repr(float(chains.loglik_draws[c, k]))])


def config_dict(config: McmcConfig) -> dict:
    return asdict(config)

