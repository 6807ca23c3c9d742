"""Maximum-likelihood fitting.

Without covariates the estimates come from one-dimensional root finding.
Non-inflated fits match the sample mean.  Inflated fits match the
zero-truncated mean to the mean of the positive counts, then choose ``omega``
so the fitted zero cell equals the observed zero share.  With covariates the
log-likelihood is maximized by BFGS on numerical gradients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import logit

from .families import PowerSeriesFamily
from .inflated import omega_lower_bound
from .regression import (
    CoefficientSet,
    DesignData,
    LikelihoodEvaluator,
    LinkOverflowError,
    theta_link_name,
)

__all__ = [
    "CountSummary",
    "MleResult",
    "mle_nocov",
    "mle_regression",
    "nocov_loglik",
    "grid_oracle",
    "complement_weight",
    "numerical_hessian",
    "wald_stars",
    "bfgs",
]


@dataclass(frozen=True)
class CountSummary:
    """Sufficient statistics of a count sample.

    ``histogram`` maps each positive value to its frequency and is only
    needed for the additive ``sum log b(y)`` term of the log-likelihood.
    """

    n: int
    n0: int
    total: float
    histogram: dict | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample must be non-empty")
        if not 0 <= self.n0 <= self.n:
            raise ValueError(f"zero count n0={self.n0} inconsistent with n={self.n}")
        if self.total < 0:
            raise ValueError("total must be non-negative")

    @classmethod
    def from_counts(cls, counts) -> "CountSummary":
        y = np.asarray(counts)
        if y.size == 0:
            raise ValueError("sample must be non-empty")
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("counts must be non-negative integers")
        y = y.astype(np.int64)
        vals, freq = np.unique(y[y > 0], return_counts=True)
        return cls(int(y.size), int(np.count_nonzero(y == 0)), float(y.sum()),
                   {int(v): int(f) for v, f in zip(vals, freq)})

    @classmethod
    def from_mean(cls, n: int, n0: int, mean: float) -> "CountSummary":
        return cls(int(n), int(n0), float(mean) * n)

    @property
    def mean(self) -> float:
        return self.total / self.n

    @property
    def zero_share(self) -> float:
        return self.n0 / self.n

    def log_b_total(self, family: PowerSeriesFamily) -> float:
        if self.histogram is None:
            return 0.0
        return float(sum(f * family.log_b(v) for v, f in self.histogram.items()))


def _as_summary(counts) -> CountSummary:
    return counts if isinstance(counts, CountSummary) else CountSummary.from_counts(counts)


@dataclass
class MleResult:
    """Point estimates with observed-information standard errors.

    ``estimates`` is a :class:`CoefficientSet` for regression fits and a
    ``(theta, omega)`` pair otherwise.  ``std_errors`` is ``None`` when the
    observed information could not be inverted.
    """

    estimates: object
    std_errors: np.ndarray | None
    loglik_at_max: float
    converged: bool
    iterations: int
    family: PowerSeriesFamily
    inflated: bool
    loglik_at_start: float = -math.inf
    covariance: np.ndarray | None = None
    names: list[str] = field(default_factory=list)
    singular_hessian: bool = False
    at_boundary: bool = False
    link: str = "log"
    n_obs: int = 0
    messages: list[str] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        if isinstance(self.estimates, CoefficientSet):
            return self.estimates.vector().size
        return 2 if self.inflated else 1

    @property
    def theta_hat(self) -> float:
        return self.estimates[0]

    @property
    def omega_hat(self) -> float:
        return self.estimates[1]

    def params(self) -> np.ndarray:
        if isinstance(self.estimates, CoefficientSet):
            return self.estimates.vector()
        return np.array(self.estimates[: self.n_params], dtype=float)


# -- no covariates -------------------------------------------------------------


def nocov_loglik(counts, family: PowerSeriesFamily, theta, omega=0.0):
    """Log-likelihood of an i.i.d. sample under ``ZIPS(omega, theta)``.

    Vectorized over ``theta`` and ``omega``; ``-inf`` where the zero cell
    would be non-positive.
    """
    s = _as_summary(counts)
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    log_f = np.asarray(family.log_f(theta))
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.exp(family.log_b(0) - log_f)
        zero_cell = omega + (1.0 - omega) * p0
        zero_part = np.where(s.n0 > 0, s.n0 * np.log(np.where(zero_cell > 0, zero_cell, 1.0)), 0.0)
        npos = s.n - s.n0
        pos_part = (npos * np.log1p(-omega) + s.total * np.log(theta) - npos * log_f
                    + s.log_b_total(family))
        out = zero_part + pos_part
        out = np.where((zero_cell <= 0) & (s.n0 > 0), -np.inf, out)
        out = np.where(omega >= 1.0, -np.inf, out)
    return out if np.ndim(out) else float(out)


def _root_in_domain(g, family: PowerSeriesFamily, what: str) -> float:
    """Root of an increasing function ``g`` on the family's theta-domain."""
    lo, hi = family.theta_domain
    a = 1e-300 if lo == 0 else lo
    if hi == math.inf:
        b = 1.0
        while g(b) < 0:
            b *= 4.0
            if b > 1e12:
                raise ValueError(f"{what}: root not bracketed in theta-domain (0, {b:g})")
    else:
        b = math.nextafter(hi, lo)
    ga, gb = g(a), g(b)
    if not (ga < 0 < gb):
        raise ValueError(f"{what}: root not bracketed in theta-domain [{a:g}, {b:g}] "
                         f"(g={ga:.6g}, {gb:.6g})")
    return optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def complement_weight(counts, family: PowerSeriesFamily, theta: float) -> float:
    """``(n - n0) f(theta) / (n [f(theta) - b(0)])``.

    This expression equals ``1 - omega_hat`` at the inflated MLE; it is
    sometimes printed as a formula for ``omega_hat`` itself.
    """
    s = _as_summary(counts)
    f = family.derivatives(theta)[0]
    return (s.n - s.n0) * f / (s.n * (f - family.b0))


def mle_nocov(counts, family: PowerSeriesFamily, inflated: bool) -> MleResult:
    """MLE of ``theta`` (and ``omega`` when ``inflated``) without covariates.

    ``counts`` may be raw counts or a :class:`CountSummary`.
    """
    s = _as_summary(counts)
    if s.total == 0:
        raise ValueError("degenerate sample: all counts are zero")
    if not inflated:
        xbar = s.mean
        theta = _root_in_domain(lambda t: family.ratios(t)[0] * t - xbar, family,
                                "mean equation")
        omega = 0.0
    else:
        if s.n0 == s.n:
            raise ValueError("degenerate sample: all counts are zero")
        target = s.total / (s.n - s.n0)
        theta = _root_in_domain(lambda t: family.truncated_mean(t) - target, family,
                                "truncated-mean equation")
        p0 = family.zero_probability(theta)
        omega = 1.0 - (1.0 - s.zero_share) / (1.0 - p0)
    ll = float(nocov_loglik(s, family, theta, omega))

    names = ["theta", "omega"] if inflated else ["theta"]
    x = np.array([theta, omega]) if inflated else np.array([theta])
    at_boundary = inflated and s.n0 == 0
    se = cov = None
    singular = False
    if not at_boundary:
        fun = (lambda v: nocov_loglik(s, family, v[0], v[1])) if inflated else \
              (lambda v: nocov_loglik(s, family, v[0], 0.0))
        try:
            h = numerical_hessian(fun, x, rel_step=1e-4, floor=1e-4 * max(theta, 1e-8))
            cov = np.linalg.inv(-h)
            if np.all(np.diag(cov) > 0):
                se = np.sqrt(np.diag(cov))
            else:
                singular = True
        except (np.linalg.LinAlgError, ValueError):
            singular = True
    res = MleResult(
        estimates=(theta, omega), std_errors=se, loglik_at_max=ll, converged=True,
        iterations=0, family=family, inflated=inflated, loglik_at_start=ll,
        covariance=cov, names=names, singular_hessian=singular, at_boundary=at_boundary,
        link="identity", n_obs=s.n,
    )
    if at_boundary:
        res.messages.append("no zeros in sample: omega at its lower bound "
                            f"{omega_lower_bound(family, theta)!r}")
    return res


def grid_oracle(counts, family: PowerSeriesFamily, inflated: bool = True,
                size: int = 2000) -> tuple[float, float]:
    """Brute-force maximizer of the no-covariate log-likelihood.

    Searches a ``size`` x ``size`` grid of theta and of the position of omega
    inside ``(lower_bound(theta), 1)``, then repeats once on a refined grid
    around the best cell.  Slow and only meant as a test oracle.
    """
    s = _as_summary(counts)
    lo, hi = family.theta_domain
    if hi == math.inf:
        hi = max(4.0 * s.total / max(s.n - s.n0, 1), 1.0)
    eps = 1e-9 * (hi - lo)
    t_lo, t_hi = lo + eps, hi - eps
    u_lo, u_hi = 0.0, 1.0

    def evaluate(tg, ug):
        if not inflated:
            return nocov_loglik(s, family, tg, 0.0), None
        lb = np.array([omega_lower_bound(family, t) for t in tg])
        w = lb[:, None] + ug[None, :] * (1.0 - lb[:, None])
        return nocov_loglik(s, family, tg[:, None], w), lb

    best_t = best_u = None
    for _ in range(2):
        tg = np.linspace(t_lo, t_hi, size)
        ug = np.linspace(u_lo, u_hi, size)[1:-1] if inflated else np.zeros(1)
        vals, lb = evaluate(tg, ug)
        if inflated:
            i, j = np.unravel_index(np.nanargmax(vals), vals.shape)
            best_t, best_u = tg[i], ug[j]
            du = ug[1] - ug[0]
            u_lo, u_hi = max(best_u - 3 * du, 0.0), min(best_u + 3 * du, 1.0)
        else:
            i = int(np.nanargmax(vals))
            best_t = tg[i]
        dt = tg[1] - tg[0]
        t_lo, t_hi = max(best_t - 3 * dt, lo + eps), min(best_t + 3 * dt, hi - eps)
    if not inflated:
        return float(best_t), 0.0
    lb = omega_lower_bound(family, best_t)
    return float(best_t), float(lb + best_u * (1.0 - lb))


# -- numerical derivatives -----------------------------------------------------


def numerical_gradient(fun, x, rel_step=1e-6):
    """Central differences with step ``rel_step * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(x))
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h[j])
    return g


def numerical_hessian(fun, x, rel_step=1e-4, floor=None):
    """Central second differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    k = x.size
    if floor is None:
        h = rel_step * np.maximum(1.0, np.abs(x))
    else:
        h = np.maximum(rel_step * np.abs(x), floor)
    f0 = fun(x)
    hess = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        fp, fm = fun(x + ei), fun(x - ei)
        hess[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            v = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej))
            hess[i, j] = hess[j, i] = v / (4.0 * h[i] * h[j])
    if not np.all(np.isfinite(hess)):
        raise ValueError("non-finite Hessian")
    return hess


# -- quasi-Newton --------------------------------------------------------------


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str


def bfgs(fun, x0, gtol=1e-6, xtol=1e-9, maxiter=500, rel_step=1e-6) -> BfgsResult:
    """Minimize ``fun`` by BFGS with central-difference gradients.

    Iterates until a step shorter than ``xtol`` (or a failed line search, or
    the iteration cap).  Converged iff the gradient's max-norm is then below
    ``gtol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    k = x.size
    grad = lambda v: numerical_gradient(fun, v, rel_step)  # noqa: E731
    f = fun(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the start point")
    g = grad(x)
    H = np.eye(k) / max(1.0, np.max(np.abs(g)))
    message = "iteration cap reached"
    it = 0
    for it in range(1, maxiter + 1):
        d = -H @ g
        if g @ d >= 0:
            H = np.eye(k) / max(1.0, np.max(np.abs(g)))
            d = -H @ g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ls = optimize.line_search(fun, grad, x, d, gfk=g, old_fval=f, c2=0.9, maxiter=30)
        alpha = ls[0]
        if alpha is None:
            # backtracking fallback
            alpha = 1.0
            while alpha > 1e-12:
                if fun(x + alpha * d) < f + 1e-4 * alpha * (g @ d):
                    break
                alpha *= 0.5
            else:
                message = "line search failed"
                break
        step = alpha * d
        x_new = x + step
        f_new = fun(x_new)
        g_new = grad(x_new)
        s_vec, y_vec = step, g_new - g
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(step)) < xtol:
            message = "step below tolerance"
            break
        sy = s_vec @ y_vec
        if sy > 1e-300:
            rho = 1.0 / sy
            if it == 1:
                H = np.eye(k) * (sy / (y_vec @ y_vec))
            I = np.eye(k)
            H = (I - rho * np.outer(s_vec, y_vec)) @ H @ (I - rho * np.outer(y_vec, s_vec)) \
                + rho * np.outer(s_vec, s_vec)
        if np.max(np.abs(g)) < gtol * 1e-3:
            message = "gradient vanished"
            break
    return BfgsResult(x, f, g, it, bool(np.max(np.abs(g)) < gtol), message)


# -- regression ----------------------------------------------------------------


def _regression_fit(ev: LikelihoodEvaluator, x0, p: int, inflated: bool, maxiter: int):
    n = ev.data.n

    def objective(v):
        c_beta = v[:p]
        try:
            if inflated:
                val = ev.combine(ev.count_terms(c_beta), ev.zero_terms(v[p:]))
            else:
                val = ev.combine(ev.count_terms(c_beta))
        except LinkOverflowError:
            return np.inf
        return -val / n if np.isfinite(val) else np.inf

    start = -objective(np.asarray(x0, dtype=float)) * n
    res = bfgs(objective, x0, maxiter=maxiter)
    return res, start


def _observed_information(ev: LikelihoodEvaluator, x, p, inflated):
    def total(v):
        if inflated:
            return ev.combine(ev.count_terms(v[:p]), ev.zero_terms(v[p:]))
        return ev.combine(ev.count_terms(v[:p]))

    h = numerical_hessian(total, x, rel_step=1e-4)
    return -h


def mle_regression(data: DesignData, family: PowerSeriesFamily, inflated: bool,
                   maxiter: int = 500) -> MleResult:
    """Maximize the regression log-likelihood.

    The non-inflated model is fitted first; its coefficients and
    ``gamma = (logit(max(n0/n - mean fitted P0, 0.01)), 0, ...)`` start the
    inflated fit.
    """
    if inflated and data.z_matrix is None:
        raise ValueError("inflated fit needs a z_matrix")
    ev = LikelihoodEvaluator(data, family)
    p = data.x_matrix.shape[1]
    link = theta_link_name(family)

    ybar = float(np.mean(data.y))
    if ybar <= 0:
        raise ValueError("degenerate sample: all counts are zero")
    beta0 = np.zeros(p)
    beta0[0] = _intercept_for_mean(family, ybar)
    base, start_ll = _regression_fit(ev, beta0, p, False, maxiter)
    messages = []
    if not inflated:
        res, x_final, start = base, base.x, start_ll
    else:
        _, log_f = ev._log_theta_f(data.x_matrix @ base.x)
        p0_bar = float(np.mean(np.exp(ev.log_b0 - log_f)))
        gamma0 = np.zeros(data.z_matrix.shape[1])
        gamma0[0] = logit(max(data.n0 / data.n - p0_bar, 0.01))
        x0 = np.concatenate([base.x, gamma0])
        res, start = _regression_fit(ev, x0, p, True, maxiter)
        x_final = res.x
    ll = -res.fun * data.n
    names = [f"beta:{c}" for c in data.x_names]
    if inflated:
        names += [f"gamma:{c}" for c in data.z_names]
    se = cov = None
    singular = False
    try:
        info = _observed_information(ev, x_final, p, inflated)
        cov = np.linalg.inv(info)
        if np.all(np.diag(cov) > 0) and np.all(np.isfinite(cov)):
            se = np.sqrt(np.diag(cov))
        else:
            singular = True
            cov = None
    except (np.linalg.LinAlgError, ValueError):
        singular = True
    if singular:
        messages.append("observed information is singular; standard errors unavailable")
        warnings.warn(messages[-1], stacklevel=2)
    if not res.converged:
        messages.append(f"optimizer did not converge: {res.message}")
    return MleResult(
        estimates=CoefficientSet.from_vector(x_final, p), std_errors=se,
        loglik_at_max=float(ll), converged=res.converged, iterations=res.iterations,
        family=family, inflated=inflated, loglik_at_start=float(start), covariance=cov,
        names=names, singular_hessian=singular, link=link, n_obs=data.n, messages=messages,
    )


def _intercept_for_mean(family: PowerSeriesFamily, mean: float) -> float:
    """Intercept whose power parameter gives the requested mean (no covariates)."""
    theta = _root_in_domain(lambda t: family.ratios(t)[0] * t - mean, family, "mean equation")
    if family.bounded:
        return float(logit(theta))
    return float(math.log(theta))


def wald_stars(estimate, std_error) -> str:
    """Two-sided Wald test: ``***`` at 1%, ``**`` at 5%, ``*`` at 10%."""
    if std_error is None or not np.isfinite(std_error) or std_error <= 0:
        return ""
    pval = 2.0 * stats.norm.sf(abs(estimate) / std_error)
    if pval < 0.01:
        return "***"
    if pval < 0.05:
        return "**"
    if pval < 0.10:
        return "*"
    return ""
