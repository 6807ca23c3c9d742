"""Power series distributions.

A power series distribution has mass ``b(x) theta**x / f(theta)`` where
``f(theta) = sum_x b(x) theta**x``.  Each family instance supplies ``b`` on
the log scale and closed forms for ``f`` and its first three derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

__all__ = [
    "DomainError",
    "PowerSeriesFamily",
    "SeriesTriple",
    "poisson",
    "geometric",
    "negative_binomial",
    "binomial",
    "logarithmic",
    "family_from_name",
    "evaluate_series",
    "pmf",
    "log_pmf",
    "moments",
    "dispersion_index",
    "sample",
    "support_grid",
    "inverse_cdf_walk",
]

FAMILY_NAMES = ("poisson", "geometric", "negbin", "binomial", "logarithmic")

# Tail truncation for infinite supports.
TAIL_MASS = 1e-13
SUPPORT_CAP = 10**6


class DomainError(ValueError):
    """Raised when a parameter lies outside the family's admissible range."""


class SeriesTriple(NamedTuple):
    f: float
    f_prime: float
    f_second: float


@dataclass(frozen=True)
class PowerSeriesFamily:
    """A power series family, optionally carrying a fixed nuisance parameter.

    ``nuisance`` is ``r`` for the negative binomial and ``n`` for the
    binomial; other families take none.  The binomial uses the odds
    parameterization ``theta = p / (1 - p)`` so that ``f = (1 + theta)**n``.
    """

    name: str
    nuisance: float | int | None = None

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise ValueError(f"unknown family {self.name!r}; expected one of {FAMILY_NAMES}")
        if self.name == "negbin":
            if self.nuisance is None or not self.nuisance > 0:
                raise ValueError("negative binomial needs a positive size r")
        elif self.name == "binomial":
            if self.nuisance is None or int(self.nuisance) != self.nuisance or self.nuisance < 1:
                raise ValueError("binomial needs a positive integer number of trials n")
            object.__setattr__(self, "nuisance", int(self.nuisance))
        elif self.nuisance is not None:
            raise ValueError(f"{self.name} takes no nuisance parameter")

    @property
    def label(self) -> str:
        if self.name == "negbin":
            return f"negbin(r={self.nuisance:g})"
        if self.name == "binomial":
            return f"binomial(n={self.nuisance})"
        return self.name

    @property
    def theta_domain(self) -> tuple[float, float]:
        if self.name in ("poisson", "binomial"):
            return (0.0, math.inf)
        return (0.0, 1.0)

    @property
    def bounded(self) -> bool:
        return self.theta_domain[1] < math.inf

    @property
    def support_min(self) -> int:
        return 1 if self.name == "logarithmic" else 0

    @property
    def support_max(self) -> float:
        return self.nuisance if self.name == "binomial" else math.inf

    def check_theta(self, theta) -> None:
        lo, hi = self.theta_domain
        t = np.asarray(theta, dtype=float)
        if not np.all((t > lo) & (t < hi)):
            bad = t[~((t > lo) & (t < hi))].ravel()[0] if t.ndim else float(t)
            raise DomainError(
                f"theta={bad!r} outside the {self.label} domain ({lo:g}, {hi:g})"
            )

    # -- coefficients -----------------------------------------------------

    def log_b(self, x):
        """log b(x); ``-inf`` outside the support."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.name == "poisson":
                out = -gammaln(x + 1.0)
            elif self.name == "geometric":
                out = np.zeros_like(x)
            elif self.name == "negbin":
                r = float(self.nuisance)
                out = gammaln(x + r) - gammaln(r) - gammaln(x + 1.0)
            elif self.name == "binomial":
                n = float(self.nuisance)
                out = gammaln(n + 1.0) - gammaln(x + 1.0) - gammaln(np.maximum(n - x, 0.0) + 1.0)
                out = np.where(x > n, -np.inf, out)
            else:
                out = -np.log(np.where(x >= 1, x, 1.0))
                out = np.where(x >= 1, out, -np.inf)
        out = np.where((x < 0) | (x != np.floor(x)), -np.inf, out)
        return out if out.ndim else float(out)

    @property
    def b0(self) -> float:
        return 0.0 if self.name == "logarithmic" else 1.0

    # -- series -----------------------------------------------------------

    def log_f(self, theta):
        t = np.asarray(theta, dtype=float)
        if self.name == "poisson":
            out = t.copy()
        elif self.name == "geometric":
            out = -np.log1p(-t)
        elif self.name == "negbin":
            out = -self.nuisance * np.log1p(-t)
        elif self.name == "binomial":
            out = self.nuisance * np.log1p(t)
        else:
            out = np.log(-np.log1p(-t))
        return out if out.ndim else float(out)

    def derivatives(self, theta) -> tuple:
        """Return ``(f, f', f'', f''')`` at ``theta``."""
        t = np.asarray(theta, dtype=float)
        if self.name == "poisson":
            e = np.exp(t)
            out = (e, e, e, e)
        elif self.name == "geometric":
            u = 1.0 - t
            out = (1.0 / u, u**-2, 2.0 * u**-3, 6.0 * u**-4)
        elif self.name == "negbin":
            r = float(self.nuisance)
            u = 1.0 - t
            out = (u**-r, r * u ** (-r - 1), r * (r + 1) * u ** (-r - 2),
                   r * (r + 1) * (r + 2) * u ** (-r - 3))
        elif self.name == "binomial":
            n = self.nuisance
            v = 1.0 + t
            out = (v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2),
                   n * (n - 1) * (n - 2) * v ** (n - 3))
        else:
            u = 1.0 - t
            out = (-np.log1p(-t), 1.0 / u, u**-2, 2.0 * u**-3)
        return tuple(o if np.ndim(o) else float(o) for o in out)

    def ratios(self, theta) -> tuple:
        """Return ``(f'/f, f''/f', f''/f, f'''/f)`` without forming large values.

        Kept separate from :meth:`derivatives` so that Poisson ratios are
        exactly one and the dispersion index comes out exactly one.
        """
        t = np.asarray(theta, dtype=float)
        if self.name == "poisson":
            one = np.ones_like(t)
            out = (one, one, one, one)
        elif self.name == "geometric":
            u = 1.0 - t
            out = (1.0 / u, 2.0 / u, 2.0 / u**2, 6.0 / u**3)
        elif self.name == "negbin":
            r = float(self.nuisance)
            u = 1.0 - t
            out = (r / u, (r + 1) / u, r * (r + 1) / u**2, r * (r + 1) * (r + 2) / u**3)
        elif self.name == "binomial":
            n = self.nuisance
            v = 1.0 + t
            out = (n / v, (n - 1) / v, n * (n - 1) / v**2, n * (n - 1) * (n - 2) / v**3)
        else:
            u = 1.0 - t
            f = -np.log1p(-t)
            out = (1.0 / (u * f), 1.0 / u, 1.0 / (u**2 * f), 2.0 / (u**3 * f))
        return tuple(o if np.ndim(o) else float(o) for o in out)

    def zero_probability(self, theta):
        """Parent ``P(X = 0) = b(0) / f(theta)``."""
        if self.name == "logarithmic":
            return 0.0 * np.asarray(theta, dtype=float) if np.ndim(theta) else 0.0
        p = np.exp(-np.asarray(self.log_f(theta)))
        return p if np.ndim(p) else float(p)

    def truncated_mean(self, theta):
        """Mean of the zero-truncated distribution, ``theta f' / (f - b(0))``."""
        t = np.asarray(theta, dtype=float)
        if self.name == "poisson":
            out = t / -np.expm1(-t)
        elif self.name == "geometric":
            out = 1.0 / (1.0 - t)
        elif self.name == "negbin":
            r = float(self.nuisance)
            # f - 1 = expm1(-r log1p(-t)); f' = r (1-t)^(-r-1)
            out = t * r * (1.0 - t) ** (-r - 1) / np.expm1(-r * np.log1p(-t))
        elif self.name == "binomial":
            n = self.nuisance
            out = t * n * (1.0 + t) ** (n - 1) / np.expm1(n * np.log1p(t))
        else:
            out = t / ((1.0 - t) * -np.log1p(-t))
        return out if out.ndim else float(out)


def poisson() -> PowerSeriesFamily:
    return PowerSeriesFamily("poisson")


def geometric() -> PowerSeriesFamily:
    return PowerSeriesFamily("geometric")


def negative_binomial(r: float) -> PowerSeriesFamily:
    return PowerSeriesFamily("negbin", r)


def binomial(n: int) -> PowerSeriesFamily:
    return PowerSeriesFamily("binomial", n)


def logarithmic() -> PowerSeriesFamily:
    return PowerSeriesFamily("logarithmic")


_ALIASES = {
    "poisson": "poisson",
    "geometric": "geometric",
    "geom": "geometric",
    "negbin": "negbin",
    "nb": "negbin",
    "negative_binomial": "negbin",
    "negative-binomial": "negbin",
    "binomial": "binomial",
    "logarithmic": "logarithmic",
    "log": "logarithmic",
}


def family_from_name(name: str, nuisance=None) -> PowerSeriesFamily:
    key = _ALIASES.get(name.lower())
    if key is None:
        raise ValueError(f"unknown family {name!r}")
    return PowerSeriesFamily(key, nuisance)


def evaluate_series(family: PowerSeriesFamily, theta: float) -> SeriesTriple:
    """Closed-form ``(f, f', f'')`` at ``theta``."""
    family.check_theta(theta)
    f, f1, f2, _ = family.derivatives(theta)
    return SeriesTriple(f, f1, f2)


def log_pmf(family: PowerSeriesFamily, theta, x):
    """Log mass; ``-inf`` outside the support."""
    family.check_theta(theta)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        out = family.log_b(x) + x * np.log(theta) - family.log_f(theta)
    out = np.where(np.isneginf(family.log_b(x)), -np.inf, out)
    return out if np.ndim(out) else float(out)


def pmf(family: PowerSeriesFamily, theta, x):
    """``b(x) theta**x / f(theta)``; exactly 0 outside the support."""
    out = np.exp(log_pmf(family, theta, x))
    return out if np.ndim(out) else float(out)


def moments(family: PowerSeriesFamily, theta: float) -> tuple[float, float]:
    """Mean ``theta f'/f`` and variance ``theta**2 f''/f + mu (1 - mu)``."""
    family.check_theta(theta)
    r1, _, r2f, _ = family.ratios(theta)
    mu = theta * r1
    return mu, theta * theta * r2f + mu * (1.0 - mu)


def dispersion_index(family: PowerSeriesFamily, theta: float) -> float:
    """Variance-to-mean ratio ``1 + theta f''/f' - mu``."""
    family.check_theta(theta)
    r1, r21, _, _ = family.ratios(theta)
    return 1.0 + theta * (r21 - r1)


def support_grid(family: PowerSeriesFamily, theta: float, log_mass=None) -> np.ndarray:
    """Support points carrying all but ``TAIL_MASS`` of the distribution.

    ``log_mass`` maps an integer array to log probabilities and defaults to
    the family's own log-pmf; the zero-inflated module passes its own.
    """
    if log_mass is None:
        log_mass = lambda x: log_pmf(family, theta, x)  # noqa: E731
    if family.support_max < math.inf:
        return np.arange(0, int(family.support_max) + 1)
    mu, var = moments(family, theta)
    upper = int(min(SUPPORT_CAP, max(64, mu + 40.0 * math.sqrt(var) + 1)))
    while True:
        x = np.arange(0, upper + 1)
        cdf = np.cumsum(np.exp(log_mass(x)))
        hit = np.nonzero(cdf >= 1.0 - TAIL_MASS)[0]
        if hit.size:
            return x[: hit[0] + 1]
        if upper >= SUPPORT_CAP:
            return x
        upper = min(SUPPORT_CAP, upper * 4)


def inverse_cdf_walk(log_mass, u: np.ndarray, x_max: float = SUPPORT_CAP) -> np.ndarray:
    """Invert a discrete CDF by walking upward from zero.

    ``log_mass(x, idx)`` returns log probabilities of value ``x`` for the
    draws indexed by ``idx``; this lets every draw carry its own parameters.
    """
    uf = np.asarray(u, dtype=float).reshape(-1)
    out = np.zeros(uf.size, dtype=np.int64)
    cdf = np.zeros(uf.size)
    active = np.arange(uf.size)
    x = 0
    while active.size:
        cdf[active] += np.exp(log_mass(x, active))
        done = (cdf[active] >= uf[active]) | (cdf[active] >= 1.0 - TAIL_MASS)
        out[active[done]] = x
        active = active[~done]
        x += 1
        if x > x_max:
            out[active] = x - 1
            break
    return out.reshape(np.shape(u))


def sample(family: PowerSeriesFamily, theta: float, rng: np.random.Generator, size=None):
    """Draw from the family by inverse-CDF walk over the pmf."""
    family.check_theta(theta)
    u = rng.random(size)
    draws = inverse_cdf_walk(
        lambda x, idx: log_pmf(family, theta, x), np.atleast_1d(u), family.support_max
    )
    return int(draws[0]) if size is None else draws.reshape(np.shape(u))
