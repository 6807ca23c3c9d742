"""Zero-inflated power series models.

The zero cell receives extra weight ``omega``; all other cells are scaled by
``1 - omega``.  ``omega`` may be negative down to ``-P0 / (1 - P0)``, which
deflates the zero cell instead of inflating it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .families import (
    PowerSeriesFamily,
    dispersion_index,
    inverse_cdf_walk,
    log_pmf,
    moments,
    sample,
    support_grid,
)

__all__ = [
    "ZeroInflatedModel",
    "LatentDecomposition",
    "Dispersion",
    "omega_lower_bound",
    "zi_pmf",
    "zi_log_pmf",
    "zi_moments",
    "classify_dispersion",
    "zi_sample",
    "sample_counts",
]


def omega_lower_bound(family: PowerSeriesFamily, theta: float) -> float:
    """Smallest admissible inflation weight, ``-P0 / (1 - P0)`` (exclusive)."""
    family.check_theta(theta)
    p0 = family.zero_probability(theta)
    if p0 >= 1.0:
        raise ValueError("no zero-inflation possible: parent puts all mass at zero")
    # -p0/(1-p0) = -1/expm1(log f) keeps precision when p0 is close to 1
    if family.b0 == 0.0:
        return -0.0
    return -1.0 / math.expm1(family.log_f(theta))


@dataclass(frozen=True)
class ZeroInflatedModel:
    family: PowerSeriesFamily
    theta: float
    omega: float = 0.0

    def __post_init__(self):
        self.family.check_theta(self.theta)
        if not self.omega < 1.0:
            raise ValueError(f"omega={self.omega!r} must be below 1")
        if self.omega < 0.0:
            lower = omega_lower_bound(self.family, self.theta)
            if not self.omega > lower:
                raise ValueError(
                    f"omega={self.omega!r} outside the admissible range ({lower!r}, 1) "
                    f"for {self.family.label} at theta={self.theta!r}"
                )

    @property
    def parent_p0(self) -> float:
        return self.family.zero_probability(self.theta)


def zi_log_pmf(model: ZeroInflatedModel, y):
    y = np.asarray(y, dtype=float)
    w = model.omega
    base = np.asarray(log_pmf(model.family, model.theta, y), dtype=float)
    zero_mass = w + (1.0 - w) * model.parent_p0
    if model.family.b0 > 0 and w == 0.0:
        zero = float(model.family.log_b(0) - model.family.log_f(model.theta))
    else:
        zero = math.log(zero_mass) if zero_mass > 0 else -math.inf
    out = np.where(y == 0, zero, math.log1p(-w) + base)
    return out if out.ndim else float(out)


def zi_pmf(model: ZeroInflatedModel, y):
    """Zero-inflated mass: ``omega + (1-omega) P0`` at zero, ``(1-omega) p(y)`` elsewhere."""
    y = np.asarray(y, dtype=float)
    w = model.omega
    base = np.asarray(np.exp(log_pmf(model.family, model.theta, y)), dtype=float)
    out = np.where(y == 0, w + (1.0 - w) * model.parent_p0, (1.0 - w) * base)
    # rounding can push an exactly deflated zero cell a hair below 0
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def zi_moments(model: ZeroInflatedModel) -> tuple[float, float]:
    mu, var = moments(model.family, model.theta)
    w = model.omega
    return (1.0 - w) * mu, (1.0 - w) * (var + w * mu * mu)


class Dispersion(enum.Enum):
    OVERDISPERSED = "overdispersed"
    UNDERDISPERSED = "underdispersed"
    EQUIDISPERSED = "equidispersed"


@dataclass(frozen=True)
class LatentDecomposition:
    """Moments of the latent count ``V`` in ``Y = V (1 - B)``, with ``B ~ Bernoulli(omega)``."""

    e_v: float
    delta: float
    omega: float

    @classmethod
    def from_model(cls, model: ZeroInflatedModel) -> "LatentDecomposition":
        mu, _ = moments(model.family, model.theta)
        return cls(mu, dispersion_index(model.family, model.theta), model.omega)

    def variance_ratio(self) -> float:
        # var(Y)/E(Y) = omega/(1-omega) E(Y) + delta with E(Y) = (1-omega) E(V)
        return self.omega * self.e_v + self.delta


def classify_dispersion(decomp: LatentDecomposition) -> Dispersion:
    """Classify ``Y`` as over-, under- or equidispersed.

    For ``omega > 0`` this uses the latent-variable criterion: a latent
    ``delta >= 1`` forces overdispersion, otherwise ``Y`` is underdispersed
    iff ``E(V) < (1 - delta) / omega``.  For ``omega <= 0`` the criterion does
    not apply and the moment ratio decides.
    """
    ratio = decomp.variance_ratio()
    if abs(ratio - 1.0) <= 1e-12:
        return Dispersion.EQUIDISPERSED
    if decomp.omega > 0:
        if decomp.delta >= 1.0:
            return Dispersion.OVERDISPERSED
        if decomp.e_v < (1.0 - decomp.delta) / decomp.omega:
            return Dispersion.UNDERDISPERSED
        return Dispersion.OVERDISPERSED
    return Dispersion.OVERDISPERSED if ratio > 1.0 else Dispersion.UNDERDISPERSED


def zi_sample(model: ZeroInflatedModel, rng: np.random.Generator, size=None):
    """Draw from the model.

    Non-negative ``omega`` uses the mixture ``V (1 - B)``.  Negative
    ``omega`` has no mixture reading, so draws come from inverse-CDF over the
    zero-inflated pmf itself.
    """
    if model.omega >= 0.0:
        b = rng.random(size) < model.omega
        v = sample(model.family, model.theta, rng, size)
        out = np.where(b, 0, v)
        return int(out) if size is None else out.astype(np.int64)
    u = rng.random(size)
    draws = inverse_cdf_walk(lambda x, idx: zi_log_pmf(model, x), np.atleast_1d(u),
                             model.family.support_max)
    return int(draws[0]) if size is None else draws.reshape(np.shape(u))


def sample_counts(family: PowerSeriesFamily, theta, omega, rng: np.random.Generator) -> np.ndarray:
    """One draw per row for per-row ``theta`` and ``omega`` arrays.

    Rows with ``omega >= 0`` use the latent mixture; the rest use an
    inverse-CDF walk over their own zero-inflated pmf.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.broadcast_to(np.asarray(omega, dtype=float), theta.shape)
    family.check_theta(theta)
    n = theta.size
    u = rng.random(n)
    b = rng.random(n) < np.maximum(omega, 0.0)
    log_theta = np.log(theta)
    log_f = np.asarray(family.log_f(theta))
    p0 = np.exp(family.log_b(0) - log_f)
    neg = omega < 0
    zero_mass = np.where(neg, omega + (1.0 - omega) * p0, p0)
    if np.any(zero_mass <= 0.0) and family.b0 > 0:
        raise ValueError("omega below its admissible lower bound for some rows")
    scale = np.where(neg, 1.0 - omega, 1.0)

    def log_mass(x, idx):
        if x == 0:
            with np.errstate(divide="ignore"):
                return np.log(zero_mass[idx])
        return np.log(scale[idx]) + family.log_b(x) + x * log_theta[idx] - log_f[idx]

    v = inverse_cdf_walk(log_mass, u, family.support_max)
    return np.where(b, 0, v).astype(np.int64)


def model_support(model: ZeroInflatedModel) -> np.ndarray:
    """Support grid for the zero-inflated model (truncated tail)."""
    return support_grid(model.family, model.theta, lambda x: zi_log_pmf(model, x))
