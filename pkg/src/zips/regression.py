"""Covariate links and the observation-level log-likelihood.

``theta_i`` follows ``exp(x_i' beta)`` for the unbounded families (Poisson,
binomial).  Families whose power parameter lives in (0, 1) use
``theta_i = exp(eta) / (1 + exp(eta))`` instead; for the geometric family this
is the same as modelling its mean ``theta / (1 - theta)`` as ``exp(eta)``.
``omega_i`` follows the logit link, so regression models only inflate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .families import PowerSeriesFamily

__all__ = [
    "DesignData",
    "CoefficientSet",
    "LinkOverflowError",
    "theta_link_name",
    "link_theta",
    "link_omega",
    "loglik",
    "LikelihoodEvaluator",
]

EXP_LIMIT = 700.0


class LinkOverflowError(OverflowError):
    pass


@dataclass
class DesignData:
    """Counts plus the two design matrices.

    ``z_matrix`` may be ``None`` for models without inflation.  Column names
    are carried along for reporting.
    """

    y: np.ndarray
    x_matrix: np.ndarray
    z_matrix: np.ndarray | None = None
    x_names: list[str] | None = None
    z_names: list[str] | None = None
    n0: int = field(init=False)

    def __post_init__(self):
        self.y = np.asarray(self.y)
        if self.y.ndim != 1 or self.y.size < 1:
            raise ValueError("y must be a non-empty vector")
        if np.any(self.y < 0) or np.any(self.y != np.round(self.y)):
            raise ValueError("y must hold non-negative integer counts")
        self.y = self.y.astype(np.int64)
        self.x_matrix = _as_design(self.x_matrix, self.y.size, "x_matrix")
        if self.z_matrix is not None:
            self.z_matrix = _as_design(self.z_matrix, self.y.size, "z_matrix")
        if self.x_names is None:
            self.x_names = _default_names(self.x_matrix.shape[1])
        if self.z_matrix is not None and self.z_names is None:
            self.z_names = _default_names(self.z_matrix.shape[1])
        self.n0 = int(np.count_nonzero(self.y == 0))

    @property
    def n(self) -> int:
        return int(self.y.size)

    @classmethod
    def intercept_only(cls, y) -> "DesignData":
        y = np.asarray(y)
        ones = np.ones((y.size, 1))
        return cls(y, ones, ones.copy(), ["intercept"], ["intercept"])

    def take(self, idx) -> "DesignData":
        z = None if self.z_matrix is None else self.z_matrix[idx]
        return DesignData(self.y[idx], self.x_matrix[idx], z, list(self.x_names),
                          None if z is None else list(self.z_names))


def _default_names(k):
    return ["intercept"] + [f"x{j}" for j in range(1, k)]


def _as_design(m, n, label):
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] != n:
        raise ValueError(f"{label} has {m.shape[0]} rows; expected {n}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{label} contains non-finite entries")
    if not np.allclose(m[:, 0], 1.0):
        raise ValueError(f"first column of {label} must be the constant 1")
    rank = np.linalg.matrix_rank(m)
    if rank < m.shape[1]:
        raise ValueError(f"{label} is rank deficient (rank {rank} < {m.shape[1]} columns)")
    cond = np.linalg.cond(m)
    if cond > 1e10:
        warnings.warn(f"{label} is nearly rank deficient (condition number {cond:.3g})",
                      stacklevel=3)
    return m


@dataclass
class CoefficientSet:
    beta: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.gamma))):
            raise ValueError("coefficients must be finite")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    @classmethod
    def from_vector(cls, v, p: int) -> "CoefficientSet":
        v = np.asarray(v, dtype=float)
        return cls(v[:p], v[p:])


def theta_link_name(family: PowerSeriesFamily) -> str:
    return "logit" if family.bounded else "log"


def link_theta(x_row, beta, link: str = "log") -> float:
    """Power parameter for one row; ``link`` is ``"log"`` or ``"logit"``."""
    eta = float(np.dot(x_row, beta))
    if link == "logit":
        return float(expit(eta))
    if abs(eta) > EXP_LIMIT:
        raise LinkOverflowError(f"linear predictor {eta:.6g} overflows the log link")
    return float(np.exp(eta))


def link_omega(z_row, gamma) -> float:
    return float(expit(np.dot(z_row, gamma)))


def _log_expit_pair(t):
    """``(log expit(t), log expit(-t))`` via one shared softplus term."""
    s = np.log1p(np.exp(-np.abs(t)))
    return -(np.maximum(-t, 0.0) + s), -(np.maximum(t, 0.0) + s)


def _logaddexp(a, b):
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore"):
        return m + np.log1p(np.exp(-np.abs(a - b)))


class LikelihoodEvaluator:
    """Log-likelihood of a fixed dataset, split by parameter block.

    The sampler updates ``beta`` and ``gamma`` separately, so the count part
    (which depends on ``beta`` only) and the zero-weight part (``gamma`` only)
    are exposed individually and recombined cheaply.
    """

    def __init__(self, data: DesignData, family: PowerSeriesFamily):
        self.data = data
        self.family = family
        self.link = theta_link_name(family)
        y = data.y
        self.zero = y == 0
        self.pos = ~self.zero
        self.y_pos = y[self.pos].astype(float)
        self.log_b_pos = np.asarray(family.log_b(self.y_pos), dtype=float)
        self.log_b0 = float(family.log_b(0))
        self.X0 = data.x_matrix[self.zero]
        self.Xp = data.x_matrix[self.pos]
        if data.z_matrix is not None:
            self.Z0 = data.z_matrix[self.zero]
            self.Zp = data.z_matrix[self.pos]
        self.p = data.x_matrix.shape[1]
        self.q = 0 if data.z_matrix is None else data.z_matrix.shape[1]

    def _log_theta_f(self, eta):
        fam = self.family
        if self.link == "logit":
            log_theta, log_1mt = _log_expit_pair(eta)
            sp = -log_1mt  # -log(1 - theta)
            if fam.name == "geometric":
                log_f = sp
            elif fam.name == "negbin":
                log_f = fam.nuisance * sp
            else:
                log_f = np.log(sp)
            return log_theta, log_f
        if np.any(np.abs(eta) > EXP_LIMIT):
            row = int(np.argmax(np.abs(eta) > EXP_LIMIT))
            raise LinkOverflowError(f"linear predictor overflows the log link at row {row}")
        theta = np.exp(eta)
        if fam.name == "poisson":
            log_f = theta
        else:
            log_f = fam.nuisance * np.log1p(theta)
        return eta, log_f

    def count_terms(self, beta):
        """``(log P0 on zero rows, log pmf on positive rows)`` for the parent."""
        _, log_f0 = self._log_theta_f(self.X0 @ beta)
        log_theta_p, log_f_p = self._log_theta_f(self.Xp @ beta)
        log_p0 = self.log_b0 - log_f0
        log_pp = self.log_b_pos + self.y_pos * log_theta_p - log_f_p
        return log_p0, log_pp

    def zero_terms(self, gamma):
        """``(log omega, log(1-omega)) on zero rows, log(1-omega) on positive rows``."""
        lw0, l1w0 = _log_expit_pair(self.Z0 @ gamma)
        etap = self.Zp @ gamma
        l1wp = -(np.maximum(etap, 0.0) + np.log1p(np.exp(-np.abs(etap))))
        return lw0, l1w0, l1wp

    @staticmethod
    def combine(count, zero=None) -> float:
        log_p0, log_pp = count
        if zero is None:
            return float(np.sum(log_p0) + np.sum(log_pp))
        lw0, l1w0, l1wp = zero
        z = _logaddexp(lw0, l1w0 + log_p0)
        total = float(np.sum(z) + np.sum(l1wp + log_pp))
        return total if not np.isnan(total) else -np.inf

    def __call__(self, coeffs: CoefficientSet) -> float:
        count = self.count_terms(coeffs.beta)
        if coeffs.gamma.size == 0:
            return self.combine(count)
        return self.combine(count, self.zero_terms(coeffs.gamma))

    def constant_omega(self, beta, omega: float) -> float:
        """Log-likelihood with a fixed (possibly negative) ``omega``."""
        log_p0, log_pp = self.count_terms(beta)
        if omega == 0.0:
            return self.combine((log_p0, log_pp))
        zero_mass = omega + (1.0 - omega) * np.exp(log_p0)
        if np.any(zero_mass <= 0.0):
            return -np.inf
        return float(np.sum(np.log(zero_mass)) + np.sum(np.log1p(-omega) + log_pp))


def loglik(data: DesignData, family: PowerSeriesFamily, coeffs: CoefficientSet,
           omega: float | None = None) -> float:
    """Sum of per-observation log zero-inflated probabilities.

    An empty ``gamma`` means no inflation.  ``omega`` fixes a constant
    inflation weight in place of the logit link.  Returns ``-inf`` when some
    observation has zero probability.
    """
    ev = LikelihoodEvaluator(data, family)
    if omega is not None:
        return ev.constant_omega(coeffs.beta, omega)
    if coeffs.beta.size != ev.p:
        raise ValueError(f"beta has {coeffs.beta.size} entries; design has {ev.p} columns")
    if coeffs.gamma.size and coeffs.gamma.size != ev.q:
        raise ValueError(f"gamma has {coeffs.gamma.size} entries; design has {ev.q} columns")
    return ev(coeffs)
