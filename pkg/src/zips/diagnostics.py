"""Convergence diagnostics and posterior summaries for MCMC output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["split_rhat", "effective_sample_size", "PosteriorSummary", "summarize_draws",
           "interval_stars"]

LEVELS = (0.90, 0.95, 0.99)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _split(x: np.ndarray) -> np.ndarray:
    m, n = x.shape
    half = n // 2
    return np.concatenate([x[:, :half], x[:, n - half:]], axis=0)


def _rhat_basic(x: np.ndarray) -> float:
    m, n = x.shape
    means = x.mean(axis=1)
    w = x.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def split_rhat(x) -> float:
    """Rank-normalized split R-hat for one parameter, ``x`` shaped (chains, draws).

    Returns the larger of the bulk and folded (tail) versions.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 and x.shape[1] < 4:
        return float("nan")
    s = _split(x)
    bulk = _rhat_basic(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_basic(_rank_normalize(folded))
    return max(bulk, tail)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean()
    f = np.fft.rfft(xc, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:n]
    return ac / n


def effective_sample_size(x) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation.

    Autocorrelations are summed in consecutive pairs and the sum stops at
    the first pair whose total is negative.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocovariance(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        total += pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def interval_stars(intervals: dict) -> str:
    """``***`` if the 99% interval excludes 0, ``**`` for 95%, ``*`` for 90%."""
    def excludes(level):
        lo, hi = intervals[level]
        return lo > 0 or hi < 0

    if excludes(0.99):
        return "***"
    if excludes(0.95):
        return "**"
    if excludes(0.90):
        return "*"
    return ""


@dataclass
class PosteriorSummary:
    names: list[str]
    mean: np.ndarray
    sd: np.ndarray
    intervals: list[dict]
    rhat: np.ndarray | None
    ess: np.ndarray
    stars: list[str]

    def row(self, name: str) -> dict:
        j = self.names.index(name)
        return {
            "mean": float(self.mean[j]),
            "sd": float(self.sd[j]),
            "intervals": {f"{lvl:.2f}": list(map(float, self.intervals[j][lvl]))
                          for lvl in LEVELS},
            "rhat": None if self.rhat is None else float(self.rhat[j]),
            "ess": float(self.ess[j]),
            "stars": self.stars[j],
        }


def summarize_draws(draws, names) -> PosteriorSummary:
    """Summaries for draws shaped (chains, kept, parameters)."""
    draws = np.asarray(draws, dtype=float)
    m, n, k = draws.shape
    flat = draws.reshape(m * n, k)
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0, ddof=1) if m * n > 1 else np.zeros(k)
    intervals, stars, ess = [], [], []
    rhat = None if m < 2 else np.empty(k)
    for j in range(k):
        iv = {}
        for lvl in LEVELS:
            a = (1.0 - lvl) / 2.0
            iv[lvl] = tuple(np.quantile(flat[:, j], [a, 1.0 - a]))
        intervals.append(iv)
        stars.append(interval_stars(iv))
        ess.append(effective_sample_size(draws[:, :, j]))
        if rhat is not None:
            rhat[j] = split_rhat(draws[:, :, j])
    return PosteriorSummary(list(names), mean, sd, intervals, rhat, np.array(ess), stars)
