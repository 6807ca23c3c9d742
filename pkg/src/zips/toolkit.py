"""Inflation measures, information criteria, the policy CSV schema and the
synthetic portfolio generator."""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .families import PowerSeriesFamily, family_from_name
from .inflated import ZeroInflatedModel, sample_counts, zi_log_pmf
from .regression import DesignData, theta_link_name

__all__ = [
    "InflationIndices",
    "inflation_indices_sample",
    "inflation_indices_summary",
    "inflation_indices_model",
    "aic_bic",
    "PolicyRecord",
    "CSV_COLUMNS",
    "SchemaError",
    "read_policies",
    "write_policies",
    "summarize_dataset",
    "design_from_records",
    "GeneratorConfig",
    "TruthModel",
    "load_generator_config",
    "generate_portfolio",
]


# -- inflation measures --------------------------------------------------------


@dataclass(frozen=True)
class InflationIndices:
    """Zero share, third central moment, zero-inflation index and third-moment index.

    ``kappa3`` and ``kappa_index`` are ``None`` when only summaries were
    available.  ``zero_free`` flags a sample without zeros, where the
    zero-inflation index is ``-inf``.
    """

    p0: float
    kappa3: float | None
    z_index: float
    kappa_index: float | None
    mean: float
    zero_free: bool = False


def _z_index(log_p0: float, mean: float) -> float:
    return 1.0 + log_p0 / mean


def inflation_indices_sample(counts) -> InflationIndices:
    y = np.asarray(counts, dtype=float)
    if y.size == 0:
        raise ValueError("empty sample")
    mean = float(y.mean())
    if not mean > 0:
        raise ValueError("sample mean must be positive")
    p0 = float(np.mean(y == 0))
    k3 = float(np.mean((y - mean) ** 3))
    if p0 == 0:
        return InflationIndices(0.0, k3, -math.inf, k3 / mean - 1.0, mean, zero_free=True)
    return InflationIndices(p0, k3, _z_index(math.log(p0), mean), k3 / mean - 1.0, mean)


def inflation_indices_summary(n: int, n0: int, mean: float,
                              kappa3: float | None = None) -> InflationIndices:
    """Indices from ``(n, n0, mean)``; the third moment must be supplied separately."""
    if not 0 <= n0 <= n or n < 1:
        raise ValueError(f"inconsistent summaries: n0={n0}, n={n}")
    if not mean > 0:
        raise ValueError("sample mean must be positive")
    p0 = n0 / n
    kappa = None if kappa3 is None else kappa3 / mean - 1.0
    if p0 == 0:
        return InflationIndices(0.0, kappa3, -math.inf, kappa, mean, zero_free=True)
    return InflationIndices(p0, kappa3, _z_index(math.log(p0), mean), kappa, mean)


def inflation_indices_model(model: ZeroInflatedModel) -> InflationIndices:
    """Indices of a fitted model, from closed-form factorial moments.

    ``E[X(X-1)...(X-k+1)] = (1 - omega) theta^k f^(k)/f`` for the inflated
    family, so the third central moment needs no tail truncation.
    """
    t, w = model.theta, model.omega
    r1, _, r2, r3 = model.family.ratios(t)
    f1, f2, f3 = (1.0 - w) * t * r1, (1.0 - w) * t * t * r2, (1.0 - w) * t**3 * r3
    mean = f1
    k3 = f3 + 3.0 * f2 * (1.0 - mean) + mean * (1.0 - mean) * (1.0 - 2.0 * mean)
    log_p0 = zi_log_pmf(model, 0)
    return InflationIndices(float(math.exp(log_p0)), float(k3), _z_index(log_p0, mean),
                            float(k3 / mean - 1.0), float(mean))


def aic_bic(loglik_at_max: float, k: int, n: int) -> tuple[float, float]:
    if n < 1:
        raise ValueError("n must be positive")
    dev = -2.0 * loglik_at_max
    return dev + 2.0 * k, dev + k * math.log(n)


# -- policy data ---------------------------------------------------------------

CSV_COLUMNS = ("numclaims", "veh_value", "gender", "age_young", "age_old", "veh_age_young")
COVARIATES = CSV_COLUMNS[1:]


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyRecord:
    num_claims: int
    vehicle_value: float
    gender: int
    age_young: int
    age_old: int
    vehicle_age_young: int

    def __post_init__(self):
        if self.num_claims < 0:
            raise ValueError("num_claims must be non-negative")
        if self.vehicle_value < 0:
            raise ValueError("vehicle_value must be non-negative")
        for name in ("gender", "age_young", "age_old", "vehicle_age_young"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if self.age_young and self.age_old:
            raise ValueError("age_young and age_old cannot both be 1")

    def row(self) -> list[str]:
        return [str(self.num_claims), repr(float(self.vehicle_value)), str(self.gender),
                str(self.age_young), str(self.age_old), str(self.vehicle_age_young)]


def write_policies(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_policies(path) -> list[PolicyRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if missing or unknown:
            raise SchemaError(f"{path}: schema mismatch; missing columns {missing}, "
                              f"unknown columns {unknown}")
        pos = [header.index(c) for c in CSV_COLUMNS]
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                v = [row[i] for i in pos]
                out.append(PolicyRecord(int(v[0]), float(v[1]), int(v[2]), int(v[3]),
                                        int(v[4]), int(v[5])))
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def records_to_arrays(records) -> dict[str, np.ndarray]:
    return {
        "numclaims": np.array([r.num_claims for r in records], dtype=np.int64),
        "veh_value": np.array([r.vehicle_value for r in records], dtype=float),
        "gender": np.array([r.gender for r in records], dtype=float),
        "age_young": np.array([r.age_young for r in records], dtype=float),
        "age_old": np.array([r.age_old for r in records], dtype=float),
        "veh_age_young": np.array([r.vehicle_age_young for r in records], dtype=float),
    }


SUMMARY_ROWS = ("numclaims", "veh_value", "gender", "age_young", "age_medium", "age_old",
                "veh_age_young")


def summarize_dataset(records) -> dict[str, dict[str, float]]:
    """Mean, population variance, min and max per variable.

    Rows follow the usual descriptive-table order; ``age_medium`` is the
    baseline category implied by the two age dummies.
    """
    if not records:
        raise ValueError("no records")
    cols = records_to_arrays(records)
    cols["age_medium"] = 1.0 - cols["age_young"] - cols["age_old"]
    out = {}
    for name in SUMMARY_ROWS:
        v = np.asarray(cols[name], dtype=float)
        out[name] = {"mean": float(v.mean()), "variance": float(v.var()),
                     "min": float(v.min()), "max": float(v.max())}
    return out


def design_from_records(records, x_columns=COVARIATES, z_columns=None,
                        inflated: bool = True) -> DesignData:
    """Design with an intercept plus the named covariate columns.

    ``z_columns`` defaults to ``x_columns``.
    """
    cols = records_to_arrays(records)
    z_columns = x_columns if z_columns is None else z_columns
    for c in list(x_columns) + list(z_columns):
        if c not in COVARIATES:
            raise SchemaError(f"unknown covariate {c!r}; choose from {COVARIATES}")
    n = len(records)
    X = np.column_stack([np.ones(n)] + [cols[c] for c in x_columns])
    Z = np.column_stack([np.ones(n)] + [cols[c] for c in z_columns]) if inflated else None
    return DesignData(cols["numclaims"], X, Z, ["intercept", *x_columns],
                      ["intercept", *z_columns] if inflated else None)


# -- generator -----------------------------------------------------------------


@dataclass
class TruthModel:
    """Generating count model.

    ``beta`` and ``gamma`` map ``"intercept"`` and covariate names to
    coefficients.  A constant ``omega`` (possibly negative) replaces
    ``gamma``; with neither, claims are not inflated.
    """

    family: str = "poisson"
    nuisance: float | None = None
    beta: dict = field(default_factory=lambda: {"intercept": math.log(0.07275)})
    gamma: dict | None = None
    omega: float | None = None

    def family_obj(self) -> PowerSeriesFamily:
        return family_from_name(self.family, self.nuisance)


@dataclass
class GeneratorConfig:
    """Covariate marginals.  Defaults reproduce the descriptive summaries of
    the 2004-2005 Australian motor portfolio (67,856 policies)."""

    veh_value_mean: float = 1.77702
    veh_value_var: float = 1.45258
    gender: float = 0.43110
    age_young: float = 0.27436
    age_old: float = 0.46081
    veh_age_young: float = 0.57492
    truth: TruthModel = field(default_factory=TruthModel)

    def validate(self) -> None:
        for name in ("gender", "age_young", "age_old", "veh_age_young"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"marginal frequency {name}={v} outside [0, 1]")
        if self.age_young + self.age_old > 1.0:
            raise ValueError("age_young + age_old exceeds 1: no room for the medium class")
        if not (self.veh_value_mean > 0 and self.veh_value_var > 0):
            raise ValueError("vehicle value mean and variance must be positive")
        t = self.truth
        if t.gamma is not None and t.omega is not None:
            raise ValueError("truth takes gamma or a constant omega, not both")
        t.family_obj()
        for coefs in (t.beta, t.gamma or {}):
            for k in coefs:
                if k != "intercept" and k not in COVARIATES:
                    raise ValueError(f"unknown covariate {k!r} in truth coefficients")

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_bool(s):
    return s.strip().lower() in ("1", "true", "yes", "on")


def load_generator_config(path) -> GeneratorConfig:
    """Read an INI-style generator config.

    Sections: ``[marginals]`` with the :class:`GeneratorConfig` fields,
    ``[truth]`` with ``family``, optional ``nuisance`` and ``omega``, and
    ``[truth.beta]`` / ``[truth.gamma]`` mapping names to coefficients.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    cfg = GeneratorConfig()
    names = {f.name for f in fields(GeneratorConfig)} - {"truth"}
    if cp.has_section("marginals"):
        for k, v in cp.items("marginals"):
            if k not in names:
                raise ValueError(f"unknown marginal {k!r}")
            setattr(cfg, k, float(v))
    truth = TruthModel()
    if cp.has_section("truth"):
        sec = cp["truth"]
        truth.family = sec.get("family", truth.family)
        if "nuisance" in sec:
            truth.nuisance = float(sec["nuisance"])
        if "omega" in sec:
            truth.omega = float(sec["omega"])
    if cp.has_section("truth.beta"):
        truth.beta = {k: float(v) for k, v in cp.items("truth.beta")}
    if cp.has_section("truth.gamma"):
        truth.gamma = {k: float(v) for k, v in cp.items("truth.gamma")}
    cfg.truth = truth
    cfg.validate()
    return cfg


def _linear(coefs: dict, cols: dict, n: int) -> np.ndarray:
    eta = np.full(n, float(coefs.get("intercept", 0.0)))
    for k, v in coefs.items():
        if k != "intercept":
            eta = eta + v * cols[k]
    return eta


def generate_portfolio(config: GeneratorConfig, n: int, seed: int) -> list[PolicyRecord]:
    """Draw ``n`` synthetic policies.

    Covariates are independent: vehicle value is lognormal with the configured
    mean and variance, the binaries are Bernoulli, and the age class is one
    categorical draw (young, old, or the medium baseline).  Claims come from
    the truth model.
    """
    config.validate()
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    m, v = config.veh_value_mean, config.veh_value_var
    s2 = math.log1p(v / (m * m))
    veh_value = rng.lognormal(math.log(m) - s2 / 2.0, math.sqrt(s2), n)
    gender = (rng.random(n) < config.gender).astype(np.int64)
    u = rng.random(n)
    age_young = (u < config.age_young).astype(np.int64)
    age_old = ((u >= config.age_young) & (u < config.age_young + config.age_old)).astype(np.int64)
    veh_age_young = (rng.random(n) < config.veh_age_young).astype(np.int64)
    cols = {"veh_value": veh_value, "gender": gender, "age_young": age_young,
            "age_old": age_old, "veh_age_young": veh_age_young}

    t = config.truth
    fam = t.family_obj()
    eta = _linear(t.beta, cols, n)
    theta = 1.0 / (1.0 + np.exp(-eta)) if theta_link_name(fam) == "logit" else np.exp(eta)
    if t.gamma is not None:
        omega = 1.0 / (1.0 + np.exp(-_linear(t.gamma, cols, n)))
    else:
        omega = np.full(n, 0.0 if t.omega is None else t.omega)
    claims = sample_counts(fam, theta, omega, rng)
    return [PolicyRecord(int(claims[i]), float(veh_value[i]), int(gender[i]), int(age_young[i]),
                         int(age_old[i]), int(veh_age_young[i])) for i in range(n)]
