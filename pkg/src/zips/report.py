"""Report assembly (JSON-ready dicts) and plain-text rendering."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__

STAR_LEGEND = (
    "Stars: *** 1%, ** 5%, * 10%. MLE fits use a two-sided Wald test; "
    "Bayesian fits mark a coefficient when the equal-tailed 99%/95%/90% "
    "credible interval excludes 0."
)


@dataclass
class RunManifest:
    command: str
    inputs: list[str] = field(default_factory=list)
    data_sha256: str | None = None
    family: str | None = None
    nuisance: float | None = None
    inflated: bool | None = None
    estimator: str | None = None
    prior: dict | None = None
    mcmc: dict | None = None
    seed: int | None = None
    tool_version: str = __version__
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def stamp(path=None) -> str:
    """Report timestamp: ``SOURCE_DATE_EPOCH`` if set, else the input's mtime, else now.

    Tying the stamp to the input keeps repeated runs byte-identical.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = float(epoch)
    elif path is not None:
        t = os.path.getmtime(path)
    else:
        t = _dt.datetime.now(_dt.timezone.utc).timestamp()
    return _dt.datetime.fromtimestamp(t, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _clean(obj):
    """Make numpy scalars/arrays JSON friendly; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=False) + "\n"


def load_schema() -> dict:
    text = resources.files("zips").joinpath("data/report.schema.json").read_text("utf-8")
    return json.loads(text)


# -- text rendering ------------------------------------------------------------


def _fmt(v, digits=4):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    if not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    s = f"{v:.{digits}f}"
    return s[1:] if s.startswith("-") and not s.strip("-0.") else s


def render_fit(report: dict) -> str:
    m = report["model"]
    lines = [f"{report['label']}: {m['family']} {'zero-inflated ' if m['inflated'] else ''}"
             f"model, {m['estimator'].upper()} fit, n = {report['n_obs']}"]
    lines.append(f"links: theta {m['theta_link']}, omega {m['omega_link'] or '-'}")
    coefs = report["coefficients"]
    beta = [c for c in coefs if c["block"] == "beta"]
    gamma = [c for c in coefs if c["block"] == "gamma"]
    names = []
    for c in beta + gamma:
        if c["name"] not in names:
            names.append(c["name"])
    spread = "posterior sd" if m["estimator"] == "bayes" else "std. error"
    head = ["", "zero part (gamma)", "count part (beta)"] if gamma else ["", "count part (beta)"]
    w0 = max(14, max(len(n) for n in names) + 2)
    rows = [f"{head[0]:<{w0}}" + "".join(f"{h:>22}" for h in head[1:])]
    rows.append("-" * len(rows[0]))
    bmap = {c["name"]: c for c in beta}
    gmap = {c["name"]: c for c in gamma}
    for name in names:
        est_line = f"{name:<{w0}}"
        se_line = " " * w0
        for block in ([gmap, bmap] if gamma else [bmap]):
            c = block.get(name)
            if c is None:
                est_line += f"{'':>22}"
                se_line += f"{'':>22}"
                continue
            est = f"{_fmt(c['estimate'])} {c['stars']}".rstrip()
            se = f"({_fmt(c['std_error'])})"
            est_line += f"{est:>22}"
            se_line += f"{se:>22}"
        rows.append(est_line)
        rows.append(se_line)
    lines += rows
    lines.append(f"({spread} in parentheses)")
    fit = report["fit"]
    lines.append("")
    lines.append(f"log-likelihood {_fmt(fit['loglik'], 3)}   k = {fit['k']}   "
                 f"AIC {_fmt(fit['aic'], 3)}   BIC {_fmt(fit['bic'], 3)}")
    if fit.get("dic") is not None:
        lines.append(f"DIC {_fmt(fit['dic'], 3)}   pD {_fmt(fit['p_d'], 3)}")
    if report.get("mcmc"):
        mc = report["mcmc"]
        lines.append(f"MCMC: {mc['chains']} chains x {mc['kept_per_chain']} kept draws "
                     f"(iterations {mc['iterations']}, burn-in {mc['burn_in']}, thin {mc['thin']})")
        rh = [c["rhat"] for c in coefs if c.get("rhat") is not None]
        es = [c["ess"] for c in coefs if c.get("ess") is not None]
        if rh:
            lines.append(f"max R-hat {_fmt(max(rh), 4)}   min ESS {_fmt(min(es), 1)}")
    lines.append(f"converged: {'yes' if report['converged'] else 'NO'}")
    for msg in report.get("messages", []):
        lines.append(f"note: {msg}")
    lines.append(STAR_LEGEND)
    lines += _manifest_lines(report["manifest"])
    return "\n".join(lines) + "\n"


def _manifest_lines(man: dict) -> list[str]:
    out = ["", "# manifest"]
    for k, v in man.items():
        if v is None:
            continue
        out.append(f"# {k}: {json.dumps(_clean(v))}")
    return out


def render_compare(report: dict) -> str:
    rows = report["rows"]
    w = max(18, max(len(r["label"]) for r in rows) + 2)
    lines = [f"{'':<{w}}{'DIC':>16}{'AIC':>16}{'BIC':>16}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        cells = []
        for col in ("dic", "aic", "bic"):
            v = r[col]
            s = "-" if v is None else f"{v:.3f}"
            if r["lowest"][col]:
                s += " <"
            else:
                s += "  "
            cells.append(f"{s:>16}")
        lines.append(f"{r['label']:<{w}}" + "".join(cells))
    lines.append("'<' marks the smallest value in each column (smaller is better).")
    lines += _manifest_lines(report["manifest"])
    return "\n".join(lines) + "\n"


def render_indices(report: dict) -> str:
    cols = report["columns"]
    order = ["Sample", "Poisson", "Geometric", "ZIP", "ZIG"]
    lines = [f"{'':<10}" + "".join(f"{c:>12}" for c in order)]
    lines.append("-" * len(lines[0]))
    for key, label in (("p0", "p0"), ("kappa3", "kappa3"), ("z_index", "z_i"),
                       ("kappa_index", "kappa")):
        cells = []
        for c in order:
            v = cols[c][key]
            cells.append(f"{'—' if v is None else _fmt(v, 5):>12}")
        lines.append(f"{label:<10}" + "".join(cells))
    lines.append("")
    for c in order[1:]:
        par = report["fits"][c]
        lines.append(f"{c:<10} theta = {par['theta']:.6f}   omega = {par['omega']:.6f}")
    lines += _manifest_lines(report["manifest"])
    return "\n".join(lines) + "\n"
