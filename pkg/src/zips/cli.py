"""``zips`` command line: fit, compare, simulate, indices."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import McmcConfig, PriorSpec, config_dict, diagnostics, dic, run_mcmc, write_chains_csv
from .families import DomainError, family_from_name
from .inflated import ZeroInflatedModel
from .mle import CountSummary, mle_nocov, mle_regression, wald_stars
from .regression import theta_link_name
from .report import (
    STAR_LEGEND,
    RunManifest,
    dumps,
    file_sha256,
    render_compare,
    render_fit,
    render_indices,
    stamp,
)
from .toolkit import (
    COVARIATES,
    SchemaError,
    aic_bic,
    design_from_records,
    generate_portfolio,
    inflation_indices_model,
    inflation_indices_sample,
    inflation_indices_summary,
    load_generator_config,
    read_policies,
    write_policies,
)

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3
RHAT_LIMIT = 1.05

_SHORT = {"poisson": "P", "geometric": "G", "negbin": "NB", "binomial": "B", "logarithmic": "L"}
_LONG = {"poisson": "Poisson", "geometric": "Geometric", "negbin": "Negative Binomial",
         "binomial": "Binomial", "logarithmic": "Logarithmic"}
# Bayesian rows read B + ZI + family + PS, except Poisson which is BZIPS
_BAYES = {"poisson": "P", "geometric": "GP", "negbin": "NBP", "binomial": "BP",
          "logarithmic": "LP"}


class CliError(Exception):
    pass


def model_label(family: str, inflated: bool, estimator: str) -> str:
    """Row label in the style of the published tables (ZIP, ZIG, BZIPS, ...)."""
    if estimator == "bayes":
        return f"BZI{_BAYES[family]}S" if inflated else f"Bayes {_LONG[family]}"
    if inflated:
        return f"ZI{_SHORT[family]}"
    return _LONG[family]


def default_seed() -> int:
    raw = os.environ.get("ZIPS_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"ZIPS_SEED must be an integer, got {raw!r}") from None


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _pair(s):
    parts = s.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {s!r}")
    return float(parts[0]), float(parts[1])


def _columns(s):
    if s.strip() == "":
        return []
    cols = [c.strip() for c in s.split(",")]
    bad = [c for c in cols if c not in COVARIATES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown covariate(s) {bad}; choose from {list(COVARIATES)}")
    return cols


# -- fit -------------------------------------------------------------------------


def fit_report(path, family_name, nuisance, inflated, estimator, x_columns, z_columns,
               prior: PriorSpec, mcmc: McmcConfig | None, label=None, chains_csv=None) -> dict:
    family = family_from_name(family_name, nuisance)
    records = read_policies(path)
    if not records:
        raise CliError(f"{path}: no data rows")
    data = design_from_records(records, x_columns, z_columns, inflated)
    manifest = RunManifest(
        command="fit", inputs=[str(path)], data_sha256=file_sha256(path), family=family.name,
        nuisance=family.nuisance, inflated=inflated, estimator=estimator,
        prior=None if estimator == "mle" else {
            "omega_prior": list(prior.omega_prior), "theta_prior": list(prior.theta_prior),
            "beta_bounds": list(prior.beta_bounds), "gamma_bounds": list(prior.gamma_bounds)},
        mcmc=None if mcmc is None else config_dict(mcmc),
        seed=None if mcmc is None else mcmc.seed, timestamp=stamp(path),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if estimator == "mle":
            res = mle_regression(data, family, inflated)
            body = _mle_body(res)
        else:
            chains = run_mcmc(data, family, prior, mcmc, inflated)
            body = _bayes_body(chains, data.n)
            if chains_csv:
                write_chains_csv(chains, chains_csv)
    return {
        "kind": "fit",
        "label": label or model_label(family.name, inflated, estimator),
        "model": {"family": family.name, "nuisance": family.nuisance, "inflated": inflated,
                  "estimator": estimator, "theta_link": theta_link_name(family),
                  "omega_link": "logit" if inflated else None},
        "n_obs": data.n,
        **body,
        "star_legend": STAR_LEGEND,
        "manifest": manifest.to_dict(),
    }


def _split_name(name):
    block, _, col = name.partition(":")
    return block, col


def _mle_body(res) -> dict:
    est = res.params()
    coefs = []
    for j, name in enumerate(res.names):
        block, col = _split_name(name)
        se = None if res.std_errors is None else float(res.std_errors[j])
        coefs.append({"block": block, "name": col, "estimate": float(est[j]), "std_error": se,
                      "stars": wald_stars(est[j], se)})
    k = res.n_params
    aic, bic = aic_bic(res.loglik_at_max, k, res.n_obs)
    return {
        "converged": bool(res.converged),
        "coefficients": coefs,
        "fit": {"loglik": res.loglik_at_max, "k": k, "aic": aic, "bic": bic,
                "dic": None, "p_d": None, "iterations": res.iterations},
        "mcmc": None,
        "messages": list(res.messages),
    }


def _bayes_body(chains, n) -> dict:
    summ = diagnostics(chains)
    coefs = []
    for name in summ.names:
        block, col = _split_name(name)
        row = summ.row(name)
        coefs.append({"block": block, "name": col, "estimate": row["mean"],
                      "std_error": row["sd"], "stars": row["stars"],
                      "intervals": row["intervals"], "rhat": row["rhat"], "ess": row["ess"]})
    d, p_d = dic(chains)
    k = chains.draws.shape[2]
    messages = list(chains.messages)
    if chains.mle is not None and chains.mle.converged:
        ll = chains.mle.loglik_at_max
    else:
        ll = float(chains.loglik_draws.max())
        messages.append("AIC/BIC use the largest sampled log-likelihood (MLE unavailable)")
    aic, bic = aic_bic(ll, k, n)
    rhat_ok = summ.rhat is None or bool(np.all(summ.rhat < RHAT_LIMIT))
    if summ.rhat is None:
        messages.append("single chain: R-hat not computed")
    elif not rhat_ok:
        messages.append(f"some R-hat values exceed {RHAT_LIMIT}")
    acc = chains.post_burn_acceptance()
    cfg = chains.config
    return {
        "converged": bool(rhat_ok and np.isfinite(d)),
        "coefficients": coefs,
        "fit": {"loglik": ll, "k": k, "aic": aic, "bic": bic, "dic": d, "p_d": p_d,
                "iterations": cfg.iterations},
        "mcmc": {"chains": cfg.chains, "iterations": cfg.iterations, "burn_in": cfg.burn_in,
                 "thin": cfg.thin, "kept_per_chain": cfg.kept, "seed": cfg.seed,
                 "acceptance": acc.tolist(), "warm_start": chains.warm_start_ok},
        "messages": messages,
    }


def _emit(args, report, render):
    text = render(report)
    js = dumps(report)
    if args.json:
        Path(args.json).write_text(js, encoding="utf-8")
    out = js if args.format == "json" else text
    if args.output:
        Path(args.output).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)


def cmd_fit(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    mcmc = None
    if args.estimator == "bayes":
        mcmc = McmcConfig(chains=args.chains, iterations=args.iters, burn_in=args.burnin,
                          thin=args.thin, seed=seed)
    prior = PriorSpec(omega_prior=args.omega_prior, theta_prior=args.theta_prior,
                      beta_bounds=args.bounds, gamma_bounds=args.bounds)
    report = fit_report(args.data, args.family, args.nuisance, args.inflated, args.estimator,
                        args.x_columns, args.z_columns, prior, mcmc, chains_csv=args.chains_csv)
    _emit(args, report, render_fit)
    return EXIT_OK if report["converged"] else EXIT_NOT_CONVERGED


# -- compare ---------------------------------------------------------------------


def parse_model_spec(spec: str) -> dict:
    """``[LABEL=]family[(nuisance)][:zi][:bayes]``, e.g. ``ZINB=negbin(2):zi``."""
    label = None
    if "=" in spec:
        label, spec = spec.split("=", 1)
    tokens = spec.split(":")
    fam = tokens[0].strip().lower()
    nuisance = None
    if "(" in fam:
        fam, _, rest = fam.partition("(")
        nuisance = float(rest.rstrip(")"))
    inflated, estimator = False, "mle"
    for t in tokens[1:]:
        t = t.strip().lower()
        if t in ("zi", "inflated"):
            inflated = True
        elif t in ("bayes", "mle"):
            estimator = t
        else:
            raise CliError(f"unknown model option {t!r} in {spec!r}")
    family = family_from_name(fam, nuisance)
    return {"label": label or model_label(family.name, inflated, estimator),
            "family": family.name, "nuisance": family.nuisance, "inflated": inflated,
            "estimator": estimator}


def compare_rows(reports: list[dict]) -> list[dict]:
    digests = {r["manifest"]["data_sha256"] for r in reports}
    if len(digests) > 1:
        raise CliError("refusing to compare fits made on different datasets")
    rows = [{"label": r["label"], "dic": r["fit"].get("dic"), "aic": r["fit"]["aic"],
             "bic": r["fit"]["bic"], "lowest": {}} for r in reports]
    for col in ("dic", "aic", "bic"):
        best = None
        for i, row in enumerate(rows):
            v = row[col]
            if v is not None and math.isfinite(v) and (best is None or v < rows[best][col]):
                best = i
        for i, row in enumerate(rows):
            row["lowest"][col] = i == best
    return rows


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        rep = json.loads(Path(p).read_text(encoding="utf-8"))
        if rep.get("kind") != "fit":
            raise CliError(f"{p}: not a fit report")
        reports.append(rep)
    seed = args.seed if args.seed is not None else default_seed()
    if args.model:
        if not args.data:
            raise CliError("--model needs --data")
        for spec in args.model:
            m = parse_model_spec(spec)
            mcmc = None
            if m["estimator"] == "bayes":
                mcmc = McmcConfig(chains=args.chains, iterations=args.iters,
                                  burn_in=args.burnin, seed=seed)
            reports.append(fit_report(args.data, m["family"], m["nuisance"], m["inflated"],
                                      m["estimator"], list(COVARIATES), None, PriorSpec(),
                                      mcmc, label=m["label"]))
    if len(reports) < 2:
        raise CliError("compare needs at least two fits")
    rows = compare_rows(reports)
    first = reports[0]["manifest"]
    report = {
        "kind": "compare",
        "rows": rows,
        "converged": all(r["converged"] for r in reports),
        "fits": reports,
        "manifest": RunManifest(command="compare",
                                inputs=list(args.reports) + ([args.data] if args.data else []),
                                data_sha256=first["data_sha256"], seed=seed,
                                timestamp=stamp(args.data or args.reports[0])).to_dict(),
    }
    _emit(args, report, render_compare)
    return EXIT_OK if report["converged"] else EXIT_NOT_CONVERGED


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.config:
        cfg_path = Path(args.config)
        cfg = load_generator_config(cfg_path)
    else:
        with resources.as_file(resources.files("zips").joinpath("data/table1.cfg")) as p:
            cfg_path = p
            cfg = load_generator_config(p)
    records = generate_portfolio(cfg, args.n, seed)
    out = Path(args.out)
    write_policies(records, out)
    sidecar = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    truth = {"kind": "truth", "config": cfg.to_dict(), "n": args.n, "seed": seed,
             "config_path": str(cfg_path), "tool_version": __version__}
    sidecar.write_text(dumps(truth), encoding="utf-8")
    return EXIT_OK


# -- indices ---------------------------------------------------------------------


def indices_report(summary: CountSummary, sample) -> dict:
    def cells(ind):
        return {"p0": ind.p0, "kappa3": ind.kappa3, "z_index": ind.z_index,
                "kappa_index": ind.kappa_index, "mean": ind.mean}

    cols = {"Sample": cells(sample)}
    fits = {}
    for label, fam, infl in (("Poisson", "poisson", False), ("Geometric", "geometric", False),
                             ("ZIP", "poisson", True), ("ZIG", "geometric", True)):
        family = family_from_name(fam)
        res = mle_nocov(summary, family, infl)
        theta, omega = res.theta_hat, (res.omega_hat if infl else 0.0)
        cols[label] = cells(inflation_indices_model(ZeroInflatedModel(family, theta, omega)))
        fits[label] = {"theta": theta, "omega": omega, "loglik": res.loglik_at_max}
    return {"kind": "indices", "n": summary.n, "n0": summary.n0, "columns": cols, "fits": fits}


def cmd_indices(args) -> int:
    if (args.data is None) == (args.summaries is None):
        raise CliError("give either a CSV path or --summaries n,n0,mean")
    if args.summaries is not None:
        try:
            n_s, n0_s, mean_s = args.summaries.split(",")
            n, n0, mean = int(n_s), int(n0_s), float(mean_s)
        except ValueError:
            raise CliError(f"--summaries expects n,n0,mean; got {args.summaries!r}") from None
        sample = inflation_indices_summary(n, n0, mean, args.kappa3)
        summary = CountSummary.from_mean(n, n0, mean)
        inputs, sha, ts = [], None, stamp()
    else:
        y = np.array([r.num_claims for r in read_policies(args.data)])
        if y.size == 0:
            raise CliError(f"{args.data}: no data rows")
        sample = inflation_indices_sample(y)
        summary = CountSummary.from_counts(y)
        inputs, sha, ts = [str(args.data)], file_sha256(args.data), stamp(args.data)
    report = indices_report(summary, sample)
    report["converged"] = True
    report["manifest"] = RunManifest(command="indices", inputs=inputs, data_sha256=sha,
                                     timestamp=ts).to_dict()
    _emit(args, report, render_indices)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def _output_options(p):
    p.add_argument("--format", choices=("text", "json"), default="text",
                   help="what to print (default: aligned text)")
    p.add_argument("--output", "-o", help="write the printed report here instead of stdout")
    p.add_argument("--json", help="also write the JSON report to this path")


def _mcmc_options(p, iters=10_000, burnin=5_000):
    p.add_argument("--chains", type=_positive_int, default=3)
    p.add_argument("--iters", type=_positive_int, default=iters,
                   help="iterations per chain, burn-in included")
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--seed", type=int, default=None, help="default: $ZIPS_SEED or 0")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="zips",
        description="Zero-inflated power series count models: fit, compare, simulate, indices.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a (zero-inflated) power series regression")
    f.add_argument("data", help="policy CSV")
    f.add_argument("--family", default="poisson",
                   help="poisson, geometric, negbin, binomial or logarithmic")
    f.add_argument("--nuisance", type=float, default=None,
                   help="r for negbin, n for binomial")
    f.add_argument("--inflated", action="store_true")
    f.add_argument("--estimator", choices=("mle", "bayes"), default="mle")
    f.add_argument("--x-columns", type=_columns, default=list(COVARIATES),
                   help="comma-separated count-part covariates (default: all)")
    f.add_argument("--z-columns", type=_columns, default=None,
                   help="comma-separated zero-part covariates (default: --x-columns)")
    _mcmc_options(f)
    f.add_argument("--thin", type=_positive_int, default=1)
    f.add_argument("--omega-prior", type=_pair, default=(1.0, 1.0), metavar="B1,B2")
    f.add_argument("--theta-prior", type=_pair, default=(0.0, 0.0), metavar="A1,A2")
    f.add_argument("--bounds", type=_pair, default=(-1e5, 1e5), metavar="LO,HI")
    f.add_argument("--chains-csv", help="write kept draws to this CSV")
    _output_options(f)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="DIC/AIC/BIC table over several fits")
    c.add_argument("reports", nargs="*", help="JSON fit reports")
    c.add_argument("--data", help="policy CSV to fit the --model specs on")
    c.add_argument("--model", action="append",
                   help="[LABEL=]family[(nuisance)][:zi][:bayes]; repeatable")
    _mcmc_options(c)
    _output_options(c)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", help="write a synthetic policy portfolio")
    s.add_argument("out", help="CSV path to write")
    s.add_argument("--config", help="generator config (default: built-in motor-portfolio setup)")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=None, help="default: $ZIPS_SEED or 0")
    s.add_argument("--truth", help="truth sidecar path (default: OUT with .truth.json)")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("indices", help="zero-inflation measures and fitted columns")
    i.add_argument("data", nargs="?", help="policy CSV")
    i.add_argument("--summaries", help="n,n0,mean instead of a CSV")
    i.add_argument("--kappa3", type=float, default=None,
                   help="sample third central moment, with --summaries")
    _output_options(i)
    i.set_defaults(func=cmd_indices)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, SchemaError, DomainError, ValueError, OSError) as exc:
        print(f"zips {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
