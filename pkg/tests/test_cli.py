import json
import math
import re

import jsonschema
import numpy as np
import pytest

from zips import cli
from zips.report import load_schema
from zips.toolkit import GeneratorConfig, TruthModel, generate_portfolio, write_policies

PUBLISHED_INDICES = {
    "Poisson": (0.92983, 0.07276, 0.00000, 0.00000),
    "Geometric": (0.93218, 0.08941, 0.03470, 0.22886),
    "ZIP": (0.93180, 0.08573, 0.03000, 0.17832),
    "ZIG": (0.93186, 0.08705, 0.03000, 0.19640),
}


@pytest.fixture(autouse=True)
def fixed_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    monkeypatch.delenv("ZIPS_SEED", raising=False)


@pytest.fixture(scope="module")
def portfolio(tmp_path_factory):
    cfg = GeneratorConfig(truth=TruthModel(
        beta={"intercept": -1.2, "gender": 0.5, "veh_value": 0.1},
        gamma={"intercept": -0.3, "age_old": 0.8}))
    path = tmp_path_factory.mktemp("data") / "policies.csv"
    write_policies(generate_portfolio(cfg, 3000, 42), path)
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def validate(report):
    jsonschema.validate(report, load_schema())


def json_numbers(obj):
    if isinstance(obj, bool):
        return
    if isinstance(obj, (int, float)):
        yield obj
    elif isinstance(obj, dict):
        for v in obj.values():
            yield from json_numbers(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from json_numbers(v)


def assert_text_numbers_in_json(text, report):
    """Every decimal printed in the text appears in the JSON at full precision."""
    body = "\n".join(line for line in text.split("# manifest")[0].splitlines()
                     if not line.startswith("note:"))
    numbers = list(json_numbers(report))
    for token in re.findall(r"-?\d+\.\d+", body):
        digits = len(token.split(".")[1])
        value = float(token)
        assert any(round(v, digits) == value or abs(v - value) <= 0.5 * 10**-digits * (1 + 1e-9)
                   for v in numbers), token
    for v in numbers:
        if isinstance(v, float) and v != 0 and math.isfinite(v):
            assert float(repr(v)) == v  # round-trips, i.e. full double precision


class TestFit:
    def test_zip_mle_table(self, portfolio, capsys, tmp_path):
        js = tmp_path / "fit.json"
        code, out, _ = run(["fit", "--family", "poisson", "--inflated", "--estimator", "mle",
                            portfolio, "--json", js], capsys)
        assert code == 0
        assert out.startswith("ZIP: poisson zero-inflated model, MLE fit, n = 3000")
        assert "zero part (gamma)" in out and "count part (beta)" in out
        assert "Stars: ***" in out and "# manifest" in out
        report = json.loads(js.read_text())
        validate(report)
        assert report["converged"] is True
        assert [c["name"] for c in report["coefficients"]][:2] == ["intercept", "veh_value"]
        assert report["fit"]["k"] == 12
        assert report["manifest"]["timestamp"] == "2023-11-14T22:13:20Z"
        assert_text_numbers_in_json(out, report)

    def test_estimate_and_error_layout(self, portfolio, capsys):
        _, out, _ = run(["fit", portfolio, "--x-columns", "gender"], capsys)
        lines = out.splitlines()
        i = next(k for k, line in enumerate(lines) if line.startswith("gender"))
        assert re.search(r"\(\d+\.\d{4}\)$", lines[i + 1])

    def test_bayes_three_stars_and_determinism(self, portfolio, capsys, tmp_path):
        args = ["fit", "--family", "geometric", "--inflated", "--estimator", "bayes",
                "--chains", 3, "--iters", 10000, "--burnin", 5000, "--seed", 7,
                "--x-columns", "gender,veh_value", "--z-columns", "age_old", portfolio]
        code, out, _ = run(args + ["--json", tmp_path / "a.json"], capsys)
        run(args + ["--json", tmp_path / "b.json"], capsys)
        a = (tmp_path / "a.json").read_bytes()
        assert a == (tmp_path / "b.json").read_bytes()
        report = json.loads(a)
        validate(report)
        assert out.startswith("BZIGPS")
        assert code == (0 if report["converged"] else 3)
        for c in report["coefficients"]:
            lo, hi = c["intervals"]["0.99"]
            assert (c["stars"] == "***") == (lo > 0 or hi < 0)
        gender = next(c for c in report["coefficients"]
                      if c["block"] == "beta" and c["name"] == "gender")
        assert gender["stars"] == "***"
        assert report["fit"]["dic"] is not None
        assert "R-hat" in out and "DIC" in out
        assert_text_numbers_in_json(out, report)

    def test_json_to_stdout_and_chains_csv(self, portfolio, capsys, tmp_path):
        chains = tmp_path / "chains.csv"
        code, out, _ = run(["fit", portfolio, "--estimator", "bayes", "--iters", 300,
                            "--burnin", 100, "--chains", 2, "--x-columns", "gender",
                            "--format", "json", "--chains-csv", chains], capsys)
        report = json.loads(out)
        validate(report)
        assert chains.read_text().startswith("chain,iteration,beta:intercept,beta:gender,loglik")

    def test_seed_from_environment(self, portfolio, capsys, monkeypatch):
        monkeypatch.setenv("ZIPS_SEED", "123")
        _, out, _ = run(["fit", portfolio, "--estimator", "bayes", "--iters", 200,
                         "--burnin", 100, "--chains", 2, "--x-columns", "",
                         "--format", "json"], capsys)
        assert json.loads(out)["manifest"]["seed"] == 123

    def test_schema_mismatch(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("numclaims,veh_value,sex,age_young,age_old,veh_age_young,colour\n")
        code, _, err = run(["fit", bad], capsys)
        assert code == 1
        assert "missing columns ['gender']" in err and "unknown columns ['sex', 'colour']" in err

    def test_non_convergence_exit_status(self, portfolio, capsys, monkeypatch, tmp_path):
        real = cli.mle_regression
        monkeypatch.setattr(cli, "mle_regression",
                            lambda data, fam, infl: real(data, fam, infl, maxiter=1))
        js = tmp_path / "nc.json"
        code, out, _ = run(["fit", portfolio, "--inflated", "--json", js], capsys)
        assert code == 3
        assert "converged: NO" in out
        report = json.loads(js.read_text())
        validate(report)
        assert report["converged"] is False

    def test_unknown_column_is_usage_error(self, portfolio, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["fit", str(portfolio), "--x-columns", "colour"])
        assert exc.value.code == 2


class TestCompare:
    def _fit(self, path, capsys, tmp_path, name, *extra):
        js = tmp_path / f"{name}.json"
        run(["fit", path, "--json", js, *extra], capsys)
        return js

    def test_table_and_tie_rule(self, portfolio, capsys, tmp_path):
        p = self._fit(portfolio, capsys, tmp_path, "p")
        z = self._fit(portfolio, capsys, tmp_path, "z", "--inflated")
        code, out, _ = run(["compare", z, p, z, "--format", "json"], capsys)
        report = json.loads(out)
        validate(report)
        rows = report["rows"]
        assert [r["label"] for r in rows] == ["ZIP", "Poisson", "ZIP"]
        assert rows[0]["aic"] == rows[2]["aic"]
        best_aic = min(r["aic"] for r in rows)
        marked = [i for i, r in enumerate(rows) if r["lowest"]["aic"]]
        assert len(marked) == 1 and rows[marked[0]]["aic"] == best_aic
        if rows[0]["aic"] == best_aic:
            assert marked == [0]
        assert not any(r["lowest"]["dic"] for r in rows)

    def test_identical_rows_mark_first(self, portfolio, capsys, tmp_path):
        p = self._fit(portfolio, capsys, tmp_path, "p")
        code, out, _ = run(["compare", p, p], capsys)
        assert code == 0
        body = out.splitlines()[2:4]
        assert body[0].split()[1:] == body[1].split()[1:] or body[0].count("<") == 2
        assert body[0].count("<") == 2 and body[1].count("<") == 0

    def test_refuses_mixed_datasets(self, portfolio, capsys, tmp_path):
        other = tmp_path / "other.csv"
        write_policies(generate_portfolio(GeneratorConfig(), 500, 1), other)
        a = self._fit(portfolio, capsys, tmp_path, "a")
        b = self._fit(other, capsys, tmp_path, "b")
        code, _, err = run(["compare", a, b], capsys)
        assert code == 1 and "different datasets" in err

    def test_needs_two(self, portfolio, capsys, tmp_path):
        a = self._fit(portfolio, capsys, tmp_path, "a")
        code, _, err = run(["compare", a], capsys)
        assert code == 1

    def test_six_model_roster(self, portfolio, capsys):
        specs = ["poisson", "negbin(1.5)", "poisson:zi", "negbin(1.5):zi",
                 "geometric:zi:bayes", "poisson:zi:bayes"]
        argv = ["compare", "--data", portfolio, "--iters", 400, "--burnin", 200, "--chains", 2]
        for s in specs:
            argv += ["--model", s]
        code, out, _ = run(argv, capsys)
        labels = [line[:18].strip() for line in out.splitlines()[2:8]]
        assert labels == ["Poisson", "Negative Binomial", "ZIP", "ZINB", "BZIGPS", "BZIPS"]

    def test_model_spec_parsing(self):
        assert cli.parse_model_spec("ZINB=negbin(2):zi") == {
            "label": "ZINB", "family": "negbin", "nuisance": 2.0, "inflated": True,
            "estimator": "mle"}
        with pytest.raises(cli.CliError):
            cli.parse_model_spec("poisson:zz")

    def test_inflated_usually_wins_aic(self, tmp_path):
        cfg = GeneratorConfig(truth=TruthModel(beta={"intercept": -0.2, "gender": 0.3},
                                               gamma={"intercept": -0.4}))
        wins = 0
        for seed in range(50):
            path = tmp_path / f"s{seed}.csv"
            write_policies(generate_portfolio(cfg, 1500, seed), path)
            reports = [cli.fit_report(path, "poisson", None, infl, "mle", ["gender"], [],
                                      cli.PriorSpec(), None) for infl in (False, True)]
            rows = cli.compare_rows(reports)
            wins += rows[1]["lowest"]["aic"]
        assert wins >= 45


class TestSimulate:
    def test_contract(self, tmp_path, capsys):
        out = tmp_path / "out.csv"
        code, _, _ = run(["simulate", "--n", 67856, "--seed", 1, out], capsys)
        assert code == 0
        assert len(out.read_text().splitlines()) == 67857
        truth = json.loads((tmp_path / "out.truth.json").read_text())
        assert truth["n"] == 67856 and truth["seed"] == 1
        assert truth["config"]["truth"]["family"] == "poisson"

    def test_zero_rows_refused(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["simulate", "--n", "0", str(tmp_path / "x.csv")])
        assert exc.value.code == 2
        assert "positive integer" in capsys.readouterr().err

    def test_unwritable(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--n", 5, tmp_path / "missing" / "x.csv"], capsys)
        assert code == 1 and "error" in err

    def test_sidecar_recovery(self, tmp_path, capsys):
        cfg = tmp_path / "truth.cfg"
        cfg.write_text("[truth]\nfamily = poisson\n[truth.beta]\nintercept = -0.5\n"
                       "gender = 0.4\n[truth.gamma]\nintercept = -0.6\n")
        out = tmp_path / "sim.csv"
        run(["simulate", "--config", cfg, "--n", 20000, "--seed", 3, out], capsys)
        truth = json.loads((tmp_path / "sim.truth.json").read_text())["config"]["truth"]
        code, text, _ = run(["fit", out, "--inflated", "--x-columns", "gender",
                             "--z-columns", "", "--format", "json"], capsys)
        report = json.loads(text)
        for c in report["coefficients"]:
            true = truth[c["block"]][c["name"]]
            assert abs(c["estimate"] - true) < 4 * c["std_error"]


class TestIndices:
    def test_summaries_grid(self, capsys, tmp_path):
        js = tmp_path / "ind.json"
        code, out, _ = run(["indices", "--summaries", "67856,63232,0.07275", "--json", js],
                           capsys)
        assert code == 0
        report = json.loads(js.read_text())
        validate(report)
        cols = report["columns"]
        for name in ("Poisson", "Geometric"):
            got = [cols[name][k] for k in ("p0", "kappa3", "z_index", "kappa_index")]
            assert got == pytest.approx(PUBLISHED_INDICES[name], abs=1e-4)
        for name in ("ZIP", "ZIG"):
            got = [cols[name][k] for k in ("kappa3", "z_index", "kappa_index")]
            assert got == pytest.approx(PUBLISHED_INDICES[name][1:], rel=0.01)
        assert cols["ZIG"]["p0"] == pytest.approx(0.93186, abs=2e-4)
        assert cols["Sample"]["kappa3"] is None
        kappa_line = next(line for line in out.splitlines() if line.startswith("kappa3"))
        assert kappa_line.split()[1] == "—"
        assert report["fits"]["ZIG"]["omega"] < 0
        assert_text_numbers_in_json(out, report)

    def test_published_third_moment(self, capsys):
        _, out, _ = run(["indices", "--summaries", "67856,63232,0.07275", "--kappa3", 0.08757,
                         "--format", "json"], capsys)
        assert json.loads(out)["columns"]["Sample"]["kappa_index"] == pytest.approx(0.20367,
                                                                                   abs=1e-4)

    def test_csv_matches_summaries(self, portfolio, capsys):
        _, a, _ = run(["indices", portfolio, "--format", "json"], capsys)
        a = json.loads(a)
        y = np.loadtxt(portfolio, delimiter=",", skiprows=1, usecols=0)
        spec = f"{y.size},{int(np.sum(y == 0))},{float(y.mean())!r}"
        _, b, _ = run(["indices", "--summaries", spec, "--format", "json"], capsys)
        b = json.loads(b)
        for col in ("Poisson", "Geometric", "ZIP", "ZIG"):
            for key in ("p0", "kappa3", "z_index", "kappa_index"):
                assert a["columns"][col][key] == pytest.approx(b["columns"][col][key], rel=1e-12)
        assert a["columns"]["Sample"]["p0"] == b["columns"]["Sample"]["p0"]
        assert a["columns"]["Sample"]["kappa3"] is not None

    def test_inconsistent_summaries(self, capsys):
        code, _, err = run(["indices", "--summaries", "10,11,0.5"], capsys)
        assert code == 1 and "inconsistent" in err

    def test_needs_one_source(self, capsys):
        code, _, _ = run(["indices"], capsys)
        assert code == 1
