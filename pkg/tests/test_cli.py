"""End-to-end tests of the command-line interface."""

import json

import numpy as np
import pytest

import main
from core.hedger import Hedger
from core.schemas import HedgeReport, RiskModelReport, SpectralReportFile


@pytest.fixture
def run_cli(cli_workdir, capsys):
    def runner(*argv):
        code = main.main(["--no-color", *[str(a) for a in argv]])
        out = capsys.readouterr().out
        return code, json.loads(out) if out.strip() else None
    return runner


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_hedge_identity(run_cli, fixtures_dir):
    code, report = run_cli("hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json")
    assert code == main.EXIT_OK
    HedgeReport.model_validate(report)
    np.testing.assert_allclose([t["trade"] for t in report["trades"]], [-1.0, 2.0])
    assert report["mode"] == "unconstrained"
    assert report["variance_after"] == pytest.approx(0.0, abs=1e-12)
    assert set(report["inputs"]) == {"portfolio", "riskmodel"}


def test_hedge_asymmetric_without_cost_weight(run_cli, fixtures_dir):
    code, report = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "asymmetric", "--lambda-c", "0", "--costs", fixtures_dir / "asymmetric_costs.json",
    )
    assert code == main.EXIT_OK
    np.testing.assert_allclose([t["trade"] for t in report["trades"]], [-1.0, 2.0], atol=1e-6)
    assert report["solver_diagnostics"]["status"] == "Optimal"


def test_hedge_symmetric_dumps_qp(run_cli, fixtures_dir, cli_workdir):
    dump = cli_workdir / "qp.json"
    code, report = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "symmetric", "--lambda-c", "1", "--costs", fixtures_dir / "symmetric_costs.json",
        "--dump-qp", dump,
    )
    assert code == main.EXIT_OK
    assert report["regularization"] == "printed"
    assert report["cost_paid"] > 0.0

    qp = json.loads(dump.read_text(encoding="utf-8"))
    assert qp["schema_version"] == "1.0"
    assert qp["split"] == "AbsValue"
    assert np.array(qp["P"]).shape == (4, 4)


def test_hedge_writes_report_file(run_cli, fixtures_dir, cli_workdir):
    out = cli_workdir / "reports" / "hedge.json"
    code, stdout = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json", "--out", out,
    )
    assert code == main.EXIT_OK
    assert stdout is None
    HedgeReport.model_validate_json(out.read_text(encoding="utf-8"))


def test_malformed_portfolio(run_cli, fixtures_dir, cli_workdir):
    bad = write_json(cli_workdir / "bad.json", {
        "schema_version": "1.0",
        "products": [{"id": "A", "asset_class": "Equity"}, {"id": "B", "asset_class": "Equity"}],
        "notionals": ["x", 1.0],
        "prices": [1.0, 1.0],
    })
    code, report = run_cli("hedge", bad, fixtures_dir / "identity_riskmodel.json")
    assert code == main.EXIT_VALIDATION
    assert report["error"]["type"] == "SchemaError"
    assert report["error"]["field"] == "notionals.0"


def test_lambda0_out_of_range_is_a_validation_error(run_cli, fixtures_dir):
    code, report = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "asymmetric", "--lambda-0", "3",
    )
    assert code == main.EXIT_VALIDATION
    assert report["error"]["type"] == "Lambda0OutOfRange"
    assert report["error"]["field"] == "lambda_0"


def test_unknown_subcommand(run_cli):
    code, _ = run_cli("rebalance")
    assert code == 2


def test_check_pd_identity(run_cli, fixtures_dir):
    code, report = run_cli("check-pd", fixtures_dir / "identity_riskmodel.json")
    assert code == main.EXIT_OK
    SpectralReportFile.model_validate(report)
    for formulation in ("symmetric", "asymmetric"):
        entry = report[formulation]
        assert entry["lambda0_admissible"] == pytest.approx([0.0, 2.0])
        assert entry["is_positive_definite"]
        assert entry["multiset_match"]


def test_check_pd_outside_range(run_cli, fixtures_dir):
    code, report = run_cli("check-pd", fixtures_dir / "identity_riskmodel.json", "--lambda-0", "3")
    assert code == main.EXIT_OK
    assert not report["symmetric"]["is_positive_definite"]
    assert not report["asymmetric"]["is_positive_definite"]


def test_check_pd_exact_regularization(run_cli, fixtures_dir):
    code, report = run_cli("check-pd", fixtures_dir / "identity_riskmodel.json", "--exact-regularization")
    assert code == main.EXIT_OK
    assert report["symmetric"]["regularization"] == "exact"
    assert report["symmetric"]["lambda0_admissible"] == pytest.approx([0.0, 1.0])


def test_check_pd_rank_deficient(run_cli, cli_workdir):
    model = write_json(cli_workdir / "rank.json", {
        "factors": ["f1", "f2"],
        "exposure": [1.0, 1.0],
        "sensitivity": [[1.0, 1.0], [1.0, 1.0]],
        "covariance": [[1.0, 0.0], [0.0, 1.0]],
    })
    code, report = run_cli("check-pd", model)
    assert code == main.EXIT_OK
    assert report["asymmetric"]["lambda0_admissible"] is None
    assert report["asymmetric"]["diagnostic"].startswith("NotPositiveDefinite")


def test_bond_risk_single_bond(run_cli, fixtures_dir, cli_workdir):
    model_out = cli_workdir / "bond_model.json"
    code, report = run_cli(
        "bond-risk", fixtures_dir / "single_bond.json", fixtures_dir / "single_bond_cov.json",
        "--model-out", model_out,
    )
    assert code == main.EXIT_OK
    RiskModelReport.model_validate(report)
    assert report["risk_model"]["factors"] == ["beta_1", "beta_2", "beta_3", "lambda_ZC-1Y"]
    assert report["risk_model"]["sensitivity"][0][0] == pytest.approx(-94.1765, abs=1e-4)
    assert report["products"][0]["price"] == pytest.approx(94.1765, abs=1e-4)
    assert report["hedge"] is None
    assert json.loads(model_out.read_text(encoding="utf-8"))["factors"][0] == "beta_1"


def test_bond_risk_zero_notionals(run_cli, fixtures_dir):
    code, report = run_cli(
        "bond-risk", fixtures_dir / "single_bond.json", fixtures_dir / "single_bond_cov.json", "--notionals", "0",
    )
    assert code == main.EXIT_OK
    assert report["risk_model"]["exposure"] == [0.0, 0.0, 0.0, 0.0]
    assert report["variance"] == 0.0


def test_bond_risk_then_hedge(run_cli, fixtures_dir):
    code, report = run_cli(
        "bond-risk", fixtures_dir / "bonds.json", fixtures_dir / "bond_factor_cov.json",
        "--then-hedge", "--mode", "unconstrained", "--hedge-universe-only",
    )
    assert code == main.EXIT_OK
    validated = RiskModelReport.model_validate(report)
    hedge = validated.hedge
    assert hedge.variance_after < hedge.variance_before
    assert [t.product_id for t in hedge.trades] == ["OAT-2Y", "BUND-5Y", "BTP-6M"]
    assert hedge.trades[2].trade == 0.0
    assert report["products"][2]["spread"] != 0.0


def test_bond_risk_bad_notionals(run_cli, fixtures_dir):
    code, report = run_cli(
        "bond-risk", fixtures_dir / "bonds.json", fixtures_dir / "bond_factor_cov.json", "--notionals", "1,2",
    )
    assert code == main.EXIT_VALIDATION
    assert report["error"]["field"] == "notionals"


def test_bond_calibration_failure_exits_with_solver_code(run_cli, fixtures_dir, cli_workdir):
    bonds = write_json(cli_workdir / "unbracketed.json", {
        "curve": {"betas": [0.05, 0.0, 0.0]},
        "bonds": [{"id": "ZC", "cashflows": [[100.0, 1.0]], "market_price": 1.0e6}],
        "notionals": [1.0],
    })
    code, report = run_cli("bond-risk", bonds, fixtures_dir / "single_bond_cov.json")
    assert code == main.EXIT_SOLVER
    assert report["error"]["type"] == "CalibrationFailure"


def test_cds_risk_then_hedge(run_cli, fixtures_dir):
    code, report = run_cli("cds-risk", fixtures_dir / "cds.json", "--then-hedge")
    assert code == main.EXIT_OK
    assert report["risk_model"]["exposure"] == pytest.approx([900.0, -380.0])
    assert report["risk_model"]["exposure_unit"] == "EUR/bp"
    hedge = report["hedge"]
    assert hedge["mode"] == "diagonal"
    np.testing.assert_allclose([t["trade"] for t in hedge["trades"]], [-2.0, 1.0])
    assert hedge["trades"][0]["notional_unit"] == "1000000 EUR"


def test_variance_check_linear_and_square(run_cli):
    code, report = run_cli("variance-check", "--map", "linear", "--map", "square", "--samples", "1000000")
    assert code == main.EXIT_OK
    linear, square = report["rows"]
    assert linear["variance_delta"] == pytest.approx(4.8)
    assert linear["within_3_standard_errors"]
    assert square["variance_delta"] == 0.0
    assert square["relative_error"] is None
    assert square["note"]
    assert square["variance_mc"] == pytest.approx(2.0, abs=0.05)


def test_variance_check_is_reproducible(run_cli):
    _, first = run_cli("--seed", "5", "variance-check", "--map", "sin", "--samples", "10000")
    _, second = run_cli("--seed", "5", "variance-check", "--map", "sin", "--samples", "10000")
    assert first["seed"] == 5
    assert first["rows"][0]["variance_mc"] == second["rows"][0]["variance_mc"]


def test_seed_environment_variable_wins(run_cli, monkeypatch):
    monkeypatch.setenv("HEDGEKIT_SEED", "77")
    code, report = run_cli("--seed", "5", "variance-check", "--map", "sin", "--samples", "2000")
    assert code == main.EXIT_OK
    assert report["seed"] == 77


def test_variance_check_portfolio_map(run_cli, fixtures_dir):
    code, report = run_cli(
        "variance-check", "--map", "linear", "--riskmodel", fixtures_dir / "identity_riskmodel.json",
        "--samples", "50000",
    )
    assert code == main.EXIT_OK
    portfolio_row = report["rows"][1]
    assert portfolio_row["map"] == "portfolio-value"
    assert portfolio_row["variance_delta"] == pytest.approx(5.0)


def test_too_few_samples(run_cli):
    code, report = run_cli("variance-check", "--samples", "10")
    assert code == main.EXIT_VALIDATION
    assert report["error"]["field"] == "samples"


@pytest.mark.parametrize("flag", ["--paper-literal-q", "--literal-q"])
def test_hedge_symmetric_literal_q_moves_cost_into_x_block(run_cli, fixtures_dir, cli_workdir, flag):
    dump = cli_workdir / "qp.json"
    code, report = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "symmetric", "--lambda-c", "1", "--costs", fixtures_dir / "symmetric_costs.json",
        flag, "--dump-qp", dump,
    )
    assert code == main.EXIT_OK
    assert report["literal_q"] is True

    qp = json.loads(dump.read_text(encoding="utf-8"))
    lambda_0 = qp["lambda_0"]
    assert lambda_0 == pytest.approx(1.0)
    np.testing.assert_allclose(qp["q"], [2.0 + 0.05 * lambda_0, -4.0 + 0.05 * lambda_0, 0.0, 0.0])


def test_hedge_dump_uses_the_solved_assembly(run_cli, fixtures_dir, cli_workdir, monkeypatch):
    calls = []
    original = Hedger.assemble_asymmetric

    def counting(self, *args, **kwargs):
        calls.append(args)
        return original(self, *args, **kwargs)

    monkeypatch.setattr(Hedger, "assemble_asymmetric", counting)
    dump = cli_workdir / "qp.json"
    code, report = run_cli(
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "asymmetric", "--lambda-c", "1", "--costs", fixtures_dir / "asymmetric_costs.json",
        "--dump-qp", dump,
    )
    assert code == main.EXIT_OK
    assert len(calls) == 1
    assert json.loads(dump.read_text(encoding="utf-8"))["lambda_0"] == report["lambda_0"]


def test_each_run_reconfigures_logging(run_cli, fixtures_dir, cli_workdir):
    code, _ = run_cli("check-pd", fixtures_dir / "identity_riskmodel.json")
    assert code == main.EXIT_OK
    assert "Running command check-pd" in (cli_workdir / "hedgekit.log").read_text(encoding="utf-8")

    config = cli_workdir / "debug.yaml"
    config.write_text("system:\n  log_file: second.log\n", encoding="utf-8")
    code, _ = run_cli(
        "--config", config, "--log-level", "DEBUG",
        "hedge", fixtures_dir / "identity_portfolio.json", fixtures_dir / "identity_riskmodel.json",
        "--mode", "symmetric", "--lambda-c", "1", "--costs", fixtures_dir / "symmetric_costs.json",
    )
    assert code == main.EXIT_OK

    second = (cli_workdir / "second.log").read_text(encoding="utf-8")
    assert "Running command hedge" in second
    assert " - DEBUG - " in second
    assert "Running command hedge" not in (cli_workdir / "hedgekit.log").read_text(encoding="utf-8")
