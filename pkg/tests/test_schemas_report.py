"""Tests of the JSON input schemas and of the report exporter."""

import hashlib
import json

import numpy as np
import pytest
from pydantic import ValidationError as SchemaError

from core.bonds import price_bond
from core.hedger import CostSpec, get_hedger
from core.portfolio import Product, restrict_to_hedge_universe
from core.report import get_report_exporter, notional_unit_label
from core.schemas import (
    BondFile,
    CdsFile,
    CostsFile,
    HedgeReport,
    PortfolioFile,
    RiskModelFile,
)


def load(schema, fixtures_dir, name):
    return schema.model_validate_json((fixtures_dir / name).read_text(encoding="utf-8"))


def test_fixture_files_validate(fixtures_dir):
    portfolio = load(PortfolioFile, fixtures_dir, "identity_portfolio.json").to_portfolio()
    risk_model = load(RiskModelFile, fixtures_dir, "identity_riskmodel.json").to_risk_model()
    assert portfolio.product_ids == ["EQ-A", "EQ-B"]
    np.testing.assert_array_equal(risk_model.exposure, [1.0, -2.0])

    costs = load(CostsFile, fixtures_dir, "asymmetric_costs.json")
    assert costs.c is None
    assert costs.c_plus == [0.01, 0.02]

    bonds = load(BondFile, fixtures_dir, "bonds.json")
    assert bonds.bonds[0].spread == 0.002
    assert bonds.bonds[2].market_price == 98.8

    cds = load(CdsFile, fixtures_dir, "cds.json")
    assert cds.indices[1].to_product().cdv01 == 380.0


def test_missing_spread_is_calibrated(fixtures_dir):
    bonds = load(BondFile, fixtures_dir, "bonds.json")
    curve = bonds.curve.to_curve()
    calibrated = bonds.to_bonds(curve)[2]
    assert calibrated.id == "BTP-6M"
    assert not calibrated.hedgeable
    assert price_bond(calibrated, curve) == pytest.approx(98.8, abs=1e-8)


def test_unknown_field_rejected():
    with pytest.raises(SchemaError) as excinfo:
        CostsFile.model_validate({"schema_version": "1.0", "c": [0.1], "typo": 1})
    assert excinfo.value.errors()[0]["loc"] == ("typo",)


def test_unsupported_schema_version():
    with pytest.raises(SchemaError) as excinfo:
        CostsFile.model_validate({"schema_version": "9.9", "c": [0.1]})
    assert excinfo.value.errors()[0]["loc"] == ("schema_version",)


def test_error_location_names_the_field():
    payload = {
        "products": [{"id": "A", "asset_class": "Equity"}],
        "notionals": ["x"],
        "prices": [1.0],
    }
    with pytest.raises(SchemaError) as excinfo:
        PortfolioFile.model_validate(payload)
    assert excinfo.value.errors()[0]["loc"] == ("notionals", 0)


def test_length_mismatch_rejected():
    payload = {
        "factors": ["f1", "f2"],
        "exposure": [1.0],
        "sensitivity": [[1.0], [1.0]],
        "covariance": [[1.0, 0.0], [0.0, 1.0]],
    }
    with pytest.raises(SchemaError) as excinfo:
        RiskModelFile.model_validate(payload)
    assert excinfo.value.errors()[0]["loc"] == ("exposure",)


def test_costs_need_a_layout():
    with pytest.raises(SchemaError):
        CostsFile.model_validate({"c_plus": [0.1]})
    with pytest.raises(SchemaError):
        CostsFile.model_validate({"c_plus": [0.1], "c_minus": [0.1, 0.2]})


def test_bond_entry_accepts_lambda_alias():
    bonds = BondFile.model_validate({
        "curve": {"betas": [0.01, 0.0, 0.0]},
        "bonds": [{"id": "A", "cashflows": [[100.0, 1.0]], "lambda": 0.01}],
    })
    assert bonds.bonds[0].spread == 0.01
    assert bonds.curve.theta == 2.0


def test_risk_model_file_round_trip(identity_model):
    exported = RiskModelFile.from_risk_model(identity_model)
    restored = RiskModelFile.model_validate_json(exported.model_dump_json()).to_risk_model()
    np.testing.assert_array_equal(restored.sensitivity, identity_model.sensitivity)
    assert restored.factor_names == identity_model.factor_names


def test_hedge_report_round_trip(fixtures_dir):
    portfolio = load(PortfolioFile, fixtures_dir, "identity_portfolio.json").to_portfolio()
    risk_model = load(RiskModelFile, fixtures_dir, "identity_riskmodel.json").to_risk_model()
    restricted, universe = restrict_to_hedge_universe(risk_model, portfolio)
    costs = CostSpec.asymmetric([0.01, 0.02], [0.015, 0.01], 0.5)
    result = get_hedger().solve_asymmetric(restricted, costs)

    exporter = get_report_exporter()
    inputs = exporter.digests({"portfolio": fixtures_dir / "identity_portfolio.json", "costs": None})
    report = exporter.build_hedge_report(result, portfolio, risk_model, inputs, universe, costs)

    text = exporter.render(report)
    restored = HedgeReport.model_validate_json(text)
    assert restored.mode == "asymmetric"
    assert restored.lambda_c == 0.5
    assert [t.product_id for t in restored.trades] == ["EQ-A", "EQ-B"]
    assert [t.trade for t in restored.trades] == [float(x) for x in result.trades]
    assert restored.trades[0].notional_unit == "shares"
    assert restored.currency == "EUR"
    assert restored.lambda0_admissible == pytest.approx((0.0, 2.0))
    assert set(restored.inputs) == {"portfolio"}


def test_export_to_file(tmp_path, fixtures_dir):
    exporter = get_report_exporter()
    report = load(CostsFile, fixtures_dir, "symmetric_costs.json")
    out = tmp_path / "nested" / "costs.json"
    text = exporter.export(report, out)
    assert json.loads(out.read_text(encoding="utf-8")) == json.loads(text)

    dumped = exporter.export_dict({"P": [[1.0]]}, tmp_path / "qp.json", "1.0")
    assert json.loads(dumped.read_text(encoding="utf-8")) == {"schema_version": "1.0", "P": [[1.0]]}


def test_digest_is_sha256_of_raw_bytes(fixtures_dir):
    path = fixtures_dir / "cds.json"
    digests = get_report_exporter().digests({"cds": path})
    assert digests["cds"] == hashlib.sha256(path.read_bytes()).hexdigest()


def test_cds_notional_unit_label(fixtures_dir):
    product = load(CdsFile, fixtures_dir, "cds.json").indices[0].to_product()
    label = notional_unit_label(Product(product.id, product.convention))
    assert label == "1000000 EUR"
