"""
Schemas Module - hedgekit.
Modèles pydantic des fichiers JSON d'entrée (portefeuille, modèle de risque, coûts,
covariance, obligations, indices CDS) et des rapports produits par la CLI.
Chaque fichier porte un champ schema_version.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from config.manager import get_config
from core.bonds import Bond, YieldCurveModel, calibrate_spread
from core.cds import CdsIndexProduct
from core.portfolio import AssetClass, AssetClassConvention, Portfolio, Product, RiskModel

SCHEMA_VERSION = "1.0"


class VersionedModel(BaseModel):
    """Base commune : champs inconnus refusés, version de schéma vérifiée."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: str = SCHEMA_VERSION

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, value: str) -> str:
        if value != get_config().system.schema_version:
            raise ValueError(f"unsupported schema_version {value!r}")
        return value


def _same_length(values: List[Any], info: ValidationInfo, reference: str) -> List[Any]:
    expected = info.data.get(reference)
    if expected is not None and len(values) != len(expected):
        raise ValueError(f"expected {len(expected)} entries (one per {reference} entry), got {len(values)}")
    return values


# ---------------------------------------------------------------------- #
# Portefeuille et modèle de risque
# ---------------------------------------------------------------------- #

class ProductEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    asset_class: Literal["Equity", "CdsIndex", "Bond"]
    currency: str = "EUR"
    hedgeable: bool = True


class PortfolioFile(VersionedModel):
    products: List[ProductEntry] = Field(min_length=1)
    notionals: List[float]
    prices: List[float]

    @field_validator("notionals", "prices")
    @classmethod
    def _one_per_product(cls, values: List[float], info: ValidationInfo) -> List[float]:
        return _same_length(values, info, "products")

    def to_portfolio(self) -> Portfolio:
        products = tuple(
            Product(
                p.id,
                AssetClassConvention.for_asset_class(AssetClass(p.asset_class), p.currency),
                p.hedgeable,
            )
            for p in self.products
        )
        return Portfolio(products, self.notionals, self.prices)


class RiskModelFile(VersionedModel):
    factors: List[str] = Field(min_length=1)
    exposure: List[float]
    sensitivity: List[List[float]]
    covariance: List[List[float]]
    exposure_unit: Optional[str] = None

    @field_validator("exposure", "sensitivity", "covariance")
    @classmethod
    def _one_row_per_factor(cls, values: List[Any], info: ValidationInfo) -> List[Any]:
        return _same_length(values, info, "factors")

    def to_risk_model(self) -> RiskModel:
        return RiskModel(
            tuple(self.factors), self.exposure, self.sensitivity, self.covariance, self.exposure_unit
        )

    @classmethod
    def from_risk_model(cls, risk_model: RiskModel) -> "RiskModelFile":
        return cls(
            factors=list(risk_model.factor_names),
            exposure=risk_model.exposure.tolist(),
            sensitivity=risk_model.sensitivity.tolist(),
            covariance=risk_model.covariance.tolist(),
            exposure_unit=risk_model.exposure_unit,
        )


class CostsFile(VersionedModel):
    c: Optional[List[float]] = None
    c_plus: Optional[List[float]] = None
    c_minus: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_layout(self) -> "CostsFile":
        if self.c is None and (self.c_plus is None or self.c_minus is None):
            raise ValueError("costs need either 'c' or both 'c_plus' and 'c_minus'")
        if self.c_plus is not None and self.c_minus is not None and len(self.c_plus) != len(self.c_minus):
            raise ValueError("'c_plus' and 'c_minus' must have equal length")
        return self


class CovarianceFile(VersionedModel):
    factors: Optional[List[str]] = None
    covariance: List[List[float]] = Field(min_length=1)

    @model_validator(mode="after")
    def _factor_count(self) -> "CovarianceFile":
        if self.factors is not None and len(self.factors) != len(self.covariance):
            raise ValueError("'factors' and 'covariance' must have the same number of rows")
        return self


# ---------------------------------------------------------------------- #
# Obligations
# ---------------------------------------------------------------------- #

class BondEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    id: str = Field(min_length=1)
    cashflows: List[Tuple[float, float]] = Field(min_length=1)
    spread: Optional[float] = Field(default=None, alias="lambda")
    market_price: Optional[float] = None
    currency: str = "EUR"
    hedgeable: bool = True

    @model_validator(mode="after")
    def _spread_source(self) -> "BondEntry":
        if self.spread is None and self.market_price is None:
            raise ValueError(f"bond {self.id} needs 'lambda' or 'market_price'")
        return self


class CurveEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    theta: float = Field(default=2.0, gt=0.0)
    betas: List[float] = Field(min_length=3, max_length=3)

    def to_curve(self) -> YieldCurveModel:
        return YieldCurveModel.nelson_siegel(self.betas, self.theta)


class BondFile(VersionedModel):
    bonds: List[BondEntry] = Field(min_length=1)
    curve: CurveEntry
    notionals: Optional[List[float]] = None

    @field_validator("notionals")
    @classmethod
    def _one_per_bond(cls, values: Optional[List[float]], info: ValidationInfo) -> Optional[List[float]]:
        return None if values is None else _same_length(values, info, "bonds")

    def to_bonds(self, curve: YieldCurveModel) -> List[Bond]:
        """Obligations du fichier ; λ absent ⇒ calibré sur market_price."""
        bonds = []
        for entry in self.bonds:
            bond = Bond(entry.id, tuple(entry.cashflows), entry.spread or 0.0, entry.currency, entry.hedgeable)
            if entry.spread is None:
                bond = bond.with_spread(calibrate_spread(bond, curve, entry.market_price))
            bonds.append(bond)
        return bonds


# ---------------------------------------------------------------------- #
# Indices CDS
# ---------------------------------------------------------------------- #

class CdsEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    currency: Literal["EUR", "USD"]
    cdv01: float
    side: Literal["protection_buyer", "protection_seller"] = "protection_buyer"
    hedgeable: bool = True

    def to_product(self) -> CdsIndexProduct:
        return CdsIndexProduct(self.id, self.currency, self.cdv01, self.side, self.hedgeable)


class CdsFile(VersionedModel):
    indices: List[CdsEntry] = Field(min_length=1)
    spread_cov: List[List[float]]
    notionals: Optional[List[float]] = None

    @field_validator("spread_cov")
    @classmethod
    def _one_row_per_index(cls, values: List[List[float]], info: ValidationInfo) -> List[List[float]]:
        return _same_length(values, info, "indices")

    @field_validator("notionals")
    @classmethod
    def _one_per_index(cls, values: Optional[List[float]], info: ValidationInfo) -> Optional[List[float]]:
        return None if values is None else _same_length(values, info, "indices")


# ---------------------------------------------------------------------- #
# Rapports
# ---------------------------------------------------------------------- #

class TradeEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    product_id: str
    trade: float
    notional_unit: str
    hedgeable: bool = True


class HedgeReport(VersionedModel):
    command: str = "hedge"
    inputs: Dict[str, str]
    mode: str
    lambda_c: float
    lambda_0: Optional[float] = None
    lambda0_admissible: Optional[Tuple[float, float]] = None
    regularization: Optional[str] = None
    literal_q: bool = False
    currency: Optional[str] = None
    exposure_unit: Optional[str] = None
    trades: List[TradeEntry]
    variance_before: float
    variance_after: float
    variance_reduction: float
    cost_paid: float
    solver_diagnostics: Dict[str, Any]


class PredictedEigenvalueEntry(BaseModel):
    value: float
    source: str


class SpectralEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    formulation: str
    regularization: str
    lambda_0: float
    eigenvalues_predicted: List[PredictedEigenvalueEntry]
    eigenvalues_direct: List[float]
    min_eigenvalue: float
    is_positive_definite: bool
    lambda0_admissible: Optional[Tuple[float, float]] = None
    multiset_match: bool
    diagnostic: Optional[str] = None


class SpectralReportFile(VersionedModel):
    command: str = "check-pd"
    inputs: Dict[str, str]
    lambda_0_requested: Optional[float] = None
    symmetric: SpectralEntry
    asymmetric: SpectralEntry


class ProductRiskEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    notional: float
    price: Optional[float] = None
    spread: Optional[float] = None


class RiskModelReport(VersionedModel):
    command: str
    inputs: Dict[str, str]
    products: List[ProductRiskEntry]
    risk_model: RiskModelFile
    variance: float
    hedge: Optional[HedgeReport] = None


class VarianceCheckRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    map: str
    mean: List[float]
    cov: List[List[float]]
    variance_delta: float
    variance_mc: float
    standard_error: float
    relative_error: Optional[float] = None
    within_3_standard_errors: bool
    note: Optional[str] = None


class VarianceCheckReport(VersionedModel):
    command: str = "variance-check"
    seed: int
    samples: int
    rows: List[VarianceCheckRow]


class ErrorDetail(BaseModel):
    type: str
    message: str
    field: Optional[str] = None


class ErrorReport(VersionedModel):
    error: ErrorDetail
