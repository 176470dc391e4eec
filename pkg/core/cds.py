"""
CDS Module - hedgekit.
Indices CDS (familles iTraxx et CDX) : facteurs = spreads (en points de base),
H diagonale des CDV01 signés par le sens de la protection, unité de notionnel 1 000 000.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence
import logging

import numpy as np

from core.errors import InvalidInput, UnitMismatch
from core.portfolio import (
    AssetClass,
    AssetClassConvention,
    Portfolio,
    Product,
    RiskModel,
    compute_exposure,
)
from utils.numerics import as_vector

logger = logging.getLogger(__name__)

CDS_UNIT_NOTIONAL = 1_000_000
SPREAD_UNIT = "bp"

_FAMILY_CURRENCY = {
    "ITRAXX": "EUR",
    "CDX": "USD",
}


class ProtectionSide(Enum):
    """Sens de la position : acheteur (H = +CDV01) ou vendeur (H = −CDV01) de protection."""
    BUYER = "protection_buyer"
    SELLER = "protection_seller"

    @property
    def sign(self) -> float:
        return 1.0 if self is ProtectionSide.BUYER else -1.0


@dataclass(frozen=True)
class CdsIndexProduct:
    """
    Indice CDS.

    Attributes:
        id: Identifiant (ex. 'ITRAXX-MAIN-S40')
        currency: EUR ou USD, cohérente avec la famille
        cdv01: Variation de prix par point de base et par unité de notionnel (> 0)
        side: Sens de la protection
        hedgeable: Utilisable comme instrument de couverture
    """
    id: str
    currency: str
    cdv01: float
    side: ProtectionSide = ProtectionSide.BUYER
    hedgeable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "side", ProtectionSide(self.side))
        if not (np.isfinite(self.cdv01) and self.cdv01 > 0.0):
            raise InvalidInput(
                f"cdv01 of {self.id} must be finite and positive, got {self.cdv01}",
                field=f"indices.{self.id}.cdv01",
            )
        if self.currency not in _FAMILY_CURRENCY.values():
            raise UnitMismatch(
                f"CDS index {self.id} must be quoted in EUR or USD, got {self.currency}",
                field=f"indices.{self.id}.currency",
            )
        expected = _FAMILY_CURRENCY.get(self.family)
        if expected is not None and expected != self.currency:
            raise UnitMismatch(
                f"{self.family} index {self.id} must be in {expected}, got {self.currency}",
                field=f"indices.{self.id}.currency",
            )

    @property
    def family(self) -> Optional[str]:
        upper = self.id.upper()
        for family in _FAMILY_CURRENCY:
            if upper.startswith(family):
                return family
        return None

    @property
    def signed_cdv01(self) -> float:
        return self.side.sign * self.cdv01

    @property
    def convention(self) -> AssetClassConvention:
        return AssetClassConvention.for_asset_class(AssetClass.CDS_INDEX, self.currency)


def _common_currency(products: Sequence[CdsIndexProduct]) -> str:
    currencies = sorted({p.currency for p in products})
    if len(currencies) != 1:
        raise UnitMismatch(f"CDS indices mix currencies {currencies}", field="indices")
    return currencies[0]


def cds_portfolio(products: Sequence[CdsIndexProduct], notionals, prices=None) -> Portfolio:
    """
    Portefeuille d'indices CDS (notionnels en unités de 1 000 000 de devise).

    Args:
        products: Indices
        notionals: N (longueur n)
        prices: Prix par unité de notionnel (défaut 0)
    """
    products = list(products)
    n = len(products)
    prices = np.zeros(n) if prices is None else as_vector(prices, "prices", n)
    return Portfolio(
        tuple(Product(p.id, p.convention, p.hedgeable) for p in products),
        as_vector(notionals, "notionals", n),
        prices,
    )


def build_cds_risk_model(products: Sequence[CdsIndexProduct], spread_cov, notionals) -> RiskModel:
    """
    Modèle de risque des indices CDS : facteurs = invariants (spreads),
    H = diag(CDV01 signés), r = H·N en devise par point de base.

    Args:
        products: n indices
        spread_cov: Covariance n×n des spreads (bp²)
        notionals: N (longueur n)

    Returns:
        RiskModel carré

    Raises:
        NonSymmetricCov: Covariance asymétrique
        UnitMismatch: Devises mélangées
    """
    products = list(products)
    if not products:
        raise InvalidInput("no CDS index given", field="indices")
    currency = _common_currency(products)
    sensitivity = np.diag([p.signed_cdv01 for p in products])
    notionals = as_vector(notionals, "notionals", len(products))
    logger.info(f"CDS risk model: {len(products)} indices in {currency}")
    return RiskModel(
        factor_names=tuple(f"spread_{p.id}" for p in products),
        exposure=compute_exposure(sensitivity, notionals),
        sensitivity=sensitivity,
        covariance=spread_cov,
        exposure_unit=products[0].convention.exposure_unit(SPREAD_UNIT),
    )


def supports_diagonal_path(risk_model: RiskModel) -> bool:
    """Chemin diagonal : C et H sans termes hors diagonale (exactement) et H > 0."""
    H, C = risk_model.sensitivity, risk_model.covariance
    if H.shape[0] != H.shape[1]:
        return False
    off_diagonal = np.any(H - np.diag(np.diag(H))) or np.any(C - np.diag(np.diag(C)))
    return not off_diagonal and bool(np.all(np.diag(H) > 0.0)) and bool(np.all(np.diag(C) > 0.0))
