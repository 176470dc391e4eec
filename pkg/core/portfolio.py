"""
Portfolio Module - hedgekit.
Types de base (portefeuille, conventions d'unités, modèle de risque, résultat de couverture)
et opérations d'exposition : valeur, poids, r = H·N, restriction à l'univers de couverture.

Orientation : H est stockée m×n (facteurs × produits), de sorte que r = H·N
et que l'exposition couverte vaut r + H·x.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from config.manager import get_config
from core.errors import (
    DimensionMismatch,
    EmptyHedgeUniverse,
    InvalidInput,
    NonSymmetricCov,
    NotPositiveDefinite,
    UnitMismatch,
    ZeroNetNotional,
)
from utils.numerics import as_matrix, as_vector, check_symmetric, is_positive_semidefinite

logger = logging.getLogger(__name__)


class AssetClass(Enum):
    """Classes d'actifs supportées."""
    EQUITY = "Equity"
    CDS_INDEX = "CdsIndex"
    BOND = "Bond"


class NotionalUnit(Enum):
    """
    Unité du notionnel. La valeur porte l'exposant de la devise.

    SHARES: nombre d'actions (sans dimension)
    CURRENCY_AMOUNT: montant en devise (montant protégé d'un CDS)
    FACE_VALUE_UNITS: nombre de titres d'une valeur faciale donnée (sans dimension)
    """
    SHARES = ("shares", 0)
    CURRENCY_AMOUNT = ("currency", 1)
    FACE_VALUE_UNITS = ("face_value_units", 0)

    @property
    def currency_power(self) -> int:
        return self.value[1]


class PriceUnit(Enum):
    """Unité du prix. La valeur porte l'exposant de la devise."""
    CURRENCY = ("currency", 1)
    PER_UNIT_NOTIONAL = ("per_unit_notional", 0)

    @property
    def currency_power(self) -> int:
        return self.value[1]


_EXPECTED_UNITS = {
    AssetClass.EQUITY: (NotionalUnit.SHARES, PriceUnit.CURRENCY),
    AssetClass.CDS_INDEX: (NotionalUnit.CURRENCY_AMOUNT, PriceUnit.PER_UNIT_NOTIONAL),
    AssetClass.BOND: (NotionalUnit.FACE_VALUE_UNITS, PriceUnit.CURRENCY),
}


@dataclass(frozen=True)
class AssetClassConvention:
    """
    Conventions d'unités d'une classe d'actifs.

    Attributes:
        asset_class: Classe d'actifs
        notional_unit: Unité du notionnel
        price_unit: Unité du prix
        currency: Code ISO de la devise
    """
    asset_class: AssetClass
    notional_unit: NotionalUnit
    price_unit: PriceUnit
    currency: str

    def __post_init__(self):
        expected = _EXPECTED_UNITS[self.asset_class]
        if (self.notional_unit, self.price_unit) != expected:
            raise UnitMismatch(
                f"{self.asset_class.value} expects notional {expected[0].value[0]} "
                f"and price {expected[1].value[0]}",
                field="asset_class",
            )
        if not check_unit_reduction(self):
            raise UnitMismatch(
                f"notional x price does not reduce to currency for {self.asset_class.value}",
                field="asset_class",
            )
        if len(self.currency) != 3 or not self.currency.isalpha() or not self.currency.isupper():
            raise UnitMismatch(f"invalid ISO currency code: {self.currency!r}", field="currency")

    @classmethod
    def for_asset_class(cls, asset_class: AssetClass, currency: str) -> "AssetClassConvention":
        """Construit la convention standard d'une classe d'actifs."""
        notional_unit, price_unit = _EXPECTED_UNITS[asset_class]
        return cls(asset_class, notional_unit, price_unit, currency)

    @property
    def value_unit(self) -> str:
        return self.currency

    def exposure_unit(self, factor_unit: str) -> str:
        """Unité de l'exposition r : devise par unité de facteur (ex. 'EUR/bp')."""
        return f"{self.currency}/{factor_unit}"


def check_unit_reduction(convention: AssetClassConvention) -> bool:
    """Vérifie que notionnel × prix se réduit à une devise."""
    return convention.notional_unit.currency_power + convention.price_unit.currency_power == 1


@dataclass(frozen=True)
class Product:
    """
    Produit négociable.

    Attributes:
        id: Identifiant unique dans le portefeuille
        convention: Conventions d'unités
        hedgeable: Le produit appartient-il à l'univers de couverture
    """
    id: str
    convention: AssetClassConvention
    hedgeable: bool = True


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Portfolio:
    """
    Portefeuille : produits ordonnés, notionnels nets N et prix P.
    Valeur V = NᵀP, toujours en devise.
    """
    products: Tuple[Product, ...]
    notionals: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        products = tuple(self.products)
        n = len(products)
        if n < 1:
            raise DimensionMismatch("portfolio must contain at least one product", field="products")
        object.__setattr__(self, "products", products)
        object.__setattr__(self, "notionals", _freeze(as_vector(self.notionals, "notionals", n)))
        object.__setattr__(self, "prices", _freeze(as_vector(self.prices, "prices", n)))

        ids = [p.id for p in products]
        if len(set(ids)) != n:
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidInput(f"duplicate product ids: {duplicates}", field="products")
        if not np.isfinite(portfolio_value(self)):
            raise InvalidInput("portfolio value is not finite", field="notionals")

    @property
    def n(self) -> int:
        return len(self.products)

    @property
    def product_ids(self) -> List[str]:
        return [p.id for p in self.products]

    @property
    def hedgeable_mask(self) -> np.ndarray:
        return np.array([p.hedgeable for p in self.products], dtype=bool)


@dataclass(frozen=True, eq=False)
class RiskModel:
    """
    Modèle de risque factoriel.

    Attributes:
        factor_names: Noms des m facteurs
        exposure: r (longueur m), devise par unité de facteur
        sensitivity: H (m×n), variation de r par unité de notionnel
        covariance: C (m×m), symétrisée à la construction, PSD
        exposure_unit: Unité de r si connue (ex. 'EUR/bp')
    """
    factor_names: Tuple[str, ...]
    exposure: np.ndarray
    sensitivity: np.ndarray
    covariance: np.ndarray
    exposure_unit: Optional[str] = None

    def __post_init__(self):
        names = tuple(self.factor_names)
        m = len(names)
        if m < 1:
            raise DimensionMismatch("risk model needs at least one factor", field="factors")
        object.__setattr__(self, "factor_names", names)
        object.__setattr__(self, "exposure", _freeze(as_vector(self.exposure, "exposure", m)))
        sensitivity = as_matrix(self.sensitivity, "sensitivity", (m, None))
        if sensitivity.shape[1] < 1:
            raise DimensionMismatch("sensitivity must have at least one column", field="sensitivity")
        object.__setattr__(self, "sensitivity", _freeze(sensitivity))

        config = get_config()
        covariance = as_matrix(self.covariance, "covariance", (m, m))
        covariance = check_symmetric(covariance, "covariance", error=NonSymmetricCov)
        if not is_positive_semidefinite(
            covariance, config.solver.psd_tolerance, config.solver.eigen_check_max_dim
        ):
            raise NotPositiveDefinite("covariance is not positive semidefinite", field="covariance")
        object.__setattr__(self, "covariance", _freeze(covariance))

    @property
    def m(self) -> int:
        return self.sensitivity.shape[0]

    @property
    def n(self) -> int:
        return self.sensitivity.shape[1]

    def gram(self) -> np.ndarray:
        """HᵀCH (n×n), symétrisée."""
        H, C = self.sensitivity, self.covariance
        gram = H.T @ C @ H
        return 0.5 * (gram + gram.T)

    def linear_term(self) -> np.ndarray:
        """HᵀC·r (longueur n)."""
        return self.sensitivity.T @ (self.covariance @ self.exposure)


@dataclass(frozen=True, eq=False)
class HedgeResult:
    """
    Résultat d'une couverture.

    Attributes:
        trades: Variations signées de notionnel x (longueur n)
        variance_before: rᵀCr (devise²)
        variance_after: (r+Hx)ᵀC(r+Hx) (devise²)
        cost_paid: Coût payé (devise)
        mode: Problème résolu ('unconstrained', 'symmetric', 'asymmetric', 'diagonal')
        solver_diagnostics: Résumé QpSolution ou {'solver': 'closed-form'}
    """
    trades: np.ndarray
    variance_before: float
    variance_after: float
    cost_paid: float
    mode: str
    solver_diagnostics: Dict[str, Any] = field(default_factory=lambda: {"solver": "closed-form"})

    @property
    def variance_reduction(self) -> float:
        if self.variance_before <= 0.0:
            return 0.0
        return 1.0 - self.variance_after / self.variance_before


@dataclass(frozen=True)
class HedgeUniverse:
    """
    Correspondance entre l'univers de couverture et le portefeuille complet.

    Attributes:
        indices: Indices (dans le portefeuille) des produits de couverture
        n_full: Nombre total de produits
    """
    indices: Tuple[int, ...]
    n_full: int

    def expand(self, trades: np.ndarray) -> np.ndarray:
        """Ré-étend un vecteur de trades restreint à la longueur n_full (zéros hors univers)."""
        trades = as_vector(trades, "trades", len(self.indices))
        full = np.zeros(self.n_full)
        full[list(self.indices)] = trades
        return full


def portfolio_value(portfolio: Portfolio) -> float:
    """
    Valeur du portefeuille V = Σᵢ NᵢPᵢ (devise).

    Args:
        portfolio: Portefeuille

    Returns:
        Valeur en devise
    """
    return float(np.dot(portfolio.notionals, portfolio.prices))


def portfolio_weights(portfolio: Portfolio) -> np.ndarray:
    """
    Poids w = N / (1ᵀN).

    Args:
        portfolio: Portefeuille

    Returns:
        Vecteur de poids (somme 1)

    Raises:
        ZeroNetNotional: Si |1ᵀN| < 1e-12·‖N‖₁
    """
    notionals = portfolio.notionals
    net = float(np.sum(notionals))
    if abs(net) < 1e-12 * float(np.sum(np.abs(notionals))) or net == 0.0:
        raise ZeroNetNotional(
            f"net notional {net:.3e} is zero; weights are undefined", field="notionals"
        )
    return notionals / net


def compute_exposure(sensitivity, notionals) -> np.ndarray:
    """
    Exposition r = H·N.

    Args:
        sensitivity: H (m×n)
        notionals: N (longueur n)

    Returns:
        r (longueur m)

    Raises:
        DimensionMismatch: Si H n'a pas n colonnes
    """
    H = as_matrix(sensitivity, "sensitivity")
    N = as_vector(notionals, "notionals")
    if H.shape[1] != N.shape[0]:
        raise DimensionMismatch(
            f"sensitivity has {H.shape[1]} columns but notionals has length {N.shape[0]}",
            field="notionals",
        )
    return H @ N


def compose_sensitivity(dg_dx, dh_df) -> np.ndarray:
    """
    Sensibilités composées H = (∂g/∂X · ∂h/∂F)ᵀ, stockées m×n.

    Args:
        dg_dx: Jacobienne de l'application invariants → prix (n×n)
        dh_df: Jacobienne de l'application facteurs → invariants (n×m)

    Returns:
        H (m×n)
    """
    dg = as_matrix(dg_dx, "dg_dx")
    dh = as_matrix(dh_df, "dh_df")
    if dg.shape[0] != dg.shape[1] or dg.shape[1] != dh.shape[0]:
        raise DimensionMismatch(
            f"cannot compose dg_dx {dg.shape} with dh_df {dh.shape}", field="dh_df"
        )
    return (dg @ dh).T


def build_risk_model(
    portfolio: Portfolio,
    dg_dx,
    dh_df,
    covariance,
    factor_names: Sequence[str],
    exposure_unit: Optional[str] = None,
) -> RiskModel:
    """
    Construit un modèle de risque à partir des Jacobiennes du modèle factoriel.

    Args:
        portfolio: Portefeuille (fournit N)
        dg_dx: ∂g/∂X (n×n)
        dh_df: ∂h/∂F (n×m)
        covariance: C = Cov(F) (m×m)
        factor_names: Noms des m facteurs
        exposure_unit: Unité de r

    Returns:
        RiskModel avec r = H·N
    """
    H = compose_sensitivity(dg_dx, dh_df)
    if H.shape[1] != portfolio.n:
        raise DimensionMismatch(
            f"sensitivity covers {H.shape[1]} products, portfolio has {portfolio.n}",
            field="dg_dx",
        )
    exposure = compute_exposure(H, portfolio.notionals)
    logger.debug(f"Built risk model with {H.shape[0]} factors and {H.shape[1]} products")
    return RiskModel(tuple(factor_names), exposure, H, covariance, exposure_unit)


def restrict_to_hedge_universe(
    risk_model: RiskModel, portfolio: Portfolio
) -> Tuple[RiskModel, HedgeUniverse]:
    """
    Restreint H aux produits couvrants ; r (calculée sur le portefeuille complet) est inchangée.

    Args:
        risk_model: Modèle de risque du portefeuille complet
        portfolio: Portefeuille (drapeaux hedgeable)

    Returns:
        Tuple (modèle restreint, correspondance d'indices)

    Raises:
        EmptyHedgeUniverse: Si aucun produit n'est couvrant
        DimensionMismatch: Si le modèle et le portefeuille diffèrent en taille
    """
    check_same_universe(risk_model, portfolio)
    indices = tuple(int(i) for i in np.flatnonzero(portfolio.hedgeable_mask))
    if not indices:
        raise EmptyHedgeUniverse("no product is flagged hedgeable", field="products")

    restricted = RiskModel(
        factor_names=risk_model.factor_names,
        exposure=risk_model.exposure.copy(),
        sensitivity=risk_model.sensitivity[:, list(indices)],
        covariance=risk_model.covariance.copy(),
        exposure_unit=risk_model.exposure_unit,
    )
    logger.info(f"Hedge universe restricted to {len(indices)} of {portfolio.n} products")
    return restricted, HedgeUniverse(indices, portfolio.n)


def portfolio_variance(risk_model: RiskModel, trades: Optional[np.ndarray] = None) -> float:
    """
    Variance (méthode delta) de la valeur du portefeuille après la variation x :
    (r+Hx)ᵀC(r+Hx). Sans x, retourne rᵀCr.
    """
    hedged = risk_model.exposure.copy()
    if trades is not None:
        hedged = hedged + risk_model.sensitivity @ as_vector(trades, "trades", risk_model.n)
    return float(max(hedged @ risk_model.covariance @ hedged, 0.0))


def variance_expansion(risk_model: RiskModel, trades: np.ndarray) -> float:
    """Développement rᵀCr + 2rᵀCHx + xᵀHᵀCHx de la variance couverte."""
    x = as_vector(trades, "trades", risk_model.n)
    r, C, H = risk_model.exposure, risk_model.covariance, risk_model.sensitivity
    return float(r @ C @ r + 2.0 * (r @ C @ H @ x) + x @ risk_model.gram() @ x)


def check_same_universe(risk_model: RiskModel, portfolio: Portfolio) -> None:
    """Vérifie que le modèle et le portefeuille portent le même nombre de produits."""
    if risk_model.n != portfolio.n:
        raise DimensionMismatch(
            f"risk model has {risk_model.n} product columns, portfolio has {portfolio.n}",
            field="sensitivity",
        )
