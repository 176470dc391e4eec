"""
Bonds Module - hedgekit.
Obligations d'État : prix pied de coupon inclus (dirty) par actualisation continue
sur une courbe zéro-coupon à fonctions de base, Jacobienne analytique des prix
par rapport aux facteurs (β de la courbe, spreads idiosyncratiques λ) et modèle de risque.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np
import scipy.optimize

from config.manager import get_config
from core.errors import CalibrationFailure, DimensionMismatch, InvalidBond, InvalidInput, UnitMismatch
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

BasisFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Bond:
    """
    Obligation définie par ses flux.

    Attributes:
        id: Identifiant
        cashflows: Couples (montant en devise, temps jusqu'au flux en années)
        idiosyncratic_spread: λ (taux annuel)
        currency: Devise des flux
        hedgeable: Utilisable comme instrument de couverture
    """
    id: str
    cashflows: Tuple[Tuple[float, float], ...]
    idiosyncratic_spread: float = 0.0
    currency: str = "EUR"
    hedgeable: bool = True

    def __post_init__(self):
        flows = tuple((float(a), float(t)) for a, t in self.cashflows)
        object.__setattr__(self, "cashflows", flows)
        field = f"bonds.{self.id}.cashflows"
        if not flows:
            raise InvalidBond(f"bond {self.id} has no cashflow", field=field)
        amounts = np.array([a for a, _ in flows])
        times = np.array([t for _, t in flows])
        if not np.all(np.isfinite(amounts)) or not np.all(np.isfinite(times)):
            raise InvalidBond(f"bond {self.id} has non-finite cashflows", field=field)
        if np.any(times <= 0.0):
            raise InvalidBond(f"bond {self.id} has non-positive cashflow times", field=field)
        if np.any(np.diff(times) <= 0.0):
            raise InvalidBond(f"bond {self.id} cashflow times must be strictly increasing", field=field)
        if not np.isfinite(self.idiosyncratic_spread):
            raise InvalidBond(f"bond {self.id} has a non-finite spread", field=f"bonds.{self.id}.lambda")

    @property
    def amounts(self) -> np.ndarray:
        return np.array([a for a, _ in self.cashflows])

    @property
    def times(self) -> np.ndarray:
        return np.array([t for _, t in self.cashflows])

    def with_spread(self, spread: float) -> "Bond":
        return Bond(self.id, self.cashflows, spread, self.currency, self.hedgeable)


def nelson_siegel_basis(theta: Optional[float] = None) -> Tuple[BasisFunction, BasisFunction, BasisFunction]:
    """
    Base de Nelson–Siegel {1, (1−e^{−u})/u, (1−e^{−u})/u − e^{−u}}, u = τ/θ,
    prolongée par continuité en τ = 0 (valeurs 1, 1, 0).

    Args:
        theta: Échelle de temps en années (défaut BondConfig.theta)

    Returns:
        Trois fonctions vectorisées
    """
    theta = get_config().bonds.theta if theta is None else float(theta)
    if theta <= 0.0:
        raise InvalidInput(f"theta must be positive, got {theta}", field="curve.theta")

    def level(tau):
        return np.ones_like(np.asarray(tau, dtype=np.float64))

    def slope(tau):
        u = np.asarray(tau, dtype=np.float64) / theta
        safe = np.where(u == 0.0, 1.0, u)
        return np.where(u == 0.0, 1.0, -np.expm1(-safe) / safe)

    def curvature(tau):
        u = np.asarray(tau, dtype=np.float64) / theta
        return slope(tau) - np.exp(-u)

    return level, slope, curvature


@dataclass(frozen=True, eq=False)
class YieldCurveModel:
    """
    Courbe zéro-coupon y(τ) = Σₖ βₖ fₖ(τ).

    Attributes:
        basis: d fonctions de base vectorisées
        betas: Coefficients β (longueur d)
        theta: Échelle de la base de Nelson–Siegel, si c'en est une
    """
    basis: Tuple[BasisFunction, ...]
    betas: np.ndarray
    theta: Optional[float] = None

    def __post_init__(self):
        basis = tuple(self.basis)
        if not basis:
            raise InvalidInput("yield curve needs at least one basis function", field="curve.betas")
        object.__setattr__(self, "basis", basis)
        betas = as_vector(self.betas, "curve.betas", len(basis))
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

        grid = np.linspace(0.0, get_config().bonds.max_basis_horizon, 401)
        if not np.all(np.isfinite(self.basis_matrix(grid))):
            raise InvalidInput("basis functions must be finite on the curve horizon", field="curve")

    @property
    def d(self) -> int:
        return len(self.basis)

    @classmethod
    def nelson_siegel(cls, betas, theta: Optional[float] = None) -> "YieldCurveModel":
        theta = get_config().bonds.theta if theta is None else float(theta)
        return cls(nelson_siegel_basis(theta), betas, theta)

    @classmethod
    def flat(cls, rate: float) -> "YieldCurveModel":
        """Courbe plate : base constante f₁ ≡ 1, β₁ = rate."""
        return cls((nelson_siegel_basis()[0],), [rate])

    def basis_matrix(self, times) -> np.ndarray:
        """Matrice (len(times), d) des fₖ(τ)."""
        times = np.asarray(times, dtype=np.float64)
        return np.column_stack([np.broadcast_to(f(times), times.shape) for f in self.basis])

    def zero_rate(self, times) -> np.ndarray:
        return self.basis_matrix(times) @ self.betas


def _discounted_cashflows(bond: Bond, curve: YieldCurveModel) -> np.ndarray:
    times = bond.times
    return bond.amounts * np.exp(-(curve.zero_rate(times) + bond.idiosyncratic_spread) * times)


def price_bond(bond: Bond, curve: YieldCurveModel) -> float:
    """
    Prix dirty Σⱼ cⱼ·exp(−(y(τⱼ) + λ)·τⱼ).

    Args:
        bond: Obligation
        curve: Courbe zéro-coupon

    Returns:
        Prix en devise
    """
    return float(np.sum(_discounted_cashflows(bond, curve)))


def bond_jacobian(bonds: Sequence[Bond], curve: YieldCurveModel) -> np.ndarray:
    """
    Jacobienne (d+n)×n des prix par rapport aux facteurs, orientation facteurs × produits.

    Bloc β : ∂Pᵢ/∂βⱼ = −Σₖ τₖ cₖ e^{−(y+λ)τₖ} fⱼ(τₖ).
    Bloc λ : ∂Pᵢ/∂λᵢ = −Σₖ τₖ cₖ e^{−(y+λ)τₖ}, zéros exacts hors diagonale.

    Args:
        bonds: n obligations
        curve: Courbe

    Returns:
        Matrice (d+n)×n
    """
    bonds = list(bonds)
    if not bonds:
        raise InvalidBond("bond list is empty", field="bonds")
    d, n = curve.d, len(bonds)
    jacobian = np.zeros((d + n, n))
    for i, bond in enumerate(bonds):
        weighted = -bond.times * _discounted_cashflows(bond, curve)
        jacobian[:d, i] = curve.basis_matrix(bond.times).T @ weighted
        jacobian[d + i, i] = np.sum(weighted)
    return jacobian


def bond_factor_names(bonds: Sequence[Bond], curve: YieldCurveModel) -> List[str]:
    """beta_1..beta_d puis lambda_<id> par obligation."""
    return [f"beta_{k + 1}" for k in range(curve.d)] + [f"lambda_{b.id}" for b in bonds]


def _common_currency(bonds: Sequence[Bond]) -> str:
    currencies = sorted({b.currency for b in bonds})
    if len(currencies) != 1:
        raise UnitMismatch(f"bonds mix currencies {currencies}", field="bonds")
    return currencies[0]


def bond_portfolio(bonds: Sequence[Bond], curve: YieldCurveModel, notionals) -> Portfolio:
    """Portefeuille obligataire : notionnels en nombre de titres, prix dirty du modèle."""
    bonds = list(bonds)
    convention = AssetClassConvention.for_asset_class(AssetClass.BOND, _common_currency(bonds))
    products = tuple(Product(b.id, convention, b.hedgeable) for b in bonds)
    prices = [price_bond(b, curve) for b in bonds]
    return Portfolio(products, as_vector(notionals, "notionals", len(bonds)), prices)


def build_bond_risk_model(
    bonds: Sequence[Bond], curve: YieldCurveModel, factor_cov, notionals
) -> RiskModel:
    """
    Modèle de risque obligataire : les prix sont les invariants (∂g/∂X = I),
    H = bond_jacobian, r = H·N.

    Args:
        bonds: n obligations
        curve: Courbe
        factor_cov: Covariance (d+n)×(d+n) des facteurs
        notionals: N (longueur n)

    Returns:
        RiskModel
    """
    bonds = list(bonds)
    jacobian = bond_jacobian(bonds, curve)
    notionals = as_vector(notionals, "notionals", len(bonds))
    factor_cov = np.asarray(factor_cov, dtype=np.float64)
    if factor_cov.shape != (jacobian.shape[0], jacobian.shape[0]):
        raise DimensionMismatch(
            f"factor covariance has shape {factor_cov.shape}, expected {(jacobian.shape[0],) * 2}",
            field="covariance",
        )
    convention = AssetClassConvention.for_asset_class(AssetClass.BOND, _common_currency(bonds))
    logger.info(f"Bond risk model: {len(bonds)} bonds, {curve.d} curve factors")
    return RiskModel(
        factor_names=tuple(bond_factor_names(bonds, curve)),
        exposure=compute_exposure(jacobian, notionals),
        sensitivity=jacobian,
        covariance=factor_cov,
        exposure_unit=convention.exposure_unit("rate"),
    )


def calibrate_spread(bond: Bond, curve: YieldCurveModel, market_price: float) -> float:
    """
    Spread idiosyncratique λ égalisant prix modèle et prix de marché (bissection).

    Args:
        bond: Obligation (son λ est ignoré)
        curve: Courbe
        market_price: Prix dirty observé

    Returns:
        λ calibré

    Raises:
        CalibrationFailure: Pas de changement de signe sur l'intervalle, ou précision insuffisante
    """
    config = get_config().bonds
    low, high = config.calibration_bracket

    def mispricing(spread: float) -> float:
        return price_bond(bond.with_spread(spread), curve) - market_price

    f_low, f_high = mispricing(low), mispricing(high)
    if f_low == 0.0:
        return low
    if f_high == 0.0:
        return high
    if np.sign(f_low) == np.sign(f_high):
        raise CalibrationFailure(
            f"market price {market_price} of bond {bond.id} is not bracketed by spreads in [{low}, {high}]"
        )

    spread = scipy.optimize.bisect(mispricing, low, high, xtol=1e-15, maxiter=200)
    error = abs(mispricing(spread))
    if error > config.calibration_tolerance * max(1.0, abs(market_price)):
        raise CalibrationFailure(f"spread calibration of bond {bond.id} left a price error of {error:.3e}")
    logger.info(f"Calibrated spread of bond {bond.id}: {spread:.10f}")
    return float(spread)
