"""
Hedger Module - hedgekit.
Assemble et résout les problèmes de couverture :
- sans coûts (forme fermée x = −(HᵀCH)⁻¹HᵀCr)
- coûts symétriques (variables (x, v), v ⪰ |x|)
- coûts asymétriques (variables (x⁺, x⁻) ⪰ 0)
- cas diagonal (problèmes scalaires découplés)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np
import scipy.linalg

from config.manager import HedgeConfig, get_config
from core.errors import (
    DimensionMismatch,
    Lambda0OutOfRange,
    NonPositiveDiagonal,
    NotDiagonal,
    NotPositiveDefinite,
    NumericalFailure,
    ValidationError,
)
from core.portfolio import HedgeResult, RiskModel, portfolio_variance
from core.qp_solver import QpProblem, QpSolver, QpSolution
from core.spectral import (
    REGULARIZATIONS,
    asymmetric_hessian,
    gram_eigenvalues,
    lambda0_range_asymmetric,
    lambda0_range_symmetric,
    symmetric_hessian,
)
from utils.numerics import as_vector


class CostMode(Enum):
    """Type de coûts de transaction."""
    NONE = "none"
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


class Split(Enum):
    """Découpage des variables du QP augmenté."""
    ABS_VALUE = "AbsValue"
    BUY_SELL = "BuySell"


@dataclass(frozen=True, eq=False)
class CostSpec:
    """
    Spécification des coûts de transaction.

    Attributes:
        mode: Aucun, symétrique (c) ou asymétrique (c⁺, c⁻)
        c: Coûts symétriques par unité de notionnel (≥ 0)
        c_plus: Coûts d'achat (≥ 0)
        c_minus: Coûts de vente (≥ 0)
        lambda_c: Trésorerie payée par unité de réduction de variance (≥ 0)
        lambda_0: Poids de couplage ; None = milieu de l'intervalle admissible
        regularization: Variante de P symétrique ; None = configuration
        literal_q: q symétrique sous forme imprimée ; None = configuration
    """
    mode: CostMode = CostMode.NONE
    c: Optional[np.ndarray] = None
    c_plus: Optional[np.ndarray] = None
    c_minus: Optional[np.ndarray] = None
    lambda_c: float = 0.0
    lambda_0: Optional[float] = None
    regularization: Optional[str] = None
    literal_q: Optional[bool] = None

    def __post_init__(self):
        mode = CostMode(self.mode)
        object.__setattr__(self, "mode", mode)

        if mode is CostMode.SYMMETRIC:
            if self.c is None:
                raise ValidationError("symmetric costs require c", field="c")
            object.__setattr__(self, "c", self._nonnegative(self.c, "c"))
        elif mode is CostMode.ASYMMETRIC:
            if self.c_plus is None or self.c_minus is None:
                raise ValidationError("asymmetric costs require c_plus and c_minus", field="c_plus")
            c_plus = self._nonnegative(self.c_plus, "c_plus")
            c_minus = self._nonnegative(self.c_minus, "c_minus", len(c_plus))
            object.__setattr__(self, "c_plus", c_plus)
            object.__setattr__(self, "c_minus", c_minus)

        if not (np.isfinite(self.lambda_c) and self.lambda_c >= 0.0):
            raise ValidationError(f"lambda_c must be finite and >= 0, got {self.lambda_c}", field="lambda_c")
        if self.lambda_0 is not None and not (np.isfinite(self.lambda_0) and self.lambda_0 >= 0.0):
            raise ValidationError(f"lambda_0 must be finite and >= 0, got {self.lambda_0}", field="lambda_0")
        if self.regularization is not None and self.regularization not in REGULARIZATIONS:
            raise ValidationError(
                f"regularization must be one of {REGULARIZATIONS}, got {self.regularization!r}",
                field="regularization",
            )

    @staticmethod
    def _nonnegative(values, name: str, length: Optional[int] = None) -> np.ndarray:
        vec = as_vector(values, name, length)
        if np.any(vec < 0.0):
            raise ValidationError(f"{name} must be nonnegative", field=name)
        vec.setflags(write=False)
        return vec

    @classmethod
    def symmetric(cls, c, lambda_c: float, lambda_0: Optional[float] = None, **kwargs) -> "CostSpec":
        return cls(CostMode.SYMMETRIC, c=c, lambda_c=lambda_c, lambda_0=lambda_0, **kwargs)

    @classmethod
    def asymmetric(cls, c_plus, c_minus, lambda_c: float, lambda_0: Optional[float] = None) -> "CostSpec":
        return cls(CostMode.ASYMMETRIC, c_plus=c_plus, c_minus=c_minus, lambda_c=lambda_c, lambda_0=lambda_0)

    @property
    def n(self) -> Optional[int]:
        """Nombre de produits couverts par les vecteurs de coûts (None sans coûts)."""
        if self.mode is CostMode.SYMMETRIC:
            return len(self.c)
        if self.mode is CostMode.ASYMMETRIC:
            return len(self.c_plus)
        return None


@dataclass(frozen=True, eq=False)
class AugmentedAssembly:
    """
    QP augmenté (2n variables) d'une formulation avec coûts.

    Attributes:
        P: 2n×2n symétrique
        q: 2n
        G: 2n×2n
        h: 2n (nul)
        split: (x, v) ou (x⁺, x⁻)
        lambda_0: λ₀ utilisé
        lambda0_admissible: Intervalle ouvert admissible
        regularization: Variante de P ('printed', 'exact', 'n/a' pour (x⁺, x⁻))
    """
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    split: Split
    lambda_0: float
    lambda0_admissible: Tuple[float, float]
    regularization: str = "n/a"

    @property
    def n(self) -> int:
        return self.q.shape[0] // 2

    def to_problem(self) -> QpProblem:
        return QpProblem(P=self.P, q=self.q, G=self.G, h=self.h)

    def to_dict(self) -> Dict[str, Any]:
        """Export JSON (style fichier de modèle de risque) pour inspection."""
        return {
            "split": self.split.value,
            "lambda_0": self.lambda_0,
            "lambda0_admissible": list(self.lambda0_admissible),
            "regularization": self.regularization,
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "G": self.G.tolist(),
            "h": self.h.tolist(),
        }


class Hedger:
    """
    Moteur de couverture : une instance porte la configuration et un solveur QP,
    aucun état propre à un appel.
    """

    def __init__(self, config: Optional[HedgeConfig] = None, solver: Optional[QpSolver] = None):
        """
        Initialise le moteur.

        Args:
            config: Section hedge (par défaut celle de get_config())
            solver: Solveur QP (par défaut QpSolver())
        """
        self.config = config or get_config().hedge
        self.solver = solver or QpSolver()
        self.logger = logging.getLogger(__name__)

    # ------------------------------------------------------------------ #
    # Sans coûts
    # ------------------------------------------------------------------ #

    def solve_unconstrained(self, risk_model: RiskModel) -> HedgeResult:
        """
        Couverture de variance minimale sans coûts : x = −(HᵀCH)⁻¹HᵀCr.

        Args:
            risk_model: Modèle de risque (univers de couverture)

        Returns:
            HedgeResult (diagnostics 'closed-form')

        Raises:
            NotPositiveDefinite: Si HᵀCH est singulière
        """
        gram_eigenvalues(risk_model.sensitivity, risk_model.covariance)
        gram = risk_model.gram()
        linear = risk_model.linear_term()

        if not np.any(risk_model.exposure):
            trades = np.zeros(risk_model.n)
        else:
            try:
                factor = scipy.linalg.cho_factor(gram, lower=True)
            except np.linalg.LinAlgError as e:
                raise NotPositiveDefinite(f"Cholesky of HᵀCH failed: {e}", field="sensitivity") from e
            trades = -scipy.linalg.cho_solve(factor, linear)

        residual = float(np.max(np.abs(gram @ trades + linear)))
        scale = float(np.max(np.abs(linear)))
        if residual > 1e-9 * max(scale, np.finfo(float).tiny) and scale > 0.0:
            self.logger.warning(
                f"Closed-form residual {residual:.3e} exceeds 1e-9 x {scale:.3e}; HᵀCH is ill-conditioned"
            )

        return self._result(
            risk_model, trades, 0.0, "unconstrained",
            {"solver": "closed-form", "residual": residual},
        )

    # ------------------------------------------------------------------ #
    # λ₀
    # ------------------------------------------------------------------ #

    def resolve_lambda0(self, admissible: Tuple[float, float], lambda_0: Optional[float]) -> float:
        """
        λ₀ effectif : milieu (lambda0_fraction) de l'intervalle par défaut,
        sinon validation stricte avec une marge lambda0_margin·λ′_min.

        Raises:
            Lambda0OutOfRange: Si λ₀ n'est pas strictement intérieur
        """
        low, high = admissible
        if lambda_0 is None:
            return low + self.config.lambda0_fraction * (high - low)

        margin = self.config.lambda0_margin * high
        if not (low + margin < lambda_0 < high - margin):
            raise Lambda0OutOfRange(
                f"lambda_0={lambda_0} is outside the admissible interval ({low}, {high})",
                field="lambda_0",
            )
        return float(lambda_0)

    def _regularization(self, costs: CostSpec) -> str:
        return costs.regularization or self.config.regularization

    def _literal_q(self, costs: CostSpec) -> bool:
        return self.config.literal_q if costs.literal_q is None else costs.literal_q

    def _check_cost_length(self, risk_model: RiskModel, costs: CostSpec):
        if costs.n is not None and costs.n != risk_model.n:
            raise DimensionMismatch(
                f"cost vectors have length {costs.n}, hedge universe has {risk_model.n} products",
                field="costs",
            )

    # ------------------------------------------------------------------ #
    # Coûts symétriques
    # ------------------------------------------------------------------ #

    def assemble_symmetric(self, risk_model: RiskModel, costs: CostSpec) -> AugmentedAssembly:
        """
        QP (x, v) des coûts symétriques :
        P = [[2HᵀCH − λ₀I, 0], [0, 2λ₀I]] (ou −2λ₀I en variante exacte),
        q = (2HᵀCr ; λ_c·c), G = [[I, −I], [−I, −I]], h = 0.

        Args:
            risk_model: Modèle de risque
            costs: CostSpec symétrique

        Returns:
            AugmentedAssembly

        Raises:
            Lambda0OutOfRange: λ₀ hors de l'intervalle admissible
            NotPositiveDefinite: HᵀCH singulière
        """
        if costs.mode is not CostMode.SYMMETRIC:
            raise ValidationError("assemble_symmetric needs symmetric costs", field="mode")
        self._check_cost_length(risk_model, costs)
        regularization = self._regularization(costs)
        admissible = lambda0_range_symmetric(
            risk_model.sensitivity, risk_model.covariance, regularization
        )
        lambda_0 = self.resolve_lambda0(admissible, costs.lambda_0)

        n = risk_model.n
        identity = np.eye(n)
        linear = 2.0 * risk_model.linear_term()
        if self._literal_q(costs):
            q = np.concatenate([linear + lambda_0 * costs.c, np.zeros(n)])
        else:
            q = np.concatenate([linear, costs.lambda_c * costs.c])

        return AugmentedAssembly(
            P=symmetric_hessian(risk_model.gram(), lambda_0, regularization),
            q=q,
            G=np.block([[identity, -identity], [-identity, -identity]]),
            h=np.zeros(2 * n),
            split=Split.ABS_VALUE,
            lambda_0=lambda_0,
            lambda0_admissible=admissible,
            regularization=regularization,
        )

    def solve_symmetric(
        self, risk_model: RiskModel, costs: CostSpec, assembly: Optional[AugmentedAssembly] = None
    ) -> HedgeResult:
        """
        Minimise la variance couverte plus λ_c·cᵀ|x| via le QP (x, v).

        Args:
            risk_model: Modèle de risque
            costs: CostSpec symétrique
            assembly: QP déjà assemblé pour (risk_model, costs), sinon assemblé ici

        Returns:
            HedgeResult, cost_paid = λ_c·cᵀv

        Raises:
            NumericalFailure: Statut non optimal ou v ⪰ |x| violé
        """
        if assembly is None:
            assembly = self.assemble_symmetric(risk_model, costs)
        solution, z = self._solve_assembly(assembly)
        n = risk_model.n
        trades, v = z[:n], z[n:]

        tolerance = 1e-8 * (1.0 + float(np.max(np.abs(trades))))
        if np.any(v < np.abs(trades) - tolerance):
            raise NumericalFailure("solution violates v >= |x|")

        cost_paid = float(costs.lambda_c * (costs.c @ v))
        return self._result(
            risk_model, trades, cost_paid, "symmetric",
            self._diagnostics(assembly, solution),
        )

    # ------------------------------------------------------------------ #
    # Coûts asymétriques
    # ------------------------------------------------------------------ #

    def assemble_asymmetric(self, risk_model: RiskModel, costs: CostSpec) -> AugmentedAssembly:
        """
        QP (x⁺, x⁻) des coûts asymétriques :
        P = [[2HᵀCH, −2HᵀCH + 2λ₀I], [−2HᵀCH + 2λ₀I, 2HᵀCH]],
        q = (2HᵀCr + λ_c·c⁺ ; −2HᵀCr + λ_c·c⁻), G = −I, h = 0.

        Raises:
            Lambda0OutOfRange: λ₀ hors de l'intervalle admissible
            NotPositiveDefinite: HᵀCH singulière
        """
        if costs.mode is not CostMode.ASYMMETRIC:
            raise ValidationError("assemble_asymmetric needs asymmetric costs", field="mode")
        self._check_cost_length(risk_model, costs)
        admissible = lambda0_range_asymmetric(risk_model.sensitivity, risk_model.covariance)
        lambda_0 = self.resolve_lambda0(admissible, costs.lambda_0)

        n = risk_model.n
        linear = 2.0 * risk_model.linear_term()
        return AugmentedAssembly(
            P=asymmetric_hessian(risk_model.gram(), lambda_0),
            q=np.concatenate([linear + costs.lambda_c * costs.c_plus, -linear + costs.lambda_c * costs.c_minus]),
            G=-np.eye(2 * n),
            h=np.zeros(2 * n),
            split=Split.BUY_SELL,
            lambda_0=lambda_0,
            lambda0_admissible=admissible,
        )

    def solve_asymmetric(
        self, risk_model: RiskModel, costs: CostSpec, assembly: Optional[AugmentedAssembly] = None
    ) -> HedgeResult:
        """
        Minimise la variance couverte plus λ_c·((c⁺)ᵀx⁺ + (c⁻)ᵀx⁻), x = x⁺ − x⁻.
        Un QP déjà assemblé par assemble_asymmetric peut être passé dans assembly.

        Raises:
            NumericalFailure: Statut non optimal ou achat et vente simultanés
        """
        if assembly is None:
            assembly = self.assemble_asymmetric(risk_model, costs)
        solution, z = self._solve_assembly(assembly)
        n = risk_model.n
        buys, sells = z[:n], z[n:]
        trades = buys - sells

        churn = float(np.max(buys * sells))
        bound = self.config.complementarity_tolerance * (1.0 + float(np.max(np.abs(trades))) ** 2)
        if churn > bound:
            raise NumericalFailure(
                f"buy/sell complementarity violated: max x+ * x- = {churn:.3e} > {bound:.3e}"
            )

        cost_paid = float(costs.lambda_c * (costs.c_plus @ buys + costs.c_minus @ sells))
        diagnostics = self._diagnostics(assembly, solution)
        diagnostics.update({
            "complementarity": churn,
            "buys": buys.tolist(),
            "sells": sells.tolist(),
        })
        return self._result(risk_model, trades, cost_paid, "asymmetric", diagnostics)

    # ------------------------------------------------------------------ #
    # Cas diagonal
    # ------------------------------------------------------------------ #

    def solve_diagonal(self, risk_model: RiskModel, buy_costs, sell_costs, lambda_c: float) -> HedgeResult:
        """
        Problèmes scalaires découplés (C et H diagonales, Hᵢ > 0) :
        xᵢ* = −(2CᵢrᵢHᵢ + λ_c·cᵢ) / (2CᵢHᵢ²),
        cᵢ = coût d'achat si rᵢ et Hᵢ sont de signes opposés, coût de vente sinon.

        Args:
            risk_model: Modèle carré (m = n) à H et C diagonales
            buy_costs: Coûts d'achat (≥ 0)
            sell_costs: Coûts de vente (≥ 0)
            lambda_c: Poids des coûts (≥ 0)

        Returns:
            HedgeResult ; les produits à rᵢ = 0 sont signalés dans les diagnostics

        Raises:
            NotDiagonal: H ou C non diagonale
            NonPositiveDiagonal: Cᵢ ≤ 0 ou Hᵢ ≤ 0
        """
        H, C, r = risk_model.sensitivity, risk_model.covariance, risk_model.exposure
        n = risk_model.n
        if H.shape[0] != H.shape[1]:
            raise NotDiagonal(f"sensitivity must be square for the diagonal case, got {H.shape}", field="sensitivity")
        for name, matrix in (("sensitivity", H), ("covariance", C)):
            if np.any(matrix - np.diag(np.diag(matrix))):
                raise NotDiagonal(f"{name} is not diagonal", field=name)
        h_diag, c_diag = np.diag(H), np.diag(C)
        if np.any(h_diag <= 0.0):
            raise NonPositiveDiagonal("diagonal sensitivities must be positive", field="sensitivity")
        if np.any(c_diag <= 0.0):
            raise NonPositiveDiagonal("diagonal variances must be positive", field="covariance")

        costs = CostSpec.asymmetric(buy_costs, sell_costs, lambda_c)
        self._check_cost_length(risk_model, costs)

        buying = np.sign(r) * np.sign(h_diag) < 0
        selected = np.where(buying, costs.c_plus, costs.c_minus)
        trades = -(2.0 * c_diag * r * h_diag + lambda_c * selected) / (2.0 * c_diag * h_diag ** 2)

        zero_exposure = [int(i) for i in np.flatnonzero(r == 0.0)]
        if zero_exposure and lambda_c > 0.0:
            self.logger.warning(f"Products {zero_exposure} carry no exposure but receive a cost-driven trade")

        cost_paid = float(lambda_c * (selected @ np.abs(trades)))
        diagnostics = {
            "solver": "closed-form-diagonal",
            "selected_costs": ["buy" if b else "sell" for b in buying],
            "zero_exposure_products": zero_exposure,
        }
        self.logger.info(f"Diagonal hedge computed for {n} products")
        return self._result(risk_model, trades, cost_paid, "diagonal", diagnostics)

    # ------------------------------------------------------------------ #
    # Outils
    # ------------------------------------------------------------------ #

    def _solve_assembly(self, assembly: AugmentedAssembly) -> Tuple[Optional[QpSolution], np.ndarray]:
        """Résout le QP augmenté ; q nul ⇒ solution nulle sans appel au solveur."""
        if not np.any(assembly.q):
            self.logger.info("Zero linear term: hedge is trivially zero")
            return None, np.zeros(2 * assembly.n)

        solution = self.solver.solve(assembly.to_problem())
        if not solution.is_optimal:
            raise NumericalFailure(
                f"QP solver stopped with status {solution.status.value} after {solution.iterations} iterations"
            )
        return solution, np.array(solution.x)

    @staticmethod
    def _diagnostics(assembly: AugmentedAssembly, solution: Optional[QpSolution]) -> Dict[str, Any]:
        diagnostics = solution.summary() if solution is not None else {"solver": "trivial"}
        diagnostics.update({
            "lambda_0": assembly.lambda_0,
            "lambda0_admissible": list(assembly.lambda0_admissible),
            "regularization": assembly.regularization,
        })
        return diagnostics

    def _result(
        self,
        risk_model: RiskModel,
        trades: np.ndarray,
        cost_paid: float,
        mode: str,
        diagnostics: Dict[str, Any],
    ) -> HedgeResult:
        trades = np.asarray(trades, dtype=np.float64)
        trades.setflags(write=False)
        before = portfolio_variance(risk_model)
        after = portfolio_variance(risk_model, trades)
        self.logger.info(
            f"{mode} hedge: variance {before:.6e} -> {after:.6e}, cost paid {cost_paid:.6e}"
        )
        return HedgeResult(
            trades=trades,
            variance_before=before,
            variance_after=after,
            cost_paid=cost_paid,
            mode=mode,
            solver_diagnostics=diagnostics,
        )


def get_hedger() -> Hedger:
    """
    Factory function pour obtenir un moteur de couverture configuré.

    Returns:
        Instance de Hedger
    """
    return Hedger()


def solve_unconstrained(risk_model: RiskModel) -> HedgeResult:
    return get_hedger().solve_unconstrained(risk_model)


def assemble_symmetric(risk_model: RiskModel, costs: CostSpec) -> AugmentedAssembly:
    return get_hedger().assemble_symmetric(risk_model, costs)


def solve_symmetric(risk_model: RiskModel, costs: CostSpec) -> HedgeResult:
    return get_hedger().solve_symmetric(risk_model, costs)


def assemble_asymmetric(risk_model: RiskModel, costs: CostSpec) -> AugmentedAssembly:
    return get_hedger().assemble_asymmetric(risk_model, costs)


def solve_asymmetric(risk_model: RiskModel, costs: CostSpec) -> HedgeResult:
    return get_hedger().solve_asymmetric(risk_model, costs)


def solve_diagonal(risk_model: RiskModel, buy_costs, sell_costs, lambda_c: float) -> HedgeResult:
    return get_hedger().solve_diagonal(risk_model, buy_costs, sell_costs, lambda_c)
