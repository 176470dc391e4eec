"""
QP Solver Module - hedgekit.
Solveur dense de programmes quadratiques convexes sous forme canonique

    minimise    ½xᵀPx + qᵀx
    subject to  Gx ⪯ h
                Ax = b

par point intérieur primal-dual avec prédicteur-correcteur de Mehrotra.
Le système KKT condensé est factorisé en LDLᵀ symétrique indéfinie (Bunch–Kaufman),
avec régularisation ε·I progressive en cas d'échec.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np
import scipy.linalg

from config.manager import SolverConfig, get_config
from core.errors import (
    DimensionMismatch,
    Infeasible,
    NotPositiveDefinite,
    NumericalFailure,
    Unbounded,
)
from utils.numerics import as_matrix, as_vector, is_positive_semidefinite, symmetrize


class QpStatus(Enum):
    """Statut de sortie du solveur."""
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True, eq=False)
class QpProblem:
    """
    Données canoniques d'un QP convexe.

    Attributes:
        P: Matrice k×k symétrique PSD (symétrisée à la construction)
        q: Vecteur k
        G: Matrice p×k des inégalités (ou None)
        h: Vecteur p (ou None)
        A: Matrice e×k des égalités (ou None)
        b: Vecteur e (ou None)
    """
    P: np.ndarray
    q: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        k = P.shape[0]
        if P.shape != (k, k) or k < 1:
            raise DimensionMismatch(f"P must be square and non-empty, got {P.shape}", field="P")
        P = symmetrize(P)
        q = as_vector(self.q, "q", k)

        if (self.G is None) != (self.h is None):
            raise DimensionMismatch("G and h must be given together", field="G")
        if (self.A is None) != (self.b is None):
            raise DimensionMismatch("A and b must be given together", field="A")

        G = as_matrix(self.G, "G", (None, k)) if self.G is not None else np.zeros((0, k))
        h = as_vector(self.h, "h", G.shape[0]) if self.h is not None else np.zeros(0)
        A = as_matrix(self.A, "A", (None, k)) if self.A is not None else np.zeros((0, k))
        b = as_vector(self.b, "b", A.shape[0]) if self.b is not None else np.zeros(0)

        config = get_config().solver
        if not is_positive_semidefinite(P, config.psd_tolerance, config.eigen_check_max_dim):
            raise NotPositiveDefinite("P is not positive semidefinite", field="P")

        for name, value in (("P", P), ("q", q), ("G", G), ("h", h), ("A", A), ("b", b)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @property
    def num_inequalities(self) -> int:
        return self.G.shape[0]

    @property
    def num_equalities(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        """½xᵀPx + qᵀx."""
        return float(0.5 * x @ self.P @ x + self.q @ x)

    def data_norm(self) -> float:
        """Plus grande norme infinie des données (P, q, G, h, A, b)."""
        norms = [np.max(np.abs(m)) for m in (self.P, self.q, self.G, self.h, self.A, self.b) if m.size]
        return float(max(norms)) if norms else 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Représentation JSON (listes de lignes), blocs absents à None."""
        return {
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "G": self.G.tolist() if self.num_inequalities else None,
            "h": self.h.tolist() if self.num_inequalities else None,
            "A": self.A.tolist() if self.num_equalities else None,
            "b": self.b.tolist() if self.num_equalities else None,
        }


@dataclass(frozen=True, eq=False)
class QpSolution:
    """
    Résultat primal-dual du solveur.

    Attributes:
        x: Solution primale (k)
        z: Multiplicateurs des inégalités (p, ≥ 0)
        y: Multiplicateurs des égalités (e)
        status: Statut de sortie
        gap: Saut de dualité sᵀz
        primal_residual: max(‖Gx+s−h‖∞, ‖Ax−b‖∞)
        dual_residual: ‖Px+q+Gᵀz+Aᵀy‖∞
        iterations: Nombre d'itérations
        objective: ½xᵀPx + qᵀx
        regularization: Plus grande régularisation KKT utilisée
        polished: Solution affinée sur l'ensemble actif
    """
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    status: QpStatus
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float
    regularization: float = 0.0
    polished: bool = False

    @property
    def is_optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL

    def summary(self) -> Dict[str, Any]:
        """Résumé sérialisable (diagnostics de couverture)."""
        return {
            "solver": "interior-point",
            "status": self.status.value,
            "iterations": self.iterations,
            "objective": self.objective,
            "gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "regularization": self.regularization,
            "polished": self.polished,
        }


@dataclass(frozen=True)
class KktResiduals:
    """
    Résidus KKT d'un couple (problème, solution).

    Attributes:
        stationarity: ‖Px+q+Gᵀz+Aᵀy‖∞
        primal: max(max(0, Gx−h), ‖Ax−b‖∞)
        complementarity: maxᵢ |zᵢ(h−Gx)ᵢ|
        dual_feasible: False si z a une composante négative
    """
    stationarity: float
    primal: float
    complementarity: float
    dual_feasible: bool


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> KktResiduals:
    """
    Évalue les conditions KKT en (x, z, y). Un z négatif est signalé, pas rejeté.

    Args:
        problem: Problème QP
        solution: Solution à certifier

    Returns:
        KktResiduals

    Raises:
        DimensionMismatch: Si les dimensions ne concordent pas
    """
    x = np.asarray(solution.x, dtype=np.float64)
    z = np.asarray(solution.z, dtype=np.float64)
    y = np.asarray(solution.y, dtype=np.float64)
    if x.shape != (problem.k,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({problem.k},)", field="x")
    if z.shape != (problem.num_inequalities,):
        raise DimensionMismatch(
            f"z has shape {z.shape}, expected ({problem.num_inequalities},)", field="z"
        )
    if y.shape != (problem.num_equalities,):
        raise DimensionMismatch(
            f"y has shape {y.shape}, expected ({problem.num_equalities},)", field="y"
        )

    gradient = problem.P @ x + problem.q + problem.G.T @ z + problem.A.T @ y
    slack = problem.h - problem.G @ x
    violation = float(np.max(np.maximum(-slack, 0.0))) if slack.size else 0.0
    equality = float(np.max(np.abs(problem.A @ x - problem.b))) if problem.num_equalities else 0.0
    complementarity = float(np.max(np.abs(z * slack))) if slack.size else 0.0

    return KktResiduals(
        stationarity=float(np.max(np.abs(gradient))),
        primal=max(violation, equality),
        complementarity=complementarity,
        dual_feasible=bool(np.all(z >= 0.0)),
    )


class _KktFactorization:
    """
    Factorisation LDLᵀ symétrique indéfinie d'une matrice KKT
    [[H, Aᵀ], [A, 0]], régularisée par (+ε sur H, −ε sur le bloc nul) si nécessaire.
    """

    def __init__(self, matrix: np.ndarray, num_primal: int, config: SolverConfig):
        self._matrix = matrix
        self.regularization = 0.0

        regularization = 0.0
        while True:
            candidate = matrix.copy()
            if regularization > 0.0:
                idx = np.arange(matrix.shape[0])
                candidate[idx[:num_primal], idx[:num_primal]] += regularization
                candidate[idx[num_primal:], idx[num_primal:]] -= regularization
            if self._factor(candidate):
                self.regularization = regularization
                return
            if regularization == 0.0:
                regularization = config.regularization_start
            else:
                regularization *= 2.0
            if regularization > config.regularization_max:
                raise NumericalFailure(
                    f"KKT factorization failed up to regularization {config.regularization_max:.1e}"
                )

    def _factor(self, matrix: np.ndarray) -> bool:
        try:
            lower, block_diag, perm = scipy.linalg.ldl(matrix, lower=True)
        except (ValueError, np.linalg.LinAlgError):
            return False
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(block_diag))):
            return False

        pivots = np.abs(scipy.linalg.eigvalsh(block_diag))
        scale = max(float(np.max(np.abs(matrix))), 1.0)
        if pivots.size and float(np.min(pivots)) <= matrix.shape[0] * np.finfo(float).eps * scale:
            return False

        dim = matrix.shape[0]
        banded = np.zeros((3, dim))
        banded[0, 1:] = np.diag(block_diag, 1)
        banded[1, :] = np.diag(block_diag)
        banded[2, :-1] = np.diag(block_diag, -1)

        self._lower = lower[perm]
        self._banded = banded
        self._perm = perm
        return True

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        work = scipy.linalg.solve_triangular(
            self._lower, rhs[self._perm], lower=True, unit_diagonal=True
        )
        work = scipy.linalg.solve_banded((1, 1), self._banded, work)
        work = scipy.linalg.solve_triangular(
            self._lower.T, work, lower=False, unit_diagonal=True
        )
        solution = np.empty_like(work)
        solution[self._perm] = work
        return solution

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Résout le système non régularisé (un pas de raffinement itératif)."""
        solution = self._solve_once(rhs)
        residual = rhs - self._matrix @ solution
        return solution + self._solve_once(residual)


class QpSolver:
    """
    Solveur QP dense par point intérieur (Mehrotra).
    Ne porte que sa configuration : chaque appel à solve() a son propre espace de travail.
    """

    def __init__(self, config: Optional[SolverConfig] = None):
        """
        Initialise le solveur.

        Args:
            config: Section solveur (par défaut celle de get_config())
        """
        self.config = config or get_config().solver
        self.logger = logging.getLogger(__name__)

    def solve(self, problem: QpProblem) -> QpSolution:
        """
        Résout le QP.

        Args:
            problem: Problème canonique

        Returns:
            QpSolution (statut Optimal, MaxIterations ou NumericalFailure)

        Raises:
            Infeasible: Résidu primal non résorbable / divergence des multiplicateurs
            Unbounded: Direction de descente non bornée
        """
        if problem.num_inequalities == 0:
            return self._solve_equality_constrained(problem)
        return self._solve_interior_point(problem)

    def _kkt_matrix(self, hessian: np.ndarray, A: np.ndarray) -> np.ndarray:
        k, e = hessian.shape[0], A.shape[0]
        matrix = np.zeros((k + e, k + e))
        matrix[:k, :k] = hessian
        matrix[k:, :k] = A
        matrix[:k, k:] = A.T
        return matrix

    def _solve_equality_constrained(self, problem: QpProblem) -> QpSolution:
        """Cas sans inégalités : une seule résolution du système KKT."""
        P, q, A, b = problem.P, problem.q, problem.A, problem.b
        k = problem.k
        factorization = _KktFactorization(self._kkt_matrix(P, A), k, self.config)
        solution = factorization.solve(np.concatenate([-q, b]))
        x, y = solution[:k], solution[k:]

        primal = float(np.max(np.abs(A @ x - b))) if problem.num_equalities else 0.0
        dual = float(np.max(np.abs(P @ x + q + A.T @ y)))
        tol = self.config.tolerance
        primal_scale = 1.0 + max(
            float(np.max(np.abs(b))) if b.size else 0.0,
            float(np.max(np.abs(A @ x))) if b.size else 0.0,
        )
        dual_scale = 1.0 + max(
            float(np.max(np.abs(q))),
            float(np.max(np.abs(P @ x))),
            float(np.max(np.abs(A.T @ y))) if y.size else 0.0,
        )

        if primal > tol * primal_scale:
            raise Infeasible(f"equality constraints are inconsistent (residual {primal:.3e})")
        if dual > tol * dual_scale:
            raise Unbounded(
                f"P is singular along a descent direction (stationarity residual {dual:.3e})"
            )

        objective = problem.objective(x)
        self.logger.info(
            f"QP solved without inequalities: objective={objective:.6e}, "
            f"regularization={factorization.regularization:.1e}"
        )
        return QpSolution(
            x=x, z=np.zeros(0), y=y, status=QpStatus.OPTIMAL, gap=0.0,
            primal_residual=primal, dual_residual=dual, iterations=1,
            objective=objective, regularization=factorization.regularization,
        )

    def _initial_point(self, problem: QpProblem) -> Tuple[np.ndarray, ...]:
        """
        Point de départ : moindres carrés régularisés
        min ½xᵀPx + qᵀx + ½‖Gx − h‖² s.t. Ax = b, puis s, z poussés à ≥ 1.
        """
        P, q, G, h, A, b = problem.P, problem.q, problem.G, problem.h, problem.A, problem.b
        k = problem.k
        factorization = _KktFactorization(self._kkt_matrix(P + G.T @ G, A), k, self.config)
        solution = factorization.solve(np.concatenate([-q + G.T @ h, b]))
        x, y = solution[:k], solution[k:]

        s = h - G @ x
        z = -s.copy()
        s = s + max(0.0, 1.0 - float(np.min(s)))
        z = z + max(0.0, 1.0 - float(np.min(z)))
        return x, s, z, y

    @staticmethod
    def _max_step(values: np.ndarray, direction: np.ndarray) -> float:
        """Plus grand α ∈ [0, 1] tel que values + α·direction ≥ 0."""
        negative = direction < 0.0
        if not np.any(negative):
            return 1.0
        return float(min(1.0, np.min(-values[negative] / direction[negative])))

    def _solve_interior_point(self, problem: QpProblem) -> QpSolution:
        P, G, h, A, b = problem.P, problem.G, problem.h, problem.A, problem.b
        k, p = problem.k, problem.num_inequalities
        tol = self.config.tolerance
        data_scale = 1.0 + problem.data_norm()
        primal_scale = 1.0 + max(
            float(np.max(np.abs(h))),
            float(np.max(np.abs(b))) if b.size else 0.0,
        )

        x, s, z, y = self._initial_point(problem)
        status = QpStatus.MAX_ITERATIONS
        max_regularization = 0.0
        iteration = 0

        for iteration in range(1, self.config.max_iterations + 1):
            r_dual, r_ineq, r_eq = self._residual_vectors(problem, x, s, z, y)
            gap = float(s @ z)
            mu = gap / p
            objective = problem.objective(x)

            primal_res, dual_res, dual_scale = self._residual_norms(problem, x, z, y, r_dual, r_ineq, r_eq)

            self.logger.debug(
                f"iter {iteration:3d} | pobj {objective: .6e} | pres {primal_res:.2e} | "
                f"dres {dual_res:.2e} | gap {gap:.2e} | mu {mu:.2e}"
            )

            if (
                primal_res <= tol * primal_scale
                and dual_res <= tol * dual_scale
                and gap <= tol * (1.0 + abs(objective))
            ):
                status = QpStatus.OPTIMAL
                break

            if not all(np.all(np.isfinite(v)) for v in (x, s, z, y)):
                status = QpStatus.NUMERICAL_FAILURE
                break
            self._check_divergence(x, z, y, data_scale)

            D = z / s
            try:
                factorization = _KktFactorization(
                    self._kkt_matrix(P + G.T @ (D[:, None] * G), A), k, self.config
                )
            except NumericalFailure:
                self.logger.warning(f"KKT factorization failed at iteration {iteration}", exc_info=True)
                status = QpStatus.NUMERICAL_FAILURE
                break
            max_regularization = max(max_regularization, factorization.regularization)

            def newton_direction(r_comp: np.ndarray) -> Tuple[np.ndarray, ...]:
                # Z·ds + S·dz = r_comp ; ds = −r_ineq − G·dx
                rhs_x = -r_dual - G.T @ (r_comp / s + D * r_ineq)
                step = factorization.solve(np.concatenate([rhs_x, -r_eq]))
                dx, dy = step[:k], step[k:]
                dz = r_comp / s + D * (r_ineq + G @ dx)
                ds = -r_ineq - G @ dx
                return dx, ds, dz, dy

            # prédicteur (affine)
            dx_a, ds_a, dz_a, dy_a = newton_direction(-s * z)
            alpha_aff = min(self._max_step(s, ds_a), self._max_step(z, dz_a))
            mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / p
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

            # correcteur
            dx, ds, dz, dy = newton_direction(-s * z - ds_a * dz_a + sigma * mu)
            alpha = min(self._max_step(s, ds), self._max_step(z, dz))
            alpha = min(1.0, self.config.step_scale * alpha)

            x = x + alpha * dx
            s = s + alpha * ds
            z = z + alpha * dz
            y = y + alpha * dy

        polished = False
        if status is QpStatus.OPTIMAL and self.config.polish:
            candidate = self._polish(problem, x, s, z, y, primal_scale)
            if candidate is not None:
                x, s, z, y = candidate
                polished = True

        # résidus de l'itéré rendu, pas de celui qui précède la dernière mise à jour
        r_dual, r_ineq, r_eq = self._residual_vectors(problem, x, s, z, y)
        primal_res, dual_res, dual_scale = self._residual_norms(problem, x, z, y, r_dual, r_ineq, r_eq)
        gap = float(s @ z)

        if status is not QpStatus.OPTIMAL:
            self._classify_failure((primal_res / primal_scale, dual_res / dual_scale, gap), x)

        objective = problem.objective(x)
        self.logger.info(
            f"QP finished: status={status.value}, iterations={iteration}, "
            f"objective={objective:.6e}, gap={gap:.2e}, polished={polished}"
        )
        return QpSolution(
            x=x, z=z, y=y, status=status, gap=gap,
            primal_residual=primal_res, dual_residual=dual_res,
            iterations=iteration, objective=objective, regularization=max_regularization,
            polished=polished,
        )

    @staticmethod
    def _residual_vectors(problem: QpProblem, x, s, z, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r_dual = problem.P @ x + problem.q + problem.G.T @ z + problem.A.T @ y
        r_ineq = problem.G @ x + s - problem.h
        r_eq = problem.A @ x - problem.b
        return r_dual, r_ineq, r_eq

    @staticmethod
    def _residual_norms(problem: QpProblem, x, z, y, r_dual, r_ineq, r_eq) -> Tuple[float, float, float]:
        """(résidu primal, résidu dual, échelle duale) en norme infinie."""
        primal_res = max(
            float(np.max(np.abs(r_ineq))) if r_ineq.size else 0.0,
            float(np.max(np.abs(r_eq))) if r_eq.size else 0.0,
        )
        dual_res = float(np.max(np.abs(r_dual)))
        dual_scale = 1.0 + max(
            float(np.max(np.abs(problem.q))),
            float(np.max(np.abs(problem.P @ x))),
            float(np.max(np.abs(problem.G.T @ z))) if z.size else 0.0,
            float(np.max(np.abs(problem.A.T @ y))) if y.size else 0.0,
        )
        return primal_res, dual_res, dual_scale

    def _polish(
        self,
        problem: QpProblem,
        x: np.ndarray,
        s: np.ndarray,
        z: np.ndarray,
        y: np.ndarray,
        primal_scale: float,
    ) -> Optional[Tuple[np.ndarray, ...]]:
        """
        Affine la solution du point intérieur : les contraintes à zᵢ > sᵢ sont
        traitées comme des égalités et le système KKT correspondant est résolu
        directement. L'itéré n'est plus limité par le saut de dualité résiduel,
        ce qui rend x indépendant de l'échelle de (P, q).

        Args:
            problem: Problème QP
            x, s, z, y: Itéré optimal du point intérieur
            primal_scale: Échelle des résidus primaux

        Returns:
            (x, s, z, y) affinés, ou None si le candidat n'est pas un point KKT
            au moins aussi précis que l'itéré
        """
        P, q, G, h, A, b = problem.P, problem.q, problem.G, problem.h, problem.A, problem.b
        k, e = problem.k, problem.num_equalities
        tol = self.config.tolerance
        active = z > s

        constraints = np.vstack([A, G[active]])
        try:
            factorization = _KktFactorization(self._kkt_matrix(P, constraints), k, self.config)
        except NumericalFailure:
            self.logger.debug("Polishing skipped: active-set KKT system is singular")
            return None
        solution = factorization.solve(np.concatenate([-q, b, h[active]]))
        if not np.all(np.isfinite(solution)):
            return None

        x_polished = solution[:k]
        y_polished = solution[k:k + e]
        z_polished = np.zeros_like(z)
        z_polished[active] = solution[k + e:]

        z_floor = tol * (1.0 + float(np.max(np.abs(z))))
        slack = h - G @ x_polished
        if np.any(z_polished < -z_floor) or np.any(slack < -tol * primal_scale):
            self.logger.debug("Polishing rejected: active set not confirmed")
            return None
        z_polished = np.maximum(z_polished, 0.0)
        s_polished = np.maximum(slack, 0.0)

        before = self._residual_norms(problem, x, z, y, *self._residual_vectors(problem, x, s, z, y))
        after = self._residual_norms(
            problem, x_polished, z_polished, y_polished,
            *self._residual_vectors(problem, x_polished, s_polished, z_polished, y_polished),
        )
        if after[1] > max(before[1], tol * after[2]):
            self.logger.debug(f"Polishing rejected: stationarity {after[1]:.2e} > {before[1]:.2e}")
            return None

        self.logger.debug(f"Polished on {int(np.count_nonzero(active))} active constraints")
        return x_polished, s_polished, z_polished, y_polished

    def _check_divergence(self, x, z, y, data_scale: float):
        """Arrête l'algorithme dès que les itérés divergent."""
        threshold = self.config.divergence_threshold * data_scale
        dual_norm = max(float(np.max(np.abs(z))), float(np.max(np.abs(y))) if y.size else 0.0)
        if dual_norm > threshold:
            raise Infeasible(f"dual iterates diverge (|z|,|y| = {dual_norm:.3e}); primal infeasible")
        if float(np.max(np.abs(x))) > threshold:
            raise Unbounded(f"primal iterates diverge (|x| = {float(np.max(np.abs(x))):.3e})")

    def _classify_failure(self, residuals: Tuple[float, float, float], x: np.ndarray):
        """
        Sans convergence : résidu primal persistant → infaisable,
        résidu dual persistant → non borné. Sinon le statut est rendu tel quel.
        """
        loose = np.sqrt(self.config.tolerance)
        primal_rel, dual_rel, _ = residuals
        if primal_rel > loose:
            raise Infeasible(f"primal residual does not vanish (relative {primal_rel:.3e})")
        if dual_rel > loose:
            raise Unbounded(
                f"dual residual does not vanish (relative {dual_rel:.3e}, |x| = {np.max(np.abs(x)):.3e})"
            )


def get_qp_solver() -> QpSolver:
    """
    Factory function pour obtenir un solveur configuré.

    Returns:
        Instance de QpSolver
    """
    return QpSolver()


def solve_qp(problem: QpProblem) -> QpSolution:
    """
    Résout le QP convexe canonique ½xᵀPx + qᵀx, Gx ⪯ h, Ax = b.

    Args:
        problem: Problème canonique

    Returns:
        QpSolution
    """
    return get_qp_solver().solve(problem)
