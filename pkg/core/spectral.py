"""
Spectral Module - hedgekit.
Valeurs propres des matrices par blocs et intervalles admissibles de λ₀
pour les deux formulations avec coûts (achat/vente symétrique et asymétrique).

Notations : K = HᵀCH (n×n), λ′ᵢ ses valeurs propres, λ′_min la plus petite.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import scipy.linalg

from config.manager import get_config
from core.errors import DimensionMismatch, NotPositiveDefinite, ValidationError
from utils.numerics import as_matrix, check_symmetric, eigenvalues_sorted, symmetrize

logger = logging.getLogger(__name__)

FORMULATIONS = ("symmetric", "asymmetric")
REGULARIZATIONS = ("printed", "exact")


@dataclass(frozen=True)
class PredictedEigenvalue:
    """
    Valeur propre prédite par un lemme de blocs.

    Attributes:
        value: Valeur propre
        source: Branche du lemme qui la produit (ex. '2*lambda0')
    """
    value: float
    source: str


@dataclass(frozen=True, eq=False)
class SpectralReport:
    """
    Comparaison spectre prédit / spectre direct de la matrice P assemblée.

    Attributes:
        formulation: 'symmetric' ou 'asymmetric'
        regularization: Variante de P symétrique ('printed' / 'exact')
        lambda_0: λ₀ évalué
        eigenvalues_predicted: Valeurs propres prédites, avec provenance
        eigenvalues_direct: Valeurs propres de P (croissantes)
        min_eigenvalue: Plus petite valeur propre directe
        is_positive_definite: min_eigenvalue > pd_tolerance·‖P‖₂
        lambda0_admissible: Intervalle ouvert (bas, haut), None si vide
        multiset_match: Spectres prédit et direct égaux (tri, tolérance absolue)
        diagnostic: Message si HᵀCH n'est pas définie positive
    """
    formulation: str
    regularization: str
    lambda_0: float
    eigenvalues_predicted: Tuple[PredictedEigenvalue, ...]
    eigenvalues_direct: np.ndarray
    min_eigenvalue: float
    is_positive_definite: bool
    lambda0_admissible: Optional[Tuple[float, float]]
    multiset_match: bool
    diagnostic: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Représentation JSON."""
        return {
            "formulation": self.formulation,
            "regularization": self.regularization,
            "lambda_0": self.lambda_0,
            "eigenvalues_predicted": [
                {"value": e.value, "source": e.source} for e in self.eigenvalues_predicted
            ],
            "eigenvalues_direct": self.eigenvalues_direct.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "is_positive_definite": self.is_positive_definite,
            "lambda0_admissible": list(self.lambda0_admissible) if self.lambda0_admissible else None,
            "multiset_match": self.multiset_match,
            "diagnostic": self.diagnostic,
        }


def eig_block_diag(A, B) -> np.ndarray:
    """
    Spectre de [[A, 0], [0, B]] : eig(A) ∪ eig(B).

    Args:
        A: Matrice n×n symétrique
        B: Matrice m×m symétrique

    Returns:
        n+m valeurs propres, croissantes

    Raises:
        NonSymmetric: Si A ou B n'est pas symétrique
    """
    A = check_symmetric(as_matrix(A, "A"), "A")
    B = check_symmetric(as_matrix(B, "B"), "B")
    return np.sort(np.concatenate([eigenvalues_sorted(A), eigenvalues_sorted(B)]))


def eig_sym_block(A, B) -> np.ndarray:
    """
    Spectre de [[A, B], [B, A]] : eig(A+B) ∪ eig(A−B).

    Args:
        A: Matrice n×n symétrique
        B: Matrice n×n symétrique

    Returns:
        2n valeurs propres, croissantes

    Raises:
        NonSymmetric: Si A ou B n'est pas symétrique
        DimensionMismatch: Si A et B n'ont pas la même taille
    """
    A = check_symmetric(as_matrix(A, "A"), "A")
    B = check_symmetric(as_matrix(B, "B"), "B")
    if A.shape != B.shape:
        raise DimensionMismatch(f"A {A.shape} and B {B.shape} must have equal size", field="B")
    return np.sort(np.concatenate([eigenvalues_sorted(A + B), eigenvalues_sorted(A - B)]))


def assemble_block_diag(A, B) -> np.ndarray:
    """[[A, 0], [0, B]]."""
    return scipy.linalg.block_diag(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64))


def assemble_sym_block(A, B) -> np.ndarray:
    """[[A, B], [B, A]]."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    return np.block([[A, B], [B, A]])


def multisets_match(first: Sequence[float], second: Sequence[float], tol: Optional[float] = None) -> bool:
    """Égalité de multi-ensembles de réels après tri, à tol près (absolu)."""
    tol = get_config().spectral.multiset_tolerance if tol is None else tol
    a = np.sort(np.asarray(first, dtype=np.float64))
    b = np.sort(np.asarray(second, dtype=np.float64))
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol))


def gram_matrix(H, C) -> np.ndarray:
    """K = HᵀCH, symétrisée."""
    H = as_matrix(H, "sensitivity")
    C = as_matrix(C, "covariance", (H.shape[0], H.shape[0]))
    return symmetrize(H.T @ C @ H)


def gram_eigenvalues(H, C) -> np.ndarray:
    """
    Valeurs propres λ′ de HᵀCH, après vérification du caractère défini positif.

    Raises:
        NotPositiveDefinite: Si min λ′ ≤ rank_tolerance·‖HᵀCH‖₂
    """
    eigenvalues = eigenvalues_sorted(gram_matrix(H, C))
    norm = float(np.max(np.abs(eigenvalues)))
    if eigenvalues[0] <= get_config().spectral.rank_tolerance * norm:
        raise NotPositiveDefinite(
            f"HᵀCH is not positive definite (min eigenvalue {eigenvalues[0]:.3e}, norm {norm:.3e})",
            field="sensitivity",
        )
    return eigenvalues


def _check_regularization(regularization: str):
    if regularization not in REGULARIZATIONS:
        raise ValidationError(
            f"regularization must be one of {REGULARIZATIONS}, got {regularization!r}",
            field="regularization",
        )


def lambda0_range_symmetric(H, C, regularization: str = "printed") -> Tuple[float, float]:
    """
    Intervalle ouvert de λ₀ rendant P (coûts symétriques) définie positive.

    P = [[2K − λ₀I, 0], [0, 2λ₀I]] ('printed') donne (0, 2λ′_min) ;
    P = [[2K − 2λ₀I, 0], [0, 2λ₀I]] ('exact') donne (0, λ′_min).

    Args:
        H: Sensibilités m×n
        C: Covariance m×m
        regularization: 'printed' ou 'exact'

    Returns:
        (0, borne supérieure)

    Raises:
        NotPositiveDefinite: Si HᵀCH est singulière
    """
    _check_regularization(regularization)
    lambda_min = float(gram_eigenvalues(H, C)[0])
    upper = 2.0 * lambda_min if regularization == "printed" else lambda_min
    return (0.0, upper)


def lambda0_range_asymmetric(H, C) -> Tuple[float, float]:
    """
    Intervalle ouvert de λ₀ rendant P (coûts asymétriques) définie positive : (0, 2λ′_min).

    Les valeurs propres de P sont 2λ₀ et 4λ′ᵢ − 2λ₀.

    Raises:
        NotPositiveDefinite: Si HᵀCH est singulière
    """
    lambda_min = float(gram_eigenvalues(H, C)[0])
    return (0.0, 2.0 * lambda_min)


def lambda0_range(H, C, formulation: str, regularization: str = "printed") -> Tuple[float, float]:
    """Intervalle admissible de λ₀ pour la formulation donnée."""
    if formulation == "symmetric":
        return lambda0_range_symmetric(H, C, regularization)
    if formulation == "asymmetric":
        return lambda0_range_asymmetric(H, C)
    raise ValidationError(f"unknown formulation {formulation!r}", field="formulation")


def symmetric_hessian(gram: np.ndarray, lambda_0: float, regularization: str = "printed") -> np.ndarray:
    """
    P de la formulation symétrique (variables (x, v)), sans validation de λ₀.

    Args:
        gram: K = HᵀCH
        lambda_0: Poids de couplage
        regularization: 'printed' (x-bloc 2K − λ₀I) ou 'exact' (2K − 2λ₀I)
    """
    _check_regularization(regularization)
    n = gram.shape[0]
    shift = lambda_0 if regularization == "printed" else 2.0 * lambda_0
    return assemble_block_diag(2.0 * gram - shift * np.eye(n), 2.0 * lambda_0 * np.eye(n))


def asymmetric_hessian(gram: np.ndarray, lambda_0: float) -> np.ndarray:
    """P de la formulation asymétrique (variables (x⁺, x⁻)), sans validation de λ₀."""
    n = gram.shape[0]
    return assemble_sym_block(2.0 * gram, -2.0 * gram + 2.0 * lambda_0 * np.eye(n))


def predicted_eigenvalues_symmetric(
    gram_eigs: np.ndarray, lambda_0: float, regularization: str = "printed"
) -> List[PredictedEigenvalue]:
    """Spectre prédit (lemme bloc-diagonal) : {2λ₀} ∪ {2λ′ᵢ − λ₀} ou {2λ′ᵢ − 2λ₀}."""
    _check_regularization(regularization)
    if regularization == "printed":
        x_block = [PredictedEigenvalue(float(2.0 * e - lambda_0), "2*lambda'_i - lambda0") for e in gram_eigs]
    else:
        x_block = [PredictedEigenvalue(float(2.0 * e - 2.0 * lambda_0), "2*lambda'_i - 2*lambda0") for e in gram_eigs]
    v_block = [PredictedEigenvalue(float(2.0 * lambda_0), "2*lambda0") for _ in gram_eigs]
    return x_block + v_block


def predicted_eigenvalues_asymmetric(gram_eigs: np.ndarray, lambda_0: float) -> List[PredictedEigenvalue]:
    """Spectre prédit (lemme [[A, B], [B, A]]) : {2λ₀} ∪ {4λ′ᵢ − 2λ₀}."""
    plus = [PredictedEigenvalue(float(2.0 * lambda_0), "A+B: 2*lambda0") for _ in gram_eigs]
    minus = [PredictedEigenvalue(float(4.0 * e - 2.0 * lambda_0), "A-B: 4*lambda'_i - 2*lambda0") for e in gram_eigs]
    return plus + minus


def positive_definiteness(matrix: np.ndarray) -> Tuple[np.ndarray, float, bool]:
    """
    Spectre direct et test de définie-positivité.

    Returns:
        (valeurs propres croissantes, min, min > pd_tolerance·‖M‖₂)
    """
    eigenvalues = eigenvalues_sorted(symmetrize(matrix))
    norm = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    min_eig = float(eigenvalues[0])
    return eigenvalues, min_eig, min_eig > get_config().spectral.pd_tolerance * norm


def build_spectral_report(
    H,
    C,
    lambda_0: Optional[float] = None,
    formulation: str = "symmetric",
    regularization: str = "printed",
) -> SpectralReport:
    """
    Analyse spectrale complète d'une formulation : intervalle admissible,
    spectre prédit par les lemmes de blocs et spectre direct de P.

    Une matrice HᵀCH singulière ne lève pas d'erreur ici : l'intervalle est vide
    et le diagnostic l'indique.

    Args:
        H: Sensibilités m×n
        C: Covariance m×m
        lambda_0: λ₀ évalué (milieu de l'intervalle admissible par défaut, 0 s'il est vide)
        formulation: 'symmetric' ou 'asymmetric'
        regularization: Variante de la formulation symétrique

    Returns:
        SpectralReport
    """
    if formulation not in FORMULATIONS:
        raise ValidationError(f"unknown formulation {formulation!r}", field="formulation")
    _check_regularization(regularization)

    gram = gram_matrix(H, C)
    gram_eigs = eigenvalues_sorted(gram)
    diagnostic = None
    try:
        admissible = lambda0_range(H, C, formulation, regularization)
    except NotPositiveDefinite as e:
        logger.warning(f"Empty admissible interval for {formulation} formulation: {e}")
        admissible = None
        diagnostic = f"NotPositiveDefinite: {e}"

    if lambda_0 is None:
        fraction = get_config().hedge.lambda0_fraction
        lambda_0 = admissible[0] + fraction * (admissible[1] - admissible[0]) if admissible else 0.0

    if formulation == "symmetric":
        matrix = symmetric_hessian(gram, lambda_0, regularization)
        predicted = predicted_eigenvalues_symmetric(gram_eigs, lambda_0, regularization)
    else:
        matrix = asymmetric_hessian(gram, lambda_0)
        predicted = predicted_eigenvalues_asymmetric(gram_eigs, lambda_0)

    direct, min_eig, is_pd = positive_definiteness(matrix)
    match = multisets_match([e.value for e in predicted], direct)
    if not match:
        logger.warning(f"Predicted and direct spectra differ for {formulation} formulation")

    return SpectralReport(
        formulation=formulation,
        regularization=regularization if formulation == "symmetric" else "n/a",
        lambda_0=float(lambda_0),
        eigenvalues_predicted=tuple(sorted(predicted, key=lambda e: e.value)),
        eigenvalues_direct=direct,
        min_eigenvalue=min_eig,
        is_positive_definite=is_pd,
        lambda0_admissible=admissible,
        multiset_match=match,
        diagnostic=diagnostic,
    )
