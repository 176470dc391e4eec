"""
Numerics Utilities - hedgekit.
Outils partagés : conversion de tableaux, symétrisation, tests PSD
et différences finies centrées (layout numérateur).
"""

from typing import Callable, Optional, Type

import numpy as np
import scipy.linalg

from core.errors import DimensionMismatch, NonSymmetric, ValidationError


def as_vector(values, name: str, length: Optional[int] = None) -> np.ndarray:
    """
    Convertit en vecteur float64 et vérifie sa longueur.

    Args:
        values: Séquence ou tableau
        name: Nom du champ (pour les messages d'erreur)
        length: Longueur attendue, si imposée

    Returns:
        Vecteur 1-D float64 (copie)
    """
    vec = np.array(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {vec.shape}", field=name)
    if length is not None and vec.shape[0] != length:
        raise DimensionMismatch(
            f"{name} must have length {length}, got {vec.shape[0]}", field=name
        )
    if not np.all(np.isfinite(vec)):
        raise ValidationError(f"{name} contains non-finite values", field=name)
    return vec


def as_matrix(values, name: str, shape: Optional[tuple] = None) -> np.ndarray:
    """
    Convertit en matrice float64 et vérifie sa forme.

    Args:
        values: Liste de lignes ou tableau 2-D
        name: Nom du champ
        shape: Forme attendue (None sur un axe = libre)

    Returns:
        Matrice 2-D float64 (copie)
    """
    mat = np.array(values, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {mat.shape}", field=name)
    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and mat.shape[axis] != expected:
                raise DimensionMismatch(
                    f"{name} has shape {mat.shape}, expected {shape}", field=name
                )
    if not np.all(np.isfinite(mat)):
        raise ValidationError(f"{name} contains non-finite values", field=name)
    return mat


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Retourne (M + Mᵀ)/2."""
    return 0.5 * (matrix + matrix.T)


def check_symmetric(
    matrix: np.ndarray,
    name: str,
    rel_tol: float = 1e-12,
    error: Type[ValidationError] = NonSymmetric,
) -> np.ndarray:
    """
    Vérifie la symétrie à rel_tol près (relatif à max|M|) puis symétrise.

    Args:
        matrix: Matrice carrée
        name: Nom du champ
        rel_tol: Tolérance relative
        error: Classe d'exception levée en cas d'asymétrie

    Returns:
        (M + Mᵀ)/2
    """
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {matrix.shape}", field=name)
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    asymmetry = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
    if asymmetry > rel_tol * scale:
        raise error(
            f"{name} is not symmetric (max asymmetry {asymmetry:.3e}, scale {scale:.3e})",
            field=name,
        )
    return symmetrize(matrix)


def eigenvalues_sorted(matrix: np.ndarray) -> np.ndarray:
    """Valeurs propres (croissantes) d'une matrice symétrique, par QR symétrique (LAPACK)."""
    if matrix.size == 0:
        return np.zeros(0)
    return scipy.linalg.eigvalsh(matrix)


def is_positive_semidefinite(
    matrix: np.ndarray,
    rel_tol: float = 1e-10,
    eigen_check_max_dim: int = 200,
) -> bool:
    """
    Teste le caractère PSD d'une matrice symétrique.
    Valeurs propres jusqu'à eigen_check_max_dim, sonde de Cholesky régularisée au-delà.

    Args:
        matrix: Matrice symétrique
        rel_tol: Tolérance relative sur la plus petite valeur propre
        eigen_check_max_dim: Dimension maximale pour le test par valeurs propres

    Returns:
        True si min λ ≥ −rel_tol·max|λ|
    """
    dim = matrix.shape[0]
    if dim == 0:
        return True
    if dim <= eigen_check_max_dim:
        eigenvalues = eigenvalues_sorted(matrix)
        scale = max(np.max(np.abs(eigenvalues)), np.finfo(float).tiny)
        return bool(eigenvalues[0] >= -rel_tol * scale)

    scale = max(np.linalg.norm(matrix, ord=np.inf), np.finfo(float).tiny)
    try:
        np.linalg.cholesky(matrix + rel_tol * scale * np.eye(dim))
        return True
    except np.linalg.LinAlgError:
        return False


def central_difference_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    rel_step: float = 1e-5,
) -> np.ndarray:
    """
    Jacobienne j×k par différences finies centrées, pas hᵢ = rel_step·(1+|xᵢ|).

    Args:
        func: Fonction R^k → R^j (ou R)
        point: Point d'évaluation (longueur k)
        rel_step: Pas relatif

    Returns:
        Matrice j×k (layout numérateur)
    """
    point = np.asarray(point, dtype=np.float64)
    columns = []
    for i in range(point.shape[0]):
        step = rel_step * (1.0 + abs(point[i]))
        bump = np.zeros_like(point)
        bump[i] = step
        upper = np.atleast_1d(np.asarray(func(point + bump), dtype=np.float64))
        lower = np.atleast_1d(np.asarray(func(point - bump), dtype=np.float64))
        columns.append((upper - lower) / (2.0 * step))
    return np.column_stack(columns)


def numerical_gradient(
    func: Callable[[np.ndarray], float],
    point: np.ndarray,
    rel_step: float = 1e-5,
) -> np.ndarray:
    """Dérivée scalaire-par-vecteur 1×k (vecteur ligne, layout numérateur)."""
    return central_difference_jacobian(func, point, rel_step).reshape(1, -1)
