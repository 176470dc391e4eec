"""
Delta Variance Module - hedgekit.
Approximation de la variance d'une fonction régulière d'un vecteur aléatoire
par la méthode delta (J·Σ·Jᵀ), et oracle Monte Carlo gaussien reproductible.
"""

from dataclasses import dataclass
from typing import Callable, Iterator, Optional
import logging

import numpy as np
from scipy.linalg import lapack

from config.manager import get_config
from core.errors import (
    CovFactorizationFailure,
    DimensionMismatch,
    NonSymmetricCov,
    NotPositiveDefinite,
    ValidationError,
)
from core.portfolio import RiskModel
from utils.numerics import (
    as_matrix,
    as_vector,
    central_difference_jacobian,
    check_symmetric,
    is_positive_semidefinite,
    symmetrize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothMap:
    """
    Application régulière R^k → R^j.

    Attributes:
        evaluate: Fonction d'un vecteur k (ou d'un lot s×k si vectorized) vers R^j
        jacobian_fn: Jacobienne analytique j×k, None = différences finies centrées
        vectorized: evaluate accepte un lot de points en première dimension
        name: Nom affiché dans les rapports
    """
    evaluate: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False
    name: str = "map"

    def __call__(self, point: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.evaluate(np.asarray(point, dtype=np.float64)), dtype=np.float64))

    def jacobian(self, point: np.ndarray) -> np.ndarray:
        """Jacobienne j×k au point (analytique si fournie)."""
        point = np.asarray(point, dtype=np.float64)
        if self.jacobian_fn is not None:
            return np.atleast_2d(np.asarray(self.jacobian_fn(point), dtype=np.float64))
        return central_difference_jacobian(self.__call__, point, get_config().deltavar.fd_step)

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Évalue un lot s×k, retourne s×j."""
        if self.vectorized:
            values = np.asarray(self.evaluate(points), dtype=np.float64)
        else:
            values = np.apply_along_axis(self.__call__, 1, points)
        return values.reshape(points.shape[0], -1)

    def jacobian_error(self, point: np.ndarray) -> float:
        """Écart relatif max entre Jacobienne analytique et différences finies."""
        point = np.asarray(point, dtype=np.float64)
        analytic = self.jacobian(point)
        numeric = central_difference_jacobian(self.__call__, point, get_config().deltavar.fd_step)
        scale = max(float(np.max(np.abs(numeric))), 1.0)
        return float(np.max(np.abs(analytic - numeric))) / scale

    @classmethod
    def linear(cls, weights, offset=None, name: str = "linear") -> "SmoothMap":
        """f(X) = W·X + b, Jacobienne W."""
        W = as_matrix(np.atleast_2d(weights), "weights")
        b = np.zeros(W.shape[0]) if offset is None else as_vector(offset, "offset", W.shape[0])
        return cls(
            evaluate=lambda x: x @ W.T + b,
            jacobian_fn=lambda x: W,
            vectorized=True,
            name=name,
        )


@dataclass(frozen=True, eq=False)
class McVarianceEstimate:
    """
    Estimation Monte Carlo de Cov(f(X)).

    Attributes:
        covariance: Covariance empirique j×j
        standard_error: Erreur standard des variances (diagonale), longueur j
        samples: Nombre de tirages
        seed: Graine utilisée
    """
    covariance: np.ndarray
    standard_error: np.ndarray
    samples: int
    seed: int


def exposure_map(risk_model: RiskModel, trades: Optional[np.ndarray] = None) -> SmoothMap:
    """
    Variation de valeur du portefeuille (couvert par x) en fonction des facteurs :
    F ↦ (r + Hx)ᵀF, application linéaire.
    """
    exposure = risk_model.exposure.copy()
    if trades is not None:
        exposure = exposure + risk_model.sensitivity @ as_vector(trades, "trades", risk_model.n)
    return SmoothMap.linear(exposure.reshape(1, -1), name="portfolio-value")


def _validated_covariance(cov, k: int) -> np.ndarray:
    matrix = check_symmetric(as_matrix(cov, "cov", (k, k)), "cov", error=NonSymmetricCov)
    config = get_config().solver
    if not is_positive_semidefinite(matrix, config.psd_tolerance, config.eigen_check_max_dim):
        raise NotPositiveDefinite("cov is not positive semidefinite", field="cov")
    return matrix


def delta_variance(smooth_map: SmoothMap, mean, cov) -> np.ndarray:
    """
    Variance par la méthode delta : J(μ)·Σ·J(μ)ᵀ.

    Args:
        smooth_map: Application f
        mean: Moyenne μ (longueur k)
        cov: Covariance Σ (k×k)

    Returns:
        Matrice j×j symétrique PSD

    Raises:
        NonSymmetricCov: Si Σ n'est pas symétrique
    """
    mean = as_vector(mean, "mean")
    cov = _validated_covariance(cov, mean.shape[0])
    jacobian = smooth_map.jacobian(mean)
    if jacobian.shape[1] != mean.shape[0]:
        raise DimensionMismatch(
            f"jacobian has {jacobian.shape[1]} columns, mean has length {mean.shape[0]}",
            field="mean",
        )
    return symmetrize(jacobian @ cov @ jacobian.T)


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """
    Facteur F (k×rang) tel que F·Fᵀ = Σ, par Cholesky à pivotage complet (LAPACK dpstrf).

    Raises:
        CovFactorizationFailure: Σ non PSD ou reconstruction inexacte
    """
    k = cov.shape[0]
    config = get_config().solver
    if not is_positive_semidefinite(cov, config.psd_tolerance, config.eigen_check_max_dim):
        raise CovFactorizationFailure("covariance is not positive semidefinite")
    if not np.any(cov):
        return np.zeros((k, 0))

    factor, piv, rank, info = lapack.dpstrf(cov, lower=1)
    if info < 0:
        raise CovFactorizationFailure(f"dpstrf failed with info={info}")

    lower = np.tril(factor)[:, :rank]
    result = np.zeros((k, rank))
    result[piv - 1, :] = lower

    error = float(np.max(np.abs(result @ result.T - cov)))
    if error > 1e-8 * max(float(np.max(np.abs(cov))), 1.0):
        raise CovFactorizationFailure(f"pivoted Cholesky reconstruction error {error:.3e}")
    logger.debug(f"Pivoted Cholesky factor: dimension {k}, rank {rank}")
    return result


def _sample_chunks(
    smooth_map: SmoothMap, mean: np.ndarray, factor: np.ndarray, samples: int, seed: int
) -> Iterator[np.ndarray]:
    """Tirages gaussiens par blocs ; la séquence ne dépend que de la graine."""
    rng = np.random.default_rng(seed)
    chunk = get_config().deltavar.mc_chunk_size
    remaining = samples
    while remaining > 0:
        size = min(chunk, remaining)
        normals = rng.standard_normal((size, factor.shape[1]))
        yield smooth_map.evaluate_batch(mean + normals @ factor.T)
        remaining -= size


def mc_variance_estimate(
    smooth_map: SmoothMap, mean, cov, samples: Optional[int] = None, seed: Optional[int] = None
) -> McVarianceEstimate:
    """
    Covariance empirique de f(X), X ~ N(μ, Σ), avec erreur standard des variances.

    Deux passes sur la même séquence pseudo-aléatoire : moyenne et covariance
    (fusion de blocs), puis moment centré d'ordre 4.

    Args:
        smooth_map: Application f
        mean: μ
        cov: Σ (PSD)
        samples: Nombre de tirages (≥ mc_min_samples)
        seed: Graine (défaut : SystemConfig.default_seed)

    Returns:
        McVarianceEstimate

    Raises:
        CovFactorizationFailure: Σ non factorisable
        ValidationError: Trop peu de tirages
    """
    config = get_config()
    samples = config.deltavar.default_samples if samples is None else int(samples)
    seed = config.system.default_seed if seed is None else int(seed)
    if samples < config.deltavar.mc_min_samples:
        raise ValidationError(
            f"samples must be >= {config.deltavar.mc_min_samples}, got {samples}", field="samples"
        )

    mean = as_vector(mean, "mean")
    cov = check_symmetric(as_matrix(cov, "cov", (mean.shape[0], mean.shape[0])), "cov", error=NonSymmetricCov)
    factor = psd_factor(cov)

    count = 0
    running_mean = None
    m2 = None
    for values in _sample_chunks(smooth_map, mean, factor, samples, seed):
        size = values.shape[0]
        chunk_mean = values.mean(axis=0)
        centered = values - chunk_mean
        chunk_m2 = centered.T @ centered
        if running_mean is None:
            running_mean, m2, count = chunk_mean, chunk_m2, size
            continue
        delta = chunk_mean - running_mean
        total = count + size
        m2 = m2 + chunk_m2 + np.outer(delta, delta) * (count * size / total)
        running_mean = running_mean + delta * (size / total)
        count = total

    covariance = symmetrize(m2 / (count - 1))

    fourth = np.zeros_like(running_mean)
    for values in _sample_chunks(smooth_map, mean, factor, samples, seed):
        fourth += np.sum((values - running_mean) ** 4, axis=0)
    fourth /= count
    variances = np.diag(covariance)
    standard_error = np.sqrt(np.maximum(fourth - variances ** 2, 0.0) / count)

    logger.info(f"Monte Carlo variance of '{smooth_map.name}' over {count} samples (seed {seed})")
    return McVarianceEstimate(covariance, standard_error, count, seed)


def mc_variance_oracle(smooth_map: SmoothMap, mean, cov, samples: Optional[int] = None, seed: Optional[int] = None) -> np.ndarray:
    """Covariance empirique j×j de f(X), déterministe pour une graine donnée."""
    return mc_variance_estimate(smooth_map, mean, cov, samples, seed).covariance
