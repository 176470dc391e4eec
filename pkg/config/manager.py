"""
Configuration Manager for hedgekit.
Centralise les tolérances numériques, les paramètres de couverture et les réglages système.
"""

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Tuple
import logging

import yaml


@dataclass
class SolverConfig:
    """
    Configuration du solveur QP dense (point intérieur primal-dual).

    Attributes:
        tolerance: Tolérance relative sur le saut de dualité et les résidus
        max_iterations: Nombre maximal d'itérations de Mehrotra
        step_scale: Facteur de recul appliqué au pas maximal (reste strictement intérieur)
        regularization_start: Première régularisation ε·I du système KKT
        regularization_max: Régularisation maximale avant NumericalFailure
        divergence_threshold: Seuil de divergence des itérés (infaisabilité / non-borné)
        psd_tolerance: Tolérance relative sur la valeur propre minimale de P
        eigen_check_max_dim: Dimension maximale pour la vérification PSD par valeurs propres
        polish: Résolution finale du système KKT sur l'ensemble actif identifié
    """
    tolerance: float = 1e-8
    max_iterations: int = 100
    step_scale: float = 0.99
    regularization_start: float = 1e-10
    regularization_max: float = 1e-6
    divergence_threshold: float = 1e12
    psd_tolerance: float = 1e-10
    eigen_check_max_dim: int = 200
    polish: bool = True


@dataclass
class HedgeConfig:
    """
    Configuration des problèmes de couverture.

    Attributes:
        complementarity_tolerance: Tolérance (relative) sur max x⁺ᵢ·x⁻ᵢ
        lambda0_margin: Marge relative (× λ′_min) exigée à l'intérieur de l'intervalle admissible
        lambda0_fraction: Position par défaut de λ₀ dans l'intervalle admissible (0.5 = milieu)
        regularization: Variante de la matrice P symétrique ('printed' ou 'exact')
        literal_q: Assembler le vecteur q symétrique sous sa forme imprimée
    """
    complementarity_tolerance: float = 1e-6
    lambda0_margin: float = 1e-9
    lambda0_fraction: float = 0.5
    regularization: str = "printed"
    literal_q: bool = False


@dataclass
class SpectralConfig:
    """
    Configuration des vérifications spectrales.

    Attributes:
        pd_tolerance: Tolérance (× norme spectrale) pour déclarer une matrice définie positive
        rank_tolerance: Tolérance (× ‖HᵀCH‖) sous laquelle HᵀCH est jugée singulière
        multiset_tolerance: Tolérance absolue de comparaison de multi-ensembles de valeurs propres
    """
    pd_tolerance: float = 1e-10
    rank_tolerance: float = 1e-12
    multiset_tolerance: float = 1e-9


@dataclass
class BondConfig:
    """
    Configuration du modèle obligataire.

    Attributes:
        theta: Échelle de temps (années) de la base de Nelson–Siegel
        calibration_bracket: Intervalle de recherche du spread idiosyncratique
        calibration_tolerance: Tolérance sur le prix lors de la calibration
        max_basis_horizon: Horizon (années) sur lequel la base doit rester finie
    """
    theta: float = 2.0
    calibration_bracket: Tuple[float, float] = (-1.0, 1.0)
    calibration_tolerance: float = 1e-10
    max_basis_horizon: float = 100.0


@dataclass
class DeltaVarConfig:
    """
    Configuration de la méthode delta et de l'oracle Monte Carlo.

    Attributes:
        fd_step: Pas relatif des différences finies centrées
        mc_min_samples: Nombre minimal de tirages de l'oracle
        mc_chunk_size: Taille des blocs de tirages (mémoire bornée)
        default_samples: Nombre de tirages par défaut
    """
    fd_step: float = 1e-5
    mc_min_samples: int = 1000
    mc_chunk_size: int = 100_000
    default_samples: int = 1_000_000


@dataclass
class SystemConfig:
    """
    Configuration système globale.

    Attributes:
        log_level: Niveau de logging ('DEBUG', 'INFO', 'WARNING', 'ERROR')
        log_file: Fichier de logs techniques (stdout reste réservé au JSON)
        schema_version: Version des formats de fichiers JSON
        default_seed: Graine par défaut des tirages aléatoires
        seed_env_var: Variable d'environnement qui remplace --seed
        colored_output: Lignes de statut colorées sur stderr
    """
    log_level: str = "INFO"
    log_file: Optional[str] = "hedgekit.log"
    schema_version: str = "1.0"
    default_seed: int = 20240101
    seed_env_var: str = "HEDGEKIT_SEED"
    colored_output: bool = True


class ConfigManager:
    """
    Gestionnaire centralisé de configuration.
    Singleton pattern pour garantir une instance unique dans toute l'application.
    """

    _instance = None
    _SECTIONS = {
        "solver": SolverConfig,
        "hedge": HedgeConfig,
        "spectral": SpectralConfig,
        "bonds": BondConfig,
        "deltavar": DeltaVarConfig,
        "system": SystemConfig,
    }

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """
        Initialise le gestionnaire avec les valeurs par défaut.
        Ne s'exécute qu'une seule fois grâce au flag _initialized.
        """
        if self._initialized:
            return

        self.logger = logging.getLogger(__name__)
        self.reset()
        self._initialized = True

    def reset(self):
        """Remet toutes les sections à leurs valeurs par défaut."""
        self.solver = SolverConfig()
        self.hedge = HedgeConfig()
        self.spectral = SpectralConfig()
        self.bonds = BondConfig()
        self.deltavar = DeltaVarConfig()
        self.system = SystemConfig()

    def load_yaml(self, path: str) -> "ConfigManager":
        """
        Superpose un fichier YAML aux valeurs courantes.

        Args:
            path: Chemin du fichier YAML ({section: {clé: valeur}})

        Returns:
            L'instance courante, validée

        Raises:
            ValueError: Section ou clé inconnue, ou configuration invalide
        """
        with open(Path(path), 'r', encoding='utf-8') as f:
            overrides = yaml.safe_load(f) or {}

        if not isinstance(overrides, dict):
            raise ValueError(f"Configuration file {path} must contain a mapping")

        for section_name, values in overrides.items():
            if section_name not in self._SECTIONS:
                raise ValueError(f"Unknown configuration section: {section_name}")
            section = getattr(self, section_name)
            known = {f.name for f in fields(section)}
            unknown = set(values or {}) - known
            if unknown:
                raise ValueError(
                    f"Unknown keys in section '{section_name}': {sorted(unknown)}"
                )
            if section_name == "bonds" and "calibration_bracket" in (values or {}):
                values = dict(values, calibration_bracket=tuple(values["calibration_bracket"]))
            setattr(self, section_name, replace(section, **(values or {})))

        self.logger.info(f"Configuration loaded from {path}")
        self.validate()
        return self

    def validate(self) -> bool:
        """
        Valide la cohérence de la configuration.

        Returns:
            True si la configuration est valide

        Raises:
            ValueError: Au premier paramètre invalide
        """
        low, high = self.bonds.calibration_bracket
        validations = [
            (self.solver.tolerance > 0, "Solver tolerance must be positive"),
            (self.solver.max_iterations > 0, "Solver max_iterations must be positive"),
            (0 < self.solver.step_scale < 1, "Solver step_scale must be in (0, 1)"),
            (0 < self.solver.regularization_start <= self.solver.regularization_max,
             "Solver regularization must satisfy 0 < start <= max"),
            (0 < self.hedge.lambda0_fraction < 1, "lambda0_fraction must be in (0, 1)"),
            (self.hedge.regularization in ("printed", "exact"),
             "Hedge regularization must be 'printed' or 'exact'"),
            (self.hedge.complementarity_tolerance > 0, "Complementarity tolerance must be positive"),
            (self.bonds.theta > 0, "Nelson-Siegel theta must be positive"),
            (low < high, "Calibration bracket must be increasing"),
            (self.deltavar.fd_step > 0, "Finite-difference step must be positive"),
            (self.deltavar.mc_min_samples >= 1, "mc_min_samples must be at least 1"),
            (self.deltavar.mc_chunk_size >= 1, "mc_chunk_size must be at least 1"),
            (self.system.log_level.upper() in ("DEBUG", "INFO", "WARNING", "ERROR"),
             "log_level must be DEBUG, INFO, WARNING or ERROR"),
        ]

        for is_valid, error_msg in validations:
            if not is_valid:
                raise ValueError(f"Configuration validation failed: {error_msg}")

        return True

    def __repr__(self) -> str:
        """Représentation lisible de la configuration."""
        return (
            f"ConfigManager(\n"
            f"  Solver: {self.solver}\n"
            f"  Hedge: {self.hedge}\n"
            f"  Spectral: {self.spectral}\n"
            f"  Bonds: {self.bonds}\n"
            f"  DeltaVar: {self.deltavar}\n"
            f"  System: {self.system}\n"
            f")"
        )


def get_config() -> ConfigManager:
    """
    Factory function pour obtenir l'instance unique de ConfigManager.

    Returns:
        Instance singleton de ConfigManager.

    Usage:
        >>> config = get_config()
        >>> print(config.solver.tolerance)
        1e-08
    """
    return ConfigManager()
