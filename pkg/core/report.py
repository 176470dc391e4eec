"""
Report Exporter - hedgekit.
Construit les rapports JSON (HedgeReport, rapports de modèles de risque)
et les écrit sur stdout ou dans un fichier, avec empreintes SHA-256 des entrées.
"""

from pathlib import Path
from typing import Dict, Optional
import hashlib
import json
import logging

from pydantic import BaseModel

from config.manager import get_config
from core.cds import CDS_UNIT_NOTIONAL
from core.hedger import AugmentedAssembly, CostMode, CostSpec
from core.portfolio import (
    HedgeResult,
    HedgeUniverse,
    NotionalUnit,
    Portfolio,
    Product,
    RiskModel,
)
from core.schemas import HedgeReport, TradeEntry


def file_digest(path: Path) -> str:
    """Empreinte SHA-256 (hexadécimale) du contenu brut d'un fichier."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def notional_unit_label(product: Product) -> str:
    """Libellé de l'unité de notionnel (ex. '1000000 EUR' pour un indice CDS)."""
    unit = product.convention.notional_unit
    if unit is NotionalUnit.CURRENCY_AMOUNT:
        return f"{CDS_UNIT_NOTIONAL} {product.convention.currency}"
    return unit.value[0]


class ReportExporter:
    """
    Exporteur de rapports.
    Les nombres sont écrits sous leur représentation la plus courte exacte (aller-retour sans perte).
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def digests(self, paths: Dict[str, Optional[Path]]) -> Dict[str, str]:
        """
        Empreintes des fichiers d'entrée présents.

        Args:
            paths: {rôle: chemin ou None}

        Returns:
            {rôle: sha256}
        """
        return {role: file_digest(path) for role, path in paths.items() if path is not None}

    def build_hedge_report(
        self,
        result: HedgeResult,
        portfolio: Portfolio,
        risk_model: RiskModel,
        inputs: Dict[str, str],
        universe: Optional[HedgeUniverse] = None,
        costs: Optional[CostSpec] = None,
        assembly: Optional[AugmentedAssembly] = None,
    ) -> HedgeReport:
        """
        Assemble le HedgeReport d'une couverture.

        Args:
            result: Résultat (trades éventuellement restreints à l'univers)
            portfolio: Portefeuille complet
            risk_model: Modèle de risque (complet)
            inputs: Empreintes des fichiers d'entrée
            universe: Correspondance d'indices si la couverture est restreinte
            costs: Spécification de coûts (λ_c, variante)
            assembly: QP augmenté (λ₀ effectivement utilisé)

        Returns:
            HedgeReport validé
        """
        trades = universe.expand(result.trades) if universe is not None else result.trades
        diagnostics = dict(result.solver_diagnostics)

        lambda_0 = assembly.lambda_0 if assembly is not None else diagnostics.get("lambda_0")
        admissible = assembly.lambda0_admissible if assembly is not None else diagnostics.get("lambda0_admissible")

        literal_q = False
        if costs is not None and costs.mode is CostMode.SYMMETRIC:
            literal_q = get_config().hedge.literal_q if costs.literal_q is None else costs.literal_q

        currencies = {p.convention.currency for p in portfolio.products}
        report = HedgeReport(
            inputs=inputs,
            mode=result.mode,
            lambda_c=costs.lambda_c if costs is not None else 0.0,
            lambda_0=lambda_0,
            lambda0_admissible=tuple(admissible) if admissible is not None else None,
            regularization=diagnostics.get("regularization"),
            literal_q=bool(literal_q),
            currency=currencies.pop() if len(currencies) == 1 else None,
            exposure_unit=risk_model.exposure_unit,
            trades=[
                TradeEntry(
                    product_id=product.id,
                    trade=float(trade),
                    notional_unit=notional_unit_label(product),
                    hedgeable=product.hedgeable,
                )
                for product, trade in zip(portfolio.products, trades)
            ],
            variance_before=result.variance_before,
            variance_after=result.variance_after,
            variance_reduction=result.variance_reduction,
            cost_paid=result.cost_paid,
            solver_diagnostics=diagnostics,
        )
        self.logger.info(
            f"Hedge report built: mode={result.mode}, reduction={result.variance_reduction:.4%}"
        )
        return report

    def render(self, report: BaseModel) -> str:
        """Sérialise un modèle pydantic en JSON indenté (alias de champs inclus)."""
        return report.model_dump_json(indent=2, by_alias=True)

    def export(self, report: BaseModel, out_path: Optional[Path] = None) -> str:
        """
        Écrit le rapport dans out_path, ou le retourne pour stdout.

        Args:
            report: Rapport pydantic
            out_path: Fichier de sortie (None = stdout)

        Returns:
            Le JSON produit
        """
        text = self.render(report)
        if out_path is None:
            return text
        try:
            out_path = Path(out_path)
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(text + "\n", encoding="utf-8")
            self.logger.info(f"Report exported to {out_path}")
            return text
        except OSError as e:
            self.logger.error(f"Failed to export report: {e}", exc_info=True)
            raise

    def export_dict(self, payload: Dict, out_path: Path, schema_version: str) -> Path:
        """Écrit un dictionnaire brut (ex. dump du QP augmenté) avec sa version de schéma."""
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, 'w', encoding='utf-8') as f:
            json.dump({"schema_version": schema_version, **payload}, f, indent=2)
        self.logger.info(f"Payload exported to {out_path}")
        return out_path


def get_report_exporter() -> ReportExporter:
    """
    Factory function pour obtenir l'exporteur de rapports.

    Returns:
        Instance de ReportExporter
    """
    return ReportExporter()
