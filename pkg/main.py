"""
hedgekit - Main Orchestrator
Interface en ligne de commande de couverture de portefeuilles multi-actifs.

Sous-commandes:
    - hedge: Couverture (sans coûts, coûts symétriques, asymétriques, diagonale)
    - check-pd: Spectre des matrices P augmentées et intervalles admissibles de λ₀
    - bond-risk: Modèle de risque obligataire (Nelson–Siegel + spreads), couverture optionnelle
    - cds-risk: Modèle de risque d'indices CDS (CDV01), couverture optionnelle
    - variance-check: Méthode delta contre Monte Carlo

Codes de sortie : 0 succès, 2 entrée invalide, 3 échec du solveur.
stdout est réservé au JSON ; les logs techniques vont dans le fichier de logs.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
from colorama import init, Fore, Style
from pydantic import BaseModel
from pydantic import ValidationError as SchemaError

from config.manager import get_config
from core.bonds import bond_portfolio, build_bond_risk_model
from core.cds import build_cds_risk_model, cds_portfolio, supports_diagonal_path
from core.delta_variance import SmoothMap, delta_variance, exposure_map, mc_variance_estimate
from core.errors import DimensionMismatch, HedgeKitError, InvalidInput, SolverError, ValidationError
from core.hedger import CostSpec, get_hedger
from core.portfolio import (
    HedgeUniverse,
    Portfolio,
    RiskModel,
    check_same_universe,
    portfolio_variance,
    restrict_to_hedge_universe,
)
from core.report import get_report_exporter
from core.schemas import (
    BondFile,
    CdsFile,
    CostsFile,
    CovarianceFile,
    ErrorDetail,
    ErrorReport,
    HedgeReport,
    PortfolioFile,
    ProductRiskEntry,
    RiskModelFile,
    RiskModelReport,
    SpectralEntry,
    SpectralReportFile,
    VarianceCheckReport,
    VarianceCheckRow,
)
from core.spectral import build_spectral_report

init(autoreset=True)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3

HEDGE_MODES = ("auto", "unconstrained", "symmetric", "asymmetric", "diagonal")
VARIANCE_MAPS = ("linear", "square", "sin")

SchemaT = TypeVar("SchemaT", bound=BaseModel)


class HedgeKitCli:
    """
    Orchestrateur de la CLI.
    Charge les fichiers, exécute la sous-commande, écrit le rapport JSON
    et traduit les erreurs en codes de sortie.
    """

    def __init__(self, args: argparse.Namespace):
        """
        Initialise l'orchestrateur.

        Args:
            args: Arguments analysés
        """
        self.args = args
        self.config = get_config()
        if args.config:
            self.config.load_yaml(args.config)
        if args.log_level:
            self.config.system.log_level = args.log_level
        self.colored = self.config.system.colored_output and not args.no_color

        self.logger = self._setup_logging()
        self.hedger = get_hedger()
        self.exporter = get_report_exporter()

    def _setup_logging(self) -> logging.Logger:
        """
        Configure le système de logging.
        Redirige les logs techniques vers un fichier, stdout reste réservé au JSON.

        Returns:
            Logger configuré
        """
        log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        log_level = getattr(logging, self.config.system.log_level.upper(), logging.INFO)

        log_file = self.config.system.log_file
        handlers: List[logging.Handler] = (
            [logging.FileHandler(Path(log_file), mode='w', encoding='utf-8')]
            if log_file else [logging.NullHandler()]
        )
        # force : un second main() dans le même processus remplace les handlers du premier
        logging.basicConfig(level=log_level, format=log_format, handlers=handlers, force=True)
        logging.getLogger().setLevel(log_level)

        return logging.getLogger(__name__)

    def _status(self, tag: str, color: str, message: str):
        """Ligne de statut humaine sur stderr."""
        if self.colored:
            print(f"{color}[{tag}]{Style.RESET_ALL} {message}", file=sys.stderr)
        else:
            print(f"[{tag}] {message}", file=sys.stderr)

    # ------------------------------------------------------------------ #
    # Exécution
    # ------------------------------------------------------------------ #

    def run(self) -> int:
        """
        Exécute la sous-commande et écrit son rapport.

        Returns:
            Code de sortie
        """
        handlers = {
            "hedge": self.cmd_hedge,
            "check-pd": self.cmd_check_pd,
            "bond-risk": self.cmd_bond_risk,
            "cds-risk": self.cmd_cds_risk,
            "variance-check": self.cmd_variance_check,
        }
        command = self.args.command
        self.logger.info(f"Running command {command}")
        self._status("RUN", Fore.CYAN, command)

        try:
            report = handlers[command]()
        except SolverError as e:
            self.logger.error(f"Solver failure: {e}", exc_info=True)
            return self._fail(type(e).__name__, str(e), None, EXIT_SOLVER)
        except ValidationError as e:
            self.logger.error(f"Validation failure: {e}", exc_info=True)
            return self._fail(type(e).__name__, str(e), e.field, EXIT_VALIDATION)
        except SchemaError as e:
            self.logger.error(f"Schema validation failure: {e}", exc_info=True)
            first = e.errors()[0] if e.errors() else {}
            location = ".".join(str(part) for part in first.get("loc", ())) or None
            message = first.get("msg", str(e))
            return self._fail("SchemaError", message, location, EXIT_VALIDATION)
        except (ValueError, OSError) as e:
            self.logger.error(f"Invalid input: {e}", exc_info=True)
            return self._fail(type(e).__name__, str(e), None, EXIT_VALIDATION)

        self._emit(report)
        self._status("DONE", Fore.GREEN, f"{command} completed")
        return EXIT_OK

    def _emit(self, report: BaseModel):
        out = Path(self.args.out) if getattr(self.args, "out", None) else None
        text = self.exporter.export(report, out)
        if out is None:
            print(text)
        else:
            self._status("OUT", Fore.YELLOW, f"report written to {out}")

    def _fail(self, error_type: str, message: str, field: Optional[str], code: int) -> int:
        report = ErrorReport(error=ErrorDetail(type=error_type, message=message, field=field))
        print(self.exporter.render(report))
        self._status("ERROR", Fore.RED, f"{error_type}: {message}")
        return code

    # ------------------------------------------------------------------ #
    # Chargement
    # ------------------------------------------------------------------ #

    def _load(self, schema: Type[SchemaT], path: str) -> SchemaT:
        text = Path(path).read_text(encoding="utf-8")
        return schema.model_validate_json(text)

    def _digests(self, **paths: Optional[str]) -> dict:
        return self.exporter.digests({k: Path(v) if v else None for k, v in paths.items()})

    def _notionals(self, from_file: Optional[List[float]], n: int) -> np.ndarray:
        text = getattr(self.args, "notionals", None)
        if text:
            try:
                values = [float(v) for v in text.split(",")]
            except ValueError as e:
                raise InvalidInput(f"cannot parse notionals {text!r}", field="notionals") from e
        elif from_file is not None:
            values = from_file
        else:
            raise InvalidInput("notionals must be given with --notionals or in the input file", field="notionals")
        if len(values) != n:
            raise DimensionMismatch(f"expected {n} notionals, got {len(values)}", field="notionals")
        return np.array(values, dtype=np.float64)

    def _seed(self) -> int:
        env_var = self.config.system.seed_env_var
        env_value = os.environ.get(env_var)
        if env_value is not None:
            try:
                return int(env_value)
            except ValueError as e:
                raise InvalidInput(f"{env_var} must be an integer, got {env_value!r}", field=env_var) from e
        if self.args.seed is not None:
            return int(self.args.seed)
        return self.config.system.default_seed

    # ------------------------------------------------------------------ #
    # Couverture
    # ------------------------------------------------------------------ #

    @staticmethod
    def _select_costs(values, n: int, universe: Optional[HedgeUniverse]) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] == n:
            return values
        if universe is not None and values.shape[0] == universe.n_full:
            return values[list(universe.indices)]
        raise DimensionMismatch(f"cost vectors have length {values.shape[0]}, expected {n}", field="costs")

    def _cost_spec(self, mode: str, n: int, universe: Optional[HedgeUniverse]) -> CostSpec:
        args = self.args
        costs_file = self._load(CostsFile, args.costs) if args.costs else None
        regularization = "exact" if args.exact_regularization else None
        literal_q = True if args.literal_q else None

        if mode == "symmetric":
            if costs_file is None:
                c = np.zeros(n)
            elif costs_file.c is None:
                raise InvalidInput("symmetric mode needs 'c' in the costs file", field="c")
            else:
                c = self._select_costs(costs_file.c, n, universe)
            return CostSpec.symmetric(
                c, args.lambda_c, args.lambda_0, regularization=regularization, literal_q=literal_q
            )

        if costs_file is None:
            c_plus = c_minus = np.zeros(n)
        elif costs_file.c_plus is not None and costs_file.c_minus is not None:
            c_plus, c_minus = costs_file.c_plus, costs_file.c_minus
        else:
            c_plus = c_minus = costs_file.c
        return CostSpec.asymmetric(
            self._select_costs(c_plus, n, universe), self._select_costs(c_minus, n, universe),
            args.lambda_c, args.lambda_0,
        )

    def _hedge(self, risk_model: RiskModel, portfolio: Portfolio, inputs: dict) -> HedgeReport:
        """Exécute la couverture demandée par les options de hedge et construit le rapport."""
        args = self.args
        check_same_universe(risk_model, portfolio)
        model, universe = risk_model, None
        if args.hedge_universe_only:
            model, universe = restrict_to_hedge_universe(risk_model, portfolio)

        mode = args.mode
        if mode == "auto":
            mode = "diagonal" if supports_diagonal_path(model) else "unconstrained"
            self.logger.info(f"Auto mode resolved to {mode}")
        self._status("HEDGE", Fore.YELLOW, f"mode={mode}, products={model.n}, factors={model.m}")

        costs = None
        if mode == "unconstrained":
            result = self.hedger.solve_unconstrained(model)
        elif mode == "diagonal":
            costs = self._cost_spec("asymmetric", model.n, universe)
            result = self.hedger.solve_diagonal(model, costs.c_plus, costs.c_minus, costs.lambda_c)
        else:
            costs = self._cost_spec(mode, model.n, universe)
            if mode == "symmetric":
                assembly = self.hedger.assemble_symmetric(model, costs)
            else:
                assembly = self.hedger.assemble_asymmetric(model, costs)
            if args.dump_qp:
                self.exporter.export_dict(
                    assembly.to_dict(), Path(args.dump_qp), self.config.system.schema_version
                )
            if mode == "symmetric":
                result = self.hedger.solve_symmetric(model, costs, assembly)
            else:
                result = self.hedger.solve_asymmetric(model, costs, assembly)

        if args.dump_qp and mode in ("unconstrained", "diagonal"):
            self.logger.warning(f"--dump-qp ignored: mode {mode} solves in closed form")

        return self.exporter.build_hedge_report(
            result, portfolio, risk_model, inputs, universe=universe, costs=costs
        )

    def cmd_hedge(self) -> HedgeReport:
        """Sous-commande hedge : portefeuille + modèle de risque → HedgeReport."""
        args = self.args
        portfolio = self._load(PortfolioFile, args.portfolio).to_portfolio()
        risk_model = self._load(RiskModelFile, args.riskmodel).to_risk_model()
        inputs = self._digests(portfolio=args.portfolio, riskmodel=args.riskmodel, costs=args.costs)
        return self._hedge(risk_model, portfolio, inputs)

    # ------------------------------------------------------------------ #
    # Spectre
    # ------------------------------------------------------------------ #

    def cmd_check_pd(self) -> SpectralReportFile:
        """Sous-commande check-pd : spectres prédits et directs des deux formulations."""
        args = self.args
        risk_model = self._load(RiskModelFile, args.riskmodel).to_risk_model()
        H, C = risk_model.sensitivity, risk_model.covariance
        regularization = "exact" if args.exact_regularization else self.config.hedge.regularization

        entries = {}
        for formulation in ("symmetric", "asymmetric"):
            report = build_spectral_report(H, C, args.lambda_0, formulation, regularization)
            entries[formulation] = SpectralEntry.model_validate(report.to_dict())
            state = "PD" if report.is_positive_definite else "not PD"
            self._status("SPECTRUM", Fore.YELLOW, f"{formulation}: lambda_0={report.lambda_0:.6g} -> {state}")

        return SpectralReportFile(
            inputs=self._digests(riskmodel=args.riskmodel),
            lambda_0_requested=args.lambda_0,
            symmetric=entries["symmetric"],
            asymmetric=entries["asymmetric"],
        )

    # ------------------------------------------------------------------ #
    # Modèles de risque
    # ------------------------------------------------------------------ #

    def _risk_report(
        self,
        command: str,
        risk_model: RiskModel,
        portfolio: Portfolio,
        inputs: dict,
        products: List[ProductRiskEntry],
    ) -> RiskModelReport:
        args = self.args
        model_file = RiskModelFile.from_risk_model(risk_model)
        if args.model_out:
            self.exporter.export(model_file, Path(args.model_out))
        hedge = self._hedge(risk_model, portfolio, inputs) if args.then_hedge else None
        return RiskModelReport(
            command=command,
            inputs=inputs,
            products=products,
            risk_model=model_file,
            variance=portfolio_variance(risk_model),
            hedge=hedge,
        )

    def cmd_bond_risk(self) -> RiskModelReport:
        """Sous-commande bond-risk : obligations + covariance des facteurs → modèle de risque."""
        args = self.args
        bond_file = self._load(BondFile, args.bonds)
        cov_file = self._load(CovarianceFile, args.covariance)
        curve = bond_file.curve.to_curve()
        bonds = bond_file.to_bonds(curve)
        notionals = self._notionals(bond_file.notionals, len(bonds))

        risk_model = build_bond_risk_model(bonds, curve, cov_file.covariance, notionals)
        if cov_file.factors is not None and list(cov_file.factors) != list(risk_model.factor_names):
            raise DimensionMismatch(
                f"covariance factors {cov_file.factors} do not match {list(risk_model.factor_names)}",
                field="factors",
            )
        portfolio = bond_portfolio(bonds, curve, notionals)
        products = [
            ProductRiskEntry(id=b.id, notional=float(n), price=float(p), spread=b.idiosyncratic_spread)
            for b, n, p in zip(bonds, notionals, portfolio.prices)
        ]
        inputs = self._digests(bonds=args.bonds, covariance=args.covariance, costs=args.costs)
        return self._risk_report("bond-risk", risk_model, portfolio, inputs, products)

    def cmd_cds_risk(self) -> RiskModelReport:
        """Sous-commande cds-risk : indices CDS + covariance des spreads → modèle de risque."""
        args = self.args
        cds_file = self._load(CdsFile, args.cds)
        indices = [entry.to_product() for entry in cds_file.indices]
        notionals = self._notionals(cds_file.notionals, len(indices))

        risk_model = build_cds_risk_model(indices, cds_file.spread_cov, notionals)
        portfolio = cds_portfolio(indices, notionals)
        products = [ProductRiskEntry(id=p.id, notional=float(n)) for p, n in zip(indices, notionals)]
        inputs = self._digests(cds=args.cds, costs=args.costs)
        return self._risk_report("cds-risk", risk_model, portfolio, inputs, products)

    # ------------------------------------------------------------------ #
    # Méthode delta
    # ------------------------------------------------------------------ #

    def _variance_cases(self) -> List[Tuple[SmoothMap, np.ndarray, np.ndarray, Optional[str]]]:
        args = self.args
        sigma = args.sigma
        cases = []
        for name in args.maps or VARIANCE_MAPS:
            if name == "linear":
                cases.append((
                    SmoothMap.linear([[2.0, -1.0]], name="linear"),
                    np.array([0.5, -1.0]),
                    np.array([[1.0, 0.3], [0.3, 2.0]]),
                    None,
                ))
            elif name == "square":
                s = 1.0 if sigma is None else sigma
                cases.append((
                    SmoothMap(lambda x: x ** 2, lambda x: np.atleast_2d(2.0 * x), vectorized=True, name="square"),
                    np.zeros(1),
                    np.array([[s ** 2]]),
                    "first derivative vanishes at the mean: the delta method degenerates to zero",
                ))
            elif name == "sin":
                s = 0.01 if sigma is None else sigma
                cases.append((
                    SmoothMap(np.sin, lambda x: np.atleast_2d(np.cos(x)), vectorized=True, name="sin"),
                    np.zeros(1),
                    np.array([[s ** 2]]),
                    None,
                ))
        if args.riskmodel:
            risk_model = self._load(RiskModelFile, args.riskmodel).to_risk_model()
            cases.append((exposure_map(risk_model), np.zeros(risk_model.m), risk_model.covariance, None))
        return cases

    def cmd_variance_check(self) -> VarianceCheckReport:
        """Sous-commande variance-check : méthode delta contre Monte Carlo reproductible."""
        args = self.args
        seed = self._seed()
        samples = args.samples or self.config.deltavar.default_samples

        rows = []
        for smooth_map, mean, cov, note in self._variance_cases():
            delta = float(delta_variance(smooth_map, mean, cov)[0, 0])
            estimate = mc_variance_estimate(smooth_map, mean, cov, samples, seed)
            mc = float(estimate.covariance[0, 0])
            standard_error = float(estimate.standard_error[0])
            rows.append(VarianceCheckRow(
                map=smooth_map.name,
                mean=mean.tolist(),
                cov=np.asarray(cov).tolist(),
                variance_delta=delta,
                variance_mc=mc,
                standard_error=standard_error,
                relative_error=abs(mc - delta) / abs(delta) if delta != 0.0 else None,
                within_3_standard_errors=abs(mc - delta) <= 3.0 * standard_error,
                note=note,
            ))
            self._status("VARIANCE", Fore.YELLOW, f"{smooth_map.name}: delta={delta:.6g}, mc={mc:.6g}")

        return VarianceCheckReport(seed=seed, samples=samples, rows=rows)


def _add_hedge_options(parser: argparse.ArgumentParser, default_mode: str):
    parser.add_argument("--mode", choices=HEDGE_MODES, default=default_mode, help="Hedging problem to solve")
    parser.add_argument("--lambda-c", type=float, default=0.0, help="Cash paid per unit of variance reduction")
    parser.add_argument("--lambda-0", type=float, default=None, help="Coupling weight (default: midpoint of the admissible interval)")
    parser.add_argument("--costs", default=None, help="Costs file (JSON)")
    parser.add_argument("--hedge-universe-only", action="store_true", help="Trade hedgeable products only")
    parser.add_argument("--dump-qp", default=None, help="Write the augmented QP to this JSON file")
    parser.add_argument(
        "--paper-literal-q", "--literal-q", dest="literal_q", action="store_true",
        help="Use the printed linear term of the symmetric problem (cost weight lambda_0 in the x-block)",
    )
    parser.add_argument("--exact-regularization", action="store_true", help="Use the exact symmetric regularization matrix")


def build_parser() -> argparse.ArgumentParser:
    """Construit l'analyseur d'arguments et ses sous-commandes."""
    parser = argparse.ArgumentParser(
        prog="hedgekit",
        description="Cross-asset portfolio hedging toolkit",
    )
    parser.add_argument("--config", default=None, help="YAML configuration overrides")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None)
    parser.add_argument("--no-color", action="store_true", help="Plain status lines on stderr")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (overridden by HEDGEKIT_SEED)")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command")

    hedge_parser = subparsers.add_parser("hedge", help="Hedge a portfolio")
    hedge_parser.add_argument("portfolio", help="Portfolio file (JSON)")
    hedge_parser.add_argument("riskmodel", help="Risk model file (JSON)")
    hedge_parser.add_argument("--out", default=None, help="Report file (default: stdout)")
    _add_hedge_options(hedge_parser, "unconstrained")

    pd_parser = subparsers.add_parser("check-pd", help="Spectral check of the augmented QP matrices")
    pd_parser.add_argument("riskmodel", help="Risk model file (JSON)")
    pd_parser.add_argument("--lambda-0", type=float, default=None)
    pd_parser.add_argument("--exact-regularization", action="store_true")
    pd_parser.add_argument("--out", default=None)

    for name, inputs, help_text in (
        ("bond-risk", ("bonds", "covariance"), "Build a bond risk model"),
        ("cds-risk", ("cds",), "Build a CDS index risk model"),
    ):
        risk_parser = subparsers.add_parser(name, help=help_text)
        for positional in inputs:
            risk_parser.add_argument(positional, help=f"{positional} file (JSON)")
        risk_parser.add_argument("--notionals", default=None, help="Comma-separated notionals")
        risk_parser.add_argument("--model-out", default=None, help="Write the risk model file here")
        risk_parser.add_argument("--then-hedge", action="store_true", help="Hedge the resulting model")
        risk_parser.add_argument("--out", default=None)
        _add_hedge_options(risk_parser, "auto")

    var_parser = subparsers.add_parser("variance-check", help="Delta method against Monte Carlo")
    var_parser.add_argument("--map", dest="maps", action="append", choices=VARIANCE_MAPS, default=None)
    var_parser.add_argument("--sigma", type=float, default=None, help="Standard deviation of scalar maps")
    var_parser.add_argument("--samples", type=int, default=None)
    var_parser.add_argument("--riskmodel", default=None, help="Add the portfolio-value map of this risk model")
    var_parser.add_argument("--out", default=None)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Point d'entrée principal de l'application.

    Args:
        argv: Arguments (défaut : sys.argv[1:])

    Returns:
        Code de sortie
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    try:
        app = HedgeKitCli(args)
    except (HedgeKitError, ValueError, OSError) as e:
        logging.error(f"Erreur d'initialisation: {e}", exc_info=True)
        print(ErrorReport(error=ErrorDetail(type=type(e).__name__, message=str(e))).model_dump_json(indent=2))
        return EXIT_VALIDATION
    return app.run()


if __name__ == "__main__":
    sys.exit(main())
