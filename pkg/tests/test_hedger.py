"""Tests of the hedging problems: closed form, symmetric and asymmetric costs, diagonal case."""

import numpy as np
import pytest
import scipy.optimize

from core.errors import (
    DimensionMismatch,
    Lambda0OutOfRange,
    NotDiagonal,
    NotPositiveDefinite,
    NumericalFailure,
)
from core.hedger import CostSpec, Hedger, Split, get_hedger
from core.portfolio import RiskModel
from core.qp_solver import QpSolution, QpStatus
from core.spectral import predicted_eigenvalues_asymmetric, multisets_match


def scalar_model(r, h=1.0, c=1.0):
    return RiskModel(("f",), [r], [[h]], [[c]])


def well_conditioned_model(rng, n):
    m = n + int(rng.integers(2, 6))
    H = rng.standard_normal((m, n))
    basis = rng.standard_normal((m, m))
    C = basis @ basis.T / m + 0.5 * np.eye(m)
    return RiskModel(tuple(f"f{i}" for i in range(m)), rng.standard_normal(m), H, C)


def test_unconstrained_identity(identity_model):
    result = get_hedger().solve_unconstrained(identity_model)
    np.testing.assert_allclose(result.trades, [-1.0, 2.0])
    assert result.variance_after == pytest.approx(0.0, abs=1e-14)
    assert result.variance_before == pytest.approx(5.0)
    assert result.cost_paid == 0.0
    assert result.solver_diagnostics["solver"] == "closed-form"


def test_unconstrained_scalar():
    result = get_hedger().solve_unconstrained(scalar_model(4.0, h=2.0))
    np.testing.assert_allclose(result.trades, [-2.0])


def test_unconstrained_zero_column():
    model = RiskModel(("f1", "f2"), [1.0, 1.0], [[1.0], [0.0]], np.eye(2))
    zero = RiskModel(("f1", "f2"), [1.0, 1.0], [[0.0], [0.0]], np.eye(2))
    get_hedger().solve_unconstrained(model)
    with pytest.raises(NotPositiveDefinite):
        get_hedger().solve_unconstrained(zero)


def test_unconstrained_zero_exposure():
    model = RiskModel(("f1", "f2"), [0.0, 0.0], np.eye(2), np.eye(2))
    result = get_hedger().solve_unconstrained(model)
    np.testing.assert_array_equal(result.trades, [0.0, 0.0])


def test_unconstrained_is_first_order_optimal(make_risk_model):
    model = make_risk_model(6, 3)
    result = get_hedger().solve_unconstrained(model)
    gradient = 2.0 * (model.gram() @ result.trades + model.linear_term())
    np.testing.assert_allclose(gradient, 0.0, atol=1e-9 * (1.0 + np.max(np.abs(model.linear_term()))))


def test_assemble_symmetric_scalar():
    assembly = get_hedger().assemble_symmetric(scalar_model(1.0), CostSpec.symmetric([0.0], 0.0, 0.5))
    np.testing.assert_allclose(assembly.P, np.diag([1.5, 1.0]))
    np.testing.assert_allclose(assembly.G, [[1.0, -1.0], [-1.0, -1.0]])
    assert assembly.split is Split.ABS_VALUE
    assert assembly.lambda0_admissible == pytest.approx((0.0, 2.0))


def test_assemble_symmetric_shapes(make_risk_model):
    model = make_risk_model(6, 4)
    assembly = get_hedger().assemble_symmetric(model, CostSpec.symmetric(np.ones(4), 1.0))
    assert assembly.P.shape == (8, 8)
    assert assembly.G.shape == (8, 8)
    assert assembly.q.shape == (8,)
    assert assembly.h.shape == (8,)
    low, high = assembly.lambda0_admissible
    assert assembly.lambda_0 == pytest.approx(0.5 * (low + high))


def test_assemble_symmetric_lambda0_out_of_range():
    with pytest.raises(Lambda0OutOfRange) as excinfo:
        get_hedger().assemble_symmetric(scalar_model(1.0), CostSpec.symmetric([0.0], 0.0, 3.0))
    assert excinfo.value.field == "lambda_0"


def test_assemble_symmetric_literal_q():
    costs = CostSpec.symmetric([1.0], 0.5, 0.1, literal_q=True)
    assembly = get_hedger().assemble_symmetric(scalar_model(1.0), costs)
    np.testing.assert_allclose(assembly.q, [2.0 + 0.1, 0.0])

    derived = get_hedger().assemble_symmetric(scalar_model(1.0), CostSpec.symmetric([1.0], 0.5, 0.1))
    np.testing.assert_allclose(derived.q, [2.0, 0.5])


def test_cost_length_mismatch(identity_model):
    with pytest.raises(DimensionMismatch):
        get_hedger().solve_symmetric(identity_model, CostSpec.symmetric([1.0, 1.0, 1.0], 1.0))


def test_symmetric_cost_free_matches_closed_form(rng):
    hedger = get_hedger()
    for _ in range(100):
        model = well_conditioned_model(rng, int(rng.integers(1, 11)))
        expected = hedger.solve_unconstrained(model).trades
        costs = CostSpec.symmetric(np.zeros(model.n), 0.0, regularization="exact")
        trades = hedger.solve_symmetric(model, costs).trades
        np.testing.assert_allclose(trades, expected, atol=1e-6 * (1.0 + np.max(np.abs(expected))))


def test_symmetric_printed_small_lambda0_matches_closed_form(identity_model):
    costs = CostSpec.symmetric([0.0, 0.0], 0.0, lambda_0=1e-7)
    result = get_hedger().solve_symmetric(identity_model, costs)
    np.testing.assert_allclose(result.trades, [-1.0, 2.0], atol=1e-6)
    assert result.solver_diagnostics["regularization"] == "printed"


def test_symmetric_large_cost_suppresses_trading():
    model = scalar_model(1.0)
    lambda_c = 1e6 * 2.0
    result = get_hedger().solve_symmetric(model, CostSpec.symmetric([1.0], lambda_c))
    assert np.max(np.abs(result.trades)) <= 1e-6


def test_symmetric_scalar_oracle():
    costs = CostSpec.symmetric([1.0], 0.5, lambda_0=0.1)
    result = get_hedger().solve_symmetric(scalar_model(1.0), costs)
    x = result.trades[0]
    assert -1.0 < x < 0.0

    def objective(t):
        # x-block 2 − λ₀, v-block 2λ₀, v = |x|
        return 0.5 * (2.0 - 0.1) * t ** 2 + 0.1 * t ** 2 + 2.0 * t + 0.5 * abs(t)

    grid = np.linspace(-1.0, 0.0, 200001)
    best = grid[np.argmin([objective(t) for t in grid])]
    assert x == pytest.approx(best, abs=1e-5)
    assert x == pytest.approx(-1.5 / 2.1, abs=1e-6)
    assert result.cost_paid == pytest.approx(0.5 * abs(x), rel=1e-6)


def test_assemble_asymmetric_scalar():
    costs = CostSpec.asymmetric([0.0], [0.0], 0.0, lambda_0=0.5)
    assembly = get_hedger().assemble_asymmetric(scalar_model(1.0), costs)
    np.testing.assert_allclose(assembly.P, [[2.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_allclose(assembly.G, -np.eye(2))
    assert assembly.split is Split.BUY_SELL


def test_assemble_asymmetric_spectrum(make_risk_model):
    model = make_risk_model(5, 3)
    assembly = get_hedger().assemble_asymmetric(model, CostSpec.asymmetric(np.ones(3), np.ones(3), 1.0))
    gram_eigs = np.linalg.eigvalsh(model.gram())
    predicted = [e.value for e in predicted_eigenvalues_asymmetric(gram_eigs, assembly.lambda_0)]
    assert multisets_match(predicted, np.linalg.eigvalsh(assembly.P), tol=1e-9 * (1.0 + gram_eigs[-1]))


def test_asymmetric_cost_free_matches_closed_form(rng):
    hedger = get_hedger()
    for _ in range(30):
        model = well_conditioned_model(rng, int(rng.integers(1, 8)))
        expected = hedger.solve_unconstrained(model).trades
        costs = CostSpec.asymmetric(np.zeros(model.n), np.zeros(model.n), 0.0)
        trades = hedger.solve_asymmetric(model, costs).trades
        np.testing.assert_allclose(trades, expected, atol=1e-6 * (1.0 + np.max(np.abs(expected))))


def test_asymmetric_equal_costs_match_symmetric(rng):
    hedger = get_hedger()
    for _ in range(10):
        model = well_conditioned_model(rng, int(rng.integers(1, 6)))
        c = rng.uniform(0.0, 1.0, model.n)
        lambda_c = float(rng.uniform(0.1, 1.0))
        symmetric = hedger.solve_symmetric(model, CostSpec.symmetric(c, lambda_c, regularization="exact"))
        asymmetric = hedger.solve_asymmetric(model, CostSpec.asymmetric(c, c, lambda_c))
        np.testing.assert_allclose(
            asymmetric.trades, symmetric.trades, atol=1e-5 * (1.0 + np.max(np.abs(symmetric.trades)))
        )


def test_asymmetric_zero_exposure():
    model = RiskModel(("f1", "f2"), [0.0, 0.0], np.eye(2), np.eye(2))
    trivial = get_hedger().solve_asymmetric(model, CostSpec.asymmetric([1.0, 1.0], [1.0, 1.0], 0.0))
    np.testing.assert_array_equal(trivial.trades, [0.0, 0.0])
    assert trivial.cost_paid == 0.0
    assert trivial.solver_diagnostics["solver"] == "trivial"

    costly = get_hedger().solve_asymmetric(model, CostSpec.asymmetric([1.0, 1.0], [1.0, 1.0], 2.0))
    np.testing.assert_allclose(costly.trades, [0.0, 0.0], atol=1e-8)
    assert costly.cost_paid == pytest.approx(0.0, abs=1e-7)


def test_asymmetric_no_churn(rng):
    hedger = get_hedger()
    for _ in range(50):
        model = well_conditioned_model(rng, int(rng.integers(1, 8)))
        costs = CostSpec.asymmetric(
            rng.uniform(0.0, 1.0, model.n), rng.uniform(0.0, 1.0, model.n), float(rng.uniform(0.0, 2.0))
        )
        result = hedger.solve_asymmetric(model, costs)
        buys = np.array(result.solver_diagnostics["buys"])
        sells = np.array(result.solver_diagnostics["sells"])
        assert np.max(buys * sells) <= 1e-6 * (1.0 + np.max(np.abs(result.trades)) ** 2)
        np.testing.assert_allclose(buys - sells, result.trades)


def test_diagonal_examples():
    hedger = get_hedger()
    result = hedger.solve_diagonal(scalar_model(4.0, h=2.0), [0.3], [0.7], 0.0)
    np.testing.assert_allclose(result.trades, [-2.0])
    assert result.solver_diagnostics["selected_costs"] == ["sell"]

    result = hedger.solve_diagonal(scalar_model(-4.0, h=2.0), [0.3], [0.7], 0.0)
    np.testing.assert_allclose(result.trades, [2.0])
    assert result.solver_diagnostics["selected_costs"] == ["buy"]


def test_diagonal_zero_exposure_is_flagged():
    result = get_hedger().solve_diagonal(scalar_model(0.0, h=2.0), [0.3], [0.7], 0.0)
    assert result.solver_diagnostics["zero_exposure_products"] == [0]
    np.testing.assert_allclose(result.trades, [0.0])


def test_diagonal_rejects_dense_sensitivity():
    model = RiskModel(("f1", "f2"), [1.0, 1.0], [[1.0, 0.5], [0.0, 1.0]], np.eye(2))
    with pytest.raises(NotDiagonal):
        get_hedger().solve_diagonal(model, [0.0, 0.0], [0.0, 0.0], 0.0)


def test_diagonal_matches_scalar_oracle(rng):
    hedger = get_hedger()
    branches = set()
    for _ in range(100):
        r = float(rng.normal(0.0, 5.0))
        h = float(rng.uniform(0.1, 3.0))
        c = float(rng.uniform(0.1, 3.0))
        buy, sell = rng.uniform(0.0, 1.0, 2)
        lambda_c = float(rng.uniform(0.0, 2.0))

        result = hedger.solve_diagonal(scalar_model(r, h, c), [buy], [sell], lambda_c)
        branch = result.solver_diagnostics["selected_costs"][0]
        branches.add(branch)
        cost = buy if branch == "buy" else sell
        assert (branch == "buy") == (r * h < 0)

        def objective(x):
            return c * h ** 2 * x ** 2 + (2.0 * c * r * h + lambda_c * cost) * x

        oracle = scipy.optimize.minimize_scalar(objective, method="brent", tol=1e-12).x
        assert result.trades[0] == pytest.approx(oracle, abs=1e-8 * (1.0 + abs(oracle)))

    assert branches == {"buy", "sell"}


def test_diagonal_matches_unconstrained_without_costs(rng):
    hedger = get_hedger()
    for _ in range(30):
        n = int(rng.integers(1, 8))
        model = RiskModel(
            tuple(f"f{i}" for i in range(n)),
            rng.normal(0.0, 5.0, n),
            np.diag(rng.uniform(0.1, 3.0, n)),
            np.diag(rng.uniform(0.1, 3.0, n)),
        )
        costs = rng.uniform(0.0, 1.0, (2, n))
        diagonal = hedger.solve_diagonal(model, costs[0], costs[1], 0.0)
        expected = hedger.solve_unconstrained(model).trades
        np.testing.assert_allclose(diagonal.trades, expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("mode", ["symmetric", "asymmetric"])
def test_trade_size_shrinks_as_cost_weight_grows(rng, mode):
    hedger = get_hedger()
    for _ in range(20):
        r = float(rng.normal(0.0, 5.0))
        h = float(rng.uniform(0.1, 3.0))
        c = float(rng.uniform(0.1, 3.0))
        buy, sell = rng.uniform(0.1, 1.0, 2)
        model = scalar_model(r, h, c)
        # past the top of the grid the hedge is fully suppressed
        grid = np.linspace(0.0, 4.0 * c * abs(r * h) / min(buy, sell), 10)

        sizes = []
        for lambda_c in grid:
            if mode == "symmetric":
                result = hedger.solve_symmetric(model, CostSpec.symmetric([buy], lambda_c))
            else:
                result = hedger.solve_asymmetric(model, CostSpec.asymmetric([buy], [sell], lambda_c))
            sizes.append(abs(result.trades[0]))

        sizes = np.array(sizes)
        assert np.all(np.diff(sizes) <= 1e-7 * (1.0 + sizes[0]))
        assert sizes[-1] <= 1e-7 * (1.0 + sizes[0])


class _StalledSolver:
    def solve(self, problem):
        return QpSolution(
            x=np.zeros(problem.k), z=np.ones(problem.num_inequalities), y=np.zeros(0),
            status=QpStatus.MAX_ITERATIONS, gap=1.0, primal_residual=1.0, dual_residual=1.0,
            iterations=100, objective=0.0,
        )


def test_non_optimal_status_raises_numerical_failure(identity_model):
    hedger = Hedger(solver=_StalledSolver())
    with pytest.raises(NumericalFailure):
        hedger.solve_asymmetric(identity_model, CostSpec.asymmetric([1.0, 1.0], [1.0, 1.0], 1.0))
