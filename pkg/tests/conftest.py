"""Shared fixtures: seeded generators, random hedging instances, fixture files."""

from pathlib import Path

import numpy as np
import pytest

from config.manager import get_config
from core.portfolio import RiskModel

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def fresh_config():
    config = get_config()
    config.reset()
    yield config
    config.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def random_spd(rng, size: int, floor: float = 0.1) -> np.ndarray:
    """Random symmetric positive definite matrix with eigenvalues >= floor."""
    basis = rng.standard_normal((size, size))
    return basis @ basis.T + floor * np.eye(size)


def random_risk_model(rng, m: int, n: int) -> RiskModel:
    """Random instance with full column rank H (m >= n) and PD covariance."""
    H = rng.standard_normal((m, n))
    C = random_spd(rng, m)
    r = rng.standard_normal(m)
    return RiskModel(tuple(f"f{i}" for i in range(m)), r, H, C)


@pytest.fixture
def make_risk_model(rng):
    def factory(m: int = 4, n: int = 3) -> RiskModel:
        return random_risk_model(rng, m, n)
    return factory


@pytest.fixture
def make_spd(rng):
    def factory(size: int, floor: float = 0.1) -> np.ndarray:
        return random_spd(rng, size, floor)
    return factory


@pytest.fixture
def identity_model() -> RiskModel:
    return RiskModel(("f1", "f2"), [1.0, -2.0], np.eye(2), np.eye(2))


@pytest.fixture
def cli_workdir(tmp_path, monkeypatch):
    """Run CLI tests in a scratch directory so the log file lands there."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("HEDGEKIT_SEED", raising=False)
    return tmp_path
