"""Shared fixtures.  The trained pipeline is session-scoped because the
reference training run takes several minutes; every test that needs a
trained operator shares the same one."""

import numpy as np
import pytest

from exbound.config import RunConfig
from exbound.fd import MarketParams, PutPayoff, build_grid, price_american
from exbound.operator import build_dataset, build_model, train


@pytest.fixture(scope="session")
def market():
    return MarketParams(rate=0.1, volatility=0.2)


@pytest.fixture(scope="session")
def paper_grid():
    return build_grid(45.0, 180.0, 300, 1.0, 50)


@pytest.fixture(scope="session")
def fd_surfaces(market, paper_grid):
    """American FD surfaces for a handful of strikes on the full grid."""
    return {k: price_american(market, paper_grid, PutPayoff(k))
            for k in (90.0, 100.0, 110.0, 120.0)}


class Pipeline:
    def __init__(self, config, dataset, model, report):
        self.config = config
        self.dataset = dataset
        self.model = model
        self.report = report


@pytest.fixture(scope="session")
def pipeline():
    """Full default run: dataset generation plus operator training."""
    cfg = RunConfig()
    dataset = build_dataset(cfg.strikes.strikes(), cfg.market, cfg.grid(),
                            cfg.method, test_strikes=cfg.strikes.test)
    model = build_model(dataset.grid, n_sensors=cfg.arch.n_sensors,
                        latent=cfg.arch.latent,
                        branch_hidden=cfg.arch.branch_hidden,
                        trunk_hidden=cfg.arch.trunk_hidden,
                        seed=cfg.stream_seed("init"))
    report = train(model, dataset, cfg.train_config())
    return Pipeline(cfg, dataset, model, report)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
