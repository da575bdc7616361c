import numpy as np
import pytest
from dataclasses import replace

import flipopt as fo
import flipopt.aero as am


def truncate(cfg: fo.ScenarioConfig, K: int) -> fo.ScenarioConfig:
    """Shorten the horizon to K steps keeping dt fixed."""
    dt = cfg.t_f / cfg.K
    return replace(cfg, K=K, t_f=dt * K)


@pytest.fixture(scope="session")
def case1_cfg():
    return fo.load_scenario("case1")


@pytest.fixture(scope="session")
def case2_cfg():
    return fo.load_scenario("case2")


@pytest.fixture(scope="session")
def case1_scn(case1_cfg):
    return fo.nondimensionalize(case1_cfg)


@pytest.fixture(scope="session")
def case2_scn(case2_cfg):
    return fo.nondimensionalize(case2_cfg)


@pytest.fixture(scope="session")
def surrogate(case2_cfg):
    """The trained aero surrogate used by every case2-style test."""
    return am.train_surrogate(am.generate_dataset(36), seed=case2_cfg.seed)


@pytest.fixture(scope="session")
def simplified():
    return am.SimplifiedAero(C_D=1.0)


def random_raw(scn, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    base = fo.init_raw_params(scn)
    return fo.RawControlParams(
        u_T=base.u_T + rng.normal(0.0, scale, scn.K),
        u_delta=base.u_delta + rng.normal(0.0, scale, scn.K),
    )
