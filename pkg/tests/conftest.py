import numpy as np
import pytest

from mimo_lab.covmodel import CorrelationModel, ScenarioConfig, build_network, stream


def make_scenario(seed=0, **kw):
    """Network scenario from keyword overrides of the defaults."""
    cfg = ScenarioConfig(**kw)
    return build_network(cfg, stream(seed, 0))


def single_link_scenario(lam, seed=0, M=None, snr_db=0.0, boost=1.0,
                         pilot="orthogonal", model=CorrelationModel.PARTIAL_UNITARY):
    """L = K = 1 scenario whose single link carries the given eigenvalues."""
    lam = np.asarray(lam, dtype=float)
    r = len(lam)
    M = M if M is not None else max(4 * r, 8)
    sc = make_scenario(
        seed=seed, L=1, K=1, M=M, T_c=500, snr_db=snr_db, pilot_boost=boost,
        r_own=r, model=model, pilot=pilot,
    )
    sc.profiles[(0, 0, 0)].lam = lam.copy()
    return sc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
