import warnings

import pytest

from matrixtx import ChannelParams, MatrixParams
from matrixtx.release import ModelValidityWarning

# evaluation geometry: 1 um carrier and receiver, equal diffusivities
EVAL_A = 1e-6
EVAL_D = 1e-9
EVAL_R_RX = 1e-6

# drug micelles: 4.5 nm carriers, receiver 5 um in radius at 10 um
DRUGS = {
    "dox-ph5": dict(D_m=1.82e-22, ratio=63.7, D_c=5e-11),
    "dox-ph74": dict(D_m=1.82e-22, ratio=757.5, D_c=5e-11),
    "beta-lap": dict(D_m=2.42e-21, ratio=370.4, D_c=1e-9),
}


def eval_matrix(ratio=1.0, M_inf=1e4):
    return MatrixParams(EVAL_A, EVAL_D, ratio, M_inf)


def eval_channel(d=5e-6):
    return ChannelParams(EVAL_D, d, EVAL_R_RX)


def drug_pair(name, M_inf=1e4):
    p = DRUGS[name]
    return MatrixParams(4.5e-9, p["D_m"], p["ratio"], M_inf), ChannelParams(p["D_c"], 10e-6, 5e-6)


def sweep_pair():
    """Regime-sweep geometry: D_m = D_c = 1e-8, d = 20 um."""
    return MatrixParams(1e-6, 1e-8, 1.0, 1e4), ChannelParams(1e-8, 20e-6, 1e-6)


@pytest.fixture(autouse=True)
def _quiet_validity_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelValidityWarning)
        yield
