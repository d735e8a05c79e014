import numpy as np
import pytest

from sdmgrid.grid import DerUnit, LoadLaw, LoadModel, Mode


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_ders(n_vsc, n_csc=0, cap=2e3, droop=1.0, v_ref=380.0):
    ders = [DerUnit(k, (0.0, float(k)), cap, Mode.VSC, droop=droop) for k in range(n_vsc)]
    ders += [
        DerUnit(n_vsc + k, (1.0, float(k)), cap, Mode.CSC, csc_setpoint=cap / v_ref)
        for k in range(n_csc)
    ]
    return ders


def cp_load(p):
    return LoadModel(p, law=LoadLaw.CONSTANT_POWER)


def cr_load(p):
    return LoadModel(p, law=LoadLaw.CONSTANT_RESISTANCE)
