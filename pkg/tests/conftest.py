import numpy as np
import pytest

from podnn.problem import (
    COMPLEX_REACTION,
    REAL_DIFFUSION,
    ExpansionField,
    FemSpace,
    HolomorphyProfile,
    ModelProblemConfig,
)


def make_problem(kind=REAL_DIFFUSION, n_dof=32, n_modes=32, amplitude=None, **kw):
    if amplitude is None:
        amplitude = 0.3 if kind == COMPLEX_REACTION else 0.4
    return ModelProblemConfig(
        kind=kind,
        fem=FemSpace(n_dof),
        field=ExpansionField(9 / 4, amplitude, n_modes),
        profile=HolomorphyProfile(4 / 9),
        **kw,
    )


@pytest.fixture
def real_problem():
    return make_problem(REAL_DIFFUSION)


@pytest.fixture
def complex_problem():
    return make_problem(COMPLEX_REACTION)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
