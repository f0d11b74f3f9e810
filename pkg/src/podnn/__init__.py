"""Galerkin POD-NN surrogates for parametric variational problems.

Pipeline: Halton points -> P1 Galerkin snapshots -> X-weighted POD ->
tanh network on reduced coefficients, plus an N-convergence study harness.
"""

from .qmc import QmcConfig, RateConfig, halton_points, parameter_points, qmc_mean, to_parameter_cube
from .problem import (
    COMPLEX_REACTION,
    REAL_DIFFUSION,
    ExpansionField,
    FemSpace,
    HolomorphyProfile,
    ModelProblemConfig,
    assemble_gram,
    solve,
)
from .pod import ReducedBasis, SnapshotSet, assemble_snapshots, pod_basis, rank_apriori, rank_by_tolerance
from .nn import Mlp, TrainConfig, mlp_init, predict_coeffs, size_apriori, train
from .analysis import StudyConfig, StudyReport, fit_rate, run_study, truncation_study

__version__ = "0.1.0"
