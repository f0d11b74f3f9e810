"""Error estimators, log-log rate fits and the N-convergence study."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import pod
from .nn import (
    Mlp,
    TrainConfig,
    fit_normalizations,
    mlp_init,
    predict_coeffs,
    size_apriori,
    train,
)
from .pod import ReducedBasis, assemble_snapshots, project_coeffs, split_real_imag
from .problem import GramMatrix, ModelProblemConfig, assemble_gram, solve_truncated
from .qmc import RateConfig, parameter_points

log = logging.getLogger(__name__)

TOLERANCE = "tolerance"
APRIORI = "apriori"

REPORT_COLUMNS = (
    "N", "s", "J", "n", "width", "hidden_layers",
    "pod_tail", "pod_gen_err", "nn_train_mse", "nn_gen_err", "total_l2_err",
    "sample_secs", "pod_secs", "train_secs",
)
TIMING_COLUMNS = ("sample_secs", "pod_secs", "train_secs")
RATE_COLUMNS = ("J", "pod_tail", "pod_gen_err", "nn_train_mse", "nn_gen_err", "total_l2_err")


class StageError(RuntimeError):
    def __init__(self, n_samples: int, stage: str, cause: Exception):
        super().__init__(f"N={n_samples}, stage {stage}: {cause}")
        self.n_samples = n_samples
        self.stage = stage


def _sq_x_norms(g: GramMatrix, V: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", V.conj(), g.matvec(V)).real


def _test_snapshots(cfg: ModelProblemConfig, test_points, threads=None) -> np.ndarray:
    return assemble_snapshots(cfg, test_points, threads=threads).snapshots


def projection_error(basis: ReducedBasis, g: GramMatrix, S: np.ndarray) -> float:
    resid = S - basis.basis @ project_coeffs(S, basis, g)
    return math.sqrt(max(_sq_x_norms(g, resid).mean(), 0.0))


def pod_generalization_error(basis, cfg, test_points, *, threads=None, test_snapshots=None) -> float:
    """sqrt of the mean squared X-norm projection residual over held-out points."""
    g = assemble_gram(cfg.fem)
    S = test_snapshots if test_snapshots is not None else _test_snapshots(cfg, test_points, threads)
    return projection_error(basis, g, S)


def surrogate_l2_error(model: Mlp, basis, cfg, test_points, *, threads=None, test_snapshots=None) -> float:
    """sqrt(mean_y || u_h(y) - R(model(y)) ||_X^2) over the test points."""
    g = assemble_gram(cfg.fem)
    test_points = np.atleast_2d(test_points)
    S = test_snapshots if test_snapshots is not None else _test_snapshots(cfg, test_points, threads)
    pred = predict_coeffs(model, test_points)  # (n_test, 2J)
    J = basis.rank
    U = basis.basis @ (pred[:, :J] + 1j * pred[:, J:]).T
    return math.sqrt(max(_sq_x_norms(g, S - U).mean(), 0.0))


def coefficient_error(model: Mlp, basis, cfg, test_points, *, threads=None, test_snapshots=None) -> float:
    """sqrt(mean_y || pi(y) - model(y) ||^2) in R^{2J}, the regression part of the error."""
    g = assemble_gram(cfg.fem)
    test_points = np.atleast_2d(test_points)
    S = test_snapshots if test_snapshots is not None else _test_snapshots(cfg, test_points, threads)
    target = split_real_imag(project_coeffs(S, basis, g)).T
    diff = target - predict_coeffs(model, test_points)
    return math.sqrt(float(np.mean(np.sum(diff * diff, axis=1))))


def fit_rate(ns, errs) -> float:
    """Least-squares slope of log(err) against log(N)."""
    ns = np.asarray(ns, dtype=np.float64)
    errs = np.asarray(errs, dtype=np.float64)
    if ns.shape != errs.shape:
        raise ValueError("ns and errs differ in length")
    ok = (ns > 0) & (errs > 0) & np.isfinite(errs) & np.isfinite(ns)
    if not ok.all():
        warnings.warn(f"fit_rate ignores {int((~ok).sum())} non-positive entries", stacklevel=2)
    if ok.sum() < 3:
        raise ValueError(f"need at least 3 usable points, got {int(ok.sum())}")
    slope, _ = np.polyfit(np.log(ns[ok]), np.log(errs[ok]), 1)
    return float(slope)


@dataclass(frozen=True)
class StudyConfig:
    problem: ModelProblemConfig
    s: int
    n_grid: tuple[int, ...]
    rates: RateConfig = field(default_factory=RateConfig)
    rank_mode: str = TOLERANCE
    tolerance: float | None = None  # None: 1 / (100 sqrt(N))
    test_size: int = 512
    test_start: int | None = None  # None: right after the largest training segment
    start_index: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    train_nn: bool = True
    threads: int | None = None

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError(f"n_grid must be strictly increasing and positive, got {grid}")
        if self.rank_mode not in (TOLERANCE, APRIORI):
            raise ValueError(f"unknown rank_mode {self.rank_mode!r}")
        if self.s < 1 or self.s > self.problem.field.n_modes:
            raise ValueError(f"s={self.s} outside [1, n_modes={self.problem.field.n_modes}]")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        # every training segment [start, start + N) lies inside the largest one
        tb = self.test_begin
        if tb < self.start_index + grid[-1] and tb + self.test_size > self.start_index:
            raise ValueError("test segment overlaps a training segment")

    @property
    def test_begin(self) -> int:
        return self.start_index + self.n_grid[-1] if self.test_start is None else self.test_start


@dataclass
class StudyRow:
    N: int
    s: int
    J: int
    n: int
    width: int
    hidden_layers: int
    pod_tail: float
    pod_gen_err: float
    nn_train_mse: float = math.nan
    nn_gen_err: float = math.nan
    total_l2_err: float = math.nan
    sample_secs: float = 0.0
    pod_secs: float = 0.0
    train_secs: float = 0.0


@dataclass
class StudyReport:
    rows: list[StudyRow]
    slopes: dict[str, float | None]
    config: StudyConfig

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def payload(self) -> list[dict]:
        """Rows without wall-clock timings, for reproducibility comparisons."""
        return [
            {k: v for k, v in asdict(r).items() if k not in TIMING_COLUMNS} for r in self.rows
        ]


def _select_rank(basis: ReducedBasis, cfg: StudyConfig, N: int):
    if cfg.rank_mode == APRIORI:
        J = min(pod.rank_apriori(N, cfg.rates), basis.full_rank)
        return J, pod.APRIORI
    tau = cfg.tolerance if cfg.tolerance is not None else pod.default_tolerance(N)
    return pod.rank_by_tolerance(basis, tau), tau


def run_study(cfg: StudyConfig) -> StudyReport:
    """For each N: sample, POD, size and train the network, evaluate on held-out points."""
    problem = cfg.problem
    g = assemble_gram(problem.fem)
    test_pts = parameter_points(cfg.s, cfg.test_size, cfg.test_begin)
    try:
        test_S = _test_snapshots(problem, test_pts, cfg.threads)
    except Exception as exc:
        raise StageError(0, "test-sampling", exc) from exc

    rows = []
    for N in cfg.n_grid:
        stage = "sampling"
        try:
            t0 = time.perf_counter()
            pts = parameter_points(cfg.s, N, cfg.start_index)
            snap = assemble_snapshots(problem, pts, threads=cfg.threads)
            t1 = time.perf_counter()

            stage = "pod"
            full, diag = pod.pod_basis(snap, g)
            J, tol_used = _select_rank(full, cfg, N)
            basis = full.truncate(J, tolerance=tol_used)
            pod_gen = projection_error(basis, g, test_S)
            t2 = time.perf_counter()

            sizing = size_apriori(N, cfg.rates)
            row = StudyRow(
                N, cfg.s, J, sizing.n, sizing.width, sizing.hidden_layers,
                float(diag.tail_per_rank[J]), pod_gen,
                sample_secs=t1 - t0, pod_secs=t2 - t1,
            )

            if cfg.train_nn and J > 0:
                stage = "training"
                targets = split_real_imag(project_coeffs(snap.snapshots, basis, g)).T
                tcfg = cfg.train
                if tcfg.stop_threshold is None:
                    tcfg = replace(tcfg, stop_threshold=N ** (-cfg.rates.alpha))
                model = fit_normalizations(
                    mlp_init(sizing.dims(cfg.s, 2 * J), tcfg.seed), pts, targets
                )
                model, hist = train(model, pts, targets, tcfg)
                t3 = time.perf_counter()

                stage = "evaluation"
                row.nn_train_mse = hist.best_loss
                row.nn_gen_err = coefficient_error(model, basis, problem, test_pts, test_snapshots=test_S)
                row.total_l2_err = surrogate_l2_error(model, basis, problem, test_pts, test_snapshots=test_S)
                row.train_secs = t3 - t2
        except StageError:
            raise
        except Exception as exc:
            raise StageError(N, stage, exc) from exc
        log.info("N=%d J=%d pod_gen=%.3e total=%.3e", N, J, row.pod_gen_err, row.total_l2_err)
        rows.append(row)

    report = StudyReport(rows, {}, cfg)
    for name in RATE_COLUMNS:
        vals = report.column(name)
        usable = np.isfinite(vals) & (vals > 0)
        if usable.sum() >= 3:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report.slopes[name] = fit_rate(report.column("N"), vals)
        else:
            report.slopes[name] = None
    return report


@dataclass
class TruncationResult:
    s_grid: tuple[int, ...]
    errors: np.ndarray
    slope: float | None


def truncation_study(cfg: ModelProblemConfig, s_grid, probe_points) -> TruncationResult:
    """max_y || u_h^(2s') - u_h^(s') ||_X for each s' in the grid, with fitted slope."""
    s_grid = tuple(int(s) for s in s_grid)
    if any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be increasing")
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    if probe_points.shape[1] < 2 * s_grid[-1]:
        raise ValueError(
            f"probe points need {2 * s_grid[-1]} coordinates, have {probe_points.shape[1]}"
        )
    g = assemble_gram(cfg.fem)
    errors = np.zeros(len(s_grid))
    for k, sp in enumerate(s_grid):
        worst = 0.0
        for y in probe_points:
            du = (solve_truncated(cfg, y, 2 * sp).coefficients
                  - solve_truncated(cfg, y, sp).coefficients)
            worst = max(worst, math.sqrt(max(_sq_x_norms(g, du[:, None])[0], 0.0)))
        errors[k] = worst
    slope = fit_rate(s_grid, errors) if len(s_grid) >= 3 else None
    return TruncationResult(s_grid, errors, slope)
