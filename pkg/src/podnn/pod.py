"""Empirical POD in the X inner product via the snapshot correlation matrix."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .problem import GramMatrix, ModelProblemConfig, SolutionVector, solve
from .qmc import RateConfig

log = logging.getLogger(__name__)

APRIORI = "a-priori"


class SnapshotError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"snapshot {index} failed: {cause}")
        self.index = index


@dataclass(frozen=True)
class SnapshotSet:
    params: np.ndarray  # (N, s)
    snapshots: np.ndarray  # (N_h, N) complex
    problem_meta: ModelProblemConfig | None = None

    def __post_init__(self):
        if self.params.ndim != 2 or self.snapshots.ndim != 2:
            raise ValueError("params and snapshots must be two-dimensional")
        if self.snapshots.shape[1] != self.params.shape[0]:
            raise ValueError(
                f"{self.snapshots.shape[1]} snapshots for {self.params.shape[0]} parameters"
            )
        if not (np.all(np.isfinite(self.params)) and np.all(np.isfinite(self.snapshots))):
            raise ValueError("snapshot set contains non-finite entries")

    @property
    def n_samples(self) -> int:
        return self.params.shape[0]

    @property
    def s(self) -> int:
        return self.params.shape[1]

    @property
    def n_dof(self) -> int:
        return self.snapshots.shape[0]

    @property
    def is_complex(self) -> bool:
        return bool(np.any(self.snapshots.imag != 0))


@dataclass(frozen=True)
class ReducedBasis:
    basis: np.ndarray  # (N_h, J), X-orthonormal columns
    singular_values: np.ndarray  # all retained sigma, nonincreasing
    tolerance: float | str | None
    n_samples: int
    s: int

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def full_rank(self) -> int:
        return self.singular_values.shape[0]

    def truncate(self, rank: int, tolerance=None) -> "ReducedBasis":
        if not 0 <= rank <= self.rank:
            raise ValueError(f"rank {rank} outside [0, {self.rank}]")
        return replace(self, basis=self.basis[:, :rank], tolerance=tolerance)


@dataclass(frozen=True)
class PodDiagnostics:
    empirical_error: float
    tail_per_rank: np.ndarray  # tail_per_rank[J] = sum_{i > J} sigma_i^2
    flagged_zero: bool = False


def assemble_snapshots(cfg: ModelProblemConfig, points, threads: int | None = None) -> SnapshotSet:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise ValueError("no parameter points")

    def one(item):
        k, y = item
        try:
            return solve(cfg, y).coefficients
        except Exception as exc:
            raise SnapshotError(k, exc) from exc

    if threads == 1 or points.shape[0] == 1:
        cols = [one(item) for item in enumerate(points)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map keeps submission order, so column n is always sample n
            cols = list(pool.map(one, enumerate(points)))
    return SnapshotSet(points, np.stack(cols, axis=1), cfg)


def correlation_matrix(snap: SnapshotSet, g: GramMatrix) -> np.ndarray:
    """C = S* M S / N."""
    S = snap.snapshots
    if S.shape[0] != g.n:
        raise ValueError(f"snapshot length {S.shape[0]} does not match Gram size {g.n}")
    if not snap.is_complex:
        S = S.real
    C = S.conj().T @ g.matvec(S) / snap.n_samples
    return 0.5 * (C + C.conj().T)


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    pivot = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivot) / pivot)[None, :]


def _x_orthonormalize(phi: np.ndarray, g: GramMatrix) -> np.ndarray:
    # Cholesky-QR in the M inner product; triangular, so nested spans are kept
    for _ in range(2):
        G = phi.conj().T @ g.matvec(phi)
        L = np.linalg.cholesky(0.5 * (G + G.conj().T))
        phi = scipy.linalg.solve_triangular(L, phi.conj().T, lower=True).conj().T
    return phi


def pod_basis(snap: SnapshotSet, g: GramMatrix, rank_cutoff: float | None = None):
    """Full-rank POD basis and diagnostics from the eigenpairs of C.

    Eigenvalues below ``rank_cutoff**2 * lambda_1`` are treated as numerically
    zero. The default cutoff ``sqrt(10 * max(N, N_h) * eps)`` sits above the
    rounding noise of the eigensolver, below which ``S psi / sigma`` is
    meaningless.
    """
    N = snap.n_samples
    C = correlation_matrix(snap, g)
    lam, psi = np.linalg.eigh(C)
    lam, psi = lam[::-1], psi[:, ::-1]
    if rank_cutoff is None:
        rank_cutoff = math.sqrt(10 * max(N, g.n) * np.finfo(float).eps)
    top = max(lam[0], 0.0)
    keep = lam > (rank_cutoff**2) * top if top > 0 else np.zeros_like(lam, dtype=bool)
    r = int(keep.sum())
    sigma = np.sqrt(np.maximum(lam[:r], 0.0))
    dtype = np.complex128 if snap.is_complex else np.float64
    S = snap.snapshots if snap.is_complex else snap.snapshots.real
    if r == 0:
        log.warning("snapshot matrix is numerically zero, empty basis")
        phi = np.zeros((g.n, 0), dtype=dtype)
    else:
        psi_r = _fix_phase(psi[:, :r])
        phi = (S @ psi_r) / (sigma * math.sqrt(N))[None, :]
        phi = _x_orthonormalize(phi, g)
    basis = ReducedBasis(phi.astype(np.complex128), sigma, None, N, snap.s)
    return basis, pod_diagnostics(sigma, r, flagged_zero=(r == 0))


def tail_sums(sigma: np.ndarray) -> np.ndarray:
    """tail[J] = sum_{i > J} sigma_i^2 for J = 0..len(sigma)."""
    sq = np.asarray(sigma, dtype=np.float64) ** 2
    tail = np.zeros(sq.size + 1)
    # reverse cumulative sum adds the small terms first
    tail[:-1] = np.cumsum(sq[::-1])[::-1]
    return tail


def pod_diagnostics(sigma, rank: int, flagged_zero: bool = False) -> PodDiagnostics:
    tail = tail_sums(sigma)
    return PodDiagnostics(float(tail[rank]), tail, flagged_zero)


def rank_by_tolerance(basis: ReducedBasis, tau: float) -> int:
    """Smallest J whose squared singular value tail is at most tau**2."""
    if not tau > 0:
        raise ValueError(f"tolerance must be positive, got {tau}")
    tail = tail_sums(basis.singular_values)
    hits = np.flatnonzero(tail <= tau * tau)
    return int(hits[0]) if hits.size else basis.full_rank


def default_tolerance(n_samples: int) -> float:
    return 1.0 / (100.0 * math.sqrt(n_samples))


def _ceil_power(base: float, exponent: float) -> int:
    val = base**exponent
    # guard against e.g. 9.000000000000002 for an exact integer power
    return max(1, math.ceil(val * (1 - 1e-12)))


def rank_apriori(n_samples: int, rates: RateConfig) -> int:
    """J = ceil(N ** (alpha / (2 (1/p - 1))))."""
    if n_samples < 1:
        raise ValueError(f"N must be >= 1, got {n_samples}")
    if not 0 < rates.p < 1:
        raise ValueError(f"p must lie in (0, 1), got {rates.p}")
    return _ceil_power(n_samples, rates.alpha / (2 * (1 / rates.p - 1)))


def project_coeffs(u, basis: ReducedBasis, g: GramMatrix) -> np.ndarray:
    """X inner products (u, zeta_i)_X; works on a vector or a column stack."""
    u = u.coefficients if isinstance(u, SolutionVector) else np.asarray(u)
    if u.shape[0] != basis.basis.shape[0] or g.n != u.shape[0]:
        raise ValueError("dimension mismatch between solution, basis and Gram matrix")
    return basis.basis.conj().T @ g.matvec(u)


def split_real_imag(c) -> np.ndarray:
    c = np.asarray(c)
    return np.concatenate([c.real, c.imag], axis=0).astype(np.float64)


def merge_real_imag(rc) -> np.ndarray:
    rc = np.asarray(rc, dtype=np.float64)
    if rc.shape[0] % 2:
        raise ValueError(f"expected an even number of coefficients, got {rc.shape[0]}")
    J = rc.shape[0] // 2
    return rc[:J] + 1j * rc[J:]


def reconstruct(rc, basis: ReducedBasis) -> np.ndarray:
    """FEM coefficients of sum_i (rc_i + i rc_{i+J}) zeta_i."""
    rc = np.asarray(rc, dtype=np.float64)
    if rc.shape[0] != 2 * basis.rank:
        raise ValueError(f"{rc.shape[0]} coefficients for a rank-{basis.rank} basis")
    return basis.basis @ merge_real_imag(rc)


def empirical_pod_error(snap: SnapshotSet, basis: ReducedBasis, g: GramMatrix) -> float:
    """Mean squared X-norm of the projection residual, by direct projection."""
    S = snap.snapshots
    resid = S - basis.basis @ project_coeffs(S, basis, g)
    sq = np.einsum("ij,ij->j", resid.conj(), g.matvec(resid)).real
    return float(sq.mean())
