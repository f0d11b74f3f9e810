"""Desk-scale parametric model problems on (0, 1) with P1 finite elements.

Two problems share the affine coefficient expansion

    c(x; y) = c0 + sum_j y_j * A * j**(-theta) * sin(j*pi*x)

* ``real_diffusion``:   -(a(x;y) u')' = 1 with a = 1 + sum_j y_j psi_j
* ``complex_reaction``: -u'' + (r + i*eta + sum_j y_j psi_j) u = 1

both with homogeneous Dirichlet conditions. The X inner product is the
H^1_0 product, so the Gram matrix is the P1 stiffness matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

REAL_DIFFUSION = "real_diffusion"
COMPLEX_REACTION = "complex_reaction"
KINDS = (REAL_DIFFUSION, COMPLEX_REACTION)

RESIDUAL_TOL = 1e-12

# 4-point Gauss-Legendre rule on the reference element [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_QUAD_X = 0.5 * (_GL_X + 1.0)
_QUAD_W = 0.5 * _GL_W


class ConfigurationError(ValueError):
    """Model problem parameters violate a well-posedness requirement."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FemSpace:
    n_dof: int

    def __post_init__(self):
        if self.n_dof < 1:
            raise ConfigurationError(f"n_dof must be >= 1, got {self.n_dof}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_dof + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_dof + 1) * self.h


@dataclass(frozen=True)
class ExpansionField:
    theta: float = 9 / 4
    amplitude: float = 0.4
    n_modes: int = 128

    def __post_init__(self):
        if not self.theta > 1:
            raise ConfigurationError(f"theta must exceed 1, got {self.theta}")
        if not self.amplitude > 0:
            raise ConfigurationError(f"amplitude must be positive, got {self.amplitude}")
        if self.n_modes < 1:
            raise ConfigurationError(f"n_modes must be >= 1, got {self.n_modes}")

    def mode_amplitudes(self, count: int | None = None) -> np.ndarray:
        j = np.arange(1, (self.n_modes if count is None else count) + 1)
        return self.amplitude * j ** (-self.theta)

    @property
    def total_amplitude(self) -> float:
        """Uniform bound A * sum_j j**(-theta) on |sum_j y_j psi_j|."""
        return float(self.mode_amplitudes().sum())


@dataclass(frozen=True)
class HolomorphyProfile:
    p: float = 4 / 9

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ConfigurationError(f"p must lie in (0, 1), got {self.p}")

    @property
    def rate_truncation(self) -> float:
        return 1 / self.p - 1

    @property
    def rate_pod(self) -> float:
        return 1 / self.p - 1


@dataclass(frozen=True)
class ModelProblemConfig:
    kind: str = REAL_DIFFUSION
    fem: FemSpace = dc_field(default_factory=lambda: FemSpace(128))
    field: ExpansionField = dc_field(default_factory=ExpansionField)
    profile: HolomorphyProfile = dc_field(default_factory=HolomorphyProfile)
    absorption: float = 1.0
    reaction: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        # b_j ~ j**(-theta) lies in l^p for every p > 1/theta; the boundary
        # value p = 1/theta is accepted as the delta -> 0 limit
        if self.profile.p < 1 / self.field.theta - 1e-12:
            raise ConfigurationError(
                f"p={self.profile.p} is below 1/theta={1 / self.field.theta}"
            )
        margin = self.field.total_amplitude
        if self.kind == REAL_DIFFUSION and not margin < 1:
            raise ConfigurationError(
                f"diffusion coefficient may vanish: A*sum j^-theta = {margin:.4f} >= 1"
            )
        if self.kind == COMPLEX_REACTION:
            if margin > 0.5:
                raise ConfigurationError(
                    f"reaction perturbation too large: A*sum j^-theta = {margin:.4f} > 1/2"
                )
            if self.absorption < 0 or self.reaction < 0:
                raise ConfigurationError("absorption and reaction must be non-negative")

    @property
    def is_complex(self) -> bool:
        return self.kind == COMPLEX_REACTION

    def with_fem(self, n_dof: int) -> "ModelProblemConfig":
        return ModelProblemConfig(
            self.kind, FemSpace(n_dof), self.field, self.profile, self.absorption, self.reaction
        )

    @cached_property
    def _quadrature(self):
        """Modes at the element quadrature points, shape (n_el * 4, n_modes)."""
        h = self.fem.h
        n_el = self.fem.n_dof + 1
        xq = ((np.arange(n_el)[:, None] + _QUAD_X[None, :]) * h).ravel()
        j = np.arange(1, self.field.n_modes + 1)
        modes = np.sin(np.pi * np.outer(xq, j)) * self.field.mode_amplitudes()
        return modes


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric tridiagonal matrix stored as (diagonal, off-diagonal)."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return tridiag_matvec(self.off, self.diag, self.off, v)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)


def tridiag_matvec(lower, diag, upper, v):
    """Product of a tridiagonal matrix with a vector or a column stack."""
    v = np.asarray(v)
    if v.shape[0] != diag.shape[0]:
        raise ValueError(f"dimension mismatch: {v.shape[0]} vs {diag.shape[0]}")
    d = diag if v.ndim == 1 else diag[:, None]
    lo = lower if v.ndim == 1 else lower[:, None]
    up = upper if v.ndim == 1 else upper[:, None]
    out = d * v
    out[:-1] += up * v[1:]
    out[1:] += lo * v[:-1]
    return out


def assemble_gram(fem: FemSpace) -> GramMatrix:
    h = fem.h
    return GramMatrix(np.full(fem.n_dof, 2.0 / h), np.full(fem.n_dof - 1, -1.0 / h))


def x_norm(g: GramMatrix, v) -> float:
    v = np.asarray(v)
    if v.shape != (g.n,):
        raise ValueError(f"dimension mismatch: vector {v.shape} vs Gram {g.n}")
    val = np.vdot(v, g.matvec(v)).real
    return math.sqrt(max(val, 0.0))


@dataclass(frozen=True)
class SolutionVector:
    coefficients: np.ndarray
    param: np.ndarray


def _check_param(cfg: ModelProblemConfig, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size > cfg.field.n_modes:
        raise ConfigurationError(
            f"parameter has {y.size} coordinates but only {cfg.field.n_modes} modes"
        )
    if np.any(np.abs(y) > 1):
        raise ValueError("parameter coordinates must lie in [-1, 1]")
    return y


def assemble_system(cfg: ModelProblemConfig, y):
    """Return (lower, diag, upper, rhs) of the Galerkin system for parameter ``y``."""
    y = _check_param(cfg, y)
    fem = cfg.fem
    h, n = fem.h, fem.n_dof
    n_el = n + 1
    modes = cfg._quadrature
    pert = (modes[:, : y.size] @ y).reshape(n_el, 4)

    if cfg.kind == REAL_DIFFUSION:
        # element integral of a(x) times grad-grad of the hat functions
        ka = ((1.0 + pert) @ _QUAD_W) / h
        diag = ka[:-1] + ka[1:]
        off = -ka[1:-1]
        lower = upper = off.astype(np.complex128)
        diag = diag.astype(np.complex128)
    else:
        coef = cfg.reaction + 1j * cfg.absorption + pert
        # local shape functions on the reference element
        phi_l = 1.0 - _QUAD_X
        phi_r = _QUAD_X
        m_ll = (coef * (phi_l * phi_l * _QUAD_W)).sum(axis=1) * h
        m_rr = (coef * (phi_r * phi_r * _QUAD_W)).sum(axis=1) * h
        m_lr = (coef * (phi_l * phi_r * _QUAD_W)).sum(axis=1) * h
        # interior node i sits at the right of element i and the left of element i+1
        diag = 2.0 / h + m_rr[:-1] + m_ll[1:]
        off = -1.0 / h + m_lr[1:-1]
        lower = upper = off
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
        raise SolverError("non-finite values in assembled system")
    rhs = np.full(n, h, dtype=np.complex128)
    return lower, diag, upper, rhs


def relative_residual(lower, diag, upper, rhs, u) -> float:
    """Normwise backward error ||A u - f|| / (|| |A| |u| || + ||f||).

    The plain ratio ||A u - f|| / ||f|| has a rounding floor of roughly
    eps * cond(A), which already reaches 1e-12 near N_h = 256.
    """
    r = tridiag_matvec(lower, diag, upper, u) - rhs
    scale = tridiag_matvec(np.abs(lower), np.abs(diag), np.abs(upper), np.abs(u))
    return float(np.linalg.norm(r) / (np.linalg.norm(scale) + np.linalg.norm(rhs)))


def solve(cfg: ModelProblemConfig, y) -> SolutionVector:
    """Galerkin solution coefficients u_h(y) as a complex vector of length N_h."""
    y = _check_param(cfg, y)
    lower, diag, upper, rhs = assemble_system(cfg, y)
    n = diag.shape[0]
    ab = np.zeros((3, n), dtype=np.complex128)
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    u = solve_banded((1, 1), ab, rhs, check_finite=False)
    res = relative_residual(lower, diag, upper, rhs, u)
    if not res <= RESIDUAL_TOL:
        raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}")
    return SolutionVector(u, y)


def solve_truncated(cfg: ModelProblemConfig, y, s_sub: int) -> SolutionVector:
    """Solve with every coordinate beyond ``s_sub`` set to zero."""
    y = np.array(y, dtype=np.float64).ravel()
    if not 0 <= s_sub <= y.size:
        raise ValueError(f"s_sub={s_sub} outside [0, {y.size}]")
    y[s_sub:] = 0.0
    return solve(cfg, y)


def prolongate(u: np.ndarray, factor: int) -> np.ndarray:
    """Nodal injection of a P1 function into the mesh refined ``factor`` times."""
    n = u.shape[0]
    coarse = np.concatenate([[0.0], u, [0.0]])
    x_coarse = np.arange(n + 2)
    x_fine = np.arange(1, factor * (n + 1)) / factor
    if np.iscomplexobj(u):
        return np.interp(x_fine, x_coarse, coarse.real) + 1j * np.interp(
            x_fine, x_coarse, coarse.imag
        )
    return np.interp(x_fine, x_coarse, coarse)


def galerkin_error_probe(cfg: ModelProblemConfig, y_set, refinement: int = 2) -> float:
    """Max over ``y_set`` of || u_{h/r}(y) - I u_h(y) ||_X on the refined mesh."""
    y_set = np.atleast_2d(np.asarray(y_set, dtype=np.float64))
    if y_set.shape[0] == 0:
        raise ValueError("empty parameter set")
    if refinement < 1:
        raise ValueError(f"refinement must be >= 1, got {refinement}")
    fine = cfg.with_fem(refinement * (cfg.fem.n_dof + 1) - 1)
    g_fine = assemble_gram(fine.fem)
    worst = 0.0
    for y in y_set:
        coarse = solve(cfg, y).coefficients
        ref = solve(fine, y).coefficients
        worst = max(worst, x_norm(g_fine, ref - prolongate(coarse, refinement)))
    return worst
