"""Halton points on the unit cube and equal-weight quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_PRIMES: list[int] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53]


def first_primes(count: int) -> list[int]:
    """Return the first ``count`` primes, growing the cached table on demand."""
    candidate = _PRIMES[-1] + 2
    while len(_PRIMES) < count:
        if all(candidate % p for p in _PRIMES if p * p <= candidate):
            _PRIMES.append(candidate)
        candidate += 2
    return _PRIMES[:count]


@dataclass(frozen=True)
class QmcConfig:
    s: int
    n_points: int
    start_index: int = 1
    sequence: str = "halton"

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"truncation dimension must be >= 1, got {self.s}")
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        if self.start_index < 0:
            raise ValueError(f"start_index must be >= 0, got {self.start_index}")
        if self.sequence != "halton":
            raise ValueError(f"unsupported sequence {self.sequence!r}")


@dataclass(frozen=True)
class RateConfig:
    """QMC exponent ``alpha`` and summability exponent ``p`` of the parametric map."""

    alpha: float = 1.0
    p: float = 4 / 9

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")


def radical_inverse(index: int, base: int) -> float:
    """Van der Corput digit reversal of ``index`` in ``base``.

    Numerator and denominator are kept as Python integers, so the single
    final division is correctly rounded.
    """
    if base < 2:
        raise ValueError(f"base must be >= 2, got {base}")
    if index < 0:
        raise ValueError(f"index must be non-negative, got {index}")
    num, den = 0, 1
    while index:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def _radical_inverse_array(indices: np.ndarray, base: int) -> np.ndarray:
    top = int(indices.max()) if indices.size else 0
    n_digits = 0
    while base**n_digits <= top:
        n_digits += 1
    den = base**n_digits
    if den >= 2**53:
        # int64 / float64 would no longer be exact
        return np.array([radical_inverse(int(i), base) for i in indices])
    rest = indices.astype(np.int64)
    num = np.zeros_like(rest)
    for _ in range(n_digits):
        rest, digit = np.divmod(rest, base)
        num = num * base + digit
    # num currently reverses over a fixed width of n_digits, i.e. it is
    # already the numerator over base**n_digits
    return num.astype(np.float64) / float(den)


def halton_points(cfg: QmcConfig) -> np.ndarray:
    """Return an ``(n_points, s)`` array of Halton points in [0, 1)^s."""
    bases = first_primes(cfg.s)
    indices = np.arange(cfg.start_index, cfg.start_index + cfg.n_points, dtype=np.int64)
    pts = np.empty((cfg.n_points, cfg.s))
    for j, b in enumerate(bases):
        pts[:, j] = _radical_inverse_array(indices, b)
    return pts


def to_parameter_cube(pts) -> np.ndarray:
    """Map points of [0, 1)^s onto the parameter cube via y = 2x - 1."""
    pts = np.asarray(pts, dtype=np.float64)
    if np.any(pts < 0) or np.any(pts >= 1):
        raise ValueError("points must lie in [0, 1)")
    return 2.0 * pts - 1.0


def parameter_points(s: int, n_points: int, start_index: int = 1) -> np.ndarray:
    return to_parameter_cube(halton_points(QmcConfig(s, n_points, start_index)))


def qmc_mean(values) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("qmc_mean of an empty sample")
    return float(values.mean())
