from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import qmc as scipy_qmc

from podnn.qmc import (
    QmcConfig,
    RateConfig,
    first_primes,
    halton_points,
    parameter_points,
    qmc_mean,
    radical_inverse,
    to_parameter_cube,
)


def exact_radical_inverse(n, b):
    # oracle: digit reversal in exact rational arithmetic
    x, scale = Fraction(0), Fraction(1, b)
    while n:
        n, d = divmod(n, b)
        x += d * scale
        scale /= b
    return x


@pytest.mark.parametrize(
    "index,base,expected",
    [(0, 2, 0.0), (1, 2, 0.5), (3, 2, 0.75), (1, 3, 1 / 3)],
)
def test_radical_inverse_examples(index, base, expected):
    assert radical_inverse(index, base) == expected


@given(st.integers(0, 10**7), st.sampled_from([2, 3, 5, 7, 11, 13, 53]))
def test_radical_inverse_matches_exact_rational(n, b):
    assert radical_inverse(n, b) == float(exact_radical_inverse(n, b))


def test_first_primes():
    assert first_primes(10) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert len(first_primes(300)) == 300 and first_primes(300)[-1] == 1987


def test_halton_examples():
    np.testing.assert_array_equal(halton_points(QmcConfig(2, 1)), [[0.5, 1 / 3]])
    pts = halton_points(QmcConfig(2, 2))
    np.testing.assert_array_equal(pts[1], [0.25, 2 / 3])
    np.testing.assert_array_equal(halton_points(QmcConfig(1, 1, start_index=0)), [[0.0]])


def test_halton_matches_scalar_path_and_scipy():
    cfg = QmcConfig(12, 300, start_index=1)
    pts = halton_points(cfg)
    primes = first_primes(12)
    for i in (0, 1, 77, 299):
        assert list(pts[i]) == [radical_inverse(i + 1, b) for b in primes]
    ref = scipy_qmc.Halton(d=12, scramble=False).random(301)[1:]
    np.testing.assert_allclose(pts, ref, rtol=0, atol=4e-16)


def test_halton_large_index_stays_exact():
    # bases whose powers overflow the fixed-width path
    cfg = QmcConfig(3, 4, start_index=2**40)
    pts = halton_points(cfg)
    for i in range(4):
        for j, b in enumerate((2, 3, 5)):
            assert pts[i, j] == float(exact_radical_inverse(2**40 + i, b))


def test_dyadic_stratification():
    for m in range(1, 11):
        x = halton_points(QmcConfig(1, 2**m, start_index=0))[:, 0]
        assert sorted(x) == [k / 2**m for k in range(2**m)]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 200), st.integers(0, 10**6))
def test_determinism_and_range(s, n, start):
    cfg = QmcConfig(s, n, start)
    a, b = halton_points(cfg), halton_points(cfg)
    assert np.array_equal(a, b)
    assert a.shape == (n, s)
    assert (a >= 0).all() and (a < 1).all()
    y = to_parameter_cube(a)
    assert (y >= -1).all() and (y < 1).all()


@pytest.mark.parametrize(
    "pt,expected",
    [((0.5, 0.5), (0.0, 0.0)), ((0.0,), (-1.0,)), ((0.75, 1 / 3), (0.5, -1 / 3))],
)
def test_to_parameter_cube_examples(pt, expected):
    np.testing.assert_allclose(to_parameter_cube(np.array([pt]))[0], expected, atol=1e-15)


def test_to_parameter_cube_rejects_out_of_range():
    with pytest.raises(ValueError):
        to_parameter_cube(np.array([[1.0]]))
    with pytest.raises(ValueError):
        to_parameter_cube(np.array([[-0.1]]))


def test_qmc_mean_examples():
    assert qmc_mean([1, 1, 1]) == 1
    assert qmc_mean([0, 2]) == 1
    with pytest.raises(ValueError):
        qmc_mean([])


def test_product_integrand_mean():
    y = parameter_points(4, 2**10)
    f = np.prod(1 + y / 2.0 ** np.arange(1, 5), axis=1)
    assert abs(qmc_mean(f) - 1) < 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        QmcConfig(0, 4)
    with pytest.raises(ValueError):
        QmcConfig(2, 0)
    with pytest.raises(ValueError):
        QmcConfig(2, 4, start_index=-1)
    with pytest.raises(ValueError):
        QmcConfig(2, 4, sequence="sobol")
    with pytest.raises(ValueError):
        RateConfig(alpha=0.0)
    with pytest.raises(ValueError):
        RateConfig(p=1.0)
