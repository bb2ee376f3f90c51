import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nomavlc.errors import AccuracyError, ConvergenceError, DomainError, PoleError, RangeError
from nomavlc.specfun import (QuadratureSpec, adaptive_quad, gauss_2f1, hermite, hermite_all, integrate,
                             log_gamma, pochhammer)


# log_gamma ---------------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(5.0, math.log(24.0)), (0.5, 0.5 * math.log(math.pi)), (1.0, 0.0)])
def test_log_gamma_known_values(x, expected):
    assert log_gamma(x) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("x", [0.0, -1.0, -0.5, float("inf")])
def test_log_gamma_rejects_bad_argument(x):
    with pytest.raises(DomainError):
        log_gamma(x)


def test_log_gamma_matches_mpmath_over_range():
    for x in np.geomspace(1e-3, 1e3, 60):
        ref = float(mpmath.loggamma(mpmath.mpf(x)))
        assert abs(log_gamma(x) - ref) <= 1e-12 * max(1.0, abs(ref))


# pochhammer ---------------------------------------------------------------

@pytest.mark.parametrize("a, m, expected", [(3, 0, 1.0), (3, 2, 12.0), (0.5, 3, 1.875)])
def test_pochhammer_examples(a, m, expected):
    assert pochhammer(a, m) == pytest.approx(expected, rel=1e-15)


@given(st.floats(0.01, 20.0), st.integers(0, 60))
def test_pochhammer_step(a, m):
    assert pochhammer(a, m + 1) == pytest.approx(pochhammer(a, m) * (a + m), rel=1e-11)


def test_pochhammer_large_order_uses_log_path():
    assert pochhammer(5.0, 40) == pytest.approx(float(mpmath.rf(5, 40)), rel=1e-12)


# Hermite ---------------------------------------------------------------------

def test_hermite_low_orders():
    x = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(hermite(2, x, "probabilists"), x**2 - 1, atol=1e-14)
    assert hermite(1, 3.0, "physicists") == 6.0
    assert hermite(0, 1.7) == 1.0


def test_hermite_rodrigues_finite_difference():
    # He_4(x) = e^{x²/2} (-d/dx)^4 e^{-x²/2}, fourth derivative by mpmath's numeric diff
    x = 0.7
    d4 = mpmath.diff(lambda t: mpmath.exp(-t * t / 2), x, 4)
    ref = float(mpmath.exp(x * x / 2) * d4)
    assert hermite(4, x) == pytest.approx(ref, abs=1e-8)


def test_hermite_derivative_identity():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-3, 3, 20)
    h = 1e-5
    for m in range(1, 16):
        fd = (hermite(m, xs + h) - hermite(m, xs - h)) / (2 * h)
        np.testing.assert_allclose(fd, m * hermite(m - 1, xs), rtol=1e-6, atol=1e-6)


def test_hermite_physicists_scaling():
    # H_m(x) = 2^{m/2} He_m(sqrt(2) x)
    x = np.linspace(-2, 2, 9)
    for m in range(8):
        np.testing.assert_allclose(hermite(m, x, "physicists"), 2 ** (m / 2) * hermite(m, math.sqrt(2) * x),
                                   rtol=1e-12, atol=1e-12)


def test_hermite_all_matches_single():
    x = np.linspace(-4, 4, 7)
    table = hermite_all(12, x)
    for m in range(13):
        np.testing.assert_allclose(table[m], hermite(m, x), rtol=1e-14)


def test_hermite_guard():
    with pytest.raises(RangeError):
        hermite(201, 0.1)
    with pytest.raises(DomainError):
        hermite(2, 0.1, "bogus")


# 2F1 ---------------------------------------------------------------------------

def _log_identity(z):
    return -math.log1p(-z) / z


def test_2f1_at_zero():
    assert gauss_2f1(0.3, 1.7, 2.2, 0.0) == 1.0


@pytest.mark.parametrize("z, expected", [(0.5, 1.3862943611198906), (-9.0, math.log(10.0) / 9.0)])
def test_2f1_log_examples(z, expected):
    assert gauss_2f1(1, 1, 2, z) == pytest.approx(expected, rel=1e-12)


def test_2f1_log_identity_dense():
    for z in np.linspace(-10, 0.99, 400):
        if z == 0:
            continue
        assert gauss_2f1(1, 1, 2, z) == pytest.approx(_log_identity(z), rel=1e-10)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 4), st.floats(-50, 0.9))
def test_2f1_symmetric_in_a_b(a, b, c, z):
    try:
        left = gauss_2f1(a, b, c, z)
    except ConvergenceError:
        return
    assert gauss_2f1(b, a, c, z) == left


@pytest.mark.parametrize("a, b, c, z", [
    (1.0, -0.4, 0.6, -0.3), (1.0, -0.4, 0.6, -1.5), (1.0, 0.6, 1.6, -40.0), (1.0, 0.3, 1.3, -1e4),
    (1.0, 1.0, 2.0, -1e4), (1.0, 2.0, 3.0, -250.0), (0.5, 1.5, 2.5, 0.8), (1.0, -0.9, 0.1, -7.0),
])
def test_2f1_against_mpmath(a, b, c, z):
    ref = float(mpmath.hyp2f1(a, b, c, z))
    assert gauss_2f1(a, b, c, z) == pytest.approx(ref, rel=1e-10)


def test_2f1_errors():
    with pytest.raises(DomainError):
        gauss_2f1(1, 1, 2, 1.0)
    with pytest.raises(PoleError):
        gauss_2f1(1, 1, -2, 0.3)


# quadrature ----------------------------------------------------------------------

def test_integrate_simple():
    assert integrate(lambda x: x, 0, 1) == pytest.approx(0.5, abs=1e-14)
    g = lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    assert integrate(g, -8, 8) == pytest.approx(1.0, abs=1e-10)


def test_integrate_refinement_levels_agree():
    f = lambda x: x**-1.5 * np.log(2 * x + 3)  # noqa: E731
    coarse = integrate(f, 1, 9, QuadratureSpec(1e-8, 1e-8))
    fine = integrate(f, 1, 9, QuadratureSpec(1e-13, 1e-13))
    assert coarse == pytest.approx(fine, abs=1e-9)
    ref = float(mpmath.quad(lambda x: x**-1.5 * mpmath.log(2 * x + 3), [1, 9]))
    assert fine == pytest.approx(ref, rel=1e-12)


def test_integrate_is_linear():
    f = lambda x: np.sin(3 * x) + x**2  # noqa: E731
    g = lambda x: np.exp(-x) * np.cos(x)  # noqa: E731
    lhs = integrate(lambda x: 2.5 * f(x) - 1.3 * g(x), -1, 2)
    rhs = 2.5 * integrate(f, -1, 2) - 1.3 * integrate(g, -1, 2)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_integrate_infinite_limits():
    g = lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    assert integrate(g, -np.inf, np.inf) == pytest.approx(1.0, abs=1e-9)
    assert integrate(g, 0, np.inf) == pytest.approx(0.5, abs=1e-9)


def test_integrate_reports_error_and_exhaustion():
    res = adaptive_quad(lambda x: np.sqrt(x), 0, 1)
    assert res.value == pytest.approx(2 / 3, abs=1e-10)
    assert res.error <= 1e-9
    with pytest.raises(AccuracyError) as info:
        adaptive_quad(lambda x: np.sin(1 / x), 1e-6, 1, QuadratureSpec(1e-14, 1e-14, 4))
    assert math.isfinite(info.value.value)


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(max_subdivisions=0)
