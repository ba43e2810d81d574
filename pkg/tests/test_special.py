import decimal
from decimal import Decimal

import numpy as np
import pytest

from mwwdr.errors import ValidationError
from mwwdr.special import expit, logit, std_normal_cdf, std_normal_pdf


def dec_expit_one():
    """1 / (1 + e^-1) with 50-digit arithmetic."""
    decimal.getcontext().prec = 50
    return Decimal(1) / (Decimal(1) + (-Decimal(1)).exp())


def dec_erf(x, prec=50, terms=200):
    """erf via its Maclaurin series in 50-digit arithmetic."""
    decimal.getcontext().prec = prec
    x = Decimal(x)
    total = Decimal(0)
    fact = Decimal(1)
    for n in range(terms):
        if n:
            fact *= n
        total += (-1) ** n * x ** (2 * n + 1) / (fact * (2 * n + 1))
    pi = Decimal("3.14159265358979323846264338327950288419716939937511")
    return total * 2 / pi.sqrt()


def dec_normal_cdf(x):
    two = Decimal(2)
    return (Decimal(1) + dec_erf(Decimal(x) / two.sqrt())) / two


class TestExpit:
    def test_symmetry_point(self):
        assert expit(0.0) == 0.5

    def test_saturation_clamped(self):
        assert expit(40.0) == 1.0 - 1e-12
        assert expit(-40.0) == 1e-12

    def test_high_precision_value(self):
        oracle = float(dec_expit_one())
        assert abs(expit(1.0) - oracle) < 1e-15

    def test_reflection_identity(self):
        xs = np.linspace(-30, 30, 501)
        assert np.max(np.abs(expit(xs) + expit(-xs) - 1.0)) < 1e-14

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            expit(float("nan"))
        with pytest.raises(ValidationError):
            expit(float("inf"))

    def test_array_shape(self):
        out = expit(np.zeros((3, 2)))
        assert out.shape == (3, 2)


class TestStdNormalCdf:
    def test_symmetry(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_reflection(self):
        xs = np.linspace(-8, 8, 401)
        assert np.max(np.abs(std_normal_cdf(xs) + std_normal_cdf(-xs) - 1.0)) < 1e-14

    def test_against_series_oracle(self):
        for x in (0.1, 0.5, 1.0, 1.5, 2.0, 3.0):
            oracle = float(dec_normal_cdf(x))
            assert abs(std_normal_cdf(x) - oracle) <= 1e-12

    def test_monotone_on_grid(self):
        xs = np.linspace(-10, 10, 2001)
        vals = std_normal_cdf(xs)
        assert np.all(np.diff(vals) >= 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            std_normal_cdf(float("nan"))


def test_pdf_matches_derivative():
    x = np.linspace(-4, 4, 41)
    h = 1e-6
    fd = (std_normal_cdf(x + h) - std_normal_cdf(x - h)) / (2 * h)
    assert np.max(np.abs(fd - std_normal_pdf(x))) < 1e-9


def test_logit_inverts_expit():
    xs = np.linspace(-15, 15, 101)
    assert np.max(np.abs(logit(expit(xs)) - xs)) < 1e-8
    with pytest.raises(ValidationError):
        logit(0.0)
