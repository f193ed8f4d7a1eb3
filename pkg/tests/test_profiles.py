import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yamabe_lab.errors import DomainError, InvalidParameterError
from yamabe_lab.profiles import (
    const_profile,
    cosh_profile,
    exp_profile,
    expr_profile,
    grid_profile,
    profile_from_dict,
    sinh_profile,
)


def central(f, r, h=1e-4):
    return (f(r + h) - f(r - h)) / (2 * h), (f(r + h) - 2 * f(r) + f(r - h)) / h ** 2


@given(st.floats(-3, 3), st.floats(-2, 2))
def test_exp_profile_derivatives_match_differences(alpha, r):
    p = exp_profile(alpha)
    d1, d2 = central(p, r)
    assert p.d1(r) == pytest.approx(d1, rel=1e-6, abs=1e-7)
    assert p.d2(r) == pytest.approx(d2, rel=1e-4, abs=1e-5)


@pytest.mark.parametrize("make", [exp_profile, lambda: sinh_profile(1.0), cosh_profile, lambda: const_profile(2.5)])
def test_closed_forms_round_trip_through_dict(make):
    p = make()
    q = profile_from_dict(p.to_dict())
    r = np.linspace(0.1, 3, 7)
    np.testing.assert_allclose(q(r), p(r), rtol=1e-15)
    np.testing.assert_allclose(q.d2(r), p.d2(r), rtol=1e-15)


def test_expression_matches_builtin_profile():
    p = expr_profile("cosh(r)")
    q = cosh_profile()
    r = np.linspace(-2, 2, 11)
    np.testing.assert_allclose(p(r), q(r), rtol=1e-14)
    np.testing.assert_allclose(p.d1(r), q.d1(r), rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(p.d2(r), q.d2(r), rtol=1e-14)


def test_expression_caret_means_power():
    p = expr_profile("1 + r^2")
    assert p(3.0) == 10.0
    assert p.d2(0.5) == 2.0


@pytest.mark.parametrize("text", ["__import__('os')", "r.real", "open(r)", "lambda: 1", "exp(r, 2)", "'a'"])
def test_expression_grammar_rejects_everything_else(text):
    with pytest.raises(InvalidParameterError):
        expr_profile(text)


def test_domain_is_enforced():
    p = exp_profile(1.0, domain=(0.0, 1.0))
    with pytest.raises(DomainError):
        p(1.5)
    assert p(1.0 + 1e-14) == pytest.approx(math.e)


def test_sinh_default_domain_keeps_positive():
    with pytest.raises(InvalidParameterError):
        sinh_profile(0.0, domain=(-1.0, 1.0))


def test_grid_profile_reproduces_cubic():
    r = np.linspace(0, 2, 9)
    p = grid_profile(r, r ** 3, bc_type=((2, 0.0), (2, 12.0)))
    x = np.linspace(0.05, 1.95, 13)
    np.testing.assert_allclose(p(x), x ** 3, rtol=1e-12, atol=1e-12)


def test_product_and_power_chain_rules():
    a, b = exp_profile(1.0), cosh_profile()
    r = np.linspace(-1, 1, 5)
    prod = a * b
    np.testing.assert_allclose(prod.d2(r), central(lambda s: np.exp(s) * np.cosh(s), r)[1], rtol=1e-5)
    sq = b.power(0.5)
    np.testing.assert_allclose(sq.d1(r), central(lambda s: np.sqrt(np.cosh(s)), r)[0], rtol=1e-7, atol=1e-9)
