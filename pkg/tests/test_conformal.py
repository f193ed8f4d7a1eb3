import math

import numpy as np
import pytest
import sympy as sp

from yamabe_lab.conformal import (
    FINITE_VOLUME,
    HYPERBOLIC,
    ConformalFactor,
    asymptotic_chart_change,
    chart_identity_residual,
    classify_warping,
    conformal_laplacian_apply,
    conformal_scalar_curvature,
    finite_volume_normal_form,
    hyperbolic_chart,
    keller_osserman_integral,
)
from yamabe_lab.errors import CannotExtrapolateError, InvalidParameterError, WrongClassError
from yamabe_lab.geometry import ReferenceHyperbolic, exp_torus_spec, f_k_profile, scalar_curvature
from yamabe_lab.profiles import RadialProfile, const_profile, cosh_profile, exp_profile, expr_profile
from yamabe_lab.yamabe_radial import limit_profile


def test_constant_factors():
    spec = ReferenceHyperbolic(0, 1.0, 3).spec()
    one = const_profile(1.0)
    assert conformal_laplacian_apply(spec, one, 0.5) == pytest.approx(-6.0)
    spec2, S = exp_torus_spec([0.3, -1.1, 0.4])
    assert conformal_scalar_curvature(spec2, one, 0.2) == pytest.approx(S)
    c = const_profile(2.0)
    assert conformal_scalar_curvature(spec2, c, 0.2) == pytest.approx(2.0 ** (-4 / 2) * S)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_limit_profile_is_in_kernel_of_model_operator(n):
    spec, S = exp_torus_spec([1.0] * (n - 1))
    assert S == -n * (n - 1)
    w = limit_profile(n, domain=(-1.0, None))
    r = np.array([0.0, 1.0, 5.0])
    np.testing.assert_allclose(conformal_laplacian_apply(spec, w, r), 0.0, atol=1e-12)


def test_conformal_change_matches_reparametrised_warped_product():
    # u^{4/(n-2)} (dr^2 + sum p_i^2 dth_i^2) = ds^2 + sum (phi p_i)^2 dth_i^2, ds = phi dr
    n = 3
    r = sp.Symbol("r", real=True)
    a = [sp.Rational(3, 2), sp.Rational(-1, 2)]
    u = 1 + sp.exp(-r ** 2) / 3
    phi = u ** sp.Rational(2, n - 2)
    D = lambda e: sp.diff(e, r) / phi
    Q = [phi * sp.exp(ai * r) for ai in a]
    ld = [D(q) / q for q in Q]
    S = sum(-2 * D(D(q)) / q for q in Q) - 2 * ld[0] * ld[1]
    S = sp.lambdify(r, S)
    spec, _ = exp_torus_spec([float(x) for x in a])
    up = expr_profile("1 + exp(-r^2)/3")
    for x in (-0.8, 0.0, 0.4, 1.7):
        assert conformal_scalar_curvature(spec, up, x) == pytest.approx(float(S(x)), rel=1e-10)


def test_conformal_covariance_of_products():
    spec, _ = exp_torus_spec([1.2, 0.3])
    u = expr_profile("1 + exp(-r^2)/3")
    v = expr_profile("2 + sin(r)/2")
    r = np.linspace(-1, 1, 9)
    direct = conformal_scalar_curvature(spec, u * v, r)
    # L_{u^4 g}(v) = u^{-5} L_g(u v) for n = 3
    via = (u(r) * v(r)) ** (-5) * conformal_laplacian_apply(spec, u * v, r)
    np.testing.assert_allclose(direct, via, rtol=1e-12)


def test_nonpositive_factor_rejected():
    spec, _ = exp_torus_spec([1.0, 1.0])
    with pytest.raises(InvalidParameterError):
        conformal_scalar_curvature(spec, expr_profile("r"), -0.5)
    with pytest.raises(InvalidParameterError):
        ConformalFactor(expr_profile("r", domain=(-1, 1)), 3)


def test_keller_osserman_values():
    assert keller_osserman_integral(cosh_profile(domain=(0, None))).value == pytest.approx(math.pi / 2, abs=1e-8)
    assert keller_osserman_integral(exp_profile(1.0, domain=(0, None))).value == pytest.approx(1.0, abs=1e-9)
    assert not keller_osserman_integral(const_profile(1.0, domain=(0, None))).finite
    assert repr(keller_osserman_integral(const_profile(1.0, domain=(0, None)))) == "Divergent"


def test_keller_osserman_power_laws():
    # int (1+s)^{-2} = 1; int (1+s)^{-1} diverges logarithmically
    fin = keller_osserman_integral(expr_profile("(1 + r)^2", domain=(0, None)))
    assert fin.finite and fin.value == pytest.approx(1.0, rel=1e-4)
    assert not keller_osserman_integral(expr_profile("1 + r", domain=(0, None))).finite


def test_keller_osserman_rejects_nonpositive():
    with pytest.raises(InvalidParameterError):
        keller_osserman_integral(expr_profile("r - 1", domain=(0, None)))


@pytest.mark.parametrize("k", [-1, 0, 1])
def test_reference_shift_is_finite_for_all_models(k):
    assert keller_osserman_integral(f_k_profile(k, 0.7)).finite


def test_identity_chart_for_exponential():
    res = hyperbolic_chart(exp_profile(1.0, domain=(0, None)), 0)
    assert res.kind == HYPERBOLIC
    assert res.r0 == pytest.approx(0.0, abs=1e-9)
    z = np.linspace(0, 5, 11)
    np.testing.assert_allclose(res.K(z), z, atol=1e-8)


def test_cosh_chart_k1():
    f = cosh_profile(domain=(0, None))
    res = hyperbolic_chart(f, 1)
    assert res.I_value == pytest.approx(math.pi / 2, abs=1e-8)
    assert res.r0 == pytest.approx(2 * math.atanh(math.exp(-math.pi / 2)), rel=1e-10)
    assert res.r0 == pytest.approx(0.4219082547560243, rel=1e-10)
    assert res.ode_max_deviation <= 1e-8
    z = np.linspace(0.1, 4.5, 20)
    assert np.max(chart_identity_residual(res, f, z)) <= 1e-7
    K1 = res.K.d1(z)
    assert np.all(K1 > 0) and np.all(np.diff(res.K(z)) > 0)


@pytest.mark.parametrize("k", [-1, 0])
def test_cosh_chart_other_models(k):
    f = cosh_profile(domain=(0, None))
    res = hyperbolic_chart(f, k)
    assert res.ode_max_deviation <= 1e-8
    z = np.linspace(res.z0 + 0.1, 4.5, 20)
    assert np.max(chart_identity_residual(res, f, z) / f(z) ** 2) <= 1e-7


def test_k_minus_one_cosh_constants():
    res = hyperbolic_chart(cosh_profile(domain=(0, None)), -1)
    assert res.r0 == pytest.approx(math.asinh(1.0), rel=1e-9)
    assert res.z0 == pytest.approx(math.asinh(1.0), rel=1e-9)


def test_rescaled_reference_curvature_is_hyperbolic():
    # (K')^2 times dz^2 + f^2 h is the reference model, whose curvature is -n(n-1)
    f = cosh_profile(domain=(0, None))
    res = hyperbolic_chart(f, 1)
    spec = ReferenceHyperbolic(1, res.r0, 3).spec()
    rs = res.K(np.linspace(0.5, 4, 8))
    np.testing.assert_allclose(scalar_curvature(spec, rs), -6.0, atol=1e-6)


def test_finite_volume_normal_form_identities():
    f = const_profile(1.0, domain=(0, None))
    K, vol = finite_volume_normal_form(f, n=3)
    z = np.linspace(0, 50, 26)
    np.testing.assert_allclose(K(z), np.log1p(z), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(K.d1(z), 1 / f(z) * np.exp(-K(z)), rtol=1e-12, atol=0)
    assert vol == pytest.approx(0.5)
    assert finite_volume_normal_form(f, n=5, fibre_volume=2.0)[1] == pytest.approx(0.5)


def test_classification_dispatch_and_wrong_class():
    assert classify_warping(cosh_profile(domain=(0, None))).kind == HYPERBOLIC
    res = classify_warping(const_profile(1.0, domain=(0, None)))
    assert res.kind == FINITE_VOLUME and res.I_value is None
    with pytest.raises(WrongClassError):
        hyperbolic_chart(const_profile(1.0, domain=(0, None)), 1)
    with pytest.raises(WrongClassError):
        finite_volume_normal_form(cosh_profile(domain=(0, None)))


def test_classification_csv_is_rfc4180():
    res = hyperbolic_chart(cosh_profile(domain=(0, None)), 1)
    text = res.to_csv(np.linspace(0, 2, 3))
    lines = text.split("\r\n")
    assert lines[0] == "z,K,K_prime" and lines[-1] == "" and len(lines) == 5


def test_chart_change_identity_and_closed_form():
    r = np.linspace(1, 8, 401)
    one = const_profile(1.0)
    cc = asymptotic_chart_change(one, r, 3)
    np.testing.assert_allclose(cc.z, r)
    u = RadialProfile(lambda s: 1 - np.exp(-2 * s), lambda s: 2 * np.exp(-2 * s), lambda s: -4 * np.exp(-2 * s))
    cc = asymptotic_chart_change(u, r, 3)
    exact = np.exp(-2 * r) - np.exp(-4 * r) / 4
    np.testing.assert_allclose(cc.z - r, exact, rtol=1e-6, atol=1e-10)
    assert cc.rate == pytest.approx(2.0, rel=1e-3)
    assert np.all(np.abs(cc.z - r) <= cc.C * np.exp(-cc.rate * r) * (1 + 1e-12))
    assert np.all(np.diff(cc.z) > 0)


def test_chart_change_refuses_without_decay():
    r = np.linspace(1, 8, 101)
    with pytest.raises(CannotExtrapolateError):
        asymptotic_chart_change(expr_profile("1 + exp(r/2)/10"), r, 3)
