import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from yamabe_lab import eigen
from yamabe_lab.errors import InvalidParameterError, PreconditionError
from yamabe_lab.geometry import FibreSpec, ReferenceHyperbolic, WarpedProductSpec, choose_alphas, exp_torus_spec
from yamabe_lab.profiles import const_profile

RadialDomain = eigen.RadialDomain


def torus(beta, n=3):
    return exp_torus_spec(choose_alphas(beta, n))[0]


def length_domain(L):
    # outer interval [-L/2, L/2] with a unit-width core
    return RadialDomain.centred(0.0, L / 4, L / 4)


# ---------------------------------------------------------------------------
# first eigenvalue


@pytest.mark.parametrize("alphas", [(1.0, 1.0), (2.0, -1.0), (0.7, 0.3)])
def test_constant_coefficient_oracle(alphas):
    spec, _ = exp_torus_spec(list(alphas))
    rep = eigen.first_eigenvalue(spec, length_domain(8.0))
    exact = eigen.torus_eigenvalue_exact(alphas, 8.0)
    assert rep.lambda_ == pytest.approx(exact, rel=1e-6)
    assert rep.error_estimate <= 1e-5 * abs(exact)


def test_oracle_values_match_displayed_numbers():
    assert eigen.torus_eigenvalue_exact((1, 1), 8.0) == pytest.approx(2 + math.pi ** 2 / 8, rel=1e-15)
    assert eigen.torus_eigenvalue_exact((1, 1), 8.0) == pytest.approx(3.2337, abs=1e-4)
    assert eigen.torus_eigenvalue_exact((2, -1), 8.0) == pytest.approx(-2.7663, abs=1e-4)


def test_flat_sine_mode():
    # S = 0, w = 1: a flat 2-torus fibre over a line (n = 3)
    spec = WarpedProductSpec([FibreSpec(2, 0.0, 1.0)], [const_profile(1.0)])
    rep = eigen.first_eigenvalue(spec, length_domain(math.pi))
    assert rep.lambda_ == pytest.approx(8.0, rel=1e-9)
    x = rep.grid
    np.testing.assert_allclose(rep.eigenfunction, np.sin(x - x[0]), atol=1e-6)


def test_eigenfunction_contract():
    rep = eigen.first_eigenvalue(torus(1.0), length_domain(8.0))
    assert rep.eigenfunction[0] == 0.0 and rep.eigenfunction[-1] == 0.0
    assert np.all(rep.eigenfunction[1:-1] > 0) and np.max(rep.eigenfunction) == 1.0
    assert rep.method == "sturm_bisection" and rep.label == "radial eigenvalue"
    lo, hi = rep.bracket
    assert lo < rep.lambda_fine < hi and hi - lo <= 1e-8
    assert set(rep.to_dict(samples=True)) >= {"lambda", "r", "eigenfunction", "bracket"}


def test_grid_size_guard():
    with pytest.raises(InvalidParameterError):
        eigen.first_eigenvalue(torus(1.0), length_domain(8.0), grid_size=64)
    with pytest.raises(InvalidParameterError):
        RadialDomain(1.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        RadialDomain(0.0, 1.0, 0.0)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=40), st.floats(-60, 60))
def test_sturm_count_matches_dense_spectrum(diag, shift):
    d = np.asarray(diag)
    e = np.cos(np.arange(d.size - 1)) + 0.5
    ev = eigh_tridiagonal(d, e, eigvals_only=True)
    if np.min(np.abs(ev - shift)) < 1e-8:
        return
    assert int(eigen.sturm_count(d, e, shift)[0]) == int(np.sum(ev < shift))


def test_domain_monotonicity_on_nested_domains():
    spec = torus(1.5)
    lams = [eigen.first_eigenvalue(spec, RadialDomain.centred(0.0, 1.0, R), 512).lambda_
            for R in np.linspace(0.5, 5.0, 10)]
    assert np.all(np.diff(lams) < 0)


# ---------------------------------------------------------------------------
# Rayleigh quotient


def test_rayleigh_of_eigenfunction_and_homogeneity():
    spec = torus(1.0)
    dom = length_domain(8.0)
    rep = eigen.first_eigenvalue(spec, dom)
    phi = rep.profile()
    assert eigen.rayleigh_quotient(spec, phi, dom) == pytest.approx(rep.lambda_, abs=1e-8)
    tf = eigen.test_function(dom, 3)
    q1 = eigen.rayleigh_quotient(spec, tf, dom)
    q2 = eigen.rayleigh_quotient(spec, eigen.TestFunction(lambda r: 2 * tf(r), lambda r: 2 * tf.d1(r), tf.breaks), dom)
    assert q2 == pytest.approx(q1, rel=1e-12)


def test_rayleigh_rejects_nonvanishing_and_zero():
    spec = torus(1.0)
    dom = length_domain(4.0)
    with pytest.raises(InvalidParameterError):
        eigen.rayleigh_quotient(spec, const_profile(1.0), dom)
    zero = eigen.TestFunction(lambda r: 0 * np.asarray(r, float), lambda r: 0 * np.asarray(r, float))
    with pytest.raises(InvalidParameterError):
        eigen.rayleigh_quotient(spec, zero, dom)


@pytest.fixture(scope="module")
def beta1_lambda():
    dom = RadialDomain.centred(0.0, 1.0, 2.0)
    return dom, eigen.first_eigenvalue(torus(1.0), dom).lambda_


@given(st.integers(1, 4), st.floats(0.0, 1.0), st.floats(-0.5, 0.5))
def test_rayleigh_lower_bound_consistency(beta1_lambda, m, mix, shift):
    dom, lam = beta1_lambda
    lo, hi = dom.outer
    L = hi - lo
    # a sine mode, possibly blended with a shifted bump, vanishes at both ends
    f = lambda r: np.sin(m * math.pi * (r - lo) / L) + mix * np.sin(math.pi * (r - lo) / L) * np.exp(shift * r)
    df = lambda r: (m * math.pi / L * np.cos(m * math.pi * (r - lo) / L)
                    + mix * np.exp(shift * r) * (math.pi / L * np.cos(math.pi * (r - lo) / L)
                                                 + shift * np.sin(math.pi * (r - lo) / L)))
    q = eigen.rayleigh_quotient(torus(1.0), eigen.TestFunction(f, df), dom)
    assert q >= lam - 1e-8


def test_test_function_quotient_matches_bound_expression():
    # with S = -n(n-1) the quotient of the explicit test function equals its sharp bound
    spec = torus(1.0)
    dom = RadialDomain.centred(0.0, 1.0, 2.0)
    ub = eigen.eigen_upper_bound(spec, dom)
    assert ub.rayleigh == pytest.approx(ub.sharp_bound, rel=1e-8)
    lam = eigen.first_eigenvalue(spec, dom).lambda_
    assert lam < ub.rayleigh


# ---------------------------------------------------------------------------
# sup-norm problem


@pytest.mark.parametrize("n", [3, 4, 5, 6])
@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_h0_closed_form_vs_shooting(n, R):
    H0, _ = eigen.supnorm_minimizer_closed_form(n, R)
    assert eigen.supnorm_minimize_numeric(n, R) == pytest.approx(H0, rel=1e-8)


def test_h0_values_and_profile():
    H0, phi = eigen.supnorm_minimizer_closed_form(3, 1.0)
    assert H0 == pytest.approx(6 / math.sinh(math.sqrt(3) / 2) ** 2, rel=1e-15)
    assert H0 == pytest.approx(6.2677, abs=1e-4)
    assert phi(0.0) == 0.0 and phi(1.0) == pytest.approx(1.0, rel=1e-15)
    hs = [eigen.supnorm_minimizer_closed_form(4, R)[0] for R in (1, 2, 4)]
    assert hs[0] > hs[1] > hs[2] > 0
    with pytest.raises(InvalidParameterError):
        eigen.supnorm_minimizer_closed_form(3, 0.0)


@pytest.mark.parametrize("n,R", [(3, 1.0), (5, 0.5), (6, 2.0)])
def test_level_set_is_constant(n, R):
    H0, phi = eigen.supnorm_minimizer_closed_form(n, R)
    r = np.linspace(0, R, 100)
    F = (4 * (n - 1) / (n - 2)) * phi.d1(r) ** 2 - n * (n - 1) * phi(r) ** 2
    assert np.ptp(F) <= 1e-10
    assert F[0] == pytest.approx(H0, rel=1e-12)


def test_perturbations_increase_the_sup():
    n, R = 3, 1.0
    H0, phi = eigen.supnorm_minimizer_closed_form(n, R)
    base = eigen.supnorm_objective(n, phi, phi.d1, R)
    assert base == pytest.approx(H0, rel=1e-12)
    rng = np.random.default_rng(7)
    for _ in range(20):
        eps = rng.choice([-1, 1]) * rng.uniform(0.2, 1.0) * 0.01
        f = lambda r, e=eps: phi(r) + e * np.sin(math.pi * r / R)
        df = lambda r, e=eps: phi.d1(r) + e * math.pi / R * np.cos(math.pi * r / R)
        assert eigen.supnorm_objective(n, f, df, R) > base


# ---------------------------------------------------------------------------
# bounds and certificate


def test_upper_bound_regimes():
    holds = eigen.eigen_upper_bound(torus(1.0), RadialDomain.centred(0.0, 1.0, 5.0))
    assert holds.regime == "ratio_holds" and holds.bound < 0
    assert holds.bound == pytest.approx(-0.03081924192021207, rel=1e-10)
    fails = eigen.eigen_upper_bound(torus(2.0), RadialDomain.centred(0.0, 1.0, 1.0))
    assert fails.regime == "ratio_fails" and math.isfinite(fails.bound)
    for spec, dom in ((torus(1.0), RadialDomain.centred(0, 1, 5)), (torus(2.0), RadialDomain.centred(0, 1, 1))):
        ub = eigen.eigen_upper_bound(spec, dom)
        lam = eigen.first_eigenvalue(spec, dom).lambda_
        assert lam < ub.sharp_bound and lam < ub.bound


def test_upper_bound_precondition_names_sample():
    spec, S = exp_torus_spec([0.5, 0.5])
    assert S > -6
    with pytest.raises(PreconditionError, match="at r ="):
        eigen.eigen_upper_bound(spec, RadialDomain.centred(0, 1, 1))


def test_certificate_examples():
    cert = eigen.negativity_certificate(torus(1.0), RadialDomain.centred(0.0, 1.0, 5.0))
    assert cert.verdict == eigen.NEGATIVE and cert.certified
    assert cert.ratio == pytest.approx(170.64138231076177, rel=1e-12)
    assert cert.lambda_numeric < 0
    assert cert.lambda_numeric == pytest.approx(eigen.torus_eigenvalue_exact((2, -1), 12.0), rel=1e-6)
    cert = eigen.negativity_certificate(torus(2.0), RadialDomain.centred(0.0, 1.0, 1.0))
    assert cert.verdict == eigen.INCONCLUSIVE and cert.lambda_numeric > 0
    # outer length is 4 here, not 8
    assert cert.lambda_numeric == pytest.approx(eigen.torus_eigenvalue_exact((1, 1), 4.0), rel=1e-6)


def test_certificate_scalar_branch():
    spec, _ = exp_torus_spec([0.5, 0.5])
    cert = eigen.negativity_certificate(spec, RadialDomain.centred(0, 1, 5), numeric=False)
    assert cert.verdict == eigen.INCONCLUSIVE and not cert.scalar_condition_ok
    assert cert.lambda_upper is None and cert.worst_scalar > -6
    d = cert.to_dict()
    assert d["lambda_label"] == "radial eigenvalue" and d["lambda_numeric"] is None


@given(st.sampled_from([0.25, 0.5, 1.0, 1.5]), st.floats(0.3, 1.5), st.floats(0.5, 6.0))
def test_certified_implies_negative(beta, W, R):
    cert = eigen.negativity_certificate(torus(beta), RadialDomain.centred(0.0, W, R), grid_size=256)
    if cert.certified:
        assert cert.ratio <= cert.sinh2_bound and cert.scalar_condition_ok
        assert cert.lambda_numeric < 0


@pytest.mark.parametrize("k", [-1, 0, 1])
@pytest.mark.parametrize("center,W,R", [(1.0, 0.5, 0.5), (4.0, 1.0, 2.0)])
def test_reference_ends_share_the_torus_eigenvalue(k, center, W, R):
    # u = v / f turns the weight f^2 into the potential c_n f''/f = c_n for sinh, cosh and e^r alike
    spec = ReferenceHyperbolic(k, 0.1, 3).spec()
    dom = RadialDomain.centred(center, W, R)
    cert = eigen.negativity_certificate(spec, dom)
    assert cert.scalar_condition_ok and cert.verdict == eigen.INCONCLUSIVE
    assert cert.lambda_numeric == pytest.approx(eigen.torus_eigenvalue_exact((1, 1), dom.length), rel=1e-8)


# ---------------------------------------------------------------------------
# sharpness


@pytest.mark.parametrize("beta,R,expected,bound", [
    (2.0, 2.0, 2 + math.pi ** 2 / 8, 2.0),
    (1.0, 2.0, -6 + 8 * (0.25 + math.pi ** 2 / 64), -4.0),
])
def test_sharpness_examples(beta, R, expected, bound):
    rep = eigen.sharpness_experiment(beta, 3, R)
    assert rep.lambda_numeric == pytest.approx(expected, rel=1e-6)
    assert rep.lower_bound == pytest.approx(bound, rel=1e-14)
    assert rep.above_bound and rep.S == -6


def test_sharpness_above_threshold_is_positive():
    rep = eigen.sharpness_experiment(math.sqrt(3) + 0.1, 3, 3.0)
    assert rep.lambda_numeric > 0 and rep.above_bound


def test_sharpness_scaled_branch():
    rep = eigen.sharpness_experiment(2.5, 3, 2.0)
    assert rep.alphas == [1.25, 1.25] and rep.S == pytest.approx(-3 * 2.5 ** 2 / 2)
    assert rep.lambda_numeric == pytest.approx(rep.lambda_exact, rel=1e-6)
    assert rep.lambda_numeric > rep.lower_bound
    with pytest.raises(InvalidParameterError):
        eigen.sharpness_experiment(0.0, 3, 2.0)
