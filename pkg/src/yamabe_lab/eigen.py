"""First Dirichlet eigenvalue of the radial conformal Laplacian and its bounds.

On a warped product the radial part of ``-c_n Delta_g + S_g`` is the
Sturm-Liouville operator

    -c_n (w u')' / w + S_g u,      w = prod_i p_i^{n_i},

on an interval of the radial coordinate. The discretisation uses
half-node weights so the matrix is symmetric after scaling by ``W^{1/2}``;
the lowest eigenvalue comes from Sturm-sequence bisection and is
Richardson-extrapolated over grids ``N`` and ``2N``.

The same module holds the sup-norm problem
``inf sup_r c_n phi'^2 - n(n-1) phi^2`` with its closed-form minimiser, the
test-function upper bounds on the eigenvalue, the negativity certificate
(volume ratio below ``sinh^2(sqrt(n(n-2)) R / 2)`` plus ``S_g <= -n(n-1)``)
and the exponential-torus sharpness experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.linalg import eigvalsh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .errors import InvalidParameterError, NumericError, PreconditionError
from .geometry import (
    WarpedProductSpec,
    annulus_volume,
    choose_alphas,
    conformal_constant,
    exp_torus_spec,
    scalar_curvature,
    sinh2_threshold,
    volume_density,
)
from .profiles import RadialProfile

__all__ = [
    "RadialDomain",
    "EigenReport",
    "UpperBound",
    "Certificate",
    "SharpnessReport",
    "TestFunction",
    "rayleigh_quotient",
    "first_eigenvalue",
    "sturm_count",
    "supnorm_minimizer_closed_form",
    "supnorm_minimize_numeric",
    "supnorm_objective",
    "test_function",
    "eigen_upper_bound",
    "negativity_certificate",
    "sharpness_alphas",
    "sharpness_experiment",
    "torus_eigenvalue_exact",
]

QUAD_EPSREL = 1e-10


@dataclass(frozen=True)
class RadialDomain:
    """``Omega_1 = [a, b]`` inside ``Omega_2 = [a - R, b + R]``."""

    a: float
    b: float
    R: float

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidParameterError("inner interval must satisfy a < b")
        if not self.R > 0:
            raise InvalidParameterError("separation R must be positive")

    @classmethod
    def centred(cls, center: float, W: float, R: float) -> "RadialDomain":
        return cls(center - W, center + W, R)

    @property
    def outer(self):
        return self.a - self.R, self.b + self.R

    @property
    def length(self) -> float:
        lo, hi = self.outer
        return hi - lo

    @property
    def center(self) -> float:
        return (self.a + self.b) / 2

    @property
    def W(self) -> float:
        return (self.b - self.a) / 2

    def to_dict(self):
        return {"a": self.a, "b": self.b, "R": self.R, "outer": list(self.outer)}


# ---------------------------------------------------------------------------
# Sturm-Liouville discretisation


def _tridiagonal(spec: WarpedProductSpec, lo: float, hi: float, N: int):
    """Symmetrised FD matrix on ``N`` intervals: diagonal, off-diagonal, nodes, weights."""
    cn = conformal_constant(spec.n)
    x = np.linspace(lo, hi, N + 1)
    h = (hi - lo) / N
    xi = x[1:-1]
    mid = 0.5 * (x[:-1] + x[1:])
    wm = volume_density(spec, mid)
    w = volume_density(spec, xi)
    S = scalar_curvature(spec, xi)
    d = cn * (wm[:-1] + wm[1:]) / (h * h * w) + S
    e = -cn * wm[1:-1] / (h * h * np.sqrt(w[:-1] * w[1:]))
    return d, e, x, w


def sturm_count(d, e, shifts) -> np.ndarray:
    """Number of eigenvalues below each shift (negative pivots of ``T - x I``)."""
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    tiny = np.finfo(float).tiny
    e2 = e * e
    q = d[0] - shifts
    count = (q < 0).astype(int)
    for i in range(1, d.size):
        q = np.where(q == 0, tiny, q)
        q = d[i] - shifts - e2[i - 1] / q
        count += q < 0
    return count


def _lowest(d, e):
    lam = eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0), lapack_driver="stebz", tol=0.0)
    return float(lam[0])


def _inverse_iteration(d, e, sigma, iters=4):
    n = d.size
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[1] = d - sigma
    ab[2, :-1] = e
    y = np.ones(n)
    for _ in range(iters):
        y = solve_banded((1, 1), ab, y)
        y /= np.linalg.norm(y)
    return y


@dataclass
class EigenReport:
    lambda_: float
    grid: np.ndarray
    eigenfunction: np.ndarray
    method: str
    grid_size: int
    error_estimate: float
    bracket: tuple
    lambda_coarse: float
    lambda_fine: float
    label: str = "radial eigenvalue"

    def profile(self) -> RadialProfile:
        from .profiles import grid_profile

        return grid_profile(self.grid, self.eigenfunction)

    def to_dict(self, samples: bool = False) -> dict:
        out = {
            "lambda": self.lambda_,
            "method": self.method,
            "label": self.label,
            "grid_size": self.grid_size,
            "error_estimate": self.error_estimate,
            "bracket": list(self.bracket),
            "lambda_coarse": self.lambda_coarse,
            "lambda_fine": self.lambda_fine,
        }
        if samples:
            out["r"] = self.grid.tolist()
            out["eigenfunction"] = self.eigenfunction.tolist()
        return out


def first_eigenvalue(spec: WarpedProductSpec, domain: RadialDomain, grid_size: int = 2048) -> EigenReport:
    """Lowest Dirichlet eigenvalue of the radial conformal Laplacian on ``domain.outer``.

    Eigenvalues on ``N`` and ``2N`` intervals are combined as
    ``(4 l_2N - l_N)/3``; ``error_estimate`` is ``|l_2N - l_N|/3``. The
    fine-grid eigenvalue is certified by a Sturm count (no eigenvalue below
    the lower end of ``bracket``, at least one below the upper end), and the
    eigenfunction comes from inverse iteration on the fine grid, scaled to
    maximum 1.
    """
    if int(grid_size) != grid_size or grid_size < 128:
        raise InvalidParameterError("grid_size must be an integer >= 128")
    lo, hi = domain.outer
    spec.check_domain([lo, hi])
    N = int(grid_size)
    lams = []
    for M in (N, 2 * N):
        d, e, x, w = _tridiagonal(spec, lo, hi, M)
        lams.append(_lowest(d, e))
    l1, l2 = lams
    # smallest bracket the Sturm count can resolve, widened from 1e-10 relative
    cap = 64 * np.finfo(float).eps * max(1.0, abs(l2), float(np.max(np.abs(d))))
    gap = 1e-10 * max(1.0, abs(l2))
    while True:
        counts = sturm_count(d, e, [l2 - gap, l2 + gap])
        if counts[0] == 0 and counts[1] >= 1:
            break
        if gap > cap:
            raise NumericError("Sturm count does not bracket the lowest eigenvalue", {"counts": counts.tolist(), "lambda": l2})
        gap *= 2
    y = _inverse_iteration(d, e, l2 - gap)
    u = y / np.sqrt(w)
    u = u * np.sign(u[np.argmax(np.abs(u))])
    u = u / np.max(u)
    full = np.concatenate([[0.0], u, [0.0]])
    lam = (4 * l2 - l1) / 3
    if not np.isfinite(lam):
        raise NumericError("eigenvalue is not finite", {"coarse": l1, "fine": l2})
    return EigenReport(
        float(lam), x, full, "sturm_bisection", N, abs(l2 - l1) / 3,
        (float(l2 - gap), float(l2 + gap)), float(l1), float(l2),
    )


def torus_eigenvalue_exact(alphas, L: float, n: Optional[int] = None) -> float:
    """``S + c_n (beta^2/4 + pi^2/L^2)`` for the exponential torus on an interval of length ``L``."""
    alphas = list(alphas)
    n = n or len(alphas) + 1
    beta = sum(alphas)
    S = -beta ** 2 - sum(a * a for a in alphas)
    return S + conformal_constant(n) * (beta ** 2 / 4 + math.pi ** 2 / L ** 2)


# ---------------------------------------------------------------------------
# Rayleigh quotient and test functions


@dataclass
class TestFunction:
    """Piecewise ``C^1`` radial test function with its break points."""

    __test__ = False  # keep pytest from collecting this class

    f: object
    d1: object
    breaks: tuple = ()

    def __call__(self, r):
        return self.f(r)


def rayleigh_quotient(spec: WarpedProductSpec, phi, domain: RadialDomain) -> float:
    """``int (c_n phi'^2 + S phi^2) w / int phi^2 w`` over ``domain.outer``."""
    lo, hi = domain.outer
    spec.check_domain([lo, hi])
    cn = conformal_constant(spec.n)
    if abs(float(phi(np.array([lo]))[0])) > 1e-12 or abs(float(phi(np.array([hi]))[0])) > 1e-12:
        raise InvalidParameterError("test function must vanish at the outer endpoints")
    breaks = sorted(b for b in getattr(phi, "breaks", ()) if lo < b < hi)
    edges = [lo, *breaks, hi]

    def num(s):
        s = np.array([s])
        return float((cn * phi.d1(s) ** 2 + scalar_curvature(spec, s) * phi(s) ** 2)[0] * volume_density(spec, s)[0])

    def den(s):
        s = np.array([s])
        return float(phi(s)[0] ** 2 * volume_density(spec, s)[0])

    top = sum(integrate.quad(num, a, b, epsrel=QUAD_EPSREL, epsabs=0, limit=400)[0] for a, b in zip(edges, edges[1:]))
    bot = sum(integrate.quad(den, a, b, epsrel=QUAD_EPSREL, epsabs=0, limit=400)[0] for a, b in zip(edges, edges[1:]))
    if bot <= 0:
        raise InvalidParameterError("test function has zero L2 norm")
    return top / bot


def _kappa(n):
    return math.sqrt(n * (n - 2)) / 2


def supnorm_minimizer_closed_form(n: int, R: float):
    """``H0 = n(n-1) csch^2(kR)`` and ``phi(r) = sinh(kr)/sinh(kR)`` with ``k = sqrt(n(n-2))/2``."""
    if n < 3:
        raise InvalidParameterError("n must be at least 3")
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    k = _kappa(n)
    s = math.sinh(k * R)
    H0 = n * (n - 1) / s ** 2
    phi = RadialProfile(
        lambda r: np.sinh(k * r) / s,
        lambda r: k * np.cosh(k * r) / s,
        lambda r: k * k * np.sinh(k * r) / s,
        (0.0, R), label="sup-norm minimiser",
    )
    return H0, phi


def supnorm_objective(n: int, phi, dphi, R: float, num: int = 2001) -> float:
    """``sup_{[0, R]} c_n phi'^2 - n(n-1) phi^2`` sampled on ``num`` points."""
    r = np.linspace(0.0, R, num)
    return float(np.max(conformal_constant(n) * np.asarray(dphi(r)) ** 2 - n * (n - 1) * np.asarray(phi(r)) ** 2))


def supnorm_minimize_numeric(n: int, R: float, tol: float = 1e-14) -> float:
    """Shooting oracle for ``H0``.

    For a level ``c`` the curve ``F(phi, phi') = c`` with ``phi(0) = 0`` is
    integrated (DOP853, rtol 1e-13) and the level with ``phi(R) = 1`` is
    found by safeguarded bisection (Brent) to ``tol`` relative.
    """
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    cn = conformal_constant(n)
    nn = n * (n - 1)

    def end(c):
        sol = integrate.solve_ivp(
            lambda r, y: [math.sqrt((c + nn * y[0] ** 2) / cn)], (0.0, R), [0.0],
            method="DOP853", rtol=1e-13, atol=1e-15,
        )
        if not sol.success:
            raise NumericError("shooting integration failed", {"c": c, "message": sol.message})
        return sol.y[0, -1] - 1.0

    lo, hi = 0.0, 1.0
    while end(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise NumericError("could not bracket the sup-norm level", {"n": n, "R": R})
    return float(brentq(end, lo, hi, xtol=1e-300, rtol=max(tol, 4 * np.finfo(float).eps), maxiter=200))


def test_function(domain: RadialDomain, n: int) -> TestFunction:
    """1 on ``Omega_1``, the sup-norm minimiser of the distance to the outer boundary elsewhere."""
    a, b, R = domain.a, domain.b, domain.R
    k = _kappa(n)
    s = math.sinh(k * R)
    lo, hi = domain.outer

    def f(r):
        r = np.asarray(r, dtype=float)
        dist = np.minimum(r - lo, hi - r)
        return np.where((r >= a) & (r <= b), 1.0, np.sinh(k * np.clip(dist, 0, None)) / s)

    def d1(r):
        r = np.asarray(r, dtype=float)
        left = k * np.cosh(k * (r - lo)) / s
        right = -k * np.cosh(k * (hi - r)) / s
        return np.where(r < a, left, np.where(r > b, right, 0.0))

    return TestFunction(f, d1, (a, b))


test_function.__test__ = False  # a constructor, not a pytest test


# ---------------------------------------------------------------------------
# upper bounds and certificate


def _scalar_ok(spec, lo, hi, samples):
    r = np.linspace(lo, hi, samples)
    S = scalar_curvature(spec, r)
    target = -spec.n * (spec.n - 1)
    bad = np.nonzero(S > target + 1e-12 * abs(target))[0]
    return bad, r, S


@dataclass
class UpperBound:
    bound: float
    regime: str
    sharp_bound: float
    rayleigh: float
    inner_volume: float
    shell_volume: float
    numerator: float
    norm2: float

    def to_dict(self):
        return dict(self.__dict__)


def eigen_upper_bound(spec: WarpedProductSpec, domain: RadialDomain, grid_size: int = 2048) -> UpperBound:
    """Test-function bounds on the first eigenvalue.

    ``numerator = n(n-1)(V_shell csch^2(kR) - V_inner)``. The coarse bound
    divides it by ``Vol(Omega_2)`` when the ratio condition holds and by
    ``Vol(Omega_1)`` otherwise; ``sharp_bound`` divides by the squared
    ``L^2`` norm of the test function and ``rayleigh`` is its exact quotient.
    """
    lo, hi = domain.outer
    bad, r, S = _scalar_ok(spec, lo, hi, 10 * grid_size)
    if bad.size:
        i = bad[0]
        raise PreconditionError(f"S_g = {S[i]:.6g} > -n(n-1) at r = {r[i]:.6g}")
    n = spec.n
    V1 = annulus_volume(spec, domain.a, domain.b)
    V21 = annulus_volume(spec, lo, domain.a) + annulus_volume(spec, domain.b, hi)
    csch2 = 1.0 / math.sinh(_kappa(n) * domain.R) ** 2
    num = n * (n - 1) * (V21 * csch2 - V1)
    holds = V21 / V1 <= sinh2_threshold(n, domain.R)
    bound = num / (V1 + V21) if holds else num / V1
    phi = test_function(domain, n)
    a, b = domain.a, domain.b
    dens = lambda s: float(phi(np.array([s]))[0] ** 2 * volume_density(spec, np.array([s]))[0])
    norm2 = spec.fibre_volume * sum(
        integrate.quad(dens, x0, x1, epsrel=QUAD_EPSREL, epsabs=0, limit=400)[0]
        for x0, x1 in ((lo, a), (a, b), (b, hi))
    )
    rq = rayleigh_quotient(spec, phi, domain)
    return UpperBound(
        float(bound), "ratio_holds" if holds else "ratio_fails", float(num / norm2), float(rq),
        float(V1), float(V21), float(num), float(norm2),
    )


NEGATIVE = "negative_certified"
INCONCLUSIVE = "inconclusive"


@dataclass
class Certificate:
    ratio: float
    sinh2_bound: float
    lambda_upper: Optional[float]
    lambda_numeric: Optional[float]
    verdict: str
    scalar_condition_ok: bool
    regime: Optional[str] = None
    sharp_bound: Optional[float] = None
    worst_scalar: Optional[float] = None
    worst_scalar_r: Optional[float] = None
    domain: Optional[RadialDomain] = None

    @property
    def certified(self) -> bool:
        return self.verdict == NEGATIVE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ratio": self.ratio,
            "sinh2_bound": self.sinh2_bound,
            "scalar_condition_ok": self.scalar_condition_ok,
            "worst_scalar": self.worst_scalar,
            "worst_scalar_r": self.worst_scalar_r,
            "lambda_upper": self.lambda_upper,
            "sharp_bound": self.sharp_bound,
            "regime": self.regime,
            "lambda_numeric": self.lambda_numeric,
            "lambda_label": "radial eigenvalue",
            "domain": None if self.domain is None else self.domain.to_dict(),
        }


def negativity_certificate(
    spec: WarpedProductSpec, domain: RadialDomain, numeric: bool = True, grid_size: int = 2048,
) -> Certificate:
    """Decide the volume-ratio condition and ``S_g <= -n(n-1)`` on ``Omega_2``.

    Both holding gives ``negative_certified``; anything else is
    ``inconclusive``. The test-function upper bound is attached whenever the
    scalar condition holds, and with ``numeric`` the radial eigenvalue is
    computed for corroboration.
    """
    n = spec.n
    lo, hi = domain.outer
    bad, r, S = _scalar_ok(spec, lo, hi, 10 * grid_size)
    i = int(np.argmax(S))
    scalar_ok = bad.size == 0
    V1 = annulus_volume(spec, domain.a, domain.b)
    V21 = annulus_volume(spec, lo, domain.a) + annulus_volume(spec, domain.b, hi)
    ratio = V21 / V1
    thr = sinh2_threshold(n, domain.R)
    verdict = NEGATIVE if scalar_ok and ratio <= thr else INCONCLUSIVE
    ub = eigen_upper_bound(spec, domain, grid_size) if scalar_ok else None
    lam = first_eigenvalue(spec, domain, grid_size).lambda_ if numeric else None
    return Certificate(
        float(ratio), float(thr), None if ub is None else ub.bound, lam, verdict, scalar_ok,
        None if ub is None else ub.regime, None if ub is None else ub.sharp_bound,
        float(S[i]), float(r[i]), domain,
    )


# ---------------------------------------------------------------------------
# sharpness


def sharpness_alphas(beta: float, n: int):
    """Exponents with sum ``beta`` and ``S = -n(n-1)`` (``beta <= n-1``) or ``S = -n beta^2/(n-1)``."""
    if not beta > 0:
        raise InvalidParameterError("beta must be positive")
    if beta <= n - 1:
        return choose_alphas(beta, n)
    return [beta / (n - 1)] * (n - 1)


def sharpness_lower_bound(beta: float, n: int) -> float:
    """``(n-1) beta^2/(n-2) + S`` for the chosen constant scalar curvature."""
    S = -n * (n - 1) if beta <= n - 1 else -n * beta ** 2 / (n - 1)
    return (n - 1) * beta ** 2 / (n - 2) + S


@dataclass
class SharpnessReport:
    beta: float
    n: int
    R: float
    alphas: list
    S: float
    lambda_numeric: float
    lambda_exact: float
    lower_bound: float
    above_bound: bool
    volume_ratio: float
    C_fit: float
    error_estimate: float

    def to_dict(self):
        return dict(self.__dict__)


def sharpness_experiment(beta: float, n: int, R: float, grid_size: int = 2048) -> SharpnessReport:
    """Exponential torus with ``sum alpha = beta`` on ``Omega_1 = A_R`` inside ``Omega_2 = A_2R``."""
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    alphas = sharpness_alphas(beta, n)
    spec, S = exp_torus_spec(alphas)
    domain = RadialDomain(-R, R, R)
    rep = first_eigenvalue(spec, domain, grid_size)
    lb = sharpness_lower_bound(beta, n)
    V1 = annulus_volume(spec, -R, R)
    V21 = annulus_volume(spec, -2 * R, -R) + annulus_volume(spec, R, 2 * R)
    ratio = V21 / V1
    return SharpnessReport(
        float(beta), int(n), float(R), [float(a) for a in alphas], float(S), rep.lambda_,
        torus_eigenvalue_exact(alphas, domain.length, n), float(lb), bool(rep.lambda_ > lb),
        float(ratio), float(ratio * math.exp(-beta * R)), rep.error_estimate,
    )
