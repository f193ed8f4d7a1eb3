"""Multiply warped products ``g = dr^2 + sum_i p_i(r)^2 h_i``.

Everything here reduces to ODE data in the radial variable: the scalar
curvature, the first-order coefficient of the radial Laplacian, the volume
density ``prod_i p_i^{n_i}`` and annulus volumes. The module also carries the
reference locally hyperbolic ends, the exponential torus family and the
three-dimensional example whose Ricci tensor does not settle down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    DomainError,
    InfeasibleError,
    InsufficientDataError,
    InvalidParameterError,
)
from .profiles import (
    RadialProfile,
    const_profile,
    cosh_profile,
    exp_profile,
    profile_from_dict,
    sinh_profile,
)

__all__ = [
    "FibreSpec",
    "WarpedProductSpec",
    "ReferenceHyperbolic",
    "VolumeRatio",
    "AlhDecayReport",
    "conformal_constant",
    "f_k",
    "q_k",
    "scalar_curvature",
    "radial_drift",
    "volume_density",
    "annulus_volume",
    "volume_ratio_annuli",
    "exp_torus_spec",
    "exp_torus_scalar",
    "choose_alphas",
    "ricci_3d_example",
    "alh_3d_example_deviations",
    "verify_alh_decay",
    "ball_ratio_bounds",
    "fit_ball_ratio_growth",
]

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-14


def conformal_constant(n: int) -> float:
    """``c_n = 4(n-1)/(n-2)``."""
    if n < 3:
        raise InvalidParameterError(f"dimension must be at least 3, got {n}")
    return 4.0 * (n - 1) / (n - 2)


def _check_k(k):
    if k not in (-1, 0, 1):
        raise InvalidParameterError(f"k must be one of -1, 0, 1; got {k!r}")


def f_k(k: int, r):
    """Warping of the locally hyperbolic model: sinh, exp or cosh for k = 1, 0, -1."""
    _check_k(k)
    r = np.asarray(r, dtype=float)
    out = {1: np.sinh, 0: np.exp, -1: np.cosh}[k](r)
    return float(out) if out.ndim == 0 else out


def q_k(k: int, r):
    """``f_k'/f_k``: coth, 1 or tanh."""
    _check_k(k)
    r = np.asarray(r, dtype=float)
    if k == 1:
        out = 1.0 / np.tanh(r)
    elif k == 0:
        out = np.ones_like(r)
    else:
        out = np.tanh(r)
    return float(out) if out.ndim == 0 else out


def f_k_profile(k: int, r0: float = 0.0, domain=(0.0, None)) -> RadialProfile:
    """``r -> f_k(r + r0)`` as a closed-form profile."""
    _check_k(k)
    if k == 1:
        return sinh_profile(r0, domain=domain)
    if k == 0:
        return exp_profile(1.0, r0, domain=domain)
    return cosh_profile(r0, domain=domain)


@dataclass(frozen=True)
class FibreSpec:
    """Compact fibre ``(N_i, h_i)`` of constant scalar curvature."""

    dim: int
    scal: float = 0.0
    volume: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidParameterError(f"fibre dimension must be a positive integer, got {self.dim}")
        if not self.volume > 0:
            raise InvalidParameterError(f"fibre volume must be positive, got {self.volume}")
        if self.dim == 1 and self.scal != 0:
            raise InvalidParameterError("a one-dimensional fibre has zero scalar curvature")

    def to_dict(self):
        return {"dim": int(self.dim), "scal": float(self.scal), "volume": float(self.volume)}


@dataclass(frozen=True)
class WarpedProductSpec:
    """Fibres and matching warping profiles of ``dr^2 + sum_i p_i^2 h_i``."""

    fibres: tuple
    warpings: tuple
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fibres", tuple(self.fibres))
        object.__setattr__(self, "warpings", tuple(self.warpings))
        if len(self.fibres) != len(self.warpings) or not self.fibres:
            raise InvalidParameterError("need one warping profile per fibre (and at least one fibre)")
        if self.n < 3:
            raise InvalidParameterError(f"total dimension must be at least 3, got {self.n}")
        for p in self.warpings:
            lo, hi = p.domain
            a = lo if math.isfinite(lo) else min(hi, 0.0) - 20.0
            b = hi if math.isfinite(hi) else max(lo, 0.0) + 20.0
            if not np.all(p(np.linspace(a, b, 257)) > 0):
                raise InvalidParameterError(f"warping {p.label} is not positive on its domain")

    @property
    def n(self) -> int:
        return 1 + sum(int(f.dim) for f in self.fibres)

    @property
    def domain(self):
        lo = max(p.domain[0] for p in self.warpings)
        hi = min(p.domain[1] for p in self.warpings)
        return lo, hi

    @property
    def fibre_volume(self) -> float:
        return float(np.prod([f.volume for f in self.fibres]))

    def check_domain(self, r):
        lo, hi = self.domain
        r = np.asarray(r, dtype=float)
        if np.any(r < lo) or np.any(r > hi):
            raise DomainError(f"r outside the warped product's radial domain [{lo}, {hi}]")
        return r

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "fibres": [f.to_dict() for f in self.fibres],
            "warpings": [p.to_dict() for p in self.warpings],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WarpedProductSpec":
        for key in ("fibres", "warpings"):
            if key not in doc:
                raise InvalidParameterError(f"warped product document is missing '{key}'")
        fibres = [FibreSpec(int(f["dim"]), float(f.get("scal", 0.0)), float(f.get("volume", 1.0))) for f in doc["fibres"]]
        warpings = [profile_from_dict(w) for w in doc["warpings"]]
        spec = cls(fibres, warpings)
        if "n" in doc and int(doc["n"]) != spec.n:
            raise InvalidParameterError(f"declared n={doc['n']} but fibres give n={spec.n}")
        return spec

    @classmethod
    def from_json(cls, text: str) -> "WarpedProductSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ReferenceHyperbolic:
    """The end ``dr^2 + f_k(r + r0)^2 h`` with ``S_h = (n-1)(n-2)k``."""

    k: int
    r0: float
    n: int
    fibre_volume: float = 1.0

    def __post_init__(self):
        _check_k(self.k)
        if not self.r0 > 0:
            raise InvalidParameterError("reference shift r0 must be positive")
        if self.n < 3:
            raise InvalidParameterError("dimension must be at least 3")

    @property
    def fibre(self) -> FibreSpec:
        return FibreSpec(self.n - 1, (self.n - 1) * (self.n - 2) * self.k, self.fibre_volume)

    def spec(self, domain=(0.0, None)) -> WarpedProductSpec:
        return WarpedProductSpec([self.fibre], [f_k_profile(self.k, self.r0, domain)], label=f"reference k={self.k}")


def _terms(spec, r):
    r = spec.check_domain(r)
    ns = [int(f.dim) for f in spec.fibres]
    logd = [p.d1(r) / p(r) for p in spec.warpings]
    ratio2 = [p.d2(r) / p(r) for p in spec.warpings]
    return r, ns, logd, ratio2


def scalar_curvature(spec: WarpedProductSpec, r):
    """Scalar curvature of the multiply warped product at radius ``r``."""
    r, ns, ld, r2 = _terms(spec, r)
    s = np.zeros_like(r)
    for i, ni in enumerate(ns):
        s = s - 2 * ni * r2[i] - ni * (ni - 1) * ld[i] ** 2
        s = s + spec.fibres[i].scal / spec.warpings[i](r) ** 2
        for j in range(i + 1, len(ns)):
            s = s - 2 * ni * ns[j] * ld[i] * ld[j]
    return float(s) if s.ndim == 0 else s


def radial_drift(spec: WarpedProductSpec, r):
    """First-order coefficient ``sum_i n_i p_i'/p_i`` of the radial Laplacian."""
    r, ns, ld, _ = _terms(spec, r)
    out = sum(ni * l for ni, l in zip(ns, ld))
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def volume_density(spec: WarpedProductSpec, r):
    """``prod_i p_i(r)^{n_i}``; multiply by ``spec.fibre_volume`` for the full density."""
    r = spec.check_domain(r)
    out = np.ones_like(r)
    for f, p in zip(spec.fibres, spec.warpings):
        out = out * p(r) ** int(f.dim)
    return float(out) if out.ndim == 0 else out


def annulus_volume(spec: WarpedProductSpec, r_lo: float, r_hi: float) -> float:
    """Volume of ``{r_lo <= r <= r_hi}`` by adaptive Gauss-Kronrod quadrature."""
    if r_hi < r_lo:
        raise InvalidParameterError(f"inverted bounds [{r_lo}, {r_hi}]")
    spec.check_domain([r_lo, r_hi])
    if r_hi == r_lo:
        return 0.0
    val, _ = integrate.quad(
        lambda s: volume_density(spec, s), r_lo, r_hi,
        epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500,
    )
    return spec.fibre_volume * val


class VolumeRatio(NamedTuple):
    ratio: float
    sinh2_bound: float
    satisfies: bool
    inner_volume: float
    shell_volume: float


def sinh2_threshold(n: int, R: float) -> float:
    return math.sinh(math.sqrt(n * (n - 2)) * R / 2) ** 2


def volume_ratio_annuli(spec: WarpedProductSpec, r0: float, W: float, R: float) -> VolumeRatio:
    """Shell-to-core volume ratio for ``|r - r0| <= W`` inside ``|r - r0| <= W + R``.

    ``satisfies`` reports whether the ratio is at most
    ``sinh^2(sqrt(n(n-2)) R / 2)``.
    """
    if not W > 0 or not R > 0:
        raise InvalidParameterError("half-width W and separation R must be positive")
    inner = annulus_volume(spec, r0 - W, r0 + W)
    shell = annulus_volume(spec, r0 - W - R, r0 - W) + annulus_volume(spec, r0 + W, r0 + W + R)
    ratio = shell / inner
    bound = sinh2_threshold(spec.n, R)
    return VolumeRatio(ratio, bound, bool(ratio <= bound), inner, shell)


def exp_torus_scalar(alphas: Sequence[float]) -> float:
    """Constant scalar curvature of ``R x (S^1)^{n-1}`` with ``p_i = e^{alpha_i r}``.

    Evaluated as ``-2 (sum a)^2 + 2 sum_{i<j} a_i a_j``.
    """
    a = [float(x) for x in alphas]
    cross = sum(a[i] * a[j] for i in range(len(a)) for j in range(i + 1, len(a)))
    return -2.0 * sum(a) ** 2 + 2.0 * cross


def exp_torus_spec(alphas: Sequence[float], circle_length: float = 1.0):
    """Exponential torus ``dr^2 + sum_i e^{2 alpha_i r} d theta_i^2``.

    Returns ``(spec, S_const)``.
    """
    alphas = [float(a) for a in alphas]
    if len(alphas) < 2:
        raise InvalidParameterError("need at least two circle factors (n >= 3)")
    fibres = [FibreSpec(1, 0.0, circle_length) for _ in alphas]
    warpings = [exp_profile(a) for a in alphas]
    beta = sum(alphas)
    s_const = -beta ** 2 - sum(a * a for a in alphas)
    return WarpedProductSpec(fibres, warpings, label=f"exp torus {alphas}"), s_const


def choose_alphas(beta: float, n: int) -> list:
    """Exponents with ``sum = beta`` and constant scalar curvature ``-n(n-1)``.

    All entries equal ``beta/(n-1)`` except the first two, which are moved by
    ``+t`` and ``-t``.
    """
    if n < 3:
        raise InvalidParameterError("n must be at least 3")
    m = n - 1
    if abs(beta) > m:
        raise InfeasibleError(f"|beta| = {abs(beta)} exceeds n-1 = {m}; scalar curvature -n(n-1) unreachable")
    mean = beta / m
    t2 = (n * (n - 1) - beta ** 2 - beta ** 2 / m) / 2
    t = math.sqrt(max(t2, 0.0))
    alphas = [mean] * m
    alphas[0] += t
    alphas[1] -= t
    return alphas


def ricci_3d_example(p: RadialProfile, r: float):
    """Ricci components and scalar curvature of ``dr^2 + e^{2r}(p dx1^2 + dx2^2/p)``.

    Returns ``(R_rr, R_11, R_22, S)`` at ``r``.
    """
    v = p(r)
    if np.any(np.asarray(v) <= 0):
        raise InvalidParameterError("p must be positive")
    l1 = p.d1(r) / v
    l2 = p.d2(r) / v
    e2 = np.exp(2 * r)
    r_rr = -2 - 0.5 * l1 ** 2
    r_11 = e2 * v * (-2 + 0.5 * l1 ** 2 - l1 - 0.5 * l2)
    r_22 = e2 / v * (-2 - 0.5 * l1 ** 2 + l1 + 0.5 * l2)
    s = -6 - 0.5 * l1 ** 2
    return r_rr, r_11, r_22, s


def alh_3d_example_deviations(p: RadialProfile, radii, order: int = 2) -> dict:
    """Deviation of the 3D example from ``dr^2 + e^{2r} dx^2`` and its r-derivatives.

    Keys are ``(component, derivative_order)``; the metric does not depend on
    the torus coordinates so only radial derivatives appear. Values have shape
    ``(len(radii), 2)`` (the two diagonal angular entries) for ``"ab"`` and are
    identically zero for ``"ra"``.
    """
    if order > 2:
        raise InvalidParameterError("profiles carry two derivatives; order must be <= 2")
    r = np.asarray(radii, dtype=float)
    e = np.exp(2 * r)
    v, v1, v2 = p(r), p.d1(r), p.d2(r)
    w = 1.0 / v
    w1 = -v1 / v ** 2
    w2 = -v2 / v ** 2 + 2 * v1 ** 2 / v ** 3
    out = {}
    for name, (a, a1, a2) in (("11", (v - 1, v1, v2)), ("22", (w - 1, w1, w2))):
        ders = [e * a, e * (2 * a + a1), e * (4 * a + 4 * a1 + a2)]
        for j in range(order + 1):
            out.setdefault(("ab", j), []).append(ders[j])
    for key in list(out):
        out[key] = np.stack(out[key], axis=1)
        out[("ra", key[1])] = np.zeros_like(out[key])
    return out


@dataclass
class AlhDecayReport:
    passed: bool
    constants: dict
    head_constants: dict
    tail_constants: dict
    alpha: float
    order: int

    def to_dict(self):
        key = lambda k: f"{k[0]}:{k[1]}"
        return {
            "passed": self.passed,
            "alpha": self.alpha,
            "order": self.order,
            "constants": {key(k): v for k, v in self.constants.items()},
            "head_constants": {key(k): v for k, v in self.head_constants.items()},
            "tail_constants": {key(k): v for k, v in self.tail_constants.items()},
        }


ALH_RATES = {"ab": lambda a: a - 2.0, "ra": lambda a: a - 1.0}


def verify_alh_decay(radii, deviations: Mapping, alpha: float, order: int, slack: float = 2.0) -> AlhDecayReport:
    """Sup-fit the ALH decay constants of sampled metric deviations.

    ``deviations[(component, j)]`` holds samples of the ``j``-th derivative of
    the deviation for component class ``"ab"`` (rate ``alpha - 2``) or
    ``"ra"`` (rate ``alpha - 1``); the first axis runs over ``radii`` and any
    further axes over chart points. For each entry the smallest ``C`` with
    ``|dev| <= C e^{-rate r}`` is reported. The check passes when every ``C``
    is finite and the scaled envelope does not grow: the constant fitted on
    the outer half of the radii is at most ``slack`` times the one fitted on
    the inner half.
    """
    if not alpha > 0:
        raise InvalidParameterError("decay exponent must be positive")
    r = np.asarray(radii, dtype=float)
    distinct = np.unique(r)
    if distinct.size < 3:
        raise InsufficientDataError("need samples at three or more distinct radii")
    if np.any(np.diff(r) < 0):
        raise InvalidParameterError("radii must be non-decreasing")
    half = np.median(distinct)
    head, tail = r <= half, r > half

    constants, heads, tails = {}, {}, {}
    passed = True
    for comp in sorted({k[0] for k in deviations}):
        if comp not in ALH_RATES:
            raise InvalidParameterError(f"unknown component class {comp!r}")
        rate = ALH_RATES[comp](alpha)
        for j in range(order + 1):
            if (comp, j) not in deviations:
                raise InsufficientDataError(f"missing derivative order {j} for component {comp!r}")
            dev = np.abs(np.asarray(deviations[(comp, j)], dtype=float))
            dev = dev.reshape(r.size, -1).max(axis=1)
            scaled = dev * np.exp(rate * r)
            c_all, c_head, c_tail = scaled.max(), scaled[head].max(), scaled[tail].max()
            constants[(comp, j)] = float(c_all)
            heads[(comp, j)] = float(c_head)
            tails[(comp, j)] = float(c_tail)
            if not np.isfinite(c_all) or c_tail > slack * c_head:
                passed = False
    return AlhDecayReport(passed, constants, heads, tails, float(alpha), int(order))


def _circle_diameter(spec, r0, fibre_diameters):
    if fibre_diameters is None:
        if any(f.dim != 1 for f in spec.fibres):
            raise InvalidParameterError("fibre diameters are required unless every fibre is a circle")
        fibre_diameters = [f.volume / 2 for f in spec.fibres]
    return math.sqrt(sum((p(r0) * d) ** 2 for p, d in zip(spec.warpings, fibre_diameters)))


def ball_ratio_bounds(spec: WarpedProductSpec, r0: float, R: float, fibre_diameters=None):
    """Two-sided bound on ``Vol(B_2R \\ B_R) / Vol(B_R)`` for balls centred on ``{r0} x N``.

    Uses ``{|r - r0| <= rho - A0} ⊂ B_rho ⊂ {|r - r0| <= rho}`` with ``A0``
    the diameter of the central slice. Returns ``(lower, upper, A0)``; the
    lower bound is ``nan`` when ``R <= A0``.
    """
    a0 = _circle_diameter(spec, r0, fibre_diameters)
    if R <= a0:
        raise InvalidParameterError(f"R = {R} must exceed the slice diameter {a0}")
    vol = lambda rho: annulus_volume(spec, r0 - rho, r0 + rho)
    upper = vol(2 * R) / vol(R - a0) - 1
    lower = vol(2 * R - a0) / vol(R) - 1 if 2 * R - a0 > R else float("nan")
    return lower, upper, a0


def fit_ball_ratio_growth(spec: WarpedProductSpec, r0: float, radii, fibre_diameters=None):
    """Fit ``upper(R) ~ C e^{gamma R}`` over ``radii``.

    Returns ``(gamma, C)`` where ``gamma`` is the least-squares slope of
    ``log upper`` and ``C = max_R upper(R) e^{-gamma R}``.
    """
    R = np.asarray(radii, dtype=float)
    ub = np.array([ball_ratio_bounds(spec, r0, x, fibre_diameters)[1] for x in R])
    gamma = np.polyfit(R, np.log(ub), 1)[0]
    return float(gamma), float(np.max(ub * np.exp(-gamma * R)))
