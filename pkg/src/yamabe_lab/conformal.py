"""Conformal calculus on radial metrics.

Covers the conformal Laplacian and the scalar-curvature transformation law
for ``u^{4/(n-2)} g``, the integral ``I(f) = int_0^inf 1/f`` that decides
whether ``dz^2 + f(z)^2 h`` is conformal to a locally hyperbolic model, the
coordinate change to that model, the finite-volume normal form when ``I(f)``
diverges, and the asymptotic chart ``z = r + int_r^inf (1 - u^{2/(n-2)})``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import (
    CannotExtrapolateError,
    InvalidParameterError,
    NumericError,
    WrongClassError,
)
from .geometry import (
    WarpedProductSpec,
    conformal_constant,
    f_k,
    radial_drift,
    scalar_curvature,
    _check_k,
)
from .profiles import RadialProfile

__all__ = [
    "ConformalFactor",
    "KellerOsserman",
    "ClassificationResult",
    "ChartChange",
    "conformal_laplacian_apply",
    "conformal_scalar_curvature",
    "keller_osserman_integral",
    "hyperbolic_chart",
    "finite_volume_normal_form",
    "classify_warping",
    "asymptotic_chart_change",
]


@dataclass(frozen=True)
class ConformalFactor:
    """Positive radial ``u`` defining ``u^{4/(n-2)} g``."""

    u: RadialProfile
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise InvalidParameterError("dimension must be at least 3")
        lo, hi = self.u.domain
        a = lo if math.isfinite(lo) else min(hi, 0.0) - 10.0
        b = hi if math.isfinite(hi) else max(lo, 0.0) + 10.0
        if not np.all(self.u(np.linspace(a, b, 129)) > 0):
            raise InvalidParameterError("conformal factor must be positive")


def _as_profile(u):
    return u.u if isinstance(u, ConformalFactor) else u


def conformal_laplacian_apply(spec: WarpedProductSpec, u, r):
    """``-c_n (u'' + drift u') + S_g u`` for radial ``u``."""
    p = _as_profile(u)
    cn = conformal_constant(spec.n)
    r = np.asarray(r, dtype=float)
    out = -cn * (p.d2(r) + radial_drift(spec, r) * p.d1(r)) + scalar_curvature(spec, r) * p(r)
    return float(out) if np.ndim(out) == 0 else out


def conformal_scalar_curvature(spec: WarpedProductSpec, u, r):
    """Scalar curvature of ``u^{4/(n-2)} g`` at ``r``."""
    p = _as_profile(u)
    n = spec.n
    val = np.asarray(p(r))
    if np.any(val <= 0):
        raise InvalidParameterError("conformal factor must be positive at the evaluation points")
    out = val ** (-(n + 2) / (n - 2)) * conformal_laplacian_apply(spec, p, r)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# I(f) and classification


@dataclass(frozen=True)
class KellerOsserman:
    """Outcome of the ``I(f)`` test: ``finite`` with ``value``, or divergent."""

    finite: bool
    value: Optional[float]
    z_reached: float
    last_increment: float
    tail_slope: float
    tail: str

    def __repr__(self):
        return f"Finite({self.value!r})" if self.finite else "Divergent"


def _recip(f):
    def g(s):
        with np.errstate(over="ignore"):
            return 1.0 / f(s)
    return g


def keller_osserman_integral(
    f: RadialProfile,
    z_max: float = 1e6,
    tol: float = 1e-10,
    growth: float = 1e-6,
    decay_min: float = 1e-3,
) -> KellerOsserman:
    """Decide whether ``int_0^inf 1/f`` is finite.

    Partial integrals over ``[0, Z]`` are accumulated for ``Z = 1, 2, 4, ...``
    up to ``z_max``. The integral is declared finite as soon as an increment
    drops below ``tol`` while ``log(1/f)`` decays at least linearly (rate at
    least ``decay_min``); the exponential tail is then added in closed form.
    Otherwise at ``z_max`` the log-log slope of ``1/f`` on ``[Z/2, Z]``
    decides: slope ``>= -1`` with the last increment above ``growth`` is
    divergent, slope ``< -1`` is finite with a power-law tail correction.
    """
    lo, hi = f.domain
    if lo > 0 or math.isfinite(hi):
        raise InvalidParameterError("f must be defined on [0, inf)")
    probe = np.concatenate([np.linspace(0, 10, 101), np.geomspace(10, z_max, 60)])
    with np.errstate(over="ignore"):
        if not np.all(f(probe) > 0):
            raise InvalidParameterError("f must be positive on [0, inf)")
    g = _recip(f)
    total, z_prev, z = 0.0, 0.0, 1.0
    inc = math.inf
    while True:
        inc, _ = integrate.quad(g, z_prev, z, epsabs=1e-15, epsrel=1e-12, limit=400)
        total += inc
        zs = np.linspace(z / 2, z, 33)
        gz = g(zs)
        if np.all(gz > 0):
            rate = -np.polyfit(zs, np.log(gz), 1)[0]
        else:
            rate = math.inf
        if inc < tol and rate >= decay_min:
            tail = g(z) / rate if math.isfinite(rate) else 0.0
            return KellerOsserman(True, float(total + tail), z, inc, float(-rate), "exponential")
        if z >= z_max:
            break
        z_prev, z = z, min(2 * z, z_max)
    zs = np.geomspace(z / 2, z, 33)
    gz = g(zs)
    if not np.all(gz > 0):
        return KellerOsserman(True, float(total), z, inc, -math.inf, "vanishing")
    slope, icpt = np.polyfit(np.log(zs), np.log(gz), 1)
    if slope >= -1 and inc > growth:
        return KellerOsserman(False, None, z, inc, float(slope), "divergent")
    if slope >= -1:
        # stalled partials with a non-integrable profile: call it divergent
        return KellerOsserman(False, None, z, inc, float(slope), "divergent")
    tail = math.exp(icpt) * z ** (slope + 1) / (-(slope + 1))
    return KellerOsserman(True, float(total + tail), z, inc, float(slope), "power")


def _tail_integral(f, z):
    """``T(z) = int_z^inf 1/f`` evaluated pointwise."""
    g = _recip(f)
    z = np.asarray(z, dtype=float)
    out = [integrate.quad(g, zi, np.inf, epsabs=1e-15, epsrel=1e-12, limit=400)[0] for zi in z.ravel()]
    return np.reshape(out, z.shape)


def _partial_integral(f, z, z0=0.0):
    g = _recip(f)
    z = np.asarray(z, dtype=float)
    out = [integrate.quad(g, z0, zi, epsabs=1e-15, epsrel=1e-12, limit=400)[0] for zi in z.ravel()]
    return np.reshape(out, z.shape)


def _fk_d1(k, x):
    return {1: np.cosh, 0: np.exp, -1: np.sinh}[k](x)


@dataclass
class ClassificationResult:
    """Conformal class of ``dz^2 + f(z)^2 h`` and the coordinate change found."""

    kind: str
    I_value: Optional[float]
    k: Optional[int]
    r0: Optional[float]
    z0: Optional[float]
    K: Optional[RadialProfile]
    volume: Optional[float] = None
    ode_max_deviation: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def sample(self, z_grid):
        z = np.asarray(z_grid, dtype=float)
        return z, self.K(z), self.K.d1(z)

    def to_dict(self, z_grid=None) -> dict:
        out = {
            "kind": self.kind,
            "I_value": self.I_value,
            "k": self.k,
            "r0": self.r0,
            "z0": self.z0,
            "volume": self.volume,
            "ode_max_deviation": self.ode_max_deviation,
        }
        if z_grid is not None and self.K is not None:
            z, K, K1 = self.sample(z_grid)
            out["samples"] = {"z": z.tolist(), "K": K.tolist(), "K_prime": K1.tolist()}
        return out

    def to_csv(self, z_grid) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["z", "K", "K_prime"])
        for row in zip(*self.sample(z_grid)):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


HYPERBOLIC = "ConformallyLocallyHyperbolic"
FINITE_VOLUME = "ConformallyFiniteVolume"


def _chart_constants(k, I, f):
    """Return ``(r0, z0, J)`` with ``J = int_{z0}^inf 1/f``."""
    if k == 1:
        return 2 * math.atanh(math.exp(-I)), 0.0, I
    if k == 0:
        return -math.log(I), 0.0, I
    # k = -1 needs J < pi/2; move z0 right until the tail integral is pi/4
    if I < math.pi / 2:
        z0, J = 0.0, I
    else:
        hi = 1.0
        while float(_tail_integral(f, hi)) > math.pi / 4:
            hi *= 2
        from scipy.optimize import brentq

        z0 = brentq(lambda z: float(_tail_integral(f, z)) - math.pi / 4, 0.0, hi, xtol=1e-14)
        J = float(_tail_integral(f, z0))
    return 2 * math.atanh(math.tan(math.pi / 4 - J / 2)), z0, J


def _separable_K(k, r0, T):
    """Closed-form solution of ``f K' = f_k(K + r0)`` in terms of the tail ``T``."""
    if k == 1:
        return np.log((1 + np.exp(-T)) / -np.expm1(-T)) - r0
    if k == 0:
        return -r0 - np.log(T)
    return np.log(1.0 / np.tan(T / 2)) - r0


def hyperbolic_chart(f: RadialProfile, k: int, z_end: float = 5.0, ko: KellerOsserman | None = None) -> ClassificationResult:
    """Coordinate change ``r = K(z)`` identifying ``dz^2 + f^2 h`` with ``(K')^{-2}`` times the reference.

    ``K`` is computed in closed form from the tail ``int_z^inf 1/f`` and the
    ODE ``f K' = f_k(K + r0)``, ``K(z0) = 0`` is integrated independently on
    ``[z0, z_end]`` (RK45, rtol 1e-10); their largest discrepancy is stored
    in ``ode_max_deviation``.
    """
    _check_k(k)
    ko = ko or keller_osserman_integral(f)
    if not ko.finite:
        raise WrongClassError("I(f) diverges; the warped product is conformal to a finite-volume model")
    I = float(_tail_integral(f, 0.0))
    r0, z0, J = _chart_constants(k, I, f)
    if k == 1 and not r0 > 0:
        raise NumericError("chart constant r0 is not positive", {"I": I, "k": k})

    def K(z):
        return _separable_K(k, r0, _tail_integral(f, z))

    def K1(z):
        return f_k(k, K(z) + r0) / f(z)

    def K2(z):
        kz = K(z)
        k1 = f_k(k, kz + r0) / f(z)
        return (_fk_d1(k, kz + r0) * k1 * f(z) - f_k(k, kz + r0) * f.d1(z)) / f(z) ** 2

    prof = RadialProfile(K, K1, K2, (z0, math.inf), label=f"K (k={k})")

    z_eval = np.linspace(z0, z_end, 201)
    sol = integrate.solve_ivp(
        lambda z, y: f_k(k, y + r0) / f(z), (z0, z_end), [0.0],
        method="RK45", rtol=1e-10, atol=1e-13, t_eval=z_eval,
    )
    if not sol.success:
        raise NumericError("chart ODE integration failed", {"message": sol.message})
    dev = float(np.max(np.abs(sol.y[0] - prof(z_eval))))
    return ClassificationResult(
        HYPERBOLIC, ko.value, k, r0, z0, prof, ode_max_deviation=dev,
        diagnostics={"J": J, "ko": repr(ko), "ode_steps": int(sol.t.size)},
    )


def chart_identity_residual(result: ClassificationResult, f: RadialProfile, z, h: float = 1e-3):
    """``|f_k(K + r0)^2 (K')^{-2} - f^2|`` with ``K'`` from a five-point stencil of ``K``."""
    z = np.asarray(z, dtype=float)
    K = result.K
    k1 = (-K(z + 2 * h) + 8 * K(z + h) - 8 * K(z - h) + K(z - 2 * h)) / (12 * h)
    return np.abs(f_k(result.k, K(z) + result.r0) ** 2 / k1 ** 2 - f(z) ** 2)


def finite_volume_normal_form(f: RadialProfile, n: int = 3, fibre_volume: float = 1.0, ko: KellerOsserman | None = None):
    """``K(z) = log(1 + int_0^z 1/f)`` and the volume of ``dk^2 + e^{-2k} h`` on ``[0, inf)``.

    Returns ``(K, volume)``; the volume is ``Vol(N)/(n-1)``.
    """
    if n < 3:
        raise InvalidParameterError("dimension must be at least 3")
    ko = ko or keller_osserman_integral(f)
    if ko.finite:
        raise WrongClassError("I(f) is finite; the warped product is conformal to a locally hyperbolic model")

    def F(z):
        return _partial_integral(f, z)

    def K(z):
        return np.log1p(F(z))

    def K1(z):
        return 1.0 / (f(z) * (1 + F(z)))

    def K2(z):
        q = 1 + F(z)
        return -(f.d1(z) * q + 1.0) / (f(z) * q) ** 2

    prof = RadialProfile(K, K1, K2, (0.0, math.inf), label="finite-volume K")
    return prof, fibre_volume / (n - 1)


def classify_warping(f: RadialProfile, k: int = 1, n: int = 3, fibre_volume: float = 1.0) -> ClassificationResult:
    """Dispatch on ``I(f)``: hyperbolic chart for target ``k`` or the finite-volume normal form."""
    ko = keller_osserman_integral(f)
    if ko.finite:
        return hyperbolic_chart(f, k, ko=ko)
    K, vol = finite_volume_normal_form(f, n, fibre_volume, ko=ko)
    return ClassificationResult(FINITE_VOLUME, None, None, None, 0.0, K, volume=vol, diagnostics={"ko": repr(ko)})


# ---------------------------------------------------------------------------
# asymptotic chart


@dataclass
class ChartChange:
    z: np.ndarray
    rate: float
    C: float
    tail: float


def asymptotic_chart_change(u, r_grid, n: Optional[int] = None) -> ChartChange:
    """``z(r) = r + int_r^inf (1 - u^{2/(n-2)}) ds`` on ``r_grid``.

    The integral beyond the grid is closed with an exponential fitted to
    ``log|1 - u^{2/(n-2)}|`` on the last quarter of the grid. ``C`` is the
    smallest constant with ``|z - r| <= C e^{-rate r}`` on the grid.
    """
    if isinstance(u, ConformalFactor):
        n, u = u.n, u.u
    if n is None or n < 3:
        raise InvalidParameterError("dimension n >= 3 is required")
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size < 8 or np.any(np.diff(r) <= 0):
        raise InvalidParameterError("r_grid must be strictly increasing with at least 8 points")
    dev = 1.0 - np.asarray(u(r)) ** (2.0 / (n - 2))
    q = r.size - r.size // 4
    rt, dt = r[q:], np.abs(dev[q:])
    if np.all(dt == 0):
        rate, tail = math.inf, 0.0
    else:
        if np.any(dt == 0):
            raise CannotExtrapolateError("deviation vanishes on part of the tail; no exponential fit")
        slope, icpt = np.polyfit(rt, np.log(dt), 1)
        rate = -float(slope)
        if not rate > 0:
            raise CannotExtrapolateError(f"fitted tail rate {rate:.3g} is not positive")
        tail = float(dev[-1]) / rate
    # integral from r_i to the last node, fourth-order accurate on smooth data
    seg = integrate.cumulative_simpson(dev, x=r, initial=0.0)
    z = r + (seg[-1] - seg) + tail
    if math.isinf(rate):
        C = 0.0
    else:
        C = float(np.max(np.abs(z - r) * np.exp(rate * r)))
    return ChartChange(z, rate, C, tail)
