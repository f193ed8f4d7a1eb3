"""Radial Yamabe equation on annuli with blow-up boundary values.

The equation

    -c_n (u'' + d(r) u') + S(r) u + n(n-1) u^{(n+2)/(n-2)} = 0   on (-R, R)

with ``u -> inf`` at both ends is solved through ``v = u^{-2/(n-2)}``, which
turns it into

    2 v v'' - n v'^2 + 2 d v v' + S/(n-1) v^2 + n = 0,   v(-R) = v(R) = 0,

a quasilinear problem with ordinary Dirichlet data and ``|v'| = 1`` forced at
the ends. Nodes are clustered at ``+-R`` by ``r = R sin(pi t / 2)`` with
``t`` uniform; differences are taken in ``t``. Residuals are those of the
equation multiplied by ``1 - r^2/R^2``, which is its form in the ``t``
coordinate and keeps round-off bounded where the nodes cluster.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.linalg import solve_banded

from .errors import DomainError, InsufficientDataError, InvalidParameterError, NumericError
from .geometry import conformal_constant, q_k
from .profiles import RadialProfile, const_profile

__all__ = [
    "AnnulusBVP",
    "BlowupSolution",
    "DecayCheck",
    "solve_blowup",
    "transport",
    "uR_from_u1",
    "verify_scaling_property",
    "cached_family",
    "LimitScan",
    "uR_limit_scan",
    "boundary_rate_fit",
    "limit_profile_w",
    "limit_profile_w_d1",
    "limit_ode_residual",
    "limit_profile",
    "limit_profile_w_d2",
    "decay_threshold",
    "check_decay_condition",
]


@dataclass(frozen=True)
class AnnulusBVP:
    """Blow-up problem on ``(-R, R)``.

    ``drift`` and ``S`` default to the flat-torus model ``n - 1`` and
    ``-n(n-1)``. :meth:`reference` builds the ``(n-1) q_k(r + r0)`` variant.
    """

    R: float
    n: int
    drift: Optional[RadialProfile] = None
    S: Optional[RadialProfile] = None

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidParameterError("half-width R must be positive")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidParameterError("dimension n must be an integer >= 3")

    @classmethod
    def reference(cls, R: float, n: int, k: int, r0: float) -> "AnnulusBVP":
        """Drift ``(n-1) q_k(r + r0)`` of a reference end, annulus centred at 0."""
        if k == 1 and r0 - R <= 0:
            raise InvalidParameterError("annulus must stay in r + r0 > 0 for k = 1")
        m = float(n - 1)
        drift = RadialProfile(
            lambda r: m * q_k(k, r + r0),
            lambda r: m * _q_d1(k, r + r0),
            lambda r: m * _q_d2(k, r + r0),
            (-R, R), label=f"(n-1) q_{k}",
        )
        return cls(R, n, drift)

    @property
    def model(self) -> bool:
        return self.drift is None and self.S is None

    def drift_at(self, r):
        r = np.asarray(r, dtype=float)
        return np.full_like(r, self.n - 1.0) if self.drift is None else np.asarray(self.drift(r))

    def S_at(self, r):
        r = np.asarray(r, dtype=float)
        return np.full_like(r, -self.n * (self.n - 1.0)) if self.S is None else np.asarray(self.S(r))


def _q_d1(k, x):
    if k == 1:
        return -1.0 / np.sinh(x) ** 2
    if k == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return 1.0 / np.cosh(x) ** 2


def _q_d2(k, x):
    if k == 1:
        return 2 * np.cosh(x) / np.sinh(x) ** 3
    if k == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return -2 * np.sinh(x) / np.cosh(x) ** 3


# ---------------------------------------------------------------------------
# discretisation


def _t_of_r(r, R):
    """Inverse of ``r = R sin(pi t / 2)``, accurate near ``+-R``."""
    r = np.asarray(r, dtype=float)
    y = np.clip((R - np.abs(r)) / R, 0.0, 1.0)
    return np.sign(r) * (1.0 - (4.0 / math.pi) * np.arcsin(np.sqrt(y / 2)))


class _Discretisation:
    def __init__(self, bvp: AnnulusBVP, N: int):
        self.N = N
        self.h = 2.0 / N
        t = np.linspace(-1.0, 1.0, N + 1)
        self.t = t
        R = bvp.R
        self.r = R * np.sin(math.pi * t / 2)
        self.r[0], self.r[-1] = -R, R
        ti = t[1:-1]
        self.J = R * (math.pi / 2) * np.cos(math.pi * ti / 2)
        self.Jt = -R * (math.pi / 2) ** 2 * np.sin(math.pi * ti / 2)
        self.d = bvp.drift_at(self.r[1:-1])
        self.s = bvp.S_at(self.r[1:-1]) / (bvp.n - 1)
        self.n = bvp.n
        # the equation in the t coordinate: rows weighted by cos^2(pi t/2) = 1 - r^2/R^2
        self.w = np.cos(math.pi * ti / 2) ** 2

    def derivs(self, vfull):
        h = self.h
        vm, v0, vp = vfull[:-2], vfull[1:-1], vfull[2:]
        vt = (vp - vm) / (2 * h)
        vtt = (vp - 2 * v0 + vm) / h ** 2
        v1 = vt / self.J
        v2 = (vtt - self.Jt / self.J * vt) / self.J ** 2
        return v0, v1, v2

    def residual(self, vfull):
        v, v1, v2 = self.derivs(vfull)
        n = self.n
        return self.w * (2 * v * v2 - n * v1 ** 2 + 2 * self.d * v * v1 + self.s * v * v + n)

    def jacobian(self, vfull):
        """Banded (1, 1) Jacobian of the interior residual."""
        h, n, J, Jt, d = self.h, self.n, self.J, self.Jt, self.d
        v, v1, v2 = self.derivs(vfull)
        dv2_side = lambda sgn: (1 / h ** 2 - sgn * (Jt / J) / (2 * h)) / J ** 2
        dv1_side = lambda sgn: sgn / (2 * h * J)
        diag = 2 * v2 + 2 * v * (-2 / h ** 2) / J ** 2 + 2 * d * v1 + 2 * self.s * v
        up = 2 * v * dv2_side(1) - 2 * n * v1 * dv1_side(1) + 2 * d * v * dv1_side(1)
        lo = 2 * v * dv2_side(-1) - 2 * n * v1 * dv1_side(-1) + 2 * d * v * dv1_side(-1)
        diag, up, lo = self.w * diag, self.w * up, self.w * lo
        ab = np.zeros((3, v.size))
        ab[0, 1:] = up[:-1]
        ab[1] = diag
        ab[2, :-1] = lo[1:]
        return ab


def _roundoff_floor(disc):
    # second differences lose about eps/h^2; nothing below this is meaningful
    return 64 * np.finfo(float).eps / disc.h ** 2


def _newton(disc: _Discretisation, v0, tol, max_steps=200, max_halvings=20):
    v = v0.copy()
    F = disc.residual(v)
    norm = np.max(np.abs(F))
    history = [float(norm)]
    floor = max(tol, _roundoff_floor(disc))
    for step in range(max_steps):
        if norm <= tol:
            return v, float(norm), step, history
        delta = solve_banded((1, 1), disc.jacobian(v), -F)
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = v.copy()
            trial[1:-1] += lam * delta
            if np.all(trial[1:-1] > 0):
                Ft = disc.residual(trial)
                nt = np.max(np.abs(Ft))
                if nt < norm or nt <= tol:
                    break
            lam /= 2
        else:
            if norm <= floor:
                return v, float(norm), step, history
            raise NumericError(
                "damped Newton could not reduce the residual",
                {"step": step, "residual": float(norm), "history": history},
            )
        v, F, norm = trial, Ft, nt
        history.append(float(norm))
    if norm <= tol:
        return v, float(norm), max_steps, history
    raise NumericError(
        f"Newton did not converge in {max_steps} steps",
        {"residual": float(norm), "history": history[-10:]},
    )


def _initial_v(r, R):
    # (R^2 - r^2)/(2R) has the right boundary slope; tanh caps it near the interior value 1
    return np.tanh((R * R - r * r) / (2 * R))


# ---------------------------------------------------------------------------
# solution object


@dataclass
class BlowupSolution:
    """Richardson-combined solution of an :class:`AnnulusBVP`."""

    bvp: AnnulusBVP
    grid: np.ndarray
    v: np.ndarray
    residual: float
    node_residual: np.ndarray
    grid_size: int
    iterations: tuple
    boundary_coeff: float = float("nan")
    fine_residual: float = float("nan")
    _spline: object = field(default=None, repr=False)

    def __post_init__(self):
        t = _t_of_r(self.grid, self.R)
        t[0], t[-1] = -1.0, 1.0
        self._spline = make_interp_spline(t, self.v, k=5)
        self.boundary_coeff = _fit_boundary_coeff(self)

    @property
    def R(self) -> float:
        return self.bvp.R

    @property
    def n(self) -> int:
        return self.bvp.n

    @property
    def m(self) -> float:
        return (self.n - 2) / 2

    @property
    def u(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.v ** (-self.m)

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(np.abs(r) > self.R * (1 + 1e-14)):
            raise DomainError(f"r outside [-{self.R}, {self.R}]")
        return r

    def v_at(self, r):
        r = self._check(r)
        out = self._spline(_t_of_r(r, self.R))
        return float(out) if out.ndim == 0 else out

    def v_derivs(self, r):
        r = self._check(r)
        R = self.R
        t = _t_of_r(r, R)
        J = R * (math.pi / 2) * np.cos(math.pi * t / 2)
        Jt = -R * (math.pi / 2) ** 2 * np.sin(math.pi * t / 2)
        v = self._spline(t)
        vt = self._spline(t, 1)
        vtt = self._spline(t, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            v1 = vt / J
            v2 = (vtt - Jt / J * vt) / J ** 2
        return v, v1, v2

    def u_at(self, r):
        with np.errstate(divide="ignore"):
            out = np.asarray(self.v_at(r)) ** (-self.m)
        return float(out) if out.ndim == 0 else out

    __call__ = u_at

    def profile(self) -> RadialProfile:
        """``u`` with two derivatives, for use in the conformal operators."""
        m = self.m

        def d1(r):
            v, v1, _ = self.v_derivs(r)
            return -m * v ** (-m - 1) * v1

        def d2(r):
            v, v1, v2 = self.v_derivs(r)
            return -m * v ** (-m - 1) * v2 + m * (m + 1) * v ** (-m - 2) * v1 ** 2

        return RadialProfile(self.u_at, d1, d2, (-self.R, self.R), label=f"u_R (R={self.R:g})")

    def summary(self) -> dict:
        return {
            "R": float(self.R),
            "n": int(self.n),
            "grid_size": int(self.grid_size),
            "u0": float(self.u_at(0.0)),
            "boundary_coeff": float(self.boundary_coeff),
            "fitted_exponent": float(boundary_rate_fit(self)),
            "residual": float(self.residual),
            "fine_residual": float(self.fine_residual),
            "newton_steps": list(self.iterations),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["r", "u", "v", "residual"])
        for r, u, v, res in zip(self.grid, self.u, self.v, self.node_residual):
            w.writerow([repr(float(r)), repr(float(u)), repr(float(v)), repr(float(res))])
        return buf.getvalue()


def solve_blowup(bvp: AnnulusBVP, grid_size: int = 1024, tol: float = 1e-10, richardson: bool = True) -> BlowupSolution:
    """Solve the blow-up problem on ``grid_size`` intervals.

    With ``richardson`` the problem is also solved on the doubled grid and the
    two second-order solutions are combined as ``(4 v_2N - v_N) / 3`` on the
    coarse nodes. ``residual`` is the max-norm discrete residual on the
    returned grid and ``fine_residual`` that of the doubled grid. Newton
    stops at ``tol``; on grids fine enough that round-off in the second
    differences exceeds ``tol`` it stops once no damped step reduces the
    residual, provided the residual is within that round-off floor.
    """
    if int(grid_size) != grid_size or grid_size < 64:
        raise InvalidParameterError("grid_size must be an integer >= 64")
    grid_size = int(grid_size)
    sizes = [grid_size, 2 * grid_size] if richardson else [grid_size]
    sols, steps, norms = [], [], []
    for N in sizes:
        disc = _Discretisation(bvp, N)
        v0 = _initial_v(disc.r, bvp.R)
        v0[0] = v0[-1] = 0.0
        v, norm, k, _ = _newton(disc, v0, tol)
        sols.append((disc, v))
        steps.append(k)
        norms.append(norm)
    disc, v = sols[0]
    node_res = np.zeros_like(v)
    node_res[1:-1] = np.abs(disc.residual(v))
    if richardson:
        v = (4 * sols[1][1][::2] - v) / 3
    # the doubled grid only feeds the extrapolation; its residual may sit at the round-off floor
    fine = norms[1] if richardson else float("nan")
    return BlowupSolution(bvp, disc.r.copy(), v, norms[0], node_res, grid_size, tuple(steps), fine_residual=fine)


# ---------------------------------------------------------------------------
# the u_R family


def _transport_map(S, R, r):
    """Prefactor and argument carrying ``u_S`` to ``u_R`` on the torus model."""
    r = np.asarray(r, dtype=float)
    D = np.exp(2 * S + R) + np.exp(2 * R + r) - np.exp(2 * S + r) - np.exp(R)
    P = np.expm1(2 * S) * np.exp(R) / D
    rho = np.log(np.expm1(2 * R) * np.exp(r + S) / D)
    return P, rho


def transport(uS: BlowupSolution, R: float, r):
    """``u_R(r)`` obtained from the solution ``u_S`` with ``S = uS.R``."""
    if not uS.bvp.model:
        raise InvalidParameterError("the transport identity holds only for the constant-drift model")
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) >= R):
        raise DomainError(f"r must lie in (-{R}, {R})")
    P, rho = _transport_map(uS.R, R, r)
    if np.any(np.abs(rho) >= uS.R):
        raise DomainError("transported argument leaves the source annulus")
    out = P ** uS.m * uS.u_at(rho)
    return float(out) if np.ndim(out) == 0 else out


def uR_from_u1(u1: BlowupSolution, R: float, r):
    """``u_R(r)`` from the unit-annulus solution."""
    if abs(u1.R - 1.0) > 1e-14:
        raise InvalidParameterError("source solution must have R = 1")
    return transport(u1, R, r)


def verify_scaling_property(family: Callable[[float], BlowupSolution], R: float, S: float, r) -> float:
    """``|u_R(r) - P^m u_S(rho)|`` with ``u_R`` and ``u_S`` from independent solves."""
    uR = family(R)
    uS = family(S)
    lhs = np.asarray(uR.u_at(r))
    rhs = np.asarray(transport(uS, R, r))
    return float(np.max(np.abs(lhs - rhs)))


def cached_family(n: int, grid_size: int = 1024) -> Callable[[float], BlowupSolution]:
    """Memoised ``R -> solve_blowup(AnnulusBVP(R, n))``."""
    cache = {}

    def get(R):
        key = float(R)
        if key not in cache:
            cache[key] = solve_blowup(AnnulusBVP(key, n), grid_size)
        return cache[key]

    return get


@dataclass
class LimitScan:
    R: list
    u0: list
    decreasing: bool
    gap: float
    lower_bounds: list

    def to_dict(self):
        return {
            "R": self.R, "u0": self.u0, "decreasing": self.decreasing,
            "gap": self.gap, "lower_bounds": self.lower_bounds,
        }


def uR_limit_scan(R_list, n: int = 3, grid_size: int = 1024, family=None) -> LimitScan:
    """``u_R(0)`` along an increasing list of half-widths.

    ``lower_bounds`` holds ``A (e^2 - 1)^{-(n-2)/2}`` with ``A`` the fitted
    boundary coefficient of ``u_R``.
    """
    R_list = [float(x) for x in R_list]
    if not R_list or any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise InvalidParameterError("R_list must be non-empty and strictly increasing")
    family = family or cached_family(n, grid_size)
    sols = [family(R) for R in R_list]
    u0 = [float(s.u_at(0.0)) for s in sols]
    dec = all(b < a for a, b in zip(u0, u0[1:]))
    m = (n - 2) / 2
    lb = [float(s.boundary_coeff * (math.e ** 2 - 1) ** (-m)) for s in sols]
    return LimitScan(R_list, u0, dec, u0[-1] - 1.0, lb)


def _boundary_layer(sol: BlowupSolution, fraction: float, min_nodes: int):
    r = sol.grid
    x = sol.R - np.abs(r)
    sel = (x > 0) & (x <= fraction * sol.R)
    right = sel & (r > 0)
    left = sel & (r < 0)
    if right.sum() < min_nodes or left.sum() < min_nodes:
        raise InsufficientDataError(
            f"boundary layer has {int(min(right.sum(), left.sum()))} nodes, need {min_nodes}"
        )
    return x[sel], sol.v[sel]


def boundary_rate_fit(sol: BlowupSolution, fraction: float = 0.01, min_nodes: int = 10) -> float:
    """Least-squares slope of ``log u`` against ``log(R - |r|)`` in the boundary layer."""
    x, v = _boundary_layer(sol, fraction, min_nodes)
    log_u = -sol.m * np.log(v)
    return float(np.polyfit(np.log(x), log_u, 1)[0])


def _fit_boundary_coeff(sol: BlowupSolution, fraction: float = 0.01) -> float:
    # log u + m log x = log A + c x to first order; the intercept gives A
    try:
        x, v = _boundary_layer(sol, fraction, 4)
    except InsufficientDataError:
        return float("nan")
    y = -sol.m * np.log(v) + sol.m * np.log(x)
    return float(math.exp(np.polyfit(x, y, 1)[1]))


# ---------------------------------------------------------------------------
# limit equation and decay condition


def limit_profile_w(r, n: int = 3):
    """``(n/2) e^{-(n-2)r/2} - ((n-2)/2) e^{-nr/2}``."""
    r = np.asarray(r, dtype=float)
    out = n / 2 * np.exp(-(n - 2) * r / 2) - (n - 2) / 2 * np.exp(-n * r / 2)
    return float(out) if out.ndim == 0 else out


def limit_profile_w_d1(r, n: int = 3):
    r = np.asarray(r, dtype=float)
    out = -n * (n - 2) / 4 * (np.exp(-(n - 2) * r / 2) - np.exp(-n * r / 2))
    return float(out) if out.ndim == 0 else out


def limit_profile_w_d2(r, n: int = 3):
    r = np.asarray(r, dtype=float)
    out = n * (n - 2) / 8 * ((n - 2) * np.exp(-(n - 2) * r / 2) - n * np.exp(-n * r / 2))
    return float(out) if out.ndim == 0 else out


def limit_profile(n: int = 3, domain=(0.0, None)) -> RadialProfile:
    return RadialProfile(
        lambda r: limit_profile_w(r, n), lambda r: limit_profile_w_d1(r, n), lambda r: limit_profile_w_d2(r, n),
        (domain[0], math.inf if domain[1] is None else domain[1]), label="w",
    )


def limit_ode_residual(r, n: int = 3):
    """``-c_n (w'' + (n-1) w') - n(n-1) w`` at ``r``."""
    cn = conformal_constant(n)
    out = -cn * (limit_profile_w_d2(r, n) + (n - 1) * limit_profile_w_d1(r, n)) - n * (n - 1) * limit_profile_w(r, n)
    return out


def decay_threshold(S: float, n: int) -> float:
    return n / 2 * math.exp(-(n - 2) * S / 2) - (n - 2) / 2 * math.exp(-n * S / 2)


@dataclass
class DecayCheck:
    passed: bool
    worst_margin: float
    worst_r: float
    threshold: float

    def to_dict(self):
        return {"passed": self.passed, "worst_margin": self.worst_margin, "worst_r": self.worst_r, "threshold": self.threshold}


def check_decay_condition(u_min, S: float, r1: float, r_max: float, n: int = 3, num: int = 2001) -> DecayCheck:
    """Check ``u(r + S) / u(r)`` exceeds the limit-profile ratio on ``(r1, r_max]``.

    ``u_min`` is a :class:`RadialProfile` or a vectorised callable. The worst
    signed margin ``LHS - RHS`` over the grid is reported.
    """
    if not S > 0:
        raise InvalidParameterError("S must be positive")
    if not r1 < r_max:
        raise InvalidParameterError("need r1 < r_max")
    r = np.linspace(r1, r_max, num + 1)[1:]
    a = np.asarray(u_min(r), dtype=float)
    b = np.asarray(u_min(r + S), dtype=float)
    a = np.broadcast_to(a, r.shape)
    b = np.broadcast_to(b, r.shape)
    if np.any(a <= 0) or np.any(b <= 0):
        raise InvalidParameterError("u_min must be positive on the check grid")
    thr = decay_threshold(S, n)
    margin = b / a - thr
    i = int(np.argmin(margin))
    return DecayCheck(bool(np.all(margin > 0)), float(margin[i]), float(r[i]), thr)
