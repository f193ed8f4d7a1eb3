"""Explicit sub- and super-solutions of the radial Yamabe inequality.

The barriers live on an end ``r >= 0`` whose drift is ``(n-1) q(r)`` with
``q = f_k'/f_k(r + r0)``. All ALH error terms are absorbed into a single
constant ``C1`` (``C1 = 0`` gives the exact model). The sub-solution must
satisfy

    L_- u + n(n-1) u^{(n+2)/(n-2)} <= 0,
    L_- u = -c_n u'' - c_n((n-1) q - C1 e^{-a r}) u' - (n(n-1) - C1 e^{-a r}) u
            + C1 e^{-2 a r} |u''|,

and the super-solution the mirror inequality with every error term taking
its unfavourable sign. ``u^p - u`` is always evaluated through the deficit
``eps = 1 - u`` so that margins near ``u = 1`` keep their relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConstructionFailedError, InvalidParameterError, PreconditionError
from .geometry import conformal_constant, q_k
from .profiles import RadialProfile

__all__ = [
    "BarrierModel",
    "Piece",
    "PiecewiseProfile",
    "SubSolutionSpec",
    "SuperSolutionSpec",
    "subsolution_constant",
    "build_subsolution",
    "build_supersolution",
    "verify_differential_inequality",
    "verify_transmission",
]

NODES_PER_PIECE = 4096
TAIL_LENGTH = 40.0  # unbounded pieces are checked on [start, start + TAIL_LENGTH / alpha]


@dataclass(frozen=True)
class BarrierModel:
    """Coefficients of the radial inequality.

    ``alpha`` is the ALH decay exponent in the error terms, ``C1`` their
    common constant and ``C_S`` the constant in ``S_g >= -n(n-1) - C_S e^{-a r}``
    (used by the super-solution; defaults to ``C1``).
    """

    n: int
    alpha: float
    C1: float = 1.0
    C_S: Optional[float] = None
    k: int = 0
    r0: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise InvalidParameterError("dimension must be at least 3")
        if self.C1 < 0 or (self.C_S is not None and self.C_S < 0):
            raise InvalidParameterError("error constants must be non-negative")

    @property
    def p(self) -> float:
        return (self.n + 2) / (self.n - 2)

    @property
    def cs(self) -> float:
        return self.C1 if self.C_S is None else self.C_S

    def q(self, r):
        return np.asarray(q_k(self.k, np.asarray(r, dtype=float) + self.r0), dtype=float)


def _power_gap(eps, p):
    """``u^p - u`` for ``u = 1 - eps`` without cancellation."""
    eps = np.asarray(eps, dtype=float)
    with np.errstate(divide="ignore"):
        return np.expm1(p * np.log1p(-eps)) + eps


def _expression(model: BarrierModel, r, u, u1, u2, eps, sense):
    """``L u + n(n-1) u^p`` with the error terms signed for ``sense``."""
    n, a, C1 = model.n, model.alpha, model.C1
    cn = conformal_constant(n)
    e1 = np.exp(-a * r)
    nn = n * (n - 1.0)
    core = -cn * u2 - cn * (n - 1) * model.q(r) * u1 + nn * _power_gap(eps, model.p)
    if sense == "sub":
        return core + cn * C1 * e1 * u1 + C1 * e1 * u + C1 * e1 * e1 * np.abs(u2)
    return core - cn * C1 * e1 * u1 - model.cs * e1 * u - C1 * e1 * e1 * np.abs(u2)


@dataclass
class Piece:
    """One smooth piece on ``[lo, hi]`` (``hi`` may be ``inf``)."""

    lo: float
    hi: float
    f: Callable
    d1: Callable
    d2: Callable
    eps: Callable
    name: str = ""


@dataclass
class PiecewiseProfile:
    """Continuous, piecewise ``C^2`` radial profile with its barrier sense."""

    pieces: list
    sense: str = "sub"

    def __post_init__(self):
        if self.sense not in ("sub", "super"):
            raise InvalidParameterError("sense must be 'sub' or 'super'")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if a.hi != b.lo:
                raise InvalidParameterError("pieces must be contiguous")

    @property
    def breaks(self):
        return [p.hi for p in self.pieces[:-1]]

    def _which(self, r):
        edges = np.array([p.lo for p in self.pieces[1:]])
        return np.searchsorted(edges, r, side="right")

    def _eval(self, attr, r):
        r = np.asarray(r, dtype=float)
        idx = self._which(r)
        out = np.empty_like(r)
        for i, p in enumerate(self.pieces):
            sel = idx == i
            if np.any(sel):
                out[sel] = getattr(p, attr)(r[sel])
        return float(out) if out.ndim == 0 else out

    def __call__(self, r):
        return self._eval("f", r)

    def d1(self, r):
        return self._eval("d1", r)

    def d2(self, r):
        return self._eval("d2", r)

    def deficit(self, r):
        return self._eval("eps", r)

    @classmethod
    def from_profile(cls, prof: RadialProfile, lo: float, hi: float, sense: str = "sub"):
        piece = Piece(lo, hi, prof, prof.d1, prof.d2, lambda r: 1.0 - prof(r), prof.label)
        return cls([piece], sense)


def verify_differential_inequality(
    profile, model: BarrierModel, sense: Optional[str] = None, nodes: int = NODES_PER_PIECE, domain=None,
):
    """Worst signed margin of the barrier inequality on each piece.

    Margins are ``-(L_- u + n(n-1)u^p)`` for ``sub`` and ``L_+ u + n(n-1)u^p``
    for ``super``; non-negative means verified. Each piece is sampled at
    ``nodes`` uniform points with its end points (the break points) left
    out; an unbounded piece is cut at ``lo + 40/alpha``. A plain
    :class:`RadialProfile` is treated as a single piece on ``domain``.

    Returns ``(worst, per_piece)`` where ``per_piece`` lists
    ``{"name", "lo", "hi", "worst_margin", "worst_r"}``.
    """
    if isinstance(profile, RadialProfile):
        lo, hi = domain if domain is not None else (0.0, TAIL_LENGTH / model.alpha)
        profile = PiecewiseProfile.from_profile(profile, lo, hi, sense or "sub")
    sense = sense or profile.sense
    if sense not in ("sub", "super"):
        raise InvalidParameterError("sense must be 'sub' or 'super'")
    report = []
    worst = math.inf
    for p in profile.pieces:
        hi = p.hi if math.isfinite(p.hi) else p.lo + TAIL_LENGTH / model.alpha
        if not hi > p.lo:
            raise InvalidParameterError(f"empty piece {p.name!r}")
        r = np.linspace(p.lo, hi, nodes + 2)[1:-1]
        if not math.isfinite(p.hi):
            r = np.linspace(p.lo, hi, nodes + 1)[1:]
        val = _expression(model, r, p.f(r), p.d1(r), p.d2(r), p.eps(r), sense)
        margin = -val if sense == "sub" else val
        i = int(np.argmin(margin))
        report.append({
            "name": p.name, "lo": float(p.lo), "hi": float(hi),
            "worst_margin": float(margin[i]) + 0.0, "worst_r": float(r[i]),
        })
        worst = min(worst, float(margin[i]) + 0.0)
    return worst, report


def verify_transmission(profile: PiecewiseProfile):
    """One-sided derivatives at every break point.

    A sub-solution needs ``left <= right``, a super-solution ``left >= right``.
    """
    out = []
    for a, b in zip(profile.pieces, profile.pieces[1:]):
        x = a.hi
        left, right = float(a.d1(np.array([x]))[0]), float(b.d1(np.array([x]))[0])
        ok = left <= right if profile.sense == "sub" else left >= right
        jump = abs(float(a.f(np.array([x]))[0]) - float(b.f(np.array([x]))[0]))
        out.append({"at": float(x), "left": left, "right": right, "passed": bool(ok), "value_jump": jump})
    return out


# ---------------------------------------------------------------------------
# sub-solution


def subsolution_constant(theta: float, delta: float, alpha: float, beta: float):
    """``(C, C_display)`` for the outer piece ``1 - C e^{-alpha r}``.

    ``C_display = (theta/(1-delta))^{alpha/beta}`` is the closed form as it is
    usually written; ``C = (1 - delta) C_display`` is the value that makes the
    profile continuous at ``r_delta`` (where the middle piece equals
    ``delta``) and is the one used.
    """
    disp = (theta / (1 - delta)) ** (alpha / beta)
    return (1 - delta) * disp, disp


@dataclass
class SubSolutionSpec:
    n: int
    alpha: float
    beta: float
    theta: float
    delta: float
    C1: float
    k: int = 0
    r0: float = 1.0
    margins: list = field(default_factory=list)
    transmission: list = field(default_factory=list)
    worst_margin: float = float("nan")
    ladder_steps: int = 0

    @property
    def r_theta(self) -> float:
        return math.log(self.theta) / self.beta

    @property
    def r_delta(self) -> float:
        return math.log(self.theta / (1 - self.delta)) / self.beta

    @property
    def C(self) -> float:
        return subsolution_constant(self.theta, self.delta, self.alpha, self.beta)[0]

    @property
    def C_display(self) -> float:
        return subsolution_constant(self.theta, self.delta, self.alpha, self.beta)[1]

    @property
    def model(self) -> BarrierModel:
        return BarrierModel(self.n, self.alpha, self.C1, None, self.k, self.r0)

    def profile(self) -> PiecewiseProfile:
        th, b, a, C = self.theta, self.beta, self.alpha, self.C
        rt, rd = self.r_theta, self.r_delta
        zero = lambda r: np.zeros_like(r)
        e_mid = lambda r: th * np.exp(-b * r)
        e_out = lambda r: C * np.exp(-a * r)
        pieces = [
            Piece(0.0, rt, zero, zero, zero, lambda r: np.ones_like(r), "core"),
            Piece(rt, rd, lambda r: 1 - e_mid(r), lambda r: b * e_mid(r), lambda r: -b * b * e_mid(r), e_mid, "middle"),
            Piece(rd, math.inf, lambda r: 1 - e_out(r), lambda r: a * e_out(r), lambda r: -a * a * e_out(r), e_out, "outer"),
        ]
        if rt <= 0:
            pieces = pieces[1:]
            pieces[0].lo = 0.0
        return PiecewiseProfile(pieces, "sub")

    def to_dict(self) -> dict:
        return {
            "kind": "subsolution",
            "n": self.n, "alpha": self.alpha, "beta": self.beta,
            "theta": self.theta, "delta": self.delta, "C1": self.C1,
            "k": self.k, "r0": self.r0,
            "r_theta": self.r_theta, "r_delta": self.r_delta,
            "C": self.C, "C_display": self.C_display,
            "worst_margin": self.worst_margin,
            "margins": self.margins, "transmission": self.transmission,
            "ladder": {"theta": "2^i, i = 1..40", "delta": "1 - 2^-j, j = 1..40", "steps": self.ladder_steps},
            "nodes_per_piece": NODES_PER_PIECE,
        }


def _leading_coefficient(n, alpha):
    return alpha * alpha - (n - 1) * alpha - n


def build_subsolution(
    n: int, alpha: float, beta: float, C1: float = 1.0, k: int = 0, r0: float = 1.0,
    max_theta_exp: int = 40, max_delta_exp: int = 40,
) -> SubSolutionSpec:
    """Search ``theta = 2^i`` then ``delta = 1 - 2^-j`` for a verified sub-solution.

    The first pair (lexicographic in ``(i, j)``) with every grid margin
    ``>= 0`` and both transmission conditions satisfied is returned.
    """
    if not 0 < alpha < n:
        raise PreconditionError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    if not 0 < beta < min(n - 1, alpha):
        raise PreconditionError(f"need 0 < beta < min(n-1, alpha) = {min(n - 1, alpha)}, got {beta}")
    if not _leading_coefficient(n, alpha) < 0:
        raise PreconditionError("alpha^2 - (n-1) alpha - n must be negative")
    best = None
    steps = 0
    for i in range(1, max_theta_exp + 1):
        for j in range(1, max_delta_exp + 1):
            steps += 1
            spec = SubSolutionSpec(n, alpha, beta, 2.0 ** i, 1 - 2.0 ** -j, C1, k, r0)
            prof = spec.profile()
            worst, rep = verify_differential_inequality(prof, spec.model)
            trans = verify_transmission(prof)
            if best is None or worst > best[0]:
                best = (worst, spec.theta, spec.delta)
            if worst >= 0 and all(t["passed"] for t in trans):
                spec.margins, spec.transmission = rep, trans
                spec.worst_margin, spec.ladder_steps = worst, steps
                return spec
    raise ConstructionFailedError(
        "sub-solution ladder exhausted",
        {"best_worst_margin": best[0], "theta": best[1], "delta": best[2], "steps": steps},
    )


# ---------------------------------------------------------------------------
# super-solution


@dataclass
class SuperSolutionSpec:
    n: int
    alpha: float
    A: float
    R: float
    C: float
    C1: Optional[float] = None
    k: int = 0
    r0: float = 1.0
    margins: list = field(default_factory=list)
    transmission: list = field(default_factory=list)
    worst_margin: float = float("nan")
    bracket_max: float = float("nan")
    ladder_steps: int = 0

    @property
    def model(self) -> BarrierModel:
        C1 = self.C if self.C1 is None else self.C1
        return BarrierModel(self.n, self.alpha, C1, self.C, self.k, self.r0)

    def __call__(self, r):
        return self.profile()(r)

    def profile(self) -> PiecewiseProfile:
        A, a, R = self.A, self.alpha, self.R
        top = A * math.exp(-a * R)
        zero = lambda r: np.zeros_like(r)
        e_out = lambda r: A * np.exp(-a * r)
        pieces = [
            Piece(0.0, R, lambda r: np.full_like(r, 1 + top), zero, zero, lambda r: np.full_like(r, -top), "interior"),
            Piece(R, math.inf, lambda r: 1 + e_out(r), lambda r: -a * e_out(r), lambda r: a * a * e_out(r),
                  lambda r: -e_out(r), "exterior"),
        ]
        return PiecewiseProfile(pieces, "super")

    def bracket(self, r):
        """``a^2 - (n-1)a - n + C e^{-a r} + C e^{-2r} + C/A``; must be ``<= 0`` on ``r > R``."""
        r = np.asarray(r, dtype=float)
        return _leading_coefficient(self.n, self.alpha) + self.C * np.exp(-self.alpha * r) + self.C * np.exp(-2 * r) + self.C / self.A

    def to_dict(self) -> dict:
        return {
            "kind": "supersolution",
            "n": self.n, "alpha": self.alpha, "A": self.A, "R": self.R, "C": self.C,
            "C1": self.model.C1, "k": self.k, "r0": self.r0,
            "worst_margin": self.worst_margin, "bracket_max": self.bracket_max,
            "margins": self.margins, "transmission": self.transmission,
            "ladder": {"R": "1..40", "A": "2^j, j = 0..80", "steps": self.ladder_steps},
            "nodes_per_piece": NODES_PER_PIECE,
        }


def build_supersolution(
    n: int, alpha: float, C: float = 1.0, C1: Optional[float] = None, k: int = 0, r0: float = 1.0,
    max_R: int = 40, max_A_exp: int = 80,
) -> SuperSolutionSpec:
    """Search ``R = 1, 2, ...`` then ``A = 2^j`` for a verified super-solution.

    Accepts the first pair for which the bracket is ``<= 0`` on the exterior
    grid, the exterior and interior inequalities hold at every node and the
    transmission condition at ``R`` holds.
    """
    if not 0 < alpha < n:
        raise PreconditionError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    if C < 0:
        raise InvalidParameterError("C must be non-negative")
    steps = 0
    best = None
    for R in range(1, max_R + 1):
        for j in range(0, max_A_exp + 1):
            steps += 1
            spec = SuperSolutionSpec(n, alpha, 2.0 ** j, float(R), C, C1, k, r0)
            r = np.linspace(R, R + TAIL_LENGTH / alpha, NODES_PER_PIECE + 1)[1:]
            bmax = float(np.max(spec.bracket(r)))
            if bmax > 0:
                continue
            prof = spec.profile()
            worst, rep = verify_differential_inequality(prof, spec.model)
            trans = verify_transmission(prof)
            if best is None or worst > best[0]:
                best = (worst, spec.A, spec.R)
            if worst >= 0 and all(t["passed"] for t in trans):
                spec.margins, spec.transmission = rep, trans
                spec.worst_margin, spec.bracket_max, spec.ladder_steps = worst, bmax, steps
                return spec
    raise ConstructionFailedError(
        "super-solution ladder exhausted",
        {"best": best, "steps": steps},
    )
