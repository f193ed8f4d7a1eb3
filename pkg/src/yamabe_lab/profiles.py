"""Scalar functions of the radial coordinate with two derivatives.

A :class:`RadialProfile` is what every other module consumes: warping
functions, conformal factors, drift and curvature coefficients. Profiles are
either closed form (``exp``, ``sinh``, ``cosh``, ``const``, ``expr``) or
backed by a cubic spline through grid samples. Closed-form profiles round-trip
through :meth:`RadialProfile.to_dict` / :func:`profile_from_dict`.
"""

from __future__ import annotations

import ast
import math

import numpy as np
import sympy as sp
from scipy.interpolate import CubicSpline

from .errors import DomainError, InvalidParameterError

__all__ = [
    "RadialProfile",
    "exp_profile",
    "sinh_profile",
    "cosh_profile",
    "const_profile",
    "expr_profile",
    "grid_profile",
    "profile_from_dict",
]

_R = sp.Symbol("r", real=True)

# the whole expression grammar: names and unary functions it may reference
_FUNCS = {
    "exp": sp.exp,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "sin": sp.sin,
    "cos": sp.cos,
    "log": sp.log,
    "sqrt": sp.sqrt,
}
_CONSTS = {"pi": sp.pi, "e": sp.E}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


class RadialProfile:
    """A function of ``r`` with first and second derivatives.

    Parameters
    ----------
    f, d1, d2 : callable
        Vectorised callables for the value and the two derivatives.
    domain : (float, float)
        Closed interval on which the profile may be evaluated. Infinite
        endpoints are allowed.
    spec : dict, optional
        Serialisable description; ``None`` for profiles built from arbitrary
        callables.
    """

    def __init__(self, f, d1, d2, domain=(-math.inf, math.inf), spec=None, label=None):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise InvalidParameterError(f"empty profile domain [{lo}, {hi}]")
        self._f, self._d1, self._d2 = f, d1, d2
        self.domain = (lo, hi)
        self.spec = spec
        self.label = label or (spec or {}).get("kind", "callable")

    def __repr__(self):
        return f"RadialProfile({self.label!r}, domain={self.domain})"

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.domain
        # tolerate round-off at finite endpoints
        slack = 1e-12 * max(1.0, abs(lo) if math.isfinite(lo) else 0.0, abs(hi) if math.isfinite(hi) else 0.0)
        if np.any(r < lo - slack) or np.any(r > hi + slack) or np.any(np.isnan(r)):
            raise DomainError(f"r outside profile domain [{lo}, {hi}] for {self.label}")
        return r

    def _out(self, value, r):
        value = np.broadcast_to(np.asarray(value, dtype=float), np.shape(r))
        return float(value) if value.ndim == 0 else np.array(value)

    def __call__(self, r):
        r = self._check(r)
        return self._out(self._f(r), r)

    eval = __call__

    def d1(self, r):
        r = self._check(r)
        return self._out(self._d1(r), r)

    def d2(self, r):
        r = self._check(r)
        return self._out(self._d2(r), r)

    def contains(self, r) -> bool:
        lo, hi = self.domain
        r = np.asarray(r, dtype=float)
        return bool(np.all((r >= lo) & (r <= hi)))

    def restrict(self, lo, hi) -> "RadialProfile":
        lo = max(lo, self.domain[0])
        hi = min(hi, self.domain[1])
        spec = None if self.spec is None else {**self.spec, "domain": [lo, hi]}
        return RadialProfile(self._f, self._d1, self._d2, (lo, hi), spec, self.label)

    def shifted(self, shift) -> "RadialProfile":
        """The profile ``r -> self(r + shift)``."""
        s = float(shift)
        lo, hi = self.domain
        return RadialProfile(
            lambda r: self._f(r + s),
            lambda r: self._d1(r + s),
            lambda r: self._d2(r + s),
            (lo - s, hi - s),
            label=f"{self.label}(r+{s:g})",
        )

    def power(self, q) -> "RadialProfile":
        """``self ** q`` with chain-rule derivatives (profile must be positive)."""
        q = float(q)
        f, d1, d2 = self._f, self._d1, self._d2

        def g1(r):
            v = f(r)
            return q * v ** (q - 1) * d1(r)

        def g2(r):
            v = f(r)
            return q * (q - 1) * v ** (q - 2) * d1(r) ** 2 + q * v ** (q - 1) * d2(r)

        return RadialProfile(lambda r: f(r) ** q, g1, g2, self.domain, label=f"({self.label})**{q:g}")

    def __mul__(self, other):
        if not isinstance(other, RadialProfile):
            c = float(other)
            return RadialProfile(
                lambda r: c * self._f(r), lambda r: c * self._d1(r), lambda r: c * self._d2(r),
                self.domain, label=f"{c:g}*{self.label}",
            )
        a, b = self, other
        dom = (max(a.domain[0], b.domain[0]), min(a.domain[1], b.domain[1]))
        return RadialProfile(
            lambda r: a._f(r) * b._f(r),
            lambda r: a._d1(r) * b._f(r) + a._f(r) * b._d1(r),
            lambda r: a._d2(r) * b._f(r) + 2 * a._d1(r) * b._d1(r) + a._f(r) * b._d2(r),
            dom,
            label=f"{a.label}*{b.label}",
        )

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        if self.spec is None:
            raise InvalidParameterError(f"profile {self.label!r} has no serialisable description")
        out = dict(self.spec)
        lo, hi = self.domain
        if math.isfinite(lo) or math.isfinite(hi):
            out["domain"] = [lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None]
        return out


def _domain(domain):
    if domain is None:
        return (-math.inf, math.inf)
    lo, hi = domain
    return (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))


def exp_profile(alpha=1.0, shift=0.0, scale=1.0, domain=None) -> RadialProfile:
    """``scale * exp(alpha * (r + shift))``."""
    a, s, c = float(alpha), float(shift), float(scale)
    if c <= 0:
        raise InvalidParameterError("exp profile scale must be positive")
    f = lambda r: c * np.exp(a * (r + s))
    return RadialProfile(
        f, lambda r: a * f(r), lambda r: a * a * f(r), _domain(domain),
        {"kind": "exp", "alpha": a, "shift": s, "scale": c},
    )


def sinh_profile(shift=0.0, scale=1.0, domain=None) -> RadialProfile:
    """``scale * sinh(r + shift)``; the default domain keeps it positive."""
    s, c = float(shift), float(scale)
    if domain is None:
        domain = (-s, None)
    lo, hi = _domain(domain)
    if lo + s < 0:
        raise InvalidParameterError("sinh profile would be negative on its domain")
    return RadialProfile(
        lambda r: c * np.sinh(r + s), lambda r: c * np.cosh(r + s), lambda r: c * np.sinh(r + s),
        (lo, hi), {"kind": "sinh", "shift": s, "scale": c},
    )


def cosh_profile(shift=0.0, scale=1.0, domain=None) -> RadialProfile:
    s, c = float(shift), float(scale)
    return RadialProfile(
        lambda r: c * np.cosh(r + s), lambda r: c * np.sinh(r + s), lambda r: c * np.cosh(r + s),
        _domain(domain), {"kind": "cosh", "shift": s, "scale": c},
    )


def const_profile(value=1.0, domain=None) -> RadialProfile:
    v = float(value)
    zero = lambda r: np.zeros_like(r)
    return RadialProfile(
        lambda r: np.full_like(r, v), zero, zero, _domain(domain), {"kind": "const", "value": v},
    )


def _validate_expression(tree):
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)):
            continue
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINOPS):
                raise InvalidParameterError(f"operator {type(node.op).__name__} not allowed")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise InvalidParameterError(f"operator {type(node.op).__name__} not allowed")
        elif isinstance(node, _BINOPS + (ast.UAdd, ast.USub)):
            continue
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise InvalidParameterError(f"constant {node.value!r} not allowed")
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise InvalidParameterError("only exp, sinh, cosh, tanh, sin, cos, log, sqrt may be called")
            if len(node.args) != 1 or node.keywords:
                raise InvalidParameterError(f"{node.func.id} takes exactly one argument")
        elif isinstance(node, ast.Name):
            if node.id != "r" and node.id not in _FUNCS and node.id not in _CONSTS:
                raise InvalidParameterError(f"unknown name {node.id!r} in expression")
        else:
            raise InvalidParameterError(f"syntax {type(node).__name__} not allowed in expression")


def parse_expression(text: str) -> sp.Expr:
    """Parse the small arithmetic grammar over ``r`` into a sympy expression."""
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise InvalidParameterError(f"cannot parse expression {text!r}: {exc.msg}") from None
    _validate_expression(tree)
    return sp.sympify(src, locals={"r": _R, **_FUNCS, **_CONSTS})


def _lambdify(expr):
    fn = sp.lambdify(_R, expr, modules="numpy")
    if expr.free_symbols:
        return fn
    c = float(expr)
    return lambda r: np.full_like(np.asarray(r, dtype=float), c)


def expr_profile(text: str, domain=None) -> RadialProfile:
    """Profile from an expression such as ``"1 + exp(-2*r)*sin(exp(r))"``."""
    e0 = parse_expression(text)
    e1 = sp.diff(e0, _R)
    e2 = sp.diff(e1, _R)
    return RadialProfile(
        _lambdify(e0), _lambdify(e1), _lambdify(e2), _domain(domain),
        {"kind": "expr", "expr": text}, label=text,
    )


def grid_profile(r, values, bc_type="not-a-knot") -> RadialProfile:
    """Cubic-spline profile through ``(r, values)``; ``r`` strictly increasing."""
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != values.shape or r.size < 4:
        raise InvalidParameterError("grid profile needs matching 1-D arrays with at least 4 samples")
    if np.any(np.diff(r) <= 0):
        raise InvalidParameterError("grid must be strictly increasing")
    cs = CubicSpline(r, values, bc_type=bc_type)
    d1, d2 = cs.derivative(1), cs.derivative(2)
    return RadialProfile(
        cs, d1, d2, (r[0], r[-1]),
        {"kind": "grid", "r": r.tolist(), "values": values.tolist()}, label="grid",
    )


_KIND_ALIASES = {"exp(alpha*r)": "exp", "closed_form": None}


def profile_from_dict(doc: dict) -> RadialProfile:
    """Inverse of :meth:`RadialProfile.to_dict`."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidParameterError("warping entry needs a 'kind'")
    kind = _KIND_ALIASES.get(doc["kind"], doc["kind"])
    if kind is None:
        kind = doc.get("form")
    domain = doc.get("domain")
    if kind == "exp":
        return exp_profile(doc.get("alpha", 1.0), doc.get("shift", 0.0), doc.get("scale", 1.0), domain)
    if kind == "sinh":
        return sinh_profile(doc.get("shift", 0.0), doc.get("scale", 1.0), domain)
    if kind == "cosh":
        return cosh_profile(doc.get("shift", 0.0), doc.get("scale", 1.0), domain)
    if kind == "const":
        return const_profile(doc.get("value", 1.0), domain)
    if kind == "expr":
        if "expr" not in doc:
            raise InvalidParameterError("expr warping needs an 'expr' string")
        return expr_profile(doc["expr"], domain)
    if kind == "grid":
        return grid_profile(doc["r"], doc["values"])
    raise InvalidParameterError(f"unknown warping kind {doc['kind']!r}")
