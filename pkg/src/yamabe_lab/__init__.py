"""Numerical toolkit for the negative Yamabe problem on asymptotically locally hyperbolic ends."""

from . import barriers, conformal, eigen, geometry, profiles, yamabe_radial
from .errors import YamabeLabError

__version__ = "0.1.0"

__all__ = ["barriers", "conformal", "eigen", "geometry", "profiles", "yamabe_radial", "YamabeLabError", "__version__"]
