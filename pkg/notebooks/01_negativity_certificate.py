"""
Negativity certificate on an exponential torus
==============================================

Volume ratio test, test-function bound and the numerically computed
radial eigenvalue side by side.
"""

# %%
import numpy as np

from yamabe_lab.eigen import RadialDomain, first_eigenvalue, negativity_certificate, torus_eigenvalue_exact
from yamabe_lab.geometry import choose_alphas, exp_torus_spec

# %% [markdown]
# With sum of exponents beta <= n - 1 the exponents can be chosen so that the
# scalar curvature is exactly -n(n-1).

# %%
beta = 1.0
alphas = choose_alphas(beta, 3)
spec, S = exp_torus_spec(alphas)
print("alphas", alphas, "S", S)

# %%
for W, R in [(1.0, 1.0), (1.0, 2.0), (1.0, 5.0)]:
    cert = negativity_certificate(spec, RadialDomain.centred(0.0, W, R))
    print(f"W={W} R={R}: ratio {cert.ratio:10.3f} <= {cert.sinh2_bound:10.3f}? "
          f"{cert.verdict:18s} lambda {cert.lambda_numeric:+.6f} (bound {cert.lambda_upper:+.4f})")

# %% [markdown]
# The constant-coefficient problem has a closed form, so the solver can be
# checked directly.

# %%
dom = RadialDomain.centred(0.0, 1.0, 5.0)
rep = first_eigenvalue(spec, dom)
print(rep.lambda_, torus_eigenvalue_exact(alphas, dom.length), rep.bracket)
print("eigenfunction peak at r =", rep.grid[np.argmax(rep.eigenfunction)])
