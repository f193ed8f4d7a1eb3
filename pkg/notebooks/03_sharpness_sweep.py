"""
Sharpness of the volume-ratio exponent
======================================

The radial eigenvalue on A_2R as the growth exponent beta increases. The
exact crossing on a finite annulus sits below sqrt(n(n-2)) and moves up to it
as R grows.
"""

# %%
import math

import numpy as np

from yamabe_lab.eigen import sharpness_experiment

# %%
betas = np.round(np.arange(1.0, 2.01, 0.1), 12)
for b in betas:
    rep = sharpness_experiment(b, 3, 3.0)
    print(f"beta={b:.1f}: lambda {rep.lambda_numeric:+.6f}  exact {rep.lambda_exact:+.6f}  "
          f"lower bound {rep.lower_bound:+.4f}")

# %% [markdown]
# lambda = -6 + 2 beta^2 + 8 pi^2 / (4R)^2 vanishes at
# beta = sqrt(3 - pi^2/(4R^2)).

# %%
for R in (3.0, 10.0, 30.0, 100.0):
    print(R, math.sqrt(3 - math.pi ** 2 / (4 * R * R)), math.sqrt(3))
