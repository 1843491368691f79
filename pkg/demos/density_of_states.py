"""
Density of states in a strong field
===================================

In a strong magnetic field the density of states concentrates near the
Landau levels ``sgn(n) sqrt(2|n|B)``.  The trace expansions turn a smooth
test function into a number: a leading term per level plus a model-dependent
correction.
"""

# %%
# Test functions
# --------------
# Test functions are small expression trees that know all their
# derivatives.  Here is a Gaussian centred on the first level.
import math

import numpy as np

from tbgmag.dos import DOSModel, GapClosedError, band_window, dtrace_dB, integrated_dos_per_band, trace
from tbgmag.landau_special import landau_level
from tbgmag.testfunction import gaussian

B = 100.0
lam1 = landau_level(1, B)
f = gaussian(lam1, 1.0)
print("f(lam1) =", f(lam1), " f''(lam1) =", f.derivative(lam1, 2))

# %%
# Three models
# ------------
# The chiral correction is proportional to ``Ave(frakU) f''`` and vanishes on
# the zero level.  The anti-chiral model splits each level by ``alpha0 |V|``.
models = {"free": DOSModel.free(), "chiral": DOSModel.chiral(1.0), "antichiral": DOSModel.antichiral(1.0, 0.3)}
for name, m in models.items():
    r = trace(f, [1], B, m, strict=False)
    print(f"{name:>10}: leading {r.leading:.6f}  correction {r.correction:+.6f}")

# %%
# Band windows
# ------------
# Each expansion is valid on a window around its level.  When the Landau gap
# is smaller than twice the potential norm the window closes.
print("window B=400:", band_window(1, 400.0, models["chiral"]))
try:
    band_window(1, 50.0, models["chiral"])
except GapClosedError as err:
    print("B=50:", err)

# %%
# Field derivatives and state counting
# ------------------------------------
# ``dtrace_dB`` differentiates every retained term analytically.  A plateau
# covering one band counts ``B/pi`` states per unit area, two flavours of
# ``B/2pi`` each.
print("d trace / dB (chiral):", dtrace_dB(f, 2, B, models["chiral"], strict=False).total)
for name, m in models.items():
    print(f"{name:>10}: states per band / (B/2pi) =", integrated_dos_per_band(m, 1, 400.0) / (400.0 / (2 * math.pi)))
