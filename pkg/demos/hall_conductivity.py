"""
Quantum Hall conductivity
=========================

The Hall conductivity follows from the field derivative of the integrated
density of states.  At low temperature it forms a staircase with one step
per Landau level.
"""

# %%
# Streda formula
# --------------
# With the chemical potential in a gap the value times pi counts the filled
# levels inside the cutoff.
import math

import numpy as np

from tbgmag.dos import DOSModel
from tbgmag.landau_special import landau_level
from tbgmag.response import ThermoParams, hall_antichiral, hall_chiral_explicit, hall_staircase, hall_streda

free = DOSModel.free()
mu = 0.5 * (landau_level(2, 50) + landau_level(3, 50))
print("Streda * pi in the gap above level 2:", hall_streda(ThermoParams(50.0, mu, 50.0), free) * math.pi)

# %%
# Staircase
# ---------
# The high-temperature sum jumps by one (in units of 1/pi) at each level.
for m in np.arange(0.0, 20.0, 2.5):
    s = hall_staircase(ThermoParams(200.0, m, 50.0))
    print(f"mu = {m:5.2f}: raw*pi = {s.raw_pi:7.3f}  subtracted*pi = {s.subtracted_pi:6.3f}")

# %%
# Chiral and anti-chiral models
# -----------------------------
# The explicit chiral formula and the Streda value differ only in the
# tunneling correction.  The anti-chiral sum counts both flavours.
tp = ThermoParams(2.0, 9.0, 40.0)
chiral = DOSModel.chiral(1.0)
print("explicit chiral:", hall_chiral_explicit(tp, chiral))
print("Streda chiral:  ", hall_streda(tp, chiral, strict=False, cutoff="symmetric"))
tp = ThermoParams(200.0, 24.0, 200.0)
print("anti-chiral / 2:", hall_antichiral(tp, DOSModel.antichiral(1.0, 0.3)) / 2, " staircase:", hall_staircase(tp).raw_pi)
