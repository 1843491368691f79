"""
Shubnikov-de Haas and de Haas-van Alphen oscillations
=====================================================

Longitudinal conductivity and magnetization oscillate as Landau levels pass
through the chemical potential.  This script sweeps the chemical potential
for the conductivity and the field for the magnetization.
"""

# %%
# Conductivity versus chemical potential
# --------------------------------------
# At moderate temperature the peaks of ``sigma_xx`` sit on the Landau levels.
import numpy as np

from tbgmag.dos import DOSModel
from tbgmag.landau_special import landau_level
from tbgmag.response import ThermoParams, magnetization, sigma_xx, susceptibility, sweep

free, chiral = DOSModel.free(), DOSModel.chiral(0.6)
base = ThermoParams(beta=5.0, mu=0.0, B=30.0)
mus = np.linspace(0.0, 16.0, 321)
curve = sweep(lambda tp: sigma_xx(tp, free), base, "mu", mus, "free", threads=4)
v = curve.values
peaks = [mus[i] for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
print("sigma_xx peaks:", np.round(peaks, 3))
print("Landau levels: ", np.round([landau_level(n, 30) for n in range(1, 5)], 3))

# %%
# The chiral correction shifts the peak heights.
tp = ThermoParams(2.0, landau_level(1, 30), 30)
print("chiral - free at the first peak:", sigma_xx(tp, chiral, strict=False) - sigma_xx(tp, free))

# %%
# Magnetization versus field
# --------------------------
# The magnetization jumps up each time a level crosses ``mu``, at
# ``B = mu^2 / 2n``.  The susceptibility peaks mark the crossings.
Bs = np.linspace(3.0, 30.0, 136)
M = sweep(lambda tp: magnetization(tp, free), ThermoParams(4.0, 5.0, 10.0), "B", Bs, "free", threads=4).values
chi = sweep(lambda tp: susceptibility(tp, free), ThermoParams(4.0, 5.0, 10.0), "B", Bs, "free", threads=4).values
crossings = [Bs[i] for i in range(1, len(chi) - 1) if chi[i] > chi[i - 1] and chi[i] >= chi[i + 1]]
print("chi peaks at B =", np.round(crossings, 2), " expected", [12.5 / n for n in (1, 2, 3, 4)])
print("M range:", M.min(), M.max())
