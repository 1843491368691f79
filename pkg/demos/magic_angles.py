"""
Magic couplings and the flat band
=================================

The chiral model has a perfectly flat band at zero energy exactly when the
coupling is the reciprocal of an eigenvalue of a compact operator.  This
script computes those couplings, checks that they do not depend on the
quasi-momentum or on a periodic magnetic field, and then looks at the band
structure at the first magic value.
"""

# %%
# The eigenvalue problem
# ----------------------
# ``birman_schwinger_spectrum`` discretises the operator in plane waves and
# returns every eigenvalue.  The reciprocals of the real ones are the magic
# couplings.
import numpy as np

from tbgmag.potentials import TunnelingModel
from tbgmag.spectra import birman_schwinger_spectrum, flat_band_scan, magic_parameters, multiset_distance

model = TunnelingModel()
k = 0.123 + 0.05j
res = birman_schwinger_spectrum(model, k, N=16)
magic = magic_parameters(res, radius=2.5)
print("real magic couplings:", magic.real)
print("multiplicities:     ", magic.real_multiplicity)
print("truncation gap N=12 vs N=16:", res.convergence_gap)

# %%
# Invariance
# ----------
# A different admissible momentum, or a periodic field, leaves the resolved
# part of the spectrum unchanged.
other_k = birman_schwinger_spectrum(model, -0.3 + 0.2j, N=16, convergence_check=False)
with_field = birman_schwinger_spectrum(model, k, {(1, 1): 0.5, (-1, -1): 0.5}, N=16, convergence_check=False)
print("distance, other k:  ", multiset_distance(res.eigenvalues, other_k.eigenvalues, 1.0))
print("distance, with A:   ", multiset_distance(res.eigenvalues, with_field.eigenvalues, 1.0))

# %%
# The flat band
# -------------
# At the first magic coupling the lowest band vanishes on the whole
# Brillouin-zone grid, while at a generic coupling it does not.
alpha = float(magic.real[0])
for a in (alpha, 0.3):
    rep = flat_band_scan(model.with_alphas(alpha1=a), grid_n=4, N=12)
    print(f"alpha1 = {a:.6f}: max E0 = {rep.e0.max():.2e}, min next band = {rep.e_second.min():.3f}")
