"""
A line in three dimensions
==========================

Around a line in R^3 the natural weight is |t|^(-1) in the two transverse
directions.  Axisymmetric solutions of the weighted Laplacian reduce to
harmonic functions of (x, r), which gives an exact oracle for the
weighted solver.
"""
import numpy as np

from dkplab.codim import (CylMesh, check_structure, codim_carleson_norm, cylindrical_derivative_check,
                          radial_ibp_check, radial_identity_probe, structure_preset)

f = lambda x: np.cos(2 * np.pi * x)
for J in (4, 5, 6):
    r = radial_identity_probe(f, J)
    print(f"J={J}: L2 error {r['l2_error']:.3e}, spread in theta {r['theta_spread']:.1e}")

print(cylindrical_derivative_check())
print([round(radial_ibp_check(J)["residual"], 10) for J in (4, 5, 6)])

# %%
cyl = CylMesh(5)
print("Carleson norm of sqrt(r):", codim_carleson_norm(lambda x, th, r: np.sqrt(r), cyl).max_average,
      "(2 pi =", 2 * np.pi, ")")
for case in ("i", "ii"):
    print(check_structure(structure_preset(case, delta=0.2)))
