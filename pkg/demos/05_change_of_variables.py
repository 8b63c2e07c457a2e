"""
Flattening the last row
=======================

The map rho(x, t) = (x + t v, t h) built from the last row (v, h) of a field
fixes the boundary.  Pulling the operator back by rho gives A_rho, whose
last row is close to (0, 1) when the field is smooth.
"""
import numpy as np

from dkplab import build_mesh, build_rho, conjugate, invert_rho, structure_check
from dkplab.fields import constant, dkp_smooth

# a linear stretch t -> 2t turns the Laplacian into diag(2, 1/2)
rho = build_rho(constant(np.diag([1.0, 2.0])))
print(conjugate(constant(n=2), rho)(np.array([0.3]), np.array(0.4)))

# %%
A = dkp_smooth(0.1, E=[[0, 0], [1, 1]])
rho = build_rho(A)
print(rho.summary())

x, t = np.array([0.1, 0.5, 0.9]), np.array([0.02, 0.3, 0.8])
px, pt = rho(x, t)
xb, tb = invert_rho(rho, (px[..., 0], pt))
print("round trip error", max(np.abs(xb - x).max(), np.abs(tb - t).max()))

A_rho = conjugate(A, rho)
print(structure_check(A_rho, build_mesh(2, 5), include_blocks=False))
