"""
Identities, interior estimates and duality
==========================================

Three checks that sit behind the regularity estimate: an integration by
parts identity that must hold up to discretisation error, the interior
gradient bound in Whitney regions (Moser), and the duality witness that
turns a maximal-function norm into a pairing.
"""
import numpy as np

from dkplab import build_mesh, dual_witness
from dkplab.fields import constant, dkp_smooth
from dkplab.probes import ibp_identity_probe, moser_probe, poisson_duality_probe

rep = ibp_identity_probe(Js=(4, 5, 6, 7))
print("IBP residuals", [f"{r:.2e}" for r in rep.summary["residuals"]],
      "reductions", np.round(rep.summary["reduction"], 2).tolist())

f = lambda x: np.cos(2 * np.pi * x)
rep = moser_probe(dkp_smooth(0.2), f, Js=(5, 6, 7))
print("Moser constants", [round(c["ratio"], 4) for c in rep.cases])

# %%
mesh = build_mesh(2, 5)
_, t = mesh.cell_centers()
K = (t > 2 * mesh.h) & (t < 0.75)
F = np.random.default_rng(0).normal(size=mesh.cell_shape + (2,))
w = dual_witness(F, mesh, K, q=2.0)
print(f"witness pairing {w.pairing:.6f} vs ||N_1,K F||_2 {w.target:.6f}")

rep = poisson_duality_probe(dkp_smooth(0.2), Js=(5, 6))
print("adjoint S + N per level", [round(c["ratio"], 4) for c in rep.cases],
      "top contamination", np.round(rep.summary["top_contamination"], 4).tolist())
print("same probe for the Laplacian with a finite element comparison:",
      poisson_duality_probe(constant(n=2), Js=(5,), comparison="fem").cases[0]["ratio"])
