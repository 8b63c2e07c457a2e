"""
Carleson norms on dyadic tents
==============================

A density g on the half-space is a Carleson function when its averages
over tents B(z, r) x (0, r), taken against dt/t, stay bounded.  This demo
measures a few textbook examples and shows how refinement separates a
bounded norm from a logarithmically growing one.
"""
import numpy as np

from dkplab import build_mesh, cm_norm, dkp_norm, weak_dkp_norm
from dkplab.errors import NotApplicableError
from dkplab.fields import dkp_smooth, log_oscillation, whitney_piecewise

mesh = build_mesh(2, 6)

# sqrt(t) integrates to r against dt/t over (0, r), so every tent average is 1
r = cm_norm(lambda x, t: np.sqrt(t), mesh)
print(f"sqrt(t):   norm {r.norm:.6f}, worst tent {r.argmax_tent}, diverging {r.diverging}")

# a constant picks up ln(1/h) and keeps growing as the mesh is refined
r = cm_norm(lambda x, t: np.ones_like(t), mesh)
print(f"constant:  norm {r.norm:.4f}, diverging {r.diverging}")
for k in r.per_scale[:4]:
    print(f"   scale {k['scale']:<7g} max average {k['max_average']:.4f}")

# %%
# Coefficient fields: the weak norm only needs oscillation on Whitney
# boxes, the strong one needs t |grad A|.
for A in (dkp_smooth(0.1), log_oscillation(0.1), whitney_piecewise(0.2)):
    weak = weak_dkp_norm(A, mesh)
    try:
        strong = dkp_norm(A, mesh)
        s = f"{strong.norm:.4f} (diverging {strong.diverging})"
    except NotApplicableError:
        s = "not applicable (no gradient)"
    print(f"{A.name:18s} weak {weak.norm:.4f} (diverging {weak.diverging}), strong {s}")
