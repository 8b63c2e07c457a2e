"""
Measuring solvability ratios
============================

Solvability is a statement about constants that do not depend on the
data.  The probes measure ||N(u_f)|| / ||f|| and ||N~(grad u_f)|| / ||grad f||
over a family of boundary data, and report the largest ratio and the
spread.  A Carleson perturbation of the coefficients should move them
only slightly.
"""
from dkplab import dirichlet_probe, perturbation_probe, regularity_probe
from dkplab.fields import carleson_bump, constant, dkp_smooth


def show(rep):
    s = rep.summary
    rows = "  ".join(f"{c['case']}={c['ratio']:.3f}" for c in rep.cases if c["ratio"] is not None)
    print(f"{rep.probe:12s} max {s['max_ratio']:.4f} spread {s['spread']:.3f} | {rows}")


show(dirichlet_probe(constant(n=2), J=6))
for J in (5, 6, 7):
    show(regularity_probe(constant(n=2), family="trig", J=J))
for J in (5, 7):
    show(regularity_probe(dkp_smooth(0.1), J=J))

# %%
for delta in (0.05, 0.1, 0.2):
    rep = perturbation_probe(constant(n=2), carleson_bump(delta), J=6, family="trig")
    print(f"bump delta={delta}: Carleson norm of C {rep.summary['cm_norm_C']:.4f}, "
          f"inflation {rep.summary['inflation']:.6f}")
