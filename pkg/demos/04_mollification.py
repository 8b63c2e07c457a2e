"""
Logarithmic mollification
=========================

B_Lam averages a field over s in (Lam t, Lam^2 t) against a normalised
bump, which flattens vertical variation.  We check the kernel mass, then
split a field into a smooth part B plus a remainder C, picking the first
Lam on a ladder that brings sup |t grad B| under a target.
"""
from dkplab import build_mesh
from dkplab.fields import dkp_smooth
from dkplab.smoothing import decompose, kernel_mass, sup_tgrad

for Lam in (2**0.25, 4.0, 16.0):
    print(f"Lam={Lam:8.4f}  kernel mass {kernel_mass(0.3, 0.05, Lam):.10f}")

# %%
A = dkp_smooth(0.2)
print(f"sup |t grad A| on a coarse mesh: {sup_tgrad(A, build_mesh(2, 3)):.4f}")

d = decompose(A, eps=0.1, J=4, sup_J=3)
for rung in d.ladder:
    print(f"   Lam {rung['lambda']:<5g} sup|t grad B| {rung['sup_tgrad']:.4f}")

print(f"chosen Lam {d.Lam:g}: Carleson norm of t grad B {d.M_B:.4f}, of C {d.M_C:.4f}")
print(f"ellipticity of B {d.ellipticity:.4f} (A: {d.lam_A:.4f})")
