"""
Boundary functionals of a harmonic function
===========================================

For u = exp(-2 pi t) cos(2 pi x) the square function has a closed form,
S(u) = 1/sqrt(2) at every boundary point.  We compare it with the
discrete value and look at the maximal functions N and N~ of grad u.
"""
import numpy as np

from dkplab import area_square, avg_ntmax, build_mesh, lp_norm, ntmax

w = 2 * np.pi
for J in (5, 6, 7):
    mesh = build_mesh(2, J)
    x, t = mesh.cell_centers()
    e = np.exp(-w * t)
    grad = np.stack([-w * np.sin(w * x[..., 0]) * e, -w * np.cos(w * x[..., 0]) * e], -1)
    S = area_square(grad, mesh, kind="S")
    N = ntmax(grad, mesh)
    Nt = avg_ntmax(grad, mesh)
    print(f"J={J}: S in [{S.values.min():.5f}, {S.values.max():.5f}] (exact {1 / np.sqrt(2):.5f}), "
          f"||N||_2 {lp_norm(N, 2):.4f}, ||N~||_2 {lp_norm(Nt, 2):.4f}")

# |grad u| = 2 pi exp(-2 pi t) is largest at the boundary, so both maximal
# functions approach 2 pi as the first cell row moves down
print(f"2 pi = {w:.4f}")
