"""Probes for the complement of a line in three dimensions.

Points are ``(x, t)`` with ``x`` on the line and ``t`` in the transverse
plane, ``r = |t|``.  The model operator is ``-div(r**-1 grad u)`` (the
weight ``|t|**(d+1-n)`` with ``(n, d) = (3, 1)``).  Axisymmetric solutions
of it are harmonic functions of ``(x, r)``, which is what the radial probe
checks against the strip oracle.
"""
import numpy as np

from .carleson import DIVERGENCE_THRESHOLD, CarlesonReport, _grows
from .elliptic import FourierExtension, boundary_samples, solve_weighted
from .errors import ConfigurationError
from .mesh import CylMesh, ball_kernel, build_mesh, periodic_correlate

__all__ = [
    "CylMesh",
    "CodimField",
    "cylindrical_derivative_check",
    "radial_identity_probe",
    "codim_carleson_norm",
    "structure_preset",
    "check_structure",
    "radial_ibp_check",
]


# cylindrical derivatives --------------------------------------------------
def _trig_polynomial(rng, terms=4, kmax=3):
    """Random ``u(x, t2, t3) = sum a cos(2 pi k.z + phase)`` with its gradient."""
    K = rng.integers(-kmax, kmax + 1, size=(terms, 3))
    a = rng.normal(size=terms)
    ph = rng.uniform(0, 2 * np.pi, size=terms)

    def u(z):
        return np.cos(2 * np.pi * z @ K.T + ph) @ a

    def grad(z):
        s = -np.sin(2 * np.pi * z @ K.T + ph) * a
        return 2 * np.pi * s @ K

    return u, grad


def cylindrical_derivative_check(samples=100, seed=0):
    """Residuals of the cylindrical derivative identities at random points.

    For random trigonometric polynomials ``u`` checks

    * ``d_j u = (t_j/|t|) d_r u + sum_k (t_k/|t|) d_{phi_jk} u`` with
      ``d_r = (t/|t|) . grad_t`` and ``d_{phi_jk} = (t_k d_j - t_j d_k)/|t|``;
    * ``d_r (t_k/|t|) = 0``;
    * ``d_{phi_jk} g(|t|) = 0`` for a radial ``g``.

    Returns a dict of maximal absolute residuals.
    """
    rng = np.random.default_rng(seed)
    z = np.column_stack([rng.uniform(0, 1, samples), rng.uniform(-1, 1, (samples, 2))])
    t = z[:, 1:]
    r = np.linalg.norm(t, axis=1)
    e = t / r[:, None]
    res_split = 0.0
    for _ in range(4):
        _, grad = _trig_polynomial(rng)
        g = grad(z)[:, 1:]
        d_r = np.sum(e * g, axis=1)
        for j in range(2):
            ang = sum(e[:, k] * (t[:, k] * g[:, j] - t[:, j] * g[:, k]) / r for k in range(2))
            res_split = max(res_split, float(np.abs(g[:, j] - (e[:, j] * d_r + ang)).max()))
    # gradient of t_k/|t| in t: (delta_jk - e_j e_k)/|t|
    res_angle = 0.0
    for k in range(2):
        grad_e = (np.eye(2)[k][None, :] - e * e[:, k : k + 1]) / r[:, None]
        res_angle = max(res_angle, float(np.abs(np.sum(e * grad_e, axis=1)).max()))
    # radial g(|t|) = exp(-|t|^2): gradient g'(r) e
    gp = -2 * r * np.exp(-r * r)
    grad_g = gp[:, None] * e
    res_radial = float(np.abs((t[:, 1] * grad_g[:, 0] - t[:, 0] * grad_g[:, 1]) / r).max())
    return {"split": res_split, "angle_radial": res_angle, "radial_angular": res_radial, "samples": samples}


# radial solutions ---------------------------------------------------------
def radial_identity_probe(f, J, n_theta=8):
    """Compare the axisymmetric weighted solve with the strip oracle at ``(x, r)``.

    Returns a dict with the discrete L2 error over ``(x, theta, r)`` nodes,
    the maximal error, the spread over ``theta`` and solver statistics.
    """
    cyl = CylMesh(J, n_theta)
    mesh = build_mesh(2, J)
    fb = boundary_samples(f, mesh)
    sol = solve_weighted(cyl, fb)
    ext = FourierExtension(fb, "strip")
    X, R = np.meshgrid(cyl.xn, cyl.rn, indexing="ij")
    exact = ext(X, R)[:, None, :]
    err = sol.nodal - exact
    spread = float(np.abs(sol.nodal - sol.nodal.mean(axis=1, keepdims=True)).max())
    return {
        "J": J,
        "h": cyl.h,
        "l2_error": float(np.sqrt(np.mean(err**2) * (1.0 - cyl.h))),
        "max_error": float(np.abs(err).max()),
        "theta_spread": spread,
        "residual": sol.residual,
        "iterations": sol.iterations,
    }


# Carleson norm with the degenerate measure ---------------------------------
def _cyl_cells(cyl):
    # the Carleson cells cover 0 < r < 1; only the solver excludes the axis
    c = (np.arange(cyl.N) + 0.5) * cyl.h
    thc = cyl.thn + np.pi / cyl.n_theta
    return np.meshgrid(c, thc, c, indexing="ij")


def _codim_profile(rho, cyl):
    """Tent averages ``avg_{|x - z| < r0} int_{|t| < r0} rho dx dt/|t|^2`` over dyadic ``r0``."""
    dth = 2 * np.pi / cyl.n_theta
    rc = (np.arange(cyl.N) + 0.5) * cyl.h
    col = rho.sum(axis=1) * dth * (cyl.h / rc)  # (N, N): dr dtheta / r
    prefix = np.concatenate([np.zeros((cyl.N, 1)), np.cumsum(col, axis=1)], axis=1)
    out = np.empty((cyl.J, cyl.N))
    for j in range(cyl.J):
        r0 = 2.0**-j
        rows = int(np.sum(rc < r0))
        ker = ball_kernel(1, cyl.N, cyl.h, r0, "center")
        out[j] = periodic_correlate(prefix[:, rows], ker) / ker.sum()
    return out


def codim_carleson_norm(g, cyl, check_divergence=True, threshold=DIVERGENCE_THRESHOLD):
    """Carleson norm for the measure ``dx dt / |t|**(n-d)`` on tents ``{|x-z| < r, |t| < r}``.

    ``g`` is a callable ``g(x, theta, r)`` or an array of cell-centre values
    of shape ``(N, n_theta, N)`` on the cells ``x, r in (k h, (k+1) h)``
    (trailing axes are summed in modulus squared).
    """
    if callable(g):
        vals = np.asarray(g(*_cyl_cells(cyl)), dtype=float)
    else:
        vals = np.asarray(g, dtype=float)
    shape = (cyl.N, cyl.n_theta, cyl.N)
    if vals.shape[:3] != shape:
        raise ConfigurationError(f"cell array must start with shape {shape}, got {vals.shape}")
    rho = np.sum(vals.reshape(shape + (-1,)) ** 2, axis=-1)
    prof = _codim_profile(rho, cyl)
    maxima = prof.max(axis=1)
    j, c = np.unravel_index(int(np.argmax(prof)), prof.shape)
    diverging = None
    if callable(g) and check_divergence:
        lo, hi = (cyl, CylMesh(cyl.J + 1, cyl.n_theta)) if cyl.J < 8 else (CylMesh(cyl.J - 1, cyl.n_theta), cyl)
        other = codim_carleson_norm(g, hi if lo is cyl else lo, check_divergence=False).max_average
        mine = float(maxima.max())
        coarse, fine = (mine, other) if lo is cyl else (other, mine)
        diverging = bool(_grows(coarse, fine, threshold))
    best = float(max(maxima.max(), 0.0))
    return CarlesonReport(
        norm=float(np.sqrt(best)), max_average=best,
        argmax_tent={"center": [float(c * cyl.h)], "center_index": [int(c)], "scale": 2.0**-int(j)},
        per_scale=[{"scale": 2.0**-k, "max_average": float(m)} for k, m in enumerate(maxima)],
        diverging=diverging, J=cyl.J, n=cyl.n, tent_values=prof, extras={"measure": "dx dt/|t|^2"})


# structured coefficients ------------------------------------------------------
class CodimField:
    """A ``3 x 3`` coefficient field of ``(x, t)`` in Cartesian components.

    ``case`` records which block structure it was built with.
    """

    def __init__(self, value, case, params):
        self._value = value
        self.case = case
        self.params = dict(params)

    def __call__(self, x, tvec):
        return self._value(np.asarray(x, dtype=float), np.asarray(tvec, dtype=float))


def structure_preset(case, delta=0.1, ell=1.0, c2=(0.5, -0.3), c3=(0.3, 0.2)):
    """Block-structured coefficients built from ``p(x, r) = delta sin(2 pi x) exp(-r/ell)``.

    ``case = "i"``: ``[[1 + p, B2], [B3, (1 + p/2) I]]`` with ``B2 = p c2``,
    ``B3 = p c3^T`` in fixed directions.

    ``case = "ii"``: ``[[1 + p, b2 t^T/|t|], [t/|t| b3, (1 + p/2) I]]`` with
    scalars ``b2 = p c2[0]``, ``b3 = p c3[0]``.
    """
    if case not in ("i", "ii"):
        raise ConfigurationError(f"case must be 'i' or 'ii', got {case!r}")
    c2 = np.asarray(c2, dtype=float)
    c3 = np.asarray(c3, dtype=float)

    def value(x, tvec):
        r = np.linalg.norm(tvec, axis=-1)
        p = delta * np.sin(2 * np.pi * x) * np.exp(-r / ell)
        out = np.zeros(np.shape(p) + (3, 3))
        out[..., 0, 0] = 1.0 + p
        out[..., 1, 1] = out[..., 2, 2] = 1.0 + 0.5 * p
        if case == "i":
            out[..., 0, 1:] = p[..., None] * c2
            out[..., 1:, 0] = p[..., None] * c3
        else:
            e = tvec / r[..., None]
            out[..., 0, 1:] = (p * c2[0])[..., None] * e
            out[..., 1:, 0] = (p * c3[0])[..., None] * e
        return out

    return CodimField(value, case, {"delta": delta, "ell": ell, "c2": c2.tolist(), "c3": c3.tolist()})


def check_structure(B, samples=256, seed=0):
    """Residuals of the block-shape conditions of ``B.case``.

    Always checks that the transverse block is a scalar multiple of the
    identity; for case ``"ii"`` also that the off-diagonal blocks are
    parallel to ``t/|t|``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, samples)
    tvec = rng.uniform(-1, 1, (samples, 2))
    M = B(x, tvec)
    low = M[:, 1:, 1:]
    scalar = float(max(np.abs(low[:, 0, 1]).max(), np.abs(low[:, 1, 0]).max(),
                       np.abs(low[:, 0, 0] - low[:, 1, 1]).max()))
    out = {"case": B.case, "transverse_scalar": scalar}
    if B.case == "ii":
        perp = np.stack([-tvec[:, 1], tvec[:, 0]], -1)
        out["upper_parallel"] = float(np.abs(np.sum(M[:, 0, 1:] * perp, -1)).max())
        out["lower_parallel"] = float(np.abs(np.sum(M[:, 1:, 0] * perp, -1)).max())
    return out


def radial_ibp_check(J, n_theta=8):
    """``int f d_r|t| dt/|t| dx + int (d_r f)|t| dt/|t| dx`` for a compactly supported ``f``.

    With ``dt/|t| = dr dtheta`` the sum is ``int d_r(r f) dr dtheta dx = 0``.
    ``f = cos(2 pi x)**2 (1 + cos(theta)/2) (1 - r**2)**4`` on ``r < 1``;
    midpoint rule in ``r`` with ``2**J`` cells, so the residual is ``O(h**2)``.
    """
    N = 2**J
    h = 1.0 / N
    x = (np.arange(N) + 0.5) * h
    th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    r = (np.arange(N) + 0.5) * h
    X, TH, R = np.meshgrid(x, th, r, indexing="ij")
    ang = np.cos(2 * np.pi * X) ** 2 * (1 + 0.5 * np.cos(TH))
    f = ang * (1 - R**2) ** 4
    dfr = ang * (-8 * R) * (1 - R**2) ** 3
    w = h * (2 * np.pi / n_theta) * h
    first = float(np.sum(f) * w)
    second = float(np.sum(dfr * R) * w)
    return {"J": J, "h": h, "first": first, "second": second, "residual": abs(first + second)}
