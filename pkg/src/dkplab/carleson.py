"""Carleson-measure functionals on the half-space mesh.

The basic quantity is the tent average

    avg_{B(z, r)} int_0^r rho(x, t) dt / t dx

of a nonnegative density ``rho`` sampled at cell centres, enumerated over
dyadic scales ``r = 2**-j`` and all boundary nodes ``z``.  ``cm_norm`` uses
``rho = |g|^2`` and reports the square root of the largest average;
``weak_dkp_norm`` uses the Whitney oscillation ``f_L`` itself.
"""
from dataclasses import dataclass, field

import numpy as np

from ._quad import gauss_legendre
from .errors import ConfigurationError, NotApplicableError
from .mesh import ball_kernel, build_mesh, node_ball_max, periodic_correlate

__all__ = [
    "CarlesonReport",
    "WhitneyOscillation",
    "cm_norm",
    "tent_profile",
    "whitney_oscillation",
    "oscillation_on_cells",
    "weak_dkp_norm",
    "dkp_norm",
    "linfty_on_cells",
    "linfty_whitney_norm",
    "carleson_embedding_check",
    "embedding_corpus",
    "DIVERGENCE_THRESHOLD",
]

# relative growth of the largest tent average from J to J + 1 above which a
# density is reported as diverging
DIVERGENCE_THRESHOLD = 0.01


@dataclass
class CarlesonReport:
    """Result of a tent enumeration.

    ``norm`` is ``sqrt(max_average)`` for Carleson norms of ``|g|^2`` and
    ``max_average`` itself for first-power densities (``squared`` is then
    true).  ``tent_values`` has shape ``(J + 1,) + col_shape``: row ``j``
    holds the averages over tents of scale ``2**-j``.
    """

    norm: float
    max_average: float
    argmax_tent: dict
    per_scale: list
    diverging: object
    J: int
    n: int
    squared: bool = False
    tent_values: np.ndarray = field(default=None, repr=False)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "norm": self.norm,
            "max_average": self.max_average,
            "squared": self.squared,
            "argmax_tent": self.argmax_tent,
            "per_scale": self.per_scale,
            "diverging": self.diverging,
            "J": self.J,
            "n": self.n,
            **self.extras,
        }


def _density(values, mesh):
    a = np.asarray(values, dtype=float)
    if a.shape[: mesh.n] != mesh.cell_shape:
        raise ConfigurationError(f"cell array must start with shape {mesh.cell_shape}, got {a.shape}")
    a = a.reshape(mesh.cell_shape + (-1,))
    return np.einsum("...k,...k->...", a, a)


def tent_profile(rho, mesh):
    """Tent averages of ``rho dt/t`` at every dyadic scale and boundary node.

    Returns an array of shape ``(J + 1,) + col_shape``.
    """
    rho = np.asarray(rho, dtype=float)
    w = rho * (mesh.h / mesh.tc)
    prefix = np.concatenate([np.zeros(mesh.col_shape + (1,)), np.cumsum(w, axis=-1)], axis=-1)
    out = np.empty((mesh.J + 1,) + mesh.col_shape)
    for j in range(mesh.J + 1):
        rows = 2 ** (mesh.J - j)  # cells with t_c < 2**-j
        col = prefix[..., rows]
        ker = mesh.ball(2.0**-j, "center")
        out[j] = periodic_correlate(col, ker) / ker.sum()
    return out


def _report(values, mesh, squared=False, diverging=None, extras=None):
    maxima = values.reshape(values.shape[0], -1).max(axis=1)
    maxima = np.maximum(maxima, 0.0)
    flat = int(np.argmax(np.where(values >= 0, values, 0.0)))
    idx = np.unravel_index(flat, values.shape)
    j, center = int(idx[0]), tuple(int(c) for c in idx[1:])
    best = float(maxima.max())
    return CarlesonReport(
        norm=best if squared else float(np.sqrt(best)),
        max_average=best,
        argmax_tent={"center": [c * mesh.h for c in center], "center_index": list(center),
                     "scale": 2.0**-j},
        per_scale=[{"scale": 2.0**-k, "max_average": float(maxima[k])} for k in range(mesh.J + 1)],
        diverging=diverging,
        J=mesh.J,
        n=mesh.n,
        squared=squared,
        tent_values=values,
        extras=dict(extras or {}),
    )


def _grows(coarse, fine, threshold):
    if coarse <= 0.0:
        return fine > 0.0
    return (fine - coarse) / coarse > threshold


def _refined(mesh):
    if mesh.J < 10:
        return mesh, build_mesh(mesh.n, mesh.J + 1)
    return build_mesh(mesh.n, mesh.J - 1), mesh


def cm_norm(g, mesh, check_divergence=True, threshold=DIVERGENCE_THRESHOLD):
    """Carleson norm of a scalar or matrix field over dyadic tents.

    Parameters
    ----------
    g : callable or ndarray
        Either ``g(x, t)`` returning scalars, vectors or matrices, or an array
        of cell-centre samples with leading shape ``mesh.cell_shape``.
    mesh : HalfSpaceMesh
    check_divergence : bool
        For callables, also evaluate on the mesh one level finer and flag the
        result as diverging when the largest tent average grows by more than
        ``threshold`` (relative).  Arrays give ``diverging = None``.

    Returns
    -------
    CarlesonReport
    """
    if callable(g):
        x, t = mesh.cell_centers()
        rho = _density(g(x, t), mesh)
    else:
        rho = _density(g, mesh)
    values = tent_profile(rho, mesh)
    diverging = None
    if callable(g) and check_divergence:
        coarse, fine = _refined(mesh)
        other = cm_norm(g, fine if coarse is mesh else coarse, check_divergence=False)
        mine = float(values.max())
        c, f = (mine, other.max_average) if coarse is mesh else (other.max_average, mine)
        diverging = bool(_grows(c, f, threshold))
    return _report(values, mesh, diverging=diverging)


@dataclass
class WhitneyOscillation:
    """Best constant approximation of ``A`` on the Whitney box above a point."""

    point: tuple
    mean: np.ndarray
    value: float
    clipped: bool


def _box_rule(n, x, t, q=8, panels=8):
    """Composite Gauss rule on ``B(x, 2t) x (t, 2t)`` for ``dy ds / s``."""
    u, wu = gauss_legendre(q, 0.0, 1.0)
    edges = np.linspace(np.log(t), np.log(2 * t), panels + 1)
    sig = (edges[:-1, None] + np.diff(edges)[:, None] * u).ravel()
    wsig = (np.diff(edges)[:, None] * wu).ravel()
    s = np.exp(sig)  # ds / s = d sigma
    R = 2 * t
    if n == 2:
        e = np.linspace(-R, R, 2 * panels + 1)
        y = (e[:-1, None] + np.diff(e)[:, None] * u).ravel()
        wy = (np.diff(e)[:, None] * wu).ravel()
        Y = x[0] + y[:, None] + 0 * s
        S = np.broadcast_to(s, Y.shape)
        W = wy[:, None] * wsig
        return Y[..., None], S, W
    e = np.linspace(0.0, R, panels + 1)
    r = (e[:-1, None] + np.diff(e)[:, None] * u).ravel()
    wr = (np.diff(e)[:, None] * wu).ravel() * r
    m = 8 * q
    th = 2 * np.pi * np.arange(m) / m
    pts = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], -1)
    wp = np.repeat(wr, m) * (2 * np.pi / m)
    Y = x[None, None, :] + pts[:, None, :] + 0 * s[None, :, None]
    S = np.broadcast_to(s, Y.shape[:-1])
    return Y, S, wp[:, None] * wsig


def whitney_oscillation(A, x, t, q=8, panels=8):
    """Oscillation of ``A`` on ``B(x, 2t) x (t, 2t)`` with respect to ``dy ds / s``.

    The mean over the box is the best constant in the Frobenius-L2 sense;
    the returned value is the mean squared deviation from it.  Boxes
    reaching above ``t = 1`` are evaluated anyway (fields are defined
    everywhere) and flagged ``clipped``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = float(t)
    if t <= 0:
        raise ConfigurationError("t must be positive")
    Y, S, W = _box_rule(A.n, x, t, q, panels)
    vals = A(Y, S)
    W = W / W.sum()
    mean = np.tensordot(W, vals, axes=W.ndim)
    dev = vals - mean
    value = float(np.tensordot(W, np.sum(dev * dev, axis=(-2, -1)), axes=W.ndim))
    return WhitneyOscillation((tuple(x.tolist()), t), mean, max(value, 0.0), 2 * t > 1.0)


def _subgrid_rows(A, mesh):
    """Gauss samples on the half-spacing grid covering ``t in (0, 2)``.

    Yields, per sub-row, the sample values with shape
    ``(2N,)*(n-1) + (G, n, n)`` and Gauss weights (including ``1/s``) of
    shape ``(G,)`` where ``G`` is the number of Gauss points per sub-cell.
    """
    n, N = mesh.n, mesh.N
    hs = 0.5 * mesh.h
    g, gw = gauss_legendre(2, 0.0, hs)
    base = np.arange(2 * N) * hs
    xs = (base[:, None] + g).ravel()  # (2N*2,)
    if n == 2:
        X = xs.reshape(2 * N, 2)[..., None]  # (2N, 2, 1)
        WX = np.broadcast_to(gw, (2 * N, 2))
    else:
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        X = np.stack([X1, X2], -1).reshape(2 * N, 2, 2 * N, 2, 2).transpose(0, 2, 1, 3, 4)
        X = X.reshape(2 * N, 2 * N, 4, 2)
        WX = np.broadcast_to(np.outer(gw, gw).ravel(), (2 * N, 2 * N, 4))
    for m in range(4 * N):
        s = m * hs + g
        if n == 2:
            Y = np.broadcast_to(X[:, :, None, :], (2 * N, 2, 2, 1)).reshape(2 * N, 4, 1)
            S = np.broadcast_to(s[None, None, :], (2 * N, 2, 2)).reshape(2 * N, 4)
            W = (WX[:, :, None] * (gw / s)[None, None, :]).reshape(2 * N, 4)
        else:
            Y = np.broadcast_to(X[:, :, :, None, :], (2 * N, 2 * N, 4, 2, 2)).reshape(2 * N, 2 * N, 8, 2)
            S = np.broadcast_to(s, (2 * N, 2 * N, 4, 2)).reshape(2 * N, 2 * N, 8)
            W = (WX[..., None] * (gw / s)).reshape(2 * N, 2 * N, 8)
        yield A(Y, S), W


def _reference(A):
    n = A.n
    return A(np.full(n - 1, 0.5), 0.5)


def _level_kernel(mesh, k):
    # ball of radius 2 t_c on the half-spacing grid, centred at a sub-node
    return ball_kernel(mesh.n - 1, 2 * mesh.N, 0.5 * mesh.h, (4 * k + 2) * 0.5 * mesh.h, "overlap")


def oscillation_on_cells(A, mesh, per_entry=False):
    """Whitney oscillation ``f_L`` at every cell centre.

    Uses 2x2 Gauss points in each half-spacing sub-cell (4x4 per cell), the
    Whitney box ``B(x_c, 2 t_c) x (t_c, 2 t_c)`` and the measure
    ``dy ds / s``.  With ``per_entry`` the entrywise variances are returned
    as well, shape ``cell_shape + (n, n)``.
    """
    n, N = mesh.n, mesh.N
    ref = _reference(A)
    nn = n * n
    # running prefix sums over sub-rows of [w, w*A_ij, w*A_ij^2]
    P = np.zeros((4 * N + 1,) + (2 * N,) * (n - 1) + (1 + 2 * nn,))
    for m, (vals, W) in enumerate(_subgrid_rows(A, mesh)):
        d = (vals - ref).reshape(vals.shape[:-2] + (nn,))
        row = np.concatenate([W.sum(-1)[..., None],
                              np.einsum("...g,...gk->...k", W, d),
                              np.einsum("...g,...gk->...k", W, d * d)], axis=-1)
        P[m + 1] = P[m] + row
    fl = np.empty(mesh.cell_shape)
    var = np.empty(mesh.cell_shape + (n, n)) if per_entry else None
    sl = (slice(1, None, 2),) * (n - 1)
    for k in range(N):
        rows = P[4 * k + 2] - P[2 * k + 1]
        sums = periodic_correlate(rows, _level_kernel(mesh, k))[sl]
        w = sums[..., 0]
        mean = sums[..., 1: 1 + nn] / w[..., None]
        v = np.maximum(sums[..., 1 + nn:] / w[..., None] - mean * mean, 0.0)
        fl[..., k] = v.sum(-1)
        if per_entry:
            var[..., k, :, :] = v.reshape(v.shape[:-1] + (n, n))
    return (fl, var) if per_entry else fl


def weak_dkp_norm(A, mesh, check_divergence=True, threshold=DIVERGENCE_THRESHOLD):
    """Largest tent average of ``f_L dt/t`` (first power of ``f_L``).

    The report's ``norm`` is this average itself, i.e. the square ``M**2``
    of the weak-DKP constant.
    """
    fl = oscillation_on_cells(A, mesh)
    values = tent_profile(fl, mesh)
    diverging = None
    if check_divergence:
        coarse, fine = _refined(mesh)
        other = weak_dkp_norm(A, fine if coarse is mesh else coarse, check_divergence=False)
        mine = float(values.max())
        c, f = (mine, other.max_average) if coarse is mesh else (other.max_average, mine)
        diverging = bool(_grows(c, f, threshold))
    return _report(values, mesh, squared=True, diverging=diverging)


def dkp_norm(A, mesh, check_divergence=True, threshold=DIVERGENCE_THRESHOLD):
    """Carleson norm of ``t |grad A|`` (Frobenius over entries and directions).

    Uses the analytic gradient when present, else central differences with
    step ``h / 4``.

    Raises
    ------
    NotApplicableError
        If ``A`` is not differentiable.
    """
    if not A.has_gradient and not A.differentiable:
        raise NotApplicableError(f"field {A.name!r} has no gradient; the DKP norm is not defined")

    def tgrad(x, t):
        step = mesh.h / 4
        G = A.gradient(x, t, step=step)
        return t[..., None, None, None] * G

    return cm_norm(tgrad, mesh, check_divergence=check_divergence, threshold=threshold)


def _row_sparse_max(rows):
    """Sparse table for range maxima along axis 0."""
    table = [rows]
    span = 1
    while 2 * span <= rows.shape[0]:
        prev = table[-1]
        table.append(np.maximum(prev[:-span], prev[span:]))
        span *= 2
    return table


def _range_max(table, a, b):
    # maximum over rows a..b inclusive
    p = int(np.floor(np.log2(b - a + 1)))
    return np.maximum(table[p][a], table[p][b - 2**p + 1])


def linfty_on_cells(A, mesh):
    """Entrywise half-range of ``A`` over each Whitney box, maximised over entries.

    This is the distance, in the max-entry norm, from ``A`` to the best
    constant matrix on the box (the entrywise midpoint of min and max).
    Samples are the same sub-grid Gauss points as for ``f_L``.
    """
    n, N = mesh.n, mesh.N
    ref = _reference(A)
    nn = n * n
    hi_rows, lo_rows = [], []
    for vals, _ in _subgrid_rows(A, mesh):
        d = (vals - ref).reshape(vals.shape[:-2] + (nn,))
        hi_rows.append(d.max(axis=-2))
        lo_rows.append(d.min(axis=-2))
    hi_t = _row_sparse_max(np.stack(hi_rows))
    lo_t = _row_sparse_max(-np.stack(lo_rows))
    out = np.empty(mesh.cell_shape)
    sl = (slice(1, None, 2),) * (n - 1)
    for k in range(N):
        hi = _range_max(hi_t, 2 * k + 1, 4 * k + 1)
        lo = _range_max(lo_t, 2 * k + 1, 4 * k + 1)
        hi = node_ball_max(hi, 4 * k + 2, n - 1)
        lo = node_ball_max(lo, 4 * k + 2, n - 1)
        out[..., k] = (0.5 * (hi + lo)).max(axis=-1)[sl]
    return np.maximum(out, 0.0)


def linfty_whitney_norm(A, mesh, check_divergence=True, threshold=DIVERGENCE_THRESHOLD):
    """Carleson norm of the L-infinity Whitney oscillation of ``A``."""
    vals = linfty_on_cells(A, mesh)
    report = cm_norm(vals, mesh)
    if check_divergence:
        coarse, fine = _refined(mesh)
        other = cm_norm(linfty_on_cells(A, fine if coarse is mesh else coarse),
                        fine if coarse is mesh else coarse)
        c, f = ((report.max_average, other.max_average) if coarse is mesh
                else (other.max_average, report.max_average))
        report.diverging = bool(_grows(c, f, threshold))
    return report


def _on_cells(v, mesh):
    if callable(v):
        x, t = mesh.cell_centers()
        return np.asarray(v(x, t), dtype=float)
    return np.asarray(v, dtype=float)


def carleson_embedding_check(a, f, g, mesh, M=None):
    """Both sides of the Carleson embedding ``int |a f g| dx dt/t <= M int N(f) A(g) dx``.

    ``a``, ``f``, ``g`` are scalar callables or cell arrays.  ``M`` defaults
    to ``cm_norm(a)``.  Returns a dict with ``lhs``, ``rhs``, ``M`` and
    ``ratio`` (0 when both sides vanish).
    """
    from .functionals import area_square, ntmax

    av, fv, gv = (_on_cells(v, mesh) for v in (a, f, g))
    if M is None:
        M = cm_norm(av, mesh).norm
    lhs = float(np.sum(np.abs(av * fv * gv) * (mesh.h / mesh.tc)) * mesh.boundary_weight)
    Nf = ntmax(fv, mesh).values
    Ag = area_square(gv, mesh, kind="A").values
    rhs = float(M * np.sum(Nf * Ag) * mesh.boundary_weight)
    if rhs == 0.0:
        if lhs != 0.0:
            raise ArithmeticError("embedding right-hand side vanishes with nonzero left-hand side")
        ratio = 0.0
    else:
        ratio = lhs / rhs
    return {"lhs": lhs, "rhs": rhs, "M": float(M), "ratio": ratio}


def _coarse_pattern(rng, n, cols=8, layers=8):
    table = rng.uniform(-1.0, 1.0, (cols,) * (n - 1) + (layers,))

    def pattern(x, t):
        idx = tuple(np.floor(np.mod(x[..., c], 1.0) * cols).astype(int) for c in range(n - 1))
        lev = np.clip(np.floor(-np.log2(t)).astype(int), 0, layers - 1)
        return table[idx + (lev,)]

    return pattern


def random_triple(seed, n=2):
    """A resolution-independent random triple ``(a, f, g)`` of scalar callables.

    ``a = t**beta (1 + pattern / 2)`` is a Carleson density; ``f`` is bounded;
    ``g = t**gamma (...)`` has a finite area functional.
    """
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.3, 1.0)
    gamma = rng.uniform(0.5, 1.5)
    pa, pf, pg = (_coarse_pattern(rng, n) for _ in range(3))
    kf = rng.integers(1, 4)
    ph = rng.uniform(0, 2 * np.pi, 2)

    def a(x, t):
        return t**beta * (1.0 + 0.5 * pa(x, t))

    def f(x, t):
        return np.cos(2 * np.pi * kf * x[..., 0] + ph[0]) * np.exp(-t) + 0.5 * pf(x, t)

    def g(x, t):
        return t**gamma * (np.sin(2 * np.pi * x[..., 0] + ph[1]) + pg(x, t))

    return a, f, g


def embedding_corpus(mesh, trials=100, seed=0):
    """Run the embedding check on ``trials`` random triples; return ratios and the max."""
    ratios = []
    for k in range(trials):
        a, f, g = random_triple(seed * 100003 + k, mesh.n)
        ratios.append(carleson_embedding_check(a, f, g, mesh)["ratio"])
    ratios = np.array(ratios)
    return {"ratios": ratios, "max_ratio": float(ratios.max()), "J": mesh.J, "trials": trials}
