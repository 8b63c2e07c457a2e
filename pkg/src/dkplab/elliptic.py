"""Bilinear/trilinear finite elements for divergence-form operators.

The strip ``T^{n-1} x [0, 1]`` is discretised by Q1 elements on the mesh
nodes, periodic in ``x``.  Dirichlet values are imposed at ``t = 0`` (the
data) and at ``t = 1`` (by default the mean of the data, which is where the
non-constant modes of a periodic harmonic extension have decayed to
``exp(-2 pi)``).  Element integrals use the tensor 2-point Gauss rule.
"""
import threading
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._quad import gauss_legendre
from .errors import ConfigurationError, ConvergenceError
from .fields import MatrixField

__all__ = [
    "DiscreteSolution",
    "FourierExtension",
    "solve_dirichlet",
    "solve_inhomogeneous",
    "laplace_fourier_oracle",
    "solve_weighted",
    "convergence_test",
    "strip_problem",
    "manufactured_problem",
    "l2_error",
    "h1_error",
    "boundary_samples",
    "max_principle_violation",
    "RTOL",
    "MAXITER",
    "DMP_TOL",
]

RTOL = 1e-10
DMP_TOL = 1e-8
MAXITER = 10_000


class _Q1Grid:
    """Tensor grid, periodic in all axes but the last."""

    def __init__(self, ncells, spacing, origin):
        self.ncells = tuple(int(c) for c in ncells)
        self.spacing = np.asarray(spacing, dtype=float)
        self.origin = np.asarray(origin, dtype=float)
        self.dim = len(self.ncells)
        self.node_shape = self.ncells[:-1] + (self.ncells[-1] + 1,)
        self.corners = np.array(list(product((0, 1), repeat=self.dim)))

    @property
    def num_nodes(self):
        return int(np.prod(self.node_shape))

    def cell_nodes(self):
        idx = np.indices(self.ncells).reshape(self.dim, -1).T  # (C, dim)
        ids = []
        for a in self.corners:
            nd = idx + a
            for d in range(self.dim - 1):
                nd[:, d] %= self.ncells[d]
            ids.append(np.ravel_multi_index(nd.T, self.node_shape))
        return np.stack(ids, axis=1)

    def reference(self, q=2):
        g, w = gauss_legendre(q, 0.0, 1.0)
        pts = np.array(list(product(g, repeat=self.dim)))
        wts = np.prod(np.array(list(product(w, repeat=self.dim))), axis=1)
        a = self.corners
        lin = np.where(a[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])  # (ng, 2^d, d)
        phi = np.prod(lin, axis=-1)
        grad = np.empty(phi.shape + (self.dim,))
        for d in range(self.dim):
            others = np.prod(np.delete(lin, d, axis=-1), axis=-1)
            grad[..., d] = np.where(a[None, :, d] == 1, 1.0, -1.0) * others / self.spacing[d]
        return pts, wts * np.prod(self.spacing), phi, grad

    def points(self, pts):
        """Physical coordinates of reference points in every cell: ``(C, ng, dim)``."""
        idx = np.indices(self.ncells).reshape(self.dim, -1).T
        return self.origin + (idx[:, None, :] + pts[None, :, :]) * self.spacing


def _assemble(grid, coeff, vec_load=None, scalar_load=None, q=2):
    """Stiffness matrix and load vector.

    ``coeff(P)`` maps physical points ``(C, ng, dim)`` to matrices
    ``(C, ng, dim, dim)`` (already including any weight).  ``vec_load(P)``
    returns ``(C, ng, dim)`` for ``int H . grad phi``; ``scalar_load(P)``
    returns ``(C, ng)`` for ``int F phi``.
    """
    pts, wts, phi, grad = grid.reference(q)
    P = grid.points(pts)
    cn = grid.cell_nodes()
    M = coeff(P)
    Ke = np.einsum("g,gai,cgij,gbj->cab", wts, grad, M, grad, optimize=True)
    rows = np.repeat(cn, cn.shape[1], axis=1).ravel()
    cols = np.tile(cn, (1, cn.shape[1])).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(grid.num_nodes,) * 2).tocsr()
    b = np.zeros(grid.num_nodes)
    if vec_load is not None:
        H = vec_load(P)
        be = np.einsum("g,gai,cgi->ca", wts, grad, H)
        np.add.at(b, cn.ravel(), be.ravel())
    if scalar_load is not None:
        F = scalar_load(P)
        be = np.einsum("g,ga,cg->ca", wts, phi, F)
        np.add.at(b, cn.ravel(), be.ravel())
    return K, b


_AMG_LOCK = threading.Lock()


def _amg_preconditioner(K):
    # pyamg draws its spectral-radius start vector from the global numpy RNG;
    # pin it so repeated solves are bit-identical, and leave the caller's state alone
    with _AMG_LOCK:
        state = np.random.get_state()
        try:
            np.random.seed(0)
            ml = pyamg.smoothed_aggregation_solver(K, symmetry="symmetric", max_coarse=50)
        finally:
            np.random.set_state(state)
    return ml.aspreconditioner()


def _krylov(K, b, symmetric):
    history = []
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b), 0, [0.0]

    def record(xk):
        history.append(float(np.linalg.norm(b - K @ xk) / nb))

    if symmetric:
        x, info = spla.cg(K, b, rtol=RTOL, atol=0.0, maxiter=MAXITER, M=_amg_preconditioner(K), callback=record)
    else:
        ilu = spla.spilu(K.tocsc(), drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(K.shape, ilu.solve)
        x, info = spla.bicgstab(K, b, rtol=RTOL, atol=0.0, maxiter=MAXITER, M=M, callback=record)
    res = float(np.linalg.norm(b - K @ x) / nb)
    if info != 0 or res > 10 * RTOL:
        # one polishing pass from the current iterate before giving up
        if symmetric:
            x, info = spla.cg(K, b, x0=x, rtol=RTOL, atol=0.0, maxiter=MAXITER, callback=record)
        else:
            x, info = spla.gmres(K, b, x0=x, rtol=RTOL, atol=0.0, restart=200, maxiter=MAXITER // 200 + 1,
                                 M=M, callback=record, callback_type="x")
        res = float(np.linalg.norm(b - K @ x) / nb)
        if info != 0 or res > 10 * RTOL:
            raise ConvergenceError(f"linear solver stopped at relative residual {res:.3e}", history)
    return x, len(history), history + [res]


@dataclass
class DiscreteSolution:
    """Nodal Q1 solution on a tensor grid.

    ``nodal`` has the grid's node shape; for the half-space mesh this is
    ``mesh.node_shape`` with ``t`` last.
    """

    mesh: object
    nodal: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    stiffness: object = field(default=None, repr=False)
    load: np.ndarray = field(default=None, repr=False)
    energy: float = 0.0
    info: dict = field(default_factory=dict)

    def _corners(self):
        u = self.nodal
        dim = u.ndim
        shifted = {}
        for a in product((0, 1), repeat=dim):
            v = u
            for d in range(dim - 1):
                if a[d]:
                    v = np.roll(v, -1, axis=d)
            v = v[..., 1:] if a[-1] else v[..., :-1]
            shifted[a] = v
        return shifted

    def cell_values(self):
        """Multilinear interpolant at cell centres."""
        c = self._corners()
        return sum(c.values()) / len(c)

    def cell_gradients(self):
        """Gradient of the interpolant at cell centres, shape ``cell_shape + (n,)``."""
        c = self._corners()
        dim = self.nodal.ndim
        h = self.mesh.h
        out = []
        for d in range(dim):
            acc = 0.0
            for a, v in c.items():
                acc = acc + (v if a[d] else -v)
            out.append(acc / (2 ** (dim - 1) * h))
        return np.stack(out, axis=-1)

    def evaluate(self, x, t):
        """Multilinear interpolation at arbitrary points of the strip (periodic in ``x``)."""
        return _interp(self.nodal, self.mesh.h, x, t)[0]

    def gradient(self, x, t):
        return _interp(self.nodal, self.mesh.h, x, t)[1]

    def weak_residuals(self):
        """``(K u)_a`` at all interior nodes; zero for an exact discrete solution."""
        r = self.stiffness @ self.nodal.ravel() - self.load
        r = r.reshape(self.nodal.shape)[..., 1:-1]
        return r

    def trace(self):
        return self.nodal[..., 0]

    def summary(self):
        return {"residual": self.residual, "iterations": self.iterations, "energy": self.energy, **self.info}


def _interp(nodal, h, x, t):
    dim = nodal.ndim
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if dim == 2 and x.shape == t.shape:
        x = x[..., None]
    N = nodal.shape[0]
    K = nodal.shape[-1] - 1
    coords = [np.mod(x[..., d], 1.0) / h for d in range(dim - 1)] + [np.clip(t / h, 0.0, K)]
    base = [np.minimum(np.floor(c).astype(int), (N - 1) if d < dim - 1 else K - 1) for d, c in enumerate(coords)]
    frac = [c - b for c, b in zip(coords, base)]
    val = 0.0
    grad = [0.0] * dim
    for a in product((0, 1), repeat=dim):
        idx = tuple(((base[d] + a[d]) % N) if d < dim - 1 else base[d] + a[d] for d in range(dim))
        v = nodal[idx]
        ws = [frac[d] if a[d] else 1.0 - frac[d] for d in range(dim)]
        val = val + v * np.prod(ws, axis=0)
        for d in range(dim):
            others = np.prod([ws[e] for e in range(dim) if e != d], axis=0) if dim > 1 else 1.0
            grad[d] = grad[d] + v * (1.0 if a[d] else -1.0) * others / h
    return val, np.stack(grad, axis=-1)


def _grid(mesh):
    n = mesh.n
    return _Q1Grid((mesh.N,) * n, (mesh.h,) * n, (0.0,) * n)


def _coeff_fn(A, transpose=False):
    def coeff(P):
        M = A(P[..., :-1], P[..., -1])
        return np.swapaxes(M, -1, -2) if transpose else M
    return coeff


def boundary_samples(f, mesh):
    """Boundary data at the ``t = 0`` nodes, shape ``mesh.col_shape``."""
    if callable(f):
        X = mesh.boundary_nodes()
        vals = f(X[..., 0]) if mesh.n == 2 else f(X)
        vals = np.asarray(vals, dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    if vals.shape != mesh.col_shape:
        raise ConfigurationError(f"boundary data must have shape {mesh.col_shape}, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("boundary data must be finite")
    return vals


def _is_symmetric(K):
    d = abs(K - K.T)
    return d.max() <= 1e-13 * abs(K).max() if d.nnz else True


def _solve_system(grid, K, b, bottom, top):
    shape = grid.node_shape
    fixed = np.zeros(shape, dtype=bool)
    fixed[..., 0] = True
    fixed[..., -1] = True
    u = np.zeros(shape)
    u[..., 0] = bottom
    u[..., -1] = top
    fid = fixed.ravel()
    free = ~fid
    uf = u.ravel()
    rhs = b[free] - K[free][:, fid] @ uf[fid]
    Kff = K[free][:, free].tocsr()
    sym = _is_symmetric(Kff)
    x, its, hist = _krylov(Kff, rhs, sym)
    uf = uf.copy()
    uf[free] = x
    return uf.reshape(shape), its, hist, sym


def _finish(mesh, grid, K, b, u, its, hist, sym, info=None):
    flat = u.ravel()
    sol = DiscreteSolution(mesh, u, residual=hist[-1], iterations=its, history=hist, stiffness=K, load=b,
                           energy=float(flat @ (K @ flat)), info=dict(info or {}))
    sol.info["symmetric"] = bool(sym)
    return sol


def solve_dirichlet(A, f, mesh, top=None, source=None):
    """Solve ``-div(A grad u) = source`` with ``u = f`` at ``t = 0``.

    Parameters
    ----------
    A : MatrixField
    f : array or callable
        Boundary values at the ``t = 0`` nodes, or a function of ``x``.
    mesh : HalfSpaceMesh
    top : float, array or callable, optional
        Values at ``t = 1``; defaults to ``mean(f)``.
    source : callable, optional
        Scalar right-hand side ``F(x, t)``.

    Returns
    -------
    DiscreteSolution
    """
    if A.n != mesh.n:
        raise ConfigurationError("field and mesh dimensions differ")
    fb = boundary_samples(f, mesh)
    if top is None:
        tv = np.full(mesh.col_shape, fb.mean())
    elif np.isscalar(top):
        tv = np.full(mesh.col_shape, float(top))
    else:
        tv = boundary_samples(top, mesh)
    grid = _grid(mesh)
    load = None
    if source is not None:
        load = lambda P: source(P[..., :-1], P[..., -1])
    K, b = _assemble(grid, _coeff_fn(A), scalar_load=load)
    u, its, hist, sym = _solve_system(grid, K, b, fb, tv)
    info = {"kind": "dirichlet"}
    if source is None:
        info["max_principle_violation"] = max_principle_violation(u)
    return _finish(mesh, grid, K, b, u, its, hist, sym, info)


def max_principle_violation(nodal):
    """How far interior values leave ``[min, max]`` of the Dirichlet values (0 when inside).

    Q1 elements with strong off-diagonal coefficients need not satisfy a
    discrete maximum principle, so this is reported, never enforced;
    values above ``DMP_TOL`` are worth a look.
    """
    fixed = np.concatenate([nodal[..., 0].ravel(), nodal[..., -1].ravel()])
    inner = nodal[..., 1:-1]
    return float(max(0.0, inner.max() - fixed.max(), fixed.min() - inner.min()))


def solve_inhomogeneous(A, H, mesh, adjoint=False):
    """Solve ``-div(A grad v) = -div H`` with zero values at ``t = 0`` and ``t = 1``.

    The weak form is ``int A grad v . grad phi = int H . grad phi`` for all
    interior test functions; ``adjoint`` uses the transpose of ``A``.
    ``H`` is a callable ``(x, t) -> (..., n)`` or cell-constant samples of
    shape ``mesh.cell_shape + (n,)``.
    """
    if A.n != mesh.n:
        raise ConfigurationError("field and mesh dimensions differ")
    grid = _grid(mesh)
    if callable(H):
        vec = lambda P: np.asarray(H(P[..., :-1], P[..., -1]), dtype=float)
    else:
        Hc = np.asarray(H, dtype=float)
        if Hc.shape != mesh.cell_shape + (mesh.n,):
            raise ConfigurationError(f"source field must have shape {mesh.cell_shape + (mesh.n,)}")
        flat = Hc.reshape(-1, mesh.n)
        vec = lambda P: np.broadcast_to(flat[:, None, :], P.shape)
    K, b = _assemble(grid, _coeff_fn(A, transpose=adjoint), vec_load=vec)
    zero = np.zeros(mesh.col_shape)
    u, its, hist, sym = _solve_system(grid, K, b, zero, zero)
    return _finish(mesh, grid, K, b, u, its, hist, sym, {"kind": "inhomogeneous", "adjoint": bool(adjoint)})


class FourierExtension:
    """Harmonic extension of a trigonometric polynomial on the unit circle.

    ``geometry="strip"`` solves on ``0 < t < 1`` with the top value equal to
    the mean; ``"halfplane"`` uses the Poisson semigroup ``exp(-2 pi |k| t)``.
    An optional ``anisotropy`` ``a`` replaces the vertical decay rate
    ``2 pi |k|`` by ``2 pi |k| a`` (the operator ``diag(a**2 c, c)``).
    """

    def __init__(self, samples, geometry="strip", anisotropy=1.0):
        if geometry not in ("strip", "halfplane"):
            raise ConfigurationError("geometry must be 'strip' or 'halfplane'")
        samples = np.asarray(samples, dtype=float)
        self.N = samples.size
        self.coef = np.fft.fft(samples) / self.N
        self.k = np.fft.fftfreq(self.N, 1.0 / self.N)
        if self.N % 2 == 0:
            # split the Nyquist mode symmetrically so the interpolant is real
            self.coef = np.append(self.coef, 0.0)
            self.k = np.append(self.k, self.N // 2)
            nyq = self.coef[self.N // 2]
            self.coef[self.N // 2] = 0.5 * nyq
            self.coef[-1] = 0.5 * nyq
            self.k[self.N // 2] = -self.N // 2
        self.geometry = geometry
        self.rate = 2 * np.pi * np.abs(self.k) * anisotropy

    def _profile(self, t):
        a = self.rate
        t = np.asarray(t, dtype=float)[..., None]
        if self.geometry == "halfplane":
            e = np.exp(-a * t)
            return e, -a * e
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            e = np.exp(-a * t)
            q = np.exp(-2 * a * (1 - t))
            d = 1.0 - np.exp(-2 * a)
            g = np.where(a > 0, e * (1 - q) / np.where(a > 0, d, 1.0), 1.0)
            dg = np.where(a > 0, -a * e * (1 + q) / np.where(a > 0, d, 1.0), 0.0)
        return g, dg

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        g, _ = self._profile(t)
        ph = np.exp(2j * np.pi * x[..., None] * self.k)
        return np.real(np.sum(self.coef * g * ph, axis=-1))

    def gradient(self, x, t):
        x = np.asarray(x, dtype=float)
        g, dg = self._profile(t)
        ph = np.exp(2j * np.pi * x[..., None] * self.k)
        ux = np.real(np.sum(self.coef * g * ph * (2j * np.pi * self.k), axis=-1))
        ut = np.real(np.sum(self.coef * dg * ph, axis=-1))
        return np.stack([ux, ut], axis=-1)

    def boundary_gradient(self, x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(2j * np.pi * x[..., None] * self.k)
        return np.real(np.sum(self.coef * ph * (2j * np.pi * self.k), axis=-1))


def laplace_fourier_oracle(f, mesh, geometry="strip"):
    """Spectral harmonic extension of the boundary samples, on the mesh nodes.

    Returns a :class:`DiscreteSolution` whose ``info["oracle"]`` is the
    underlying :class:`FourierExtension` (evaluable anywhere).
    """
    if mesh.n != 2:
        raise ConfigurationError("the Fourier oracle is implemented for n = 2")
    fb = boundary_samples(f, mesh)
    ext = FourierExtension(fb, geometry)
    X, T = np.meshgrid(mesh.xn, mesh.tn, indexing="ij")
    return DiscreteSolution(mesh, ext(X, T), info={"kind": "oracle", "geometry": geometry, "oracle": ext})


def _cell_gauss(mesh, q=3):
    grid = _grid(mesh)
    pts, wts, _, _ = grid.reference(q)
    return grid.points(pts), wts


def l2_error(sol, exact, q=3):
    """``L^2`` norm of ``u_h - exact`` on the strip by ``q``-point Gauss per cell."""
    P, w = _cell_gauss(sol.mesh, q)
    x, t = P[..., :-1], P[..., -1]
    xe = x[..., 0] if sol.mesh.n == 2 else x
    diff = sol.evaluate(x, t) - exact(xe, t)
    return float(np.sqrt(np.sum(w * diff**2)))


def h1_error(sol, exact_grad, q=3):
    """``H^1`` seminorm of ``u_h - exact``; ``exact_grad`` returns ``(..., n)``."""
    P, w = _cell_gauss(sol.mesh, q)
    x, t = P[..., :-1], P[..., -1]
    xe = x[..., 0] if sol.mesh.n == 2 else x
    diff = sol.gradient(x, t) - exact_grad(xe, t)
    return float(np.sqrt(np.sum(w[:, None] * diff**2)))


@dataclass
class _Problem:
    name: str
    solve: object
    exact: object
    exact_grad: object


def strip_problem(A=None, k=1, n=2):
    """``A`` (default identity) with data ``cos(2 pi k x)`` against the strip oracle.

    For diagonal constant ``A`` the oracle uses the decay rate
    ``2 pi k sqrt(A_11 / A_22)``.
    """
    from .fields import constant

    A = constant(np.eye(n)) if A is None else A
    M = A(np.zeros(n - 1), 0.5)
    aniso = float(np.sqrt(M[0, 0] / M[-1, -1]))
    from .mesh import build_mesh

    def data(x):
        return np.cos(2 * np.pi * k * x)

    # analytic strip profile sinh(a(1 - t)) / sinh(a)
    a = 2 * np.pi * k * aniso

    def exact(x, t):
        return np.sinh(a * (1 - t)) / np.sinh(a) * np.cos(2 * np.pi * k * x)

    def exact_grad(x, t):
        g = np.sinh(a * (1 - t)) / np.sinh(a)
        dg = -a * np.cosh(a * (1 - t)) / np.sinh(a)
        return np.stack([-2 * np.pi * k * g * np.sin(2 * np.pi * k * x), dg * np.cos(2 * np.pi * k * x)], -1)

    def solve(J):
        return solve_dirichlet(A, data, build_mesh(n, J))

    return _Problem(f"strip-k{k}", solve, exact, exact_grad)


def manufactured_problem(A):
    """Method of manufactured solutions for a 2-d field with analytic gradient.

    The exact solution is ``u = sin(2 pi x) cos(pi t / 2) + t``; the source
    is ``-div(A grad u)`` from the product rule.
    """
    from .mesh import build_mesh

    if A.n != 2:
        raise ConfigurationError("manufactured problem is two-dimensional")
    w = 2 * np.pi
    c = np.pi / 2

    def exact(x, t):
        return np.sin(w * x) * np.cos(c * t) + t

    def exact_grad(x, t):
        return np.stack([w * np.cos(w * x) * np.cos(c * t), -c * np.sin(w * x) * np.sin(c * t) + 1.0], -1)

    def hess(x, t):
        uxx = -w * w * np.sin(w * x) * np.cos(c * t)
        uxt = -w * c * np.cos(w * x) * np.sin(c * t)
        utt = -c * c * np.sin(w * x) * np.cos(c * t)
        return np.stack([np.stack([uxx, uxt], -1), np.stack([uxt, utt], -1)], -2)

    def source(x, t):
        xs = x[..., 0]
        M = A(x, t)
        G = A.gradient(x, t)  # G[..., i, j, k] = d_k A_ij
        g = exact_grad(xs, t)
        divA = np.einsum("...iji->...j", G)  # sum_i d_i A_ij
        return -(np.einsum("...j,...j->...", divA, g) + np.einsum("...ij,...ij->...", M, hess(xs, t)))

    def solve(J):
        mesh = build_mesh(2, J)
        return solve_dirichlet(A, lambda x: exact(x, 0.0), mesh, top=lambda x: exact(x, 1.0), source=source)

    return _Problem("manufactured", solve, exact, exact_grad)


def convergence_test(problem, Js=(4, 5, 6, 7)):
    """Errors and least-squares convergence rates in ``L^2`` and ``H^1``."""
    Js = list(Js)
    l2, h1 = [], []
    for J in Js:
        sol = problem.solve(J)
        l2.append(l2_error(sol, problem.exact))
        h1.append(h1_error(sol, problem.exact_grad))
    hs = np.log(2.0 ** -np.array(Js, dtype=float))

    def slope(e):
        e = np.asarray(e)
        if np.all(e < 1e-13):
            return float("nan")
        return float(np.polyfit(hs, np.log(e), 1)[0])

    return {"problem": problem.name, "J": Js, "l2": l2, "h1": h1, "l2_rate": slope(l2), "h1_rate": slope(h1)}


def solve_weighted(cyl, f=None, A=None, H=None, d=1):
    """Solve ``-div(|t|**(d+1-n) A grad u) = -div H`` on the cylindrical mesh.

    Coordinates are ``x`` along the line and ``t`` in the transverse plane
    (``r = |t|``).  The trace ``f(x)`` is imposed on the ring ``r = h`` (the
    axis itself is excluded) and the mean of ``f`` on ``r = 1``.

    Parameters
    ----------
    cyl : CylMesh
    f : callable or array, optional
        Trace as a function of ``x`` (or of ``(x, theta)``), or samples of
        shape ``(N,)`` / ``(N, n_theta)``.  Defaults to zero.
    A : callable, optional
        ``A(x, tvec)`` returning ``(..., 3, 3)`` in Cartesian
        ``(x, t_2, t_3)`` components; identity by default.
    H : callable, optional
        ``H(x, tvec)`` returning Cartesian ``(..., 3)`` vectors.
    """
    if d != cyl.d:
        raise ConfigurationError("weight exponent does not match the mesh")
    N, M = cyl.N, cyl.n_theta
    grid = _Q1Grid((N, M, N - 1), (cyl.h, 2 * np.pi / M, cyl.h), (0.0, 0.0, cyl.h))
    expo = cyl.d + 1 - cyl.n

    def frame(P):
        th, r = P[..., 1], P[..., 2]
        c, s = np.cos(th), np.sin(th)
        Q = np.zeros(P.shape[:-1] + (3, 3))
        Q[..., 0, 0] = 1.0
        Q[..., 1, 1], Q[..., 2, 1] = -s, c  # e_theta
        Q[..., 1, 2], Q[..., 2, 2] = c, s  # e_r
        tvec = np.stack([r * c, r * s], -1)
        return Q, tvec, r

    def coeff(P):
        Q, tvec, r = frame(P)
        if A is None:
            Ac = np.broadcast_to(np.eye(3), P.shape[:-1] + (3, 3))
        else:
            Ac = A(P[..., 0], tvec)
        D = np.ones(P.shape[:-1] + (3,))
        D[..., 1] = 1.0 / r
        Mc = np.einsum("...ki,...kl,...lj->...ij", Q, Ac, Q)
        # weight r**expo times the volume factor r
        return (r ** (expo + 1))[..., None, None] * D[..., :, None] * Mc * D[..., None, :]

    vec = None
    if H is not None:
        def vec(P):
            Q, tvec, r = frame(P)
            Hc = np.einsum("...ki,...k->...i", Q, H(P[..., 0], tvec))
            Hc[..., 1] /= r
            return (r ** (expo + 1))[..., None] * Hc

    K, b = _assemble(grid, coeff, vec_load=vec)
    if f is None:
        fb = np.zeros((N, M))
    elif callable(f):
        X, TH = np.meshgrid(cyl.xn, cyl.thn, indexing="ij")
        try:
            fb = np.asarray(f(X, TH), dtype=float)
        except TypeError:
            fb = np.asarray(f(X), dtype=float)
    else:
        fb = np.asarray(f, dtype=float)
        if fb.shape == (N,):
            fb = np.repeat(fb[:, None], M, axis=1)
    if fb.shape != (N, M):
        raise ConfigurationError(f"trace must have shape {(N, M)}")
    top = np.full((N, M), fb.mean())
    u, its, hist, sym = _solve_system(grid, K, b, fb, top)
    flat = u.ravel()
    return DiscreteSolution(cyl, u, residual=hist[-1], iterations=its, history=hist, stiffness=K, load=b,
                            energy=float(flat @ (K @ flat)), info={"kind": "weighted", "symmetric": bool(sym)})
