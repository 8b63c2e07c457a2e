"""Flattening change of variable built from the last row of a coefficient field.

With ``B`` written in blocks ``[[B_par, b], [v, h]]`` the map is

    rho(x, t) = (x + t v(x, t), t h(x, t)),

which fixes the boundary ``t = 0``.  Solutions of ``div(A grad u) = 0``
pull back to solutions of ``div(A_rho grad w) = 0`` with ``w = u o rho`` and

    A_rho = |det J| J^-1 A(rho) J^-T,    J = D rho.
"""
import numpy as np
from scipy.stats import qmc

from .carleson import cm_norm, dkp_norm, weak_dkp_norm
from .errors import ConvergenceError, NotApplicableError, NotInvertibleError, NumericalError
from .fields import MatrixField, as_points

__all__ = [
    "ChangeOfVariable",
    "ConjugatedField",
    "build_rho",
    "invert_rho",
    "conjugate",
    "structure_check",
    "sample_points",
    "NEWTON_TOL",
    "NEWTON_MAXITER",
    "INVERTIBILITY_SAMPLES",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
INVERTIBILITY_SAMPLES = 10_000


def sample_points(n, samples, seed=0, t_min=0.0):
    """Quasi-random points of the unit half-cylinder; ``t = 1 - u`` never reaches 0."""
    pts = qmc.Halton(d=n, scramble=True, seed=seed).random(samples)
    x = pts[:, : n - 1]
    t = t_min + (1.0 - t_min) * (1.0 - pts[:, -1])
    return x, t


class ChangeOfVariable:
    """The map ``rho`` with its Jacobian and sampled bi-Lipschitz constants.

    Parameters
    ----------
    B : MatrixField
        Field whose last row ``(v, h)`` drives the map.
    samples : int
        Number of quasi-random points for the invertibility certificate.
    seed : int
        Seed for the sample points.
    certify : bool
        Run the sampling certificate at construction.
    """

    def __init__(self, B, samples=INVERTIBILITY_SAMPLES, seed=0, certify=True):
        self.B = B
        self.n = B.n
        self.samples = int(samples)
        self.seed = seed
        self.invertible = None
        self.lipschitz = None
        self.inverse_lipschitz = None
        self.min_det = None
        if certify:
            self.certify()

    # blocks and map -----------------------------------------------------
    def blocks(self, x, t):
        """``(v, h)`` at the points, shapes ``(..., n-1)`` and ``(...)``."""
        row = self.B(x, t)[..., -1, :]
        return row[..., :-1], row[..., -1]

    def __call__(self, x, t):
        x, t = as_points(self.n, x, t)
        v, h = self.blocks(x, t)
        return x + t[..., None] * v, t * h

    def jacobian(self, x, t):
        """``J[..., i, k] = d rho_i / d z_k`` with ``z = (x, t)``."""
        x, t = as_points(self.n, x, t)
        n = self.n
        row = self.B(x, t)[..., -1, :]
        v, h = row[..., :-1], row[..., -1]
        if self.B.has_gradient:
            G = self.B.gradient(x, t)[..., -1, :, :]  # (..., n, n): d row_j / d z_k
        else:
            G = self._fd_row_gradient(x, t)
        J = np.empty(t.shape + (n, n))
        tt = t[..., None, None]
        J[..., : n - 1, : n - 1] = np.eye(n - 1) + tt * G[..., : n - 1, : n - 1]
        J[..., : n - 1, -1] = v + t[..., None] * G[..., : n - 1, -1]
        J[..., -1, : n - 1] = t[..., None] * G[..., -1, : n - 1]
        J[..., -1, -1] = h + t * G[..., -1, -1]
        return J

    def _fd_row_gradient(self, x, t):
        # central differences with step t/100, scale-aware near the boundary
        n = self.n
        step = t / 100.0
        G = np.empty(t.shape + (n, n))
        for k in range(n - 1):
            e = np.zeros(n - 1)
            e[k] = 1.0
            dx = step[..., None] * e
            G[..., :, k] = (self.B(x + dx, t)[..., -1, :] - self.B(x - dx, t)[..., -1, :]) / (2 * step[..., None])
        G[..., :, -1] = (self.B(x, t + step)[..., -1, :] - self.B(x, t - step)[..., -1, :]) / (2 * step[..., None])
        return G

    # certificate ----------------------------------------------------------
    def certify(self):
        """Check ``det J > 0`` on the sample set and record Lipschitz constants.

        Raises
        ------
        NotInvertibleError
            With the first sample point where ``det J <= 0``.
        """
        x, t = sample_points(self.n, self.samples, self.seed)
        J = self.jacobian(x, t)
        det = np.linalg.det(J)
        bad = np.flatnonzero(~(det > 0))
        if bad.size:
            i = bad[0]
            witness = tuple(float(c) for c in np.append(x[i], t[i]))
            self.invertible = False
            raise NotInvertibleError(f"det J = {det[i]:.3e} <= 0 at {witness}", witness)
        sv = np.linalg.svd(J, compute_uv=False)
        self.lipschitz = float(sv[:, 0].max())
        self.inverse_lipschitz = float((1.0 / sv[:, -1]).max())
        self.min_det = float(det.min())
        self.invertible = True
        return self

    @property
    def bilipschitz(self):
        """``max(sup |J|, sup |J^-1|)`` over the certificate samples."""
        if self.lipschitz is None:
            return None
        return max(self.lipschitz, self.inverse_lipschitz)

    def summary(self):
        return {"invertible": self.invertible, "samples": self.samples, "sup_J": self.lipschitz,
                "sup_J_inv": self.inverse_lipschitz, "bilipschitz": self.bilipschitz, "min_det": self.min_det}


def build_rho(B, samples=INVERTIBILITY_SAMPLES, seed=0):
    """Flattening map from the field ``B``; certified invertible by sampling."""
    return ChangeOfVariable(B, samples=samples, seed=seed)


def invert_rho(rho, X, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Solve ``rho(Y) = X`` for ``Y`` by damped Newton iteration.

    ``X`` is ``(x, t)`` with ``x`` of shape ``(..., n-1)`` (or matching ``t``
    when ``n = 2``).  The step is halved while the residual grows.

    Raises
    ------
    ConvergenceError
        When some point has not reached ``|rho(Y) - X| <= tol``.
    """
    n = rho.n
    xX, tX = as_points(n, *X)
    shape = tX.shape
    target = np.concatenate([xX.reshape(-1, n - 1), tX.reshape(-1, 1)], axis=1)
    _, h0 = rho.blocks(xX.reshape(-1, n - 1), tX.reshape(-1))
    Y = np.concatenate([xX.reshape(-1, n - 1), (tX.reshape(-1) / h0)[:, None]], axis=1)

    def residual(Y, target):
        px, pt = rho(Y[:, :-1], Y[:, -1])
        return np.concatenate([px, pt[:, None]], axis=1) - target

    R = residual(Y, target)
    norms = np.linalg.norm(R, axis=1)
    history = [float(norms.max())]
    for _ in range(maxiter):
        active = np.flatnonzero(norms > tol)
        if not active.size:
            break
        Ya, Ra, old = Y[active], R[active], norms[active]
        J = rho.jacobian(Ya[:, :-1], Ya[:, -1])
        step = np.linalg.solve(J, Ra[..., None])[..., 0]
        lam = np.ones(active.size)
        for _ in range(30):
            trial = Ya - lam[:, None] * step
            # stay in the open half-space
            trial[:, -1] = np.maximum(trial[:, -1], 0.25 * Ya[:, -1])
            Rt = residual(trial, target[active])
            nt = np.linalg.norm(Rt, axis=1)
            worse = nt > old
            if not worse.any():
                break
            lam = np.where(worse, 0.5 * lam, lam)
        Y[active], R[active], norms[active] = trial, Rt, nt
        history.append(float(norms.max()))
    if norms.max() > tol:
        raise ConvergenceError(f"Newton inversion stalled at residual {norms.max():.2e}", history)
    x = Y[:, :-1].reshape(shape + (n - 1,))
    t = Y[:, -1].reshape(shape)
    return (x[..., 0] if xX.shape[-1] == 1 and np.shape(X[0]) == shape else x), t


class ConjugatedField(MatrixField):
    """``A_rho`` as an evaluable field.

    ``diagnostics`` is filled by :func:`structure_check`.
    """

    def __init__(self, A, rho):
        self.A = A
        self.rho = rho
        self.diagnostics = {}
        lam = bound = None
        if A.lam is not None and rho.bilipschitz is not None:
            lam = A.lam / rho.bilipschitz**2
        super().__init__(A.n, self._value_impl, None, lam, bound, name=f"conjugate({A.name})",
                         params={"A": A.name, "B": rho.B.name}, differentiable=A.differentiable)

    def _value_impl(self, x, t):
        J = self.rho.jacobian(x, t)
        det = np.linalg.det(J)
        if np.any(det == 0) or not np.all(np.isfinite(det)):
            raise NumericalError("singular Jacobian in the pullback")
        px, pt = self.rho(x, t)
        Jinv = np.linalg.inv(J)
        return np.abs(det)[..., None, None] * Jinv @ self.A(px, pt) @ np.swapaxes(Jinv, -1, -2)


def conjugate(A, rho):
    """Pull ``A`` back by ``rho``: ``A_rho = |det J| J^-1 A(rho) J^-T``."""
    if rho.invertible is None:
        rho.certify()
    if not rho.invertible:
        raise NotInvertibleError("the map is not certified invertible", None)
    return ConjugatedField(A, rho)


def structure_check(A_rho, mesh, include_blocks=True):
    """Diagnostics of how close ``A_rho`` is to a last row ``(0, ..., 0, 1)``.

    Returns the Carleson norm of ``|last row - e_n|`` and, when requested,
    the weak and strong Carleson norms of the upper blocks of ``A_rho``
    after an initial split.  Purely diagnostic.
    """
    from .smoothing import initial_split

    x, t = mesh.cell_centers()
    M = A_rho(x, t)
    e_n = np.zeros(mesh.n)
    e_n[-1] = 1.0
    dev = np.linalg.norm(M[..., -1, :] - e_n, axis=-1)
    report = cm_norm(dev, mesh)
    out = {"last_row_cm": report.norm, "last_row_sup": float(dev.max()),
           "last_row_argmax_tent": report.argmax_tent}
    if include_blocks:
        n = mesh.n
        upper = MatrixField(n, lambda xx, tt: _upper(A_rho(xx, tt)), name=f"upper({A_rho.name})")
        out["upper_weak_dkp"] = weak_dkp_norm(upper, mesh, check_divergence=False).norm
        B1, _ = initial_split(upper)
        try:
            out["upper_dkp_after_split"] = dkp_norm(B1, mesh, check_divergence=False).norm
        except NotApplicableError:
            out["upper_dkp_after_split"] = None
    if isinstance(A_rho, ConjugatedField):
        A_rho.diagnostics.update(out)
    return out


def _upper(M):
    out = np.array(M, copy=True)
    out[..., -1, :] = 0.0
    out[..., -1, -1] = 1.0
    return out
