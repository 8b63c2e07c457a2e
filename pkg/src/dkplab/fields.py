"""Coefficient fields ``A(x, t)`` evaluable anywhere in the upper half-space.

A :class:`MatrixField` wraps a vectorised evaluator.  Points are passed as
``x`` with shape ``(..., n - 1)`` and ``t`` with shape ``(...)``; for
``n = 2`` a bare ``x`` of the same shape as ``t`` is accepted too.  Values
come back with shape ``(..., n, n)`` and gradients with shape
``(..., n, n, n)``, the last axis running over ``x_1, ..., x_{n-1}, t``.

All presets are 1-periodic in every tangential variable.
"""
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, FieldError, NotApplicableError

__all__ = [
    "MatrixField",
    "BlockView",
    "WhitneyBoxes",
    "constant",
    "dkp_smooth",
    "log_oscillation",
    "whitney_piecewise",
    "carleson_bump",
    "make_preset",
    "PRESETS",
    "check_ellipticity",
    "block_split",
    "TOL_ELLIP",
]

TOL_ELLIP = 1e-8


def as_points(n, x, t):
    """Broadcast ``(x, t)`` to arrays of shapes ``(..., n - 1)`` and ``(...)``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if n == 2 and x.shape == t.shape:
        x = x[..., None]
    if x.shape[-1:] != (n - 1,):
        raise ConfigurationError(f"x must have trailing dimension {n - 1}, got shape {x.shape}")
    shape = np.broadcast_shapes(x.shape[:-1], t.shape)
    return np.broadcast_to(x, shape + (n - 1,)), np.broadcast_to(t, shape)


class MatrixField:
    """An ``n x n`` matrix-valued function of ``(x, t)``.

    Parameters
    ----------
    n : int
        Ambient dimension.
    value : callable
        ``value(x, t)`` with ``x`` of shape ``(..., n-1)`` and ``t`` of shape
        ``(...)`` returning ``(..., n, n)``.
    grad : callable, optional
        Analytic gradient with the same calling convention, returning
        ``(..., n, n, n)``.
    lam, bound : float, optional
        Declared ellipticity and boundedness constants.  ``None`` for fields
        that are perturbations rather than coefficient matrices.
    name : str
        Preset name.
    params : dict
        Preset parameters, kept for reports.
    differentiable : bool
        Whether finite-difference gradients are meaningful when ``grad`` is
        missing.
    """

    def __init__(self, n, value, grad=None, lam=None, bound=None, name="custom", params=None,
                 differentiable=True):
        if n not in (2, 3):
            raise ConfigurationError(f"dimension n must be 2 or 3, got {n}")
        self.n = n
        self._value = value
        self._grad = grad
        self.lam = lam
        self.bound = bound
        self.name = name
        self.params = dict(params or {})
        self.differentiable = differentiable
        self.piecewise = None

    def __repr__(self):
        return f"MatrixField(n={self.n}, name={self.name!r}, params={self.params})"

    def __call__(self, x, t):
        x, t = as_points(self.n, x, t)
        return self._value(x, t)

    @property
    def has_gradient(self):
        return self._grad is not None

    def gradient(self, x, t, step=None):
        """Gradient tensor ``G[..., i, j, k] = d A_ij / d z_k``.

        Falls back to central differences with the given ``step`` (default
        ``1e-5``, capped at ``t / 2`` in the vertical direction) when no
        analytic gradient is available.
        """
        x, t = as_points(self.n, x, t)
        if self._grad is not None:
            return self._grad(x, t)
        if not self.differentiable:
            raise NotApplicableError(f"field {self.name!r} is not differentiable")
        step = 1e-5 if step is None else float(step)
        out = np.empty(t.shape + (self.n, self.n, self.n))
        for k in range(self.n - 1):
            e = np.zeros(self.n - 1)
            e[k] = step
            out[..., k] = (self._value(x + e, t) - self._value(x - e, t)) / (2 * step)
        st = np.minimum(step, 0.5 * t)
        out[..., -1] = (self._value(x, t + st) - self._value(x, t - st)) / (2 * st)[..., None, None]
        return out

    def on_cells(self, mesh):
        """Values at all cell centres, shape ``mesh.cell_shape + (n, n)``."""
        x, t = mesh.cell_centers()
        return self(x, t)

    def _combine(self, other, op, name):
        if isinstance(other, MatrixField):
            if other.n != self.n:
                raise ConfigurationError("cannot combine fields of different dimension")
            value = lambda x, t: op(self._value(x, t), other._value(x, t))
            grad = None
            if self._grad is not None and other._grad is not None:
                grad = lambda x, t: op(self._grad(x, t), other._grad(x, t))
            return MatrixField(self.n, value, grad, name=name,
                               differentiable=self.differentiable and other.differentiable,
                               params={"left": self.name, "right": other.name})
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add, f"{self.name}+{getattr(other, 'name', '?')}")

    def __sub__(self, other):
        return self._combine(other, np.subtract, f"{self.name}-{getattr(other, 'name', '?')}")

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        c = float(c)
        grad = None if self._grad is None else (lambda x, t: c * self._grad(x, t))
        return MatrixField(self.n, lambda x, t: c * self._value(x, t), grad,
                           name=f"{c:g}*{self.name}", differentiable=self.differentiable)

    __rmul__ = __mul__

    def transpose(self):
        grad = None
        if self._grad is not None:
            grad = lambda x, t: np.swapaxes(self._grad(x, t), -3, -2)
        f = MatrixField(self.n, lambda x, t: np.swapaxes(self._value(x, t), -1, -2), grad,
                        self.lam, self.bound, f"{self.name}^T", self.params, self.differentiable)
        return f

    @property
    def T(self):
        return self.transpose()


def _const_grad(n):
    def grad(x, t):
        return np.zeros(t.shape + (n, n, n))
    return grad


def constant(A0=None, n=2):
    """Constant field; ``A0`` defaults to the identity."""
    A0 = np.eye(n) if A0 is None else np.array(A0, dtype=float)
    if A0.ndim != 2 or A0.shape[0] != A0.shape[1] or A0.shape[0] not in (2, 3):
        raise ConfigurationError(f"constant matrix must be 2x2 or 3x3, got shape {A0.shape}")
    n = A0.shape[0]
    lam = float(np.linalg.eigvalsh(0.5 * (A0 + A0.T)).min())
    bound = float(np.linalg.norm(A0, 2))

    def value(x, t):
        return np.broadcast_to(A0, t.shape + (n, n)).copy()

    return MatrixField(n, value, _const_grad(n), lam, bound, "constant", {"A0": A0.tolist()})


def _unit(n, E):
    if E is None:
        E = np.zeros((n, n))
        E[0, 0] = 1.0
    E = np.array(E, dtype=float)
    if E.shape != (n, n):
        raise ConfigurationError(f"direction matrix must have shape {(n, n)}")
    return E


def dkp_smooth(delta=0.1, ell=1.0, E=None, n=2):
    """``I + delta sin(2 pi x_1) exp(-t / ell) E``: a smooth field with ``t |grad A|`` Carleson."""
    if ell <= 0:
        raise ConfigurationError("ell must be positive")
    E = _unit(n, E)
    I = np.eye(n)
    w = 2 * np.pi
    sym = 0.5 * (E + E.T)
    lam = 1.0 - abs(delta) * float(np.abs(np.linalg.eigvalsh(sym)).max())
    bound = 1.0 + abs(delta) * float(np.linalg.norm(E, 2))

    def value(x, t):
        s = delta * np.sin(w * x[..., 0]) * np.exp(-t / ell)
        return I + s[..., None, None] * E

    def grad(x, t):
        e = np.exp(-t / ell)
        out = np.zeros(t.shape + (n, n, n))
        out[..., 0] = (delta * w * np.cos(w * x[..., 0]) * e)[..., None, None] * E
        out[..., -1] = (-delta / ell * np.sin(w * x[..., 0]) * e)[..., None, None] * E
        return out

    return MatrixField(n, value, grad, lam, bound, "dkp_smooth",
                       {"delta": delta, "ell": ell, "E": E.tolist()})


def log_oscillation(delta=0.1, n=2):
    """``I + delta sin(ln t) e_1 e_1^T``: ``t |grad A|`` bounded but not Carleson."""
    E = _unit(n, None)
    I = np.eye(n)

    def value(x, t):
        return I + (delta * np.sin(np.log(t)))[..., None, None] * E

    def grad(x, t):
        out = np.zeros(t.shape + (n, n, n))
        out[..., -1] = (delta * np.cos(np.log(t)) / t)[..., None, None] * E
        return out

    return MatrixField(n, value, grad, 1.0 - abs(delta), 1.0 + abs(delta), "log_oscillation",
                       {"delta": delta})


_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class WhitneyBoxes:
    """Dyadic Whitney boxes carrying i.i.d. uniform matrix entries.

    Level ``j`` covers ``t in [2**-j-1, 2**-j)``.  Boxes at level ``j`` have
    tangential side ``min(2**-j-1, 1)`` and entries uniform in
    ``[-a_j, a_j]`` with ``a_j = delta * decay**max(j, 0)``.
    """

    n: int
    delta: float
    seed: int
    decay: float

    @staticmethod
    def level(t):
        return np.floor(-np.log2(t)).astype(np.int64)

    @staticmethod
    def width(j):
        return np.minimum(2.0 ** (-np.asarray(j, dtype=float) - 1), 1.0)

    def amplitude(self, j):
        return self.delta * self.decay ** np.maximum(np.asarray(j, dtype=float), 0.0)

    def box_index(self, x, j):
        w = self.width(j)[..., None]
        m = np.rint(1.0 / w).astype(np.int64)
        return np.floor(np.mod(x, 1.0) / w).astype(np.int64) % m

    def values(self, j, idx):
        """Perturbation matrices of the boxes ``(j, idx)``; ``idx`` has shape ``(..., n-1)``."""
        n = self.n
        j = np.asarray(j, dtype=np.int64)
        key = _splitmix64(np.uint64(self.seed) + np.uint64(0x632BE59BD9B4E019))
        key = _splitmix64(key ^ (j + 4096).astype(np.uint64))
        for c in range(n - 1):
            key = _splitmix64(key ^ (idx[..., c].astype(np.uint64) * np.uint64(0x9E3779B1 + c)))
        entries = np.arange(n * n, dtype=np.uint64)
        z = _splitmix64(key[..., None] ^ (entries * np.uint64(0xD1B54A32D192ED03)))
        u = (z >> np.uint64(11)).astype(float) * 2.0**-53
        vals = (2.0 * u - 1.0) * self.amplitude(j)[..., None]
        return vals.reshape(j.shape + (n, n))

    def __call__(self, x, t):
        j = self.level(t)
        return self.values(j, self.box_index(x, j))


def whitney_piecewise(delta=0.1, seed=0, decay=2**-0.5, n=2):
    """``I + R`` with ``R`` constant on dyadic Whitney boxes, i.i.d. entries.

    The entry range shrinks by ``decay`` per dyadic level below ``t = 1`` so
    that the oscillation functional has a finite Carleson norm.  The field
    is weak-DKP but has no gradient.
    """
    if not 0 < decay <= 1:
        raise ConfigurationError("decay must lie in (0, 1]")
    boxes = WhitneyBoxes(n, float(delta), int(seed), float(decay))
    I = np.eye(n)

    def value(x, t):
        return I + boxes(x, t)

    f = MatrixField(n, value, None, 1.0 - n * abs(delta), 1.0 + n * abs(delta), "whitney_piecewise",
                    {"delta": delta, "seed": seed, "decay": decay}, differentiable=False)
    f.piecewise = boxes
    return f


def _bump(s):
    inside = np.abs(s) < 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        b = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - s * s)), 0.0)
        db = np.where(inside, b * (-2.0 * s / (1.0 - s * s) ** 2), 0.0)
    return b, db


def carleson_bump(delta=0.1, points=(0.5,), levels=(1, 2, 3, 4, 5, 6, 7, 8), n=2, E=None):
    """Perturbation ``C`` made of smooth bumps in Whitney boxes above ``points``.

    For each boundary point ``z`` and level ``j`` a bump of height ``delta``
    sits in ``|x - z| < 2**-j-1``, ``t in (2**-j-1, 2**-j)``.  Nested boxes
    over a fixed point give ``|C|^2 dx dt / t`` a bounded tent average.
    The returned field has no declared ellipticity: add it to a coefficient
    matrix.
    """
    E = _unit(n, E)
    pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(len(points), -1))
    if pts.shape[1] != n - 1:
        raise ConfigurationError(f"points must have {n - 1} coordinate(s)")
    levels = [int(j) for j in levels]

    def parts(x, t):
        val = np.zeros(t.shape)
        grad = np.zeros(t.shape + (n,))
        for j in levels:
            r = 2.0 ** (-j - 1)
            tcen, th = 1.5 * r, 0.5 * r
            bt, dbt = _bump((t - tcen) / th)
            for z in pts:
                d = np.mod(x - z + 0.5, 1.0) - 0.5
                bs, dbs = zip(*(_bump(d[..., c] / r) for c in range(n - 1)))
                bx = np.prod(bs, axis=0)
                val += delta * bx * bt
                for c in range(n - 1):
                    others = np.prod([bs[k] for k in range(n - 1) if k != c], axis=0) if n > 2 else 1.0
                    grad[..., c] += delta * dbs[c] / r * others * bt
                grad[..., -1] += delta * bx * dbt / th
        return val, grad

    def value(x, t):
        return parts(x, t)[0][..., None, None] * E

    def grad(x, t):
        g = parts(x, t)[1]
        return E[..., None] * g[..., None, None, :]

    return MatrixField(n, value, grad, None, None, "carleson_bump",
                       {"delta": delta, "points": pts.tolist(), "levels": levels})


PRESETS = {
    "constant": constant,
    "dkp_smooth": dkp_smooth,
    "log_oscillation": log_oscillation,
    "whitney_piecewise": whitney_piecewise,
    "carleson_bump": carleson_bump,
}


def make_preset(name, n=2, **params):
    """Build a preset by name, rejecting unknown names and parameters."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    fn = PRESETS[name]
    allowed = set(fn.__code__.co_varnames[: fn.__code__.co_argcount]) - {"n"}
    bad = set(params) - allowed
    if bad:
        raise ConfigurationError(f"preset {name!r} does not take parameter(s) {sorted(bad)}")
    if "delta" in params:
        d = float(params["delta"])
        limit = 1.0 / n if name == "whitney_piecewise" else 1.0
        if not np.isfinite(d) or abs(d) >= limit:
            raise ConfigurationError(f"delta must satisfy |delta| < {limit:g} for {name!r}, got {d}")
    if name == "constant":
        return fn(params.get("A0"), n=n)
    return fn(n=n, **params)


def check_ellipticity(A, samples=4096, seed=0):
    """Empirical ellipticity and bound of ``A`` on quasi-random points.

    Points come from a scrambled Halton sequence on ``[0, 1)^{n-1} x (0, 1]``.

    Returns
    -------
    lam_emp : float
        Minimum eigenvalue of the symmetric part.
    bound_emp : float
        Maximum operator 2-norm.
    """
    if samples < 1:
        raise ConfigurationError("samples must be at least 1")
    n = A.n
    u = qmc.Halton(d=n, seed=seed).random(samples)
    x, t = u[:, : n - 1], 1.0 - u[:, -1]
    lam, bnd = np.inf, -np.inf
    for lo in range(0, samples, 8192):
        xs, ts = x[lo: lo + 8192], t[lo: lo + 8192]
        try:
            M = np.asarray(A(xs, ts), dtype=float)
        except Exception as exc:
            raise FieldError(f"evaluation of {A.name!r} failed: {exc}", (xs[0].tolist(), float(ts[0]))) from exc
        bad = ~np.isfinite(M).all(axis=(-1, -2))
        if bad.any():
            i = int(np.argmax(bad))
            raise FieldError(f"non-finite value of {A.name!r}", (xs[i].tolist(), float(ts[i])))
        lam = min(lam, float(np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2))).min()))
        bnd = max(bnd, float(np.linalg.norm(M, 2, axis=(-2, -1)).max()))
    return lam, bnd


@dataclass(frozen=True)
class BlockView:
    """Blocks of ``B = [[B_par, b], [v, h]]``: last row is ``(v, h)``."""

    par: np.ndarray
    b: np.ndarray
    v: np.ndarray
    h: np.ndarray

    def reassemble(self):
        top = np.concatenate([self.par, self.b[..., :, None]], axis=-1)
        bottom = np.concatenate([self.v, self.h[..., None]], axis=-1)[..., None, :]
        return np.concatenate([top, bottom], axis=-2)


def split_matrix(M):
    M = np.asarray(M, dtype=float)
    return BlockView(M[..., :-1, :-1], M[..., :-1, -1], M[..., -1, :-1], M[..., -1, -1])


def block_split(B, x, t):
    """Blocks of the field ``B`` at ``(x, t)``; ``B`` may also be a plain matrix array."""
    M = B(x, t) if isinstance(B, MatrixField) else B
    return split_matrix(M)
