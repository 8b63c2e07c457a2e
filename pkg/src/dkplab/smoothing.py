"""Logarithmic mollification of coefficient fields.

For ``Lam > 1`` the smoothed field is the average

    B_Lam(x, t) = int_1^2 int_{|w|<1} phi(w) psi(u) B(x + s w, s) dw du,
    s = t * Lam**u,

which is the kernel ``Phi_{x,t,Lam}(y, s) = s**(1-n) / ln(Lam)
phi((y - x)/s) psi(ln(s/t)/ln(Lam))`` integrated against ``ds/s dy``.
Its derivatives can be computed in two ways:

* ``"kernel"``: differentiate the kernel,
  ``t d_t B_Lam = -(1/ln Lam) int int phi psi'(u) B`` and
  ``t grad_x B_Lam = -int int Lam**-u grad(phi)(w) psi(u) B``;
* ``"transfer"``: move the derivative onto ``B``,
  ``grad_x B_Lam = int int Phi grad_x B`` and
  ``t d_t B_Lam = int int Phi (s d_s B + (y - x) . grad_x B)``.

Fields that are piecewise constant on dyadic Whitney boxes are integrated
segment by segment: the ``u`` integral is split where ``s`` crosses a dyadic
level and, in one tangential dimension, the ``w`` integral is done exactly
through the cumulative distribution of ``phi``.
"""
from dataclasses import dataclass, field
from collections import OrderedDict
from functools import cached_property, lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

from ._quad import gauss_legendre, weighted_gauss
from .carleson import cm_norm
from .errors import ConfigurationError, EpsilonUnreachableError, QuadratureError
from .fields import MatrixField, as_points, check_ellipticity
from .mesh import build_mesh

__all__ = [
    "KernelPair",
    "kernel_pair",
    "kernel_weight",
    "kernel_mass",
    "MollifiedField",
    "Decomposition",
    "initial_split",
    "mollify",
    "decompose",
    "sup_tgrad",
    "LADDER",
    "LAMBDA_INITIAL",
    "QUAD_TOL",
]

LADDER = (4.0, 16.0, 64.0, 256.0)
LAMBDA_INITIAL = 2.0**0.25
QUAD_TOL = 1e-6
_SMOOTH_ORDERS = (4, 8, 16, 32, 64, 128)
_SEGMENT_ORDERS = (8, 16, 32, 64, 128)
_GRAD_ORDERS = (4, 8, 16, 32, 64)
_CHUNK = 1 << 18


def _psi_raw(u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = (u - 1.0) * (2.0 - u)
        return np.where(g > 0, np.exp(-1.0 / np.where(g > 0, g, 1.0)), 0.0)


def _psi_raw_d(u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = (u - 1.0) * (2.0 - u)
        gs = np.where(g > 0, g, 1.0)
        return np.where(g > 0, np.exp(-1.0 / gs) * (3.0 - 2.0 * u) / gs**2, 0.0)


def _phi_raw(rho2):
    rho2 = np.asarray(rho2, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = 1.0 - rho2
        return np.where(g > 0, np.exp(-1.0 / np.where(g > 0, g, 1.0)), 0.0)


def _phi_raw_d(rho2):
    # derivative of phi_raw with respect to rho2
    rho2 = np.asarray(rho2, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = 1.0 - rho2
        gs = np.where(g > 0, g, 1.0)
        return np.where(g > 0, -np.exp(-1.0 / gs) / gs**2, 0.0)


class KernelPair:
    """Normalised bumps ``phi`` on the unit ball of ``R^(n-1)`` and ``psi`` on ``(1, 2)``.

    ``c_phi = int |grad phi|`` and ``c_psi = int |psi'|`` are the constants in
    the derivative bounds ``sup |t grad_x B_Lam| <= c_phi |B|_inf / Lam`` and
    ``sup |t d_t B_Lam| <= c_psi |B|_inf / ln Lam``.
    """

    def __init__(self, n):
        if n not in (2, 3):
            raise ConfigurationError("n must be 2 or 3")
        self.n = n
        opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
        self.norm_psi = 1.0 / quad(_psi_raw, 1.0, 2.0, **opts)[0]
        if n == 2:
            self.norm_phi = 1.0 / quad(lambda x: _phi_raw(x * x), -1.0, 1.0, **opts)[0]
            self.c_phi = quad(lambda x: abs(2 * x * _phi_raw_d(x * x)), -1.0, 1.0, **opts)[0] * self.norm_phi
        else:
            self.norm_phi = 1.0 / (2 * np.pi * quad(lambda r: _phi_raw(r * r) * r, 0.0, 1.0, **opts)[0])
            self.c_phi = 2 * np.pi * quad(lambda r: abs(2 * r * _phi_raw_d(r * r)) * r, 0.0, 1.0,
                                          **opts)[0] * self.norm_phi
        self.c_psi = quad(lambda u: abs(_psi_raw_d(u)), 1.0, 2.0, **opts)[0] * self.norm_psi

    def phi(self, w):
        w = np.asarray(w, dtype=float)
        return self.norm_phi * _phi_raw(np.sum(w * w, axis=-1))

    def grad_phi(self, w):
        w = np.asarray(w, dtype=float)
        return self.norm_phi * (2.0 * _phi_raw_d(np.sum(w * w, axis=-1)))[..., None] * w

    def psi(self, u):
        return self.norm_psi * _psi_raw(u)

    def dpsi(self, u):
        return self.norm_psi * _psi_raw_d(u)

    # quadrature rules --------------------------------------------------
    @lru_cache(maxsize=16)
    def psi_rule(self, q):
        """Nodes and weights for ``int psi(u) g(u) du`` (weights sum to 1)."""
        return weighted_gauss("psi", q)

    @lru_cache(maxsize=16)
    def phi_rule(self, q):
        """Points ``(m, n-1)`` and weights for ``int phi(w) g(w) dw`` (weights sum to 1)."""
        if self.n == 2:
            x, w = weighted_gauss("phi1", q)
            return x[:, None], w
        r, wr = weighted_gauss("phi2r", q)
        m = 2 * q
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        pts = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], -1)
        return pts, np.repeat(wr, m) / m

    @cached_property
    def _derivative_masses(self):
        opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
        lo = quad(lambda u: abs(self.dpsi(u)), 1.0, 1.5, **opts)[0]
        hi = quad(lambda u: abs(self.dpsi(u)), 1.5, 2.0, **opts)[0]
        if self.n == 2:
            ph = quad(lambda x: abs(self.norm_phi * 2 * x * _phi_raw_d(x * x)), 0.0, 1.0, **opts)[0]
        else:
            ph = quad(lambda r: abs(self.norm_phi * 2 * r * _phi_raw_d(r * r)) * r, 0.0, 1.0, **opts)[0]
        return lo, hi, ph

    @lru_cache(maxsize=16)
    def dpsi_rule(self, q):
        """Nodes and weights for ``int psi'(u) g(u) du``.

        ``psi'`` is positive on ``(1, 3/2)`` and negative on ``(3/2, 2)``;
        each half gets a Gauss rule for the weight ``|psi'|``.
        """
        lo, hi, _ = self._derivative_masses
        u1, w1 = weighted_gauss("dpsi_lo", q)
        u2, w2 = weighted_gauss("dpsi_hi", q)
        return np.concatenate([u1, u2]), np.concatenate([lo * w1, -hi * w2])

    @lru_cache(maxsize=16)
    def gphi_rule(self, q):
        """Points and vector weights ``(m, n-1)`` for ``int grad(phi)(w) g(w) dw``."""
        mass = self._derivative_masses[2]
        if self.n == 2:
            x, w = weighted_gauss("dphi1", q)
            pts = np.concatenate([-x, x])[:, None]
            return pts, (mass * np.concatenate([w, -w]))[:, None]
        r, wr = weighted_gauss("dphi2r", q)
        m = 2 * q
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        dirs = np.stack([np.cos(th), np.sin(th)], -1)
        pts = (r[:, None, None] * dirs[None]).reshape(-1, 2)
        wts = -mass * (wr[:, None, None] * dirs[None] * (2 * np.pi / m)).reshape(-1, 2)
        return pts, wts

    @cached_property
    def phi_cdf_table(self):
        if self.n != 2:
            raise ConfigurationError("the cumulative table exists only in one tangential dimension")
        w = np.linspace(-1.0, 1.0, 400_001)
        c = cumulative_trapezoid(self.phi(w[:, None]), w, initial=0.0)
        return w, c / c[-1]

    def phi_cdf(self, w):
        grid, c = self.phi_cdf_table
        pos = (np.clip(w, -1.0, 1.0) + 1.0) * ((grid.size - 1) / 2.0)
        i = np.minimum(pos.astype(np.int64), grid.size - 2)
        frac = pos - i
        return c[i] + frac * (c[i + 1] - c[i])


@lru_cache(maxsize=4)
def kernel_pair(n):
    """Cached :class:`KernelPair` for dimension ``n``."""
    return KernelPair(n)


def kernel_weight(x, t, Lam, y, s, kernels=None):
    """The averaging kernel ``Phi_{x,t,Lam}(y, s)``; zero outside its support.

    ``x`` and ``y`` are points of ``R^(n-1)`` (trailing axis), or scalars when
    ``n = 2``.
    """
    if Lam <= 1 or np.any(np.asarray(t) <= 0):
        raise ConfigurationError("need Lam > 1 and t > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.ndim == 0 or (kernels is not None and kernels.n == 2 and x.shape[-1:] != (1,)):
        x, y = x[..., None], y[..., None]
    n = x.shape[-1] + 1
    kp = kernels or kernel_pair(n)
    lnL = np.log(Lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.log(s / t) / lnL
        val = s ** (1 - n) / lnL * kp.phi((y - x) / s[..., None]) * kp.psi(u)
    inside = (s > Lam * t) & (s < Lam * Lam * t)
    return np.where(inside & np.isfinite(val), val, 0.0)


def kernel_mass(x, t, Lam, n=2, q=24, panels=4):
    """``int int Phi_{x,t,Lam}(y, s) ds/s dy`` by composite Gauss in the original variables."""
    kp = kernel_pair(n)
    g, wg = gauss_legendre(q, 0.0, 1.0)
    lo, hi = np.log(Lam * t), np.log(Lam * Lam * t)
    e = np.linspace(lo, hi, panels + 1)
    sig = (e[:-1, None] + np.diff(e)[:, None] * g).ravel()
    wsig = (np.diff(e)[:, None] * wg).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    total = 0.0
    for si, ws in zip(np.exp(sig), wsig):
        if n == 2:
            ey = np.linspace(x[0] - si, x[0] + si, panels + 1)
            y = (ey[:-1, None] + np.diff(ey)[:, None] * g).ravel()
            wy = (np.diff(ey)[:, None] * wg).ravel()
            vals = kernel_weight(x[0], t, Lam, y, np.full_like(y, si), kp)
        else:
            er = np.linspace(0.0, si, panels + 1)
            r = (er[:-1, None] + np.diff(er)[:, None] * g).ravel()
            wr = (np.diff(er)[:, None] * wg).ravel() * r
            m = 4 * q
            th = 2 * np.pi * np.arange(m) / m
            y = x + np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], -1)
            wy = np.repeat(wr, m) * (2 * np.pi / m)
            vals = kernel_weight(x, t, Lam, y, np.full(y.shape[0], si), kp)
        total += ws * np.sum(wy * vals)
    return float(total)


def _chunks(P, per_point):
    size = max(1, _CHUNK // max(per_point, 1))
    for lo in range(0, P, size):
        yield slice(lo, min(P, lo + size))


class MollifiedField(MatrixField):
    """``B_Lam`` built from a base field by the logarithmic average.

    Parameters
    ----------
    base : MatrixField
        The field being averaged.
    Lam : float
        Mollification scale, ``> 1``.
    route : {"auto", "kernel", "transfer"}
        Gradient evaluation; ``"auto"`` uses ``"transfer"`` when the base has a
        gradient and ``"kernel"`` otherwise.
    """

    def __init__(self, base, Lam, route="auto", name=None):
        if Lam <= 1:
            raise ConfigurationError("Lam must exceed 1")
        if route not in ("auto", "kernel", "transfer"):
            raise ConfigurationError(f"unknown gradient route {route!r}")
        if route == "auto":
            route = "transfer" if base.has_gradient else "kernel"
        if route == "transfer" and not base.has_gradient:
            raise ConfigurationError("the transfer route needs a base field with a gradient")
        self.base = base
        self.Lam = float(Lam)
        self.lnL = float(np.log(Lam))
        self.route = route
        self.kernels = kernel_pair(base.n)
        self._memo = OrderedDict()
        self._q = None
        self._qg = None
        super().__init__(base.n, self._value_impl, self._grad_impl, lam=base.lam, bound=base.bound,
                         name=name or f"mollified({base.name}, {Lam:g})",
                         params={"base": base.name, "Lam": self.Lam, "route": route})

    # evaluation ---------------------------------------------------------
    @property
    def piecewise_base(self):
        return getattr(self.base, "piecewise", None) is not None and not self.base.differentiable

    def _memoized(self, kind, x, t, fn):
        key = (kind, x.shape, x.tobytes(), t.tobytes())
        if key in self._memo:
            self._memo.move_to_end(key)
            return self._memo[key]
        out = fn(x, t)
        out.setflags(write=False)
        self._memo[key] = out
        if len(self._memo) > 16:
            self._memo.popitem(last=False)
        return out

    def _value_impl(self, x, t):
        return self._memoized("value", np.ascontiguousarray(x), np.ascontiguousarray(t), self._value_raw)

    def _grad_impl(self, x, t):
        return self._memoized("grad", np.ascontiguousarray(x), np.ascontiguousarray(t), self._grad_raw)

    def _value_raw(self, x, t, q=None):
        if self.piecewise_base:
            return self._piecewise_memo(x, t, q or self.q)[0]
        q = q or self.q
        U, wu = self._u_rule(t, q)
        W, ww = self.kernels.phi_rule(q)
        return self._average(lambda Y, S: self.base(Y, S), x, t, U, wu, W, ww)

    def _grad_raw(self, x, t, q=None):
        n = self.n
        out = np.empty(t.shape + (n, n, n))
        if self.route == "transfer":
            q = q or self.q
            U, wu = self._u_rule(t, q)
            W, ww = self.kernels.phi_rule(q)

            def integrand(Y, S, Wb):
                G = self.base.gradient(Y, S)
                gx = G[..., : n - 1]
                gt = S[..., None, None] * (G[..., -1] + np.einsum("...ijd,...d->...ij", gx, Wb))
                return np.concatenate([gx, gt[..., None]], axis=-1)

            avg = self._average(integrand, x, t, U, wu, W, ww, with_w=True)
            out[..., : n - 1] = avg[..., : n - 1]
            out[..., -1] = avg[..., -1] / t[..., None, None]
            return out
        if self.piecewise_base:
            _, tdt, tdx = self._piecewise_memo(x, t, q or self.q)
        else:
            qg = q or self.qg
            qv = max(self.q, qg)
            U, wu = self.kernels.dpsi_rule(qg)
            W, ww = self.kernels.phi_rule(qv)
            tdt = -self._average(lambda Y, S: self.base(Y, S), x, t, U, wu, W, ww) / self.lnL
            U, wu = self.kernels.psi_rule(qv)
            W, gw = self.kernels.gphi_rule(qg)
            tdx = np.stack([
                -self._average(lambda Y, S: self.base(Y, S), x, t, U, wu * self.Lam ** -U, W, gw[:, d])
                for d in range(n - 1)], axis=-1)
        out[..., : n - 1] = tdx / t[..., None, None, None]
        out[..., -1] = tdt / t[..., None, None]
        return out

    def _average(self, fn, x, t, U, wu, W, ww, with_w=False):
        """``sum_a sum_b wu[a] ww[b] fn(x + s_a W_b, s_a)`` with ``s_a = t Lam**U[a]``."""
        shape = t.shape
        xf = x.reshape(-1, self.n - 1)
        tf = t.reshape(-1)
        U = np.broadcast_to(np.asarray(U).reshape(-1, np.shape(U)[-1]), (tf.size, np.shape(U)[-1]))
        wu = np.broadcast_to(np.asarray(wu).reshape(-1, np.shape(wu)[-1]), U.shape)
        out = None
        per = U.shape[1] * W.shape[0] * (4 if with_w else 1) * self.n**2
        for sl in _chunks(tf.size, per):
            s = tf[sl, None] * self.Lam ** U[sl]
            Y = xf[sl, None, None, :] + s[:, :, None, None] * W[None, None, :, :]
            S = np.broadcast_to(s[:, :, None], Y.shape[:-1])
            vals = fn(Y, S, np.broadcast_to(W, Y.shape)) if with_w else fn(Y, S)
            part = np.einsum("pa,b,pab...->p...", wu[sl], ww, vals)
            if out is None:
                out = np.empty((tf.size,) + part.shape[1:])
            out[sl] = part
        return out.reshape(shape + out.shape[1:])

    @property
    def segmented(self):
        """Whether the base is itself an average of a piecewise constant field."""
        return isinstance(self.base, MollifiedField) and self.base.piecewise_base

    def _u_rule(self, t, q):
        """Rule for ``int psi(u) g(u) du``; per point when the base is segmented.

        A segmented base changes quickly where its own averaging window
        crosses a dyadic level, so the ``u`` interval is split there and
        each piece gets ``q`` Gauss-Legendre nodes.
        """
        if not self.segmented:
            return self.kernels.psi_rule(q)
        tf = t.reshape(-1)
        lnL, ln2 = self.lnL, np.log(2.0)
        inner = self.base.lnL
        j0 = np.floor(-np.log2(tf * self.Lam**2) - 2 * inner / ln2).astype(np.int64) - 1
        nj = int(np.ceil(lnL / ln2 + 2 * inner / ln2)) + 3
        j = j0[:, None] + np.arange(nj)
        cuts = [(-j * ln2 - c * inner - np.log(tf)[:, None]) / lnL for c in (1.0, 2.0)]
        ends = np.concatenate([np.ones((tf.size, 1)), np.clip(np.concatenate(cuts, 1), 1.0, 2.0),
                               np.full((tf.size, 1), 2.0)], axis=1)
        ends.sort(axis=1)
        g, wg = gauss_legendre(q, 0.0, 1.0)
        span = np.diff(ends, axis=1)
        keep = int((span > 0).sum(axis=1).max())
        order = np.argsort(span <= 0, axis=1, kind="stable")[:, :keep]
        ends = np.take_along_axis(ends[:, :-1], order, 1)
        span = np.take_along_axis(span, order, 1)
        U = (ends[:, :, None] + span[..., None] * g).reshape(tf.size, -1)
        wu = (span[..., None] * wg).reshape(tf.size, -1) * self.kernels.psi(U)
        wu /= wu.sum(axis=1, keepdims=True)
        return U, wu

    # piecewise-constant base -------------------------------------------
    def _piecewise(self, x, t, q):
        """Segment-wise integration for Whitney-box piecewise constant bases.

        Returns ``(B, t d_t B, t grad_x B)`` from one pass over the dyadic
        levels met by the window ``s in (t Lam, t Lam**2)``.
        """
        boxes = self.base.piecewise
        n = self.n
        shape = t.shape
        xf = x.reshape(-1, n - 1)
        tf = t.reshape(-1)
        Lam, lnL = self.Lam, self.lnL
        g, wg = gauss_legendre(q, 0.0, 1.0)
        jmin = np.floor(-np.log2(tf * Lam * Lam)).astype(np.int64)
        jmax = np.floor(-np.log2(tf * Lam)).astype(np.int64)
        L = int((jmax - jmin).max()) + 1
        val = np.zeros((tf.size, n, n))
        tdt = np.zeros((tf.size, n, n))
        tdx = np.zeros((tf.size, n, n, n - 1))
        wsum = np.zeros(tf.size)
        for l in range(L):
            j = jmin + l
            s_lo = np.maximum(2.0 ** (-j - 1.0), tf * Lam)
            s_hi = np.minimum(2.0 ** (-j.astype(float)), tf * Lam * Lam)
            live = s_hi > s_lo
            if not live.any():
                continue
            u_lo = np.log(s_lo / tf) / lnL
            u_hi = np.where(live, np.log(np.maximum(s_hi, s_lo) / tf) / lnL, u_lo)
            U = u_lo[:, None] + (u_hi - u_lo)[:, None] * g  # (P, q)
            du = (u_hi - u_lo)[:, None] * wg
            w_val = du * self.kernels.psi(U)
            w_dt = -du * self.kernels.dpsi(U) / lnL
            w_dx = -w_val * Lam**-U
            wsum += w_val.sum(-1)
            inner, inner_dx = self._box_integral(boxes, xf, tf[:, None] * Lam**U, j)
            val += np.einsum("pa,paij->pij", w_val, inner)
            tdt += np.einsum("pa,paij->pij", w_dt, inner)
            tdx += np.einsum("pa,paijd->pijd", w_dx, inner_dx)
        val = val / wsum[:, None, None] + np.eye(n)
        return val.reshape(shape + (n, n)), tdt.reshape(shape + (n, n)), tdx.reshape(shape + (n, n, n - 1))

    def _piecewise_memo(self, x, t, q):
        key = ("pw", q, x.shape, x.tobytes(), t.tobytes())
        hit = self._memo.get(key)
        if hit is None:
            hit = self._piecewise(x, t, q)
            if t.size <= 65536:
                self._memo[key] = hit
                if len(self._memo) > 16:
                    self._memo.popitem(last=False)
        return hit

    def _box_integral(self, boxes, xf, S, j):
        """``int phi(w) R(x + s w, s) dw`` and ``int grad(phi)(w) R(x + s w, s) dw`` at level ``j``.

        Shapes ``(P, q, n, n)`` and ``(P, q, n, n, n-1)``.
        """
        n = self.n
        P, q = S.shape
        width = boxes.width(j)[:, None]  # (P, 1)
        nb = np.rint(1.0 / width).astype(np.int64)
        out = np.zeros((P, q, n, n))
        out_dx = np.zeros((P, q, n, n, n - 1))
        # a single box per period above t = 1: the field ignores x there
        flat = nb[:, 0] == 1
        if flat.any():
            V = boxes.values(j[flat], np.zeros((int(flat.sum()), n - 1), dtype=np.int64))
            out[flat] = V[:, None]
        if flat.all():
            return out, out_dx
        rows = ~flat
        xr, Sr, wr, nbr, jr = xf[rows], S[rows], width[rows], nb[rows], j[rows]
        smax = Sr.max(axis=1, keepdims=True)
        bmin = np.floor((xr - smax) / wr).astype(np.int64)  # (P', n-1)
        K = int(np.ceil((2 * smax / wr).max())) + 2
        m = np.arange(K + 1)
        if n == 2:
            e = ((bmin + m) * wr - xr)[:, None, :] / Sr[:, :, None]  # (P', q, K+1)
            e = np.clip(e, -1.0, 1.0)
            c = np.diff(self.kernels.phi_cdf(e), axis=-1)
            cdx = np.diff(self.kernels.phi(e[..., None]), axis=-1)
            V = boxes.values(np.broadcast_to(jr[:, None], (jr.size, K)),
                             np.mod(bmin + m[:-1], nbr)[..., None])  # (P', K, n, n)
            out[rows] = np.einsum("pqk,pkij->pqij", c, V)
            out_dx[rows] = np.einsum("pqk,pkij->pqij", cdx, V)[..., None]
            return out, out_dx
        # two tangential dimensions: tensor Gauss on each rectangle piece
        gq, gw = gauss_legendre(8, 0.0, 1.0)
        w2 = np.outer(gw, gw)
        acc = np.zeros((int(rows.sum()), q, n, n))
        acc_dx = np.zeros((int(rows.sum()), q, n, n, 2))
        for m1 in range(K):
            for m2 in range(K):
                b = bmin + np.array([m1, m2])  # (P', 2)
                lo = np.clip((b * wr - xr)[:, None, :] / Sr[..., None], -1.0, 1.0)
                hi = np.clip(((b + 1) * wr - xr)[:, None, :] / Sr[..., None], -1.0, 1.0)
                span = hi - lo
                area = span[..., 0] * span[..., 1]
                if not np.any(area > 0):
                    continue
                p1 = lo[..., 0, None] + span[..., 0, None] * gq
                p2 = lo[..., 1, None] + span[..., 1, None] * gq
                Wp = np.stack(np.broadcast_arrays(p1[..., :, None], p2[..., None, :]), -1)
                ww = area[..., None, None] * w2
                V = boxes.values(jr, np.mod(b, nbr))  # (P', n, n)
                c = np.einsum("pqab,pqab->pq", ww, self.kernels.phi(Wp))
                cdx = np.einsum("pqab,pqabd->pqd", ww, self.kernels.grad_phi(Wp))
                acc += c[..., None, None] * V[:, None]
                acc_dx += cdx[:, :, None, None, :] * V[:, None, :, :, None]
        out[rows] = acc
        out_dx[rows] = acc_dx
        return out, out_dx

    # quadrature calibration ----------------------------------------------
    def _probe_points(self):
        # heights reach past t = 1 because outer averages query the base there
        t = np.geomspace(1e-3, 6.0, 24)
        x = np.mod(np.outer(np.arange(1, t.size + 1), [0.618034, 0.414214][: self.n - 1]), 1.0)
        return x, t

    def _calibrate(self, evaluate, orders, scale):
        x, t = self._probe_points()
        prev = None
        change = np.inf
        for i, q in enumerate(orders):
            cur = evaluate(x, t, q)
            if prev is not None:
                change = float(np.abs(cur - prev).max() / scale(cur))
                if change < QUAD_TOL:
                    # the doubling difference bounds the error of the coarser rule
                    return orders[i - 1]
            prev = cur
        raise QuadratureError(f"quadrature for {self.name} did not settle: relative change {change:.2e}", change)

    @property
    def q(self):
        """Calibrated rule order for values (and transfer-route gradients)."""
        if self._q is None:
            if self.piecewise_base:
                def joint(x, t, q):
                    v, dt, dx = self._piecewise(x, t, q)
                    return np.concatenate([v, dt, dx[..., 0]] + ([dx[..., 1]] if self.n == 3 else []), -1)

                self._q = self._calibrate(joint, _SEGMENT_ORDERS, lambda v: np.abs(v[..., : self.n]).max())
            else:
                orders = (4, 8, 16, 32) if self.segmented else _SMOOTH_ORDERS
                n = self.n

                def evaluate(x, t, q):
                    v = self._value_raw(x, t, q)
                    if self.route != "transfer":
                        return v
                    g = self._grad_raw(x, t, q) * t[:, None, None, None]
                    return np.concatenate([v] + [g[..., k] for k in range(n)], -1)

                self._q = self._calibrate(evaluate, orders, lambda v: max(np.abs(v[..., :n]).max(), 1e-300))
        return self._q

    @property
    def qg(self):
        """Calibrated rule order for kernel-route gradients."""
        if self.piecewise_base:
            return self.q
        if self._qg is None:
            x, t = self._probe_points()
            vscale = float(np.abs(self._value_raw(x, t)).max())

            def tgrad(xx, tt, q):
                return self._grad_raw(xx, tt, q) * tt[:, None, None, None]

            orders = _SEGMENT_ORDERS if self.piecewise_base else _GRAD_ORDERS
            self._qg = self._calibrate(tgrad, orders, lambda v: vscale)
        return self._qg


def initial_split(A, route="kernel"):
    """``A = B_1 + C_1`` with ``B_1`` the average of ``A`` at ``Lam = 2**(1/4)``.

    ``B_1`` differentiates the kernel by default, so no derivative of ``A``
    is needed.
    """
    B1 = MollifiedField(A, LAMBDA_INITIAL, route=route, name=f"B1({A.name})")
    B1.lam, B1.bound = A.lam, A.bound
    C1 = A - B1
    C1.name = f"C1({A.name})"
    return B1, C1


def mollify(B1, Lam, route="transfer"):
    """Logarithmic average of ``B1`` at scale ``Lam >= 2``."""
    if Lam < 2:
        raise ConfigurationError(f"Lam must be at least 2, got {Lam}")
    if route == "transfer" and not B1.has_gradient:
        raise ConfigurationError("mollify needs a field with a gradient evaluator")
    return MollifiedField(B1, Lam, route=route, name=f"B_{Lam:g}({B1.name})")


def sup_tgrad(B, mesh, component="all"):
    """``max |t grad B|`` over the cell centres (Frobenius over entries and directions).

    ``component`` may be ``"all"``, ``"t"`` (vertical derivative only) or
    ``"x"`` (tangential derivatives only).
    """
    x, t = mesh.cell_centers()
    G = B.gradient(x, t) * t[..., None, None, None]
    if component == "t":
        G = G[..., -1:]
    elif component == "x":
        G = G[..., :-1]
    return float(np.sqrt(np.sum(G**2, axis=(-1, -2, -3))).max())


@dataclass
class Decomposition:
    """``A = B + C`` with the measured quantities of the construction."""

    A: MatrixField
    B: MatrixField
    C: MatrixField
    Lam: float
    eps: float
    eps_achieved: float
    eps_initial: float
    M_B: float
    M_C: float
    ellipticity: float
    lam_A: float
    ladder: list = field(default_factory=list)
    J: int = 5

    def to_dict(self):
        return {"lambda": self.Lam, "eps": self.eps, "eps_achieved": self.eps_achieved,
                "eps_initial": self.eps_initial, "M_B": self.M_B, "M_C": self.M_C,
                "ellipticity": self.ellipticity, "lam_A": self.lam_A, "ladder": self.ladder, "J": self.J}


def decompose(A, eps, J=5, sup_J=4, ladder=LADDER, samples=256):
    """Split ``A = B + C`` with ``sup |t grad B| <= eps``.

    Runs the initial split, then mollifies with the first ``Lam`` on the
    ladder whose measured ``sup |t grad B_Lam|`` (cell centres of the level
    ``sup_J`` mesh) is at most ``eps``.  ``M_B`` and ``M_C`` are the Carleson
    norms of ``t grad B`` and ``C`` on the level ``J`` mesh.
    """
    if not 0 < eps < 1:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    coarse = build_mesh(A.n, sup_J)
    B1, _ = initial_split(A)
    eps_initial = sup_tgrad(B1, coarse)
    record = []
    chosen = None
    for Lam in ladder:
        B = mollify(B1, Lam)
        achieved = sup_tgrad(B, coarse)
        record.append({"lambda": Lam, "sup_tgrad": achieved})
        if achieved <= eps:
            chosen = (Lam, B, achieved)
            break
    if chosen is None:
        best = min(r["sup_tgrad"] for r in record)
        raise EpsilonUnreachableError(f"no Lam in {list(ladder)} reaches eps={eps}; best {best:.3e}", best)
    Lam, B, achieved = chosen
    C = A - B
    C.name = f"C({A.name})"
    mesh = build_mesh(A.n, J)
    x, t = mesh.cell_centers()
    tg = B.gradient(x, t) * t[..., None, None, None]
    M_B = cm_norm(tg, mesh).norm
    M_C = cm_norm(A(x, t) - B(x, t), mesh).norm
    lam_B, _ = check_ellipticity(B, samples)
    lam_A, _ = check_ellipticity(A, samples)
    return Decomposition(A, B, C, Lam, eps, achieved, eps_initial, M_B, M_C, lam_B, lam_A, record, J)
