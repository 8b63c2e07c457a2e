"""Boundary functionals of interior functions.

Inputs are cell-centre samples (arrays with leading shape
``mesh.cell_shape``, optional trailing component axes), callables of
``(x, t)``, or solution objects exposing ``cell_values()`` /
``cell_gradients()``.  Every functional returns a :class:`FunctionalProfile`
holding one value per boundary node.

The cone above node ``x`` is ``{|y - x| < t}``; a cell belongs to it when the
horizontal slice of the cone at the cell's centre height overlaps the cell.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DegenerateInputError
from .mesh import ball_kernel, node_ball_max, periodic_correlate

__all__ = [
    "FunctionalProfile",
    "DualWitness",
    "ntmax",
    "avg_ntmax",
    "truncated_ntmax",
    "area_square",
    "lp_norm",
    "dual_witness",
    "cell_magnitude",
]


@dataclass
class FunctionalProfile:
    """Per-node values of a boundary functional."""

    name: str
    values: np.ndarray
    J: int
    n: int
    params: dict = field(default_factory=dict)

    def lp(self, p):
        return lp_norm(self, p)

    def norms(self, ps=(2,)):
        return {str(p): lp_norm(self, p) for p in ps}

    def to_dict(self, ps=(2,)):
        return {"name": self.name, "J": self.J, "n": self.n, "params": self.params,
                "norms": self.norms(ps)}


def _cells(v, mesh):
    if hasattr(v, "cell_values"):
        return np.asarray(v.cell_values(), dtype=float)
    if callable(v):
        x, t = mesh.cell_centers()
        return np.asarray(v(x, t), dtype=float)
    a = np.asarray(v, dtype=float)
    if a.shape[: mesh.n] != mesh.cell_shape:
        raise ConfigurationError(f"cell array must start with shape {mesh.cell_shape}, got {a.shape}")
    return a


def cell_magnitude(v, mesh):
    """``|v|`` at cell centres (Euclidean norm over any component axes)."""
    a = _cells(v, mesh)
    if a.ndim == mesh.n:
        return np.abs(a)
    return np.sqrt(np.sum(a.reshape(mesh.cell_shape + (-1,)) ** 2, axis=-1))


def _gradients(v, mesh):
    if hasattr(v, "cell_gradients"):
        return np.asarray(v.cell_gradients(), dtype=float)
    g = _cells(v, mesh)
    if g.shape != mesh.cell_shape + (mesh.n,):
        raise ConfigurationError("the square function needs a gradient: pass a solution, "
                                 f"or gradient samples of shape {mesh.cell_shape + (mesh.n,)}")
    return g


def _cone_max(vals, mesh):
    out = np.full(mesh.col_shape, -np.inf)
    for k in range(mesh.N):
        out = np.maximum(out, node_ball_max(vals[..., k], k + 0.5, mesh.n - 1))
    return out


def ntmax(v, mesh):
    """Non-tangential maximal function: the largest ``|v|`` over cone cells."""
    mag = cell_magnitude(v, mesh)
    return FunctionalProfile("N", _cone_max(mag, mesh), mesh.J, mesh.n)


def _row_weights(mesh, a):
    # integral of s**-a over each full cell row and over the upper half of row k
    edges = mesh.tn
    half = mesh.tc

    def prim(s):
        return np.log(s) if a == 1 else s ** (1 - a) / (1 - a)

    full = np.zeros(mesh.N)
    full[1:] = prim(edges[2:]) - prim(edges[1:-1])
    upper = prim(edges[1:]) - prim(half)
    return full, upper


def whitney_averages(v, mesh, weight_exponent=1.0):
    """Root mean square of ``v`` over ``B(y, 2t) x (t, 2t)`` at every cell centre.

    The vertical measure is ``ds / s**weight_exponent``.  Boxes reaching
    above ``t = 1`` are truncated there and averaged over what remains.
    """
    sq = cell_magnitude(v, mesh) ** 2
    full, upper = _row_weights(mesh, weight_exponent)
    P = np.concatenate([np.zeros(mesh.col_shape + (1,)), np.cumsum(sq * full, axis=-1)], axis=-1)
    Pw = np.concatenate([[0.0], np.cumsum(full)])
    out = np.empty(mesh.cell_shape)
    for k in range(mesh.N):
        top = min(2 * k + 1, mesh.N)  # rows k+1 .. top-1 are fully inside
        dens = upper[k] * sq[..., k] + P[..., top] - P[..., k + 1]
        wsum = upper[k] + Pw[top] - Pw[k + 1]
        ker = ball_kernel(mesh.n - 1, mesh.N, mesh.h, (2 * k + 1) * mesh.h, "overlap", "cell")
        out[..., k] = periodic_correlate(dens, ker) / (ker.sum() * wsum)
    return np.sqrt(np.maximum(out, 0.0))


def avg_ntmax(v, mesh, weight_exponent=1.0):
    """Averaged non-tangential maximal function.

    Largest Whitney root-mean-square of ``v`` over cone points, with the
    vertical measure ``ds / s**weight_exponent`` (``1`` gives ``ds/s``).
    """
    W = whitney_averages(v, mesh, weight_exponent)
    return FunctionalProfile("N~", _cone_max(W, mesh), mesh.J, mesh.n,
                             {"weight_exponent": weight_exponent})


@lru_cache(maxsize=64)
def _small_ball_offsets(n, k, quarter):
    """Integer offsets ``(dx..., dt)`` of cells whose centres lie within ``quarter * t_c`` of the cell at level ``k``."""
    rad = quarter * (k + 0.5)
    c = int(np.floor(rad))
    rng = np.arange(-c, c + 1)
    grids = np.meshgrid(*([rng] * n), indexing="ij")
    off = np.stack([g.ravel() for g in grids], -1)
    keep = (off**2).sum(-1) < rad * rad
    keep[np.all(off == 0, axis=1)] = True
    return off[keep]


def _small_ball_stats(vals_p, K, mesh):
    """Mean of ``vals_p`` over the r/4 ball of each cell and whether that ball lies in ``K``."""
    n, N = mesh.n, mesh.N
    mean = np.zeros(mesh.cell_shape)
    inside = np.zeros(mesh.cell_shape, dtype=bool)
    for k in range(N):
        off = _small_ball_offsets(n, k, 0.25)
        acc = np.zeros(mesh.col_shape)
        ok = np.ones(mesh.col_shape, dtype=bool)
        for o in off:
            row = k + o[-1]
            if not 0 <= row < N:
                ok[...] = False
                continue
            shift = tuple(-int(d) for d in o[:-1])
            axes = tuple(range(n - 1))
            acc += np.roll(vals_p[..., row], shift, axis=axes)
            ok &= np.roll(K[..., row], shift, axis=axes)
        mean[..., k] = acc / len(off)
        inside[..., k] = ok
    return mean, inside


def _check_K(K, mesh):
    K = np.asarray(K, dtype=bool)
    if K.shape != mesh.cell_shape:
        raise ConfigurationError(f"truncation set must be a cell mask of shape {mesh.cell_shape}")
    return K


def truncated_ntmax(v, mesh, K, p=1):
    """Truncated averaged maximal function ``N_{p,K}``.

    Cone points are the cells of ``K`` whose ball ``|Y - (y, r)| < r/4``
    (discretised by cell centres, always containing the cell itself) lies
    entirely in ``K``; the value is the largest ``L^p`` mean of ``|v|`` over
    such balls, and 0 where the cone meets no eligible cell.
    """
    if p not in (1, 2):
        raise ConfigurationError("p must be 1 or 2")
    K = _check_K(K, mesh)
    mag = cell_magnitude(v, mesh)
    mean, inside = _small_ball_stats(mag**p, K, mesh)
    vals = np.where(inside, mean ** (1.0 / p), -np.inf)
    out = _cone_max(vals, mesh)
    return FunctionalProfile(f"N_{p},K", np.where(np.isfinite(out), out, 0.0), mesh.J, mesh.n, {"p": p})


def area_square(v, mesh, kind="A"):
    """Area functional ``A(v)`` or square function ``S(v) = A(t grad v)``.

    ``A(v)(x)**2`` is the integral of ``v**2 t**-n`` over the cone, with the
    cone slice weights exact in one tangential dimension.  For ``kind="S"``
    ``v`` must supply a gradient.
    """
    if kind not in ("A", "S"):
        raise ConfigurationError("kind must be 'A' or 'S'")
    if kind == "S":
        g = _gradients(v, mesh)
        _, t = mesh.cell_centers()
        mag = t * np.sqrt(np.sum(g * g, axis=-1))
    else:
        mag = cell_magnitude(v, mesh)
    dens = mag**2 * mesh.tc ** (-mesh.n) * mesh.h * mesh.boundary_weight
    total = np.zeros(mesh.col_shape)
    table = mesh.cone_table
    for k in range(mesh.N):
        total += periodic_correlate(dens[..., k], table[k])
    return FunctionalProfile(kind, np.sqrt(np.maximum(total, 0.0)), mesh.J, mesh.n)


def lp_norm(profile, p):
    """``(sum_i h**(n-1) |value_i|**p)**(1/p)`` over the periodic boundary grid."""
    p = float(p)
    if not (np.isfinite(p) and p >= 1):
        raise ConfigurationError(f"p must be a finite number >= 1, got {p}")
    vals = profile.values if isinstance(profile, FunctionalProfile) else np.asarray(profile, dtype=float)
    w = 1.0 / vals.size
    return float((w * np.sum(np.abs(vals) ** p)) ** (1.0 / p))


@dataclass
class DualWitness:
    """A compactly supported field ``h`` with ``int F . h`` close to ``||N_{1,K} F||_q``."""

    h: np.ndarray
    pairing: float
    target: float
    certificate: float
    balls: list = field(repr=False, default_factory=list)

    def to_dict(self):
        return {"pairing": self.pairing, "target": self.target, "certificate": self.certificate}


def _maximizing_balls(mean, inside, mesh):
    """Per node: the eligible cone cell of largest mean (ties: smallest t, then centre)."""
    n, N = mesh.n, mesh.N
    table = mesh.cone_table > 0
    flat_vals = np.where(inside, mean, -np.inf)
    order_k = np.arange(N)
    picks = {}
    for node in np.ndindex(*mesh.col_shape):
        best, arg = -np.inf, None
        for k in order_k:
            mask = np.roll(table[k], node, axis=tuple(range(n - 1)))
            vals = np.where(mask, flat_vals[..., k], -np.inf)
            m = vals.max()
            if m > best:
                best = m
                arg = (np.unravel_index(int(np.argmax(vals)), vals.shape), k)
        picks[node] = (best, arg)
    return picks


def dual_witness(F, mesh, K, q=2.0):
    """Discrete duality witness for ``N_{1,K}``.

    For each boundary node the maximising ball ``beta_i`` is taken from the
    truncated maximal function; ``h`` is
    ``sum_i h**(n-1) g_i F/|F| 1_{beta_i} / |beta_i|`` with
    ``g_i = N_i**(q-1) / ||N||_q**(q-1)``.  The pairing then equals
    ``||N_{1,K} F||_q`` up to roundoff.
    """
    q = float(q)
    if not q > 1:
        raise ConfigurationError("q must exceed 1")
    K = _check_K(K, mesh)
    Fc = _cells(F, mesh)
    scalar = Fc.ndim == mesh.n
    if scalar:
        Fc = Fc[..., None]
    mag = np.sqrt(np.sum(Fc**2, axis=-1))
    if not np.any(mag > 0):
        raise DegenerateInputError("the field F vanishes identically")
    mean, inside = _small_ball_stats(mag, K, mesh)
    picks = _maximizing_balls(mean, inside, mesh)
    Nvals = np.zeros(mesh.col_shape)
    for node, (best, _) in picks.items():
        Nvals[node] = best if np.isfinite(best) else 0.0
    target = lp_norm(Nvals, q)
    if target == 0.0:
        raise DegenerateInputError("N_{1,K}(F) vanishes identically")
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(mag[..., None] > 1e-14, Fc / mag[..., None], 0.0)
    H = np.zeros_like(Fc)
    bw = mesh.boundary_weight
    balls = []
    for node, (best, arg) in picks.items():
        if arg is None or not np.isfinite(best) or best == 0.0:
            continue
        (col, k) = arg
        g = best ** (q - 1) / target ** (q - 1)
        off = _small_ball_offsets(mesh.n, k, 0.25)
        cells = [tuple((np.array(col) + o[:-1]) % mesh.N) + (k + o[-1],) for o in off]
        vol = len(cells) * mesh.cell_volume
        for c in cells:
            H[c] += bw * g * direction[c] / vol
        balls.append({"node": list(node), "cells": [list(map(int, c)) for c in cells]})
    pairing = float(np.sum(Fc * H) * mesh.cell_volume)
    if scalar:
        H = H[..., 0]
    return DualWitness(H, pairing, target, pairing / target, balls)
