"""Gauss rules for smooth bump weights.

Rules for a positive weight ``w`` on an interval are obtained from the
recurrence coefficients of the orthogonal polynomials (Lanczos on a fine
discretisation of the measure) followed by the Golub-Welsch eigenproblem.
"""
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import roots_legendre

_FINE = 4000


@lru_cache(maxsize=64)
def _legendre(q):
    x, w = roots_legendre(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(q, a=-1.0, b=1.0):
    x, w = _legendre(int(q))
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _lanczos(nodes, weights, q):
    # Lanczos with full reorthogonalisation on diag(nodes), start sqrt(weights)
    v = np.sqrt(weights / weights.sum())
    V = np.zeros((q, nodes.size))
    alpha = np.zeros(q)
    beta = np.zeros(q)
    V[0] = v
    for k in range(q):
        w = nodes * V[k]
        alpha[k] = V[k] @ w
        w -= alpha[k] * V[k]
        if k > 0:
            w -= beta[k - 1] * V[k - 1]
        w -= V[: k + 1].T @ (V[: k + 1] @ w)
        if k + 1 < q:
            beta[k] = np.linalg.norm(w)
            V[k + 1] = w / beta[k]
    return alpha, beta[: q - 1]


@lru_cache(maxsize=64)
def weighted_gauss(weight_name, q):
    """Gauss rule with ``q`` nodes for a named weight, weights summing to 1.

    ``weight_name`` selects one of the bump densities in ``WEIGHTS``.
    """
    fn, a, b = WEIGHTS[weight_name]
    x, w = gauss_legendre(_FINE, a, b)
    wx = fn(x) * w
    keep = wx > 0
    alpha, beta = _lanczos(x[keep], wx[keep], q)
    nodes, vecs = eigh_tridiagonal(alpha, beta)
    wts = vecs[0] ** 2
    nodes.setflags(write=False)
    wts = wts / wts.sum()
    wts.setflags(write=False)
    return nodes, wts


def _bump_interval(u):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where((u > 1) & (u < 2), np.exp(-1.0 / ((u - 1.0) * (2.0 - u))), 0.0)


def _bump_ball1(x):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(np.abs(x) < 1, np.exp(-1.0 / (1.0 - x * x)), 0.0)


def _bump_radial2(r):
    return _bump_ball1(r) * r


def _dbump_interval(u):
    # |d/du| of the interval bump
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = (u - 1.0) * (2.0 - u)
        return np.where(g > 0, np.abs(np.exp(-1.0 / g) * (3.0 - 2.0 * u) / g**2), 0.0)


def _dbump_ball1(x):
    # |d/dx| of the ball bump
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = 1.0 - x * x
        return np.where(g > 0, np.abs(np.exp(-1.0 / g) * 2.0 * x / g**2), 0.0)


def _dbump_radial2(r):
    return _dbump_ball1(r) * r


WEIGHTS = {
    "psi": (_bump_interval, 1.0, 2.0),
    "phi1": (_bump_ball1, -1.0, 1.0),
    "phi2r": (_bump_radial2, 0.0, 1.0),
    "dpsi_lo": (_dbump_interval, 1.0, 1.5),
    "dpsi_hi": (_dbump_interval, 1.5, 2.0),
    "dphi1": (_dbump_ball1, 0.0, 1.0),
    "dphi2r": (_dbump_radial2, 0.0, 1.0),
}
