"""Uniform periodic tensor mesh of the truncated half-space.

The boundary is the unit torus in ``n - 1`` variables and the vertical
direction is ``t in (0, 1]``.  Cell-centred data are stored as arrays of
shape ``(N,) * (n - 1) + (N,)``: tangential axes first, the vertical axis
last.  Nodal data have ``N + 1`` vertical entries (``t = 0`` included).

Tents, cones and Whitney balls are all handled through *folded ball
kernels*: the weights of a Euclidean ball centred at a boundary node,
wrapped onto the torus.  Correlating a column array with such a kernel
gives the ball sum at every node at once.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import ConfigurationError

__all__ = [
    "HalfSpaceMesh",
    "DyadicTent",
    "Cone",
    "build_mesh",
    "ball_kernel",
    "periodic_correlate",
    "node_ball_max",
    "CylMesh",
]

_SUBSAMPLES = 8


@lru_cache(maxsize=512)
def _ball_kernel(dim, M, spacing, radius, rule, offset):
    reach = int(np.ceil(radius / spacing)) + 2
    d = np.arange(-reach, reach)
    lo = (d - offset) * spacing
    if dim == 1:
        if rule == "center":
            w = (np.abs(lo + 0.5 * spacing) < radius).astype(float)
        else:
            hi = lo + spacing
            w = np.clip(np.minimum(hi, radius) - np.maximum(lo, -radius), 0.0, None) / spacing
        out = np.zeros(M)
        np.add.at(out, d % M, w)
        return out
    d1, d2 = np.meshgrid(d, d, indexing="ij")
    l1, l2 = np.meshgrid(lo, lo, indexing="ij")
    if rule == "center":
        w = ((l1 + 0.5 * spacing) ** 2 + (l2 + 0.5 * spacing) ** 2 < radius**2).astype(float)
    else:
        sub = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES * spacing
        p1 = l1[..., None, None] + sub[:, None]
        p2 = l2[..., None, None] + sub[None, :]
        w = (p1**2 + p2**2 < radius**2).mean(axis=(-1, -2))
    out = np.zeros((M, M))
    np.add.at(out, (d1.ravel() % M, d2.ravel() % M), w.ravel())
    return out


def ball_kernel(dim, M, spacing, radius, rule="center", centered="node"):
    """Folded weights of a ball on a periodic grid.

    Parameters
    ----------
    dim : int
        Tangential dimension (1 or 2).
    M : int
        Grid cells per unit period.
    spacing : float
        Cell width, normally ``1 / M``.
    radius : float
        Ball radius.
    rule : {"center", "overlap"}
        ``"center"`` counts cells whose centre lies in the ball;
        ``"overlap"`` weights cells by the fraction of their area inside it
        (exact in one dimension, 8x8 subsampling in two).
    centered : {"node", "cell"}
        Whether the ball is centred at the lower corner of cell 0 or at its
        centre.

    Returns
    -------
    ndarray of shape ``(M,) * dim``
        Entry ``d`` is the total weight of all periodic copies of the cell
        with offset ``d`` from the centre.
    """
    if rule not in ("center", "overlap"):
        raise ConfigurationError(f"unknown ball rule {rule!r}")
    if centered not in ("node", "cell"):
        raise ConfigurationError(f"unknown ball centring {centered!r}")
    offset = 0.0 if centered == "node" else 0.5
    k = _ball_kernel(int(dim), int(M), float(spacing), float(radius), rule, offset)
    k.setflags(write=False)
    return k


def periodic_correlate(data, kernel):
    """Return ``out[i] = sum_d kernel[d] * data[i + d]`` with periodic wrap.

    ``kernel`` spans the leading axes of ``data``; any trailing axes of
    ``data`` are carried along.
    """
    data = np.asarray(data, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    axes = tuple(range(kernel.ndim))
    shape = data.shape[: kernel.ndim]
    fd = np.fft.rfftn(data, axes=axes)
    fk = np.conj(np.fft.rfftn(kernel, axes=axes))
    fk = fk.reshape(fk.shape + (1,) * (data.ndim - kernel.ndim))
    return np.fft.irfftn(fd * fk, s=shape, axes=axes)


def _window_max(arr, axis, c0, c1):
    # out[i] = max(arr[i + c0 : i + c1]) along ``axis``, periodic
    width = c1 - c0
    m = maximum_filter1d(arr, size=width, axis=axis, mode="wrap", origin=-(width // 2))
    return np.roll(m, -c0, axis=axis)


def node_ball_max(arr, radius, dim):
    """Periodic maximum over the cells that meet the open ball around each node.

    ``arr`` holds cell data on the leading ``dim`` axes; ``radius`` is in
    cell units.  Node ``i`` sits at the lower corner of cell ``i``.
    """
    c = int(np.ceil(radius))
    if dim == 1:
        return _window_max(arr, 0, -c, c)
    out = np.full(arr.shape, -np.inf)
    for d1 in range(-c, c):
        y = 0.0 if d1 in (-1, 0) else min(abs(d1), abs(d1 + 1))
        if y >= radius:
            continue
        half = int(np.ceil(np.sqrt(radius * radius - y * y)))
        row = np.roll(arr, -d1, axis=0)
        out = np.maximum(out, _window_max(row, 1, -half, half))
    return out


@dataclass(frozen=True)
class DyadicTent:
    """The tent ``B(z, r) x (0, r)`` above a boundary node."""

    mesh: "HalfSpaceMesh"
    center: tuple
    scale: float

    def members(self):
        m = self.mesh
        cols = ball_kernel(m.n - 1, m.N, m.h, self.scale, "center") > 0
        cols = np.roll(cols, self.center, axis=tuple(range(m.n - 1)))
        rows = m.tc < self.scale
        return cols[..., None] & rows


@dataclass(frozen=True)
class Cone:
    """Cells of the aperture-one cone above a boundary node.

    A cell belongs to the cone when the horizontal slice of the cone at the
    cell's centre height overlaps the cell, which is the cell-centre rule
    ``|y - x| < t`` up to half a cell.
    """

    mesh: "HalfSpaceMesh"
    vertex: tuple

    def members(self):
        m = self.mesh
        table = m.cone_table > 0
        axes = tuple(range(m.n - 1))
        rolled = np.roll(table, self.vertex, axis=tuple(a + 1 for a in axes))
        return np.moveaxis(rolled, 0, -1)


class HalfSpaceMesh:
    """Periodic tensor grid on ``T^{n-1} x (0, 1]`` with spacing ``2**-J``."""

    def __init__(self, n, J):
        if n not in (2, 3):
            raise ConfigurationError(f"dimension n must be 2 or 3, got {n}")
        if not isinstance(J, (int, np.integer)) or not 3 <= J <= 10:
            raise ConfigurationError(f"resolution exponent J must be an integer in [3, 10], got {J}")
        self.n = int(n)
        self.J = int(J)
        self.N = 2**self.J
        self.h = 1.0 / self.N
        self.xn = np.arange(self.N) * self.h
        self.xc = self.xn + 0.5 * self.h
        self.tn = np.arange(self.N + 1) * self.h
        self.tc = self.tn[:-1] + 0.5 * self.h

    def __repr__(self):
        return f"HalfSpaceMesh(n={self.n}, J={self.J})"

    @property
    def ncols(self):
        return self.N ** (self.n - 1)

    @property
    def cell_shape(self):
        return (self.N,) * self.n

    @property
    def node_shape(self):
        return (self.N,) * (self.n - 1) + (self.N + 1,)

    @property
    def col_shape(self):
        return (self.N,) * (self.n - 1)

    @property
    def num_cells(self):
        return self.N**self.n

    @property
    def cell_volume(self):
        return self.h**self.n

    @property
    def boundary_weight(self):
        return self.h ** (self.n - 1)

    def boundary_nodes(self):
        """Boundary node coordinates, shape ``col_shape + (n - 1,)``."""
        grids = np.meshgrid(*([self.xn] * (self.n - 1)), indexing="ij")
        return np.stack(grids, axis=-1)

    def cell_centers(self):
        """Return ``(x, t)`` of all cell centres: shapes ``cell_shape + (n-1,)`` and ``cell_shape``."""
        grids = np.meshgrid(*([self.xc] * (self.n - 1) + [self.tc]), indexing="ij")
        return np.stack(grids[:-1], axis=-1), grids[-1]

    def nodes(self):
        grids = np.meshgrid(*([self.xn] * (self.n - 1) + [self.tn]), indexing="ij")
        return np.stack(grids[:-1], axis=-1), grids[-1]

    def tent(self, center, j):
        """Dyadic tent of scale ``2**-j`` above the boundary node ``center``."""
        if not 0 <= j <= self.J:
            raise ConfigurationError(f"tent level j must lie in [0, {self.J}]")
        center = (center,) if np.isscalar(center) else tuple(center)
        return DyadicTent(self, tuple(int(c) % self.N for c in center), 2.0**-j)

    def cone(self, vertex):
        vertex = (vertex,) if np.isscalar(vertex) else tuple(vertex)
        return Cone(self, tuple(int(v) % self.N for v in vertex))

    def ball(self, radius, rule="center"):
        return ball_kernel(self.n - 1, self.N, self.h, radius, rule)

    @cached_property
    def cone_table(self):
        """Overlap weights of the cone slice at each level, shape ``(N,) + col_shape``."""
        table = np.stack([self.ball(t, "overlap") for t in self.tc])
        table.setflags(write=False)
        return table

    def whitney_layer(self, k):
        """Dyadic layer index of cell level ``k``: the ``j`` with ``t_c in [2**-j-1, 2**-j)``."""
        return int(np.floor(-np.log2(self.tc[k])))


def build_mesh(n, J):
    """Build the mesh with ``2**J`` cells per unit length in every direction."""
    return HalfSpaceMesh(n, J)


class CylMesh:
    """Cylindrical grid for the complement of a line in three dimensions.

    Coordinates ``(x, theta, r)``: ``x`` periodic with ``2**J`` cells,
    ``theta`` periodic with ``n_theta`` cells, ``r`` uniform on
    ``[h, 1]`` with spacing ``h = 2**-J`` (the axis ``r < h`` is excluded).
    Only the pair ``(n, d) = (3, 1)`` is supported.
    """

    def __init__(self, J, n_theta=8, n=3, d=1):
        if (n, d) != (3, 1):
            raise ConfigurationError(f"only (n, d) = (3, 1) is supported, got ({n}, {d})")
        if not isinstance(J, (int, np.integer)) or not 3 <= J <= 8:
            raise ConfigurationError(f"resolution exponent J must be an integer in [3, 8], got {J}")
        if n_theta < 4:
            raise ConfigurationError("n_theta must be at least 4")
        self.n, self.d = n, d
        self.J = int(J)
        self.N = 2**self.J
        self.h = 1.0 / self.N
        self.n_theta = int(n_theta)
        self.xn = np.arange(self.N) * self.h
        self.thn = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        self.rn = self.h * np.arange(1, self.N + 1)
        self.rc = 0.5 * (self.rn[1:] + self.rn[:-1])

    def __repr__(self):
        return f"CylMesh(J={self.J}, n_theta={self.n_theta})"

    @property
    def node_shape(self):
        return (self.N, self.n_theta, self.N)

    def weight(self, r):
        """Weight ``r**(d + 1 - n)`` of the degenerate operator."""
        return np.asarray(r, dtype=float) ** (self.d + 1 - self.n)
