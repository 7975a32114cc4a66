"""Functions sampled on a uniform tensor grid over the cube Q_L = [-L, L]^d."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import GridError


def _n_intervals(L, h):
    m = 2.0 * L / h
    n = int(round(m))
    if n < 1 or abs(m - n) > 1e-9 * max(1.0, m):
        raise GridError(f"2L/h = {m} is not an integer")
    return n


def snap_half_width(L, h):
    """Smallest L' >= L with 2L'/h integral (up to 1e-9 relative slack)."""
    m = 2.0 * L / h
    n = int(math.ceil(m - 1e-9 * max(1.0, m)))
    return n * h / 2.0


class GridFunction:
    """Values on nodes -L + k h, k = 0..2L/h, along each of d axes.

    Quadrature is the composite trapezoid rule.  Evaluation off the nodes is
    multilinear; outside the cube the function is zero (outside="zero") or
    extended by its nearest node (outside="clamp").
    """

    def __init__(self, values, L, h, d=None):
        v = np.asarray(values, dtype=float)
        self.L = float(L)
        self.h = float(h)
        n = _n_intervals(self.L, self.h) + 1
        if d is None:
            d = v.ndim
        self.d = int(d)
        if v.size != n ** self.d:
            raise GridError(f"expected {n}^{self.d} values, got {v.size}")
        self.values = v.reshape((n,) * self.d)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, d, L, h):
        n = _n_intervals(L, h) + 1
        return cls(np.zeros((n,) * d), L, h, d)

    @classmethod
    def from_function(cls, f: Callable, d, L, h):
        """Sample f(X) where X has shape (..., d)."""
        g = cls.zeros(d, L, h)
        return g.with_values(np.asarray(f(g.points()), dtype=float).reshape(g.shape))

    def with_values(self, values):
        return GridFunction(np.asarray(values, dtype=float).reshape(self.shape), self.L, self.h, self.d)

    def copy(self):
        return self.with_values(self.values.copy())

    # geometry -----------------------------------------------------------
    @property
    def n(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def axis(self):
        return -self.L + self.h * np.arange(self.n)

    def points(self):
        """Node coordinates, shape (n, ..., n, d)."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius_sq(self):
        return np.sum(self.points() ** 2, axis=-1)

    def weights(self):
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, w1)
        return w

    def same_grid(self, other):
        return (isinstance(other, GridFunction) and other.d == self.d
                and abs(other.L - self.L) < 1e-12 and abs(other.h - self.h) < 1e-12)

    # quadrature -----------------------------------------------------------
    def integrate(self, values=None):
        v = self.values if values is None else np.asarray(values, dtype=float).reshape(self.shape)
        return float(np.sum(self.weights() * v))

    def l2_norm(self):
        return math.sqrt(self.integrate(self.values ** 2))

    def grad_sq(self):
        """||grad g||^2 by forward differences with zero outside the grid.

        Consistent with the (2d+1)-point Laplacian: equals <-Delta_h g, g> for
        functions vanishing on the boundary nodes.
        """
        total = 0.0
        v = self.values
        for ax in range(self.d):
            pad = [(0, 0)] * self.d
            pad[ax] = (1, 1)
            vp = np.pad(v, pad)
            dv = np.diff(vp, axis=ax) / self.h
            total += np.sum(dv ** 2)
        return float(total * self.h ** self.d)

    def laplacian(self):
        """Standard (2d+1)-point Laplacian with zero values outside the grid."""
        v = self.values
        out = -2.0 * self.d * v
        for ax in range(self.d):
            pad = [(0, 0)] * self.d
            pad[ax] = (1, 1)
            vp = np.pad(v, pad)
            sl_lo = [slice(None)] * self.d
            sl_hi = [slice(None)] * self.d
            sl_lo[ax] = slice(0, -2)
            sl_hi[ax] = slice(2, None)
            out = out + vp[tuple(sl_lo)] + vp[tuple(sl_hi)]
        return out / self.h ** 2

    # evaluation -----------------------------------------------------------
    def __call__(self, x, outside="zero"):
        x = np.asarray(x, dtype=float)
        shp = x.shape[:-1] if x.shape[-1] == self.d else x.shape
        pts = x.reshape(-1, self.d)
        s = (pts + self.L) / self.h
        if outside == "clamp":
            s = np.clip(s, 0.0, self.n - 1)
        inside = np.all((s >= -1e-12) & (s <= self.n - 1 + 1e-12), axis=1)
        s = np.clip(s, 0.0, self.n - 1)
        i0 = np.minimum(np.floor(s).astype(np.int64), self.n - 2) if self.n > 1 else np.zeros_like(s, dtype=np.int64)
        fr = s - i0
        out = np.zeros(len(pts))
        for corner in range(1 << self.d):
            idx = []
            wgt = np.ones(len(pts))
            for ax in range(self.d):
                bit = (corner >> ax) & 1
                idx.append(i0[:, ax] + bit)
                wgt = wgt * (fr[:, ax] if bit else 1.0 - fr[:, ax])
            out += wgt * self.values[tuple(idx)]
        if outside == "zero":
            out = np.where(inside, out, 0.0)
        return out.reshape(shp)

    def restrict(self, R):
        """Sub-grid on Q_R (R must sit on a node)."""
        k = (self.L - R) / self.h
        ki = int(round(k))
        if ki < 0 or abs(k - ki) > 1e-9:
            raise GridError(f"Q_{R} is not node-aligned inside Q_{self.L}")
        sl = tuple(slice(ki, self.n - ki) for _ in range(self.d))
        return GridFunction(self.values[sl].copy(), R, self.h, self.d)

    def embed(self, L):
        """Zero-extend to the larger node-aligned cube Q_L."""
        k = (L - self.L) / self.h
        ki = int(round(k))
        if ki < 0 or abs(k - ki) > 1e-9:
            raise GridError(f"Q_{L} is not node-aligned around Q_{self.L}")
        return GridFunction(np.pad(self.values, ki), L, self.h, self.d)

    def shifted(self, offset):
        """g(x + offset * h) for an integer node offset, zero filled."""
        offset = np.broadcast_to(np.asarray(offset, dtype=np.int64), (self.d,))
        v = self.values
        out = np.zeros_like(v)
        src = []
        dst = []
        for ax, o in enumerate(offset):
            o = int(o)
            if o >= 0:
                src.append(slice(o, self.n))
                dst.append(slice(0, self.n - o))
            else:
                src.append(slice(0, self.n + o))
                dst.append(slice(-o, self.n))
        out[tuple(dst)] = v[tuple(src)]
        return self.with_values(out)

    def __repr__(self):
        return f"GridFunction(d={self.d}, L={self.L}, h={self.h}, n={self.n})"
