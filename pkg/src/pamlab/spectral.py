"""Anderson Hamiltonian Delta + V on lattice boxes with zero boundary, and its principal eigenvalue."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import EigenConvergenceError, GridError
from .grid import GridFunction
from .potential import BoxSpec, PotentialField

DENSE_MAX = 1024
LANCZOS_BASIS = 120
LANCZOS_RESTARTS = 200


def _as_potential(V, d=None):
    """Return (values with box shape, BoxSpec)."""
    if isinstance(V, PotentialField):
        return V.values, V.box
    v = np.asarray(V, dtype=float)
    if d is None:
        d = v.ndim
    n = round(v.size ** (1.0 / d))
    if n ** d != v.size or n % 2 == 0:
        raise ValueError("potential must live on a box with odd side length")
    return v.reshape((n,) * d), BoxSpec(d, (n - 1) // 2)


def laplacian_1d(n):
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr")


def lattice_laplacian(shape):
    """Sparse zero-boundary Laplacian on a tensor box, row-major order."""
    return _laplacian_cached(tuple(int(m) for m in shape)).copy()


@functools.lru_cache(maxsize=32)
def _laplacian_cached(shape):
    d = len(shape)
    total = None
    for ax in range(d):
        mats = [sp.identity(m, format="csr") for m in shape]
        mats[ax] = laplacian_1d(shape[ax])
        k = mats[0]
        for m in mats[1:]:
            k = sp.kron(k, m, format="csr")
        total = k if total is None else total + k
    return total.tocsr()


class LatticeOperator:
    """f -> Delta f + V f on a box; out-of-box neighbours count as zero."""

    def __init__(self, box: BoxSpec, potential):
        self.box = box
        self.potential = np.array(potential, dtype=float).reshape(-1)
        self.potential.setflags(write=False)
        if self.potential.size != box.n_sites:
            raise ValueError("potential size does not match the box")
        self.matrix = (lattice_laplacian(box.shape) + sp.diags(self.potential)).tocsr()

    @classmethod
    def from_potential(cls, V, d=None):
        vals, box = _as_potential(V, d)
        return cls(box, vals)

    @property
    def n(self):
        return self.box.n_sites

    def matvec(self, f):
        return self.matrix @ f

    def __matmul__(self, f):
        return self.matrix @ f

    def dense(self):
        return self.matrix.toarray()

    def norm_bound(self):
        """Gershgorin bound on the spectral radius."""
        return 4.0 * self.box.d + float(np.max(np.abs(self.potential), initial=0.0))

    def rayleigh(self, f):
        f = np.asarray(f, dtype=float).reshape(-1)
        return float(f @ (self.matrix @ f) / (f @ f))


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float
    method: str = "dense"

    def as_field(self, box):
        return PotentialField(box, self.vector.reshape(box.shape))


def _fix_sign(v):
    v = np.asarray(v, dtype=float).reshape(-1)
    s = np.sum(v)
    if s < 0:
        v = -v
    # the principal vector is one-signed; round-off negatives are dropped
    v = np.abs(v)
    return v / np.linalg.norm(v)


def _dense_top(op: LatticeOperator):
    A = op.dense()
    n = A.shape[0]
    w, vec = sla.eigh(A, subset_by_index=[n - 1, n - 1])
    v = _fix_sign(vec[:, 0])
    lam = float(w[0])
    res = float(np.linalg.norm(op.matvec(v) - lam * v))
    return EigenResult(lam, v, 1, res, "dense")


def lanczos_top(op: LatticeOperator, tol=1e-10, basis=LANCZOS_BASIS, restarts=LANCZOS_RESTARTS, v0=None):
    """Largest eigenpair by Lanczos with full reorthogonalization and explicit restarts.

    Each cycle builds a Krylov basis of at most `basis` vectors from the
    current start vector (all ones at first), reorthogonalizing every new
    vector twice against the whole basis.  The cycle stops early when the
    Ritz residual estimate beta_j |s_j| drops below tol; the true residual
    ||A y - theta y|| is then checked.  Otherwise the next cycle restarts
    from the top Ritz vector.
    """
    n = op.n
    m = min(basis, n)
    v = np.ones(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    v /= np.linalg.norm(v)
    # residuals below this are round-off
    floor = 64 * np.finfo(float).eps * op.norm_bound() * math.sqrt(n)
    target = max(tol, floor)
    total_it = 0
    best = (None, math.inf, v)
    for _cycle in range(restarts):
        Q = np.zeros((m + 1, n))
        a = np.zeros(m)
        b = np.zeros(m)
        Q[0] = v
        y = v
        theta = op.rayleigh(v)
        for j in range(m):
            w = op.matvec(Q[j])
            total_it += 1
            a[j] = Q[j] @ w
            w -= a[j] * Q[j]
            if j > 0:
                w -= b[j - 1] * Q[j - 1]
            for _ in range(2):
                w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
            b[j] = np.linalg.norm(w)
            last = (j == m - 1) or b[j] <= floor
            if j % 5 == 4 or last:
                if j == 0:
                    ev, S = np.array([a[0]]), np.ones((1, 1))
                else:
                    ev, S = sla.eigh_tridiagonal(a[: j + 1], b[:j])
                theta = float(ev[-1])
                s = S[:, -1]
                est = abs(b[j] * s[-1])
                if est <= target or last:
                    y = Q[: j + 1].T @ s
                    y /= np.linalg.norm(y)
                    res = float(np.linalg.norm(op.matvec(y) - theta * y))
                    if res < best[1]:
                        best = (theta, res, y)
                    if res <= target:
                        return EigenResult(theta, _fix_sign(y), total_it, res, "lanczos")
                    if last:
                        break
            if b[j] > floor:
                Q[j + 1] = w / b[j]
        v = y
    raise EigenConvergenceError(
        f"Lanczos did not converge: best Rayleigh quotient {best[0]}, residual {best[1]:.3g}",
        value=best[0], residual=best[1], iterations=total_it)


def principal_eigen_discrete(V, tol=1e-10, method="auto", d=None) -> EigenResult:
    """Top of the spectrum of Delta + V with zero boundary.

    V is a PotentialField or an array with box shape.  method: "dense"
    (symmetric eigen-decomposition), "lanczos", or "auto" (dense up to
    DENSE_MAX sites).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = V if isinstance(V, LatticeOperator) else LatticeOperator.from_potential(V, d)
    if method == "auto":
        method = "dense" if op.n <= DENSE_MAX else "lanczos"
    if method == "dense":
        res = _dense_top(op)
        if res.residual > max(tol, 1e3 * np.finfo(float).eps * op.norm_bound() * math.sqrt(op.n)):
            raise EigenConvergenceError("dense eigensolver residual above tolerance",
                                        value=res.value, residual=res.residual, iterations=1)
        return res
    if method == "lanczos":
        return lanczos_top(op, tol)
    raise ValueError(f"unknown method {method!r}")


def dirichlet_chain_top(n_sites):
    """Closed form top eigenvalue of the zero-boundary chain Laplacian on n sites."""
    return -2.0 * (1.0 - math.cos(math.pi / (n_sites + 1)))


# ---------------------------------------------------------------------------
# continuum bridge
# ---------------------------------------------------------------------------

def discretize_continuum(psi: Union[GridFunction, Callable], t, table, radius=None, d=None, n_sub=None):
    """Cell averages psi^d(z) = alpha^d int_{z/alpha + [0, 1/alpha)^d} psi on B_radius.

    Each cell is split into n_sub^d sub-cells (spacing at most the grid
    spacing) and psi is evaluated at their midpoints.  A GridFunction is
    interpolated multilinearly and extended by its nearest node outside its
    cube; a callable is evaluated directly on arrays of shape (..., d).
    """
    if isinstance(psi, GridFunction):
        d = psi.d
    elif d is None:
        raise ValueError("d is required for callable psi")
    a = table.alpha(t, d)
    cell = 1.0 / a
    if isinstance(psi, GridFunction):
        if psi.h > cell * (1 + 1e-12):
            raise GridError(f"grid spacing {psi.h} is coarser than the cell width 1/alpha = {cell:.6g}; refine the grid")
        if radius is None:
            radius = int(math.floor(psi.L * a))
        m = n_sub or max(2, int(math.ceil(cell / psi.h)))
        f = lambda x: psi(x, outside="clamp")
    else:
        if radius is None:
            raise ValueError("radius is required for callable psi")
        m = n_sub or 8
        f = psi
    radius = int(radius)
    side = 2 * radius + 1
    sub = (np.arange(m) + 0.5) / (m * a)
    z = np.arange(-radius, radius + 1) / a
    # points along one axis: (side, m)
    ax = z[:, None] + sub[None, :]
    grids = np.meshgrid(*([ax.reshape(-1)] * d), indexing="ij")
    pts = np.stack(grids, axis=-1)
    vals = np.asarray(f(pts), dtype=float).reshape((side * m,) * d)
    # average each block of m^d sub-cells
    shp = []
    for _ in range(d):
        shp += [side, m]
    vals = vals.reshape(shp)
    return vals.mean(axis=tuple(range(1, 2 * d, 2)))


def rescaled_eigen(psi, R, t, table, tol=1e-10, method="auto", d=None):
    """alpha^2 * lambda^d(psi^d / alpha^2) on B_{floor(R alpha)}."""
    dd = psi.d if isinstance(psi, GridFunction) else d
    a = table.alpha(t, dd)
    r = int(math.floor(R * a))
    V = discretize_continuum(psi, t, table, radius=r, d=dd)
    return a * a * principal_eigen_discrete(V / (a * a), tol, method).value


def sub_box_centers(N, spacing, r_sub, d):
    """Centers k*spacing whose box of radius r_sub meets B_N."""
    kmax = (N + r_sub) // spacing
    ks = np.arange(-kmax, kmax + 1) * spacing
    mesh = np.meshgrid(*([ks] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def box_decomposition_gap(V, R, t=None, table=None, alpha=None, tol=1e-10):
    """(lambda on the big box, max over shifted sub-boxes spacing*k + B_{3R alpha}).

    Sub-box centers sit on the lattice k * round(4 R alpha); each sub-box is
    intersected with the big box before its eigenvalue is taken.
    """
    vals, box = _as_potential(V)
    if alpha is None:
        alpha = table.alpha(t, box.d)
    d, N = box.d, box.radius
    spacing = max(1, int(round(4 * R * alpha)))
    r_sub = int(math.floor(3 * R * alpha))
    lam_big = principal_eigen_discrete(vals, tol).value
    best = -math.inf
    for c in sub_box_centers(N, spacing, r_sub, d):
        lo = np.maximum(c - r_sub, -N) + N
        hi = np.minimum(c + r_sub, N) + N
        if np.any(hi < lo):
            continue
        sl = tuple(slice(int(l), int(h) + 1) for l, h in zip(lo, hi))
        lam = _rect_top(vals[sl], tol)
        best = max(best, lam)
    return lam_big, best


def _rect_top(sub, tol):
    """Top eigenvalue of Delta + V on a rectangular (possibly non-cubic) block."""
    A = lattice_laplacian(sub.shape) + sp.diags(sub.reshape(-1))
    n = A.shape[0]
    if n <= DENSE_MAX:
        return _dense_top_matrix(A)
    op = _MatrixOp(A)
    return lanczos_top(op, tol).value


class _MatrixOp:
    def __init__(self, A):
        self.matrix = A.tocsr()
        self.n = A.shape[0]

    def matvec(self, f):
        return self.matrix @ f

    def rayleigh(self, f):
        return float(f @ (self.matrix @ f) / (f @ f))

    def norm_bound(self):
        return float(abs(self.matrix).sum(axis=1).max())

    def dense(self):
        return self.matrix.toarray()


def fit_box_constant(gaps, R, alpha):
    """Smallest C with gap <= C / (R^2 alpha^2) for every sample."""
    g = np.maximum(np.asarray(gaps, dtype=float), 0.0)
    return float(np.max(g) * R * R * alpha * alpha) if g.size else 0.0


def _dense_top_matrix(A):
    """Top eigenvalue of a small sparse symmetric matrix by dense decomposition."""
    n = A.shape[0]
    return float(sla.eigh(A.toarray(), eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])
