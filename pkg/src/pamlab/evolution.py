"""Cauchy problem dv/dt = Delta v + xi v on a box, and its Feynman-Kac estimators."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from . import kernels
from ._fallback import Xoshiro256
from .errors import DomainError, EvolutionError
from .potential import BoxSpec, PotentialField
from .spectral import LatticeOperator

EIG_MAX = 4096
FK_CHUNK = 8192


@dataclass
class SolutionState:
    """v(t, .) = exp(log_scale) * values on the box (row-major)."""

    time: float
    box: BoxSpec
    values: np.ndarray
    log_scale: float = 0.0
    method: str = ""
    boundary_mass: float = 0.0

    def scaled(self, c):
        return SolutionState(self.time, self.box, self.values * c, self.log_scale, self.method,
                             self.boundary_mass * c)

    def dense_values(self):
        return self.values * math.exp(self.log_scale)


def initial_state(box: BoxSpec):
    v = np.zeros(box.n_sites)
    v[box.origin_index()] = 1.0
    return SolutionState(0.0, box, v.reshape(box.shape), 0.0, "initial", 0.0)


def total_mass(state: SolutionState) -> float:
    """U(t) = sum_z v(t, z)."""
    return float(np.sum(state.values)) * math.exp(state.log_scale)


def log_total_mass(state: SolutionState) -> float:
    s = float(np.sum(state.values))
    return (math.log(s) if s > 0 else -math.inf) + state.log_scale


def _boundary_mask(box):
    idx = np.indices(box.shape) - box.radius
    return np.any(np.abs(idx) == box.radius, axis=0)


def stiffness_ratio(op: LatticeOperator):
    """Crude ratio of the Gershgorin spectral radius to the smallest diagonal magnitude."""
    diag = np.abs(op.potential - 2.0 * op.box.d)
    return float(op.norm_bound() / max(diag.min(), 1e-300))


def evolve(field: PotentialField, t: float, tol: float = 1e-10, method: str = "radau") -> SolutionState:
    """Solve dv/dt = Delta v + xi v on the field box with zero boundary, v(0) = delta_0.

    method "radau": adaptive implicit Runge-Kutta (stiff-capable) with
    rtol = tol and atol = 1e-3 tol on the shifted system A - c I, c = max xi,
    so the integrated vector stays bounded; the shift is restored in
    log_scale.  method "eig": exact via the symmetric eigen-decomposition
    (boxes up to EIG_MAX sites).  method "expm": Al-Mohy-Higham action of
    the matrix exponential.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    box = field.box
    if t == 0:
        return initial_state(box)
    op = LatticeOperator(box, field.values)
    c = float(np.max(field.values))
    e0 = np.zeros(box.n_sites)
    e0[box.origin_index()] = 1.0
    if method == "eig":
        if box.n_sites > EIG_MAX:
            raise DomainError(f"eig path limited to {EIG_MAX} sites")
        w, Q = sla.eigh(op.dense())
        top = float(w[-1])
        v = Q @ (np.exp(t * (w - top)) * Q[box.origin_index()])
        log_scale = t * top
    elif method == "expm":
        A = op.matrix - c * _identity(box.n_sites)
        v = expm_multiply(A * t, e0)
        log_scale = c * t
    elif method == "radau":
        A = (op.matrix - c * _identity(box.n_sites)).tocsc()
        sol = solve_ivp(lambda _s, y: A @ y, (0.0, float(t)), e0, method="Radau", jac=A,
                        rtol=tol, atol=tol * 1e-3, t_eval=[float(t)])
        if sol.status != 0:
            raise EvolutionError(f"integration failed: {sol.message} (stiffness ratio ~ {stiffness_ratio(op):.3g})",
                                 stiffness_ratio=stiffness_ratio(op))
        v = sol.y[:, -1]
        log_scale = c * t
    else:
        raise DomainError(f"unknown method {method!r}")
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    # the semigroup is positive; tiny negatives are round-off
    neg = float(-np.min(v, initial=0.0))
    if neg > max(1e3 * tol, 1e-12) * max(scale, 1e-300) and method == "radau":
        raise EvolutionError(f"negative values of size {neg:.3g} exceed the tolerance",
                             stiffness_ratio=stiffness_ratio(op))
    v = np.maximum(v, 0.0).reshape(box.shape)
    bmass = float(np.sum(v[_boundary_mask(box)])) * math.exp(log_scale) if box.radius > 0 else 0.0
    return SolutionState(float(t), box, v, log_scale, method, bmass)


def _identity(n):
    import scipy.sparse as sp

    return sp.identity(n, format="csr")


def default_box_radius(t, d, xi_max=0.0, R=None, alpha=None):
    """max(3 R alpha, ceil(4 sqrt(d t)) + ceil(t max xi+)^(1/2))."""
    r = math.ceil(4 * math.sqrt(d * t)) + math.ceil(t * max(xi_max, 0.0)) ** 0.5
    if R is not None and alpha is not None:
        r = max(r, 3 * R * alpha)
    return int(math.ceil(r))


# ---------------------------------------------------------------------------
# Feynman-Kac
# ---------------------------------------------------------------------------

class FKEstimate(NamedTuple):
    mean: float
    stderr: float


@dataclass
class LocalTimes:
    """Occupation times of one walk path and its endpoint."""

    times: dict
    endpoint: tuple
    jumps: int = 0
    absorbed: bool = False

    def total(self):
        return math.fsum(self.times.values())

    def pairing(self, field: PotentialField):
        """<l_t, xi> for a field on a box containing the path."""
        r = field.box.radius
        return math.fsum(ell * field.values[tuple(np.asarray(z) + r)] for z, ell in self.times.items())


def simulate_local_times(d, t, seed, replica=0, limit=None) -> LocalTimes:
    """One walk path with the same random stream as the weight kernels."""
    rng = Xoshiro256(seed, replica)
    rate = 2.0 * d
    pos = [0] * d
    times: dict = {}
    elapsed = 0.0
    jumps = 0
    while True:
        u = rng.next_unit()
        hold = -math.log1p(-u) / rate
        key = tuple(pos)
        if elapsed + hold >= t:
            times[key] = times.get(key, 0.0) + (t - elapsed)
            return LocalTimes(times, key, jumps, False)
        times[key] = times.get(key, 0.0) + hold
        elapsed += hold
        k = int(rng.next_unit() * rate)
        ax = k >> 1
        pos[ax] += -1 if k & 1 else 1
        jumps += 1
        if limit is not None and abs(pos[ax]) > limit:
            return LocalTimes(times, tuple(pos), jumps, True)


def fk_log_weights(field: PotentialField, t, N, seed, limit=None, threads=1):
    """<l_t, xi> per replica (-inf for absorbed paths), replica order 0..N-1."""
    box = field.box
    lim = box.radius if limit is None else min(int(limit), box.radius)
    starts = list(range(0, N, FK_CHUNK))

    def run(s):
        return kernels.walk_log_weights(field.flat, box.d, box.radius, lim, t, seed, s, min(FK_CHUNK, N - s))[0]

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts) if parts else np.zeros(0)


def _mean_stderr(w):
    n = w.size
    mean = float(np.mean(w))
    if n < 2:
        return FKEstimate(mean, math.inf)
    sd = float(np.std(w, ddof=1))
    return FKEstimate(mean, sd / math.sqrt(n))


def fk_estimate(field: PotentialField, t, N, seed, threads=1) -> FKEstimate:
    """Mean and standard error of exp(<l_t, xi>) over N walks from the origin.

    Walks run with total jump rate 2d; a walk leaving the field box is
    absorbed (weight 0), which matches evolve() with zero boundary.
    """
    w = np.exp(fk_log_weights(field, t, N, seed, None, threads))
    return _mean_stderr(w)


def fk_restricted(field: PotentialField, t, R, table, N, seed, threads=1) -> FKEstimate:
    """As fk_estimate, but walks leaving B_{3 R alpha(t)} contribute 0."""
    a = table.alpha(t, field.box.d)
    lim = restricted_limit(field.box, R, a)
    w = np.exp(fk_log_weights(field, t, N, seed, lim, threads))
    return _mean_stderr(w)


def restricted_limit(box, R, alpha):
    return min(int(math.floor(3 * R * alpha)), box.radius)


def fk_csv_row(t, est: FKEstimate, N, seed):
    return [repr(float(t)), repr(est.mean), repr(est.stderr), str(int(N)), str(int(seed))]
