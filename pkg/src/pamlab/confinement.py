"""Shape distances to the parabola, rate checks and the confinement experiment."""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, WeightError
from .evolution import evolve, log_total_mass
from .grid import GridFunction
from .potential import (BoxSpec, PotentialDistribution, PotentialField, StepFunction, TiltSpec,
                        sample_tilted)
from .spectral import principal_eigen_discrete
from .variational import parabola_psi_hat, psi_hat_value, rate_H_R

ESS_WARN = 10.0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _phi(s):
    return s / (1.0 + s)


class DistValue(NamedTuple):
    value: float
    tail: float


def _evaluate(f, grid: GridFunction):
    if isinstance(f, GridFunction):
        return f(grid.points())
    if isinstance(f, StepFunction):
        return f(grid.points().reshape(-1, grid.d)).reshape(grid.shape)
    return np.asarray(f(grid.points()), dtype=float) * np.ones(grid.shape)


def dist_global(f1, f2, r_max, d=1, h=0.01) -> DistValue:
    """sum_{r=1}^{r_max} 2^-r phi(int_{Q_r} |f1 - f2|) and the neglected tail 2^-r_max.

    f1, f2: GridFunctions (zero outside their cube), StepFunctions or
    callables on arrays of shape (..., d).  Integrals use the trapezoid rule
    on a grid of spacing h over each Q_r (h must divide 1).
    """
    if isinstance(f1, GridFunction):
        d = f1.d
    k = 1.0 / h
    if abs(k - round(k)) > 1e-9:
        raise DomainError("h must divide 1")
    g = GridFunction.zeros(d, float(r_max), h)
    diff = np.abs(_evaluate(f1, g) - _evaluate(f2, g))
    full = g.with_values(diff)
    total = 0.0
    for r in range(1, int(r_max) + 1):
        total += 2.0 ** -r * _phi(full.restrict(float(r)).integrate())
    return DistValue(total, 2.0 ** -int(r_max))


def dist_box(psi1: GridFunction, psi2: GridFunction, R, rho) -> float:
    """int_{Q_R} |exp(psi1/rho) - exp(psi2/rho)|."""
    a = psi1.restrict(R) if psi1.L > R else psi1
    b = psi2.restrict(R) if psi2.L > R else psi2
    return a.integrate(np.abs(np.exp(a.values / rho) - np.exp(b.values / rho)))


@dataclass
class ShapeDistance:
    value: float
    argmin_shift: np.ndarray
    M: float
    R: float


def profile_grid(psi, R, h, d=None):
    """Sample psi on the grid over Q_{3R} with spacing h."""
    if isinstance(psi, GridFunction):
        d = psi.d
        if abs(psi.h - h) < 1e-12 and psi.L >= 3 * R - 1e-12:
            return psi.restrict(3 * R) if psi.L > 3 * R + 1e-12 else psi
    if isinstance(psi, StepFunction):
        d = psi.d
    g = GridFunction.zeros(d, 3 * R, h)
    return g.with_values(_evaluate(psi, g))


def best_shift_distance(psi, R, M, rho, h=0.05, shifts=None, d=None) -> ShapeDistance:
    """min over shifts x in Q_{2R} of int_{Q_R} |exp((psi(x+y) ^ M)/rho) - exp(psi_hat(y)/rho)| dy.

    M may be a sequence; the distance is then minimized over the levels as
    well (membership in the far set must hold for every level).  shifts:
    None for every grid-aligned shift, or an array of shift vectors that are
    multiples of h.  Ties go to the lexicographically first shift.
    """
    prof = profile_grid(psi, R, h, d)
    d = prof.d
    Ms = list(M) if isinstance(M, (list, tuple, np.ndarray)) else [M]
    tgt = parabola_psi_hat(rho, d, (R, h))
    tv = np.exp(tgt.values / rho)
    tw = tgt.weights()
    n_shift = int(round(4 * R / h)) + 1
    best = None
    for m in Ms:
        f = np.exp(np.minimum(prof.values, m) / rho)
        if shifts is None:
            D = kernels.shift_l1_scan(f, tv, tw, n_shift)
            flat = int(np.argmin(D))
            idx = np.unravel_index(flat, D.shape)
            val = float(D[idx])
            x = np.array([-2 * R + h * i for i in idx])
        else:
            sh = np.atleast_2d(np.asarray(shifts, dtype=float))
            if sh.size == 0:
                raise DomainError("shift grid is empty")
            nR = int(round(2 * R / h)) + 1
            vals = []
            for x in sh:
                off = np.rint((x + 2 * R) / h).astype(int)
                if np.any(np.abs(off * h - (x + 2 * R)) > 1e-9) or np.any(off < 0) or np.any(off >= n_shift):
                    raise DomainError(f"shift {x} is not a grid point of Q_{2 * R}")
                sl = tuple(slice(o, o + nR) for o in off)
                vals.append(float(np.sum(tw * np.abs(f[sl] - tv))))
            order = sorted(range(len(vals)), key=lambda i: (vals[i], tuple(sh[i])))
            val = vals[order[0]]
            x = sh[order[0]]
        if best is None or val < best.value:
            best = ShapeDistance(val, x, m, R)
    return best


# ---------------------------------------------------------------------------
# functionals on profiles
# ---------------------------------------------------------------------------

def log_L3R(psi, R, rho):
    """log L_{3R}(psi).

    For a StepFunction the integral is the cell sum alpha^-d sum_z exp(psi_z/rho)
    over its whole lattice box (the box B_{3R alpha}); for a GridFunction it is
    the trapezoid integral over Q_{3R}.
    """
    if isinstance(psi, StepFunction):
        v = psi.values / rho
        m = float(np.max(v))
        return math.log(rho) - 1.0 - psi.d * math.log(psi.alpha) + m + math.log(float(np.sum(np.exp(v - m))))
    g = psi.restrict(3 * R) if psi.L > 3 * R + 1e-12 else psi
    v = g.values / rho
    m = float(np.max(v))
    s = g.integrate(np.exp(v - m))
    return math.log(rho) - 1.0 + m + math.log(s) if s > 0 else -math.inf


def L3R(psi, R, rho):
    return math.exp(log_L3R(psi, R, rho))


def functional_F(psi, t, R, rho, table, d=None) -> float:
    """log F_{t,R}(psi) = (t/alpha^2) rho log((e/rho) L_{3R}(psi))."""
    dd = psi.d if d is None else d
    a = table.alpha(t, dd)
    return (t / a ** 2) * rho * (1.0 + log_L3R(psi, R, rho) - math.log(rho))


def d_beta_member(psi, beta, R, rho) -> bool:
    """|L_{3R}(psi) - rho| <= beta."""
    return abs(L3R(psi, R, rho) - rho) <= beta


# ---------------------------------------------------------------------------
# deterministic cumulant rate
# ---------------------------------------------------------------------------

class PiecewiseConstant:
    """Tensor piecewise-constant function: values[i, j, ...] on [b_i, b_{i+1}) x ..."""

    def __init__(self, breaks, values):
        self.values = np.asarray(values, dtype=float)
        self.d = self.values.ndim
        if isinstance(breaks[0], (int, float, np.floating)):
            breaks = [breaks]
        self.breaks = [np.asarray(b, dtype=float) for b in breaks]
        for ax, b in enumerate(self.breaks):
            if len(b) != self.values.shape[ax] + 1 or np.any(np.diff(b) <= 0):
                raise DomainError("breaks must increase and bracket the value array")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.d)
        idx = []
        inside = np.ones(len(pts), dtype=bool)
        for ax, b in enumerate(self.breaks):
            i = np.searchsorted(b, pts[:, ax], side="right") - 1
            inside &= (i >= 0) & (i < len(b) - 1)
            idx.append(np.clip(i, 0, len(b) - 2))
        out = np.where(inside, self.values[tuple(idx)], 0.0)
        return out.reshape(x.shape[:-1])

    def cell_integrals(self, alpha, lo, hi):
        """int of f over [z/alpha, (z+1)/alpha)^d intersected with [lo, hi]^d, for all cells meeting it."""
        zmin = int(math.floor(lo * alpha))
        zmax = int(math.ceil(hi * alpha)) - 1
        zs = np.arange(zmin, zmax + 1)
        mats = []
        for b in self.breaks:
            a0 = np.maximum(zs / alpha, lo)[:, None]
            a1 = np.minimum((zs + 1) / alpha, hi)[:, None]
            o = np.minimum(a1, b[None, 1:]) - np.maximum(a0, b[None, :-1])
            mats.append(np.maximum(o, 0.0))
        c = self.values
        for ax, mtx in enumerate(mats):
            c = np.tensordot(mtx, c, axes=([1], [ax]))
            c = np.moveaxis(c, 0, ax)
        return c

    def integral_xlogx(self, lo, hi):
        """int over [lo, hi]^d of f log f, exact."""
        lens = [np.maximum(np.minimum(b[1:], hi) - np.maximum(b[:-1], lo), 0.0) for b in self.breaks]
        vol = lens[0]
        for l in lens[1:]:
            vol = np.multiply.outer(vol, l)
        v = self.values
        xl = np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
        return float(np.sum(vol * xl))


def cumulant_rate_check(dist, table, f, t, R=None, rho=None, d=None):
    """(finite_t, limit) for the deterministic cumulant of the rescaled potential.

    finite_t = (alpha^2/t) sum_z [H(t c_z) - c_z alpha^d H(t/alpha^d)],
    c_z = int_{cell_z cap Q_R} f, computed exactly from the independence of
    the sites.  limit = rho int_{Q_R} f log f.  f is a PiecewiseConstant
    (exact cell overlaps) or a GridFunction on Q_R (cells integrated by a fine
    midpoint rule).
    """
    rho = dist.rho if rho is None else rho
    if isinstance(f, GridFunction):
        R = f.L if R is None else R
        d = f.d
    else:
        d = f.d if d is None else d
        if R is None:
            raise DomainError("R is required for a piecewise-constant f")
    a = table.alpha(t, d)
    b = table.beta(t, d)
    Hb = table.H(b)
    if isinstance(f, GridFunction):
        c = _grid_cell_integrals(f, a)
        limit = rate_H_R(f, rho)
    else:
        if np.any(f.values < 0):
            raise DomainError("f must be nonnegative")
        c = f.cell_integrals(a, -R, R)
        limit = rho * f.integral_xlogx(-R, R)
    c = c.reshape(-1)
    terms = [table.H(t * cz) - cz * a ** d * Hb for cz in c]
    finite = (a * a / t) * math.fsum(terms)
    return finite, limit


def _grid_cell_integrals(f: GridFunction, alpha, n_sub=64):
    R = f.L
    zmin = int(math.floor(-R * alpha))
    zmax = int(math.ceil(R * alpha)) - 1
    side = zmax - zmin + 1
    out = np.zeros((side,) * f.d)
    sub = (np.arange(n_sub) + 0.5) / n_sub
    for idx in np.ndindex(*out.shape):
        lo = np.array([(zmin + i) / alpha for i in idx])
        a0 = np.maximum(lo, -R)
        a1 = np.minimum(lo + 1 / alpha, R)
        if np.any(a1 <= a0):
            continue
        axes = [a0[k] + (a1[k] - a0[k]) * sub for k in range(f.d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vol = float(np.prod(a1 - a0))
        out[idx] = vol * float(np.mean(f(mesh, outside="clamp")))
    return out


# ---------------------------------------------------------------------------
# multinomial regrouping of the F moment
# ---------------------------------------------------------------------------

def _site_mgf(values, probs, alpha, rho, M, shift, n):
    """<exp(n (alpha^2 (xi - shift) ^ M) / rho)> for one site."""
    return math.fsum(p * math.exp(n * min(alpha * alpha * (v - shift), M) / rho)
                     for v, p in zip(values, probs))


def f_moment_by_sites(values, probs, alpha, rho, M, shift, D, n_sites, d=1):
    """<(alpha^-d sum_b exp((alpha^2 xi_t(b) ^ M)/rho))^D> by enumerating all site values."""
    total = []
    for combo in itertools.product(range(len(values)), repeat=n_sites):
        p = math.prod(probs[i] for i in combo)
        s = alpha ** -d * math.fsum(math.exp(min(alpha * alpha * (values[i] - shift), M) / rho) for i in combo)
        total.append(p * s ** D)
    return math.fsum(total)


def f_moment_by_tuples(values, probs, alpha, rho, M, shift, D, n_sites, d=1):
    """alpha^(-dD) sum over z in B^D of prod_b <exp(#{i: z_i = b} (alpha^2 xi_t ^ M)/rho)>."""
    total = []
    for z in itertools.product(range(n_sites), repeat=D):
        counts = np.bincount(np.array(z, dtype=int), minlength=n_sites) if D else np.zeros(n_sites, int)
        total.append(math.prod(_site_mgf(values, probs, alpha, rho, M, shift, int(c)) for c in counts))
    return alpha ** (-d * D) * math.fsum(total)


def _compositions(D, k):
    if k == 1:
        yield (D,)
        return
    for i in range(D + 1):
        for rest in _compositions(D - i, k - 1):
            yield (i,) + rest


def f_moment_by_compositions(values, probs, alpha, rho, M, shift, D, n_sites, d=1):
    """alpha^(-dD) sum_mu D!/prod (D mu_b)! prod_b <exp(D mu_b (alpha^2 xi_t ^ M)/rho)>."""
    total = []
    for comp in _compositions(D, n_sites):
        coef = math.factorial(D) // math.prod(math.factorial(c) for c in comp)
        total.append(coef * math.prod(_site_mgf(values, probs, alpha, rho, M, shift, c) for c in comp))
    return alpha ** (-d * D) * math.fsum(total)


# ---------------------------------------------------------------------------
# Monte Carlo on B_{3R alpha}
# ---------------------------------------------------------------------------

def confinement_radius(R, alpha):
    """Lattice radius whose cells cover Q_{3R}: ceil(3 R alpha)."""
    return int(math.ceil(3 * R * alpha - 1e-12))


def default_M(rho, d):
    """Truncation levels psi_hat(0) + 1 and 2 (psi_hat(0) + 1)."""
    m = psi_hat_value(rho, d, 0.0) + 1.0
    return [m, 2.0 * m]


def default_tilt(dist, table, t, R, d=1, rho=None):
    """theta_z = (t/alpha^d) e^{-1} exp(psi_hat(z/alpha)/rho) on B_{ceil(3R alpha)}."""
    rho = dist.rho if rho is None else rho
    a = table.alpha(t, d)
    b = table.beta(t, d)
    r = confinement_radius(R, a)
    box = BoxSpec(d, r)
    z = box.sites() / a
    theta = b * np.exp(psi_hat_value(rho, d, np.sum(z * z, axis=1)) / rho - 1.0)
    return TiltSpec.from_theta(table, theta.reshape(box.shape), label="parabola")


def uniform_tilt(dist, table, t, R, y, d=1):
    """theta_z = y t / alpha^d on every site of B_{ceil(3R alpha)}."""
    a = table.alpha(t, d)
    r = confinement_radius(R, a)
    box = BoxSpec(d, r)
    theta = np.full(box.shape, y * table.beta(t, d))
    return TiltSpec.from_theta(table, theta, label=f"uniform(y={y})")


def _replica_rng(seed, t_index, i):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(t_index), int(i)])))


def _draw_field(dist, box, rng, tilt: Optional[TiltSpec]):
    if tilt is None:
        u = (rng.integers(0, 1 << 53, size=box.n_sites, dtype=np.int64).astype(float) + 0.5) * 2.0 ** -53
        return dist.quantile(u).reshape(box.shape), 0.0
    xi = sample_tilted(dist, tilt.theta, rng)
    return xi, tilt.log_likelihood_ratio(xi)


def _log_mean_exp(x):
    x = np.asarray(x, dtype=float)
    m = float(np.max(x))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.mean(np.exp(x - m))))


def ess(logw):
    logw = np.asarray(logw, dtype=float)
    m = float(np.max(logw))
    if m == -math.inf:
        return 0.0
    w = np.exp(logw - m)
    return float(w.sum() ** 2 / np.sum(w * w))


@dataclass
class MomentEstimate:
    rate: float
    stderr: float
    ess: float
    low_ess: bool
    t: float
    K: float
    M: float
    N: int
    tilt: str = "none"


def annealed_F_moment(dist, table, t, R, K, N, seed, M=None, tilt: Optional[TiltSpec] = None, d=1,
                      rho=None) -> MomentEstimate:
    """(alpha^2/t) log <F_{t,R}(xibar_t ^ M)^(K/rho)> by Monte Carlo with log-sum-exp.

    log F^(K/rho) = D_t log(alpha^-d sum_{z in B} exp((alpha^2 xi_t(z) ^ M)/rho)),
    D_t = K t/alpha^2, B = B_{ceil(3R alpha)}.  Default M = psi_hat(0) + 1.
    The standard error is the delta-method error of the log of the mean.
    """
    rho = dist.rho if rho is None else rho
    if not K > 0:
        raise DomainError("K must be positive")
    a = table.alpha(t, d)
    b = table.beta(t, d)
    shift = table.H(b) / b
    if M is None:
        M = default_M(rho, d)[0]
    box = BoxSpec(d, confinement_radius(R, a))
    Dt = K * t / a ** 2
    logs = np.empty(N)
    for i in range(N):
        rng = _replica_rng(seed, 0, i)
        xi, llr = _draw_field(dist, box, rng, tilt)
        v = np.minimum(a * a * (xi - shift), M) / rho
        m = float(np.max(v))
        logY = -d * math.log(a) + m + math.log(float(np.sum(np.exp(v - m))))
        logs[i] = Dt * logY + llr
    lme = _log_mean_exp(logs)
    w = np.exp(logs - np.max(logs))
    se_log = float(np.std(w, ddof=1) / (math.sqrt(N) * np.mean(w))) if N > 1 else math.inf
    e = ess(logs)
    if e < ESS_WARN:
        warnings.warn(f"effective sample size {e:.2f} below {ESS_WARN}", RuntimeWarning)
    scale = a * a / t
    return MomentEstimate(scale * lme, scale * se_log, e, e < ESS_WARN, t, K, M, N,
                          "none" if tilt is None else tilt.label)


# ---------------------------------------------------------------------------
# confinement experiment
# ---------------------------------------------------------------------------

@dataclass
class ReplicaRecord:
    t: float
    replica: int
    log_weight: float
    distance: float
    argmin_shift: tuple


@dataclass
class ConfinementReport:
    t_grid: list
    R: float
    M: list
    rho: float
    eps_grid: list
    G: list  # G[i][j] for t_grid[i], eps_grid[j]
    G_stderr: list
    effective_sample_size: list
    alpha: list
    tilt: dict
    seeds: dict
    flags: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def to_dict(self, with_records=False):
        out = {k: getattr(self, k) for k in ("t_grid", "R", "M", "rho", "eps_grid", "G", "G_stderr",
                                              "effective_sample_size", "alpha", "tilt", "seeds", "flags")}
        if with_records:
            out["records"] = [r.__dict__ for r in self.records]
        return out


def _replica(dist, table, t, ti, i, R, Ms, rho, d, tilt, seed, h, a, shift, box):
    rng = _replica_rng(seed, ti, i)
    xi, llr = _draw_field(dist, box, rng, tilt)
    xi_t = xi - shift
    V = np.minimum(xi_t, Ms[0] / a ** 2)
    lam = principal_eigen_discrete(V).value
    step = StepFunction(a * a * xi_t, a, box.radius)
    sd = best_shift_distance(step, R, Ms, rho, h=h)
    return ReplicaRecord(t, i, t * lam + llr, sd.value, tuple(float(x) for x in sd.argmin_shift))


def confinement_experiment(dist, table, t_grid, R, M, eps_grid, N, tilt="default", seed=0, d=1, h=0.05,
                           threads=1, rho=None, ess_threshold=50.0) -> ConfinementReport:
    """Weighted tail G_t(eps) of the best-shift distance of the rescaled potential.

    For each t: N fields on B_{ceil(3R alpha)} (tilted when requested), weight
    w = exp(t lambda(xi_t ^ M/alpha^2)) times the likelihood ratio, distance
    D = best_shift_distance(xibar_t, R, M, rho), and
    G_t(eps) = sum w 1{D > eps} / sum w.  tilt: "default" (parabola tilt per
    t), None, or a callable t -> TiltSpec.  M: a level or a list of levels;
    the eigenvalue weight uses the first.
    """
    rho = dist.rho if rho is None else rho
    Ms = list(M) if isinstance(M, (list, tuple)) else [M]
    eps_grid = list(eps_grid)
    Gs, ses, esss, alphas, flags, records = [], [], [], [], [], []
    tilt_desc = {}
    for ti, t in enumerate(t_grid):
        a = table.alpha(t, d)
        b = table.beta(t, d)
        shift = table.H(b) / b
        box = BoxSpec(d, confinement_radius(R, a))
        if tilt == "default":
            ts = default_tilt(dist, table, t, R, d, rho)
        elif tilt is None:
            ts = None
        else:
            ts = tilt(t)
        tilt_desc[repr(float(t))] = None if ts is None else ts.describe()
        job = lambda i: _replica(dist, table, t, ti, i, R, Ms, rho, d, ts, seed, h, a, shift, box)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                recs = list(ex.map(job, range(N)))
        else:
            recs = [job(i) for i in range(N)]
        logw = np.array([r.log_weight for r in recs])
        dists = np.array([r.distance for r in recs])
        m = float(np.max(logw))
        if m == -math.inf or not np.isfinite(m):
            raise WeightError(f"all weights vanish at t={t}")
        w = np.exp(logw - m)
        W = float(w.sum())
        e = float(W * W / np.sum(w * w))
        row = [float(np.sum(w[dists > eps]) / W) for eps in eps_grid]
        Gs.append(row)
        ses.append([math.sqrt(max(g * (1 - g), 0.0) / e) for g in row])
        esss.append(e)
        alphas.append(a)
        if e < ess_threshold:
            flags.append(f"low ESS {e:.1f} at t={t:g}")
        records.extend(recs)
    return ConfinementReport(list(map(float, t_grid)), float(R), Ms, float(rho), eps_grid, Gs, ses, esss, alphas,
                             tilt_desc, {"seed": int(seed)}, flags, records)


# ---------------------------------------------------------------------------
# intermittency
# ---------------------------------------------------------------------------

def log_masses(dist, t_values, box, N, seed):
    """log U(t) for N fields (rows) and each t (columns) via the exact eigen path."""
    from .potential import sample_field

    out = np.empty((N, len(t_values)))
    for i in range(N):
        f = sample_field(dist, box, np.random.SeedSequence([int(seed), i]).generate_state(1, np.uint64)[0])
        for j, t in enumerate(t_values):
            out[i, j] = log_total_mass(evolve(f, t, method="eig"))
    return out


def intermittency_ratio(dist, p, q, t, box, N, seed):
    """<U(t)^p>^(1/p) / <U(t)^q>^(1/q), estimated on N fields; t may be a list (common fields)."""
    ts = list(t) if isinstance(t, (list, tuple, np.ndarray)) else [t]
    if p == q:
        return [1.0] * len(ts) if isinstance(t, (list, tuple, np.ndarray)) else 1.0
    if not 0 < p < q:
        raise DomainError("need 0 < p < q")
    L = log_masses(dist, ts, box, N, seed)
    out = []
    for j in range(len(ts)):
        col = L[:, j]
        out.append(math.exp(_log_mean_exp(p * col) / p - _log_mean_exp(q * col) / q))
    return out if isinstance(t, (list, tuple, np.ndarray)) else out[0]
