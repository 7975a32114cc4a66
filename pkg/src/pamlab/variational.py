"""Rate functionals, the log-Sobolev functional and its constrained minimization on grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from . import kernels
from .errors import DomainError, GridError, InfeasibleConstraintError
from .grid import GridFunction, snap_half_width
from .spectral import _MatrixOp, _dense_top_matrix, lanczos_top, DENSE_MAX, lattice_laplacian


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def log_functional_L(psi: GridFunction, rho):
    """log of (rho/e) int exp(psi/rho), evaluated with a max shift."""
    m = float(np.max(psi.values))
    s = psi.integrate(np.exp((psi.values - m) / rho))
    if s <= 0:
        return -math.inf
    return math.log(rho) - 1.0 + m / rho + math.log(s)


def functional_L(psi: GridFunction, rho) -> float:
    """(rho/e) int_{Q_L} exp(psi/rho) by trapezoid quadrature."""
    v = log_functional_L(psi, rho)
    return math.exp(v) if v < 709.0 else math.inf


def _xlogx(f):
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] = f[pos] * np.log(f[pos])
    return out


def entropy_H(g: GridFunction, rho) -> float:
    """rho int g^2 log g^2 with 0 log 0 = 0."""
    if np.any(g.values < 0):
        raise DomainError("entropy_H expects g >= 0")
    return rho * g.integrate(_xlogx(g.values ** 2))


def rate_H_R(f: GridFunction, rho) -> float:
    """rho int f log f with 0 log 0 = 0."""
    if np.any(f.values < 0):
        raise DomainError("rate_H_R expects f >= 0")
    return rho * f.integrate(_xlogx(f.values))


def chi_closed_form(rho, d) -> float:
    """rho d (1 - log(rho/pi)/2)."""
    if not rho > 0 or d < 1:
        raise DomainError("need rho > 0 and d >= 1")
    return rho * d * (1.0 - 0.5 * math.log(rho / math.pi))


def psi_hat_value(rho, d, r2):
    return rho + rho * (d / 2.0) * math.log(rho / math.pi) - rho * rho * r2


def lambda_psi_hat(rho, d):
    """Principal eigenvalue of Delta + psi_hat: rho - rho d + rho (d/2) log(rho/pi)."""
    return rho - rho * d + rho * (d / 2.0) * math.log(rho / math.pi)


def _template(grid, d=None):
    if isinstance(grid, GridFunction):
        return grid
    L, h = grid
    return GridFunction.zeros(d, snap_half_width(L, h), h)


def parabola_psi_hat(rho, d, grid) -> GridFunction:
    """psi_hat(x) = rho + rho (d/2) log(rho/pi) - rho^2 |x|^2 on the grid."""
    g = _template(grid, d)
    return g.with_values(psi_hat_value(rho, g.d, g.radius_sq()))


def gaussian_g_hat(rho, d, grid) -> GridFunction:
    """g_hat(x) = (rho/pi)^(d/4) exp(-rho |x|^2 / 2)."""
    g = _template(grid, d)
    return g.with_values((rho / math.pi) ** (g.d / 4.0) * np.exp(-0.5 * rho * g.radius_sq()))


def dirichlet_energy(g: GridFunction) -> float:
    """||grad_h g||^2 with zero values outside the cube."""
    return g.grad_sq()


def J_value(g: GridFunction, rho) -> float:
    """||grad g||^2 - H(g^2)."""
    return g.grad_sq() - rho * g.integrate(_xlogx(g.values ** 2))


# ---------------------------------------------------------------------------
# eigenvalue of Delta + psi on a cube
# ---------------------------------------------------------------------------

def _interior(g: GridFunction):
    sl = tuple(slice(1, g.n - 1) for _ in range(g.d))
    return g.values[sl]


def eigen_continuum(psi: GridFunction, tol=1e-10) -> float:
    """Top eigenvalue of the (2d+1)-point Laplacian plus psi, zero boundary on the cube.

    Unknowns are the interior nodes; the eigenvalue is h^-2 times the lattice
    eigenvalue of Delta^d + h^2 psi.
    """
    h = psi.h
    V = _interior(psi) * h * h
    if V.size == 0:
        raise GridError("grid has no interior nodes")
    A = (lattice_laplacian(V.shape) + sp.diags(V.reshape(-1))).tocsr()
    if A.shape[0] <= DENSE_MAX:
        lam = _dense_top_matrix(A)
    else:
        lam = lanczos_top(_MatrixOp(A), tol * h * h).value
    return lam / (h * h)


def legendre_gap(psi: GridFunction, g: GridFunction, rho) -> float:
    """L(psi) - [<g^2, psi> - H(g^2)]."""
    f = g.values ** 2
    return functional_L(psi, rho) - (psi.integrate(f * psi.values) - rho * psi.integrate(_xlogx(f)))


# ---------------------------------------------------------------------------
# relative entropy
# ---------------------------------------------------------------------------

def relative_entropy_masses(p, q, tol=1e-8):
    """sum p log(p/q) for probability vectors; +inf if p > 0 where q = 0."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if np.any(p < 0) or np.any(q < 0):
        raise DomainError("masses must be nonnegative")
    if abs(p.sum() - 1) > tol or abs(q.sum() - 1) > tol:
        raise DomainError("masses must sum to 1")
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def relative_entropy(p, q, tol=1e-8) -> float:
    """int p log(p/q) for two densities on the same grid (or probability vectors)."""
    if not isinstance(p, GridFunction):
        return relative_entropy_masses(p, q, tol)
    if not p.same_grid(q):
        raise GridError("p and q must share a grid")
    w = p.weights()
    return relative_entropy_masses(w * p.values, w * q.values, tol)


def l1_distance(p, q) -> float:
    if isinstance(p, GridFunction):
        return p.integrate(np.abs(p.values - q.values))
    return float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


# ---------------------------------------------------------------------------
# minimization of J on the unit sphere
# ---------------------------------------------------------------------------

@dataclass
class ChiOptions:
    gtol: float = 1e-6
    max_iter: int = 4000
    precondition: bool = True
    shift: Optional[float] = None  # c in the preconditioner (c - Delta); default rho (2 + d)
    init: object = "bump"  # "bump", "gaussian", or an array / GridFunction
    armijo: float = 1e-4
    step0: float = 1.0
    seed: int = 0
    trace: bool = False


@dataclass
class VariationalResult:
    value: float
    minimizer: GridFunction
    iterations: int
    grad_norm: float
    feasibility_residual: float
    converged: bool = True
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


class _SphereProblem:
    """J on interior nodes with zero boundary; L^2 inner product with weight h^d."""

    def __init__(self, rho, template: GridFunction, opts: ChiOptions):
        self.rho = rho
        self.t = template
        self.h = template.h
        self.d = template.d
        self.m = template.n - 2
        if self.m < 1:
            raise GridError("grid too coarse")
        self.vol = self.h ** self.d
        self.c = opts.shift if opts.shift is not None else rho * (2.0 + self.d)
        k = np.arange(1, self.m + 1)
        lam1 = (4.0 / self.h ** 2) * np.sin(k * np.pi / (2 * (self.m + 1))) ** 2
        lam = 0.0
        for ax in range(self.d):
            shp = [1] * self.d
            shp[ax] = self.m
            lam = lam + lam1.reshape(shp)
        self.pinv = 1.0 / (lam + self.c)
        self.precondition = opts.precondition

    def ip(self, a, b):
        return self.vol * float(np.sum(a * b))

    def normalize(self, g):
        return g / math.sqrt(self.ip(g, g))

    def neg_lap(self, g):
        out = 2.0 * self.d * g
        for ax in range(self.d):
            pad = [(0, 0)] * self.d
            pad[ax] = (1, 1)
            gp = np.pad(g, pad)
            lo = [slice(None)] * self.d
            hi = [slice(None)] * self.d
            lo[ax] = slice(0, -2)
            hi[ax] = slice(2, None)
            out = out - gp[tuple(lo)] - gp[tuple(hi)]
        return out / self.h ** 2

    def energy(self, g):
        return self.ip(g, self.neg_lap(g))

    def value(self, g):
        f = g * g
        return self.energy(g) - self.rho * self.vol * float(np.sum(_xlogx(f)))

    def grad(self, g):
        f = g * g
        lg = np.zeros_like(g)
        pos = f > 0
        lg[pos] = np.log(f[pos])
        return 2.0 * (self.neg_lap(g) - self.rho * g * (lg + 1.0))

    def apply_pinv(self, r):
        if not self.precondition:
            return r
        return sfft.idstn(sfft.dstn(r, type=1, norm="ortho") * self.pinv, type=1, norm="ortho")

    def embed(self, g):
        return self.t.with_values(np.pad(g, 1))


def _initial(problem: _SphereProblem, opts: ChiOptions, rho):
    t = problem.t
    inner = tuple(slice(1, t.n - 1) for _ in range(t.d))
    init = opts.init
    if isinstance(init, GridFunction):
        g = init.values[inner].copy()
    elif isinstance(init, np.ndarray):
        g = init.reshape(t.shape)[inner].copy() if init.size == t.values.size else init.copy()
    elif init == "gaussian":
        g = gaussian_g_hat(rho, t.d, t).values[inner].copy()
    elif init == "bump":
        # a wider Gaussian: half the curvature of the optimum
        g = np.exp(-0.25 * rho * t.radius_sq())[inner].copy()
    else:
        raise DomainError(f"unknown init {init!r}")
    return problem.normalize(g)


def _sphere_descent(problem, g, opts, extra=None):
    """Preconditioned projected gradient with Armijo backtracking.

    extra(g) -> (value, L^2 gradient) adds a penalty to J.
    """
    def fun(x):
        v = problem.value(x)
        G = problem.grad(x)
        if extra is not None:
            pv, pg = extra(x)
            v += pv
            G = G + pg
        return v, G

    val, G = fun(g)
    step = opts.step0
    trace = []
    it = 0
    gnorm = math.inf
    converged = False
    for it in range(1, opts.max_iter + 1):
        proj = G - problem.ip(G, g) * g
        gnorm = math.sqrt(problem.ip(proj, proj))
        if opts.trace:
            trace.append((it - 1, val, gnorm))
        if gnorm <= opts.gtol:
            converged = True
            it -= 1
            break
        PG = problem.apply_pinv(G)
        Pg = problem.apply_pinv(g)
        mu = problem.ip(g, PG) / problem.ip(g, Pg)
        D = PG - mu * Pg
        slope = problem.ip(G, D)
        if slope <= 0:
            D = proj
            slope = problem.ip(G, D)
        s = step
        while True:
            cand = problem.normalize(g - s * D)
            cv, cG = fun(cand)
            if cv <= val - opts.armijo * s * slope or s < 1e-14:
                break
            s *= 0.5
        if s < 1e-14 and cv > val:
            break
        g, val, G = cand, cv, cG
        step = min(s * 2.0, 1e3)
    return g, val, gnorm, it, converged, trace


def minimize_chi(rho, d, grid, opts: Optional[ChiOptions] = None) -> VariationalResult:
    """Minimize ||grad g||^2 - H(g^2) over unit-norm g with zero boundary on the grid cube.

    Projected gradient: the L^2 gradient 2(-Delta_h g - rho g (log g^2 + 1))
    is preconditioned by (c - Delta_h)^(-1) (diagonal in the sine basis),
    projected onto the tangent space of the sphere in the preconditioned
    metric, and followed by renormalization with Armijo backtracking.
    """
    opts = opts or ChiOptions()
    t = _template(grid, d)
    prob = _SphereProblem(rho, t, opts)
    g0 = _initial(prob, opts, rho)
    g, val, gnorm, it, conv, trace = _sphere_descent(prob, g0, opts)
    gf = prob.embed(np.abs(g))
    feas = abs(gf.integrate(gf.values ** 2) - 1.0)
    return VariationalResult(J_value(gf, rho), gf, it, gnorm, feas, conv, trace)


# ---------------------------------------------------------------------------
# best-shift distance to the Gaussian and the constrained problem
# ---------------------------------------------------------------------------

def shift_distances(f: GridFunction, target: GridFunction, R):
    """D(x) = int_{Q_R} |f(x + y) - target(y)| dy for grid-aligned x in Q_{2R}.

    f lives on a grid containing Q_{3R}; target on Q_R with the same spacing.
    Returns an array over shifts (index 0 <-> x = -2R along each axis).
    """
    h = f.h
    big = f.restrict(3 * R) if abs(f.L - 3 * R) > 1e-12 else f
    tw = target.weights()
    n_shift = int(round(4 * R / h)) + 1
    return kernels.shift_l1_scan(big.values, target.values, tw, n_shift)


def _best_shift(D, h, R):
    """Lexicographically first minimizer and its shift vector."""
    flat = int(np.argmin(D))  # argmin returns the first occurrence in C order
    idx = np.unravel_index(flat, D.shape)
    return float(D[idx]), np.array([-2 * R + h * i for i in idx])


@dataclass
class ConstrainedOptions(ChiOptions):
    starts: int = 8
    mu0: float = 10.0
    mu_growth: float = 10.0
    mu_max: float = 1e6
    feas_tol: float = 1e-4
    temperature: float = 2e-3
    smooth: float = 1e-8
    inner_iter: int = 1500


def _penalty_factory(prob: _SphereProblem, target: GridFunction, R, eps, mu, opts, full_template):
    """Quadratic penalty on eps - softmin_x D(x) with smoothed |.|."""
    h = prob.h
    d = prob.d
    nR = int(round(2 * R / h)) + 1
    n_shift = int(round(4 * R / h)) + 1
    tw = target.weights()
    tv = target.values
    from numpy.lib.stride_tricks import sliding_window_view

    def extra(g):
        f = np.pad(g * g, 1)  # full Q_{3R} grid
        win = sliding_window_view(f, (nR,) * d)[tuple(slice(0, n_shift) for _ in range(d))]
        diff = win - tv
        sm = np.sqrt(diff * diff + opts.smooth ** 2) - opts.smooth
        axes = tuple(range(d, 2 * d))
        D = np.sum(sm * tw, axis=axes)
        tau = opts.temperature
        dmin = D.min()
        ew = np.exp(-(D - dmin) / tau)
        Z = ew.sum()
        soft = dmin - tau * math.log(Z)
        viol = eps - soft
        if viol <= 0:
            return 0.0, np.zeros_like(g)
        pw = ew / Z
        # d soft / d f(z) = sum_x pw[x] w(z - x) sign_s(f(z) - target(z - x))
        dsm = diff / np.sqrt(diff * diff + opts.smooth ** 2) * tw
        dfull = np.zeros_like(f)
        it = np.ndindex(*pw.shape)
        mask = pw > 1e-12
        for idx in zip(*np.nonzero(mask)):
            sl = tuple(slice(i, i + nR) for i in idx)
            dfull[sl] += pw[idx] * dsm[idx]
        dsoft_dg = 2.0 * g * dfull[tuple(slice(1, -1) for _ in range(d))]
        val = mu * viol * viol
        # L^2 gradient: divide coordinate derivative by the cell volume
        grad = -2.0 * mu * viol * dsoft_dg / prob.vol
        return val, grad

    return extra


def best_shift_to_g_hat(g: GridFunction, rho, R):
    """min_x int_{Q_R} |g^2(x + y) - g_hat^2(y)| dy over grid shifts in Q_{2R}."""
    f = g.with_values(g.values ** 2)
    tgt = gaussian_g_hat(rho, g.d, (R, g.h))
    tgt = tgt.with_values(tgt.values ** 2)
    D = shift_distances(f, tgt, R)
    return _best_shift(D, g.h, R)


def _random_start(prob: _SphereProblem, rng, rho, R):
    """Smooth random positive start: a few Gaussian bumps with random centers and widths."""
    t = prob.t
    pts = t.points()
    g = np.zeros(t.shape)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(-2.5 * R, 2.5 * R, size=t.d)
        w = rng.uniform(0.3, 2.5) / math.sqrt(rho)
        g += rng.uniform(0.3, 1.0) * np.exp(-np.sum((pts - c) ** 2, axis=-1) / (2 * w * w))
    inner = tuple(slice(1, t.n - 1) for _ in range(t.d))
    return prob.normalize(g[inner] + 1e-3)


def minimize_chi_constrained(rho, d, eps, R, h, opts: Optional[ConstrainedOptions] = None):
    """chi_R(eps): minimize J over unit g supported in Q_{3R} with every shift in Q_{2R} eps-far from g_hat^2.

    Returns (best VariationalResult, list of per-start results).  The
    constraint enters through a quadratic penalty on the violated smoothed
    best-shift distance; the penalty weight grows until the exact best-shift
    distance is within feas_tol of eps.  Starts: the first is the Gaussian
    shifted to the corner of Q_{2R}, the rest are seeded random bump sums.
    """
    opts = opts or ConstrainedOptions()
    template = GridFunction.zeros(d, 3 * R, h)
    tgt = gaussian_g_hat(rho, d, (R, h))
    tgt = tgt.with_values(tgt.values ** 2)
    mass_R = tgt.integrate()
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if eps >= 1.0 + mass_R:
        raise InfeasibleConstraintError(
            f"eps={eps} >= 1 + mass of g_hat^2 in Q_R = {1 + mass_R:.6f}: no unit g can be that far")
    prob = _SphereProblem(rho, template, opts)
    if eps == 0:
        res = minimize_chi(rho, d, template, ChiOptions(**{k: getattr(opts, k) for k in ChiOptions.__dataclass_fields__}))
        return res, [res]
    rng = np.random.default_rng(opts.seed)
    results = []
    for k in range(opts.starts):
        g = _random_start(prob, rng, rho, R)
        mu = opts.mu0
        total_it = 0
        conv = False
        while True:
            extra = _penalty_factory(prob, tgt, R, eps, mu, opts, template)
            inner = ChiOptions(gtol=opts.gtol, max_iter=opts.inner_iter, precondition=opts.precondition,
                               shift=opts.shift, armijo=opts.armijo, step0=opts.step0)
            g, val, gnorm, it, conv, _ = _sphere_descent(prob, g, inner, extra)
            total_it += it
            gf = prob.embed(np.abs(g))
            dist, _x = best_shift_to_g_hat(gf, rho, R)
            viol = max(0.0, eps - dist)
            if viol <= opts.feas_tol or mu >= opts.mu_max:
                break
            mu *= opts.mu_growth
        results.append(VariationalResult(J_value(gf, rho), gf, total_it, gnorm, viol,
                                         conv and viol <= opts.feas_tol,
                                         info={"start": k, "best_shift_distance": dist, "mu": mu}))
    feasible = [r for r in results if r.feasibility_residual <= opts.feas_tol]
    pool = feasible or results
    best = min(pool, key=lambda r: (r.value, r.info["start"]))
    return best, results


def log_sobolev_slack(rho, d, h, L=None):
    """Bound on chi - min_g J_h(g) for the forward-difference grid of spacing h.

    The grid energy of g_hat undershoots ||grad g_hat||^2 by
    (h^2/12) int |D^2 g_hat|^2 = d rho^2 h^2 / 16 to leading order, and the
    measured grid minima follow chi - d rho^2 h^2/16 (tests keep that study).
    The slack doubles the leading term and adds the Gaussian mass outside
    Q_L, which bounds the effect of the zero boundary.
    """
    s = 2.0 * d * rho * rho * h * h / 16.0
    if L is not None:
        s += rho * d * math.erfc(math.sqrt(rho) * L) * (1.0 + rho * L * L)
    return s
