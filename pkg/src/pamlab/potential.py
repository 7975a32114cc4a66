"""Potential laws, i.i.d. fields and the scale functions H, kappa, alpha.

Lattice sites of a box B_r = [-r, r]^d are enumerated row-major: the site
with coordinates (z_1, ..., z_d) has flat index sum_i (z_i + r) n^(d-1-i),
n = 2r + 1, so the last coordinate varies fastest.  Every array of site
values in this package uses that order.
"""
from __future__ import annotations

import functools
import math
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import AlphaBracketError, DomainError, QuadratureError, WindowError

FAMILIES = ("TripleExp", "Constant", "TwoPoint")

# sites per RNG stream when sampling fields; fixed so output is thread-independent
SAMPLE_CHUNK = 1 << 16

# quadrature targets for the TripleExp cgf
_H_EPSREL = 1e-12
_H_ABSTOL = 1e-10
_H_LIMIT = 200
_PANEL = 0.25


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialDistribution:
    """Law of a single site value xi(0).

    TripleExp: xi = rho0 * log log(1 + E) with E ~ Exp(1); upper tail
    P(xi > r) = exp(1 - exp(exp(r / rho0))).
    Constant: xi = c.
    TwoPoint: xi = values[0] with probability probs[0], else values[1].
    """

    family: str = "TripleExp"
    rho0: float = 1.0
    c: float = 0.0
    values: tuple = (0.0, 1.0)
    probs: tuple = (0.5, 0.5)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "TripleExp" and not self.rho0 > 0:
            raise DomainError("rho0 must be positive")
        if self.family == "TwoPoint":
            p = tuple(float(v) for v in self.probs)
            if len(p) != 2 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-12:
                raise DomainError("TwoPoint probs must be two nonnegative numbers summing to 1")
            if len(self.values) != 2:
                raise DomainError("TwoPoint needs exactly two values")
            object.__setattr__(self, "probs", p)
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    # convenience constructors
    @classmethod
    def triple_exp(cls, rho0=1.0):
        return cls("TripleExp", rho0=float(rho0))

    @classmethod
    def constant(cls, c):
        return cls("Constant", c=float(c))

    @classmethod
    def two_point(cls, values, probs):
        return cls("TwoPoint", values=tuple(values), probs=tuple(probs))

    @property
    def rho(self):
        """The constant rho of the (HK) condition; 0 for the degenerate families."""
        return self.rho0 if self.family == "TripleExp" else 0.0

    def scaled(self, C):
        """Law of C * xi for C > 0."""
        if not C > 0:
            raise DomainError("scale factor must be positive")
        if self.family == "TripleExp":
            return PotentialDistribution.triple_exp(self.rho0 * C)
        if self.family == "Constant":
            return PotentialDistribution.constant(self.c * C)
        return PotentialDistribution.two_point([v * C for v in self.values], self.probs)

    def to_config(self):
        if self.family == "TripleExp":
            return {"family": "TripleExp", "rho0": self.rho0}
        if self.family == "Constant":
            return {"family": "Constant", "c": self.c}
        return {"family": "TwoPoint", "values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        fam = cfg.pop("family", "TripleExp")
        if fam == "TripleExp":
            return cls.triple_exp(cfg.get("rho0", 1.0))
        if fam == "Constant":
            return cls.constant(cfg.get("c", 0.0))
        if fam == "TwoPoint":
            return cls.two_point(cfg.get("values", (0.0, 1.0)), cfg.get("probs", (0.5, 0.5)))
        raise DomainError(f"unknown family {fam!r}")

    def log_sf(self, r):
        """log P(xi > r), vectorized."""
        r = np.asarray(r, dtype=float)
        if self.family == "TripleExp":
            with np.errstate(over="ignore"):
                out = 1.0 - np.exp(np.exp(r / self.rho0))
            return out
        if self.family == "Constant":
            return np.where(r < self.c, 0.0, -np.inf)
        (a, b), (pa, pb) = self.values, self.probs
        p = np.where(r < a, pa, 0.0) + np.where(r < b, pb, 0.0)
        with np.errstate(divide="ignore"):
            return np.log(p)

    def quantile(self, u):
        """Inverse CDF on (0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.family == "TripleExp":
            e = -np.log1p(-u)
            return self.rho0 * np.log(np.log1p(e))
        if self.family == "Constant":
            return np.full(u.shape, self.c)
        (a, b), (pa, _) = self.values, self.probs
        lo, hi = (a, b) if a <= b else (b, a)
        p_lo = pa if a <= b else 1.0 - pa
        return np.where(u < p_lo, lo, hi)


# ---------------------------------------------------------------------------
# cumulant generating function
# ---------------------------------------------------------------------------

def _phi(w, a):
    e = math.exp(w)
    if e > 700.0:
        return -math.inf
    return a * w + e - math.exp(e) + 1.0


def _triple_exp_log_integral(p):
    """log of int_0^inf log(1+u)^p e^{-u} du for p >= 0.

    Substituting u = exp(exp(w)) - 1 turns the integrand into exp(phi(w)) with
    phi(w) = (p+1) w + e^w - exp(e^w) + 1, strictly concave.  The integral is
    taken around the mode after dividing out exp(phi(mode)), so the power-law
    behaviour near u = 0 becomes a smooth exponential tail in w.
    """
    if p == 0.0:
        return 0.0, 0.0
    a = p + 1.0
    # mode: L (e^L - 1) = a with L = e^w
    L = optimize.brentq(lambda x: x * math.expm1(x) - a, 1e-300, math.log(a) + 1.0,
                        xtol=1e-300, rtol=1e-15, maxiter=500)
    ws = math.log(L)
    phis = _phi(ws, a)
    eL = math.exp(L)
    curv = L * eL + L * L * eL - L
    sig = 1.0 / math.sqrt(curv)

    def f(delta):
        # phi(ws + delta) - phi(ws) without cancelling large terms
        m = L * math.expm1(delta)
        if m > 700.0:
            return 0.0
        return math.exp(a * delta + m - eL * math.expm1(m))

    left = -max(40.0 * sig, 45.0 / a)
    right = 40.0 * sig
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        i1, e1 = integrate.quad(f, left, 0.0, epsabs=0.0, epsrel=_H_EPSREL, limit=_H_LIMIT)
        i2, e2 = integrate.quad(f, 0.0, right, epsabs=0.0, epsrel=_H_EPSREL, limit=_H_LIMIT)
    total = i1 + i2
    # absolute error of the log equals relative error of the integral
    err = (e1 + e2) / total
    if not err <= _H_ABSTOL:
        raise QuadratureError(f"cgf quadrature at p={p} reached only {err:.3g}", achieved=err)
    return phis + math.log(total), err


def cgf(dist: PotentialDistribution, t: float) -> float:
    """H(t) = log <exp(t xi(0))> for t >= 0."""
    t = float(t)
    if t < 0 or math.isnan(t):
        raise DomainError("cgf needs t >= 0")
    if t == 0.0:
        return 0.0
    if dist.family == "Constant":
        return dist.c * t
    if dist.family == "TwoPoint":
        (a, b), (pa, pb) = dist.values, dist.probs
        terms = [math.log(p) + t * v for v, p in ((a, pa), (b, pb)) if p > 0]
        m = max(terms)
        return m + math.log(sum(math.exp(x - m) for x in terms))
    return _triple_exp_log_integral(dist.rho0 * t)[0]


def cgf_with_error(dist, t):
    """(H(t), absolute error estimate)."""
    if dist.family == "TripleExp" and t > 0:
        return _triple_exp_log_integral(dist.rho0 * float(t))
    return cgf(dist, t), 0.0


# ---------------------------------------------------------------------------
# scale tables
# ---------------------------------------------------------------------------

class _BaseScale:
    """Shared alpha / beta logic given H and kappa."""

    def H(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def kappa(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def _log_tbeta(self, lb, d):
        k = self.kappa(math.exp(lb))
        if not k > 0:
            return None
        return (1.0 + d / 2.0) * lb - (d / 2.0) * math.log(k)

    def beta(self, t, d):
        """beta = t / alpha^d, the largest root of beta^(1+d/2) / kappa(beta)^(d/2) = t."""
        key = (float(t), int(d))
        with self._lock:
            hit = self._beta_cache.get(key)
        if hit is not None:
            return hit
        t = float(t)
        if not t > 1.0:
            raise AlphaBracketError("alpha(t) needs t > 1; use a larger t", t_min=None)
        lt = math.log(t)

        def g(lb):
            v = self._log_tbeta(lb, d)
            return -math.inf if v is None else v - lt

        hi = lt
        ghi = g(hi)
        if not ghi > 0:
            # beta = t gives t(beta) <= t: extend upward (kappa close to t)
            for _ in range(200):
                hi += 1.0
                ghi = g(hi)
                if ghi > 0:
                    break
            else:
                raise AlphaBracketError(f"no bracket for alpha at t={t}; increase t")
        lo = hi
        while True:
            lo_new = lo - _PANEL
            if lo_new <= 0.0:
                raise AlphaBracketError(
                    f"no sign change for alpha at t={t:g}: t lies below the threshold "
                    f"{self.alpha_threshold(d):.6g}; use a larger t",
                    t_min=self.alpha_threshold(d))
            glo = g(lo_new)
            if glo <= 0:
                if glo == -math.inf:
                    raise AlphaBracketError(
                        f"kappa is not positive below beta={math.exp(lo):.4g}; t={t:g} lies "
                        f"below the threshold {self.alpha_threshold(d):.6g}; use a larger t",
                        t_min=self.alpha_threshold(d))
                lo = lo_new
                break
            hi, lo = lo_new, lo_new
        lb = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        b = math.exp(lb)
        with self._lock:
            self._beta_cache[key] = b
        return b

    def alpha(self, t, d):
        """alpha(t) solving kappa(t / alpha^d) = t / alpha^(d+2)."""
        b = self.beta(t, d)
        return math.sqrt(b / self.kappa(b))

    def alpha_residual(self, t, d):
        """Relative residual |kappa(t/a^d) - t/a^(d+2)| / (t/a^(d+2))."""
        a = self.alpha(t, d)
        target = t / a ** (d + 2)
        return abs(self.kappa(t / a ** d) - target) / target

    def alpha_threshold(self, d):
        """Smallest t for which alpha(t) is defined (minimum of t(beta) on kappa > 0)."""
        key = ("thr", int(d))
        with self._lock:
            hit = self._beta_cache.get(key)
        if hit is not None:
            return hit
        lbs = np.arange(_PANEL, 15.0, _PANEL)
        vals = []
        for lb in lbs:
            v = self._log_tbeta(lb, d)
            vals.append(math.inf if v is None else v)
        vals = np.array(vals)
        i = int(np.argmin(vals))
        if not np.isfinite(vals[i]):
            thr = math.inf
        else:
            a, b = lbs[max(i - 1, 0)], lbs[min(i + 1, len(lbs) - 1)]
            res = optimize.minimize_scalar(
                lambda x: (self._log_tbeta(x, d) if self._log_tbeta(x, d) is not None else math.inf),
                bounds=(a, b), method="bounded", options={"xatol": 1e-10})
            thr = math.exp(min(res.fun, vals[i]))
        with self._lock:
            self._beta_cache[key] = thr
        return thr


class ScaleTable(_BaseScale):
    """Memoized H and kappa for one distribution.

    H samples are cached on every point requested; kappa uses
    int_1^t H(s)/s ds = int_0^{log t} H(e^u) du split into fixed panels of
    width 0.25 in u whose integrals are cached.  The cache is guarded by a
    lock so one table may be shared between threads.
    """

    def __init__(self, dist: PotentialDistribution, tol: float = 1e-10):
        self.dist = dist
        self.tol = float(tol)
        self._lock = threading.RLock()
        self._h: dict = {}
        self._panels: dict = {}
        self._beta_cache: dict = {}

    def H(self, t):
        t = float(t)
        with self._lock:
            v = self._h.get(t)
        if v is None:
            v = cgf(self.dist, t)
            with self._lock:
                self._h[t] = v
        return v

    def h_samples(self):
        """Sorted (t, H(t)) pairs stored so far."""
        with self._lock:
            items = sorted(self._h.items())
        return np.array([k for k, _ in items]), np.array([v for _, v in items])

    def warm(self, t_max, per_decade=20):
        """Fill the H cache on a log-spaced grid up to t_max."""
        for t in np.logspace(0.0, math.log10(t_max), int(per_decade * math.log10(t_max)) + 1):
            self.H(t)
        return self

    def _panel(self, k):
        with self._lock:
            v = self._panels.get(k)
        if v is None:
            v = self._int_hexp(k * _PANEL, (k + 1) * _PANEL)
            with self._lock:
                self._panels[k] = v
        return v

    def _int_hexp(self, u0, u1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda u: self.H(math.exp(u)), u0, u1,
                                      epsabs=self.tol * 1e-3, epsrel=1e-13, limit=100)
        if err > max(self.tol, 1e-11 * abs(val)):
            raise QuadratureError(f"kappa panel [{u0}, {u1}] error {err:.3g}", achieved=err)
        return val

    def int_h_over_s(self, t):
        """int_1^t H(s)/s ds."""
        t = float(t)
        if t < 1.0:
            raise DomainError("kappa needs t >= 1")
        if self.dist.family == "Constant":
            return self.dist.c * (t - 1.0)
        v = math.log(t)
        n = int(v // _PANEL)
        total = math.fsum(self._panel(k) for k in range(n))
        if v > n * _PANEL:
            total += self._int_hexp(n * _PANEL, v)
        return total

    def kappa(self, t):
        """kappa(t) = H(t) - int_1^t H(s)/s ds, t >= 1."""
        t = float(t)
        if not t >= 1.0:
            raise DomainError("kappa needs t >= 1")
        if self.dist.family == "Constant":
            return self.dist.c
        return self.H(t) - self.int_h_over_s(t)


class SyntheticScaleTable(_BaseScale):
    """Scale table built from a prescribed kappa (and optionally H).

    Used for oracle tests where alpha must be large or known in closed form.
    """

    def __init__(self, kappa_fn: Callable[[float], float],
                 H_fn: Optional[Callable[[float], float]] = None, name: str = "synthetic"):
        self._kappa = kappa_fn
        self._H = H_fn
        self.name = name
        self.dist = None
        self.tol = 0.0
        self._lock = threading.RLock()
        self._beta_cache: dict = {}

    def kappa(self, t):
        return float(self._kappa(float(t)))

    def H(self, t):
        if self._H is None:
            raise DomainError("this synthetic table carries no H")
        return float(self._H(float(t)))


def kappa(table, t):
    """kappa(t) from a scale table."""
    return table.kappa(t)


def alpha_scale(table, t, d):
    """alpha(t) for dimension d."""
    return table.alpha(t, d)


def hk_ratio(table, t, y, rho):
    """(H(yt) - y H(t), kappa(t) rho y log y)."""
    if not t >= 1 or not y > 0:
        raise DomainError("hk_ratio needs t >= 1 and y > 0")
    if y == 1:
        return 0.0, 0.0
    diff = table.H(y * t) - y * table.H(t)
    if table.dist is not None and table.dist.family == "Constant":
        diff = 0.0
    return diff, table.kappa(t) * rho * y * math.log(y)


# ---------------------------------------------------------------------------
# boxes and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSpec:
    """B_r (lattice, integer radius) or Q_r (continuum, real half-width) in d dimensions."""

    d: int
    radius: float
    kind: str = "Lattice"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")
        if self.kind not in ("Lattice", "Continuum"):
            raise DomainError("kind must be Lattice or Continuum")
        if self.kind == "Lattice":
            if self.radius < 0 or int(self.radius) != self.radius:
                raise DomainError("lattice radius must be a nonnegative integer")
            object.__setattr__(self, "radius", int(self.radius))
        elif not self.radius > 0:
            raise DomainError("continuum radius must be positive")

    @property
    def side(self):
        return 2 * self.radius + 1

    @property
    def shape(self):
        return (self.side,) * self.d

    @property
    def n_sites(self):
        return self.side ** self.d

    def sites(self):
        """(n_sites, d) integer coordinates in row-major order."""
        r = self.radius
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids - r

    def origin_index(self):
        return (self.n_sites - 1) // 2


@dataclass
class PotentialField:
    """Site values on a lattice box, stored with shape box.shape (row-major)."""

    box: BoxSpec
    values: np.ndarray
    seed: Optional[int] = None
    dist: Optional[PotentialDistribution] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.box.n_sites:
            raise DomainError(f"expected {self.box.n_sites} values, got {v.size}")
        self.values = v.reshape(self.box.shape)

    @property
    def flat(self):
        return self.values.reshape(-1)

    def with_values(self, values):
        return PotentialField(self.box, values, self.seed, self.dist)

    def restrict(self, radius):
        """Sub-field on the centered box of the given radius."""
        r0 = self.box.radius
        if radius > r0:
            raise WindowError(f"restriction radius {radius} exceeds field radius {r0}",
                              required_radius=radius)
        sl = tuple(slice(r0 - radius, r0 + radius + 1) for _ in range(self.box.d))
        return PotentialField(BoxSpec(self.box.d, radius), self.values[sl].copy(), self.seed, self.dist)


def _sample_chunk(dist, seed, k, n):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(k)])))
    # midpoints of 2^53 equal cells: never 0 or 1
    u = (rng.integers(0, 1 << 53, size=n, dtype=np.int64).astype(float) + 0.5) * 2.0 ** -53
    return dist.quantile(u)


def sample_field(dist: PotentialDistribution, box: BoxSpec, seed: int, threads: int = 1) -> PotentialField:
    """Inverse-transform sample an i.i.d. field.

    Sites are split into consecutive ranges of SAMPLE_CHUNK in enumeration
    order; range k draws from its own stream seeded by (seed, k), so the
    values do not depend on the number of threads.
    """
    if box.kind != "Lattice":
        raise DomainError("sample_field needs a lattice box")
    n = box.n_sites
    starts = list(range(0, n, SAMPLE_CHUNK))
    sizes = [min(SAMPLE_CHUNK, n - s) for s in starts]
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _sample_chunk(dist, seed, a[0], a[1]),
                                enumerate(sizes)))
    else:
        parts = [_sample_chunk(dist, seed, k, m) for k, m in enumerate(sizes)]
    values = np.concatenate(parts) if parts else np.zeros(0)
    return PotentialField(box, values, int(seed), dist)


# ---------------------------------------------------------------------------
# shifted and rescaled potentials
# ---------------------------------------------------------------------------

class StepFunction:
    """x -> values[floor(alpha x) + r] on cells [z/alpha, (z+1)/alpha)^d.

    The covered region is [-r/alpha, (r+1)/alpha)^d.  Points outside raise
    unless an explicit fill value is given.
    """

    def __init__(self, values, alpha, radius):
        self.values = np.asarray(values, dtype=float)
        self.alpha = float(alpha)
        self.radius = int(radius)
        self.d = self.values.ndim

    def cell_index(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.d:
            x = x.reshape(-1, self.d)
        return np.floor(self.alpha * x).astype(np.int64)

    def __call__(self, x, fill=None):
        z = self.cell_index(x) + self.radius
        n = 2 * self.radius + 1
        inside = np.all((z >= 0) & (z < n), axis=1)
        if not np.all(inside) and fill is None:
            raise WindowError("point outside the step function's lattice box")
        zc = np.clip(z, 0, n - 1)
        out = self.values[tuple(zc.T)]
        if fill is not None:
            out = np.where(inside, out, fill)
        return out

    def truncated(self, M):
        return StepFunction(np.minimum(self.values, M), self.alpha, self.radius)


def required_radius(alpha, window):
    """Lattice radius needed so xi_bar covers Q_window."""
    return int(math.ceil(alpha * window))


def shift_rescale(field: PotentialField, t: float, table, window: Optional[float] = None):
    """(xi_t, xibar_t) with xi_t = xi - H(beta)/beta, beta = t/alpha^d, xibar_t = alpha^2 xi_t(floor(alpha x))."""
    d = field.box.d
    a = table.alpha(t, d)
    b = table.beta(t, d)
    shift = table.H(b) / b
    if table.dist is not None and table.dist.family == "Constant":
        shift = table.dist.c
    if window is not None:
        need = required_radius(a, window)
        if need > field.box.radius:
            raise WindowError(
                f"window Q_{window} at alpha={a:.6g} needs lattice radius {need}, "
                f"field has {field.box.radius}", required_radius=need)
    xi_t = field.with_values(field.values - shift)
    return xi_t, StepFunction(a * a * xi_t.values, a, field.box.radius)


def truncate(f, M):
    """Pointwise minimum with M; returns the same kind of object."""
    if isinstance(f, StepFunction):
        return f.truncated(M)
    if isinstance(f, PotentialField):
        return f.with_values(np.minimum(f.values, M))
    if hasattr(f, "with_values") and hasattr(f, "values"):
        return f.with_values(np.minimum(f.values, M))
    return np.minimum(np.asarray(f, dtype=float), M)


def exceedance_tail(dist, table, t, M, count, d=1):
    """P(xi(0) > H(beta)/beta + M/alpha^2)^(count/2), beta = t/alpha^d."""
    if count == 0:
        return 1.0
    if M == math.inf:
        return 0.0
    a = table.alpha(t, d)
    b = table.beta(t, d)
    u = table.H(b) / b + M / (a * a)
    lp = float(dist.log_sf(u))
    return math.exp(0.5 * count * lp) if lp > -math.inf else 0.0


def exceedance_markov_bound(table, t, M, count, d=1):
    """exp(-(t/alpha^2) M count / (2 alpha^d))."""
    a = table.alpha(t, d)
    return math.exp(-(t / a ** 2) * M * count / (2.0 * a ** d))


# ---------------------------------------------------------------------------
# exponential tilting
# ---------------------------------------------------------------------------

_TILT_NODES = 4097


@functools.lru_cache(maxsize=4096)
def _tilted_table(rho0, theta):
    """Tabulated CDF of w = xi / rho0 under the law tilted by exp(theta xi)."""
    a = rho0 * theta + 1.0
    L = optimize.brentq(lambda x: x * math.expm1(x) - a, 1e-300, math.log(a) + 1.0,
                        xtol=1e-300, rtol=1e-15)
    ws = math.log(L)
    eL = math.exp(L)
    sig = 1.0 / math.sqrt(L * eL + L * L * eL - L)
    w = np.linspace(ws - max(40.0 * sig, 45.0 / a), ws + 40.0 * sig, _TILT_NODES)
    e = np.exp(w)
    with np.errstate(over="ignore"):
        phi = a * w + e - np.exp(np.minimum(e, 700.0)) + 1.0
    dens = np.exp(phi - phi.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(w))])
    cdf /= cdf[-1]
    return w, cdf


def sample_tilted(dist, theta, rng):
    """One draw per entry of theta from the law tilted by exp(theta_z xi).

    TripleExp uses a tabulated inverse CDF on the log-log scale (4097 nodes);
    TwoPoint reweights the two atoms; Constant is unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    u = (rng.integers(0, 1 << 53, size=theta.shape, dtype=np.int64).astype(float) + 0.5) * 2.0 ** -53
    if dist.family == "Constant":
        return np.full(theta.shape, dist.c)
    if dist.family == "TwoPoint":
        (a, b), (pa, pb) = dist.values, dist.probs
        la = np.log(pa) + theta * a if pa > 0 else np.full(theta.shape, -np.inf)
        lb = np.log(pb) + theta * b if pb > 0 else np.full(theta.shape, -np.inf)
        m = np.maximum(la, lb)
        qa = np.exp(la - m) / (np.exp(la - m) + np.exp(lb - m))
        return np.where(u < qa, a, b)
    out = np.empty(theta.shape)
    flat_t = theta.reshape(-1)
    flat_u = u.reshape(-1)
    flat_o = out.reshape(-1)
    for i, th in enumerate(flat_t):
        w, cdf = _tilted_table(float(dist.rho0), float(th))
        flat_o[i] = dist.rho0 * np.interp(flat_u[i], cdf, w)
    return out


@dataclass
class TiltSpec:
    """Per-site tilt parameters theta_z and log-normalizers H(theta_z)."""

    theta: np.ndarray
    log_norm: np.ndarray
    label: str = "custom"

    @classmethod
    def from_theta(cls, table, theta, label="custom"):
        theta = np.asarray(theta, dtype=float)
        ln = np.array([table.H(th) for th in theta.reshape(-1)]).reshape(theta.shape)
        return cls(theta, ln, label)

    def log_likelihood_ratio(self, xi):
        """log dP/dP_theta of a field sampled under the tilt."""
        return float(np.sum(self.log_norm - self.theta * np.asarray(xi)))

    def describe(self):
        return {"label": self.label, "theta_min": float(self.theta.min()),
                "theta_max": float(self.theta.max()), "n_sites": int(self.theta.size)}
