"""Fast oracle fixtures behind the CLI --check flag, one group per subcommand."""
from __future__ import annotations

import math
from typing import Callable, List, NamedTuple

import numpy as np


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def _close(name, got, want, tol, rel=False):
    err = abs(got - want) / (abs(want) if rel else 1.0)
    return CheckResult(name, bool(err <= tol), f"got {got!r}, want {want!r}, err {err:.3g} (tol {tol:g})")


def check_scale() -> List[CheckResult]:
    from .potential import PotentialDistribution, ScaleTable

    tab = ScaleTable(PotentialDistribution.triple_exp(1.0))
    out = [_close("H(10), TripleExp rho0=1", tab.H(10.0), 2.4318879104646896, 1e-10, rel=True)]
    out.append(_close("alpha residual t=1e3 d=1", tab.alpha_residual(1e3, 1), 0.0, 1e-12))
    c = ScaleTable(PotentialDistribution.constant(0.7))
    out.append(_close("kappa of a constant", c.kappa(50.0), 0.7, 1e-12))
    return out


def check_eigen() -> List[CheckResult]:
    from .spectral import dirichlet_chain_top, principal_eigen_discrete

    rng = np.random.default_rng(7)
    V = rng.normal(size=(15, 15))
    a = principal_eigen_discrete(V, method="dense").value
    b = principal_eigen_discrete(V, method="lanczos").value
    out = [_close("lanczos vs dense 15x15", b, a, 1e-10)]
    out.append(_close("zero potential chain of 21 sites", principal_eigen_discrete(np.zeros(21)).value,
                      dirichlet_chain_top(21), 1e-12))
    return out


def check_evolve() -> List[CheckResult]:
    from .evolution import evolve, total_mass
    from .potential import BoxSpec, PotentialDistribution, PotentialField, sample_field

    box = BoxSpec(1, 20)
    zero = PotentialField(box, np.zeros(box.n_sites), 0, PotentialDistribution.constant(0.0))
    out = [_close("zero potential keeps mass 1 (r=20, t=1)", total_mass(evolve(zero, 1.0, method="eig")), 1.0, 1e-6)]
    f = sample_field(PotentialDistribution.triple_exp(1.0), BoxSpec(1, 2), 3)
    e = total_mass(evolve(f, 1.0, method="eig"))
    r = total_mass(evolve(f, 1.0, method="radau"))
    out.append(_close("radau vs eig mass", r, e, 1e-8, rel=True))
    return out


def check_fk() -> List[CheckResult]:
    from .evolution import evolve, fk_estimate, simulate_local_times, total_mass
    from .potential import BoxSpec, PotentialDistribution, sample_field

    f = sample_field(PotentialDistribution.triple_exp(1.0), BoxSpec(1, 3), 11)
    ode = total_mass(evolve(f, 1.0, method="eig"))
    est = fk_estimate(f, 1.0, 20000, 5)
    z = abs(est.mean - ode) / est.stderr
    out = [CheckResult("FK vs ODE within 4 stderr", bool(z <= 4.0), f"z = {z:.3f}")]
    lt = simulate_local_times(2, 1.5, 9)
    out.append(_close("local times sum to t", lt.total(), 1.5, 1e-12))
    return out


def check_chi() -> List[CheckResult]:
    from .variational import (chi_closed_form, gaussian_g_hat, minimize_chi, parabola_psi_hat,
                              functional_L, relative_entropy)

    res = minimize_chi(1.0, 1, (8.0, 0.05))
    out = [_close("chi (rho=1, d=1)", res.value, chi_closed_form(1.0, 1), 0.02, rel=True)]
    out.append(_close("L(psi_hat) = rho", functional_L(parabola_psi_hat(1.0, 1, (8.0, 0.05)), 1.0), 1.0, 1e-3))
    out.append(_close("two-point relative entropy", relative_entropy([0.5, 0.5], [0.25, 0.75]),
                      0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0), 1e-12))
    g = gaussian_g_hat(1.0, 1, (8.0, 0.05))
    out.append(_close("g_hat unit norm", g.integrate(g.values ** 2), 1.0, 1e-6))
    return out


def check_ldp() -> List[CheckResult]:
    from .confinement import PiecewiseConstant, cumulant_rate_check
    from .potential import PotentialDistribution, ScaleTable

    dist = PotentialDistribution.triple_exp(1.0)
    tab = ScaleTable(dist)
    two = PiecewiseConstant([-1.0, 1.0], [2.0])
    _, lim = cumulant_rate_check(dist, tab, two, 1e3, R=1.0)
    out = [_close("f = 2 limit", lim, 4.0 * math.log(2.0), 1e-12)]
    one = PiecewiseConstant([-1.0, 1.0], [1.0])
    _, lim1 = cumulant_rate_check(dist, tab, one, 1e3, R=1.0)
    out.append(_close("f = 1 limit", lim1, 0.0, 0.0))
    return out


def check_confine() -> List[CheckResult]:
    from .confinement import best_shift_distance, dist_global
    from .variational import parabola_psi_hat, psi_hat_value

    one = lambda x: np.ones(x.shape[:-1])
    zero = lambda x: np.zeros(x.shape[:-1])
    series = math.fsum(2.0 ** -r * 2 * r / (1 + 2 * r) for r in range(1, 200))
    out = [_close("dist_global(1, 0)", dist_global(one, zero, 40, d=1, h=0.5).value, series, 1e-10)]
    ph = parabola_psi_hat(1.0, 1, (3.0, 0.05))
    sd = best_shift_distance(ph, 1.0, psi_hat_value(1.0, 1, 0.0) + 1.0, 1.0)
    out.append(CheckResult("best shift of psi_hat", bool(sd.value < 1e-12 and abs(sd.argmin_shift[0]) < 1e-12),
                           f"value {sd.value:.3g} at {sd.argmin_shift}"))
    return out


def check_moments() -> List[CheckResult]:
    from .confinement import f_moment_by_compositions, f_moment_by_sites, f_moment_by_tuples

    args = ([0.0, 1.3], [0.7, 0.3], 1.7, 1.0, 2.5, 0.4)
    out = []
    for D in (2, 4):
        a = f_moment_by_sites(*args, D, 3)
        b = f_moment_by_tuples(*args, D, 3)
        c = f_moment_by_compositions(*args, D, 3)
        err = max(abs(a - b), abs(a - c)) / abs(a)
        out.append(CheckResult(f"multinomial identity D={D}", bool(err <= 1e-12), f"rel err {err:.3g}"))
    return out


CHECKS: dict = {
    "scale": check_scale, "eigen": check_eigen, "evolve": check_evolve, "fk": check_fk, "chi": check_chi,
    "ldp": check_ldp, "confine": check_confine, "moments": check_moments,
}


def run_checks(group: str) -> List[CheckResult]:
    fn: Callable[[], List[CheckResult]] = CHECKS[group]
    try:
        return fn()
    except Exception as exc:  # a crash is a failed check, reported as such
        return [CheckResult(f"{group} fixtures", False, f"{type(exc).__name__}: {exc}")]
