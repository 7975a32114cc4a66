import csv
import io as _io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pamlab import kernels
from pamlab.errors import DomainError
from pamlab.evolution import (default_box_radius, evolve, fk_csv_row, fk_estimate, fk_log_weights,
                              fk_restricted, initial_state, log_total_mass, restricted_limit,
                              simulate_local_times, total_mass)
from pamlab.potential import BoxSpec, PotentialDistribution, PotentialField, sample_field
from pamlab.spectral import principal_eigen_discrete


def const_field(d, r, c):
    box = BoxSpec(d, r)
    return PotentialField(box, np.full(box.n_sites, c), 0, PotentialDistribution.constant(c))


def test_zero_potential_conserves_mass():
    for m in ("radau", "eig", "expm"):
        assert total_mass(evolve(const_field(1, 20, 0.0), 1.0, method=m)) == pytest.approx(1.0, abs=1e-6)


def test_constant_potential_growth():
    assert total_mass(evolve(const_field(1, 20, 0.7), 2.0)) == pytest.approx(math.exp(1.4), rel=1e-4)
    assert total_mass(evolve(const_field(2, 10, 0.7), 1.0)) == pytest.approx(math.exp(0.7), rel=1e-4)


def test_initial_state_and_linearity(triple):
    box = BoxSpec(2, 2)
    s0 = initial_state(box)
    assert total_mass(s0) == 1.0 and s0.values[2, 2] == 1.0
    f = sample_field(triple, box, 1)
    assert total_mass(evolve(f, 0.0)) == 1.0
    s = evolve(f, 1.0)
    assert total_mass(s.scaled(3.5)) == pytest.approx(3.5 * total_mass(s), rel=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_methods_agree_with_eigen_oracle(triple, seed):
    f = sample_field(triple, BoxSpec(1, 3), seed)
    ref = total_mass(evolve(f, 2.0, method="eig"))
    assert total_mass(evolve(f, 2.0, method="radau")) == pytest.approx(ref, rel=1e-8)
    assert total_mass(evolve(f, 2.0, method="expm")) == pytest.approx(ref, rel=1e-8)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 5.0))
def test_positivity_and_eigen_sandwich(seed, t):
    f = sample_field(PotentialDistribution.triple_exp(1.0), BoxSpec(1, 3), seed)
    s = evolve(f, t, method="eig")
    assert np.all(s.values >= 0)
    e = principal_eigen_discrete(f)
    v0 = s.dense_values()[3]
    assert v0 <= math.exp(t * e.value) * (1 + 1e-10)
    assert total_mass(s) >= v0 >= math.exp(t * e.value) * e.vector[3] ** 2 * (1 - 1e-10)


def test_long_time_rate_is_the_eigenvalue(triple):
    # at t = 5 only the two-sided sandwich holds in general; the 5% statement holds once t is large
    for seed in range(10):
        f = sample_field(triple, BoxSpec(1, 3), seed)
        lam = principal_eigen_discrete(f).value
        phi0 = principal_eigen_discrete(f).vector[3]
        r5 = log_total_mass(evolve(f, 5.0, method="eig")) / 5.0
        assert 2 * math.log(phi0) / 5.0 - 1e-12 <= r5 - lam <= math.log(math.sqrt(7)) / 5.0 + 1e-12
        r = log_total_mass(evolve(f, 100.0, method="eig")) / 100.0
        assert abs(r / lam - 1) <= 0.05


def test_bad_inputs(triple):
    f = sample_field(triple, BoxSpec(1, 2), 0)
    with pytest.raises(DomainError):
        evolve(f, -1.0)
    with pytest.raises(DomainError):
        evolve(f, 1.0, method="rk4")


def test_default_box_radius():
    assert default_box_radius(4.0, 1) == 8
    assert default_box_radius(4.0, 1, R=3, alpha=2.0) == 18


# Feynman-Kac --------------------------------------------------------------

def test_fk_zero_and_constant():
    est = fk_estimate(const_field(1, 30, 0.0), 2.0, 2000, 1)
    assert est.mean == 1.0 and est.stderr == 0.0
    est = fk_estimate(const_field(2, 15, 0.4), 1.5, 2000, 1)
    assert abs(est.mean - math.exp(0.6)) <= 3 * est.stderr + 1e-12 * math.exp(0.6)


def test_fk_matches_ode(triple):
    f = sample_field(triple, BoxSpec(1, 2), 17)
    est = fk_estimate(f, 1.0, 100000, 3)
    ode = total_mass(evolve(f, 1.0, method="eig"))
    assert abs(est.mean - ode) <= 3 * est.stderr


def test_fk_threads_do_not_change_results(triple):
    f = sample_field(triple, BoxSpec(2, 3), 4)
    a = fk_log_weights(f, 1.0, 20000, 9, threads=1)
    b = fk_log_weights(f, 1.0, 20000, 9, threads=4)
    assert np.array_equal(a, b)


def test_fk_restricted(triple, table):
    # walks are cut at 3 R alpha, with alpha supplied by any object exposing .alpha(t, d)
    f = sample_field(triple, BoxSpec(1, 12), 8)
    a = table.alpha(50.0, 1)
    full = fk_estimate(f, 0.5, 5000, 2)
    wide = fk_restricted(f, 0.5, 100.0, SimpleAlpha(a), 5000, 2)
    assert wide == full  # no path is cut, so replica-by-replica identical
    z = fk_restricted(const_field(1, 12, 0.0), 0.5, 1.0, SimpleAlpha(a), 5000, 2)
    assert z.mean <= 1.0
    R = 1.5
    lim = restricted_limit(f.box, R, a)
    assert lim < f.box.radius
    est = fk_restricted(f, 1.0, R, SimpleAlpha(a), 100000, 5)
    ode = total_mass(evolve(f.restrict(lim), 1.0, method="eig"))
    assert abs(est.mean - ode) <= 3 * est.stderr


class SimpleAlpha:
    def __init__(self, a):
        self.a = a

    def alpha(self, t, d):
        return self.a


def test_local_times_partition_and_pairing(triple):
    f = sample_field(triple, BoxSpec(2, 8), 1)
    for rep in range(20):
        lt = simulate_local_times(2, 1.7, 33, rep)
        assert lt.total() == pytest.approx(1.7, abs=1e-12)
        w = kernels.walk_log_weights(f.flat, 2, 8, 8, 1.7, 33, rep, 1)[0][0]
        if lt.absorbed:
            assert w == -math.inf
        else:
            assert lt.pairing(f) == pytest.approx(w, abs=1e-12)


def test_fk_csv_row():
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(fk_csv_row(1.0, fk_estimate(const_field(1, 5, 0.0), 1.0, 10, 0), 10, 0))
    assert buf.getvalue() == "1.0,1.0,0.0,10,0\n"
