import math
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pamlab.errors import AlphaBracketError, DomainError, WindowError
from pamlab.potential import (BoxSpec, PotentialDistribution, PotentialField, ScaleTable, StepFunction,
                              SyntheticScaleTable, TiltSpec, alpha_scale, cgf, exceedance_markov_bound,
                              exceedance_tail, hk_ratio, kappa, sample_field, sample_tilted, shift_rescale,
                              truncate)

# log of int_0^inf log(1+u)^t e^-u du, 30-digit mpmath quadrature (frozen)
H_ORACLE = {0.5: -0.33446051642234827586, 10.0: 2.4318879104646891905, 1000.0: 1472.1189455467213681}
# H(t) - int_1^t H(s)/s ds at t = 1000 from the same mpmath quadrature (frozen)
KAPPA_1000 = 217.41770554351378101


@pytest.mark.parametrize("t", sorted(H_ORACLE))
def test_cgf_matches_high_precision_oracle(triple, t):
    assert cgf(triple, t) == pytest.approx(H_ORACLE[t], rel=1e-12, abs=1e-12)


def test_cgf_trivial_cases(triple):
    assert cgf(PotentialDistribution.constant(2.0), 3.0) == 6.0
    for dist in (triple, PotentialDistribution.constant(2.0), PotentialDistribution.two_point([0, 1], [0.3, 0.7])):
        assert cgf(dist, 0.0) == 0.0
    with pytest.raises(DomainError):
        cgf(triple, -1.0)


def test_cgf_monte_carlo(triple):
    u = (np.random.default_rng(10).random(10 ** 6))
    xi = triple.quantile(u)
    w = np.exp(10.0 * xi)
    m, se = w.mean(), w.std(ddof=1) / math.sqrt(w.size)
    assert abs(m - math.exp(cgf(triple, 10.0))) <= 3 * se


def test_two_point_cgf():
    d = PotentialDistribution.two_point([-1.0, 2.0], [0.25, 0.75])
    assert cgf(d, 1.5) == pytest.approx(math.log(0.25 * math.exp(-1.5) + 0.75 * math.exp(3.0)), rel=1e-14)


@given(st.floats(0.0, 40.0), st.floats(0.0, 40.0), st.floats(0.01, 0.99))
def test_cgf_convex(t1, t2, th):
    d = PotentialDistribution.triple_exp(1.0)
    mid = cgf(d, th * t1 + (1 - th) * t2)
    assert mid <= th * cgf(d, t1) + (1 - th) * cgf(d, t2) + 1e-9


@given(st.floats(0.1, 5.0), st.floats(0.0, 30.0))
def test_cgf_scaling_law(C, t):
    for d in (PotentialDistribution.triple_exp(0.7), PotentialDistribution.two_point([-0.5, 1.5], [0.4, 0.6]),
              PotentialDistribution.constant(1.3)):
        assert cgf(d.scaled(C), t) == pytest.approx(cgf(d, C * t), rel=1e-12, abs=1e-12)


def test_tail_and_sampler_agree(triple):
    u = np.array([1e-6, 0.1, 0.5, 0.9, 1 - 1e-9])
    r = triple.quantile(u)
    assert np.allclose(np.exp(triple.log_sf(r)), 1 - u, rtol=1e-6)


# kappa ---------------------------------------------------------------------

def test_kappa_oracle(table):
    assert kappa(table, 1000.0) == pytest.approx(KAPPA_1000, rel=1e-12)


def test_kappa_trivial(table):
    c = ScaleTable(PotentialDistribution.constant(1.7))
    assert [c.kappa(t) for t in (1.0, 10.0, 1e6)] == [1.7, 1.7, 1.7]
    assert table.kappa(1.0) == table.H(1.0)
    with pytest.raises(DomainError):
        table.kappa(0.5)


def test_kappa_laplace_asymptotics(table):
    r6 = table.kappa(1e6) * math.log(1e6) / 1e6
    r3 = table.kappa(1e3) * math.log(1e3) / 1e3
    assert abs(r6 - 1) <= 0.35
    assert abs(r6 - 1) < abs(r3 - 1)


def test_h_samples_memoized_and_monotone(triple):
    table = ScaleTable(triple)  # fresh: the shared table holds closely spaced points from other tests
    table.warm(1e3, per_decade=5)
    ts, hs = table.h_samples()
    assert np.all(np.diff(ts) > 0)
    slopes = np.diff(hs) / np.diff(ts)
    assert np.all(np.diff(slopes) >= -1e-8)  # convex on the stored grid
    # E xi < 0 for this family, so H decreases until its minimum, then increases
    k = int(np.argmin(hs))
    assert ts[k] < 5.0 and np.all(np.diff(hs[k:]) >= 0)


def test_table_thread_safe():
    tab = ScaleTable(PotentialDistribution.triple_exp(1.0))
    out = []
    ths = [threading.Thread(target=lambda: out.append(tab.kappa(500.0))) for _ in range(4)]
    for th in ths:
        th.start()
    for th in ths:
        th.join()
    assert len(set(out)) == 1


# alpha ----------------------------------------------------------------------

@pytest.mark.parametrize("t,d", [(50.0, 1), (1e3, 1), (1e6, 1), (1e3, 2), (1e6, 2)])
def test_alpha_residual(table, t, d):
    assert table.alpha_residual(t, d) <= 1e-8
    a = alpha_scale(table, t, d)
    assert table.beta(t, d) == pytest.approx(t / a ** d, rel=1e-12)


def test_alpha_monotone(table):
    assert table.alpha(1e6, 1) > table.alpha(1e3, 1)


def test_alpha_threshold(table):
    thr = table.alpha_threshold(1)
    assert 11.5 < thr < 12.2
    with pytest.raises(AlphaBracketError) as exc:
        table.alpha(5.0, 1)
    assert "threshold" in str(exc.value)
    table.alpha(thr * 1.01, 1)


def test_alpha_synthetic_dense_scan():
    tab = SyntheticScaleTable(lambda s: s / math.log(s))
    t = 1e6
    # dense scan of beta -> beta^(3/2) / kappa(beta)^(1/2) on a log grid, then bisection on the bracket
    lb = np.linspace(1.0, math.log(t), 200001)
    b = np.exp(lb)
    g = 1.5 * lb - 0.5 * np.log(b / lb) - math.log(t)
    i = np.nonzero(np.diff(np.sign(g)))[0][-1]
    lo, hi = lb[i], lb[i + 1]
    f = lambda x: 1.5 * x - 0.5 * math.log(math.exp(x) / x) - math.log(t)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (f(hi) > 0):
            hi = mid
        else:
            lo = mid
    beta = math.exp(0.5 * (lo + hi))
    want = math.sqrt(beta / (beta / math.log(beta)))
    assert tab.alpha(t, 1) == pytest.approx(want, rel=1e-6)


# hk ratio --------------------------------------------------------------------

def test_hk_ratio_trivial(table):
    assert hk_ratio(table, 100.0, 1.0, 1.0) == (0.0, 0.0)
    c = ScaleTable(PotentialDistribution.constant(0.4))
    assert hk_ratio(c, 100.0, 3.0, 0.0)[0] == 0.0


def test_hk_ratio_trend(table):
    dev = []
    for t in (1e3, 1e6):
        diff, target = hk_ratio(table, t, 2.0, 1.0)
        dev.append(diff / target - 1)
    assert abs(dev[1]) < abs(dev[0])


# fields ---------------------------------------------------------------------

def test_box_counts_and_order():
    b = BoxSpec(2, 2)
    assert b.n_sites == 25
    s = b.sites()
    assert tuple(s[0]) == (-2, -2) and tuple(s[1]) == (-2, -1) and tuple(s[b.origin_index()]) == (0, 0)
    with pytest.raises(DomainError):
        BoxSpec(1, 1.5)


def test_sample_field_deterministic_and_thread_independent(triple):
    box = BoxSpec(1, 70000)
    a = sample_field(triple, box, 123)
    b = sample_field(triple, box, 123, threads=3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_field(triple, box, 124).values)
    assert sample_field(triple, BoxSpec(2, 2), 1).values.size == 25


def test_sample_field_exponential_moment(triple):
    f = sample_field(triple, BoxSpec(1, 500000), 9)
    w = np.exp(2.0 * f.flat)
    m, se = w.mean(), w.std(ddof=1) / math.sqrt(w.size)
    assert abs(m - math.exp(cgf(triple, 2.0))) <= 3 * se


def test_field_export_roundtrip(tmp_path, triple):
    from pamlab import io

    f = sample_field(triple, BoxSpec(2, 3), 5)
    io.write_field(tmp_path / "xi.f64", f)
    g = io.read_field(tmp_path / "xi.f64")
    assert np.array_equal(f.values, g.values) and g.seed == 5 and g.dist == triple
    assert (tmp_path / "xi.f64").stat().st_size == 8 * 49


# shift and rescale ----------------------------------------------------------------

def test_shift_rescale_constant():
    dist = PotentialDistribution.constant(1.3)
    tab = ScaleTable(dist)
    tab_alpha = SyntheticScaleTable(lambda s: s / math.log(s), lambda s: 1.3 * s)
    f = sample_field(dist, BoxSpec(1, 5), 0)
    xi_t, bar = shift_rescale(f, 1e4, tab_alpha)
    assert np.all(xi_t.values == 0) and np.all(bar.values == 0)
    assert tab.kappa(7.0) == 1.3


def test_shift_rescale_definition(table, triple):
    f = sample_field(triple, BoxSpec(1, 10), 2)
    t = 1e3
    xi_t, bar = shift_rescale(f, t, table, window=1.0)
    a = table.alpha(t, 1)
    b = table.beta(t, 1)
    assert np.allclose(xi_t.values, f.values - table.H(b) / b)
    for x in (-0.9, -0.01, 0.0, 0.37, 0.99):
        z = math.floor(a * x)
        assert bar(np.array([[x]]))[0] == a * a * xi_t.values[z + 10]
    with pytest.raises(WindowError) as exc:
        shift_rescale(f, t, table, window=10.0)
    assert exc.value.required_radius == math.ceil(a * 10.0)


def test_shift_rescale_normalization_mc(table, triple):
    t = 12.5
    b = table.beta(t, 1)
    f = sample_field(triple, BoxSpec(1, 500000), 77)
    xi_t, _ = shift_rescale(f, t, table)
    w = np.exp(b * xi_t.flat)
    m, se = w.mean(), w.std(ddof=1) / math.sqrt(w.size)
    assert abs(m - 1.0) <= 3 * se


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-5, 5), st.floats(-5, 5))
def test_truncate_lattice_identities(vals, M, M2):
    f = StepFunction(np.array(vals), 2.0, 1)
    assert np.array_equal(truncate(truncate(f, M), M2).values, truncate(f, min(M, M2)).values)
    big = truncate(f, 10.0)
    assert np.array_equal(big.values, f.values)
    assert np.all(truncate(f, -1e300).values == -1e300)


def test_exceedance_tail(table, triple):
    assert exceedance_tail(triple, table, 1e3, math.inf, 5) == 0.0
    assert exceedance_tail(triple, table, 1e3, 1.0, 0) == 1.0
    for t in (50.0, 1e3, 1e5):
        for M in (0.5, 1.0, 2.0, 4.0):
            for count in (1, 4):
                assert exceedance_tail(triple, table, t, M, count) <= exceedance_markov_bound(table, t, M, count)


# tilting --------------------------------------------------------------------

def test_tilted_sampler_mean_and_unbiased_ratio(table, triple):
    theta = np.full(20000, 30.0)
    rng = np.random.default_rng(4)
    xi = sample_tilted(triple, theta, rng)
    h = 1e-4
    dH = (table.H(30.0 + h) - table.H(30.0 - h)) / (2 * h)
    assert xi.mean() == pytest.approx(dH, abs=4 * xi.std() / math.sqrt(xi.size))
    # unbiasedness of the reweighting, at a mild tilt where the ratio has finite small variance
    spec = TiltSpec.from_theta(table, np.full(1, 1.0))
    xi = sample_tilted(triple, np.full(200000, 1.0), rng)
    lr = np.exp(spec.log_norm[0] - 1.0 * xi)
    assert abs(lr.mean() - 1) <= 3 * lr.std(ddof=1) / math.sqrt(lr.size)


def test_tilt_likelihood_ratio_formula(table):
    spec = TiltSpec.from_theta(table, np.array([1.0, 2.0]))
    xi = np.array([0.3, -0.1])
    want = table.H(1.0) + table.H(2.0) - 0.3 + 0.2
    assert spec.log_likelihood_ratio(xi) == pytest.approx(want, abs=1e-14)


def test_two_point_tilt():
    d = PotentialDistribution.two_point([0.0, 1.0], [0.5, 0.5])
    xi = sample_tilted(d, np.full(100000, math.log(3.0)), np.random.default_rng(0))
    assert xi.mean() == pytest.approx(0.75, abs=0.01)
