import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from pamlab.errors import GridError
from pamlab.grid import GridFunction
from pamlab.potential import BoxSpec, SyntheticScaleTable
from pamlab.spectral import (LatticeOperator, box_decomposition_gap, dirichlet_chain_top, discretize_continuum,
                             fit_box_constant, lanczos_top, lattice_laplacian, principal_eigen_discrete,
                             rescaled_eigen)


def dense_oracle(V):
    """Independent dense matrix assembly by explicit neighbour loops."""
    V = np.asarray(V, dtype=float)
    d, shape = V.ndim, V.shape
    n = V.size
    A = np.zeros((n, n))
    idx = np.arange(n).reshape(shape)
    for z in np.ndindex(*shape):
        i = idx[z]
        A[i, i] = V[z] - 2 * d
        for ax in range(d):
            for s in (-1, 1):
                y = list(z)
                y[ax] += s
                if 0 <= y[ax] < shape[ax]:
                    A[i, idx[tuple(y)]] = 1.0
    return sla.eigvalsh(A)[-1]


def test_three_site_chain():
    r = principal_eigen_discrete(np.zeros(3))
    assert r.value == pytest.approx(-2 * (1 - math.cos(math.pi / 4)), abs=1e-14)
    assert r.value == pytest.approx(-0.585786, abs=1e-6)


def test_constant_shift_is_exact():
    base = principal_eigen_discrete(np.zeros((7, 7))).value
    assert principal_eigen_discrete(np.full((7, 7), 1.75)).value == pytest.approx(base + 1.75, abs=1e-13)


def test_random_2d_matches_dense_oracle():
    V = np.random.default_rng(3).normal(size=(7, 7))
    assert abs(principal_eigen_discrete(V, tol=1e-12).value - dense_oracle(V)) < 1e-10


@pytest.mark.parametrize("shape", [(301,), (41, 41), (15, 15, 15)])
def test_lanczos_matches_dense(shape):
    V = np.random.default_rng(sum(shape)).normal(size=shape)
    a = principal_eigen_discrete(V, method="dense").value
    b = principal_eigen_discrete(V, method="lanczos", tol=1e-12)
    assert abs(a - b.value) < 1e-10
    assert b.residual <= 1e-10


def test_eigenvector_contract():
    V = np.random.default_rng(1).normal(size=(9, 9))
    r = principal_eigen_discrete(V)
    assert np.all(r.vector > 0)
    assert np.linalg.norm(r.vector) == pytest.approx(1.0, abs=1e-14)
    op = LatticeOperator.from_potential(V)
    assert np.linalg.norm(op.matvec(r.vector) - r.value * r.vector) == pytest.approx(r.residual, abs=1e-14)


def test_operator_symmetric_and_boundary():
    rng = np.random.default_rng(2)
    op = LatticeOperator(BoxSpec(2, 3), rng.normal(size=49))
    f, g = rng.normal(size=49), rng.normal(size=49)
    assert f @ op.matvec(g) == pytest.approx(g @ op.matvec(f), rel=1e-13)
    L = lattice_laplacian((3,)).toarray()
    assert np.array_equal(L, [[-2, 1, 0], [1, -2, 1], [0, 1, -2]])


@given(st.integers(0, 2 ** 31), st.integers(1, 2))
def test_rayleigh_ritz_and_monotonicity(seed, d):
    rng = np.random.default_rng(seed)
    shape = (5,) * d
    V = rng.normal(size=shape)
    lam = principal_eigen_discrete(V).value
    f = rng.random(V.size)
    f /= np.linalg.norm(f)
    assert LatticeOperator.from_potential(V).rayleigh(f) <= lam + 1e-10
    W = V + rng.random(size=shape)
    assert principal_eigen_discrete(W).value >= lam - 1e-12
    sub = V[tuple(slice(1, 4) for _ in range(d))]
    assert principal_eigen_discrete(sub).value <= lam + 1e-12


def test_dirichlet_chain_closed_form():
    for n in (1, 5, 40):
        assert principal_eigen_discrete(np.zeros(n if n % 2 else n + 1)).value == pytest.approx(
            dirichlet_chain_top(n if n % 2 else n + 1), abs=1e-13)


# continuum bridge ----------------------------------------------------------

TAB = SyntheticScaleTable(lambda s: s / math.log(s))


def test_discretize_constant_and_linear():
    g = GridFunction.from_function(lambda x: np.full(x.shape[:-1], 0.7), 1, 4.0, 0.05)
    assert np.allclose(discretize_continuum(g, 1e4, TAB), 0.7)
    a = TAB.alpha(1e4, 1)
    lin = GridFunction.from_function(lambda x: x[..., 0], 1, 4.0, 0.05)
    vals = discretize_continuum(lin, 1e4, TAB, radius=5)
    z = np.arange(-5, 6)
    assert np.allclose(vals, (z + 0.5) / a, atol=1e-12)


def test_discretize_indicator_left_closed():
    vals = discretize_continuum(lambda x: (x[..., 0] >= 0).astype(float), 1e4, TAB, radius=4, d=1)
    assert np.array_equal(vals, [0, 0, 0, 0, 1, 1, 1, 1, 1])


def test_discretize_rejects_coarse_grid():
    g = GridFunction.zeros(1, 4.0, 1.0)
    with pytest.raises(GridError):
        discretize_continuum(g, 1e6, TAB)


def test_rescaled_eigen_of_zero_and_shift():
    zero = GridFunction.zeros(1, 2.0, 0.05)
    t = 1e6
    a = TAB.alpha(t, 1)
    n = 2 * math.floor(a) + 1
    want = a * a * dirichlet_chain_top(n)
    assert rescaled_eigen(zero, 1.0, t, TAB) == pytest.approx(want, abs=1e-10)
    c = zero.with_values(np.full(zero.shape, 0.3))
    assert rescaled_eigen(c, 1.0, t, TAB) == pytest.approx(want + 0.3, abs=1e-10)


def test_rescaled_eigen_of_parabola():
    from pamlab.variational import lambda_psi_hat, parabola_psi_hat

    tab = SyntheticScaleTable(lambda s: 20.0 * s / math.log(s) ** 3)
    t = 1e12
    psi = parabola_psi_hat(1.0, 1, (6.0, 0.01))
    got = rescaled_eigen(psi, 6.0, t, tab)
    assert tab.alpha(t, 1) > 20
    assert got == pytest.approx(lambda_psi_hat(1.0, 1), rel=0.02)


def test_box_decomposition():
    rng = np.random.default_rng(5)
    a = 2.0
    V = rng.normal(size=13)
    big, sub = box_decomposition_gap(V, 1.0, alpha=a)
    assert big - sub == pytest.approx(0.0, abs=1e-12)  # one sub-box equals the big box (r=6)
    gaps = []
    for _ in range(200):
        V = rng.normal(size=41)
        big, sub = box_decomposition_gap(V, 1.0, alpha=a)
        gaps.append(big - sub)
    gaps = np.array(gaps)
    assert np.all(gaps >= -1e-12)  # sub-boxes are clipped to the big box
    C = fit_box_constant(gaps, 1.0, a)
    assert np.isfinite(C) and np.all(gaps <= C / a ** 2 + 1e-12)
