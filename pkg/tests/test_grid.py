import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pamlab.errors import GridError
from pamlab.grid import GridFunction, snap_half_width


def test_node_count_and_volume():
    g = GridFunction.zeros(2, 1.5, 0.25)
    assert g.shape == (13, 13)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(9.0, abs=1e-13)


def test_misaligned_spacing_rejected():
    with pytest.raises(GridError):
        GridFunction.zeros(1, 1.0, 0.3)


def test_snap_half_width():
    L = snap_half_width(8 / math.sqrt(math.pi), 0.05)
    assert L >= 8 / math.sqrt(math.pi)
    assert abs(2 * L / 0.05 - round(2 * L / 0.05)) < 1e-9
    assert snap_half_width(8.0, 0.05) == 8.0


def test_trapezoid_is_second_order():
    errs = []
    for h in (0.1, 0.05):
        g = GridFunction.from_function(lambda x: np.exp(-x[..., 0] ** 2), 1, 2.0, h)
        errs.append(abs(g.integrate() - math.sqrt(math.pi) * math.erf(2.0)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_grad_sq_matches_minus_laplacian_pairing():
    rng = np.random.default_rng(0)
    g = GridFunction(rng.random((21, 21)), 1.0, 0.1)
    v = g.values.copy()
    v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
    g = g.with_values(v)
    pair = -float(np.sum(g.laplacian() * g.values)) * g.h ** 2
    assert g.grad_sq() == pytest.approx(pair, rel=1e-12)


def test_interpolation_and_outside_modes():
    g = GridFunction.from_function(lambda x: 2 * x[..., 0] + 1, 1, 1.0, 0.25)
    assert g(np.array([[0.1]]))[0] == pytest.approx(1.2)
    assert g(np.array([[3.0]]))[0] == 0.0
    assert g(np.array([[3.0]]), outside="clamp")[0] == pytest.approx(3.0)


def test_restrict_embed_roundtrip():
    g = GridFunction.from_function(lambda x: np.cos(x[..., 0]), 1, 2.0, 0.5)
    r = g.restrict(1.0)
    assert r.n == 5
    e = r.embed(2.0)
    assert np.allclose(e.values[2:7], g.values[2:7])
    assert e.values[0] == 0.0


@given(st.integers(-5, 5))
def test_shift_moves_values(k):
    g = GridFunction(np.arange(11.0), 1.0, 0.2)
    s = g.shifted(k)
    for i in range(11):
        j = i + k
        assert s.values[i] == (g.values[j] if 0 <= j < 11 else 0.0)
