import numpy as np
import pytest
from hypothesis import given, strategies as st

from dkplab.errors import ConfigurationError, DegenerateInputError
from dkplab.functionals import (area_square, avg_ntmax, dual_witness, lp_norm, ntmax, truncated_ntmax,
                                whitney_averages)
from dkplab.mesh import build_mesh


def harmonic_gradient(mesh, k=1):
    # gradient of cos(2 pi k x) exp(-2 pi k t)
    x, t = mesh.cell_centers()
    w = 2 * np.pi * k
    e = np.exp(-w * t)
    return np.stack([-w * np.sin(w * x[..., 0]) * e, -w * np.cos(w * x[..., 0]) * e], -1)


def test_constant_maximal_functions(mesh5):
    one = np.full(mesh5.cell_shape, 3.0)
    assert np.allclose(ntmax(one, mesh5).values, 3.0)
    assert np.allclose(avg_ntmax(one, mesh5).values, 3.0)
    assert np.allclose(whitney_averages(one, mesh5), 3.0)


def test_ntmax_picks_single_spike(mesh5):
    v = np.zeros(mesh5.cell_shape)
    v[5, 10] = 2.0
    N = ntmax(v, mesh5).values
    assert N.max() == 2.0
    # the spike at height 10.5 h is seen from about 2 * 10.5 + 1 nodes
    assert 19 <= np.count_nonzero(N) <= 23


def test_square_function_closed_form():
    # S(u)^2 = int_0^1 2t * 4 pi^2 exp(-4 pi t) dt, close to 1/2
    m = build_mesh(2, 7)
    S = area_square(harmonic_gradient(m), m, kind="S").values
    w = 4 * np.pi
    exact = np.sqrt(2 * np.pi**2 * 4 * (1 - (1 + w) * np.exp(-w)) / w**2)
    assert np.allclose(S, exact, rtol=5e-3)
    assert exact == pytest.approx(1 / np.sqrt(2), rel=1e-4)


def test_square_function_needs_gradient(mesh5):
    with pytest.raises(ConfigurationError):
        area_square(np.ones(mesh5.cell_shape), mesh5, kind="S")
    with pytest.raises(ConfigurationError):
        area_square(np.ones(mesh5.cell_shape), mesh5, kind="B")


def test_lp_norm_parseval():
    x = np.arange(64) / 64
    assert lp_norm(np.cos(2 * np.pi * 3 * x), 2) == pytest.approx(1 / np.sqrt(2), rel=1e-14)
    assert lp_norm(np.full(64, 2.5), 7) == pytest.approx(2.5, rel=1e-14)
    with pytest.raises(ConfigurationError):
        lp_norm(np.ones(4), 0.5)


@given(st.integers(0, 2**16), st.floats(-5, 5))
def test_ntmax_homogeneous_and_subadditive(seed, c):
    m = build_mesh(2, 4)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2,) + m.cell_shape)
    assert np.allclose(ntmax(c * u, m).values, abs(c) * ntmax(u, m).values)
    assert np.all(ntmax(u + v, m).values <= ntmax(u, m).values + ntmax(v, m).values + 1e-12)


@given(st.integers(0, 2**16))
def test_avg_ntmax_subadditive(seed):
    m = build_mesh(2, 4)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2,) + m.cell_shape)
    assert np.all(avg_ntmax(u + v, m).values <= avg_ntmax(u, m).values + avg_ntmax(v, m).values + 1e-12)


@given(st.integers(0, 2**16))
def test_truncated_monotone_in_K_and_p(seed):
    m = build_mesh(2, 5)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=m.cell_shape)
    _, t = m.cell_centers()
    small = (t > 0.2) & (t < 0.5)
    big = (t > 0.1) & (t < 0.7)
    a = truncated_ntmax(v, m, small, p=1).values
    b = truncated_ntmax(v, m, big, p=1).values
    assert np.all(a <= b + 1e-12)
    assert np.all(truncated_ntmax(v, m, big, p=2).values >= b - 1e-12)


def test_truncated_empty_K_is_zero(mesh5):
    K = np.zeros(mesh5.cell_shape, dtype=bool)
    assert np.all(truncated_ntmax(np.ones(mesh5.cell_shape), mesh5, K).values == 0.0)
    with pytest.raises(ConfigurationError):
        truncated_ntmax(np.ones(mesh5.cell_shape), mesh5, K[:3])


def test_dual_witness_single_ball():
    m = build_mesh(2, 4)
    _, t = m.cell_centers()
    K = (t > 0.1) & (t < 0.8)
    F = np.zeros(m.cell_shape + (2,))
    F[8, 8] = [3.0, 4.0]
    w = dual_witness(F, m, K, q=2.0)
    assert w.certificate == pytest.approx(1.0, abs=1e-12)
    assert w.target == pytest.approx(lp_norm(truncated_ntmax(F, m, K), 2), rel=1e-12)
    # h points along F where F is nonzero
    assert np.allclose(w.h[8, 8] / np.linalg.norm(w.h[8, 8]), [0.6, 0.8])


@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_dual_witness_random(q, mesh5, rng):
    _, t = mesh5.cell_centers()
    K = (t > 2 * mesh5.h) & (t < 0.75)
    F = rng.normal(size=mesh5.cell_shape + (2,))
    w = dual_witness(F, mesh5, K, q=q)
    assert w.certificate >= 1 - 1e-10


def test_dual_witness_degenerate(mesh5):
    _, t = mesh5.cell_centers()
    K = (t > 0.1) & (t < 0.5)
    with pytest.raises(DegenerateInputError):
        dual_witness(np.zeros(mesh5.cell_shape + (2,)), mesh5, K)
    F = np.zeros(mesh5.cell_shape + (2,))
    F[..., -1, 0] = 1.0  # only outside K
    with pytest.raises(DegenerateInputError):
        dual_witness(F, mesh5, K)
    with pytest.raises(ConfigurationError):
        dual_witness(np.ones(mesh5.cell_shape), mesh5, K, q=1.0)
