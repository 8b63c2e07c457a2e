import numpy as np
import pytest
from hypothesis import given, strategies as st

from dkplab.chgvar import build_rho, conjugate, invert_rho, structure_check
from dkplab.errors import ConvergenceError, NotInvertibleError
from dkplab.fields import MatrixField, constant, dkp_smooth
from dkplab.mesh import build_mesh


def row_field(v, h):
    """Constant field with last row (v, h)."""
    return constant(np.array([[1.0, 0.0], [v, h]]))


def smooth_row_field(a=0.2, b=0.1):
    # last row (a sin(2 pi x) e^{-t}, 1 + b cos(2 pi x) e^{-t})
    def value(x, t):
        x1 = x[..., 0]
        M = np.zeros(t.shape + (2, 2))
        M[..., 0, 0] = 1.0
        M[..., 1, 0] = a * np.sin(2 * np.pi * x1) * np.exp(-t)
        M[..., 1, 1] = 1.0 + b * np.cos(2 * np.pi * x1) * np.exp(-t)
        return M

    def grad(x, t):
        x1 = x[..., 0]
        G = np.zeros(t.shape + (2, 2, 2))
        e = np.exp(-t)
        G[..., 1, 0, 0] = 2 * np.pi * a * np.cos(2 * np.pi * x1) * e
        G[..., 1, 0, 1] = -a * np.sin(2 * np.pi * x1) * e
        G[..., 1, 1, 0] = -2 * np.pi * b * np.sin(2 * np.pi * x1) * e
        G[..., 1, 1, 1] = -b * np.cos(2 * np.pi * x1) * e
        return G

    return MatrixField(2, value, grad, name="row")


def test_identity_map():
    rho = build_rho(constant(n=2), samples=200)
    x, t = np.array([0.1, 0.8]), np.array([0.2, 0.9])
    px, pt = rho(x, t)
    assert np.allclose(px[..., 0], x) and np.allclose(pt, t)
    assert rho.bilipschitz == pytest.approx(1.0)
    sc = structure_check(conjugate(constant(n=2), rho), build_mesh(2, 4), include_blocks=False)
    assert sc["last_row_cm"] == pytest.approx(0.0, abs=1e-14)


def test_linear_map_and_jacobian():
    rho = build_rho(row_field(0.5, 2.0), samples=200)
    px, pt = rho(np.array([0.1]), np.array([0.4]))
    assert px[..., 0] == pytest.approx(0.3) and pt == pytest.approx(0.8)
    J = rho.jacobian(np.array([0.1]), np.array([0.4]))
    assert np.allclose(J, [[1.0, 0.5], [0.0, 2.0]])
    assert rho.min_det == pytest.approx(2.0)


def test_conjugate_linear_exact():
    # A = I, rho linear with J = [[1, v], [0, h]]: A_rho = det J J^-1 J^-T
    rho = build_rho(row_field(0.5, 2.0), samples=100)
    Ar = conjugate(constant(n=2), rho)
    Jm = np.array([[1.0, 0.5], [0.0, 2.0]])
    Ji = np.linalg.inv(Jm)
    assert np.allclose(Ar(np.array([0.3]), np.array(0.2)), 2.0 * Ji @ Ji.T, atol=1e-14)


def test_fd_jacobian_fallback(rng):
    B = smooth_row_field()
    Bn = MatrixField(2, B._value if hasattr(B, "_value") else (lambda x, t: B(x, t)), name="row-no-grad")
    a = build_rho(B, samples=100)
    b = build_rho(Bn, samples=100)
    x, t = rng.uniform(0, 1, 6), rng.uniform(0.05, 1, 6)
    # central differences with step t/100: second-order error of order 1e-4 here
    assert np.allclose(a.jacobian(x, t), b.jacobian(x, t), atol=1e-3)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2), st.floats(0.01, 1.0))
def test_invert_roundtrip(xt, scale):
    rho = build_rho(smooth_row_field(), samples=64, seed=1)
    x = np.array([xt[0]])
    t = np.array([scale * (0.05 + xt[1])])
    Y = rho(x, t)
    xr, tr = invert_rho(rho, (Y[0][..., 0], Y[1]))
    assert np.allclose(xr, x, atol=1e-10) and np.allclose(tr, t, atol=1e-10)


def test_invert_vectorised(rng):
    rho = build_rho(smooth_row_field(0.3, 0.2), samples=64)
    x, t = rng.uniform(0, 1, 50), rng.uniform(0.01, 1, 50)
    px, pt = rho(x, t)
    xr, tr = invert_rho(rho, (px[..., 0], pt))
    assert np.max(np.abs(xr - x)) < 1e-10 and np.max(np.abs(tr - t)) < 1e-10


def test_invert_reports_stall():
    rho = build_rho(smooth_row_field(), samples=64)
    with pytest.raises(ConvergenceError):
        invert_rho(rho, (np.array([0.3]), np.array([0.4])), maxiter=0, tol=1e-300)


def test_not_invertible_witness():
    with pytest.raises(NotInvertibleError) as exc:
        build_rho(row_field(0.0, -1.0), samples=50)
    w = exc.value.witness
    assert len(w) == 2 and 0 < w[1] <= 1


def test_conjugate_constant_anisotropic():
    # for constant A and linear rho the pullback is a fixed matrix
    rho = build_rho(row_field(0.5, 2.0), samples=50)
    A = constant(np.array([[2.0, 0.3], [0.3, 1.0]]))
    Ar = conjugate(A, rho)
    M = Ar(np.array([0.2]), np.array(0.3))
    J = np.array([[1.0, 0.5], [0.0, 2.0]])
    Ji = np.linalg.inv(J)
    assert np.allclose(M, np.linalg.det(J) * Ji @ A(np.zeros(1), 0.5) @ Ji.T)


def test_structure_check_linear_in_delta():
    m = build_mesh(2, 5)
    vals = []
    for d in (0.025, 0.05):
        A = dkp_smooth(d, E=[[0, 0], [1, 1]])
        vals.append(structure_check(conjugate(A, build_rho(A, samples=200)), m, include_blocks=False)["last_row_cm"])
    assert vals[1] / vals[0] == pytest.approx(2.0, rel=0.02)
