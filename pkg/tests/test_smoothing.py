import numpy as np
import pytest
from scipy.integrate import quad

from dkplab.errors import ConfigurationError, EpsilonUnreachableError
from dkplab.fields import MatrixField, constant, dkp_smooth
from dkplab.mesh import build_mesh
from dkplab.smoothing import (MollifiedField, decompose, initial_split, kernel_mass, kernel_pair, kernel_weight,
                              mollify, sup_tgrad)

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("Lam", [2**0.25, 4.0, 64.0])
def test_kernel_mass_is_one(n, Lam):
    assert kernel_mass(np.zeros(n - 1), 0.05, Lam, n=n) == pytest.approx(1.0, abs=1e-6)


def test_kernel_support():
    t, Lam = 0.1, 4.0
    y = np.array([0.0, 0.0, 0.5, 0.0])
    s = np.array([0.5 * Lam * t, 2.0 * Lam * Lam * t, 1.2 * Lam * t, 1.2 * Lam * t])
    w = kernel_weight(0.0, t, Lam, y, s)
    # below, above, outside the horizontal ball, inside
    assert list(w[:3]) == [0.0, 0.0, 0.0] and w[3] > 0
    with pytest.raises(ConfigurationError):
        kernel_weight(0.0, t, 1.0, y, s)


def test_kernel_constants_positive():
    for n in (2, 3):
        kp = kernel_pair(n)
        assert kp.c_phi > 0 and kp.c_psi > 0
    with pytest.raises(ConfigurationError):
        kernel_pair(4)


def test_constant_preserved():
    A0 = np.array([[1.5, 0.2], [-0.1, 0.8]])
    B = MollifiedField(constant(A0), 16.0)
    x, t = np.array([0.1, 0.7]), np.array([0.01, 0.2])
    assert np.allclose(B(x, t), A0, atol=1e-12)
    assert np.allclose(B.gradient(x, t), 0.0, atol=1e-12)


def test_linear_in_x_preserved():
    # phi is even, so the average of a field linear in x is the field itself
    A = MatrixField(2, lambda x, t: np.eye(2) + 0.3 * x[..., 0, None, None] * E11,
                    lambda x, t: np.broadcast_to((0.3 * E11)[..., None], x.shape[:-1] + (2, 2, 2))
                    * np.array([1.0, 0.0]))
    B = MollifiedField(A, 4.0)
    x, t = np.array([0.2, 0.4]), np.array([0.05, 0.1])
    assert np.allclose(B(x, t), A(x, t), atol=1e-10)


def test_linear_in_t_closed_form():
    # A = I + t E: B = I + t E int_1^2 psi(u) Lam**u du
    Lam = 4.0
    kp = kernel_pair(2)
    A = MatrixField(2, lambda x, t: np.eye(2) + t[..., None, None] * E11)
    B = MollifiedField(A, Lam, route="kernel")
    factor = quad(lambda u: kp.psi(u) * Lam**u, 1.0, 2.0, epsabs=1e-14)[0]
    t = 0.03
    assert B(np.array([0.4]), np.array(t))[..., 0, 0] == pytest.approx(1 + t * factor, rel=1e-7)


@pytest.mark.parametrize("route", ["kernel", "transfer"])
def test_gradient_matches_finite_differences(route, rng):
    B = MollifiedField(dkp_smooth(0.3, ell=0.5), 4.0, route=route)
    x, t = rng.uniform(0, 1, 4), rng.uniform(0.02, 0.2, 4)
    G = B.gradient(x, t)
    for i in range(4):
        d = 1e-5 * t[i]
        gx = (B(np.array([x[i] + d]), np.array(t[i])) - B(np.array([x[i] - d]), np.array(t[i]))) / (2 * d)
        gt = (B(np.array([x[i]]), np.array(t[i] + d)) - B(np.array([x[i]]), np.array(t[i] - d))) / (2 * d)
        scale = np.abs(G[i]).max()
        assert np.allclose(G[i][..., 0], gx, atol=1e-5 * scale + 1e-7)
        assert np.allclose(G[i][..., 1], gt, atol=1e-5 * scale + 1e-7)


def test_routes_agree(rng):
    base = dkp_smooth(0.2, ell=0.5)
    x, t = rng.uniform(0, 1, 6), rng.uniform(0.01, 0.2, 6)
    a = MollifiedField(base, 16.0, route="kernel").gradient(x, t)
    b = MollifiedField(base, 16.0, route="transfer").gradient(x, t)
    # both rules are calibrated relative to |B| ~ 1, so compare t grad B absolutely
    tt = t[:, None, None, None]
    assert np.allclose(tt * a, tt * b, atol=1e-5)


def test_derivative_bounds():
    A = dkp_smooth(0.5, ell=0.3)
    m = build_mesh(2, 4)
    sup_A = 1.5  # |A|_inf entrywise bound for delta = 0.5 and unit E
    for Lam in (4.0, 16.0):
        B = MollifiedField(A, Lam, route="kernel")
        kp = kernel_pair(2)
        assert sup_tgrad(B, m, "t") <= 2 * kp.c_psi * sup_A / np.log(Lam)


def test_mollified_ellipticity():
    B = MollifiedField(dkp_smooth(0.3), 4.0)
    x, t = np.random.default_rng(1).uniform(0, 1, 50), np.random.default_rng(2).uniform(0.01, 1, 50)
    M = B(x, t)
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    assert ev.min() >= 0.7 - 1e-6


def test_initial_split_sums_to_field(rng):
    A = dkp_smooth(0.2)
    B1, C1 = initial_split(A)
    x, t = rng.uniform(0, 1, 5), rng.uniform(0.01, 0.5, 5)
    assert np.allclose(B1(x, t) + C1(x, t), A(x, t), atol=1e-13)


def test_argument_validation():
    with pytest.raises(ConfigurationError):
        MollifiedField(constant(n=2), 1.0)
    with pytest.raises(ConfigurationError):
        MollifiedField(constant(n=2), 4.0, route="magic")
    with pytest.raises(ConfigurationError):
        mollify(constant(n=2), 1.5)
    with pytest.raises(ConfigurationError):
        decompose(constant(n=2), 1.5)


def test_decompose_constant_takes_first_rung():
    d = decompose(constant(n=2), 0.1, J=4, sup_J=3)
    assert d.Lam == 4.0
    assert d.M_B == pytest.approx(0.0, abs=1e-10) and d.M_C == pytest.approx(0.0, abs=1e-10)
    assert d.eps_achieved <= 0.1


def test_decompose_unreachable():
    with pytest.raises(EpsilonUnreachableError) as exc:
        decompose(dkp_smooth(0.5, ell=0.1), 1e-6, J=3, sup_J=3, ladder=(4.0,))
    assert exc.value.args
