import numpy as np
import pytest

from dkplab.elliptic import (FourierExtension, convergence_test, h1_error, l2_error, laplace_fourier_oracle,
                             manufactured_problem, solve_dirichlet, solve_inhomogeneous, strip_problem)
from dkplab.errors import ConfigurationError
from dkplab.fields import constant, dkp_smooth
from dkplab.mesh import build_mesh


def test_constant_data_reproduced(mesh5):
    sol = solve_dirichlet(constant(np.array([[2.0, 0.4], [0.4, 1.0]])), lambda x: 0 * x + 1.7, mesh5)
    assert np.allclose(sol.nodal, 1.7, atol=1e-9)
    assert np.allclose(sol.cell_gradients(), 0.0, atol=1e-8)


def test_linear_profile_exact(mesh5):
    # u = t is in the Q1 space, so the discrete solution is exact
    sol = solve_dirichlet(constant(n=2), lambda x: 0 * x, mesh5, top=1.0)
    _, T = np.meshgrid(mesh5.xn, mesh5.tn, indexing="ij")
    assert np.allclose(sol.nodal, T, atol=1e-9)


def test_strip_oracle_agreement():
    m = build_mesh(2, 6)
    f = lambda x: np.cos(2 * np.pi * x) + 0.3 * np.sin(4 * np.pi * x)
    sol = solve_dirichlet(constant(n=2), f, m)
    ref = laplace_fourier_oracle(f, m)
    assert np.max(np.abs(sol.nodal - ref.nodal)) < 5e-3
    assert sol.residual <= 1e-10 * 10


def test_fourier_extension_halfplane_closed_form():
    x = np.arange(32) / 32
    ext = FourierExtension(np.cos(2 * np.pi * 2 * x), "halfplane")
    X, T = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 5))
    assert np.allclose(ext(X, T), np.exp(-4 * np.pi * T) * np.cos(4 * np.pi * X), atol=1e-13)
    g = ext.gradient(X, T)
    assert np.allclose(g[..., 1], -4 * np.pi * np.exp(-4 * np.pi * T) * np.cos(4 * np.pi * X), atol=1e-12)


def test_fourier_extension_strip_top_is_mean():
    x = np.arange(16) / 16
    ext = FourierExtension(2.0 + np.sin(2 * np.pi * x), "strip")
    assert np.allclose(ext(x, 1.0), 2.0, atol=1e-13)
    assert np.allclose(ext(x, 0.0), 2.0 + np.sin(2 * np.pi * x), atol=1e-13)
    with pytest.raises(ConfigurationError):
        FourierExtension(x, "sphere")


def test_anisotropic_oracle():
    A = constant(np.diag([2.0, 0.5]))
    prob = strip_problem(A)
    sol = prob.solve(6)
    assert l2_error(sol, prob.exact) < 2e-3
    assert h1_error(sol, prob.exact_grad) < 0.2


@pytest.mark.slow
def test_convergence_rates_strip():
    r = convergence_test(strip_problem(), Js=(4, 5, 6, 7))
    assert r["l2_rate"] == pytest.approx(2.0, abs=0.15)
    assert r["h1_rate"] == pytest.approx(1.0, abs=0.1)


def test_convergence_rates_manufactured_variable():
    r = convergence_test(manufactured_problem(dkp_smooth(0.3, E=[[1, 0.5], [0.2, 1]])), Js=(4, 5, 6))
    assert r["l2_rate"] == pytest.approx(2.0, abs=0.2)
    assert r["h1_rate"] == pytest.approx(1.0, abs=0.1)


def test_inhomogeneous_zero_source(mesh5):
    v = solve_inhomogeneous(dkp_smooth(0.2), np.zeros(mesh5.cell_shape + (2,)), mesh5)
    assert np.all(v.nodal == 0.0) or np.max(np.abs(v.nodal)) < 1e-14


def test_inhomogeneous_energy_identity(mesh5, rng):
    H = rng.normal(size=mesh5.cell_shape + (2,))
    v = solve_inhomogeneous(dkp_smooth(0.2), H, mesh5)
    u = v.nodal.ravel()
    assert u @ (v.stiffness @ u) == pytest.approx(v.load @ u, rel=1e-8)
    assert np.all(v.nodal[..., 0] == 0) and np.all(v.nodal[..., -1] == 0)
    assert np.max(np.abs(v.weak_residuals())) < 1e-8 * np.max(np.abs(v.load))


def test_adjoint_consistency(mesh5, rng):
    A = constant(np.array([[1.0, 0.6], [-0.4, 1.2]]))
    H1, H2 = rng.normal(size=(2,) + mesh5.cell_shape + (2,))
    v = solve_inhomogeneous(A, H1, mesh5)
    w = solve_inhomogeneous(A, H2, mesh5, adjoint=True)
    # <w, K v> = <w, b1> and <v, K^T w> = <v, b2>
    assert w.nodal.ravel() @ v.load == pytest.approx(v.nodal.ravel() @ w.load, rel=1e-8)


def test_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        solve_dirichlet(constant(n=3), lambda x: 0 * x[..., 0], build_mesh(2, 4))
    with pytest.raises(ConfigurationError):
        solve_inhomogeneous(constant(n=2), np.zeros((3, 3, 2)), build_mesh(2, 4))


def test_max_principle_scalar_dominant(mesh5):
    f = lambda x: np.cos(2 * np.pi * x) + 0.5 * np.sin(6 * np.pi * x)
    sol = solve_dirichlet(dkp_smooth(0.2), f, mesh5)
    assert sol.info["max_principle_violation"] <= 1e-8


def test_max_principle_violation_reported():
    from dkplab.elliptic import max_principle_violation

    u = np.zeros((4, 5))
    u[:, 0] = 1.0
    u[2, 2] = 1.25
    assert max_principle_violation(u) == 0.25


def test_energy_consistency_random_hats(mesh5):
    sol = solve_dirichlet(dkp_smooth(0.3, E=[[1, 0.5], [-0.2, 1]]), lambda x: np.cos(2 * np.pi * x), mesh5)
    r = sol.weak_residuals()
    idx = np.random.default_rng(7).integers(0, r.size, 20)
    scale = np.abs(sol.stiffness).max() * np.abs(sol.nodal).max()
    assert np.max(np.abs(r.ravel()[idx])) < 1e-8 * scale


def test_transpose_flag_matches_transposed_field(mesh5, rng):
    A0 = np.array([[1.0, 0.6], [-0.4, 1.2]])
    H = rng.normal(size=mesh5.cell_shape + (2,))
    a = solve_inhomogeneous(constant(A0.T), H, mesh5, adjoint=True)
    b = solve_inhomogeneous(constant(A0), H, mesh5)
    assert np.allclose(a.nodal, b.nodal, atol=1e-12)
