import numpy as np
import pytest

from dkplab.codim import (check_structure, codim_carleson_norm, cylindrical_derivative_check,
                          radial_ibp_check, radial_identity_probe, structure_preset)
from dkplab.errors import ConfigurationError
from dkplab.mesh import CylMesh


def test_cylmesh_validation():
    with pytest.raises(ConfigurationError):
        CylMesh(5, n=4, d=1)
    with pytest.raises(ConfigurationError):
        CylMesh(9)
    with pytest.raises(ConfigurationError):
        CylMesh(5, n_theta=2)


def test_carleson_sqrt_r_closed_form():
    # int_0^rho int_0^{2 pi} r dtheta dr / r = 2 pi rho, per unit tangential length rho
    for J in (4, 5):
        r = codim_carleson_norm(lambda x, th, r: np.sqrt(r), CylMesh(J))
        assert r.max_average == pytest.approx(2 * np.pi, rel=1e-12)
        assert r.diverging is False


def test_carleson_constant_diverges_logarithmically():
    a = codim_carleson_norm(lambda x, th, r: np.ones_like(r), CylMesh(4), check_divergence=False).max_average
    b = codim_carleson_norm(lambda x, th, r: np.ones_like(r), CylMesh(5)).max_average
    assert b - a == pytest.approx(2 * np.pi * np.log(2), rel=1e-3)
    assert codim_carleson_norm(lambda x, th, r: np.ones_like(r), CylMesh(4)).diverging is True


def test_carleson_array_shape_checked():
    cyl = CylMesh(4)
    with pytest.raises(ConfigurationError):
        codim_carleson_norm(np.ones((3, 3, 3)), cyl)
    assert codim_carleson_norm(np.zeros((cyl.N, cyl.n_theta, cyl.N)), cyl).norm == 0.0


def test_cylindrical_identities_hold():
    res = cylindrical_derivative_check(samples=200, seed=3)
    assert res["split"] < 1e-12
    assert res["angle_radial"] < 1e-12
    assert res["radial_angular"] < 1e-12


def test_radial_ibp_converges():
    res = [radial_ibp_check(J)["residual"] for J in (4, 5, 6)]
    assert res[0] / res[1] >= 3.5 and res[1] / res[2] >= 3.5
    assert res[-1] < 1e-6


@pytest.mark.parametrize("case", ["i", "ii"])
def test_structure_presets_satisfy_shape(case):
    out = check_structure(structure_preset(case, delta=0.3))
    assert out["transverse_scalar"] < 1e-14
    if case == "ii":
        assert out["upper_parallel"] < 1e-14 and out["lower_parallel"] < 1e-14
    with pytest.raises(ConfigurationError):
        structure_preset("iii")


def test_structure_case_i_is_not_parallel():
    B = structure_preset("i", delta=0.3)
    B.case = "ii"  # check the case-(ii) conditions on a case-(i) field
    out = check_structure(B)
    assert out["upper_parallel"] > 1e-3


def test_radial_identity_first_order():
    f = lambda x: np.cos(2 * np.pi * x)
    a = radial_identity_probe(f, 4)
    b = radial_identity_probe(f, 5)
    assert a["l2_error"] / b["l2_error"] == pytest.approx(2.0, abs=0.3)
    # axisymmetric data gives an axisymmetric solution
    assert b["theta_spread"] < 1e-8
