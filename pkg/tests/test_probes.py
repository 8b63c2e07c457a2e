import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dkplab.errors import ConfigurationError
from dkplab.fields import carleson_bump, constant, dkp_smooth
from dkplab.mesh import build_mesh
from dkplab.probes import (ProbeReport, _regularity_case, bilipschitz_stability_probe, boundary_gradient,
                           data_family, dirichlet_probe, ibp_bump_field, ibp_identity_probe, ibp_terms,
                           moser_constant, moser_probe, perturbation_probe, pipeline, poisson_duality_probe,
                           regularity_probe)

I2 = constant(n=2)


def test_data_family_names():
    assert [c for c, _ in data_family("all")] == ["cos1", "cos2", "cos4", "cos8", "bump0.3", "bump0.7"]
    assert [c for c, _ in data_family(["constant", 3])] == ["const", "cos3"]
    with pytest.raises(ConfigurationError):
        data_family("squares")


def test_boundary_gradient_spectral(mesh5):
    fb = np.sin(2 * np.pi * 3 * mesh5.xn)
    g = boundary_gradient(fb, mesh5)[..., 0]
    assert np.allclose(g, 6 * np.pi * np.cos(6 * np.pi * mesh5.xn), atol=1e-10)
    # the Nyquist mode alternates in sign on the grid and has no derivative
    assert np.allclose(boundary_gradient((-1.0) ** np.arange(mesh5.N), mesh5), 0.0, atol=1e-12)


def test_report_summary_and_errors():
    rep = ProbeReport("x", {}, cases=[{"case": "a", "ratio": 2.0}, {"case": "b", "ratio": 0.5},
                                      {"case": "c", "ratio": None}]).finalize()
    assert rep.summary == {"max_ratio": 2.0, "min_ratio": 0.5, "spread": 4.0}
    assert rep.case("b")["ratio"] == 0.5
    with pytest.raises(KeyError):
        rep.case("zz")
    zero = ProbeReport("x", {}, cases=[{"case": "a", "ratio": 0.0}]).finalize()
    assert zero.summary["spread"] is None
    with pytest.raises(ConfigurationError):
        ProbeReport("x", {}, cases=[{"case": "a", "ratio": float("inf")}]).finalize()


def test_dirichlet_identity_low_frequency():
    rep = dirichlet_probe(I2, family=1, J=6)
    # the maximal function of the harmonic extension of cos is at least |cos|, up to O(h)
    assert rep.summary["max_ratio"] >= 1 - 2 * np.pi / 2**6


def test_regularity_constant_skipped():
    rep = regularity_probe(I2, family="constant", J=4)
    c = rep.case("const")
    assert c["ratio"] is None and "constant data" in c["note"]
    assert rep.summary["max_ratio"] is None


@settings(max_examples=6)
@given(st.floats(0.1, 10.0), st.sampled_from([1.0, 2.0, 3.5]))
def test_regularity_ratio_homogeneous(c, p):
    m = build_mesh(2, 4)
    f = lambda x: np.cos(2 * np.pi * x) + 0.2 * np.sin(4 * np.pi * x)
    a = _regularity_case(dkp_smooth(0.1), m, p, "f", f)
    b = _regularity_case(dkp_smooth(0.1), m, p, "cf", lambda x: c * f(x))
    assert b["ratio"] == pytest.approx(a["ratio"], rel=1e-7)


def test_regularity_deterministic():
    a = regularity_probe(dkp_smooth(0.1), family="trig", J=4).to_dict()
    assert regularity_probe(dkp_smooth(0.1), family="trig", J=4).to_dict() == a
    # the thread pool may reorder floating-point work inside the solver
    b = regularity_probe(dkp_smooth(0.1), family="trig", J=4, workers=2).to_dict()
    assert [c["case"] for c in b["cases"]] == [c["case"] for c in a["cases"]]
    assert b["summary"]["max_ratio"] == pytest.approx(a["summary"]["max_ratio"], rel=1e-12)


def test_perturbation_zero_is_neutral():
    C = carleson_bump(0.0)
    rep = perturbation_probe(I2, C, J=4, family="trig")
    assert rep.summary["inflation"] == pytest.approx(1.0, abs=1e-12)
    assert rep.summary["cm_norm_C"] == 0.0


def test_perturbation_inflation_grows_with_delta():
    inf = [perturbation_probe(I2, carleson_bump(d), J=5, family=[1, 2]).summary["inflation"] for d in (0.1, 0.2)]
    assert 1.0 <= inf[0] <= inf[1]


def test_bilipschitz_identity_map_is_exact():
    rep = bilipschitz_stability_probe(I2, J=4, family="trig", samples=100)
    assert rep.summary["max_l2_difference"] < 1e-10
    assert rep.summary["max_relative_ratio_difference"] < 1e-10
    assert rep.summary["window"] == 1.0


def test_bilipschitz_oracle_linear_map():
    B = constant(np.array([[1.0, 0.0], [0.0, 2.0]]))
    d = [bilipschitz_stability_probe(I2, J=J, family=1, B=B, reference="oracle", samples=100)
         .summary["max_l2_difference"] for J in (4, 5)]
    assert d[0] / d[1] > 2.5


def test_bilipschitz_reference_validation():
    with pytest.raises(ConfigurationError):
        bilipschitz_stability_probe(dkp_smooth(0.1), J=4, reference="oracle", samples=50)
    with pytest.raises(ConfigurationError):
        bilipschitz_stability_probe(I2, J=4, reference="guess", samples=50)


def test_ibp_zero_field_and_pair_checks():
    terms = ibp_terms(None, 4)
    assert all(T == 0.0 and parts == (0.0, 0.0, 0.0, 0.0) for T, parts in terms.values())
    with pytest.raises(ConfigurationError):
        ibp_terms(ibp_bump_field(), 4, pairs=[(1, 0)])
    with pytest.raises(ConfigurationError):
        ibp_terms(dkp_smooth(0.1), 4)
    with pytest.raises(ConfigurationError):
        ibp_terms(constant(n=3) - constant(n=3), 4)


def test_ibp_residual_second_order():
    rep = ibp_identity_probe(Js=(4, 5, 6))
    red = rep.summary["reduction"]
    assert all(r > 2.8 for r in red)


def test_moser_constant_of_constant_gradient(mesh5):
    g = np.broadcast_to([0.3, -1.2], mesh5.cell_shape + (2,))
    q = moser_constant(g, mesh5)
    assert np.nanmax(np.abs(q - 1.0)) < 1e-12
    # cells with 3t > 1 are outside the range
    assert np.all(np.isnan(q[..., -1]))


def test_moser_probe_constant_data_skipped():
    rep = moser_probe(I2, lambda x: 0 * x + 2.0, Js=4)
    assert rep.cases[0]["ratio"] is None and "zero gradient" in rep.cases[0]["note"]


def test_moser_probe_laplacian_near_one():
    rep = moser_probe(I2, lambda x: np.cos(2 * np.pi * x), Js=(5,))
    assert 1.0 <= rep.summary["max_ratio"] <= 1.2


def test_poisson_fem_comparison_is_zero_for_laplacian():
    rep = poisson_duality_probe(I2, Js=(4,), comparison="fem")
    assert rep.cases[0]["ratio"] == 0.0
    with pytest.raises(ConfigurationError):
        poisson_duality_probe(I2, Js=(4,), comparison="nope")
    with pytest.raises(ConfigurationError):
        poisson_duality_probe(I2, q=1.0, Js=(4,))


def test_pipeline_constant_field():
    out = pipeline(I2, eps=0.1, J=4, family=[1])
    assert out["decomposition"]["lambda"] == 4.0
    assert out["structure"]["last_row_cm"] == pytest.approx(0.0, abs=1e-12)
    assert out["rho"]["invertible"] is True
    assert out["report"].summary["max_ratio"] == pytest.approx(
        regularity_probe(I2, family=[1], J=4).summary["max_ratio"], rel=1e-9)
