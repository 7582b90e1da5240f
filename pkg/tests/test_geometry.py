import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charfol import jets as J
from charfol import models as M
from charfol.geometry import (
    Chart,
    ChartError,
    ChartPoint,
    ContactStructure,
    ContactStructureError,
    ScalarField,
    SingularFrameError,
    VectorField,
    apply_field,
    eval_jet,
    lie_bracket,
    omega_residuals,
    project_to_chart,
    structure_functions,
)
from oracles import fd_gradient

MODELS = [M.heisenberg(), M.su2(1.0), M.su2(0.7), M.sl2(1.0), M.sl2(1.3)]


def random_points(model, n=100, seed=0):
    return model.random_points(n, np.random.default_rng(seed))


def test_eval_jet_quadratic():
    u = ScalarField.from_expression(lambda p: p[2] - (p[0] ** 2 + p[1] ** 2))
    j = eval_jet(u, ChartPoint.make((1.0, 0.0, 0.0)))
    assert j.value == -1.0
    np.testing.assert_array_equal(j.gradient, [-2, 0, 1])


def test_eval_jet_domain_error():
    f = ScalarField.from_expression(lambda p: 1.0 / p[0] if not isinstance(p[0], J.Jet) else J.reciprocal(p[0]))
    with pytest.raises(J.DomainError):
        eval_jet(f, ChartPoint.make((0.0, 1.0, 1.0)))


def test_apply_field_heisenberg_substitution():
    H = M.heisenberg().structure
    u = ScalarField.from_expression(lambda p: p[2])
    assert apply_field(H.X1, u, (0.0, 1.0, 0.0)) == -0.5


def test_apply_field_constant_is_zero():
    H = M.su2(1.0).structure
    c = ScalarField.from_expression(lambda p: 3.0 + 0 * p[0])
    assert apply_field(H.X2, c, (0.0, 0.6, 0.8, 0.0)) == 0.0


def test_second_order_application_vs_fd():
    H = M.heisenberg().structure
    u = ScalarField.from_expression(lambda p: p[2] - p[0] * p[1])
    from charfol.geometry import lie_derivative

    X2u = lie_derivative(H.X2, u)
    val = apply_field(H.X1, X2u, (0.0, 0.0, 0.0))
    X2u_fd = lambda x: float(H.X2.at(x) @ fd_gradient(lambda q: u(q), x))
    oracle = float(H.X1.at(np.zeros(3)) @ fd_gradient(X2u_fd, np.zeros(3), 1e-3))
    assert val == pytest.approx(oracle, abs=1e-6)
    assert val == pytest.approx(-0.5)


def test_heisenberg_bracket_is_reeb():
    H = M.heisenberg().structure
    for p in random_points(M.heisenberg(), 20):
        np.testing.assert_allclose(lie_bracket(H.X1, H.X2, p), [0, 0, 1], atol=1e-14)


def test_bracket_antisymmetry():
    H = M.sl2(1.0).structure
    for p in random_points(M.sl2(1.0), 20):
        np.testing.assert_allclose(lie_bracket(H.X1, H.X1, p), 0, atol=1e-14)
        np.testing.assert_allclose(lie_bracket(H.X1, H.X0, p), -lie_bracket(H.X0, H.X1, p), atol=1e-12)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.name}-{m.k}")
def test_jacobi_identity(model):
    cs = model.structure
    from charfol.geometry import bracket_jets

    for p in random_points(model, 10, 3):
        def br(A, B):
            return bracket_jets(A, B)

        X = [V.jets(p, 2) for V in (cs.X1, cs.X2, cs.X0)]
        total = np.zeros(model.chart.dim)
        for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            inner = br(X[b], X[c])
            total += np.array([J.value(t) for t in br(X[a], inner)])
        assert np.abs(total).max() <= 1e-6


def test_su2_bracket_at_identity():
    for k in (1.0, 0.5, 2.0):
        m = M.su2(k)
        e = m.identity
        cs = m.structure
        np.testing.assert_allclose(lie_bracket(cs.X1, cs.X2, e), cs.X0.at(e), atol=1e-8)
        # the Reeb field at the identity has length 4k^2 / 2 in ambient coordinates
        assert np.linalg.norm(cs.X0.at(e)) == pytest.approx(2 * k * k)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.name}-{m.k}")
def test_commutation_relations(model):
    cs = model.structure
    kappa = model.kappa
    for p in random_points(model, 100, 1):
        np.testing.assert_allclose(lie_bracket(cs.X1, cs.X2, p), cs.X0.at(p), atol=1e-7)
        np.testing.assert_allclose(lie_bracket(cs.X0, cs.X1, p), kappa * cs.X2.at(p), atol=1e-7)
        np.testing.assert_allclose(lie_bracket(cs.X0, cs.X2, p), -kappa * cs.X1.at(p), atol=1e-7)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.name}-{m.k}")
def test_contact_normalisation(model):
    cs = model.structure
    for p in random_points(model, 100, 2):
        res = omega_residuals(cs, p)
        assert max(abs(v) for v in res.values()) <= 1e-8, res
    cs.validate(random_points(model, 10, 4))


@pytest.mark.parametrize("model", MODELS[1:], ids=lambda m: f"{m.name}-{m.k}")
def test_frames_tangent_to_constraint(model):
    cs = model.structure
    for p in random_points(model, 50, 5):
        nrm = cs.normal_at(p)
        for V in (cs.X1, cs.X2, cs.X0):
            assert abs(nrm @ V.at(p)) <= 1e-9


def test_structure_functions_heisenberg_zero():
    c = structure_functions(M.heisenberg().structure, (0.3, -1.0, 2.0))
    assert [c.c12_1, c.c12_2, c.c01_1, c.c01_2, c.c02_1, c.c02_2] == [0.0] * 6


@pytest.mark.parametrize("k", [1.0, 0.5])
def test_structure_functions_su2(k):
    m = M.su2(k)
    for p in random_points(m, 10):
        c = structure_functions(m.structure, p)
        assert c.c01_2 == pytest.approx(m.kappa, abs=1e-9)
        assert c.c01_1 == pytest.approx(0.0, abs=1e-9)
        assert c.c02_1 == pytest.approx(-m.kappa, abs=1e-9)


def _perturbed(delta):
    H = M.heisenberg().structure
    g = lambda p: delta * J.sin(p[0] + 2 * p[2]) * J.exp(p[1] / 3)
    X1 = VectorField(lambda p: [a + g(p) * b for a, b in zip(H.X1.coeff_fn(p), H.X2.coeff_fn(p))], "X1")
    return ContactStructure(X1, H.X2, H.X0, Chart.HEISENBERG)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_structure_functions_reconstruct(delta, p):
    cs = _perturbed(delta)
    c = structure_functions(cs, p)
    X1, X2, X0 = cs.frame_at(p)
    np.testing.assert_allclose(lie_bracket(cs.X1, cs.X2, p), c.c12_1 * X1 + c.c12_2 * X2 + X0, atol=1e-7)
    np.testing.assert_allclose(lie_bracket(cs.X0, cs.X1, p), c.c01_1 * X1 + c.c01_2 * X2, atol=1e-7)
    np.testing.assert_allclose(lie_bracket(cs.X0, cs.X2, p), c.c02_1 * X1 + c.c02_2 * X2, atol=1e-7)


def test_singular_frame_rejected():
    H = M.heisenberg().structure
    bad = ContactStructure(H.X1, H.X1, H.X0)
    with pytest.raises((SingularFrameError, ContactStructureError)):
        structure_functions(bad, (0.0, 0.0, 0.0))


def test_bad_contact_form_rejected():
    H = M.heisenberg().structure
    from charfol.geometry import OneForm

    cs = ContactStructure(H.X1, H.X2, H.X0, omega=OneForm(lambda p: [0, 0, 2.0]))
    with pytest.raises(ContactStructureError):
        cs.validate([(0.1, 0.2, 0.3)])


def test_project_su2_radial():
    q = project_to_chart((1.0001, 0, 0, 0), Chart.SU2)
    np.testing.assert_allclose(q.array, [1, 0, 0, 0], atol=1e-12)


def test_project_heisenberg_identity():
    p = (0.3, -2.0, 7.0)
    assert project_to_chart(p, Chart.HEISENBERG).coords == p


def test_project_sl2_residual():
    q = project_to_chart((1.001, 0, 0, 1), Chart.SL2)
    assert abs(q.array[0] * q.array[3] - q.array[1] * q.array[2] - 1) <= 1e-12


def test_chart_point_validation():
    with pytest.raises(ChartError):
        ChartPoint.make((1.0, 1.0, 0.0, 0.0), Chart.SU2)
    assert ChartPoint.make((0.0, 0.0, 1.0, 0.0), Chart.SU2).constraint_residual == 0.0
