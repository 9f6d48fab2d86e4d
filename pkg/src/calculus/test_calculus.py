"""test jacobians, the frequency map and the action-space hessian determinant"""

import math

import numpy as np
import pytest
from scipy.linalg import lu_factor

from calculus.hessian_calculus import HessianCalculator, lu_determinant, richardson, symmetry_defect
from catalog.model_catalog import ModelCatalog
from common.config import Settings
from common.errors import DomainError, SingularJacobianError, StepError

E2 = math.exp(-2.0)


@pytest.fixture
def catalog():
    return ModelCatalog(Settings())


def calculator_for(catalog, name, **overrides):
    settings = catalog.settings.override(overrides)
    return HessianCalculator(catalog.load_model(name), settings)


def test_richardson_improves_central_difference():
    x = 0.7
    central = lambda h: (math.sin(x + h) - math.sin(x - h)) / (2 * h)
    value, error = richardson(central, 1e-2)
    assert value == pytest.approx(math.cos(x), abs=5e-11)
    assert error < 1e-5


def test_lu_determinant_and_symmetry():
    A = np.array([[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 4.0]])
    assert lu_determinant(lu_factor(A)) == pytest.approx(np.linalg.det(A), rel=1e-14)
    assert symmetry_defect(np.array([[1.0, 2.0], [2.0, 5.0]])) == 0.0
    assert symmetry_defect(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(math.sqrt(2.0))


def test_decoupled_closed_form(catalog):
    calc = calculator_for(catalog, 'decoupled-corank1-synthetic')
    sample = calc.det_hessian([0.3, E2])
    assert sample.method == 'closed-form'
    assert sample.detJ == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(sample.Gamma, [0.3, 0.5], rtol=1e-14)
    assert sample.dGamma_dF[1, 1] == pytest.approx(1.0 / (E2 * 4.0), rel=1e-13)
    assert sample.detHess == pytest.approx(math.exp(2.0) / 8.0, rel=1e-12)
    assert sample.detHess * E2 * (-2.0) ** 3 == pytest.approx(-1.0, rel=1e-12)


def test_differenced_agrees_with_closed_form(catalog):
    closed = calculator_for(catalog, 'coupled-synthetic')
    differenced = calculator_for(catalog, 'coupled-synthetic', closed_form=False)
    F = [0.2, 1e-4]
    a = closed.det_hessian(F)
    b = differenced.det_hessian(F)
    assert b.method == 'differenced'
    np.testing.assert_allclose(b.J, a.J, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(b.Gamma, a.Gamma, rtol=1e-8)
    assert b.detHess == pytest.approx(a.detHess, rel=1e-5)
    assert np.all(b.J_error >= 0.0)


def test_coupled_scaled_determinant(catalog):
    calc = calculator_for(catalog, 'coupled-synthetic')
    for y in (1e-3, 1e-6, 1e-9):
        L = math.log(y)
        scaled = calc.det_hessian([0.0, y]).detHess * y * L ** 3
        assert scaled == pytest.approx(-1.0 + 0.5 * y - 0.25 * y * L, rel=1e-9)


def test_saddle_chart_matches_synthetic(catalog):
    saddle = calculator_for(catalog, 'decoupled-corank1-saddle')
    sample = saddle.det_hessian([0.3, E2])
    assert sample.method == 'period'
    # the geometric factor has a diagonal jacobian row
    assert sample.J[1, 0] == 0.0
    assert sample.J[1, 1] == pytest.approx(2.0, rel=1e-8)
    assert sample.detHess == pytest.approx(math.exp(2.0) / 8.0, rel=1e-8)


@pytest.mark.parametrize('name', ['pendulum-libration', 'pendulum-rotation', 'duffing-outer', 'coupled-saddle'])
def test_geometric_jacobian_matches_differenced_action(catalog, name):
    calc = calculator_for(catalog, name)
    differenced = calculator_for(catalog, name, closed_form=False)
    F = [0.1, 1e-2]
    J = calc.jacobian_I_wrt_F(F)
    assert J[1, 1] == calc.mapper.singular_action_slope(0, 1e-2)
    assert J[1, 1] == pytest.approx(differenced.jacobian_I_wrt_F(F)[1, 1], rel=1e-6)
    np.testing.assert_array_equal(J[0], [1.0, 0.0])
    assert J[1, 0] == 0.0


def test_period_method_agrees_with_differenced_frequencies(catalog):
    calc = calculator_for(catalog, 'duffing-outer')
    differenced = calculator_for(catalog, 'duffing-outer', closed_form=False)
    F = [0.1, 1e-2]
    a = calc.det_hessian(F)
    b = differenced.det_hessian(F)
    assert a.method == 'period'
    assert a.detHess == pytest.approx(b.detHess, rel=1e-3)


def test_corank2_product(catalog):
    calc = calculator_for(catalog, 'decoupled-corank2-synthetic')
    F = [0.1, 1e-4, 1e-6]
    sample = calc.det_hessian(F)
    scale = F[1] * math.log(F[1]) ** 3 * F[2] * math.log(F[2]) ** 3
    assert sample.detHess * scale == pytest.approx(1.0, rel=1e-10)


def test_action_hessian_is_symmetric(catalog):
    calc = calculator_for(catalog, 'coupled-synthetic')
    F = [0.2, 1e-3]
    H = calc.action_hessian(F)
    assert symmetry_defect(H) < catalog.settings.sym_tol
    assert np.linalg.det(H) == pytest.approx(calc.det_hessian(F).detHess, rel=1e-10)


def test_hessian_in_actions_matches_chain_rule(catalog):
    calc = calculator_for(catalog, 'coupled-synthetic')
    F = [0.2, 1e-2]
    direct, error = calc.hessian_in_actions(F)
    np.testing.assert_allclose(direct, calc.action_hessian(F), rtol=1e-5, atol=1e-8)
    assert error.shape == (2, 2)


def test_frequency_map_solves_transposed_system(catalog):
    calc = calculator_for(catalog, 'decoupled-corank1-synthetic')
    F = [0.3, E2]
    np.testing.assert_allclose(calc.frequency_map(F, [[1.0, 0.0], [0.0, 2.0]]), [0.3, 0.5], rtol=1e-14)
    # grad H = (0.3, 1) = J^T Gamma with a coupled J
    np.testing.assert_allclose(calc.frequency_map(F, [[1.0, 0.0], [1.0, 2.0]]), [-0.2, 0.5], rtol=1e-13)
    np.testing.assert_allclose(calc.gamma_at(F), [0.3, 0.5], rtol=1e-10)
    with pytest.raises(SingularJacobianError):
        calc.frequency_map(F, [[1.0, 2.0], [0.5, 1.0]])


def test_jacobian_gamma(catalog):
    calc = calculator_for(catalog, 'decoupled-corank1-synthetic')
    D = calc.jacobian_Gamma_wrt_F([0.3, E2])
    np.testing.assert_allclose(D, [[1.0, 0.0], [0.0, math.exp(2.0) / 4.0]], rtol=1e-12, atol=1e-15)


def test_errors(catalog):
    calc = calculator_for(catalog, 'decoupled-corank1-synthetic')
    with pytest.raises(DomainError):
        calc.det_hessian([0.3, 0.0])
    with pytest.raises(DomainError):
        calc.det_hessian([0.3, 1e-13])
    # J22 = -ln F2 vanishes at F2 = 1
    with pytest.raises(SingularJacobianError):
        calc.det_hessian([0.3, 1.0])

    saddle = calculator_for(catalog, 'decoupled-corank1-saddle')
    with pytest.raises(StepError):
        saddle.det_hessian([0.3, 1.0 - 1e-7])


def test_record_layout(catalog):
    calc = calculator_for(catalog, 'decoupled-corank1-synthetic')
    record = calc.det_hessian([0.3, E2]).to_record()
    keys = list(record)
    assert keys[:4] == ['F1', 'F2', 'I1', 'I2']
    assert keys[4:8] == ['detJ', 'Gamma1', 'Gamma2', 'detHess']
    assert keys[-1] == 'method'
    assert record['J_2_2'] == pytest.approx(2.0)
