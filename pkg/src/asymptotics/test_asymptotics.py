"""test the scaling-law scans and the sampled verdict"""

import math

import numpy as np
import pytest

from actions.action_map import ActionMapper
from asymptotics.scaling import (
    AsymptoticsVerifier,
    SingularPath,
    aitken_limit,
    fit_exponents,
    log_extrapolate,
    oscillates,
    relative_spread,
    running_log_limits,
    tail_of,
)
from calculus.hessian_calculus import HessianCalculator, richardson, symmetry_defect
from catalog.model_catalog import ModelCatalog
from common.config import Settings
from common.errors import DomainError


@pytest.fixture
def catalog():
    return ModelCatalog(Settings())


def verifier_for(catalog, name):
    return AsymptoticsVerifier(catalog.load_model(name), catalog.settings, catalog)


def corank1_path(**kwargs):
    spec = {'coefficients': (1.0,), 'smooth': (0.3,), 't_min': 1e-8, 't_max': 1e-3, 'count': 20}
    spec.update(kwargs)
    return SingularPath(**spec)


# sequence helpers

def test_aitken_accelerates_geometric_tail():
    values = [1.0 + 0.5 ** k for k in range(1, 12)]
    limit, method = aitken_limit(values)
    assert method == 'aitken'
    assert limit == pytest.approx(1.0, abs=1e-12)


def test_aitken_falls_back_to_last_value():
    assert aitken_limit([2.0, 2.0, 2.0]) == (2.0, 'last-value')
    assert aitken_limit([3.0, 4.0]) == (4.0, 'last-value')


def test_log_extrapolate_removes_inverse_log_corrections():
    x = np.logspace(-3, -8, 20)
    values = -0.25 * (1.0 - 0.7 / np.log(x)) ** -3
    # the raw tail is far from its limit
    assert relative_spread(values[-10:]) > 0.02
    limit, method = log_extrapolate(x, values, power=-1.0 / 3.0)
    assert method == 'log-extrapolated'
    assert limit == pytest.approx(-0.25, rel=1e-10)

    two_factors = (1.0 - 0.5 / np.log(x)) ** -3 * (1.0 + 0.3 / np.log(x)) ** -3
    assert log_extrapolate(x, two_factors, -1.0 / 3.0, degree=2)[0] == pytest.approx(1.0, rel=1e-9)


def test_log_extrapolate_absorbs_analytic_corrections():
    x = np.logspace(-5, -8, 20)
    values = -1.0 + 0.5 * x - 0.25 * x * np.log(x)
    assert log_extrapolate(x, values, power=-1.0 / 3.0)[0] == pytest.approx(-1.0, abs=1e-8)


def test_log_extrapolate_falls_back_to_aitken():
    assert log_extrapolate([1e-3, 1e-4], [1.0, 2.0]) == (2.0, 'last-value')
    assert log_extrapolate([1e-3, 1e-4, 1e-5], [1.0, -1.0, 1.0]) == (1.0, 'last-value')
    assert log_extrapolate([2.0, 1.5, 1.2], [1.0, 1.0, 1.0]) == (1.0, 'last-value')

    x = np.logspace(-3, -8, 12)
    values = -0.25 * (1.0 - 0.7 / np.log(x)) ** -3
    running = running_log_limits(x, values, -1.0 / 3.0, window=5)
    assert running[:2] == list(values[:2])
    assert running[-1] == pytest.approx(-0.25, rel=1e-10)


def test_tail_and_spread():
    values = list(range(1, 31))
    assert tail_of(values, 10) == values[15:]
    assert tail_of(values[:8], 10) == values[:8]
    assert relative_spread([1.0, 1.01, 0.99]) == pytest.approx(0.02)
    assert relative_spread([0.0, 0.0, 0.0]) == math.inf


def test_oscillates():
    assert oscillates([1.0, 2.0, 1.5, 2.5], 0.1)
    assert not oscillates([1.0, 1.1, 1.2, 1.3], 0.01)
    assert not oscillates([1.0, 1.0001, 1.0, 1.0001], 0.01)


def test_fit_exponents_on_exact_data():
    F = np.logspace(-3, -10, 15)
    sum_log = np.log(F)
    sum_loglog = np.log(np.abs(np.log(F)))
    log_det = 2.0 - 1.0 * sum_log - 3.0 * sum_loglog
    (a, b), stderr, c = fit_exponents(sum_log, sum_loglog, log_det)
    assert a == pytest.approx(1.0, abs=1e-8)
    assert b == pytest.approx(3.0, abs=1e-7)
    assert c == pytest.approx(2.0, abs=1e-6)
    assert all(s >= 0.0 for s in stderr)


# paths

def test_path_samples_decrease():
    path = corank1_path()
    t = path.t
    assert t[0] == pytest.approx(1e-3)
    assert t[-1] == pytest.approx(1e-8)
    assert np.all(np.diff(t) < 0)
    assert path.point(1e-4) == [0.3, 1e-4]


def test_path_from_spec(catalog):
    model = catalog.load_model('decoupled-corank2-synthetic')
    path = SingularPath.from_spec({'coefficients': [1, 2], 'smooth': [0.1], 'points': 12}, model)
    assert path.coefficients == (1.0, 2.0)
    assert path.count == 12
    assert path.to_record()['points'] == 12

    with pytest.raises(DomainError):
        SingularPath.from_spec({'coefficients': [1.0]}, model)
    with pytest.raises(DomainError):
        SingularPath.from_spec({'coefficients': [1.0, -1.0]}, model)
    with pytest.raises(DomainError):
        SingularPath.from_spec({'t_min': 1e-2, 't_max': 1e-3}, model)


# scaled determinant

def test_decoupled_corank1_limit(catalog):
    report = verifier_for(catalog, 'decoupled-corank1-synthetic').scaled_det_path(corank1_path())
    assert report.verdict == 'kolmogorov-holds'
    assert report.g_estimate == pytest.approx(-1.0, rel=1e-10)
    assert report.g_spread < 1e-10
    assert report.exponents[0] == pytest.approx(1.0, abs=1e-6)
    assert report.exponents[1] == pytest.approx(3.0, abs=1e-5)
    rows = report.to_rows()
    assert list(rows[0]) == ['t', 'F1', 'F2', 'detHess', 'scaled', 'running_g']
    assert len(rows) == 20


def test_decoupled_corank2_limit(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank2-synthetic')
    path = SingularPath(coefficients=(1.0, 2.0), smooth=(0.1,), t_min=1e-8, t_max=1e-3, count=20)
    report = verifier.scaled_det_path(path)
    assert report.verdict == 'kolmogorov-holds'
    assert report.g_estimate == pytest.approx(1.0, rel=1e-9)
    assert report.exponents[0] == pytest.approx(1.0, abs=1e-6)
    assert report.exponents[1] == pytest.approx(3.0, abs=1e-5)


def test_coupled_limit(catalog):
    verifier = verifier_for(catalog, 'coupled-synthetic')
    report = verifier.scaled_det_path(corank1_path(smooth=(0.0,)))
    assert report.verdict == 'kolmogorov-holds'
    assert report.g_estimate == pytest.approx(-1.0, abs=1e-6)


def test_geometric_saddle_limit(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-saddle')
    report = verifier.scaled_det_path(corank1_path(count=12))
    assert report.g_estimate == pytest.approx(-1.0, rel=1e-3)
    assert report.verdict == 'kolmogorov-holds'


@pytest.mark.parametrize('name, g', [
    ('duffing-outer', -0.25),
    ('pendulum-libration', -0.25),
    ('pendulum-rotation', -1.0),
])
def test_geometric_limit_is_inverse_square_of_psi0(catalog, name, g):
    report = verifier_for(catalog, name).scaled_det_path(corank1_path(count=40))
    assert report.g_method == 'log-extrapolated'
    assert report.g_estimate == pytest.approx(g, rel=catalog.settings.g_tol)
    assert report.verdict == 'kolmogorov-holds'
    # the raw tail still drifts with the 1/ln F correction
    assert report.g_spread < report.tail_spread
    assert report.to_record()['tail_spread'] == report.tail_spread


def test_coupled_saddle_limit(catalog):
    report = verifier_for(catalog, 'coupled-saddle').scaled_det_path(corank1_path(smooth=(0.0,), count=40))
    assert report.verdict == 'kolmogorov-holds'
    assert report.g_estimate == pytest.approx(-1.0, abs=1e-4)
    assert report.g_spread < catalog.settings.g_tol
    assert report.exponents[0] == pytest.approx(1.0, abs=0.01)
    assert report.exponents[1] == pytest.approx(3.0, abs=0.05)


def test_limit_does_not_depend_on_the_path(catalog):
    verifier = verifier_for(catalog, 'coupled-saddle')
    unit = verifier.scaled_det_path(corank1_path(smooth=(0.0,)))
    steep = verifier.scaled_det_path(corank1_path(coefficients=(3.0,), smooth=(0.0,), t_min=3e-9))
    assert unit.verdict == steep.verdict == 'kolmogorov-holds'
    assert steep.g_estimate == pytest.approx(unit.g_estimate, abs=2e-4)


def test_verdict_survives_affine_normalization(catalog):
    spec = catalog.serialize(catalog.load_model('decoupled-corank1-saddle'))
    spec['factors'][0]['action_affine'] = [2.0, 0.5]
    rescaled = AsymptoticsVerifier(catalog.build_model(spec), catalog.settings, catalog)
    plain = verifier_for(catalog, 'decoupled-corank1-saddle')
    a = plain.scaled_det_path(corank1_path())
    b = rescaled.scaled_det_path(corank1_path())
    assert a.verdict == b.verdict == 'kolmogorov-holds'
    # dI/dF scales by a, det d2H/dIdI by 1/a^2
    assert b.g_estimate == pytest.approx(a.g_estimate / 4.0, rel=1e-8)
    assert b.exponents == pytest.approx(a.exponents, abs=1e-6)


def test_exponent_uncertainty_grows_on_short_paths(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    long = verifier.scaled_det_path(corank1_path(t_max=1e-3))
    short = verifier.scaled_det_path(corank1_path(t_max=1e-6))
    assert short.exponent_stderr[0] > long.exponent_stderr[0]
    assert short.exponent_stderr[1] > long.exponent_stderr[1]


def test_failing_conditions_give_violation(catalog):
    report = verifier_for(catalog, 'control-condition4').scaled_det_path(corank1_path())
    assert report.verdict == 'hypothesis-violated'
    assert not report.conditions_passed
    assert report.notes


def test_path_below_floor(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    with pytest.raises(DomainError):
        verifier.scaled_det_path(corank1_path(t_min=1e-14))


# divergence and frequency decay

def test_divergence_crosses_all_thresholds(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.divergence_check(corank1_path(t_min=2e-12, count=30))
    assert record['passed']
    assert record['eventually_monotone']
    assert [c['reached'] for c in record['crossings']] == [True, True, True]

    t = record['crossings'][2]['t']
    assert 2e-12 < t < 1e-9
    assert 1.0 / (t * abs(math.log(t)) ** 3) == pytest.approx(1e6, rel=1e-4)


def test_divergence_short_path_misses_thresholds(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.divergence_check(corank1_path(t_min=1e-6))
    assert record['passed']
    assert [c['reached'] for c in record['crossings']] == [True, False, False]


def test_divergence_failure_is_a_record(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.divergence_check(corank1_path(t_min=1e-14))
    assert record['passed'] is False
    assert 'f_floor' in record['error']


@pytest.mark.parametrize('name', ['coupled-synthetic', 'coupled-saddle'])
def test_divergence_is_eventually_monotone_on_coupled_models(catalog, name):
    record = verifier_for(catalog, name).divergence_check(corank1_path(smooth=(0.0,), count=30))
    assert record['passed']
    assert record['eventually_monotone']
    assert record['crossings'][0]['reached']


def test_corank2_diverges_earlier(catalog):
    corank1 = verifier_for(catalog, 'decoupled-corank1-synthetic').divergence_check(corank1_path(count=30))
    path = SingularPath(coefficients=(1.0, 1.0), smooth=(0.1,), t_min=1e-8, t_max=1e-3, count=30)
    corank2 = verifier_for(catalog, 'decoupled-corank2-synthetic').divergence_check(path)
    for low, high in zip(corank1['crossings'][:2], corank2['crossings'][:2]):
        assert low['reached'] and high['reached']
        assert high['t'] > low['t']


def test_frequency_decay(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.frequency_decay_check(corank1_path())
    assert record['passed']
    assert record['singular'][0]['limit'] == pytest.approx(-1.0, rel=1e-12)
    assert record['center'][0]['expected'] == pytest.approx(0.3)
    assert record['center'][0]['final_error'] < 1e-12


def test_block_asymptotics(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.block_asymptotics(corank1_path())
    assert record['passed']
    sequences = record['sequences']
    assert sequences['dI_dF_over_lnF[1]']['limit'] == pytest.approx(-1.0, rel=1e-12)
    assert sequences['detJ_over_prod_lnF']['limit'] == pytest.approx(-1.0, rel=1e-12)
    assert sequences['Gamma_lnF[1]']['limit'] == pytest.approx(-1.0, rel=1e-12)
    assert sequences['dGamma_dF_FlnF2[1]']['limit'] == pytest.approx(1.0, rel=1e-12)


def test_geometric_frequency_decay_and_blocks(catalog):
    verifier = verifier_for(catalog, 'duffing-outer')
    path = corank1_path(count=40)
    decay = verifier.frequency_decay_check(path)
    assert decay['passed']
    # Gamma ln F -> 1 / psi0 with psi0 = -2
    assert decay['singular'][0]['limit'] == pytest.approx(-0.5, rel=1e-3)

    record = verifier.block_asymptotics(path)
    assert record['passed']
    sequences = record['sequences']
    assert sequences['dI_dF_over_lnF[1]']['limit'] == pytest.approx(-2.0, rel=1e-3)
    assert sequences['detJ_over_prod_lnF']['limit'] == pytest.approx(-2.0, rel=1e-3)
    assert sequences['dGamma_dF_FlnF2[1]']['limit'] == pytest.approx(0.5, rel=1e-3)
    assert {s['method'] for s in sequences.values()} == {'log-extrapolated'}


# sampled verdict

def test_verify_kolmogorov_holds(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    record = verifier.verify_kolmogorov([(0.1, 0.5), (0.0, 0.1)], 100, seed=1)
    assert record['verdict'] == 'kolmogorov-holds'
    assert record['samples'] == 100
    assert record['min_abs_det'] > 0.5
    assert record['failures'] == []
    assert record['witnesses'] == []


def test_verify_kolmogorov_is_deterministic(catalog):
    verifier = verifier_for(catalog, 'coupled-synthetic')
    box = [(-0.1, 0.1), (0.0, 0.05)]
    first = verifier.verify_kolmogorov(box, 100, seed=5)
    second = verifier.verify_kolmogorov(box, 100, seed=5)
    assert first['min_abs_det'] == second['min_abs_det']
    assert first['min_location'] == second['min_location']


def test_verify_kolmogorov_condition4_witness(catalog):
    verifier = verifier_for(catalog, 'control-condition4')
    record = verifier.verify_kolmogorov([(-0.2, 0.2), (0.0, 0.1)], 100)
    assert record['verdict'] == 'hypothesis-violated'
    conditions = [w['condition'] for w in record['witnesses']]
    assert conditions.count(4) == 2
    witness = record['witnesses'][-1]
    assert witness['point'][0] == 0.0
    assert witness['detHess'] == 0.0


def test_verify_kolmogorov_needs_samples(catalog):
    verifier = verifier_for(catalog, 'decoupled-corank1-synthetic')
    with pytest.raises(DomainError):
        verifier.verify_kolmogorov([(0.1, 0.5), (0.0, 0.1)], 50)


# invariants over the whole catalog

CATALOG_MODELS = ModelCatalog(Settings()).list_models()


def catalog_grid(model, size=5):
    """size x size regular points in the last two coordinates; smooth ones avoid 0"""
    singular = np.logspace(-6, -2, size)
    if model.n == 1:
        return [[f] for f in np.logspace(-6, -2, size * size)]
    first = singular if model.k >= 2 else np.linspace(-0.3, 0.5, size)
    return [[0.1] * (model.n - 2) + [a, b] for a in first for b in singular]


def slope_by_differencing(mapper, i, point, r):
    """dI/dF_r from richardson central differences in ln F_r"""
    def action(u):
        shifted = list(point)
        shifted[r] = point[r] * math.exp(u)
        return mapper.singular_action(i, shifted)

    value, _ = richardson(lambda h: (action(h) - action(-h)) / (2.0 * h), 1e-2)
    return value / point[r]


@pytest.mark.parametrize('name', CATALOG_MODELS)
def test_action_hessian_is_symmetric_over_the_catalog(catalog, name):
    calc = HessianCalculator(catalog.load_model(name), catalog.settings)
    for F in catalog_grid(calc.model):
        assert symmetry_defect(calc.action_hessian(F)) < 1e-8


@pytest.mark.parametrize('name', [n for n in CATALOG_MODELS if not n.startswith('control')])
def test_det_of_action_hessian_matches_ratio(catalog, name):
    calc = HessianCalculator(catalog.load_model(name), catalog.settings)
    for F in catalog_grid(calc.model, size=3):
        expected = calc.det_hessian(F).detHess
        assert np.linalg.det(calc.action_hessian(F)) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize('name', CATALOG_MODELS)
def test_period_is_slope_of_loop_action_for_every_factor(catalog, name):
    model = catalog.load_model(name)
    mapper = ActionMapper(model, catalog.settings)
    tol = catalog.settings.cross_tol
    base = [0.1] * model.m + [1e-3] * model.k
    for i, factor in enumerate(model.factors):
        if factor.is_synthetic:
            continue
        r = model.coordinate(i)
        for F_r in np.logspace(-4, -1.5, 6):
            point = list(base)
            point[r] = F_r
            period = mapper.singular_action_slope(i, F_r)
            assert abs(slope_by_differencing(mapper, i, point, r) - period) <= tol * (1.0 + abs(period))


def test_saddle_chart_action_is_the_synthetic_profile(catalog):
    saddle = ActionMapper(catalog.load_model('decoupled-corank1-saddle'), catalog.settings)
    synthetic = ActionMapper(catalog.load_model('decoupled-corank1-synthetic'), catalog.settings)
    for F in np.logspace(-8, 0, 200):
        point = [0.3, F]
        assert saddle.singular_action(0, point) == pytest.approx(synthetic.singular_action(0, point), rel=1e-13)
        assert saddle.singular_action_slope(0, F) == pytest.approx(-math.log(F), rel=1e-13, abs=1e-15)
