"""
Marking, rate helpers and the study service
"""
import numpy as np
import pytest

from config.run_config import RunConfig
from models.exceptions import ConfigError
from models.mesh import l_shape_mesh, uniform_square_mesh
from models.refinement import uniform_refine
from services.study_service import (
    StudyService,
    convergence_rates,
    dorfler_mark,
    fit_growth_exponent,
    growth_exponents,
)


def test_full_fraction_marks_every_cell():
    np.testing.assert_array_equal(dorfler_mark(np.array([0.1, 3.0, 0.0]), 1.0), [0, 1, 2])


def test_smallest_bulk_set():
    eta = np.array([1.0, 2.0, 3.0, 4.0])
    # squares 1, 4, 9, 16: 16 + 9 >= 0.81 * 30 > 16
    np.testing.assert_array_equal(dorfler_mark(eta, 0.9), [2, 3])
    np.testing.assert_array_equal(dorfler_mark(np.array([3.0, 1.0, 2.0]), 0.5), [0])


def test_ties_go_to_the_lowest_index():
    np.testing.assert_array_equal(dorfler_mark(np.ones(4), 0.5), [0])


def test_zero_indicators_mark_nothing():
    assert len(dorfler_mark(np.zeros(5), 0.5)) == 0


@pytest.mark.parametrize('theta', [0.0, -0.1, 1.5])
def test_invalid_fraction(theta):
    with pytest.raises(ConfigError):
        dorfler_mark(np.ones(3), theta)


def test_convergence_rates():
    rates = convergence_rates([1.0, 0.25, 0.0625])
    assert np.isnan(rates[0])
    np.testing.assert_allclose(rates[1:], [2.0, 2.0])


def test_growth_exponent():
    assert fit_growth_exponent([1, 2, 4], [1.0, 4.0, 16.0]) == pytest.approx(2.0)
    assert np.isnan(fit_growth_exponent([1, 2], [1.0, np.nan]))


def test_exact_problem_needs_constant_coefficients():
    with pytest.raises(ConfigError):
        StudyService(RunConfig(problem='trig', eps='1 | 0:0.5,0:1=2'))


def test_solve_row():
    study = StudyService(RunConfig(problem='trig', p=1))
    result = study.solve(uniform_square_mesh(2), 1)
    for key in ('cells', 'h_max', 'ndof', 'eta', 'err_sharp', 'effectivity', 'max_efficiency'):
        assert key in result.row
    assert result.row['cells'] == 8
    assert result.row['effectivity'] > 0
    assert result.row['exact'] is False


def test_error_splitting():
    study = StudyService(RunConfig(problem='trig', p=1))
    result = study.reconstruct(study.solve(uniform_square_mesh(2), 1))
    assert result.row['q'] == 3
    assert result.row['e_c'] > 0 and result.row['e_nc'] > 0
    assert np.isfinite(result.row['residual_ratio'])


def test_study_h():
    frame = StudyService(RunConfig(problem='trig', p=1, square=1, levels=2)).study_h()
    assert list(frame['level']) == [0, 1]
    assert list(frame['cells']) == [2, 8]
    assert np.isnan(frame['rate_err'].iloc[0]) and np.isfinite(frame['rate_err'].iloc[1])


def test_study_p():
    frame = StudyService(RunConfig(problem='trig', square=1, p_max=2)).study_p()
    assert list(frame['p']) == [1, 2]
    assert list(frame['q']) == [3, 4]
    assert frame['ndof'].iloc[1] > frame['ndof'].iloc[0]
    assert set(growth_exponents(frame)) >= {'ratio_curl', 'effectivity'}


def test_study_p_keeps_the_degree_increment():
    frame = StudyService(RunConfig(problem='trig', square=1, p=1, q=2, p_max=2)).study_p()
    assert list(frame['q']) == [2, 3]


def test_adapt_on_the_l_shape():
    config = RunConfig(problem='lshape', lshape=1, levels=2, theta=0.5)
    frame = StudyService(config).adapt()
    assert list(frame['iter']) == [0, 1]
    assert frame['cells'].iloc[1] > frame['cells'].iloc[0] == l_shape_mesh(1).num_cells
    assert 'corner_marked' in frame
    assert (frame['marked'] >= 1).all()


@pytest.mark.parametrize('p', [1, 2])
def test_h_rates_of_a_smooth_solution(p):
    frame = StudyService(RunConfig(problem='trig', p=p, square=2, levels=4)).study_h()
    assert abs(frame['rate_err'].iloc[-1] - p) < 0.2
    assert abs(frame['rate_eta'].iloc[-1] - frame['rate_err'].iloc[-1]) < 0.2
    effectivity = frame['effectivity']
    assert (effectivity.max() - effectivity.min()) / effectivity.max() < 0.5


def test_local_efficiency_saturates_under_refinement():
    study = StudyService(RunConfig(problem='trig', p=1))
    mesh = uniform_square_mesh(4)
    values = []
    for level in range(3):
        if level:
            mesh = uniform_refine(mesh)
        values.append(study.solve(mesh, 1).row['max_efficiency'])
    growth = np.array(values[1:]) / np.array(values[:-1])
    assert growth[1] < growth[0]
    assert max(values) < 10.0


def test_adapt_refines_towards_the_reentrant_corner():
    frame = StudyService(RunConfig(problem='lshape', lshape=1, levels=6, theta=0.5)).adapt()
    assert len(frame) == 6
    assert frame['corner_marked'].mean() >= 0.8
    assert (frame['cells'].diff().iloc[1:] > 0).all()
