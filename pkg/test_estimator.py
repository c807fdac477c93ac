"""
Residual indicators, oscillation, effectivity and local efficiency
"""
import numpy as np
import pytest

from models.broken import BrokenField, l2_project
from models.exceptions import ExactSolutionReached
from models.materials import DGConfig, MaterialModel, SourceTerm
from services.dg_service import DGSolverService
from services.estimator_service import EstimatorService, effectivity, face_neighborhoods
from services.manufactured_service import manufactured_problem


def _estimator(mesh, p=1):
    return EstimatorService(mesh, MaterialModel.build(mesh), p)


def test_exact_quadratic_solution_has_vanishing_indicators(square2):
    problem = manufactured_problem('polynomial')
    materials = MaterialModel.build(square2)
    E_h, _ = DGSolverService(square2, materials, DGConfig(p=2)).solve(problem.source)
    report = EstimatorService(square2, materials, 2).indicators(E_h, problem.source)
    assert report.eta < 1e-6
    assert report.surrogate_divergence is False


def test_indicators_scale_linearly(square2, rng):
    problem = manufactured_problem('trig')
    J, div_J = problem.source.J, problem.source.div_J
    E_h = BrokenField.random(square2, 1, 2, rng)
    doubled = SourceTerm(J=lambda x: 2.0 * J(x), div_J=lambda x: 2.0 * div_J(x))
    estimator = _estimator(square2)
    single = estimator.indicators(E_h, problem.source)
    double = estimator.indicators(E_h * 2.0, doubled)
    np.testing.assert_allclose(double.eta_cells, 2.0 * single.eta_cells, rtol=1e-10)
    np.testing.assert_allclose(double.oscillation, 2.0 * single.oscillation, rtol=1e-10)


def test_nonconformity_indicator_sees_only_jumps(square2, rng):
    estimator = _estimator(square2, 2)
    smooth = l2_project(lambda x: np.column_stack([x[:, 1] * (1 - x[:, 1]), x[:, 0] * (1 - x[:, 0])]),
                        square2, 2)
    assert np.abs(estimator.eta_nc(smooth)).max() < 1e-10
    assert estimator.eta_nc(BrokenField.random(square2, 2, 2, rng)).min() > 0


def test_totals_combine_the_components(square2, rng):
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng),
                                            manufactured_problem('trig').source)
    totals = report.totals
    assert totals['eta'] ** 2 == pytest.approx(totals['eta_div'] ** 2 + totals['eta_curl'] ** 2
                                               + totals['eta_nc'] ** 2)
    assert report.eta_dc <= report.eta


def test_frame_columns(square2, rng):
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng),
                                            manufactured_problem('trig').source,
                                            err_sharp=np.ones(square2.num_cells))
    frame = report.to_frame()
    assert list(frame.columns) == ['cell', 'eta_div', 'eta_curl', 'eta_nc', 'eta', 'err_sharp']
    assert len(frame) == square2.num_cells


def test_surrogate_divergence_is_flagged(square2, rng):
    source = SourceTerm(J=manufactured_problem('trig').source.J)
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng), source)
    assert report.surrogate_divergence is True
    assert np.all(np.isfinite(report.eta_div))


def test_effectivity(square2, rng):
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng),
                                            manufactured_problem('trig').source,
                                            err_sharp=np.full(square2.num_cells, 0.5))
    assert effectivity(report) == pytest.approx(report.eta / np.sqrt(square2.num_cells * 0.25))


def test_effectivity_of_an_exact_solution_raises(square2, rng):
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng),
                                            manufactured_problem('trig').source,
                                            err_sharp=np.zeros(square2.num_cells))
    assert report.is_exact
    with pytest.raises(ExactSolutionReached):
        effectivity(report)


def test_effectivity_needs_an_error(square2, rng):
    report = _estimator(square2).indicators(BrokenField.random(square2, 1, 2, rng),
                                            manufactured_problem('trig').source)
    with pytest.raises(ValueError):
        effectivity(report)


def test_face_neighborhoods(square2):
    for k, cells in enumerate(face_neighborhoods(square2)):
        assert k in cells
        assert 2 <= len(cells) <= 4


def test_local_efficiency_ratios(square2, rng):
    estimator = _estimator(square2)
    report = estimator.indicators(BrokenField.random(square2, 1, 2, rng), manufactured_problem('trig').source)
    ratios = estimator.local_efficiency_ratios(report, np.ones(square2.num_cells))
    assert ratios.shape == (square2.num_cells,)
    assert np.all(ratios > 0)
