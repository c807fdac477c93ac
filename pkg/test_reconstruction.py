"""
Patchwise H0(curl) reconstruction
"""
import numpy as np
import pytest

from models.broken import BrokenField, curl_h, l2_project
from models.exceptions import FieldFormatError
from models.mesh import build_mesh, uniform_square_mesh
from services.reconstruction_service import (
    ReconstructionService,
    format_conforming,
    nedelec_generators,
    parse_conforming,
    patch_rhs,
    patch_spaces,
    reconstruct,
    solve_patch_poisson,
    theorem_ratios,
)


def _bubble(x):
    return np.column_stack([x[:, 1] * (1 - x[:, 1]), x[:, 0] * (1 - x[:, 0])])


def _interior_vertex(mesh):
    return int(np.flatnonzero(~mesh.boundary_vertex_mask)[0])


@pytest.mark.parametrize('q', [1, 2, 3])
def test_local_edge_element_dimension(two_cell_mesh, q):
    generators = nedelec_generators(two_cell_mesh, 0, q)
    assert np.linalg.matrix_rank(generators) == q * q + 2 * q


def test_lowest_order_patch_spaces(square2):
    vertex = _interior_vertex(square2)
    spaces = patch_spaces(square2, vertex, 1)
    assert spaces.nodal_dimension == 1
    assert spaces.nedelec_dimension == len(spaces.cells)


@pytest.mark.parametrize('mesh_size, p', [(1, 0), (1, 1), (1, 2), (2, 1)])
def test_reconstruction_is_conforming(rng, mesh_size, p):
    mesh = uniform_square_mesh(mesh_size)
    E_c = reconstruct(BrokenField.random(mesh, p, 2, rng))
    assert E_c.q == p + 2
    defect = E_c.conformity_defect()
    assert defect['interior_jump'] < 1e-9
    assert defect['boundary_trace'] < 1e-9


def test_zero_field_reconstructs_to_zero(square2):
    assert reconstruct(BrokenField.zeros(square2, 1)).field.norm() == 0.0


def test_conforming_input_is_reproduced(square2):
    E_h = l2_project(_bubble, square2, 2)
    service = ReconstructionService(square2)
    E_c = service.reconstruct(E_h)
    assert (E_c.field - E_h).norm() < 1e-8
    assert curl_h(E_c.field - E_h).norm() < 1e-8
    ratios = service.theorem_ratios(E_h, E_c)
    assert ratios['conforming_input'] is True
    assert ratios['ratio_curl'] is None


def test_theorem_ratios_of_broken_input(square2, rng):
    E_h = BrokenField.random(square2, 1, 2, rng)
    E_c = reconstruct(E_h)
    ratios = theorem_ratios(E_h, E_c)
    assert ratios['conforming_input'] is False
    for key in ('ratio_curl', 'ratio_L2', 'ratio_L2_poincare'):
        assert np.isfinite(ratios[key]) and ratios[key] > 0


def test_patch_diagnostics(square2, rng):
    E_h = BrokenField.random(square2, 1, 2, rng)
    service = ReconstructionService(square2)
    _, solutions = service.reconstruct_with_patches(E_h)
    assert [s.vertex for s in solutions] == list(range(square2.num_vertices))
    for solution in solutions:
        assert solution.diagnostics['divergence_residual'] < 1e-8
        assert solution.diagnostics['poisson_residual'] < 1e-8
        local = service.local_ratios(E_h, solution)
        assert local['local_curl_ratio'] is not None and local['local_curl_ratio'] >= 0


def test_reconstruction_is_local(square2):
    coefficients = np.zeros((square2.num_cells, 2, 3))
    coefficients[0, 0, 0] = 1.0
    E_c = reconstruct(BrokenField(square2, 1, coefficients))
    touched = np.isin(square2.cells, square2.cells[0]).any(axis=1)
    assert np.all(E_c.field.coefficients[~touched] == 0.0)
    assert E_c.field.norm() > 0


def test_workers_do_not_change_the_result(square2, rng):
    E_h = BrokenField.random(square2, 1, 2, rng)
    serial = ReconstructionService(square2, workers=1).reconstruct(E_h)
    threaded = ReconstructionService(square2, workers=3).reconstruct(E_h)
    np.testing.assert_allclose(serial.field.coefficients, threaded.field.coefficients, atol=1e-12)


def test_degree_must_exceed_the_field_degree(square2, rng):
    with pytest.raises(ValueError):
        ReconstructionService(square2, q=2).reconstruct(BrokenField.random(square2, 2, 2, rng))


def test_helmholtz_splitting(square2, rng):
    service = ReconstructionService(square2)
    check = service.helmholtz_check(_interior_vertex(square2), BrokenField.random(square2, 3, 2, rng), 3)
    scale = check['gradient_norm'] ** 2 + check['remainder_norm'] ** 2
    assert check['pythagoras_defect'] < 1e-10 * scale
    assert check['projection_residual'] < 1e-8
    assert check['gradient_norm'] > 0


def test_conforming_text_format(two_cell_mesh, rng):
    E_c = reconstruct(BrokenField.random(two_cell_mesh, 1, 2, rng))
    parsed = parse_conforming(format_conforming(E_c), two_cell_mesh)
    assert parsed.q == E_c.q
    np.testing.assert_array_equal(parsed.field.coefficients, E_c.field.coefficients)
    with pytest.raises(FieldFormatError):
        parse_conforming("field 1 2 2\n", two_cell_mesh)


def test_evaluate_returns_values_and_curl(two_cell_mesh, rng):
    E_c = reconstruct(BrokenField.random(two_cell_mesh, 1, 2, rng))
    values, curls = E_c.evaluate(np.array([[0.2, 0.3], [0.7, 0.1]]))
    assert values.shape == (2, 2)
    assert curls.shape == (2,)


def test_patch_ratios_match_the_single_patch_methods(square2, rng):
    E_h = BrokenField.random(square2, 1, 2, rng)
    service = ReconstructionService(square2)
    _, solutions = service.reconstruct_with_patches(E_h)
    rows = service.patch_ratios(E_h, solutions)
    assert [row['vertex'] for row in rows] == list(range(square2.num_vertices))
    for row, solution in zip(rows, solutions):
        local = service.local_ratios(E_h, solution)
        assert row['local_curl_ratio'] == pytest.approx(local['local_curl_ratio'], rel=1e-12)
        assert row['local_l2_ratio'] == pytest.approx(local['local_l2_ratio'], rel=1e-12)
        assert row['poincare_ratio'] == pytest.approx(service.poincare_ratio(E_h, solution), rel=1e-12)


def test_poincare_ratio_is_scale_invariant(square2, rng):
    doubled = build_mesh(2.0 * square2.vertices, square2.cells)
    coefficients = rng.standard_normal((square2.num_cells, 2, 3))
    ratios = []
    for mesh in (square2, doubled):
        E_h = BrokenField(mesh, 1, coefficients.copy())
        service = ReconstructionService(mesh)
        _, solutions = service.reconstruct_with_patches(E_h)
        ratios.append([row['poincare_ratio'] for row in service.patch_ratios(E_h, solutions)])
    original, scaled = ratios
    for a, b in zip(original, scaled):
        assert (a is None) == (b is None)
        if a is not None:
            assert b == pytest.approx(a, rel=1e-8)


def test_patch_poisson_matches_dense_least_squares(square2, rng):
    spaces = patch_spaces(square2, _interior_vertex(square2), 3)
    weighted, _ = patch_rhs(BrokenField.random(square2, 1, 2, rng), spaces)
    theta, residual = solve_patch_poisson(spaces, weighted)
    # grad theta is the L2 projection of psi_a E_h onto grad S_q,0
    coordinates = np.linalg.lstsq(spaces.nodal_gradients, weighted.reshape(-1), rcond=None)[0]
    scale = np.abs(weighted).max()
    np.testing.assert_allclose(theta, spaces.nodal @ coordinates, atol=1e-9 * scale)
    assert residual < 1e-8 * max(scale, 1.0)
    zero, _ = solve_patch_poisson(spaces, np.zeros_like(weighted))
    assert np.all(zero == 0.0)


def test_patch_solution_ignores_cells_outside_the_patch(square2, rng):
    vertex = _interior_vertex(square2)
    service = ReconstructionService(square2)
    E_h = BrokenField.random(square2, 1, 2, rng)
    outside = np.setdiff1d(np.arange(square2.num_cells), patch_spaces(square2, vertex, 3).cells)
    coefficients = E_h.coefficients.copy()
    coefficients[outside] += rng.standard_normal(coefficients[outside].shape)
    first = service.solve_patch(E_h, vertex)
    second = service.solve_patch(BrokenField(square2, 1, coefficients), vertex)
    np.testing.assert_array_equal(first.E, second.E)
    np.testing.assert_array_equal(first.theta, second.theta)
