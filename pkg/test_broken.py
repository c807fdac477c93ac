"""
Broken polynomial fields: projection, broken derivatives, traces and the integration-by-parts identities
"""
import numpy as np
import pytest

from models.broken import (
    BrokenField,
    avg_g,
    cell_quadrature,
    curl_h,
    curl_jumps,
    div_h,
    divergence_theorem_residual,
    format_field,
    integration_by_parts_residual,
    jump_c,
    jump_d,
    l2_project,
    magic_identity_residual,
    multiply_by_hat,
    parse_field,
    rot_scalar,
    scalar_jump_of_curl,
    tangential_jumps,
    tangential_trace,
    trace_inequality_ratio,
)
from models.exceptions import EdgeNotOnCellError, FieldFormatError
from models.mesh import build_mesh, vertex_patch


def _interior_points(mesh, rng, per_cell=3):
    ref = rng.random((per_cell, 2)) * 0.45
    points = np.vstack([mesh.to_physical(k, ref) for k in range(mesh.num_cells)])
    cells = np.repeat(np.arange(mesh.num_cells), per_cell)
    return points, cells


def test_basis_is_orthonormal(square2, rng):
    v = BrokenField.random(square2, 3, 2, rng)
    w = BrokenField.random(square2, 3, 2, rng)
    order = 8
    _, weights = cell_quadrature(square2, order)
    integral = np.einsum('kq,kqc,kqc->', weights, v.quadrature_values(order), w.quadrature_values(order))
    assert integral == pytest.approx(v.inner(w), abs=1e-11)


def test_curl_of_rotation_field(square2, rng):
    v = l2_project(lambda x: np.column_stack([-x[:, 1], x[:, 0]]), square2, 1)
    points, cells = _interior_points(square2, rng)
    np.testing.assert_allclose(curl_h(v)(points, cells), 2.0, atol=1e-12)
    np.testing.assert_allclose(div_h(v)(points, cells), 0.0, atol=1e-12)


def test_rot_of_scalar(square2, rng):
    phi = l2_project(lambda x: (x[:, 0] * x[:, 1])[:, None], square2, 2)
    points, cells = _interior_points(square2, rng)
    expected = np.column_stack([points[:, 0], -points[:, 1]])
    np.testing.assert_allclose(rot_scalar(phi)(points, cells), expected, atol=1e-12)


def test_projection_is_exact_on_polynomials(square2, rng):
    def f(x):
        return np.column_stack([x[:, 0] ** 2, x[:, 0] * x[:, 1] - 3.0])
    v = l2_project(f, square2, 2)
    points, cells = _interior_points(square2, rng)
    np.testing.assert_allclose(v(points, cells), f(points), atol=1e-12)


def test_truncation_is_the_lower_degree_projection(square2):
    def f(x):
        return np.column_stack([np.sin(x[:, 0]), np.cos(x[:, 1])])
    high = l2_project(f, square2, 3, order=10)
    np.testing.assert_allclose(high.with_degree(1).coefficients, l2_project(f, square2, 1, order=10).coefficients,
                               atol=1e-13)


def test_continuous_field_has_no_interior_jumps(square2):
    v = l2_project(lambda x: np.column_stack([1.0 + x[:, 0], 2.0 * x[:, 1]]), square2, 1)
    jumps = tangential_jumps(v)
    np.testing.assert_allclose(jumps[square2.interior_edges], 0.0, atol=1e-12)
    assert np.abs(jumps[square2.boundary_edges]).max() > 0.1


@pytest.mark.parametrize('degree', [1, 2, 3])
def test_integration_by_parts(square2, rng, degree):
    v = BrokenField.random(square2, degree, 2, rng)
    phi = BrokenField.random(square2, degree, 1, rng)
    assert integration_by_parts_residual(v, phi) < 1e-10
    assert magic_identity_residual(v, phi) < 1e-10


def test_flipped_orientation_breaks_integration_by_parts(square2, rng):
    flipped = build_mesh(square2.vertices, square2.cells, flip_orientation=True)
    v = BrokenField.random(flipped, 1, 2, rng)
    phi = BrokenField.random(flipped, 1, 1, rng)
    assert integration_by_parts_residual(v, phi) > 1e-3


def test_divergence_theorem(square2, rng):
    assert divergence_theorem_residual(square2, rng, samples=10) < 1e-13


def test_hat_products_sum_to_the_field(square2, rng):
    v = BrokenField.random(square2, 2, 2, rng)
    total = BrokenField.zeros(square2, 3)
    for a in range(square2.num_vertices):
        total = total + multiply_by_hat(v, vertex_patch(square2, a))
    np.testing.assert_allclose(total.coefficients, v.with_degree(3).coefficients, atol=1e-11)


def test_hat_product_vanishes_off_the_patch(square2, rng):
    v = BrokenField.random(square2, 1, 2, rng)
    patch = vertex_patch(square2, 0)
    product = multiply_by_hat(v, patch)
    outside = np.setdiff1d(np.arange(square2.num_cells), patch.cells)
    assert np.all(product.coefficients[outside] == 0.0)


def test_trace_inequality_supremum_dominates_samples(square2, rng):
    sampled = trace_inequality_ratio(square2, 2, samples=50, rng=rng)
    assert sampled <= trace_inequality_ratio(square2, 2, exact=True) * (1.0 + 1e-12)


def test_tangential_trace_rejects_foreign_edges(square2, rng):
    v = BrokenField.random(square2, 1, 2, rng)
    foreign = int(np.setdiff1d(np.arange(square2.num_edges), square2.cell_edge_index[0])[0])
    with pytest.raises(EdgeNotOnCellError):
        tangential_trace(v, 0, foreign)


def test_field_text_format(square2, rng):
    v = BrokenField.random(square2, 2, 2, rng)
    parsed = parse_field(format_field(v), square2)
    np.testing.assert_array_equal(parsed.coefficients, v.coefficients)


def test_field_format_errors(square2, two_cell_mesh, rng):
    text = format_field(BrokenField.random(square2, 1, 2, rng))
    with pytest.raises(FieldFormatError):
        parse_field(text, two_cell_mesh)
    broken_row = text.splitlines()
    broken_row[3] = broken_row[3] + " 1.0"
    with pytest.raises(FieldFormatError) as error:
        parse_field("\n".join(broken_row), square2)
    assert error.value.line_number == 4


def test_edge_jumps_of_a_one_sided_constant(two_cell_mesh):
    mesh = two_cell_mesh
    e = int(mesh.interior_edges[0])
    constant = l2_project(lambda x: np.tile([1.0, 0.0], (len(x), 1)), mesh, 0).coefficients.copy()
    constant[mesh.edges[e].right_cell] = 0.0
    v = BrokenField(mesh, 0, constant)
    np.testing.assert_allclose(jump_c(v, e), mesh.edge_tangents[e][0], atol=1e-13)
    np.testing.assert_allclose(jump_d(v, e), mesh.edge_normals[e][0], atol=1e-13)
    np.testing.assert_allclose(avg_g(v, e), np.tile([0.5, 0.0], (len(jump_c(v, e)), 1)), atol=1e-13)


def test_boundary_edges_use_the_single_trace(two_cell_mesh):
    mesh = two_cell_mesh
    e = int(mesh.boundary_edges[0])
    t = mesh.edge_tangents[e]
    v = l2_project(lambda x: np.tile(t, (len(x), 1)), mesh, 1)
    np.testing.assert_allclose(jump_c(v, e), 1.0, atol=1e-13)
    np.testing.assert_allclose(avg_g(v, e), np.tile(t, (len(avg_g(v, e)), 1)), atol=1e-13)


def test_scalar_jump_of_curl(two_cell_mesh):
    mesh = two_cell_mesh
    e = int(mesh.interior_edges[0])
    rotation = l2_project(lambda x: np.column_stack([-x[:, 1], x[:, 0]]), mesh, 1).coefficients.copy()
    rotation[mesh.edges[e].right_cell] = 0.0
    v = BrokenField(mesh, 1, rotation)
    np.testing.assert_allclose(scalar_jump_of_curl(v, e), 2.0, atol=1e-12)
    np.testing.assert_allclose(curl_jumps(v)[e], scalar_jump_of_curl(v, e), atol=1e-13)
    boundary = int(mesh.boundary_edges[0])
    np.testing.assert_array_equal(scalar_jump_of_curl(v, boundary), 0.0)
