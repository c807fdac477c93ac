"""
Mesh construction, patches, refinement and the plain-text mesh format
"""
import numpy as np
import pytest

from models.exceptions import InvertedCellError, MeshError, MeshFormatError, NonConformingMeshError
from models.mesh import build_mesh, format_mesh, l_shape_mesh, parse_mesh, uniform_square_mesh, vertex_patch
from models.refinement import refine, uniform_refine


def test_two_cell_counts(two_cell_mesh):
    mesh = two_cell_mesh
    assert mesh.num_vertices == 4
    assert mesh.num_cells == 2
    assert mesh.num_edges == 5
    assert len(mesh.interior_edges) == 1
    assert mesh.euler_characteristic() == 1


@pytest.mark.parametrize('n', [1, 2, 3, 5])
def test_square_edge_counts(n):
    mesh = uniform_square_mesh(n)
    assert mesh.num_cells == 2 * n * n
    assert len(mesh.interior_edges) == 3 * n * n - 2 * n
    assert len(mesh.boundary_edges) == 4 * n
    assert mesh.areas.sum() == pytest.approx(1.0)


def test_h_max(square2):
    assert square2.h_max == pytest.approx(np.sqrt(2.0) / 2.0)


def test_l_shape():
    mesh = l_shape_mesh(1)
    assert mesh.num_cells == 6
    assert mesh.num_vertices == 8
    assert mesh.areas.sum() == pytest.approx(3.0)


def test_inverted_cell_is_rejected():
    with pytest.raises(InvertedCellError):
        build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])


def test_hanging_vertex_is_rejected():
    points = [(0, 0), (1, 0), (0, 1), (1, 1), (0.5, 0.5)]
    with pytest.raises(NonConformingMeshError):
        build_mesh(points, [(0, 1, 2), (1, 3, 4), (4, 3, 2)])


def test_unused_vertex_is_rejected():
    with pytest.raises(MeshError):
        build_mesh([(0, 0), (1, 0), (0, 1), (2, 2)], [(0, 1, 2)])


def test_normals_point_out_of_the_left_cell(square2):
    midpoints = square2.vertices[square2.edge_vertices].mean(axis=1)
    for e, edge in enumerate(square2.edges):
        outward = midpoints[e] - square2.centroids[edge.left_cell]
        assert outward @ edge.normal > 0
        assert edge.normal @ edge.tangent == pytest.approx(0.0)
        assert edge.left_cell < (edge.right_cell if edge.right_cell is not None else np.inf)


def test_incidence_signs(square2):
    for k in range(square2.num_cells):
        for e, sign in square2.cell_edges(k):
            assert sign == (1 if square2.edge_cells[e, 0] == k else -1)


def test_every_cell_lies_in_three_patches(square2):
    counts = np.zeros(square2.num_cells, dtype=int)
    for a in range(square2.num_vertices):
        counts[vertex_patch(square2, a).cells] += 1
    np.testing.assert_array_equal(counts, 3)


def test_patch_rim(square2):
    interior = int(np.flatnonzero(~square2.boundary_vertex_mask)[0])
    patch = vertex_patch(square2, interior)
    assert not patch.is_boundary_vertex
    assert len(patch.rim_edges) == len(patch.cells)
    for a in np.flatnonzero(square2.boundary_vertex_mask):
        assert len(vertex_patch(square2, int(a)).rim_edges) == 0


def test_hat_functions_sum_to_one(square2, rng):
    points = rng.random((40, 2))
    total = sum(square2.hat(a, points) for a in range(square2.num_vertices))
    np.testing.assert_allclose(total, 1.0, atol=1e-13)


def test_refine_without_marks_returns_the_mesh(square2):
    assert refine(square2, []) is square2


def test_refine_is_conforming(square2):
    refined = refine(square2, [0])
    assert refined.num_cells > square2.num_cells
    assert refined.areas.sum() == pytest.approx(1.0)
    assert len(refined.parent_cells) == refined.num_cells
    assert 0 in set(refined.parent_cells)


def test_uniform_refine_halves_h(two_cell_mesh):
    refined = uniform_refine(two_cell_mesh)
    assert refined.num_cells == 4 * two_cell_mesh.num_cells
    assert refined.h_max == pytest.approx(two_cell_mesh.h_max / 2.0)
    assert refined.areas.sum() == pytest.approx(1.0)


def test_repeated_refinement_keeps_shape_regularity(two_cell_mesh):
    mesh = two_cell_mesh
    for _ in range(3):
        mesh = uniform_refine(mesh)
    assert mesh.kappa == pytest.approx(two_cell_mesh.kappa)


def test_format_and_parse(square2):
    parsed = parse_mesh(format_mesh(square2))
    np.testing.assert_array_equal(parsed.cells, square2.cells)
    np.testing.assert_allclose(parsed.vertices, square2.vertices)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(MeshFormatError) as error:
        parse_mesh("vertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1\n")
    assert error.value.line_number == 6
    with pytest.raises(MeshFormatError) as error:
        parse_mesh("vertices x\n")
    assert error.value.line_number == 1
