"""
Conforming 2D triangular meshes: oriented edges, cell/edge adjacency, vertex patches, hat functions
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from models.exceptions import (
    DanglingVertexError,
    InvertedCellError,
    MeshError,
    MeshFormatError,
    NonConformingMeshError,
)
from models.quadrature import segment_rule

logger = logging.getLogger(__name__)

GEOMETRY_TOLERANCE = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Edge:
    index: int
    endpoints: Tuple[int, int]
    normal: np.ndarray
    tangent: np.ndarray
    left_cell: int
    right_cell: Optional[int]
    length: float

    @property
    def is_boundary(self) -> bool:
        return self.right_cell is None

    @property
    def cells(self) -> Tuple[int, ...]:
        return (self.left_cell,) if self.right_cell is None else (self.left_cell, self.right_cell)


class Mesh:
    """
    Immutable triangulation. Local edge j of a cell is the edge opposite local vertex j.
    Build through build_mesh(); refine() returns a new Mesh.
    """

    def __init__(self, vertices: np.ndarray, cells: np.ndarray, edge_vertices: np.ndarray,
                 cell_edges: np.ndarray, edge_cells: np.ndarray,
                 refinement_edges: np.ndarray, parent_cells: Optional[np.ndarray] = None,
                 flip_orientation: bool = False):
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        self.cells = _readonly(np.asarray(cells, dtype=np.int64))
        self.edge_vertices = _readonly(edge_vertices)
        self.cell_edge_index = _readonly(cell_edges)
        self.edge_cells = _readonly(edge_cells)
        self.refinement_edges = _readonly(np.asarray(refinement_edges, dtype=np.int64))
        self.parent_cells = None if parent_cells is None else _readonly(np.asarray(parent_cells))
        self.flip_orientation = flip_orientation

        p0 = self.vertices[self.cells[:, 0]]
        p1 = self.vertices[self.cells[:, 1]]
        p2 = self.vertices[self.cells[:, 2]]
        jac = np.stack([p1 - p0, p2 - p0], axis=-1)          # columns are the mapped reference edges
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        self.jacobians = _readonly(jac)
        self.determinants = _readonly(det)
        self.inverse_jacobians = _readonly(inv)
        self.areas = _readonly(0.5 * det)
        self.centroids = _readonly((p0 + p1 + p2) / 3.0)

        side = np.stack([np.linalg.norm(p2 - p1, axis=1),
                         np.linalg.norm(p0 - p2, axis=1),
                         np.linalg.norm(p1 - p0, axis=1)], axis=1)
        self.cell_diameters = _readonly(side.max(axis=1))
        self.inradii = _readonly(2.0 * self.areas / side.sum(axis=1))
        self.h_max = float(self.cell_diameters.max())
        self.kappa = float((self.cell_diameters / self.inradii).max())

        self.edges: List[Edge] = self._orient_edges()
        self.edge_lengths = _readonly(np.array([e.length for e in self.edges]))
        self.edge_normals = _readonly(np.array([e.normal for e in self.edges]))
        self.edge_tangents = _readonly(np.array([e.tangent for e in self.edges]))
        signs = np.where(self.edge_cells[self.cell_edge_index, 0] == np.arange(self.num_cells)[:, None], 1, -1)
        self.cell_signs = _readonly(signs.astype(np.int64))
        self.boundary_edge_mask = _readonly(self.edge_cells[:, 1] < 0)

        patch = [[] for _ in range(self.num_vertices)]
        for k, cell in enumerate(self.cells):
            for v in cell:
                patch[v].append(k)
        self.patch_index = [np.array(sorted(c), dtype=np.int64) for c in patch]
        boundary_vertices = np.zeros(self.num_vertices, dtype=bool)
        boundary_vertices[self.edge_vertices[self.boundary_edge_mask].ravel()] = True
        self.boundary_vertex_mask = _readonly(boundary_vertices)

    # -- sizes ---------------------------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edge_mask)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_edge_mask)

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_cells

    def cell_edges(self, cell: int) -> List[Tuple[int, int]]:
        """(edge index, incidence sign iota = n_K . n_F) for the three local edges"""
        return [(int(e), int(s)) for e, s in zip(self.cell_edge_index[cell], self.cell_signs[cell])]

    def local_edge(self, cell: int, edge: int) -> int:
        hits = np.flatnonzero(self.cell_edge_index[cell] == edge)
        return int(hits[0]) if len(hits) else -1

    # -- orientation ---------------------------------------------------------------------
    def _orient_edges(self) -> List[Edge]:
        edges = []
        for e, (a, b) in enumerate(self.edge_vertices):
            left, right = int(self.edge_cells[e, 0]), int(self.edge_cells[e, 1])
            j = int(np.flatnonzero(self.cell_edge_index[left] == e)[0])
            start = self.vertices[self.cells[left, (j + 1) % 3]]
            end = self.vertices[self.cells[left, (j + 2) % 3]]
            d = end - start
            length = float(np.hypot(d[0], d[1]))
            normal = np.array([d[1], -d[0]]) / length   # outward normal of the left cell
            if self.flip_orientation:
                normal = -normal
            tangent = np.array([-normal[1], normal[0]])
            edges.append(Edge(index=e, endpoints=(int(a), int(b)), normal=_readonly(normal),
                              tangent=_readonly(tangent), left_cell=left,
                              right_cell=None if right < 0 else right, length=length))
        return edges

    # -- geometry ------------------------------------------------------------------------
    def to_physical(self, cell: int, ref_points: np.ndarray) -> np.ndarray:
        ref_points = np.atleast_2d(ref_points)
        return self.vertices[self.cells[cell, 0]] + ref_points @ self.jacobians[cell].T

    def to_reference(self, cell: int, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return (points - self.vertices[self.cells[cell, 0]]) @ self.inverse_jacobians[cell].T

    def edge_quadrature(self, edge: int, npoints: int) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre points (from the lower to the higher vertex index) and physical weights"""
        rule = segment_rule(npoints)
        a, b = self.edge_vertices[edge]
        pa, pb = self.vertices[a], self.vertices[b]
        points = pa + np.outer(rule.points, pb - pa)
        return points, rule.weights * self.edge_lengths[edge]

    def barycentric_coordinates(self, points: np.ndarray) -> np.ndarray:
        """(ncells, npoints, 3) barycentric coordinates of every point in every cell"""
        points = np.atleast_2d(points)
        rel = points[None, :, :] - self.vertices[self.cells[:, 0]][:, None, :]
        ref = np.einsum('kij,knj->kni', self.inverse_jacobians, rel)
        return np.concatenate([(1.0 - ref.sum(axis=2))[..., None], ref], axis=2)

    def locate(self, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Index of a cell containing each point (points outside the mesh get the nearest cell)"""
        points = np.atleast_2d(points)
        found = np.empty(len(points), dtype=np.int64)
        for start in range(0, len(points), chunk):
            lam = self.barycentric_coordinates(points[start:start + chunk])
            found[start:start + chunk] = np.argmax(lam.min(axis=2), axis=0)
        return found

    def hat(self, vertex: int, points: np.ndarray) -> np.ndarray:
        """Continuous piecewise-affine hat function of a vertex evaluated at physical points"""
        points = np.atleast_2d(points)
        cells = self.locate(points)
        values = np.zeros(len(points))
        for i, (k, x) in enumerate(zip(cells, points)):
            local = np.flatnonzero(self.cells[k] == vertex)
            if len(local):
                ref = self.to_reference(k, x)[0]
                lam = np.array([1.0 - ref.sum(), ref[0], ref[1]])
                values[i] = lam[local[0]]
        return values

    def summary(self) -> dict:
        return {
            'vertices': self.num_vertices,
            'cells': self.num_cells,
            'edges': self.num_edges,
            'interior_edges': int((~self.boundary_edge_mask).sum()),
            'boundary_edges': int(self.boundary_edge_mask.sum()),
            'h_max': self.h_max,
            'kappa': self.kappa,
        }


@dataclass(frozen=True, eq=False)
class VertexPatch:
    mesh: Mesh
    vertex: int
    cells: np.ndarray            # T_a
    edges: np.ndarray            # F_a: edges containing the vertex
    rim_edges: np.ndarray        # F_a^boundary (empty for boundary vertices)
    boundary_edges: np.ndarray   # every edge of the patch boundary
    interior_edges: np.ndarray   # edges shared by two patch cells
    diameter: float              # h_a
    local_vertex: dict = field(default_factory=dict)   # cell -> local index of the vertex

    @property
    def is_boundary_vertex(self) -> bool:
        return bool(self.mesh.boundary_vertex_mask[self.vertex])

    def hat(self, points: np.ndarray) -> np.ndarray:
        return self.mesh.hat(self.vertex, points)

    def hat_on_cell(self, cell: int, ref_points: np.ndarray) -> np.ndarray:
        """psi_a on a cell at reference points (zero on cells outside the patch)"""
        ref_points = np.atleast_2d(ref_points)
        if cell not in self.local_vertex:
            return np.zeros(len(ref_points))
        lam = np.column_stack([1.0 - ref_points.sum(axis=1), ref_points[:, 0], ref_points[:, 1]])
        return lam[:, self.local_vertex[cell]]


def vertex_patch(mesh: Mesh, vertex: int) -> VertexPatch:
    if not 0 <= vertex < mesh.num_vertices:
        raise MeshError(f"vertex {vertex} out of range")
    cells = mesh.patch_index[vertex]
    incident, opposite = set(), set()
    count = {}
    for k in cells:
        for e in mesh.cell_edge_index[k]:
            count[int(e)] = count.get(int(e), 0) + 1
            if vertex in mesh.edge_vertices[e]:
                incident.add(int(e))
            else:
                opposite.add(int(e))
    boundary = sorted(e for e, c in count.items() if c == 1)
    interior = sorted(e for e, c in count.items() if c == 2)
    is_boundary_vertex = bool(mesh.boundary_vertex_mask[vertex])
    rim = [] if is_boundary_vertex else sorted(opposite)
    vertex_ids = np.unique(mesh.cells[cells].ravel())
    pts = mesh.vertices[vertex_ids]
    diameter = float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)))
    local = {int(k): int(np.flatnonzero(mesh.cells[k] == vertex)[0]) for k in cells}
    return VertexPatch(mesh=mesh, vertex=vertex, cells=np.asarray(cells), edges=np.array(sorted(incident)),
                       rim_edges=np.array(rim, dtype=np.int64), boundary_edges=np.array(boundary),
                       interior_edges=np.array(interior, dtype=np.int64), diameter=diameter,
                       local_vertex=local)


# -- construction ----------------------------------------------------------------------------
def _longest_edge(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = vertices[cells]
    lengths = np.stack([np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                        np.linalg.norm(p[:, 1] - p[:, 0], axis=1)], axis=1)
    # ties go to the lowest local index
    return np.argmax(lengths >= lengths.max(axis=1, keepdims=True) * (1.0 - 1e-12), axis=1)


def build_mesh(points: Sequence, cells: Sequence, refinement_edges: Optional[Sequence] = None,
               parent_cells: Optional[Sequence] = None, flip_orientation: bool = False) -> Mesh:
    """
    Validate and build a mesh. Edge numbering follows the lexicographic order of the
    sorted endpoint pairs. flip_orientation reverses every edge normal while keeping the
    incidence signs (debug switch for the integration-by-parts oracle).
    """
    vertices = np.asarray(points, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if len(cells) == 0:
        raise MeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= nv:
        raise MeshError("cell references a vertex index out of range")

    p = vertices[cells]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    bad = np.flatnonzero(signed <= 0.0)
    if len(bad):
        raise InvertedCellError(f"cell {int(bad[0])} has nonpositive signed area {signed[bad[0]]:.3e}")

    keys = np.sort(cells, axis=1)
    if len(np.unique(keys, axis=0)) != len(cells):
        raise MeshError("duplicate cells")

    used = np.zeros(nv, dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        raise DanglingVertexError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any cell")

    local = np.stack([cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=1)   # (nc, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edge_vertices, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        e = int(np.argmax(counts))
        raise NonConformingMeshError(f"edge {tuple(edge_vertices[e])} is shared by {counts[e]} cells")
    cell_edges = inverse.reshape(-1, 3)

    edge_cells = -np.ones((len(edge_vertices), 2), dtype=np.int64)
    for k in range(len(cells)):
        for e in cell_edges[k]:
            if edge_cells[e, 0] < 0:
                edge_cells[e, 0] = k
            else:
                edge_cells[e, 1] = k
    # left cell = smaller index; the loop visits cells in increasing order so it already is

    _check_hanging_vertices(vertices, edge_vertices[counts == 1])

    if refinement_edges is None:
        refinement_edges = _longest_edge(vertices, cells)
    mesh = Mesh(vertices, cells, edge_vertices, cell_edges, edge_cells,
                refinement_edges=refinement_edges, parent_cells=parent_cells,
                flip_orientation=flip_orientation)
    logger.debug(f"Built mesh: {mesh.summary()}")
    return mesh


def _check_hanging_vertices(vertices: np.ndarray, boundary_pairs: np.ndarray) -> None:
    for a, b in boundary_pairs:
        pa, pb = vertices[a], vertices[b]
        d = pb - pa
        length2 = float(d @ d)
        rel = vertices - pa
        s = rel @ d / length2
        cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        inside = (s > GEOMETRY_TOLERANCE) & (s < 1.0 - GEOMETRY_TOLERANCE) & \
                 (np.abs(cross) <= GEOMETRY_TOLERANCE * length2)
        if inside.any():
            v = int(np.flatnonzero(inside)[0])
            raise NonConformingMeshError(f"hanging vertex {v} on edge ({a}, {b})")


def _grid_cells(index: np.ndarray, active: np.ndarray) -> List[Tuple[int, int, int]]:
    cells = []
    ny, nx = active.shape
    for j in range(ny):
        for i in range(nx):
            if not active[j, i]:
                continue
            v00, v10 = index[j, i], index[j, i + 1]
            v01, v11 = index[j + 1, i], index[j + 1, i + 1]
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return cells


def _grid_mesh(x0: float, y0: float, size: float, n: int, active: np.ndarray) -> Mesh:
    coords = np.linspace(0.0, size, n + 1)
    used = np.zeros((n + 1, n + 1), dtype=bool)
    for j in range(n):
        for i in range(n):
            if active[j, i]:
                used[j:j + 2, i:i + 2] = True
    index = -np.ones((n + 1, n + 1), dtype=np.int64)
    index[used] = np.arange(used.sum())
    jj, ii = np.nonzero(used)
    points = np.column_stack([x0 + coords[ii], y0 + coords[jj]])
    return build_mesh(points, _grid_cells(index, active))


def uniform_square_mesh(n: int) -> Mesh:
    """[0,1]^2 split into n x n squares, each cut along its (0,0)-(1,1) diagonal"""
    if n < 1:
        raise MeshError("n must be >= 1")
    return _grid_mesh(0.0, 0.0, 1.0, n, np.ones((n, n), dtype=bool))


def l_shape_mesh(n: int) -> Mesh:
    """[-1,1]^2 minus [0,1]x[-1,0], each unit square split into n x n squares"""
    if n < 1:
        raise MeshError("n must be >= 1")
    m = 2 * n
    active = np.ones((m, m), dtype=bool)
    active[:n, n:] = False     # rows below y=0, columns right of x=0
    return _grid_mesh(-1.0, -1.0, 2.0, m, active)


# -- plain-text format ----------------------------------------------------------------------
def parse_mesh(text: str) -> Mesh:
    lines = text.splitlines()
    cursor = 0

    def next_line():
        nonlocal cursor
        while cursor < len(lines) and not lines[cursor].strip():
            cursor += 1
        if cursor >= len(lines):
            raise MeshFormatError(cursor + 1, "unexpected end of file")
        cursor += 1
        return cursor, lines[cursor - 1].split()

    def header(keyword):
        number, tokens = next_line()
        if len(tokens) != 2 or tokens[0] != keyword:
            raise MeshFormatError(number, f"expected '{keyword} N'")
        try:
            count = int(tokens[1])
        except ValueError:
            raise MeshFormatError(number, f"invalid count '{tokens[1]}'")
        if count <= 0:
            raise MeshFormatError(number, f"count must be positive, got {count}")
        return count

    nv = header('vertices')
    points = []
    for _ in range(nv):
        number, tokens = next_line()
        try:
            if len(tokens) != 2:
                raise ValueError
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError:
            raise MeshFormatError(number, "expected 'x y'")
    nc = header('cells')
    cells = []
    for _ in range(nc):
        number, tokens = next_line()
        try:
            if len(tokens) != 3:
                raise ValueError
            cells.append(tuple(int(t) for t in tokens))
        except ValueError:
            raise MeshFormatError(number, "expected 'i j k'")
    while cursor < len(lines):
        if lines[cursor].strip():
            raise MeshFormatError(cursor + 1, "trailing content after the declared cells")
        cursor += 1
    return build_mesh(points, cells)


def read_mesh(path: Union[str, Path]) -> Mesh:
    return parse_mesh(Path(path).read_text())


def format_mesh(mesh: Mesh) -> str:
    rows = [f"vertices {mesh.num_vertices}"]
    rows += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    rows.append(f"cells {mesh.num_cells}")
    rows += [f"{i} {j} {k}" for i, j, k in mesh.cells]
    return "\n".join(rows) + "\n"


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    Path(path).write_text(format_mesh(mesh))
