"""
Broken polynomial fields on a mesh: L2 projection, broken derivatives, traces, jumps and averages.

Coefficients are stored per cell in the L2(K)-orthonormal modal basis of models.basis, with shape
(ncells, arity, nb). Vector fields have arity 2, scalar fields arity 1.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np

from config.solver_config import OUTPUT_SETTINGS, QUADRATURE_SETTINGS
from models.basis import basis_size, reference_basis
from models.exceptions import EdgeNotOnCellError, FieldFormatError
from models.mesh import Mesh, VertexPatch
from models.quadrature import triangle_rule

logger = logging.getLogger(__name__)

Evaluable = Callable[[np.ndarray], np.ndarray]


def cell_order(degree: int) -> int:
    return 2 * degree + QUADRATURE_SETTINGS['cell_order_offset']


def edge_points(degree: int) -> int:
    return degree + QUADRATURE_SETTINGS['edge_points_offset']


class BrokenField:
    def __init__(self, mesh: Mesh, degree: int, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.ndim != 3 or coefficients.shape[0] != mesh.num_cells \
                or coefficients.shape[2] != basis_size(degree):
            raise ValueError(f"coefficient array of shape {coefficients.shape} does not match "
                             f"{mesh.num_cells} cells of degree {degree}")
        self.mesh = mesh
        self.degree = int(degree)
        self.coefficients = coefficients
        self.coefficients.flags.writeable = False

    @classmethod
    def zeros(cls, mesh: Mesh, degree: int, arity: int = 2) -> 'BrokenField':
        return cls(mesh, degree, np.zeros((mesh.num_cells, arity, basis_size(degree))))

    @classmethod
    def random(cls, mesh: Mesh, degree: int, arity: int = 2,
               rng: Optional[np.random.Generator] = None) -> 'BrokenField':
        rng = rng or np.random.default_rng(0)
        return cls(mesh, degree, rng.standard_normal((mesh.num_cells, arity, basis_size(degree))))

    @property
    def arity(self) -> int:
        return self.coefficients.shape[1]

    @property
    def nb(self) -> int:
        return self.coefficients.shape[2]

    @property
    def ndof(self) -> int:
        return self.coefficients.size

    def flat(self) -> np.ndarray:
        """Dof vector ordered (cell, component, mode)"""
        return self.coefficients.reshape(-1).copy()

    @classmethod
    def from_flat(cls, mesh: Mesh, degree: int, vector: np.ndarray, arity: int = 2) -> 'BrokenField':
        return cls(mesh, degree, np.asarray(vector).reshape(mesh.num_cells, arity, basis_size(degree)))

    # -- algebra ---------------------------------------------------------------------------
    def with_degree(self, degree: int) -> 'BrokenField':
        """Truncation (L2 projection onto lower degree) or exact zero-padded elevation"""
        nb = basis_size(degree)
        out = np.zeros((self.mesh.num_cells, self.arity, nb))
        keep = min(nb, self.nb)
        out[:, :, :keep] = self.coefficients[:, :, :keep]
        return BrokenField(self.mesh, degree, out)

    def _aligned(self, other: 'BrokenField'):
        degree = max(self.degree, other.degree)
        return self.with_degree(degree).coefficients, other.with_degree(degree).coefficients, degree

    def __add__(self, other: 'BrokenField') -> 'BrokenField':
        a, b, degree = self._aligned(other)
        return BrokenField(self.mesh, degree, a + b)

    def __sub__(self, other: 'BrokenField') -> 'BrokenField':
        a, b, degree = self._aligned(other)
        return BrokenField(self.mesh, degree, a - b)

    def __mul__(self, factor) -> 'BrokenField':
        factor = np.asarray(factor, dtype=float)
        if factor.ndim == 1:
            factor = factor[:, None, None]     # per-cell constant
        return BrokenField(self.mesh, self.degree, self.coefficients * factor)

    __rmul__ = __mul__

    def __neg__(self) -> 'BrokenField':
        return BrokenField(self.mesh, self.degree, -self.coefficients)

    def restricted(self, cells) -> 'BrokenField':
        """Zero outside the given cells"""
        out = np.zeros_like(self.coefficients)
        cells = np.asarray(cells, dtype=np.int64)
        out[cells] = self.coefficients[cells]
        return BrokenField(self.mesh, self.degree, out)

    def inner(self, other: 'BrokenField', weights: Optional[np.ndarray] = None) -> float:
        keep = min(self.nb, other.nb)
        per_cell = np.einsum('kcb,kcb->k', self.coefficients[:, :, :keep], other.coefficients[:, :, :keep])
        if weights is not None:
            per_cell = per_cell * weights
        return float(per_cell.sum())

    def cell_norms_squared(self) -> np.ndarray:
        return np.einsum('kcb,kcb->k', self.coefficients, self.coefficients)

    def norm(self, weights: Optional[np.ndarray] = None) -> float:
        squares = self.cell_norms_squared()
        if weights is not None:
            squares = squares * weights
        return float(np.sqrt(squares.sum()))

    # -- evaluation ------------------------------------------------------------------------
    def local_values(self, cell: int, ref_points: np.ndarray) -> np.ndarray:
        """(npoints, arity) values on one cell at reference points"""
        vals = reference_basis().values(ref_points, self.degree)
        return vals @ self.coefficients[cell].T / np.sqrt(self.mesh.determinants[cell])

    def local_gradients(self, cell: int, ref_points: np.ndarray) -> np.ndarray:
        """(npoints, arity, 2) physical gradients on one cell"""
        grads = reference_basis().gradients(ref_points, self.degree) @ self.mesh.inverse_jacobians[cell]
        return np.einsum('nbd,cb->ncd', grads, self.coefficients[cell]) / np.sqrt(self.mesh.determinants[cell])

    def __call__(self, points: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """Values at physical points; (n,) for scalar fields and (n, 2) for vector fields"""
        points = np.atleast_2d(points)
        cells = self.mesh.locate(points) if cells is None else np.asarray(cells)
        out = np.zeros((len(points), self.arity))
        for k in np.unique(cells):
            rows = np.flatnonzero(cells == k)
            out[rows] = self.local_values(k, self.mesh.to_reference(k, points[rows]))
        return out[:, 0] if self.arity == 1 else out

    def quadrature_values(self, order: Optional[int] = None) -> np.ndarray:
        """(ncells, nq, arity) values at the physical points of cell_quadrature(mesh, order)"""
        order = cell_order(self.degree) if order is None else order
        rule = triangle_rule(order)
        vals = reference_basis().values(rule.points, self.degree)
        out = np.einsum('qb,kcb->kqc', vals, self.coefficients)
        return out / np.sqrt(self.mesh.determinants)[:, None, None]

    def __repr__(self):
        return f"BrokenField(degree={self.degree}, arity={self.arity}, cells={self.mesh.num_cells})"


# -- quadrature tables ---------------------------------------------------------------------------
@lru_cache(maxsize=64)
def cell_quadrature(mesh: Mesh, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Physical points (ncells, nq, 2) and weights (ncells, nq) of the triangle rule"""
    rule = triangle_rule(order)
    points = mesh.vertices[mesh.cells[:, 0]][:, None, :] + np.einsum('kij,qj->kqi', mesh.jacobians, rule.points)
    weights = rule.weights[None, :] * mesh.determinants[:, None]
    points.flags.writeable = False
    weights.flags.writeable = False
    return points, weights


class EdgeTable:
    """Edge quadrature points/weights and basis traces from the left and right cells"""

    def __init__(self, mesh: Mesh, degree: int, npoints: int):
        nb = basis_size(degree)
        self.npoints = npoints
        self.degree = degree
        ne = mesh.num_edges
        self.points = np.zeros((ne, npoints, 2))
        self.weights = np.zeros((ne, npoints))
        self.left = np.zeros((ne, npoints, nb))
        self.right = np.zeros((ne, npoints, nb))
        basis = reference_basis()
        for e, edge in enumerate(mesh.edges):
            pts, wts = mesh.edge_quadrature(e, npoints)
            self.points[e], self.weights[e] = pts, wts
            for side, cell in ((self.left, edge.left_cell), (self.right, edge.right_cell)):
                if cell is None:
                    continue
                ref = mesh.to_reference(cell, pts)
                side[e] = basis.values(ref, degree) / np.sqrt(mesh.determinants[cell])
        for array in (self.points, self.weights, self.left, self.right):
            array.flags.writeable = False


@lru_cache(maxsize=64)
def edge_table(mesh: Mesh, degree: int, npoints: int) -> EdgeTable:
    return EdgeTable(mesh, degree, npoints)


def edge_traces(field: BrokenField, npoints: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Left and right traces (nedges, nq, arity); right traces are zero on boundary edges"""
    npoints = edge_points(field.degree) if npoints is None else npoints
    table = edge_table(field.mesh, field.degree, npoints)
    cells = field.mesh.edge_cells
    right_cells = np.where(cells[:, 1] < 0, 0, cells[:, 1])
    left = np.einsum('eqb,ecb->eqc', table.left, field.coefficients[cells[:, 0]])
    right = np.einsum('eqb,ecb->eqc', table.right, field.coefficients[right_cells])
    return left, right


# -- projection ----------------------------------------------------------------------------------
def l2_project(f: Union[Evaluable, BrokenField], mesh: Mesh, degree: int,
               order: Optional[int] = None) -> BrokenField:
    """Cellwise L2-orthogonal projection onto P_degree; exact on broken fields of degree <= degree"""
    if isinstance(f, BrokenField):
        return f.with_degree(degree)
    order = cell_order(degree) if order is None else order
    rule = triangle_rule(order)
    points, _ = cell_quadrature(mesh, order)
    values = np.asarray(f(points.reshape(-1, 2)), dtype=float)
    values = values.reshape(mesh.num_cells, rule.size, -1)
    vals = reference_basis().values(rule.points, degree)
    coefficients = np.einsum('q,qb,kqc->kcb', rule.weights, vals, values)
    coefficients *= np.sqrt(mesh.determinants)[:, None, None]
    return BrokenField(mesh, degree, coefficients)


# -- broken differential operators ---------------------------------------------------------------
def _partial_derivatives(field: BrokenField) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficients of d/dx and d/dy in degree max(p - 1, 0), shape (ncells, arity, nb_out)"""
    out_degree = max(field.degree - 1, 0)
    if field.degree == 0:
        zero = np.zeros((field.mesh.num_cells, field.arity, 1))
        return zero, zero.copy()
    d_xi, d_eta = reference_basis().derivative_matrices(out_degree, field.degree)
    c = field.coefficients
    jinv = field.mesh.inverse_jacobians
    c_xi = c @ d_xi.T
    c_eta = c @ d_eta.T
    dx = jinv[:, 0, 0][:, None, None] * c_xi + jinv[:, 1, 0][:, None, None] * c_eta
    dy = jinv[:, 0, 1][:, None, None] * c_xi + jinv[:, 1, 1][:, None, None] * c_eta
    return dx, dy


def curl_h(v: BrokenField) -> BrokenField:
    """Scalar broken curl dx v2 - dy v1"""
    if v.arity != 2:
        raise ValueError("curl_h expects a vector field")
    dx, dy = _partial_derivatives(v)
    return BrokenField(v.mesh, max(v.degree - 1, 0), (dx[:, 1] - dy[:, 0])[:, None, :])


def rot_scalar(phi: BrokenField) -> BrokenField:
    """Vector rot phi = (dy phi, -dx phi)"""
    if phi.arity != 1:
        raise ValueError("rot_scalar expects a scalar field")
    dx, dy = _partial_derivatives(phi)
    return BrokenField(phi.mesh, max(phi.degree - 1, 0), np.concatenate([dy, -dx], axis=1))


def gradient(phi: BrokenField) -> BrokenField:
    if phi.arity != 1:
        raise ValueError("gradient expects a scalar field")
    dx, dy = _partial_derivatives(phi)
    return BrokenField(phi.mesh, max(phi.degree - 1, 0), np.concatenate([dx, dy], axis=1))


def div_h(v: BrokenField) -> BrokenField:
    if v.arity != 2:
        raise ValueError("div_h expects a vector field")
    dx, dy = _partial_derivatives(v)
    return BrokenField(v.mesh, max(v.degree - 1, 0), (dx[:, 0] + dy[:, 1])[:, None, :])


# -- traces, jumps, averages ---------------------------------------------------------------------
def _edge_side_values(v: BrokenField, cell: int, edge: int, npoints: int) -> np.ndarray:
    points, _ = v.mesh.edge_quadrature(edge, npoints)
    return v.local_values(cell, v.mesh.to_reference(cell, points))


def tangential_trace(v: BrokenField, cell: int, edge: int, npoints: Optional[int] = None) -> np.ndarray:
    """Samples of v|_K . t_F at the edge Gauss points"""
    if v.mesh.local_edge(cell, edge) < 0:
        raise EdgeNotOnCellError(cell, edge)
    npoints = edge_points(v.degree) if npoints is None else npoints
    return _edge_side_values(v, cell, edge, npoints) @ v.mesh.edge_tangents[edge]


def _jump(v: BrokenField, edge: int, npoints: Optional[int]) -> np.ndarray:
    npoints = edge_points(v.degree) if npoints is None else npoints
    e = v.mesh.edges[edge]
    left = _edge_side_values(v, e.left_cell, edge, npoints)
    if e.is_boundary:
        return left
    return left - _edge_side_values(v, e.right_cell, edge, npoints)


def jump_c(v: BrokenField, edge: int, npoints: Optional[int] = None) -> np.ndarray:
    return _jump(v, edge, npoints) @ v.mesh.edge_tangents[edge]


def jump_d(w: BrokenField, edge: int, npoints: Optional[int] = None) -> np.ndarray:
    return _jump(w, edge, npoints) @ w.mesh.edge_normals[edge]


def avg_g(v: BrokenField, edge: int, npoints: Optional[int] = None) -> np.ndarray:
    npoints = edge_points(v.degree) if npoints is None else npoints
    e = v.mesh.edges[edge]
    left = _edge_side_values(v, e.left_cell, edge, npoints)
    if e.is_boundary:
        return left
    return 0.5 * (left + _edge_side_values(v, e.right_cell, edge, npoints))


def scalar_jump_of_curl(v: BrokenField, edge: int, npoints: Optional[int] = None) -> np.ndarray:
    """Jump of curl_h v across an interior edge; zeros on boundary edges"""
    npoints = edge_points(v.degree) if npoints is None else npoints
    if v.mesh.edges[edge].is_boundary:
        return np.zeros(npoints)
    return _jump(curl_h(v), edge, npoints)[:, 0]


def tangential_jumps(v: BrokenField, npoints: Optional[int] = None) -> np.ndarray:
    """[v]^c on every edge, shape (nedges, nq)"""
    left, right = edge_traces(v, npoints)
    return np.einsum('eqc,ec->eq', left - right, v.mesh.edge_tangents)


def normal_jumps(v: BrokenField, npoints: Optional[int] = None) -> np.ndarray:
    left, right = edge_traces(v, npoints)
    return np.einsum('eqc,ec->eq', left - right, v.mesh.edge_normals)


def scalar_jumps(phi: BrokenField, npoints: Optional[int] = None, interior_only: bool = False) -> np.ndarray:
    left, right = edge_traces(phi, npoints)
    jumps = (left - right)[:, :, 0]
    if interior_only:
        jumps[phi.mesh.boundary_edge_mask] = 0.0
    return jumps


def curl_jumps(v: BrokenField, npoints: Optional[int] = None) -> np.ndarray:
    """[curl_h v] on every edge, zero rows on boundary edges, shape (nedges, nq)"""
    npoints = edge_points(v.degree) if npoints is None else npoints
    return scalar_jumps(curl_h(v), npoints, interior_only=True)


def edge_maxima(mesh: Mesh, per_cell: np.ndarray) -> np.ndarray:
    """alpha_F = max of the adjacent cell values"""
    left = per_cell[mesh.edge_cells[:, 0]]
    right = np.where(mesh.edge_cells[:, 1] >= 0, per_cell[np.maximum(mesh.edge_cells[:, 1], 0)], -np.inf)
    return np.maximum(left, right)


# -- hat products ----------------------------------------------------------------------------------
def multiply_by_hat(v: BrokenField, patch: VertexPatch) -> BrokenField:
    """Exact product psi_a v, degree p + 1, zero outside the patch"""
    products = reference_basis().hat_product_matrices(v.degree + 1, v.degree)
    out = np.zeros((v.mesh.num_cells, v.arity, basis_size(v.degree + 1)))
    for cell, local in patch.local_vertex.items():
        out[cell] = v.coefficients[cell] @ products[local].T
    return BrokenField(v.mesh, v.degree + 1, out)


# -- oracles ---------------------------------------------------------------------------------------
def trace_inequality_ratio(mesh: Mesh, degree: int, samples: int = 20,
                           rng: Optional[np.random.Generator] = None, exact: bool = False) -> float:
    """
    max over cells and sampled v in P_p(K) of ||v||_dK / ((p^2/h_K)^(1/2) ||v||_K).
    exact=True returns the supremum from the largest eigenvalue of the boundary mass matrix.
    """
    if degree < 1:
        raise ValueError("trace inequality ratio needs p >= 1")
    rng = rng or np.random.default_rng(0)
    table = edge_table(mesh, degree, edge_points(degree))
    best = 0.0
    for k in range(mesh.num_cells):
        boundary_mass = np.zeros((basis_size(degree),) * 2)
        for e in mesh.cell_edge_index[k]:
            values = table.left[e] if mesh.edge_cells[e, 0] == k else table.right[e]
            boundary_mass += (values * table.weights[e][:, None]).T @ values
        scale = mesh.cell_diameters[k] / degree ** 2
        if exact:
            ratio = np.sqrt(np.linalg.eigvalsh(boundary_mass)[-1] * scale)
        else:
            coefficients = rng.standard_normal((samples, basis_size(degree)))
            quotient = np.einsum('si,ij,sj->s', coefficients, boundary_mass, coefficients) \
                / np.einsum('si,si->s', coefficients, coefficients)
            ratio = np.sqrt(quotient.max() * scale)
        best = max(best, float(ratio))
    return best


def integration_by_parts_residual(v: BrokenField, phi: BrokenField) -> float:
    """max_K |(curl v, phi)_K - (v, rot phi)_K - oint (v . t_dK) phi ds| with t_dK counterclockwise"""
    mesh = v.mesh
    volume = np.einsum('kb,kb->k', curl_h(v).with_degree(phi.degree).coefficients[:, 0],
                       phi.coefficients[:, 0])
    rot = rot_scalar(phi).with_degree(v.degree)
    volume -= np.einsum('kcb,kcb->k', v.coefficients, rot.coefficients)
    npoints = edge_points(max(v.degree, phi.degree))
    degree = max(v.degree, phi.degree)
    vl, vr = edge_traces(v.with_degree(degree), npoints)
    fl, fr = edge_traces(phi.with_degree(degree), npoints)
    weights = edge_table(mesh, degree, npoints).weights
    t = mesh.edge_tangents
    left_flux = np.einsum('eqc,ec,eq,eq->e', vl, t, fl[:, :, 0], weights)
    right_flux = -np.einsum('eqc,ec,eq,eq->e', vr, t, fr[:, :, 0], weights)
    boundary = np.zeros(mesh.num_cells)
    np.add.at(boundary, mesh.edge_cells[:, 0], left_flux)
    interior = mesh.edge_cells[:, 1] >= 0
    np.add.at(boundary, mesh.edge_cells[interior, 1], right_flux[interior])
    return float(np.abs(volume - boundary).max())


def magic_identity_residual(v: BrokenField, phi: BrokenField) -> float:
    """
    |sum_K oint (v . t_K) phi - sum_F int ([v]^c {phi} + {v}^c [phi]) - sum_{F boundary} int (v . t_F) phi|
    """
    mesh = v.mesh
    degree = max(v.degree, phi.degree)
    npoints = edge_points(degree)
    vl, vr = edge_traces(v.with_degree(degree), npoints)
    fl, fr = edge_traces(phi.with_degree(degree), npoints)
    weights = edge_table(mesh, degree, npoints).weights
    t = mesh.edge_tangents
    tl = np.einsum('eqc,ec->eq', vl, t)
    tr = np.einsum('eqc,ec->eq', vr, t)
    fl, fr = fl[:, :, 0], fr[:, :, 0]
    boundary = mesh.boundary_edge_mask
    cell_sum = np.einsum('eq,eq,eq->', tl, fl, weights) - np.einsum('eq,eq,eq->', tr, fr, weights)
    interior_terms = ((tl - tr) * 0.5 * (fl + fr) + 0.5 * (tl + tr) * (fl - fr)) * weights
    face_sum = interior_terms[~boundary].sum() + (tl * fl * weights)[boundary].sum()
    return float(abs(cell_sum - face_sum))


def divergence_theorem_residual(mesh: Mesh, rng: Optional[np.random.Generator] = None,
                                samples: int = 5) -> float:
    """
    max over random affine v and cells of |int_K div v - sum_F iota_KF int_F v . n_F|.
    Affine fields make one-point edge quadrature exact.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    midpoints = mesh.vertices[mesh.edge_vertices].mean(axis=1)
    for _ in range(samples):
        a = rng.standard_normal((2, 2))
        b = rng.standard_normal(2)
        flux = np.einsum('ec,ec->e', midpoints @ a.T + b, mesh.edge_normals) * mesh.edge_lengths
        boundary = (mesh.cell_signs * flux[mesh.cell_edge_index]).sum(axis=1)
        volume = np.trace(a) * mesh.areas
        worst = max(worst, float(np.abs(volume - boundary).max()))
    return worst


# -- serialization ---------------------------------------------------------------------------------
def format_field(field: BrokenField) -> str:
    fmt = OUTPUT_SETTINGS['float_format']
    rows = [f"field {field.degree} {field.arity} {field.mesh.num_cells}"]
    for block in field.coefficients.reshape(field.mesh.num_cells, -1):
        rows.append(" ".join(fmt % c for c in block))
    return "\n".join(rows) + "\n"


def parse_field(text: str, mesh: Mesh) -> BrokenField:
    lines = [(i + 1, line.split()) for i, line in enumerate(text.splitlines()) if line.strip()]
    if not lines:
        raise FieldFormatError(1, "empty field file")
    number, header = lines[0]
    if len(header) != 4 or header[0] != 'field':
        raise FieldFormatError(number, "expected 'field p arity ncells'")
    try:
        degree, arity, ncells = (int(t) for t in header[1:])
    except ValueError:
        raise FieldFormatError(number, "header values must be integers")
    if ncells != mesh.num_cells:
        raise FieldFormatError(number, f"field has {ncells} cells, mesh has {mesh.num_cells}")
    if arity not in (1, 2) or degree < 0:
        raise FieldFormatError(number, f"invalid degree {degree} or arity {arity}")
    if len(lines) - 1 != ncells:
        raise FieldFormatError(lines[-1][0], f"expected {ncells} coefficient rows, found {len(lines) - 1}")
    width = arity * basis_size(degree)
    rows = []
    for number, tokens in lines[1:]:
        if len(tokens) != width:
            raise FieldFormatError(number, f"expected {width} coefficients, found {len(tokens)}")
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise FieldFormatError(number, "invalid coefficient")
    return BrokenField(mesh, degree, np.array(rows).reshape(ncells, arity, -1))


def write_field(field: BrokenField, path: Union[str, Path]) -> None:
    Path(path).write_text(format_field(field))


def read_field(path: Union[str, Path], mesh: Mesh) -> BrokenField:
    return parse_field(Path(path).read_text(), mesh)
