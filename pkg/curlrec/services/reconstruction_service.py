"""
Patchwise H0(curl)-conforming reconstruction of broken fields.

On every vertex patch the reconstruction solves, with first-kind edge elements of degree q,
    (curl U_a, curl W) = (curl_h(psi_a E_h) - L(psi_a E_h), curl W),   (U_a, grad v) = 0,
    (grad theta_a, grad v) = (psi_a E_h, grad v),
and sums E_a = U_a + grad theta_a over all vertices. Patch spaces are null spaces of the
tangential-continuity and zero-trace constraints inside the broken degree-q modal space,
so extension by zero is a coefficient scatter.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg

from config.solver_config import OUTPUT_SETTINGS, RECONSTRUCTION_SETTINGS
from models.basis import basis_size, reference_basis
from models.broken import (
    BrokenField,
    Evaluable,
    curl_h,
    curl_jumps,
    edge_points,
    edge_table,
    l2_project,
    tangential_jumps,
)
from models.exceptions import FieldFormatError, SingularPatchError
from models.mesh import Mesh, VertexPatch, vertex_patch
from models.quadrature import segment_rule, triangle_rule

logger = logging.getLogger(__name__)


# -- local building blocks -------------------------------------------------------------------------
def _cell_derivatives(mesh: Mesh, cells: np.ndarray, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-cell (phi_i, d/dx phi_j) and (phi_i, d/dy phi_j), shape (n, nb, nb)"""
    d_xi, d_eta = reference_basis().derivative_matrices(degree, degree)
    jinv = mesh.inverse_jacobians[cells]
    dx = jinv[:, 0, 0, None, None] * d_xi + jinv[:, 1, 0, None, None] * d_eta
    dy = jinv[:, 0, 1, None, None] * d_xi + jinv[:, 1, 1, None, None] * d_eta
    return dx, dy


def _edge_legendre(mesh: Mesh, edge: int, count: int, npoints: int) -> np.ndarray:
    """(npoints, count) L2(F)-orthonormal Legendre polynomials at the edge Gauss points"""
    s = segment_rule(npoints).points
    k = np.arange(count)
    return np.polynomial.legendre.legvander(2.0 * s - 1.0, count - 1) * np.sqrt((2 * k + 1) / mesh.edge_lengths[edge])


def _side_values(mesh: Mesh, table, edge: int, cell: int) -> np.ndarray:
    return table.left[edge] if mesh.edge_cells[edge, 0] == cell else table.right[edge]


def nedelec_generators(mesh: Mesh, cell: int, q: int) -> np.ndarray:
    """
    Broken degree-q coefficients (2 nb, q^2 + 2q) spanning the first-kind edge element space
    P_{q-1}^2 + (x - x_K)^perp Ptilde_{q-1} on one cell
    """
    nb, nb_low = basis_size(q), basis_size(q - 1)
    columns = []
    for component in range(2):
        for j in range(nb_low):
            column = np.zeros(2 * nb)
            column[component * nb + j] = 1.0
            columns.append(column)
    rule = triangle_rule(2 * q)
    scaled = (mesh.to_physical(cell, rule.points) - mesh.centroids[cell]) / mesh.cell_diameters[cell]
    weighted = reference_basis().values(rule.points, q) * rule.weights[:, None] * np.sqrt(mesh.determinants[cell])
    for a in range(q):
        monomial = scaled[:, 0] ** a * scaled[:, 1] ** (q - 1 - a)
        rotated = np.column_stack([-scaled[:, 1] * monomial, scaled[:, 0] * monomial])
        columns.append((weighted.T @ rotated).T.ravel())
    return np.column_stack(columns)


class PatchSpaces:
    """
    Edge-element space N_q,0 and nodal space S_q,0 of one vertex patch, stored as broken
    modal coefficients over the patch cells (cell-major, then component, then mode)
    """

    def __init__(self, patch: VertexPatch, q: int):
        if q < 1:
            raise ValueError("reconstruction degree q must be >= 1")
        self.patch = patch
        self.q = q
        self.mesh = mesh = patch.mesh
        self.cells = np.asarray(patch.cells)
        self.local = {int(k): i for i, k in enumerate(self.cells)}
        self.nb = basis_size(q)
        n = len(self.cells)
        rcond = RECONSTRUCTION_SETTINGS['null_space_rcond']

        dx, dy = _cell_derivatives(mesh, self.cells, q)
        self.curl = linalg.block_diag(*np.concatenate([-dy, dx], axis=2))          # (n nb, n 2nb)
        self.grad = linalg.block_diag(*np.concatenate([dx, dy], axis=1))           # (n 2nb, n nb)

        generators = linalg.block_diag(*[nedelec_generators(mesh, k, q) for k in self.cells])
        self.local_dimension = q * q + 2 * q
        tangential = self._constraints(vector=True, moments=q, zero_trace=True)
        self.nedelec = linalg.orth(generators @ linalg.null_space(tangential @ generators, rcond=rcond))
        scalar = self._constraints(vector=False, moments=q + 1, zero_trace=True)
        self.nodal = linalg.null_space(scalar, rcond=rcond)
        self.nodal_gradients = self.grad @ self.nodal
        self.curl_nedelec = self.curl @ self.nedelec
        logger.debug(f"Patch {patch.vertex}: {n} cells, dim N={self.nedelec.shape[1]}, dim S={self.nodal.shape[1]}")

    def _constraints(self, vector: bool, moments: int, zero_trace: bool) -> np.ndarray:
        """Edge moment rows of the tangential (or scalar) jumps inside the patch and traces on its boundary"""
        mesh, n = self.mesh, len(self.cells)
        width = (2 if vector else 1) * self.nb
        npoints = edge_points(self.q)
        table = edge_table(mesh, self.q, npoints)
        rows = []
        edges = [(e, False) for e in self.patch.interior_edges]
        if zero_trace:
            edges += [(e, True) for e in self.patch.boundary_edges]
        for e, on_boundary in edges:
            legendre = _edge_legendre(mesh, e, moments, npoints) * table.weights[e][:, None]
            t = mesh.edge_tangents[e]
            block = np.zeros((moments, n * width))
            sides = [int(c) for c in mesh.edge_cells[e] if c >= 0 and int(c) in self.local]
            for cell in sides:
                sign = 1.0 if mesh.edge_cells[e, 0] == cell else -1.0
                values = _side_values(mesh, table, e, cell)
                local = legendre.T @ (np.concatenate([t[0] * values, t[1] * values], axis=1) if vector else values)
                start = self.local[cell] * width
                block[:, start:start + width] += (1.0 if on_boundary else sign) * local
            rows.append(block)
        return np.vstack(rows) if rows else np.zeros((0, n * width))

    def continuous_nodal(self) -> np.ndarray:
        """Continuous P_q on the patch without boundary condition (contains constants)"""
        return linalg.null_space(self._constraints(vector=False, moments=self.q + 1, zero_trace=False),
                                 rcond=RECONSTRUCTION_SETTINGS['null_space_rcond'])

    def restrict(self, field: BrokenField) -> np.ndarray:
        """Patch-cell coefficients of a broken field, degree q, flattened"""
        return field.with_degree(self.q).coefficients[self.cells].reshape(-1)

    @property
    def nedelec_dimension(self) -> int:
        return self.nedelec.shape[1]

    @property
    def nodal_dimension(self) -> int:
        return self.nodal.shape[1]


@lru_cache(maxsize=4096)
def patch_spaces(mesh: Mesh, vertex: int, q: int) -> PatchSpaces:
    return PatchSpaces(vertex_patch(mesh, vertex), q)


@dataclass
class PatchSolution:
    vertex: int
    cells: np.ndarray
    q: int
    U: np.ndarray              # (n, 2, nb) broken coefficients of U_a
    multiplier: np.ndarray     # S_q,0 coordinates of the divergence multiplier
    theta: np.ndarray          # (n, 1, nb) broken coefficients of theta_a
    E: np.ndarray              # (n, 2, nb) broken coefficients of E_a = U_a + grad theta_a
    weighted: np.ndarray       # (n, 2, nb) psi_a E_h elevated to degree q
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass
class ConformingField:
    """Global H0(curl)-conforming edge-element field of degree q in broken modal form"""
    field: BrokenField
    q: int

    @property
    def ndof(self) -> int:
        return self.field.ndof

    def curl(self) -> BrokenField:
        return curl_h(self.field)

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values (n, 2) and curl (n,) at physical points"""
        points = np.atleast_2d(points)
        cells = self.field.mesh.locate(points)
        return self.field(points, cells), self.curl()(points, cells)

    def conformity_defect(self) -> Dict[str, float]:
        jumps = np.abs(tangential_jumps(self.field))
        boundary = self.field.mesh.boundary_edge_mask
        return {
            'interior_jump': float(jumps[~boundary].max()) if (~boundary).any() else 0.0,
            'boundary_trace': float(jumps[boundary].max()) if boundary.any() else 0.0,
        }


# -- patch problems ----------------------------------------------------------------------------------
def _weighted_field(E_h: BrokenField, spaces: PatchSpaces) -> np.ndarray:
    """psi_a E_h on the patch cells, degree q (q >= p + 1), shape (n, 2, nb)"""
    products = reference_basis().hat_product_matrices(E_h.degree + 1, E_h.degree)
    nb_hat = basis_size(E_h.degree + 1)
    out = np.zeros((len(spaces.cells), 2, spaces.nb))
    for i, cell in enumerate(spaces.cells):
        out[i, :, :nb_hat] = E_h.coefficients[cell] @ products[spaces.patch.local_vertex[int(cell)]].T
    return out


def _patch_lift(spaces: PatchSpaces, weighted: np.ndarray, target_degree: int) -> np.ndarray:
    """L(psi_a E_h) on the patch cells in degree target_degree (padded to q), shape (n, nb)"""
    mesh = spaces.mesh
    npoints = edge_points(spaces.q)
    table = edge_table(mesh, spaces.q, npoints)
    out = np.zeros((len(spaces.cells), spaces.nb))

    def trace(cell, e):
        if cell < 0 or cell not in spaces.local:
            return np.zeros(npoints)
        return _side_values(mesh, table, e, cell) @ weighted[spaces.local[cell]].T @ mesh.edge_tangents[e]

    for i, cell in enumerate(spaces.cells):
        for e in mesh.cell_edge_index[cell]:
            left, right = (int(c) for c in mesh.edge_cells[e])
            jump = trace(left, e) - (trace(right, e) if right >= 0 else 0.0)
            weight = 1.0 if right < 0 else 0.5
            out[i] += weight * _side_values(mesh, table, e, int(cell)).T @ (table.weights[e] * jump)
    out[:, basis_size(target_degree):] = 0.0
    return out


def patch_rhs(E_h: BrokenField, spaces: PatchSpaces) -> Tuple[np.ndarray, np.ndarray]:
    """psi_a E_h and the scalar right-hand side curl_h(psi_a E_h) - L(psi_a E_h) on the patch"""
    weighted = _weighted_field(E_h, spaces)
    curl = spaces.curl @ weighted.reshape(-1)
    lifted = _patch_lift(spaces, weighted, E_h.degree).reshape(-1)
    return weighted, curl - lifted


def solve_patch_curl(spaces: PatchSpaces, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Dict[str, float]]:
    """
    Saddle point [A B^T; B 0] with A the curl-curl stiffness on N_q,0 and B = (., grad v), v in S_q,0.

    Args:
        rhs: broken degree-q scalar coefficients on the patch cells
    Returns:
        broken coefficients of U_a, multiplier coordinates and residual diagnostics
    """
    curl_basis = spaces.curl_nedelec
    stiffness = curl_basis.T @ curl_basis
    coupling = spaces.nodal_gradients.T @ spaces.nedelec
    dim_n, dim_s = stiffness.shape[0], coupling.shape[0]
    system = np.block([[stiffness, coupling.T], [coupling, np.zeros((dim_s, dim_s))]])
    load = np.concatenate([curl_basis.T @ rhs, np.zeros(dim_s)])
    try:
        solution = linalg.solve(system, load, assume_a='sym')
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularPatchError(f"patch {spaces.patch.vertex}: saddle-point factorization failed: {e}")
    if not np.all(np.isfinite(solution)):
        raise SingularPatchError(f"patch {spaces.patch.vertex}: non-finite saddle-point solution")
    scale = max(np.linalg.norm(load), 1.0)
    residual = float(np.linalg.norm(system @ solution - load) / scale)
    if residual > RECONSTRUCTION_SETTINGS['residual_tolerance']:
        raise SingularPatchError(f"patch {spaces.patch.vertex}: saddle-point residual {residual:.3e}")
    alpha, multiplier = solution[:dim_n], solution[dim_n:]
    U = spaces.nedelec @ alpha
    diagnostics = {
        'curl_residual': residual,
        'divergence_residual': float(np.abs(coupling @ alpha).max()) if dim_s else 0.0,
        'curl_misfit': float(np.linalg.norm(curl_basis @ alpha - rhs)),
    }
    return U, multiplier, diagnostics


def solve_patch_poisson(spaces: PatchSpaces, weighted: np.ndarray) -> Tuple[np.ndarray, float]:
    """(grad theta, grad v) = (psi_a E_h, grad v) on S_q,0; returns broken theta and the orthogonality residual"""
    gradients = spaces.nodal_gradients
    if gradients.shape[1] == 0:
        return np.zeros(len(spaces.cells) * spaces.nb), 0.0
    stiffness = gradients.T @ gradients
    load = gradients.T @ weighted.reshape(-1)
    factor = linalg.cho_factor(stiffness)
    coordinates = linalg.cho_solve(factor, load)
    residual = float(np.abs(gradients.T @ (gradients @ coordinates) - load).max())
    return spaces.nodal @ coordinates, residual


# -- reconstruction service ----------------------------------------------------------------------------
class ReconstructionService:
    def __init__(self, mesh: Mesh, q: Optional[int] = None, workers: Optional[int] = None):
        self.mesh = mesh
        self.q = q
        self.workers = RECONSTRUCTION_SETTINGS['workers'] if workers is None else workers

    def degree_for(self, E_h: BrokenField) -> int:
        q = E_h.degree + RECONSTRUCTION_SETTINGS['degree_increment'] if self.q is None else self.q
        if q < E_h.degree + 1:
            raise ValueError(f"reconstruction degree q={q} must be at least p+1={E_h.degree + 1}")
        return q

    def solve_patch(self, E_h: BrokenField, vertex: int) -> PatchSolution:
        q = self.degree_for(E_h)
        spaces = patch_spaces(self.mesh, vertex, q)
        weighted, rhs = patch_rhs(E_h, spaces)
        U, multiplier, diagnostics = solve_patch_curl(spaces, rhs)
        theta, poisson_residual = solve_patch_poisson(spaces, weighted)
        n = len(spaces.cells)
        E_a = U + spaces.grad @ theta
        diagnostics['poisson_residual'] = poisson_residual
        return PatchSolution(vertex=vertex, cells=spaces.cells, q=q,
                             U=U.reshape(n, 2, spaces.nb), multiplier=multiplier,
                             theta=theta.reshape(n, 1, spaces.nb), E=E_a.reshape(n, 2, spaces.nb),
                             weighted=weighted, diagnostics=diagnostics)

    def solve_patches(self, E_h: BrokenField) -> List[PatchSolution]:
        vertices = range(self.mesh.num_vertices)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(lambda a: self.solve_patch(E_h, a), vertices))
        return [self.solve_patch(E_h, a) for a in vertices]

    def reconstruct_with_patches(self, E_h: BrokenField) -> Tuple[ConformingField, List[PatchSolution]]:
        """E_c = sum_a E_a, accumulated in ascending vertex order, together with the patch solutions"""
        if E_h.arity != 2:
            raise ValueError("reconstruction expects a vector field")
        q = self.degree_for(E_h)
        coefficients = np.zeros((self.mesh.num_cells, 2, basis_size(q)))
        solutions = self.solve_patches(E_h)
        for solution in solutions:
            coefficients[solution.cells] += solution.E
        worst = max(s.diagnostics['curl_residual'] for s in solutions)
        logger.info(f"Reconstructed {len(solutions)} patches at q={q} (max saddle residual {worst:.2e})")
        return ConformingField(field=BrokenField(self.mesh, q, coefficients), q=q), solutions

    def reconstruct(self, E_h: BrokenField) -> ConformingField:
        return self.reconstruct_with_patches(E_h)[0]

    # -- oracles -----------------------------------------------------------------------------
    def _jump_data(self, E_h: BrokenField) -> Tuple[np.ndarray, np.ndarray]:
        """Per-edge ||[curl_h E_h]||_F^2 (interior only) and ||[E_h]^c||_F^2"""
        npoints = edge_points(E_h.degree)
        weights = edge_table(self.mesh, E_h.degree, npoints).weights
        curl_part = np.einsum('eq,eq->e', curl_jumps(E_h, npoints) ** 2, weights)
        tangential = np.einsum('eq,eq->e', tangential_jumps(E_h, npoints) ** 2, weights)
        return curl_part, tangential

    def theorem_ratios(self, E_h: BrokenField, E_c: ConformingField) -> Dict[str, Any]:
        mesh = self.mesh
        p = max(E_h.degree, 1)
        h = mesh.cell_diameters
        curl_part, tangential = self._jump_data(E_h)
        curl_k = curl_part[mesh.cell_edge_index].sum(axis=1)
        tangential_k = tangential[mesh.cell_edge_index].sum(axis=1)
        difference = E_c.field - E_h
        numerators = {
            'curl': curl_h(difference).norm(),
            'l2': difference.norm(),
        }
        denominators = {
            'curl': float(np.sqrt((h / p * curl_k + p ** 2 / h * tangential_k).sum())),
            'l2': float(np.sqrt((h * tangential_k).sum())),
            'l2_poincare': float(p * np.sqrt(((h / p) ** 3 * curl_k + h * tangential_k).sum())),
        }
        conforming = denominators['curl'] <= RECONSTRUCTION_SETTINGS['conforming_threshold']
        result = {'conforming_input': bool(conforming), 'numerators': numerators, 'denominators': denominators}
        if conforming:
            result.update({'ratio_curl': None, 'ratio_L2': None, 'ratio_L2_poincare': None})
        else:
            result.update({
                'ratio_curl': numerators['curl'] / denominators['curl'],
                'ratio_L2': numerators['l2'] / denominators['l2'] if denominators['l2'] > 0 else None,
                'ratio_L2_poincare': numerators['l2'] / denominators['l2_poincare'],
            })
        return result

    def _patch_edge_norms(self, solution: PatchSolution,
                          jump_data: Tuple[np.ndarray, np.ndarray]) -> Dict[str, float]:
        """Jump data of E_h and of psi_a E_h restricted to the edges containing the vertex"""
        mesh = self.mesh
        spaces = patch_spaces(mesh, solution.vertex, solution.q)
        patch = spaces.patch
        curl_part, tangential = jump_data
        edges = np.asarray(patch.edges)
        npoints = edge_points(solution.q)
        table = edge_table(mesh, solution.q, npoints)
        weighted_jumps = np.zeros(len(edges))
        for i, e in enumerate(edges):
            left, right = (int(c) for c in mesh.edge_cells[e])
            trace = table.left[e] @ solution.weighted[spaces.local[left]].T
            if right >= 0:
                trace = trace - table.right[e] @ solution.weighted[spaces.local[right]].T
            weighted_jumps[i] = table.weights[e] @ (trace @ mesh.edge_tangents[e]) ** 2
        return {
            'curl': curl_part[edges],
            'tangential': tangential[edges],
            'weighted_tangential': weighted_jumps,
            'h_f': mesh.edge_lengths[edges],
            'diameter': patch.diameter,
        }

    def _patch_defect(self, solution: PatchSolution) -> Tuple[float, float]:
        """||E_a - psi_a E_h|| and ||curl_h(E_a - psi_a E_h)|| on the patch"""
        spaces = patch_spaces(self.mesh, solution.vertex, solution.q)
        delta = (solution.E - solution.weighted).reshape(-1)
        return float(np.linalg.norm(delta)), float(np.linalg.norm(spaces.curl @ delta))

    def local_ratios(self, E_h: BrokenField, solution: PatchSolution,
                     jump_data: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Dict[str, Optional[float]]:
        """Patch versions of the broken-curl and L2 bounds, with sums over the edges containing the vertex"""
        p = max(E_h.degree, 1)
        data = self._patch_edge_norms(solution, self._jump_data(E_h) if jump_data is None else jump_data)
        l2, curl = self._patch_defect(solution)
        curl_denominator = np.sqrt((data['h_f'] / p * data['curl'] + p ** 2 / data['h_f'] * data['tangential']).sum())
        l2_denominator = np.sqrt((data['h_f'] * data['tangential']).sum())
        threshold = RECONSTRUCTION_SETTINGS['conforming_threshold']
        return {
            'local_curl_ratio': curl / curl_denominator if curl_denominator > threshold else None,
            'local_l2_ratio': l2 / l2_denominator if l2_denominator > threshold else None,
        }

    def poincare_ratio(self, E_h: BrokenField, solution: PatchSolution,
                       jump_data: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Optional[float]:
        """
        ||E_a - psi_a E_h|| / (h_a (||curl_h(E_a - psi_a E_h)||^2 + sum_{F in F_a} h_F^-1 ||[psi_a E_h]^c||_F^2)^(1/2));
        None flags conforming input
        """
        data = self._patch_edge_norms(solution, self._jump_data(E_h) if jump_data is None else jump_data)
        l2, curl = self._patch_defect(solution)
        denominator = data['diameter'] * np.sqrt(curl ** 2 + (data['weighted_tangential'] / data['h_f']).sum())
        if denominator <= RECONSTRUCTION_SETTINGS['conforming_threshold']:
            return None
        return float(l2 / denominator)

    def patch_ratios(self, E_h: BrokenField, solutions: List[PatchSolution]) -> List[Dict[str, Any]]:
        """Local and Poincare ratios of every patch; the global jump data is computed once"""
        jump_data = self._jump_data(E_h)
        rows = []
        for solution in solutions:
            row = {'vertex': solution.vertex, 'cells': len(solution.cells)}
            row.update(self.local_ratios(E_h, solution, jump_data))
            row['poincare_ratio'] = self.poincare_ratio(E_h, solution, jump_data)
            rows.append(row)
        return rows

    def helmholtz_check(self, vertex: int, v: Union[BrokenField, Evaluable], q: int) -> Dict[str, float]:
        """
        Neumann problem (grad xi, grad w) = (v, grad w) on continuous P_q(patch) modulo constants;
        v is taken in broken degree q on the patch cells
        """
        spaces = patch_spaces(self.mesh, vertex, q)
        projected = v.with_degree(q) if isinstance(v, BrokenField) else l2_project(v, self.mesh, q)
        values = spaces.restrict(projected)
        nodal = spaces.continuous_nodal()
        gradients = spaces.grad @ nodal
        stiffness = gradients.T @ gradients
        load = gradients.T @ values
        coordinates = linalg.lstsq(stiffness, load)[0]
        gradient = gradients @ coordinates
        remainder = values - gradient
        return {
            'pythagoras_defect': float(abs(values @ values - remainder @ remainder - gradient @ gradient)),
            'projection_residual': float(np.abs(gradients.T @ remainder).max()),
            'gradient_norm': float(np.linalg.norm(gradient)),
            'remainder_norm': float(np.linalg.norm(remainder)),
        }


def reconstruct(E_h: BrokenField, q: Optional[int] = None, workers: Optional[int] = None) -> ConformingField:
    return ReconstructionService(E_h.mesh, q=q, workers=workers).reconstruct(E_h)


def theorem_ratios(E_h: BrokenField, E_c: ConformingField) -> Dict[str, Any]:
    return ReconstructionService(E_h.mesh, q=E_c.q).theorem_ratios(E_h, E_c)


# -- serialization ---------------------------------------------------------------------------------------
def format_conforming(E_c: ConformingField) -> str:
    fmt = OUTPUT_SETTINGS['float_format']
    rows = [f"nedelec {E_c.q} {E_c.ndof}"]
    for block in E_c.field.coefficients.reshape(E_c.field.mesh.num_cells, -1):
        rows.append(" ".join(fmt % c for c in block))
    return "\n".join(rows) + "\n"


def parse_conforming(text: str, mesh: Mesh) -> ConformingField:
    lines = [(i + 1, line.split()) for i, line in enumerate(text.splitlines()) if line.strip()]
    if not lines:
        raise FieldFormatError(1, "empty file")
    number, header = lines[0]
    if len(header) != 3 or header[0] != 'nedelec':
        raise FieldFormatError(number, "expected 'nedelec q ndof'")
    try:
        q, ndof = int(header[1]), int(header[2])
    except ValueError:
        raise FieldFormatError(number, "header values must be integers")
    width = 2 * basis_size(q)
    if ndof != mesh.num_cells * width:
        raise FieldFormatError(number, f"ndof {ndof} does not match {mesh.num_cells} cells at q={q}")
    if len(lines) - 1 != mesh.num_cells:
        raise FieldFormatError(lines[-1][0], f"expected {mesh.num_cells} coefficient rows")
    rows = []
    for number, tokens in lines[1:]:
        if len(tokens) != width:
            raise FieldFormatError(number, f"expected {width} coefficients, found {len(tokens)}")
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise FieldFormatError(number, "invalid coefficient")
    coefficients = np.array(rows).reshape(mesh.num_cells, 2, -1)
    return ConformingField(field=BrokenField(mesh, q, coefficients), q=q)


def write_conforming(E_c: ConformingField, path: Union[str, Path]) -> None:
    Path(path).write_text(format_conforming(E_c))
