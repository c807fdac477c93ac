"""
Symmetric interior penalty dG discretization of the curl-curl problem
omega^2 eps E + rot(nu curl E) = J in the domain, E . t = 0 on the boundary.

Vector dofs are ordered (cell, component, mode): index (K * 2 + c) * nb + j.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from config.solver_config import DG_SETTINGS
from models.basis import basis_size, reference_basis
from models.broken import (
    BrokenField,
    cell_order,
    cell_quadrature,
    curl_h,
    edge_points,
    edge_table,
    l2_project,
    tangential_jumps,
)
from models.exceptions import NoConvergenceError
from models.materials import DGConfig, MaterialModel, SourceTerm
from models.mesh import Mesh
from services.lifting_service import LiftingOperator, lifting_constant

logger = logging.getLogger(__name__)


@dataclass
class AnalyticField:
    """Pointwise-evaluable vector field with its scalar curl"""
    values: Callable[[np.ndarray], np.ndarray]
    curl: Callable[[np.ndarray], np.ndarray]

    def __neg__(self) -> 'AnalyticField':
        return AnalyticField(values=lambda x: -np.asarray(self.values(x)), curl=lambda x: -np.asarray(self.curl(x)))


@dataclass
class SharpField:
    """
    v = conforming parts + broken part. Conforming parts (analytic fields, or broken fields
    whose tangential jumps vanish) never enter jump or lifting terms.
    """
    conforming: Sequence[Union[AnalyticField, BrokenField]] = ()
    broken: Optional[BrokenField] = None


@dataclass
class ErrorMeasure:
    """Per-cell squared components of the error measure"""
    l2: np.ndarray
    curl: np.ndarray
    jump: np.ndarray

    @property
    def cell_squares(self) -> np.ndarray:
        return self.l2 + self.curl + self.jump

    @property
    def cell_values(self) -> np.ndarray:
        return np.sqrt(self.cell_squares)

    def total(self, cells: Optional[Sequence[int]] = None) -> float:
        squares = self.cell_squares if cells is None else self.cell_squares[np.asarray(cells, dtype=np.int64)]
        return float(np.sqrt(squares.sum()))


def automatic_penalty(mesh: Mesh, p: int) -> Tuple[float, float]:
    """eta_* = max(eta_floor, 1/2 + 2 C_L safety) with C_L = 2 C_lift^2"""
    c_lift = lifting_constant(mesh, p)
    c_l = 2.0 * c_lift ** 2
    eta = max(DG_SETTINGS['eta_floor'], 0.5 + 2.0 * c_l * DG_SETTINGS['eta_safety'])
    return eta, c_lift


class DGSolverService:
    def __init__(self, mesh: Mesh, materials: MaterialModel, config: DGConfig):
        self.mesh = mesh
        self.materials = materials
        self.config = config
        self.p = config.p
        self.nb = basis_size(self.p)
        self.ndof = mesh.num_cells * 2 * self.nb
        self.lifting_constant = None
        if config.is_auto:
            self.eta, self.lifting_constant = automatic_penalty(mesh, self.p)
            logger.info(f"Automatic penalty eta_*={self.eta:.3f} (C_lift={self.lifting_constant:.4f}, p={self.p})")
        else:
            self.eta = float(config.eta_star)
        self.npoints = edge_points(self.p)

    # -- building blocks -------------------------------------------------------------------
    def _vector_dofs(self, cell: int) -> np.ndarray:
        return cell * 2 * self.nb + np.arange(2 * self.nb)

    @cached_property
    def _cell_curls(self) -> np.ndarray:
        """(ncells, nb, 2 nb) maps from local vector coefficients to degree-p curl coefficients"""
        d_xi, d_eta = reference_basis().derivative_matrices(self.p, self.p)
        jinv = self.mesh.inverse_jacobians
        dx = jinv[:, 0, 0, None, None] * d_xi + jinv[:, 1, 0, None, None] * d_eta
        dy = jinv[:, 0, 1, None, None] * d_xi + jinv[:, 1, 1, None, None] * d_eta
        return np.concatenate([-dy, dx], axis=2)

    @cached_property
    def mass_matrix(self) -> sparse.csr_matrix:
        """omega^2 (eps v, w): diagonal in the orthonormal basis"""
        diagonal = np.repeat(self.materials.omega2 * self.materials.eps, 2 * self.nb)
        return sparse.diags(diagonal).tocsr()

    @cached_property
    def curl_matrix(self) -> sparse.csr_matrix:
        """Vector dofs -> scalar degree-p dofs of curl_h"""
        return sparse.block_diag(list(self._cell_curls), format='csr')

    @cached_property
    def nu_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(np.repeat(self.materials.nu, self.nb)).tocsr()

    @cached_property
    def curl_stiffness(self) -> sparse.csr_matrix:
        return (self.curl_matrix.T @ self.nu_matrix @ self.curl_matrix).tocsr()

    def _edge_blocks(self):
        """Per edge: cells, jump operators J (nq, 2nb) and nu-average-of-curl operators A (nq, 2nb)"""
        mesh, table = self.mesh, edge_table(self.mesh, self.p, self.npoints)
        curls = self._cell_curls
        nu = self.materials.nu
        for e, edge in enumerate(mesh.edges):
            t = mesh.edge_tangents[e]
            weight = 1.0 if edge.is_boundary else 0.5
            cells = [edge.left_cell]
            jumps = [np.concatenate([t[0] * table.left[e], t[1] * table.left[e]], axis=1)]
            averages = [weight * nu[edge.left_cell] * table.left[e] @ curls[edge.left_cell]]
            if not edge.is_boundary:
                cells.append(edge.right_cell)
                jumps.append(-np.concatenate([t[0] * table.right[e], t[1] * table.right[e]], axis=1))
                averages.append(weight * nu[edge.right_cell] * table.right[e] @ curls[edge.right_cell])
            yield e, cells, jumps, averages, table.weights[e]

    def _assemble_edges(self, kind: str) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        edge_nu = self.materials.edge_nu
        for e, cells, jumps, averages, weights in self._edge_blocks():
            for a, cell_a in enumerate(cells):
                for b, cell_b in enumerate(cells):
                    if kind == 'penalty':
                        factor = edge_nu[e] * self.p ** 2 / self.mesh.edge_lengths[e]
                        block = factor * (jumps[a] * weights[:, None]).T @ jumps[b]
                    else:
                        block = (averages[a] * weights[:, None]).T @ jumps[b]
                    r, c = np.meshgrid(self._vector_dofs(cell_a), self._vector_dofs(cell_b), indexing='ij')
                    rows.append(r.ravel())
                    cols.append(c.ravel())
                    vals.append(block.ravel())
        return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(self.ndof, self.ndof)).tocsr()

    @cached_property
    def penalty_matrix(self) -> sparse.csr_matrix:
        """s_h without eta_*"""
        return self._assemble_edges('penalty')

    @cached_property
    def face_consistency(self) -> sparse.csr_matrix:
        """sum_F ({nu curl v}, [w]^c)_F as v^T X w"""
        return self._assemble_edges('consistency')

    @cached_property
    def lifting_consistency(self) -> sparse.csr_matrix:
        """(L(w), nu curl v) as v^T X w"""
        lifting = LiftingOperator(self.mesh, self.p, self.p).matrix()
        return (self.curl_matrix.T @ self.nu_matrix @ lifting).tocsr()

    # -- assembly and solve ----------------------------------------------------------------
    def matrix(self, form: str = 'face', eta: Optional[float] = None) -> sparse.csr_matrix:
        eta = self.eta if eta is None else eta
        consistency = self.face_consistency if form == 'face' else self.lifting_consistency
        matrix = self.mass_matrix + self.curl_stiffness + eta * self.penalty_matrix \
            - consistency - consistency.T
        return matrix.tocsr()

    def load_vector(self, source: SourceTerm) -> np.ndarray:
        """(J, phi_i) for every vector basis function"""
        return l2_project(source.J, self.mesh, self.p, order=cell_order(self.p + 2)).flat()

    def assemble(self, source: SourceTerm, form: str = 'face') -> Tuple[sparse.csr_matrix, np.ndarray]:
        matrix = self.matrix(form)
        asymmetry = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
        scale = abs(matrix).max() if matrix.nnz else 1.0
        if asymmetry > DG_SETTINGS['symmetry_tolerance'] * scale:
            logger.warning(f"Assembled matrix asymmetry {asymmetry:.3e} exceeds tolerance")
        return matrix, self.load_vector(source)

    def solve(self, source: SourceTerm, form: str = 'face') -> Tuple[BrokenField, Dict[str, Any]]:
        """
        Assemble and solve b_h(E_h, w) = (J, w).

        Returns:
            the discrete solution and a summary dict (method, iterations, residual, eta_star)
        """
        matrix, rhs = self.assemble(source, form)
        if self.ndof < DG_SETTINGS['dense_threshold']:
            solution = linalg.solve(matrix.toarray(), rhs, assume_a='sym')
            method, iterations = 'dense', 0
        else:
            solution, iterations = self._pcg(matrix, rhs)
            method = 'pcg'
        rhs_norm = np.linalg.norm(rhs)
        residual = float(np.linalg.norm(matrix @ solution - rhs) / rhs_norm) if rhs_norm > 0 else 0.0
        logger.info(f"Solved dG system: {self.ndof} dofs, method={method}, residual={residual:.2e}")
        field = BrokenField.from_flat(self.mesh, self.p, solution)
        return field, {
            'method': method,
            'iterations': iterations,
            'residual': residual,
            'ndof': self.ndof,
            'eta_star': self.eta,
        }

    def _block_jacobi(self, matrix: sparse.csr_matrix) -> np.ndarray:
        size = 2 * self.nb
        blocks = np.empty((self.mesh.num_cells, size, size))
        for k in range(self.mesh.num_cells):
            dofs = self._vector_dofs(k)
            blocks[k] = np.linalg.inv(matrix[dofs][:, dofs].toarray())
        return blocks

    def _pcg(self, matrix: sparse.csr_matrix, rhs: np.ndarray) -> Tuple[np.ndarray, int]:
        """Conjugate gradients with the cellwise block-Jacobi preconditioner"""
        blocks = self._block_jacobi(matrix)
        shape = (self.mesh.num_cells, 2 * self.nb)

        def precondition(r):
            return np.einsum('kij,kj->ki', blocks, r.reshape(shape)).ravel()

        tolerance = self.config.tolerance
        x = np.zeros_like(rhs)
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return x, 0
        r = rhs.copy()
        z = precondition(r)
        d = z.copy()
        rz = r @ z
        for k in range(1, self.config.max_iterations + 1):
            ad = matrix @ d
            alpha = rz / (d @ ad)
            x += alpha * d
            r -= alpha * ad
            if np.linalg.norm(r) <= tolerance * rhs_norm:
                return x, k
            z = precondition(r)
            rz_next = r @ z
            d = z + (rz_next / rz) * d
            rz = rz_next
        residual = float(np.linalg.norm(r) / rhs_norm)
        logger.warning(f"PCG hit the iteration cap with relative residual {residual:.3e}")
        raise NoConvergenceError(self.config.max_iterations, residual)

    def dump_system(self, source: SourceTerm, path: Union[str, Path]) -> None:
        """Coordinate-format text dump `i j value` of the assembled matrix"""
        matrix, _ = self.assemble(source)
        coo = matrix.tocoo()
        rows = [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
        Path(path).write_text("\n".join(rows) + "\n")

    # -- forms and norms -------------------------------------------------------------------
    def bilinear(self, v: BrokenField, w: BrokenField, eta: Optional[float] = None, form: str = 'face') -> float:
        return float(v.with_degree(self.p).flat() @ (self.matrix(form, eta) @ w.with_degree(self.p).flat()))

    def jump_seminorm(self, v: BrokenField) -> float:
        """s_h(v, v)"""
        x = v.with_degree(self.p).flat()
        return float(x @ (self.penalty_matrix @ x))

    def dg_norm(self, v: BrokenField) -> float:
        x = v.with_degree(self.p).flat()
        value = x @ (self.mass_matrix @ x) + x @ (self.curl_stiffness @ x) + x @ (self.penalty_matrix @ x)
        return float(np.sqrt(max(value, 0.0)))

    def coercivity_check(self, samples: int = 100, rng: Optional[np.random.Generator] = None,
                         eta: Optional[float] = None) -> Dict[str, Any]:
        """min over random v of b_h(v, v) / dg_norm(v)^2"""
        rng = rng or np.random.default_rng(0)
        matrix = self.matrix(eta=eta)
        norm_matrix = self.mass_matrix + self.curl_stiffness + self.penalty_matrix
        ratios = []
        for _ in range(samples):
            x = rng.standard_normal(self.ndof)
            ratios.append(float((x @ (matrix @ x)) / (x @ (norm_matrix @ x))))
        return {
            'min_ratio': min(ratios),
            'samples': samples,
            'eta_star': self.eta if eta is None else eta,
        }

    # -- error measure -----------------------------------------------------------------------
    def _analysis_order(self, degree: int) -> int:
        return cell_order(degree + 2)

    def _values_and_curls(self, parts: Sequence[Union[AnalyticField, BrokenField]], order: int):
        points, _ = cell_quadrature(self.mesh, order)
        flat = points.reshape(-1, 2)
        values = np.zeros(points.shape)
        curls = np.zeros(points.shape[:2])
        for part in parts:
            if isinstance(part, BrokenField):
                values += part.quadrature_values(order)
                curls += curl_h(part).quadrature_values(order)[:, :, 0]
            else:
                values += np.asarray(part.values(flat)).reshape(points.shape)
                curls += np.asarray(part.curl(flat)).reshape(points.shape[:2])
        return values, curls

    def _jump_squares(self, v: BrokenField) -> np.ndarray:
        """sum over F in F_K of nu_F (p^2/h_K) ||[v]^c||_F^2, per cell"""
        npoints = edge_points(max(v.degree, self.p))
        jumps = tangential_jumps(v, npoints)
        weights = edge_table(self.mesh, v.degree, npoints).weights
        per_edge = self.materials.edge_nu * np.einsum('eq,eq->e', jumps ** 2, weights)
        per_cell = per_edge[self.mesh.cell_edge_index].sum(axis=1)
        return per_cell * self.p ** 2 / self.mesh.cell_diameters

    def sharp_measure(self, field: SharpField) -> ErrorMeasure:
        degree = max([self.p] + [part.degree for part in field.conforming if isinstance(part, BrokenField)]
                     + ([field.broken.degree] if field.broken is not None else []))
        order = self._analysis_order(degree)
        parts: List[Union[AnalyticField, BrokenField]] = list(field.conforming)
        if field.broken is not None:
            parts.append(field.broken)
        values, curls = self._values_and_curls(parts, order)
        _, weights = cell_quadrature(self.mesh, order)
        l2 = self.materials.omega2 * self.materials.eps * np.einsum('kqc,kq->k', values ** 2, weights)
        curl = self.materials.nu * np.einsum('kq,kq->k', curls ** 2, weights)
        jump = self._jump_squares(field.broken) if field.broken is not None else np.zeros(self.mesh.num_cells)
        return ErrorMeasure(l2=l2, curl=curl, jump=jump)

    def error_measure(self, exact: AnalyticField, E_h: BrokenField,
                      cells: Optional[Sequence[int]] = None) -> Dict[str, Any]:
        """Per-cell and total ||E - E_h||_sharp; the jump part only sees -E_h"""
        measure = self.sharp_measure(SharpField(conforming=[exact], broken=-E_h))
        return {
            'measure': measure,
            'cells': measure.cell_values,
            'total': measure.total(cells),
        }

    def extended_bilinear(self, u: SharpField, w: SharpField) -> float:
        """
        b#(u, w) = omega^2 (eps u, w) + (nu curl u, curl w) + eta_* s_h(u_b, w_b)
                   - (nu curl u, L(w_b)) - (L(u_b), nu curl w)
        with jumps and liftings taken from the broken parts only
        """
        degrees = [self.p] + [f.degree for s in (u, w) for f in list(s.conforming) + [s.broken]
                              if isinstance(f, BrokenField)]
        order = self._analysis_order(max(degrees))
        _, weights = cell_quadrature(self.mesh, order)

        def evaluate(field: SharpField):
            parts = list(field.conforming) + ([field.broken] if field.broken is not None else [])
            values, curls = self._values_and_curls(parts, order)
            if field.broken is None:
                lifted = np.zeros(curls.shape)
            else:
                lifted = LiftingOperator(self.mesh, self.p, field.broken.degree).apply(field.broken)
                lifted = lifted.quadrature_values(order)[:, :, 0]
            return values, curls, lifted

        uv, uc, ul = evaluate(u)
        wv, wc, wl = evaluate(w)
        eps, nu = self.materials.eps[:, None], self.materials.nu[:, None]
        total = self.materials.omega2 * np.einsum('kq,kqc,kqc->', weights * eps, uv, wv)
        total += np.einsum('kq,kq,kq->', weights * nu, uc, wc)
        total -= np.einsum('kq,kq,kq->', weights * nu, uc, wl)
        total -= np.einsum('kq,kq,kq->', weights * nu, ul, wc)
        if u.broken is not None and w.broken is not None:
            degree = max(u.broken.degree, w.broken.degree)
            npoints = edge_points(degree)
            ju = tangential_jumps(u.broken, npoints)
            jw = tangential_jumps(w.broken, npoints)
            edge_weights = edge_table(self.mesh, degree, npoints).weights
            factor = self.materials.edge_nu * self.p ** 2 / self.mesh.edge_lengths
            total += self.eta * np.einsum('e,eq,eq,eq->', factor, edge_weights, ju, jw)
        return float(total)
