"""
Jump lifting operator: (L(v), phi) = sum_F ([v]^c, {phi})_F for broken scalar phi of degree p
"""
import logging
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy import sparse

from models.basis import basis_size
from models.broken import BrokenField, edge_points, edge_table, tangential_jumps
from models.mesh import Mesh
from models.quadrature import segment_rule

logger = logging.getLogger(__name__)


def _edge_weights(mesh: Mesh) -> np.ndarray:
    """1/2 on interior edges, 1 on boundary edges"""
    return np.where(mesh.boundary_edge_mask, 1.0, 0.5)


class LiftingOperator:
    def __init__(self, mesh: Mesh, target_degree: int, source_degree: Optional[int] = None):
        self.mesh = mesh
        self.target_degree = int(target_degree)
        self.source_degree = self.target_degree + 1 if source_degree is None else int(source_degree)

    def _npoints(self, source_degree: int) -> int:
        return edge_points(max(source_degree, self.target_degree))

    def apply(self, v: BrokenField) -> BrokenField:
        if v.arity != 2:
            raise ValueError("the lifting operator acts on vector fields")
        mesh = self.mesh
        npoints = self._npoints(v.degree)
        jumps = tangential_jumps(v, npoints)
        table = edge_table(mesh, self.target_degree, npoints)
        moments = jumps * table.weights * _edge_weights(mesh)[:, None]
        left = np.einsum('eqi,eq->ei', table.left, moments)
        right = np.einsum('eqi,eq->ei', table.right, moments)
        out = np.zeros((mesh.num_cells, basis_size(self.target_degree)))
        np.add.at(out, mesh.edge_cells[:, 0], left)
        interior = mesh.edge_cells[:, 1] >= 0
        np.add.at(out, mesh.edge_cells[interior, 1], right[interior])
        return BrokenField(mesh, self.target_degree, out[:, None, :])

    __call__ = apply

    def matrix(self) -> sparse.csr_matrix:
        """Sparse map from vector dofs of the source degree to scalar dofs of the target degree"""
        mesh = self.mesh
        nb_in, nb_out = basis_size(self.source_degree), basis_size(self.target_degree)
        npoints = self._npoints(self.source_degree)
        t_in = edge_table(mesh, self.source_degree, npoints)
        t_out = edge_table(mesh, self.target_degree, npoints)
        weights = _edge_weights(mesh)
        rows, cols, vals = [], [], []
        for e, edge in enumerate(mesh.edges):
            wq = t_in.weights[e] * weights[e]
            tangent = mesh.edge_tangents[e]
            sources = [(edge.left_cell, t_in.left[e], 1.0)]
            targets = [(edge.left_cell, t_out.left[e])]
            if not edge.is_boundary:
                sources.append((edge.right_cell, t_in.right[e], -1.0))
                targets.append((edge.right_cell, t_out.right[e]))
            for target_cell, phi in targets:
                for source_cell, psi, sign in sources:
                    block = sign * (phi * wq[:, None]).T @ psi          # (nb_out, nb_in)
                    local = np.concatenate([tangent[0] * block, tangent[1] * block], axis=1)
                    r = target_cell * nb_out + np.arange(nb_out)
                    c = source_cell * 2 * nb_in + np.arange(2 * nb_in)
                    rr, cc = np.meshgrid(r, c, indexing='ij')
                    rows.append(rr.ravel())
                    cols.append(cc.ravel())
                    vals.append(local.ravel())
        shape = (mesh.num_cells * nb_out, mesh.num_cells * 2 * nb_in)
        return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=shape).tocsr()

    def bound_ratios(self, v: BrokenField) -> Dict[int, float]:
        """
        ||L(v)||_K / (sum_{F in F_K} (p^2/h_K) ||[v]^c||_F^2)^(1/2) for every cell with a
        nonzero jump on its boundary
        """
        p = max(self.target_degree, 1)
        mesh = self.mesh
        npoints = self._npoints(v.degree)
        jumps = tangential_jumps(v, npoints)
        table = edge_table(mesh, self.target_degree, npoints)
        edge_norms = np.einsum('eq,eq->e', jumps ** 2, table.weights)
        lifted = self.apply(v).cell_norms_squared()
        ratios = {}
        for k in range(mesh.num_cells):
            denominator = (p ** 2 / mesh.cell_diameters[k]) * edge_norms[mesh.cell_edge_index[k]].sum()
            if denominator > 0.0:
                ratios[k] = float(np.sqrt(lifted[k] / denominator))
        return ratios

    def cell_constants(self) -> np.ndarray:
        """
        Per-cell supremum of the bound ratio over all polynomial jumps of the source degree:
        largest singular value of the edge-moment map, scaled by sqrt(h_K) / p.
        """
        return _cell_constants(self.mesh, self.target_degree, self.source_degree)


@lru_cache(maxsize=16)
def _cell_constants(mesh: Mesh, target_degree: int, source_degree: int) -> np.ndarray:
    npoints = edge_points(max(source_degree, target_degree))
    table = edge_table(mesh, target_degree, npoints)
    rule = segment_rule(npoints)
    weights = _edge_weights(mesh)
    p = max(target_degree, 1)
    k = np.arange(source_degree + 1)
    legendre = np.polynomial.legendre.legvander(2.0 * rule.points - 1.0, source_degree) * np.sqrt(2 * k + 1)
    constants = np.zeros(mesh.num_cells)
    for cell in range(mesh.num_cells):
        blocks = []
        for e in mesh.cell_edge_index[cell]:
            phi = table.left[e] if mesh.edge_cells[e, 0] == cell else table.right[e]
            h_f = mesh.edge_lengths[e]
            # orthonormal Legendre jumps on the edge: l_k(s) = sqrt((2k+1)/h_F) P_k(2s-1)
            edge_basis = legendre / np.sqrt(h_f)
            blocks.append(weights[e] * (phi * table.weights[e][:, None]).T @ edge_basis)
        moment_map = np.hstack(blocks)
        sigma = np.linalg.svd(moment_map, compute_uv=False)[0]
        constants[cell] = sigma * np.sqrt(mesh.cell_diameters[cell]) / p
    return constants


def lift(v: BrokenField, target_degree: int) -> BrokenField:
    return LiftingOperator(v.mesh, target_degree, v.degree).apply(v)


def lifting_bound_ratio(v: BrokenField, target_degree: Optional[int] = None) -> Dict[int, float]:
    target_degree = v.degree if target_degree is None else target_degree
    return LiftingOperator(v.mesh, target_degree, v.degree).bound_ratios(v)


def lifting_constant(mesh: Mesh, degree: int) -> float:
    """C_lift: max over cells of the exact lifting bound constant for degree-p jumps"""
    constant = float(LiftingOperator(mesh, degree, degree).cell_constants().max())
    logger.debug(f"Lifting constant for p={degree}: {constant:.4f}")
    return constant
