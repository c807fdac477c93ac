"""
Residual a posteriori estimator for the dG curl-curl solution: indicators eta_div, eta_curl and
eta_nc per cell, data oscillation, effectivity and local efficiency ratios
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config.solver_config import ESTIMATOR_SETTINGS
from models.broken import (
    BrokenField,
    cell_order,
    cell_quadrature,
    curl_h,
    div_h,
    edge_points,
    edge_table,
    l2_project,
    normal_jumps,
    rot_scalar,
    scalar_jumps,
    tangential_jumps,
)
from models.exceptions import ExactSolutionReached
from models.materials import MaterialModel, SourceTerm
from models.mesh import Mesh

logger = logging.getLogger(__name__)


@dataclass
class IndicatorReport:
    eta_div: np.ndarray
    eta_curl: np.ndarray
    eta_nc: np.ndarray
    surrogate_divergence: bool = False
    err_sharp: Optional[np.ndarray] = None
    oscillation: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def eta_cells(self) -> np.ndarray:
        return np.sqrt(self.eta_div ** 2 + self.eta_curl ** 2 + self.eta_nc ** 2)

    @property
    def totals(self) -> Dict[str, float]:
        return {
            'eta_div': float(np.sqrt((self.eta_div ** 2).sum())),
            'eta_curl': float(np.sqrt((self.eta_curl ** 2).sum())),
            'eta_nc': float(np.sqrt((self.eta_nc ** 2).sum())),
            'eta': float(np.sqrt((self.eta_cells ** 2).sum())),
        }

    @property
    def eta(self) -> float:
        return self.totals['eta']

    @property
    def eta_dc(self) -> float:
        """Divergence and curl residual part (eta_div^2 + eta_curl^2)^(1/2)"""
        return float(np.sqrt((self.eta_div ** 2).sum() + (self.eta_curl ** 2).sum()))

    @property
    def error_total(self) -> Optional[float]:
        if self.err_sharp is None:
            return None
        return float(np.sqrt((self.err_sharp ** 2).sum()))

    @property
    def is_exact(self) -> bool:
        total = self.error_total
        return total is not None and total < ESTIMATOR_SETTINGS['exact_threshold']

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'cell': np.arange(len(self.eta_div)),
            'eta_div': self.eta_div,
            'eta_curl': self.eta_curl,
            'eta_nc': self.eta_nc,
            'eta': self.eta_cells,
        })
        if self.err_sharp is not None:
            frame['err_sharp'] = self.err_sharp
        return frame


def effectivity(report: IndicatorReport, error_total: Optional[float] = None) -> float:
    """eta / ||e||_sharp; raises ExactSolutionReached when the error vanishes"""
    error_total = report.error_total if error_total is None else error_total
    if error_total is None:
        raise ValueError("effectivity needs the error measure of an exact solution")
    if error_total < ESTIMATOR_SETTINGS['exact_threshold']:
        raise ExactSolutionReached(f"error measure {error_total:.3e} below the exactness threshold")
    return report.eta / error_total


def face_neighborhoods(mesh: Mesh) -> List[np.ndarray]:
    """K^f: the cell and every cell sharing an edge with it"""
    out = []
    for k in range(mesh.num_cells):
        around = mesh.edge_cells[mesh.cell_edge_index[k]].ravel()
        out.append(np.unique(np.append(around[around >= 0], k)))
    return out


class EstimatorService:
    def __init__(self, mesh: Mesh, materials: MaterialModel, p: int):
        self.mesh = mesh
        self.materials = materials
        self.p = max(int(p), 1)
        self.order = cell_order(self.p + 2)

    # -- shared pieces ---------------------------------------------------------------------
    def _per_cell(self, per_edge: np.ndarray, interior_only: bool = False) -> np.ndarray:
        if interior_only:
            per_edge = np.where(self.mesh.boundary_edge_mask, 0.0, per_edge)
        return per_edge[self.mesh.cell_edge_index].sum(axis=1)

    def _edge_norms(self, samples: np.ndarray, degree: int) -> np.ndarray:
        weights = edge_table(self.mesh, degree, samples.shape[1] if samples.ndim > 1 else 1).weights
        return np.einsum('eq,eq->e', samples ** 2, weights)

    def _cell_norms(self, values: np.ndarray) -> np.ndarray:
        _, weights = cell_quadrature(self.mesh, self.order)
        if values.ndim == 3:
            return np.einsum('kqc,kq->k', values ** 2, weights)
        return np.einsum('kq,kq->k', values ** 2, weights)

    def _source_values(self, source: SourceTerm):
        points, _ = cell_quadrature(self.mesh, self.order)
        flat = points.reshape(-1, 2)
        load = np.asarray(source.J(flat)).reshape(points.shape)
        if source.has_divergence:
            div_load = np.asarray(source.div_J(flat)).reshape(points.shape[:2])
        else:
            degree = self.p + ESTIMATOR_SETTINGS['surrogate_div_degree_offset']
            projected = l2_project(source.J, self.mesh, degree, order=self.order)
            div_load = div_h(projected).quadrature_values(self.order)[:, :, 0]
        return load, div_load

    def _weights(self):
        h = self.mesh.cell_diameters
        return h, h / self.p

    # -- indicators ------------------------------------------------------------------------
    def eta_div(self, E_h: BrokenField, source: SourceTerm) -> np.ndarray:
        mesh, mat = self.mesh, self.materials
        _, div_load = self._source_values(source)
        residual = div_load - mat.omega2 * mat.eps[:, None] * div_h(E_h).quadrature_values(self.order)[:, :, 0]
        npoints = edge_points(E_h.degree)
        flux = normal_jumps(E_h * mat.eps, npoints)
        flux_norms = self._per_cell(self._edge_norms(flux, E_h.degree), interior_only=True)
        _, hp = self._weights()
        squares = (hp ** 2 * self._cell_norms(residual) / mat.omega2 + mat.omega2 * hp * flux_norms) / mat.eps
        return np.sqrt(squares)

    def eta_curl(self, E_h: BrokenField, source: SourceTerm) -> np.ndarray:
        mesh, mat = self.mesh, self.materials
        load, _ = self._source_values(source)
        curl = curl_h(E_h)
        nu_curl = curl * mat.nu
        residual = load - mat.omega2 * mat.eps[:, None, None] * E_h.quadrature_values(self.order) \
            - rot_scalar(nu_curl).quadrature_values(self.order)
        npoints = edge_points(E_h.degree)
        curl_flux = scalar_jumps(nu_curl, npoints, interior_only=True)
        curl_norms = self._per_cell(self._edge_norms(curl_flux, E_h.degree), interior_only=True)
        tangential = self._edge_norms(tangential_jumps(E_h, npoints), E_h.degree)
        penalty = self._per_cell(mat.edge_nu * tangential)
        h, hp = self._weights()
        squares = (hp ** 2 * self._cell_norms(residual) + hp * curl_norms + self.p ** 2 / h * penalty) / mat.nu
        return np.sqrt(squares)

    def eta_nc(self, E_h: BrokenField) -> np.ndarray:
        mat = self.materials
        npoints = edge_points(E_h.degree)
        curl_jumps = scalar_jumps(curl_h(E_h), npoints, interior_only=True)
        curl_norms = self._per_cell(mat.edge_nu * self._edge_norms(curl_jumps, E_h.degree), interior_only=True)
        tangential = self._edge_norms(tangential_jumps(E_h, npoints), E_h.degree)
        h, hp = self._weights()
        jump_term = self._per_cell(mat.omega2 * mat.edge_eps * tangential) * h \
            + self._per_cell(mat.edge_nu * tangential) * self.p ** 2 / h
        return np.sqrt(hp * curl_norms + jump_term)

    def indicators(self, E_h: BrokenField, source: SourceTerm,
                   err_sharp: Optional[np.ndarray] = None) -> IndicatorReport:
        report = IndicatorReport(
            eta_div=self.eta_div(E_h, source),
            eta_curl=self.eta_curl(E_h, source),
            eta_nc=self.eta_nc(E_h),
            surrogate_divergence=not source.has_divergence,
            err_sharp=err_sharp,
            oscillation=self.oscillation(source),
        )
        if report.surrogate_divergence:
            logger.warning(f"Source '{source.name}' has no analytic divergence; using the degree "
                           f"{self.p + ESTIMATOR_SETTINGS['surrogate_div_degree_offset']} projection surrogate")
        logger.info(f"Estimator on {self.mesh.num_cells} cells: eta={report.eta:.4e}")
        return report

    # -- oscillation and efficiency ----------------------------------------------------------
    def cell_oscillation(self, source: SourceTerm) -> np.ndarray:
        """Per-cell squared oscillation with J_h the componentwise degree-p projection"""
        mat = self.materials
        load, div_load = self._source_values(source)
        projected = l2_project(source.J, self.mesh, self.p, order=self.order)
        difference = load - projected.quadrature_values(self.order)
        div_difference = div_load - div_h(projected).quadrature_values(self.order)[:, :, 0]
        _, hp = self._weights()
        return hp ** 2 * (self._cell_norms(difference) / mat.nu
                          + self._cell_norms(div_difference) / (mat.omega2 * mat.eps))

    def oscillation(self, source: SourceTerm, cells: Optional[List[int]] = None) -> np.ndarray:
        """osc over the face neighborhood of every cell (or of the given cells)"""
        per_cell = self.cell_oscillation(source)
        neighborhoods = face_neighborhoods(self.mesh)
        cells = range(self.mesh.num_cells) if cells is None else cells
        return np.array([np.sqrt(per_cell[neighborhoods[k]].sum()) for k in cells])

    def local_efficiency_ratios(self, report: IndicatorReport, error_squares: np.ndarray,
                                oscillation: Optional[np.ndarray] = None) -> np.ndarray:
        """eta_K / (||e||_sharp on K^f + osc_K^f)"""
        oscillation = report.oscillation if oscillation is None else oscillation
        neighborhoods = face_neighborhoods(self.mesh)
        local_error = np.array([np.sqrt(error_squares[n].sum()) for n in neighborhoods])
        denominator = local_error + oscillation
        with np.errstate(divide='ignore', invalid='ignore'):
            ratios = np.where(denominator > 0, report.eta_cells / denominator, np.nan)
        return ratios
