"""
Convergence studies and the adaptive loop: uniform h-refinement, p-sweeps on a fixed mesh and
estimator-driven refinement with bulk (Doerfler) marking
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from config.run_config import RunConfig
from config.solver_config import RECONSTRUCTION_SETTINGS
from models.broken import BrokenField
from models.exceptions import ConfigError, ExactSolutionReached
from models.materials import DGConfig, MaterialModel
from models.mesh import Mesh
from models.refinement import refine, uniform_refine
from services.dg_service import DGSolverService, SharpField
from services.estimator_service import EstimatorService, IndicatorReport, effectivity
from services.manufactured_service import ManufacturedProblem, manufactured_problem
from services.reconstruction_service import ConformingField, ReconstructionService

logger = logging.getLogger(__name__)


def dorfler_mark(eta: np.ndarray, theta: float) -> np.ndarray:
    """
    Smallest set of cells with sum of eta_K^2 >= theta^2 sum eta^2. Cells are taken by
    decreasing indicator, ties by ascending index; theta = 1 marks every cell.
    """
    if not 0 < theta <= 1:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")
    eta = np.asarray(eta, dtype=float)
    if np.isclose(theta, 1.0):
        return np.arange(len(eta))
    squares = eta ** 2
    total = squares.sum()
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -squares))
    cumulative = np.cumsum(squares[order])
    count = int(np.searchsorted(cumulative, theta ** 2 * total)) + 1
    return np.sort(order[:min(count, len(eta))])


def convergence_rates(values: Sequence[float]) -> np.ndarray:
    """log2 quotients of successive entries (halved mesh size per row); NaN in the first row"""
    values = np.asarray(values, dtype=float)
    rates = np.full(len(values), np.nan)
    with np.errstate(divide='ignore', invalid='ignore'):
        rates[1:] = np.log2(values[:-1] / values[1:])
    return rates


def fit_growth_exponent(ps: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log(value) against log(p) by least squares; NaN with fewer than two finite points"""
    ps, values = np.asarray(ps, dtype=float), np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > 0)
    if keep.sum() < 2:
        return float('nan')
    slope, _ = np.polyfit(np.log(ps[keep]), np.log(values[keep]), 1)
    return float(slope)


@dataclass
class LevelResult:
    mesh: Mesh
    p: int
    E_h: BrokenField
    report: IndicatorReport
    solve_info: Dict[str, Any]
    solver: Optional[DGSolverService] = None
    E_c: Optional[ConformingField] = None
    row: Dict[str, Any] = field(default_factory=dict)


class StudyService:
    def __init__(self, config: RunConfig):
        self.config = config
        materials = config.materials()
        self.problem: ManufacturedProblem = manufactured_problem(
            config.problem, omega=config.omega,
            eps=materials['eps'] if np.isscalar(materials['eps']) else 1.0,
            nu=materials['nu'] if np.isscalar(materials['nu']) else 1.0,
        )
        if self.problem.has_exact_solution and not (np.isscalar(materials['eps']) and np.isscalar(materials['nu'])):
            raise ConfigError(f"problem '{self.problem.name}' has an exact solution only for constant eps and nu")
        self.material_settings = materials

    def materials_on(self, mesh: Mesh) -> MaterialModel:
        return MaterialModel.build(mesh, **self.material_settings)

    # -- one mesh, one degree ------------------------------------------------------------------
    def solve(self, mesh: Mesh, p: int) -> LevelResult:
        materials = self.materials_on(mesh)
        solver = DGSolverService(mesh, materials, DGConfig(p=p, eta_star=self.config.eta_value))
        E_h, info = solver.solve(self.problem.source)
        estimator = EstimatorService(mesh, materials, p)
        measure = None
        if self.problem.has_exact_solution:
            measure = solver.error_measure(self.problem.exact, E_h)['measure']
        report = estimator.indicators(E_h, self.problem.source,
                                      err_sharp=None if measure is None else measure.cell_values)
        result = LevelResult(mesh=mesh, p=p, E_h=E_h, report=report, solve_info=info, solver=solver)
        result.row = self._base_row(result, estimator, measure)
        return result

    def _base_row(self, result: LevelResult, estimator: EstimatorService, measure) -> Dict[str, Any]:
        totals = result.report.totals
        row = {
            'cells': result.mesh.num_cells,
            'h_max': result.mesh.h_max,
            'ndof': result.solve_info['ndof'],
            'eta_star': result.solve_info['eta_star'],
            'eta': totals['eta'],
            'eta_div': totals['eta_div'],
            'eta_curl': totals['eta_curl'],
            'eta_nc': totals['eta_nc'],
            'oscillation': float(np.sqrt((result.report.oscillation ** 2).sum())),
        }
        if measure is None:
            return row
        row['err_sharp'] = result.report.error_total
        try:
            row['effectivity'] = effectivity(result.report)
            row['exact'] = False
        except ExactSolutionReached:
            row['effectivity'] = float('nan')
            row['exact'] = True
        ratios = estimator.local_efficiency_ratios(result.report, measure.cell_squares)
        row['max_efficiency'] = float(np.nanmax(ratios)) if np.isfinite(ratios).any() else float('nan')
        return row

    def reconstruct(self, result: LevelResult, q: Optional[int] = None) -> LevelResult:
        service = ReconstructionService(result.mesh, q=q)
        E_c = service.reconstruct(result.E_h)
        ratios = service.theorem_ratios(result.E_h, E_c)
        result.E_c = E_c
        result.row.update({
            'q': E_c.q,
            'ratio_curl': _or_nan(ratios['ratio_curl']),
            'ratio_L2': _or_nan(ratios['ratio_L2']),
            'ratio_L2_poincare': _or_nan(ratios['ratio_L2_poincare']),
            'conforming_input': ratios['conforming_input'],
        })
        if self.problem.has_exact_solution:
            result.row.update(self.error_splitting(result))
        return result

    def error_splitting(self, result: LevelResult) -> Dict[str, float]:
        """||e_c||, ||e_nc|| with e_c = E - R(E_h), e_nc = R(E_h) - E_h, and the residual ratio"""
        solver, exact, E_c = result.solver, self.problem.exact, result.E_c.field
        e_c = SharpField(conforming=[exact, -E_c])
        e_nc = SharpField(broken=E_c - result.E_h)
        norm_c = solver.sharp_measure(e_c).total()
        norm_nc = solver.sharp_measure(e_nc).total()
        pairing = solver.extended_bilinear(SharpField(conforming=[exact], broken=-result.E_h), e_c)
        denominator = result.report.eta_dc * norm_c
        return {
            'e_c': norm_c,
            'e_nc': norm_nc,
            'residual_ratio': abs(pairing) / denominator if denominator > 0 else float('nan'),
        }

    # -- studies -------------------------------------------------------------------------------
    def study_h(self) -> pd.DataFrame:
        mesh = self.config.build_mesh()
        q = self.config.q
        rows = []
        for level in range(self.config.levels):
            if level:
                mesh = uniform_refine(mesh)
            result = self.reconstruct(self.solve(mesh, self.config.p), q)
            rows.append({'level': level, **result.row})
            logger.info(f"Level {level}: {mesh.num_cells} cells, eta={result.row['eta']:.4e}")
        frame = pd.DataFrame(rows)
        if 'err_sharp' in frame:
            frame['rate_err'] = convergence_rates(frame['err_sharp'])
        frame['rate_eta'] = convergence_rates(frame['eta'])
        return frame

    def study_p(self) -> pd.DataFrame:
        mesh = self.config.build_mesh()
        increment = self.config.q_increment or RECONSTRUCTION_SETTINGS['degree_increment']
        rows = []
        for p in range(1, self.config.p_max + 1):
            result = self.reconstruct(self.solve(mesh, p), p + increment)
            rows.append({'p': p, **result.row})
            logger.info(f"p={p}: ndof={result.row['ndof']}, eta={result.row['eta']:.4e}")
        return pd.DataFrame(rows)

    def adapt(self) -> pd.DataFrame:
        mesh = self.config.build_mesh()
        rows = []
        for iteration in range(self.config.levels):
            result = self.solve(mesh, self.config.p)
            marked = dorfler_mark(result.report.eta_cells, self.config.theta)
            row = {'iter': iteration, **result.row, 'marked': len(marked)}
            if self.problem.domain == 'lshape':
                row['corner_marked'] = bool(_touches_origin(mesh, marked))
            rows.append(row)
            logger.info(f"Adapt {iteration}: {mesh.num_cells} cells, eta={row['eta']:.4e}, marked {len(marked)}")
            if iteration == self.config.levels - 1:
                break
            mesh = uniform_refine(mesh) if len(marked) == mesh.num_cells else refine(mesh, marked)
        return pd.DataFrame(rows)


def growth_exponents(frame: pd.DataFrame) -> Dict[str, float]:
    """Fitted p-growth of the ratio columns of a p-study"""
    columns = ('ratio_curl', 'ratio_L2', 'ratio_L2_poincare', 'effectivity', 'max_efficiency')
    return {c: fit_growth_exponent(frame['p'], frame[c]) for c in columns if c in frame}


def _touches_origin(mesh: Mesh, cells: np.ndarray) -> bool:
    if len(cells) == 0:
        return False
    corner = np.flatnonzero(np.linalg.norm(mesh.vertices, axis=1) < 1e-12)
    return bool(np.isin(mesh.cells[cells], corner).any())


def _or_nan(value: Optional[float]) -> float:
    return float('nan') if value is None else float(value)
