"""
Material coefficients, discretization settings and source data of the curl-curl problem
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from config.solver_config import DG_SETTINGS
from models.broken import Evaluable, edge_maxima
from models.exceptions import ConfigError, DegreeTooLowError
from models.mesh import Mesh

Coefficient = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _per_cell(mesh: Mesh, value: Coefficient, name: str) -> np.ndarray:
    if callable(value):
        values = np.asarray(value(mesh.centroids), dtype=float)
    else:
        values = np.broadcast_to(np.asarray(value, dtype=float), (mesh.num_cells,)).copy()
    if values.shape != (mesh.num_cells,):
        raise ConfigError(f"{name} must give one value per cell")
    if not np.all(values > 0):
        raise ConfigError(f"{name} must be positive on every cell")
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class MaterialModel:
    """Piecewise-constant eps and nu per cell and the frequency omega"""
    eps: np.ndarray
    nu: np.ndarray
    omega: float
    edge_eps: np.ndarray
    edge_nu: np.ndarray

    @classmethod
    def build(cls, mesh: Mesh, eps: Coefficient = 1.0, nu: Coefficient = 1.0,
              omega: float = 1.0) -> 'MaterialModel':
        if not omega > 0:
            raise ConfigError(f"omega must be positive, got {omega}")
        eps_k = _per_cell(mesh, eps, 'eps')
        nu_k = _per_cell(mesh, nu, 'nu')
        return cls(eps=eps_k, nu=nu_k, omega=float(omega),
                   edge_eps=edge_maxima(mesh, eps_k), edge_nu=edge_maxima(mesh, nu_k))

    @property
    def omega2(self) -> float:
        return self.omega ** 2


@dataclass
class DGConfig:
    p: int
    eta_star: Union[float, str] = DG_SETTINGS['eta_star']
    tolerance: float = DG_SETTINGS['solver_tolerance']
    max_iterations: int = DG_SETTINGS['max_iterations']

    def __post_init__(self):
        if self.p < 1:
            raise DegreeTooLowError(f"the dG scheme needs p >= 1, got p = {self.p}")
        if self.eta_star != 'auto' and not float(self.eta_star) > 0:
            raise ConfigError(f"eta_star must be positive or 'auto', got {self.eta_star}")
        if not self.tolerance > 0:
            raise ConfigError("solver tolerance must be positive")

    @property
    def is_auto(self) -> bool:
        return self.eta_star == 'auto'


@dataclass
class SourceTerm:
    """Load J with its analytic divergence when available"""
    J: Evaluable
    div_J: Optional[Evaluable] = None
    name: str = field(default='custom')

    @property
    def has_divergence(self) -> bool:
        return self.div_J is not None
