"""
Gallery of manufactured curl-curl problems built symbolically with sympy.

For an exact field E with zero tangential trace, the load is J = omega^2 eps E + rot(nu curl E)
with the 2D reductions curl E = dx E2 - dy E1 and rot phi = (dy phi, -dx phi).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import sympy as sp

from models.exceptions import ConfigError
from models.materials import SourceTerm
from services.dg_service import AnalyticField

logger = logging.getLogger(__name__)

x, y = sp.symbols('x y', real=True)


def _scalar_function(expression) -> Callable[[np.ndarray], np.ndarray]:
    compiled = sp.lambdify((x, y), expression, 'numpy')

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.broadcast_to(np.asarray(compiled(points[:, 0], points[:, 1]), dtype=float),
                               (len(points),)).copy()
    return evaluate


def _vector_function(components) -> Callable[[np.ndarray], np.ndarray]:
    first, second = (_scalar_function(c) for c in components)
    return lambda points: np.column_stack([first(points), second(points)])


def curl(field):
    return sp.diff(field[1], x) - sp.diff(field[0], y)


def rot(phi):
    return (sp.diff(phi, y), -sp.diff(phi, x))


def divergence(field):
    return sp.diff(field[0], x) + sp.diff(field[1], y)


@dataclass
class ManufacturedProblem:
    name: str
    domain: str                       # 'square' or 'lshape'
    source: SourceTerm
    exact: Optional[AnalyticField]
    expressions: Dict[str, object]

    @property
    def has_exact_solution(self) -> bool:
        return self.exact is not None


def _from_exact(name: str, field, omega: float, eps: float, nu: float) -> ManufacturedProblem:
    curl_e = sp.simplify(curl(field))
    rot_curl = rot(nu * curl_e)
    load = tuple(sp.simplify(omega ** 2 * eps * field[i] + rot_curl[i]) for i in range(2))
    div_load = sp.simplify(divergence(load))
    source = SourceTerm(J=_vector_function(load), div_J=_scalar_function(div_load), name=name)
    exact = AnalyticField(values=_vector_function(field), curl=_scalar_function(curl_e))
    logger.debug(f"Manufactured problem '{name}': J = {load}, div J = {div_load}")
    return ManufacturedProblem(name=name, domain='square', source=source, exact=exact,
                               expressions={'E': field, 'curl_E': curl_e, 'J': load, 'div_J': div_load})


def polynomial_problem(omega: float = 1.0, eps: float = 1.0, nu: float = 1.0) -> ManufacturedProblem:
    """E = (y(1-y), x(1-x)): in P2 with zero tangential trace on the unit square"""
    return _from_exact('polynomial', (y * (1 - y), x * (1 - x)), omega, eps, nu)


def trig_problem(omega: float = 1.0, eps: float = 1.0, nu: float = 1.0) -> ManufacturedProblem:
    """E = (sin(pi x) sin(pi y), sin(pi x) sin(pi y))"""
    bubble = sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
    return _from_exact('trig', (bubble, bubble), omega, eps, nu)


def lshape_problem(omega: float = 1.0, eps: float = 1.0, nu: float = 1.0) -> ManufacturedProblem:
    """Constant load on the L-shaped domain; the solution is singular at the reentrant corner"""
    load = (sp.Integer(1), sp.Integer(0))
    source = SourceTerm(J=_vector_function(load), div_J=_scalar_function(sp.Integer(0)), name='lshape')
    return ManufacturedProblem(name='lshape', domain='lshape', source=source, exact=None,
                               expressions={'J': load, 'div_J': sp.Integer(0)})


PROBLEMS = {
    'polynomial': polynomial_problem,
    'trig': trig_problem,
    'lshape': lshape_problem,
}


def manufactured_problem(name: str, omega: float = 1.0, eps: float = 1.0, nu: float = 1.0) -> ManufacturedProblem:
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem '{name}', choose from {sorted(PROBLEMS)}")
    return PROBLEMS[name](omega=omega, eps=eps, nu=nu)
