"""
Run Configuration
Per-run settings of the command line driver, read from `key = value` files and command-line flags
"""
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from config.solver_config import OUTPUT_SETTINGS, STUDY_SETTINGS
from models.exceptions import ConfigError
from models.mesh import Mesh, l_shape_mesh, read_mesh, uniform_square_mesh

logger = logging.getLogger(__name__)

COMMANDS = ('solve', 'estimate', 'reconstruct', 'study-h', 'study-p', 'adapt', 'verify')

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass
class RunConfig:
    command: str = 'solve'
    mesh: Optional[str] = None
    square: Optional[int] = None
    lshape: Optional[int] = None
    p: int = 1
    q: Optional[int] = None
    omega: float = 1.0
    eps: str = '1'
    nu: str = '1'
    eta_star: str = 'auto'
    levels: int = STUDY_SETTINGS['default_levels']
    theta: float = STUDY_SETTINGS['default_theta']
    p_max: int = STUDY_SETTINGS['p_max']
    problem: str = STUDY_SETTINGS['default_problem']
    seed: int = 0
    out: str = OUTPUT_SETTINGS['default_directory']
    field: Optional[str] = None
    flip_orientation: bool = False

    def validate(self) -> 'RunConfig':
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}'")
        sources = [s for s in ('mesh', 'square', 'lshape') if getattr(self, s) is not None]
        if len(sources) > 1:
            raise ConfigError(f"choose one mesh source, got {', '.join(sources)}")
        for name in ('square', 'lshape'):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.mesh is not None and not Path(self.mesh).exists():
            raise ConfigError(f"mesh file '{self.mesh}' not found")
        if self.p < 0:
            raise ConfigError(f"p must be >= 0, got {self.p}")
        if self.q is not None and self.q < self.p + 1:
            raise ConfigError(f"q must be at least p+1 = {self.p + 1}, got {self.q}")
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.eta_star != 'auto':
            try:
                if not float(self.eta_star) > 0:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"eta_star must be 'auto' or a positive number, got '{self.eta_star}'")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if not 0 < self.theta <= 1:
            raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
        if not 1 <= self.p_max <= STUDY_SETTINGS['p_max']:
            raise ConfigError(f"p_max must lie in [1, {STUDY_SETTINGS['p_max']}], got {self.p_max}")
        parse_coefficient(self.eps, 'eps')
        parse_coefficient(self.nu, 'nu')
        return self

    @property
    def eta_value(self) -> Union[float, str]:
        return 'auto' if self.eta_star == 'auto' else float(self.eta_star)

    @property
    def q_increment(self) -> Optional[int]:
        return None if self.q is None else self.q - self.p

    def build_mesh(self) -> Mesh:
        """Mesh from the configured source; defaults follow the problem's domain"""
        if self.mesh is not None:
            return read_mesh(self.mesh)
        if self.lshape is not None:
            return l_shape_mesh(self.lshape)
        if self.square is not None:
            return uniform_square_mesh(self.square)
        if self.problem == 'lshape':
            return l_shape_mesh(1)
        return uniform_square_mesh(2)

    def materials(self) -> Dict[str, Any]:
        return {
            'eps': parse_coefficient(self.eps, 'eps'),
            'nu': parse_coefficient(self.nu, 'nu'),
            'omega': self.omega,
        }

    def echo(self) -> Dict[str, Any]:
        return asdict(self)


# -- coefficients ----------------------------------------------------------------------------------
def parse_coefficient(text: str, name: str) -> Coefficient:
    """
    `value` or `value | x0:x1,y0:y1=value | ...`: a base value with box overrides,
    applied in order at cell centroids
    """
    parts = [part.strip() for part in str(text).split('|')]
    try:
        base = float(parts[0])
    except ValueError:
        raise ConfigError(f"{name}: invalid base value '{parts[0]}'")
    regions: List[Tuple[float, float, float, float, float]] = []
    for part in parts[1:]:
        try:
            box, value = part.split('=')
            xs, ys = box.split(',')
            x0, x1 = (float(t) for t in xs.split(':'))
            y0, y1 = (float(t) for t in ys.split(':'))
            regions.append((x0, x1, y0, y1, float(value)))
        except ValueError:
            raise ConfigError(f"{name}: invalid region '{part}', expected x0:x1,y0:y1=value")
    values = [base] + [r[4] for r in regions]
    if min(values) <= 0:
        raise ConfigError(f"{name} must be positive")
    if not regions:
        return base

    def evaluate(points: np.ndarray) -> np.ndarray:
        out = np.full(len(points), base)
        for x0, x1, y0, y1, value in regions:
            inside = (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)
            out[inside] = value
        return out
    return evaluate


# -- files and overrides ---------------------------------------------------------------------------
def _field_types() -> Dict[str, Any]:
    return {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, line_number: Optional[int] = None):
    kind = _field_types()[key]
    where = f"line {line_number}: " if line_number is not None else ""
    try:
        if kind in (bool, 'bool'):
            lowered = raw.strip().lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError
            return lowered in ('true', '1', 'yes')
        if kind in (int, 'int') or kind == Optional[int]:
            return int(raw)
        if kind in (float, 'float'):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}invalid value '{raw}' for '{key}'")


def parse_config_text(text: str) -> Dict[str, Any]:
    values = {}
    known = _field_types()
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        if '=' not in stripped:
            raise ConfigError(f"line {number}: expected 'key = value'")
        key, raw = (t.strip() for t in stripped.split('=', 1))
        key = key.replace('-', '_')
        if key not in known:
            raise ConfigError(f"line {number}: unknown key '{key}'")
        values[key] = _convert(key, raw, number)
    return values


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """File values first, then every non-None override; validated before returning"""
    values: Dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file '{path}' not found")
        values.update(parse_config_text(Path(path).read_text()))
    known = _field_types()
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown option '{key}'")
        if value is not None:
            values[key] = value
    config = RunConfig(**values).validate()
    logger.debug(f"Run configuration: {config.echo()}")
    return config
