"""
Quadrature rules on the reference triangle and the reference segment
"""
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray    # (n, dim) reference coordinates
    weights: np.ndarray   # (n,)
    order: int            # polynomial exactness

    @property
    def size(self) -> int:
        return len(self.weights)


def _gauss_legendre_unit(n: int):
    """Gauss-Legendre nodes and weights mapped to [0, 1]"""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def segment_rule(npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] with npoints nodes (exact to 2n - 1)"""
    s, w = _gauss_legendre_unit(max(1, npoints))
    for array in (s, w):
        array.flags.writeable = False
    return QuadratureRule(points=s, weights=w, order=2 * max(1, npoints) - 1)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """
    Collapsed (Duffy) Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    x = u, y = v (1 - u); the Jacobian (1 - u) raises the degree in u by one,
    so n = ceil((order + 2) / 2) points per direction integrate P_order exactly.
    """
    order = max(0, int(order))
    n = (order + 3) // 2
    u, wu = _gauss_legendre_unit(n)
    v, wv = _gauss_legendre_unit(n)
    uu, vv = np.meshgrid(u, v, indexing='ij')
    ww = np.outer(wu, wv) * (1.0 - uu)
    points = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    weights = ww.ravel()
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(points=points, weights=weights, order=order)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!"""
    return factorial(a) * factorial(b) / factorial(a + b + 2)
