"""
Hierarchical L2-orthonormal modal basis on the reference triangle.

The basis is obtained by a (twice repeated) Cholesky/Gram factorization of the mass matrix
of Legendre tensor products of total degree <= max_degree. The factor is upper triangular,
so the first (p+1)(p+2)/2 functions span P_p for every p: truncating a coefficient block
is the L2 projection onto lower degree and zero padding is exact degree elevation.

On a physical cell K with affine map x = P0 + J xi the basis is phi = phi_hat o F^{-1} / sqrt(det J),
which is orthonormal in L2(K).
"""
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from config.solver_config import BASIS_SETTINGS
from models.quadrature import triangle_rule


def basis_size(degree: int) -> int:
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


def barycentric(ref_points: np.ndarray) -> np.ndarray:
    """Reference barycentric coordinates (lambda_0, lambda_1, lambda_2) of local vertices"""
    ref_points = np.atleast_2d(ref_points)
    xi, eta = ref_points[:, 0], ref_points[:, 1]
    return np.column_stack([1.0 - xi - eta, xi, eta])


class ReferenceBasis:
    def __init__(self, max_degree: int):
        self.max_degree = int(max_degree)
        self.exponents = [(a, d - a) for d in range(self.max_degree + 1) for a in range(d, -1, -1)]
        D = self.max_degree
        derivative = np.polynomial.legendre.legder(np.eye(D + 1), axis=0)
        self._legendre_derivative = np.vstack([derivative, np.zeros((1, D + 1))])

        rule = triangle_rule(2 * D)
        start = self._start_values(rule.points)
        coefficients = np.eye(len(self.exponents))
        for _ in range(2):
            phi = start @ coefficients
            mass = (phi * rule.weights[:, None]).T @ phi
            factor = cholesky(mass, lower=True)
            inverse = solve_triangular(factor, np.eye(len(mass)), lower=True)
            coefficients = coefficients @ inverse.T
        self.coefficients = coefficients
        self.coefficients.flags.writeable = False

    def _legendre(self, ref_points):
        ref_points = np.atleast_2d(ref_points)
        x = 2.0 * ref_points[:, 0] - 1.0
        y = 2.0 * ref_points[:, 1] - 1.0
        vx = np.polynomial.legendre.legvander(x, self.max_degree)
        vy = np.polynomial.legendre.legvander(y, self.max_degree)
        return vx, vy

    def _start_values(self, ref_points, count=None):
        vx, vy = self._legendre(ref_points)
        exps = self.exponents[:count] if count is not None else self.exponents
        return np.column_stack([vx[:, a] * vy[:, b] for a, b in exps])

    def _start_gradients(self, ref_points, count):
        vx, vy = self._legendre(ref_points)
        dvx = 2.0 * vx @ self._legendre_derivative
        dvy = 2.0 * vy @ self._legendre_derivative
        exps = self.exponents[:count]
        gx = np.column_stack([dvx[:, a] * vy[:, b] for a, b in exps])
        gy = np.column_stack([vx[:, a] * dvy[:, b] for a, b in exps])
        return gx, gy

    def _check(self, degree):
        if degree > self.max_degree:
            raise ValueError(f"degree {degree} exceeds the modal basis limit {self.max_degree}")

    def values(self, ref_points: np.ndarray, degree: int) -> np.ndarray:
        """(npoints, nb) reference basis values"""
        self._check(degree)
        nb = basis_size(degree)
        if nb == 0:
            return np.zeros((len(np.atleast_2d(ref_points)), 0))
        return self._start_values(ref_points, nb) @ self.coefficients[:nb, :nb]

    def gradients(self, ref_points: np.ndarray, degree: int) -> np.ndarray:
        """(npoints, nb, 2) reference gradients"""
        self._check(degree)
        nb = basis_size(degree)
        gx, gy = self._start_gradients(ref_points, nb)
        c = self.coefficients[:nb, :nb]
        return np.stack([gx @ c, gy @ c], axis=-1)

    @lru_cache(maxsize=None)
    def cell_table(self, order: int, degree: int):
        """Values and gradients at the triangle rule of the given order (cached, read-only)"""
        rule = triangle_rule(order)
        vals = self.values(rule.points, degree)
        grads = self.gradients(rule.points, degree)
        vals.flags.writeable = False
        grads.flags.writeable = False
        return rule, vals, grads

    @lru_cache(maxsize=None)
    def derivative_matrices(self, out_degree: int, in_degree: int):
        """D_xi[i, j] = (phi_i, d_xi phi_j) and D_eta on the reference triangle"""
        order = out_degree + in_degree
        rule = triangle_rule(order)
        vo = self.values(rule.points, out_degree) * rule.weights[:, None]
        g = self.gradients(rule.points, in_degree)
        d_xi = vo.T @ g[:, :, 0]
        d_eta = vo.T @ g[:, :, 1]
        d_xi.flags.writeable = False
        d_eta.flags.writeable = False
        return d_xi, d_eta

    @lru_cache(maxsize=None)
    def hat_product_matrices(self, out_degree: int, in_degree: int):
        """M_k[i, j] = (phi_i, lambda_k phi_j) for the three barycentric coordinates"""
        rule = triangle_rule(out_degree + in_degree + 1)
        vo = self.values(rule.points, out_degree) * rule.weights[:, None]
        vi = self.values(rule.points, in_degree)
        lam = barycentric(rule.points)
        mats = tuple(vo.T @ (vi * lam[:, k][:, None]) for k in range(3))
        for m in mats:
            m.flags.writeable = False
        return mats


@lru_cache(maxsize=1)
def reference_basis() -> ReferenceBasis:
    return ReferenceBasis(BASIS_SETTINGS['max_degree'])
