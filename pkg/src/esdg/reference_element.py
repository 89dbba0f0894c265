"""One-dimensional Legendre-Gauss-Lobatto collocation operators.

Every tensor-product element operator in the solver is built from the 1D
nodes, weights and nodal differentiation matrix returned here.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

MAX_ORDER = 32


@dataclass(frozen=True)
class ReferenceElement:
    """LGL nodes, quadrature weights and differentiation matrix of order ``N``.

    ``diff_matrix[i, j]`` is the derivative of the j-th Lagrange basis
    polynomial evaluated at node i.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray

    @property
    def nq(self):
        return self.order + 1

    def astype(self, dtype):
        dtype = np.dtype(dtype)
        return ReferenceElement(
            self.order,
            self.nodes.astype(dtype),
            self.weights.astype(dtype),
            self.diff_matrix.astype(dtype),
        )

    def spacing(self):
        """Distance between adjacent nodes, shape ``(nq - 1,)``."""
        return np.diff(self.nodes)


def legendre(n, x):
    """Return ``(P_n(x), P_n'(x))`` by the three-term recurrence."""
    x = np.asarray(x, dtype=np.float64)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    dp0, dp1 = np.zeros_like(x), np.ones_like(x)
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp0, dp1 = dp1, dp0 + (2 * k - 1) * p0
    return p1, dp1


def _lgl_interior_roots(n):
    # roots of P_n' interlace with the Gauss points (roots of P_n)
    gauss, _ = np.polynomial.legendre.leggauss(n)
    gauss = np.sort(gauss)
    half = [(a, b) for a, b in zip(gauss[:-1], gauss[1:]) if b > 0.0]
    roots = []
    for a, b in half:
        lo = max(a, 0.0)
        f = lambda x: legendre(n, x)[1]
        if lo == 0.0 and f(0.0) == 0.0:
            roots.append(0.0)
            continue
        roots.append(brentq(f, lo, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200))
    return np.array(roots)


def lgl_nodes_weights(n):
    """LGL nodes and weights in 64-bit, symmetric about zero by construction."""
    if n < 1:
        raise ValueError("LGL collocation needs order N >= 1 (at least two nodes per direction)")
    if n > MAX_ORDER:
        raise ValueError(f"order N={n} exceeds the supported maximum {MAX_ORDER}")
    pos = _lgl_interior_roots(n)
    pos = pos[pos >= 0.0]
    # mirror the non-negative half so nodes and weights are exactly symmetric
    right = np.concatenate([pos, [1.0]])
    if n % 2 == 0:
        interior_pos = right[right > 0.0]
        nodes = np.concatenate([-interior_pos[::-1], [0.0], interior_pos])
    else:
        nodes = np.concatenate([-right[::-1], right])
    nodes[0], nodes[-1] = -1.0, 1.0
    pn, _ = legendre(n, nodes)
    weights = 2.0 / (n * (n + 1) * pn**2)
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def differentiation_matrix(nodes):
    """Nodal differentiation matrix by barycentric Lagrange differentiation.

    The diagonal is the negative row sum of the off-diagonal entries, so the
    matrix annihilates constants to the last bit.
    """
    x = np.asarray(nodes, dtype=np.float64)
    n = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    d = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    d[np.arange(n), np.arange(n)] = -d.sum(axis=1)
    return d


def build_reference_element(order, dtype=np.float64):
    nodes, weights = lgl_nodes_weights(order)
    ref = ReferenceElement(order, nodes, weights, differentiation_matrix(nodes))
    return ref.astype(dtype)
