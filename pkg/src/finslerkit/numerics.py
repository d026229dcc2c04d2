"""Small numerical helpers shared by the probes."""

from __future__ import annotations

import numpy as np

__all__ = ["richardson", "cheb_nodes", "cheb_diff_matrix", "clenshaw_curtis"]


def richardson(values, ratio: float = 2.0, passes: int = 1, first_power: int = 1):
    """Richardson table for estimates taken at steps s, s/ratio, s/ratio^2, ...

    Assumes an error expansion ``c1 s^p + c2 s^(p+1) + ...`` with
    ``p = first_power``.  Returns the most refined entry after ``passes``
    eliminations together with the full last column.
    """
    col = np.asarray(values, dtype=float)
    for k in range(passes):
        if len(col) < 2:
            break
        f = ratio ** (first_power + k)
        col = (f * col[1:] - col[:-1]) / (f - 1.0)
    return col[-1], col


def cheb_nodes(a: float, b: float, n: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes on [a, b], increasing."""
    k = np.arange(n + 1)
    t = -np.cos(np.pi * k / n)
    return a + (b - a) * (t + 1) / 2


def cheb_diff_matrix(a: float, b: float, n: int) -> np.ndarray:
    """Spectral differentiation matrix on the nodes of :func:`cheb_nodes`."""
    k = np.arange(n + 1)
    x = -np.cos(np.pi * k / n)
    c = np.where((k == 0) | (k == n), 2.0, 1.0) * (-1.0) ** k
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D * 2.0 / (b - a)


def clenshaw_curtis(a: float, b: float, n: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the nodes of :func:`cheb_nodes`."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n ** 2 - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
        v -= np.cos(n * theta[1:-1]) / (n ** 2 - 1)
    else:
        w[0] = w[n] = 1.0 / n ** 2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
    w[1:-1] = 2 * v / n
    return w * (b - a) / 2
