"""Orthonormal shifted Legendre polynomials on [0, 1] and Gauss-Legendre rules.

The basis is normalised so that ``int_0^1 P_i(x) P_j(x) dx = delta_ij``, i.e.
``P_j(x) = sqrt(2j + 1) L_j(2x - 1)`` with ``L_j`` the classical Legendre
polynomial. Every tableau formula elsewhere in the package assumes this
normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_NODES = 32


def _xi(i: int) -> float:
    return 1.0 / (2.0 * math.sqrt(abs(4 * i * i - 1)))


def legendre_table(n: int, c) -> np.ndarray:
    """Values ``P_0(c), ..., P_n(c)`` stacked along the first axis.

    ``c`` may be a scalar or an array; the result has shape ``(n + 1,) + shape(c)``.
    """
    t = 2.0 * np.asarray(c, dtype=float) - 1.0
    out = np.empty((n + 1,) + t.shape)
    # classical three-term recurrence, scaled to unit norm at the end
    l_prev = np.ones_like(t)
    out[0] = l_prev
    if n >= 1:
        l_cur = t.copy()
        out[1] = l_cur
        for j in range(1, n):
            l_next = ((2 * j + 1) * t * l_cur - j * l_prev) / (j + 1)
            l_prev, l_cur = l_cur, l_next
            out[j + 1] = l_cur
    scale = np.sqrt(2.0 * np.arange(n + 1) + 1.0)
    return out * scale.reshape((-1,) + (1,) * t.ndim)


def eval_legendre(j: int, c):
    """Evaluate the orthonormal shifted Legendre polynomial ``P_j`` at ``c``."""
    if j < 0:
        raise ValueError(f"degree must be nonnegative, got {j}")
    val = legendre_table(j, c)[j]
    return float(val) if np.ndim(val) == 0 else val


def eval_legendre_antiderivative(j: int, c):
    """Return ``int_0^c P_j(x) dx``.

    Uses the closed form ``xi_{j+1} P_{j+1}(c) - xi_j P_{j-1}(c)`` for ``j >= 1``
    and ``xi_0 + xi_1 P_1(c) = c`` for ``j = 0``, where
    ``xi_i = 1 / (2 sqrt(|4 i^2 - 1|))``.
    """
    if j < 0:
        raise ValueError(f"degree must be nonnegative, got {j}")
    if j == 0:
        val = np.asarray(c, dtype=float).copy()
    else:
        tab = legendre_table(j + 1, c)
        val = _xi(j + 1) * tab[j + 1] - _xi(j) * tab[j - 1]
    return float(val) if np.ndim(val) == 0 else val


def antiderivative_table(n: int, c) -> np.ndarray:
    """Values ``int_0^c P_j`` for ``j = 0..n`` stacked along the first axis."""
    c = np.asarray(c, dtype=float)
    tab = legendre_table(n + 1, c)
    out = np.empty((n + 1,) + c.shape)
    out[0] = c
    for j in range(1, n + 1):
        out[j] = _xi(j + 1) * tab[j + 1] - _xi(j) * tab[j - 1]
    return out


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [0, 1] with ``k`` nodes sorted ascending."""

    k: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _classical_with_derivative(k: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    l_prev = np.ones_like(t)
    l_cur = t.copy()
    for j in range(1, k):
        l_prev, l_cur = l_cur, ((2 * j + 1) * t * l_cur - j * l_prev) / (j + 1)
    # L_k'(t) = k (t L_k - L_{k-1}) / (t^2 - 1); interior roots only
    dl = k * (t * l_cur - l_prev) / (t * t - 1.0)
    return l_cur, dl


def gauss_rule(k: int) -> QuadratureRule:
    """Gauss-Legendre nodes and weights on [0, 1], exact up to degree ``2k - 1``.

    Nodes come from Newton's method on ``L_k`` started at the Tricomi-type
    guesses ``cos(pi (i - 1/4) / (k + 1/2))`` and are symmetrised pairwise so that
    ``c_{k-i+1} = 1 - c_i`` holds bit for bit.

    Raises:
        ValueError: if ``k`` is outside ``1..MAX_NODES``.
    """
    if not 1 <= k <= MAX_NODES:
        raise ValueError(f"node count must be in 1..{MAX_NODES}, got {k}")
    if k == 1:
        return QuadratureRule(1, np.array([0.5]), np.array([1.0]))

    i = np.arange(1, k + 1)
    t = np.cos(np.pi * (i - 0.25) / (k + 0.5))
    for _ in range(100):
        lk, dl = _classical_with_derivative(k, t)
        dt = lk / dl
        t = t - dt
        if np.max(np.abs(dt)) < 1e-16:
            break
    # one more polish step with converged iterate
    lk, dl = _classical_with_derivative(k, t)
    t = t - lk / dl
    _, dl = _classical_with_derivative(k, t)
    w = 2.0 / ((1.0 - t * t) * dl * dl)

    # t is descending; map to ascending nodes on [0,1]
    t = -t
    t = 0.5 * (t - t[::-1])
    if k % 2 == 1:
        t[k // 2] = 0.0
    w = 0.5 * (w + w[::-1])
    nodes = 0.5 * (1.0 + t)
    # enforce c_{k-i+1} = 1 - c_i exactly in floating point
    half = k // 2
    nodes[k - half:] = 1.0 - nodes[:half][::-1]
    weights = 0.5 * w
    return QuadratureRule(k, nodes, weights)
