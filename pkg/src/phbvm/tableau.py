"""Per-method matrices for PHBVM(k, s).

For a ``k``-point Gauss-Legendre rule with nodes ``c`` and weights ``b``:

* ``P[i, j] = P_j(c_i)``                  (k x s)
* ``I[i, j] = int_0^{c_i} P_j(x) dx``     (k x s)
* ``Omega = diag(b)``
* ``X = P^T Omega I``, which is tridiagonal with ``X[0, 0] = 1/2`` and
  off-diagonal entries ``+-xi_i``, ``xi_i = 1 / (2 sqrt(4 i^2 - 1))``.

``lambda_s`` is the smallest modulus among the eigenvalues of ``X``; it is the
only scalar the blended iteration needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .legendre import MAX_NODES, QuadratureRule, antiderivative_table, gauss_rule, legendre_table, _xi


@dataclass(frozen=True)
class MethodTableau:
    k: int
    s: int
    rule: QuadratureRule
    P: np.ndarray
    I: np.ndarray
    X: np.ndarray
    Xinv: np.ndarray
    lambda_s: float

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.rule.weights

    @property
    def PtOmega(self) -> np.ndarray:
        """``P^T Omega`` (s x k): maps node values to approximate Fourier coefficients."""
        return self.P.T * self.rule.weights


def x_matrix(s: int) -> np.ndarray:
    """Closed-form tridiagonal matrix ``X_s``."""
    X = np.zeros((s, s))
    X[0, 0] = _xi(0)
    for i in range(1, s):
        X[i, i - 1] = _xi(i)
        X[i - 1, i] = -_xi(i)
    return X


def _hessenberg(A: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form (similarity transform)."""
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    for j in range(n - 2):
        x = H[j + 1:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[j + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[j + 1:, :])
        H[:, j + 1:] -= 2.0 * np.outer(H[:, j + 1:] @ v, v.conj())
    return H


def _givens(a: complex, b: complex) -> tuple[complex, complex, float]:
    m = max(abs(a), abs(b))
    if m == 0.0:
        return 1.0, 0.0, 0.0
    a, b = a / m, b / m
    r = np.hypot(abs(a), abs(b))
    return a / r, b / r, m * r


def qr_eigenvalues(A: np.ndarray, max_sweeps: int = 10000) -> np.ndarray:
    """Eigenvalues of a small dense matrix by shifted Hessenberg QR.

    Complex arithmetic with Wilkinson shifts and deflation from the bottom, so
    conjugate pairs of equal modulus do not stall the iteration.
    """
    A = np.asarray(A)
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if scale == 0.0:
        return np.zeros(A.shape[0], dtype=complex)
    # work at unit scale so subnormal or huge entries do not break deflation
    A = A / scale
    A = np.where(np.abs(A) < 1e-290, 0.0, A)
    H = _hessenberg(A)
    H[np.abs(H) < 1e-290] = 0.0
    n = H.shape[0]
    eigs = []
    hi = n
    sweeps = 0
    while hi > 0:
        if hi == 1:
            eigs.append(H[0, 0])
            break
        # look for a negligible subdiagonal
        if abs(H[hi - 1, hi - 2]) <= 1e-16 * (abs(H[hi - 1, hi - 1]) + abs(H[hi - 2, hi - 2]) + 1e-300):
            eigs.append(H[hi - 1, hi - 1])
            hi -= 1
            continue
        if sweeps >= max_sweeps:
            raise RuntimeError("QR iteration failed to converge")
        sweeps += 1
        a, b, c, d = H[hi - 2, hi - 2], H[hi - 2, hi - 1], H[hi - 1, hi - 2], H[hi - 1, hi - 1]
        tr, det = a + d, a * d - b * c
        disc = np.sqrt(tr * tr / 4.0 - det + 0j)
        mu1, mu2 = tr / 2.0 + disc, tr / 2.0 - disc
        mu = mu1 if abs(mu1 - d) < abs(mu2 - d) else mu2
        if sweeps % 11 == 0:
            # exceptional shift against cycling
            mu = d + abs(c)
        act = H[:hi, :hi]
        act -= mu * np.eye(hi)
        rots = []
        for j in range(hi - 1):
            cs, sn, r = _givens(act[j, j], act[j + 1, j])
            G = np.array([[np.conj(cs), np.conj(sn)], [-sn, cs]])
            act[j:j + 2, j:] = G @ act[j:j + 2, j:]
            rots.append(G)
        for j, G in enumerate(rots):
            act[:j + 2, j:j + 2] = act[:j + 2, j:j + 2] @ G.conj().T
        act += mu * np.eye(hi)
    return scale * np.array(eigs[::-1])


def min_modulus_eigenvalue(X: np.ndarray) -> float:
    """Smallest ``|lambda|`` over the (complex) spectrum of ``X``.

    Raises:
        ValueError: if ``X`` is singular.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != X.shape[1]:
        raise ValueError("matrix must be square")
    eigs = qr_eigenvalues(X)
    lam = float(np.min(np.abs(eigs)))
    if lam <= 1e-14 * max(1.0, float(np.max(np.abs(X)))):
        raise ValueError("matrix is singular")
    return lam


def build_tableau(k: int, s: int) -> MethodTableau:
    """Assemble the tableau for PHBVM(k, s).

    ``X`` is taken from its closed form and cross-checked against ``P^T Omega I``.
    Results are not cached here; callers build once and share.

    Raises:
        ValueError: if not ``1 <= s <= k <= MAX_NODES``.
    """
    if not 1 <= s:
        raise ValueError(f"s must be positive, got {s}")
    if s > k:
        raise ValueError(f"PHBVM(k, s) requires k >= s, got k={k}, s={s}")
    if k > MAX_NODES:
        raise ValueError(f"k must be at most {MAX_NODES}, got {k}")
    rule = gauss_rule(k)
    P = legendre_table(s - 1, rule.nodes).T.copy()
    Iint = antiderivative_table(s - 1, rule.nodes).T.copy()
    X = x_matrix(s)
    X_quad = (P.T * rule.weights) @ Iint
    err = np.max(np.abs(X_quad - X))
    if err > 1e-12:
        raise ArithmeticError(f"closed-form X_s disagrees with P^T Omega I by {err:.3e}")
    Xinv = scipy.linalg.lu_solve(scipy.linalg.lu_factor(X), np.eye(s))
    for arr in (P, Iint, X, Xinv):
        arr.setflags(write=False)
    return MethodTableau(k, s, rule, P, Iint, X, Xinv, min_modulus_eigenvalue(X))
