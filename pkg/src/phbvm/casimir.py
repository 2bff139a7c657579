"""EPHBVM(k, s): PHBVM with a skew correction that also conserves Casimirs.

The stage polynomial is perturbed by ``-sum_l alpha_l Bt_l gamma_0`` where each
``Bt_l`` is a fixed skew-symmetric matrix. Skewness keeps the energy argument
intact for any ``alpha``; ``alpha`` itself is chosen so that the quadrature
approximation of ``C(y1) - C(y0)`` vanishes:

    M alpha = sum_i pi_i^T phi_i,     M[a, l] = pi_0[:, a]^T Bt_l gamma_0,

with ``pi_i = sum_l b_l P_i(c_l) grad C(Y_l)``. The coupled ``(phi, alpha)``
system is solved Gauss-Seidel style: each sweep of the chosen solver updates
the stage coefficients, and ``alpha`` is refreshed from the resulting stage
values before the next sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    ConvergenceError,
    SolverConfig,
    StepResult,
    Sweeper,
    _Monitor,
    effective_tol,
    evaluate_map,
)
from .problems import DomainError, PoissonSystem
from .tableau import MethodTableau

DEGENERACY_THRESHOLD = 1e-10


class DegenerateCasimirDirection(ArithmeticError):
    """The correction matrix ``M`` is (numerically) singular."""

    def __init__(self, message: str, casimir_index: int):
        super().__init__(message)
        self.casimir_index = casimir_index


@dataclass
class CasimirCorrection:
    Btilde: list
    alpha: np.ndarray
    pi_hat: np.ndarray
    M_hat: np.ndarray


def default_skew_matrix(m: int, ell: int) -> np.ndarray:
    """Elementary skew matrix ``E_pq - E_qp`` for the ``ell``-th index pair (1-based).

    Pairs are ordered lexicographically: (1,2), (1,3), ..., (1,m), (2,3), ...
    """
    if m < 2:
        raise ValueError("skew correction needs dimension m >= 2")
    pairs = [(p, q) for p in range(m) for q in range(p + 1, m)]
    if not 1 <= ell <= len(pairs):
        raise ValueError(f"pair index must be in 1..{len(pairs)}, got {ell}")
    p, q = pairs[ell - 1]
    out = np.zeros((m, m))
    out[p, q] = 1.0
    out[q, p] = -1.0
    return out


def default_skew_set(m: int, r: int, offset: int = 0) -> list[np.ndarray]:
    return [default_skew_matrix(m, ell + offset) for ell in range(1, r + 1)]


def casimir_fourier_coeffs(sys: PoissonSystem, tab: MethodTableau, Y: np.ndarray) -> np.ndarray:
    """Approximate Fourier coefficients of the Casimir gradients, shape ``(s, m, r)``."""
    if sys.r == 0:
        raise ValueError("system has no Casimirs")
    gC = sys.gradC_nodes(np.asarray(Y, dtype=float))
    return np.einsum("sk,kmr->smr", tab.PtOmega, gC)


def correction_matrix(pi_hat: np.ndarray, gamma0_hat: np.ndarray, Btilde: Sequence[np.ndarray]) -> np.ndarray:
    cols = [pi_hat[0].T @ (Bt @ gamma0_hat) for Bt in Btilde]
    return np.stack(cols, axis=1)


def alpha_update(
    pi_hat: np.ndarray,
    phi: np.ndarray,
    gamma0_hat: np.ndarray,
    Btilde: Sequence[np.ndarray],
    threshold: float = DEGENERACY_THRESHOLD,
) -> np.ndarray:
    """Solve ``M alpha = sum_i pi_i^T phi_i`` for the correction parameters.

    Raises:
        DegenerateCasimirDirection: when ``|pi_0^T Bt_l gamma_0|`` falls below
            ``threshold * |pi_0| |gamma_0|`` (one Casimir) or the row-scaled ``M`` is
            numerically singular (several).
    """
    num = np.einsum("smr,sm->r", pi_hat, phi)
    M = correction_matrix(pi_hat, gamma0_hat, Btilde)
    g = np.linalg.norm(gamma0_hat)
    row_scale = np.linalg.norm(pi_hat[0], axis=0) * g
    r = M.shape[0]
    if r == 1:
        if not abs(M[0, 0]) >= threshold * row_scale[0]:
            raise DegenerateCasimirDirection(
                f"Casimir 1: |pi_0^T Bt gamma_0| = {abs(M[0, 0]):.3e} is below the degeneracy threshold", 0
            )
        return num / M[0, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        Ms = M / row_scale[:, None]
    if not np.all(np.isfinite(Ms)) or abs(np.linalg.det(Ms)) < threshold:
        worst = int(np.argmin(np.where(np.isfinite(Ms), np.abs(Ms), 0.0).max(axis=1)))
        raise DegenerateCasimirDirection(
            f"Casimir {worst + 1}: correction matrix is singular for the chosen skew matrices", worst
        )
    return np.linalg.solve(M, num)


def _solve_with_casimir(sys, tab, y0, h, cfg, Btilde, phi0=None, freeze_alpha=False):
    # The unknown is psi = phi - e_0 (x) d with d = sum_l alpha_l Bt_l gamma_0, so
    # that Y = e (x) y0 + h I psi (the shift -h c d is the first column of I times d).
    # alpha is recomputed from the same stage values on every evaluation.
    r = sys.r
    sweeper = Sweeper(sys, tab, y0, h, cfg)
    mon = _Monitor(effective_tol(cfg, y0), cfg.max_iter)
    psi = np.zeros((tab.s, sys.m)) if phi0 is None else np.array(phi0, dtype=float)
    while True:
        try:
            G, Y, gamma = evaluate_map(sys, tab, y0, h, psi)
        except DomainError:
            if not mon.history:
                raise
            mon.abort()
            break
        pi_hat = casimir_fourier_coeffs(sys, tab, Y)
        if freeze_alpha:
            alpha, d, Gt = np.zeros(r), np.zeros(sys.m), G
        else:
            alpha = alpha_update(pi_hat, G, gamma[0], Btilde)
            d = sum(a * (Bt @ gamma[0]) for a, Bt in zip(alpha, Btilde))
            Gt = G.copy()
            Gt[0] -= d
        F = psi - Gt
        res = float(np.max(np.abs(F)))
        if mon.check(res, 1.0 + float(np.max(np.abs(psi)))):
            if mon.converged:
                psi = sweeper.update(psi, F)
            break
        psi = sweeper.update(psi, F)
    corr = CasimirCorrection(list(Btilde), alpha, pi_hat, correction_matrix(pi_hat, gamma[0], Btilde))
    return psi, d, mon, corr


def step_with_casimir(
    sys: PoissonSystem,
    tab: MethodTableau,
    y0,
    h: float,
    cfg: SolverConfig = SolverConfig(),
    phi0=None,
    Btilde: Optional[Sequence[np.ndarray]] = None,
    freeze_alpha: bool = False,
) -> StepResult:
    """Advance one EPHBVM(k, s) step: ``y1 = y0 + h (phi_0 - sum_l alpha_l Bt_l gamma_0)``.

    ``Btilde`` overrides ``sys.casimir_skew``; if neither is set the elementary
    skew basis is used, and a degenerate choice is retried once with the basis
    shifted by one pair. ``freeze_alpha`` pins ``alpha = 0`` (plain PHBVM).

    Raises:
        DegenerateCasimirDirection: if the correction matrix stays singular.
        ConvergenceError: if the coupled iteration does not converge.
    """
    if sys.r == 0:
        raise ValueError("EPHBVM needs a system with at least one Casimir")
    y0 = np.asarray(y0, dtype=float)
    if h == 0.0:
        return StepResult(y0.copy(), 0, 0.0, alpha=np.zeros(sys.r), phi=np.zeros((tab.s, sys.m)), H_defect=0.0)

    explicit = Btilde if Btilde is not None else sys.casimir_skew
    if explicit is not None:
        candidates = [list(explicit)]
    else:
        n_pairs = sys.m * (sys.m - 1) // 2
        candidates = [default_skew_set(sys.m, sys.r)]
        if sys.r + 1 <= n_pairs:
            candidates.append(default_skew_set(sys.m, sys.r, offset=1))
    for Bt in candidates:
        if len(Bt) != sys.r:
            raise ValueError(f"need {sys.r} skew matrices, got {len(Bt)}")
        for B in Bt:
            if np.any(B != -B.T) or not np.any(B):
                raise ValueError("correction matrices must be nonzero and exactly skew-symmetric")

    last_err = None
    for Bt in candidates:
        try:
            psi, d, mon, corr = _solve_with_casimir(sys, tab, y0, h, cfg, Bt, phi0, freeze_alpha)
        except DegenerateCasimirDirection as err:
            last_err = err
            continue
        y1 = y0 + h * psi[0]
        phi = psi.copy()
        phi[0] += d
        result = StepResult(y1, len(mon.history), mon.residual, alpha=corr.alpha, converged=mon.converged,
                            stagnated=mon.stagnated, phi=phi, correction=corr)
        if not mon.converged:
            raise ConvergenceError(
                f"EPHBVM {cfg.solver} iteration failed: residual {mon.residual:.3e} after {len(mon.history)} iterations",
                result,
            )
        return result
    raise last_err
