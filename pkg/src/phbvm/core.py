"""One step of PHBVM(k, s) for a Poisson system.

The unknown is the block vector ``phi = (phi_0, ..., phi_{s-1})`` (stored as an
``(s, m)`` array). Given ``phi`` the stage values are

    Y_l = y0 + h * sum_i I[l, i] phi_i,

and the method requires ``phi = G(phi)`` with ``G`` evaluated node by node:

    gamma_j = sum_l b_l P_j(c_l) gradH(Y_l)          (approximate Fourier coefficients)
    w_l     = sum_{j<s} P_j(c_l) gamma_j             (projected gradient at node l)
    G_i     = sum_l b_l P_i(c_l) B(Y_l) w_l.

The new state is ``y1 = y0 + h phi_0``. The block matrix of the coefficients
``rho_ij`` is never formed; :func:`rho_hat` builds it for diagnostics only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .problems import DEFAULT_FD_STEP, DomainError, PoissonSystem, jacobian
from .tableau import MethodTableau

SOLVERS = ("fixed_point", "newton", "blended")

# stagnation is only accepted below this multiple of the residual scale
_ROUNDOFF_LEVEL = 1e-11
_STAGNATION_RUN = 3
_DIVERGENCE_FACTOR = 1e8


class ConvergenceError(RuntimeError):
    """Nonlinear iteration failed; carries the offending :class:`StepResult`."""

    def __init__(self, message: str, result: "StepResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    """Nonlinear solver settings.

    ``tol`` is relative: the iteration stops once the max-norm of the residual is
    at most ``tol * (1 + |y0|_inf)``, or once the residual stagnates at roundoff
    level.
    """

    solver: str = "blended"
    tol: float = 1e-14
    max_iter: int = 100
    fd_step: float = DEFAULT_FD_STEP
    warm_start: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class StageState:
    phi: np.ndarray
    Y: np.ndarray
    gamma_hat: np.ndarray


@dataclass
class SolveStats:
    iterations: int
    residual_norm: float
    converged: bool
    stagnated: bool = False
    tol: float = 0.0


@dataclass
class StepResult:
    y1: np.ndarray
    iterations: int
    residual_norm: float
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: bool = True
    stagnated: bool = False
    phi: Optional[np.ndarray] = None
    H_defect: float = float("nan")
    C_defect: np.ndarray = field(default_factory=lambda: np.zeros(0))
    correction: Optional[object] = None


def stage_values(phi: np.ndarray, y0: np.ndarray, h: float, tab: MethodTableau) -> np.ndarray:
    """Stage values ``Y = e (x) y0 + h (I (x) I_m) phi`` as a ``(k, m)`` array."""
    return np.asarray(y0, dtype=float)[None, :] + h * (tab.I @ np.asarray(phi, dtype=float))


def evaluate_map(
    sys: PoissonSystem,
    tab: MethodTableau,
    y0: np.ndarray,
    h: float,
    phi: np.ndarray,
    shift: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(G(phi), Y, gamma_hat)``.

    ``shift`` is an optional ``(k, m)`` correction added to the stage values (used
    by the Casimir-conserving variant).
    """
    Y = stage_values(phi, y0, h, tab)
    if shift is not None:
        Y = Y + shift
    gH = sys.gradH_nodes(Y)
    PtO = tab.PtOmega
    gamma = PtO @ gH
    w = tab.P @ gamma
    v = np.einsum("lij,lj->li", sys.B_nodes(Y), w)
    return PtO @ v, Y, gamma


def residual(sys: PoissonSystem, tab: MethodTableau, y0, h: float, phi) -> np.ndarray:
    """``F(phi) = phi - G(phi)`` as an ``(s, m)`` array."""
    phi = np.asarray(phi, dtype=float)
    G, _, _ = evaluate_map(sys, tab, np.asarray(y0, dtype=float), h, phi)
    return phi - G


def rho_hat(sys: PoissonSystem, tab: MethodTableau, Y: np.ndarray) -> np.ndarray:
    """Materialise ``rho_ij = sum_l b_l P_i(c_l) P_j(c_l) B(Y_l)``, shape ``(s, s, m, m)``.

    Diagnostic only; the solvers never build it.
    """
    Bn = sys.B_nodes(np.asarray(Y, dtype=float))
    wPP = np.einsum("l,li,lj->ijl", tab.weights, tab.P, tab.P)
    return np.einsum("ijl,lab->ijab", wPP, Bn)


class Sweeper:
    """One update ``phi -> phi_new`` of the selected solver, given the residual.

    Factorisations depend only on ``F'(y0)`` and ``h`` and are done once here.
    """

    def __init__(self, sys: PoissonSystem, tab: MethodTableau, y0: np.ndarray, h: float, cfg: SolverConfig):
        self.kind = cfg.solver
        m, s = sys.m, tab.s
        self.m, self.s = m, s
        if self.kind == "fixed_point":
            return
        J = jacobian(sys, y0, cfg.fd_step)
        if self.kind == "newton":
            M = np.eye(s * m) - h * np.kron(tab.X, J)
            self._lu = scipy.linalg.lu_factor(M, check_finite=True)
            if np.any(np.abs(np.diag(self._lu[0])) == 0.0):
                raise np.linalg.LinAlgError("simplified Newton matrix is singular")
        else:
            Lam = np.eye(m) - h * tab.lambda_s * J
            self._lu = scipy.linalg.lu_factor(Lam, check_finite=True)
            if np.any(np.abs(np.diag(self._lu[0])) == 0.0):
                raise np.linalg.LinAlgError("blended iteration matrix is singular")
            self._lamXinv = tab.lambda_s * tab.Xinv

    def _lam_solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs.T).T

    def update(self, phi: np.ndarray, F: np.ndarray) -> np.ndarray:
        if self.kind == "fixed_point":
            return phi - F
        if self.kind == "newton":
            delta = scipy.linalg.lu_solve(self._lu, -F.reshape(-1))
            return phi + delta.reshape(phi.shape)
        eta = -F
        eta1 = self._lamXinv @ eta
        return phi + self._lam_solve(eta1 + self._lam_solve(eta - eta1))


class _Monitor:
    """Stopping rule shared by every iteration in the package."""

    def __init__(self, tol: float, max_iter: int):
        self.tol = tol
        self.max_iter = max_iter
        self.history: list[float] = []
        self.slow = 0
        self.stagnated = False
        self.diverged = False

    def check(self, res: float, scale: float) -> bool:
        """Record ``res``; return True when the iteration should stop."""
        first = self.history[0] if self.history else res
        best = min(self.history) if self.history else None
        self.history.append(res)
        if not np.isfinite(res) or res > _DIVERGENCE_FACTOR * max(first, 1.0):
            self.diverged = True
            return True
        if res <= self.tol:
            return True
        # compare with the best residual so far: roundoff noise oscillates
        if best is not None and res <= _ROUNDOFF_LEVEL * scale and res > 0.9 * best:
            self.slow += 1
            if self.slow >= _STAGNATION_RUN:
                self.stagnated = True
                return True
        else:
            self.slow = 0
        return len(self.history) >= self.max_iter

    def abort(self) -> None:
        """Record an iterate that left the domain; treated as divergence."""
        self.history.append(float("inf"))
        self.diverged = True

    @property
    def converged(self) -> bool:
        return not self.diverged and (self.stagnated or self.history[-1] <= self.tol)

    @property
    def residual(self) -> float:
        return self.history[-1]


def effective_tol(cfg: SolverConfig, y0: np.ndarray) -> float:
    return cfg.tol * (1.0 + float(np.max(np.abs(y0))))


def _solve(sys, tab, y0, h, cfg: SolverConfig, phi0=None):
    y0 = np.asarray(y0, dtype=float)
    sweeper = Sweeper(sys, tab, y0, h, cfg)
    mon = _Monitor(effective_tol(cfg, y0), cfg.max_iter)
    phi = np.zeros((tab.s, sys.m)) if phi0 is None else np.array(phi0, dtype=float)
    while True:
        try:
            G, Y, gamma = evaluate_map(sys, tab, y0, h, phi)
        except DomainError:
            # an overshooting iterate is divergence; a bad starting point is not
            if not mon.history:
                raise
            mon.abort()
            res = mon.residual
            break
        F = phi - G
        res = float(np.max(np.abs(F)))
        done = mon.check(res, 1.0 + float(np.max(np.abs(phi))))
        if done:
            # keep the correction already computed from F; it costs no evaluation
            if mon.converged:
                phi = sweeper.update(phi, F)
            break
        phi = sweeper.update(phi, F)
    stats = SolveStats(len(mon.history), res, mon.converged, mon.stagnated, mon.tol)
    return phi, stats


def solve_fixed_point(sys, tab, y0, h, cfg: SolverConfig = SolverConfig(solver="fixed_point"), phi0=None):
    """Fixed-point iteration ``phi <- G(phi)`` from ``phi = 0``."""
    return _solve(sys, tab, y0, h, _with_solver(cfg, "fixed_point"), phi0)


def solve_newton(sys, tab, y0, h, cfg: SolverConfig = SolverConfig(solver="newton"), phi0=None):
    """Simplified Newton with the ``sm x sm`` matrix ``I - h X (x) F'(y0)`` factored once."""
    return _solve(sys, tab, y0, h, _with_solver(cfg, "newton"), phi0)


def solve_blended(sys, tab, y0, h, cfg: SolverConfig = SolverConfig(solver="blended"), phi0=None):
    """Blended iteration; only the ``m x m`` matrix ``I - h lambda_s F'(y0)`` is factored."""
    return _solve(sys, tab, y0, h, _with_solver(cfg, "blended"), phi0)


def _with_solver(cfg: SolverConfig, solver: str) -> SolverConfig:
    if cfg.solver == solver:
        return cfg
    return SolverConfig(solver, cfg.tol, cfg.max_iter, cfg.fd_step, cfg.warm_start)


def step(sys: PoissonSystem, tab: MethodTableau, y0, h: float, cfg: SolverConfig = SolverConfig(), phi0=None) -> StepResult:
    """Advance one PHBVM(k, s) step: ``y1 = y0 + h phi_0``.

    Raises:
        ConvergenceError: if the nonlinear iteration does not converge.
    """
    y0 = np.asarray(y0, dtype=float)
    if h == 0.0:
        return StepResult(y0.copy(), 0, 0.0, phi=np.zeros((tab.s, sys.m)), H_defect=0.0)
    phi, stats = _solve(sys, tab, y0, h, cfg, phi0)
    y1 = y0 + h * phi[0]
    result = StepResult(y1, stats.iterations, stats.residual_norm, converged=stats.converged,
                        stagnated=stats.stagnated, phi=phi)
    if not stats.converged:
        raise ConvergenceError(
            f"{cfg.solver} iteration failed: residual {stats.residual_norm:.3e} after {stats.iterations} iterations",
            result,
        )
    return result


def stage_state(sys: PoissonSystem, tab: MethodTableau, y0, h: float, phi) -> StageState:
    """Bundle ``phi`` with its stage values and gradient coefficients."""
    phi = np.asarray(phi, dtype=float)
    _, Y, gamma = evaluate_map(sys, tab, np.asarray(y0, dtype=float), h, phi)
    return StageState(phi, Y, gamma)
