"""Multi-step integration, invariant tracking and the error studies built on it.

The presets are periodic, so the solution error after an integer number of
periods is measured against the initial state; no reference solver is needed.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .casimir import step_with_casimir
from .core import SolverConfig, step
from .problems import PoissonSystem, ProblemPreset, preset
from .tableau import MethodTableau, build_tableau

METHODS = ("phbvm", "ephbvm", "gauss")
EPS = np.finfo(float).eps
# rates are reported only while both errors stay above this level
SATURATION = 10.0 * EPS
THREADS_ENV = "PHBVM_THREADS"
_STEP_ERRORS = (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError)


class StepFailure(RuntimeError):
    """A step inside :func:`integrate` failed.

    Attributes:
        step_index: zero-based index of the failing step.
        state: the state the step started from.
        cause: the original exception (convergence, domain or degeneracy error).
    """

    def __init__(self, step_index: int, state: np.ndarray, cause: Exception):
        super().__init__(f"step {step_index} from y = {np.array2string(state, precision=6)} failed: {cause}")
        self.step_index = step_index
        self.state = state
        self.cause = cause


@dataclass
class Trajectory:
    """Result of :func:`integrate`.

    ``states`` keeps every ``stride``-th state (always including the first and
    the last); ``stride = 0`` stores none. ``H_error`` and ``C_error`` have one
    entry per time point, ``iterations`` one entry per step.
    """

    times: np.ndarray
    H_error: np.ndarray
    C_error: np.ndarray
    iterations: np.ndarray
    wall_time: float
    y_final: np.ndarray
    h: float
    method: str
    k: int
    s: int
    states: Optional[np.ndarray] = None
    state_index: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    has_casimirs: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.iterations)

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if len(self.iterations) else 0.0


def resolve_method(method: str, k: Optional[int], s: int) -> tuple[int, int]:
    """Validate a method name and return the effective ``(k, s)``.

    ``gauss`` is PHBVM(s, s); ``k`` may be omitted for it.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method == "gauss":
        if k is not None and k != s:
            raise ValueError(f"the Gauss method uses k = s, got k={k}, s={s}")
        k = s
    if k is None:
        raise ValueError(f"method {method} needs k")
    if not 1 <= s <= k:
        raise ValueError(f"need 1 <= s <= k, got k={k}, s={s}")
    return k, s


def integrate(
    sys: PoissonSystem,
    method: str,
    k: Optional[int],
    s: int,
    y0,
    h: float,
    n_steps: int,
    cfg: SolverConfig = SolverConfig(),
    stride: int = 1,
    tab: Optional[MethodTableau] = None,
) -> Trajectory:
    """Apply ``n_steps`` steps of the chosen one-step method from ``y0``.

    Raises:
        ValueError: bad method, ``(k, s)``, step count, or ``ephbvm`` on a
            system without Casimirs.
        StepFailure: a step did not converge or left the domain.
    """
    k, s = resolve_method(method, k, s)
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if stride < 0:
        raise ValueError("stride must be nonnegative")
    if method == "ephbvm" and sys.r == 0:
        raise ValueError("ephbvm needs a problem with at least one Casimir")
    if tab is None:
        tab = build_tableau(k, s)
    elif (tab.k, tab.s) != (k, s):
        raise ValueError("tableau does not match (k, s)")

    y = np.array(y0, dtype=float)
    H0 = sys.eval_H(y)
    C0 = sys.casimir_values(y)
    H_err = np.zeros(n_steps + 1)
    C_err = np.zeros(n_steps + 1)
    iters = np.zeros(n_steps, dtype=int)
    alphas = np.zeros((n_steps, sys.r)) if method == "ephbvm" else None
    keep = [0] if stride else []
    stored = [y.copy()] if stride else []
    guess = None
    advance = step_with_casimir if method == "ephbvm" else step

    def one_step(state, phi0):
        return advance(sys, tab, state, h, cfg, phi0=phi0)

    t_start = time.perf_counter()
    for i in range(n_steps):
        try:
            try:
                res = one_step(y, guess)
            except _STEP_ERRORS:
                if guess is None:
                    raise
                # a stale warm start can overshoot; retry from phi = 0
                res = one_step(y, None)
        except _STEP_ERRORS as err:
            raise StepFailure(i, y.copy(), err) from err
        if alphas is not None:
            alphas[i] = res.alpha
        if cfg.warm_start:
            guess = res.phi.copy()
            if method == "ephbvm":
                # the Casimir step iterates on phi with phi_0 replaced by (y1 - y0) / h
                guess[0] = (res.y1 - y) / h
        y = res.y1
        iters[i] = res.iterations
        H_err[i + 1] = abs(sys.eval_H(y) - H0)
        if sys.r:
            C_err[i + 1] = float(np.max(np.abs(sys.casimir_values(y) - C0)))
        if stride and ((i + 1) % stride == 0 or i + 1 == n_steps):
            keep.append(i + 1)
            stored.append(y.copy())
    wall = time.perf_counter() - t_start

    return Trajectory(
        times=h * np.arange(n_steps + 1),
        H_error=H_err,
        C_error=C_err,
        iterations=iters,
        wall_time=wall,
        y_final=y,
        h=h,
        method=method,
        k=k,
        s=s,
        states=np.array(stored) if stride else None,
        state_index=np.array(keep, dtype=int) if stride else None,
        alpha=alphas,
        has_casimirs=sys.r > 0,
    )


def periodic_error(traj: Trajectory, y0, periods: int = 1, period: Optional[float] = None) -> float:
    """``|y_final - y0|_inf`` for a run spanning an integer number of periods.

    When ``period`` is given the span ``n_steps * h`` must equal
    ``periods * period`` up to roundoff.

    Raises:
        ValueError: non-integer or mismatching period span.
    """
    if int(periods) != periods or periods < 0:
        raise ValueError(f"periods must be a nonnegative integer, got {periods}")
    if period is not None:
        span = traj.n_steps * abs(traj.h) / period
        if abs(span - round(span)) > 1e-9 * max(1.0, span) or round(span) != periods:
            raise ValueError(f"trajectory spans {span:.12g} periods, expected the integer {periods}")
    return float(np.max(np.abs(np.asarray(traj.y_final) - np.asarray(y0, dtype=float))))


@dataclass
class ExperimentRecord:
    """One row of a convergence table; rates and ``e_C`` may be undefined (None)."""

    n: int
    e_y: float
    rate_y: Optional[float]
    e_H: float
    rate_H: Optional[float]
    e_C: Optional[float]
    rate_C: Optional[float]
    mean_iterations: float
    time_sec: float

    # column names used in CSV and JSON output
    FIELDS = ("n", "e_y", "rate_y", "e_H", "rate_H", "e_C", "rate_C", "mean_iters", "time_sec")

    def as_row(self) -> dict:
        d = asdict(self)
        d["mean_iters"] = d.pop("mean_iterations")
        return {key: d[key] for key in self.FIELDS}


def observed_rate(e_prev: Optional[float], e_cur: Optional[float], n_prev: int, n_cur: int) -> Optional[float]:
    """``log(e_prev / e_cur) / log(n_cur / n_prev)``; None at saturation."""
    if e_prev is None or e_cur is None:
        return None
    if not (e_prev > SATURATION and e_cur > SATURATION):
        return None
    return math.log(e_prev / e_cur) / math.log(n_cur / n_prev)


def _as_preset(problem: Union[str, ProblemPreset]) -> ProblemPreset:
    return preset(problem) if isinstance(problem, str) else problem


def _table_cell(problem, method, k, s, n, periods, cfg):
    prob = _as_preset(problem)
    traj = integrate(prob.system, method, k, s, prob.y0, prob.period / n, n * periods, cfg, stride=0)
    e_y = periodic_error(traj, prob.y0, periods, prob.period)
    e_C = float(np.max(traj.C_error)) if traj.has_casimirs else None
    return n, e_y, float(np.max(traj.H_error)), e_C, traj.mean_iterations, traj.wall_time


def worker_count(n_tasks: int) -> int:
    """Parallel cells allowed by ``PHBVM_THREADS`` (default: logical CPUs)."""
    raw = os.environ.get(THREADS_ENV)
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, min(cap, n_tasks))


def convergence_table(
    problem: Union[str, ProblemPreset],
    method: str,
    k: Optional[int],
    s: int,
    n_list: Sequence[int],
    periods: int = 1,
    cfg: SolverConfig = SolverConfig(),
    workers: Optional[int] = None,
) -> list[ExperimentRecord]:
    """Errors after ``periods`` periods with ``h = T / n`` for each ``n``.

    ``e_H`` and ``e_C`` are the maxima of the invariant errors over all steps.
    Cells run in parallel processes when ``workers`` (or ``PHBVM_THREADS``)
    allows it and ``problem`` is a named preset; rows always come back in
    ``n`` order.

    Raises:
        ValueError: ``n_list`` empty, not strictly ascending, or non-positive.
        StepFailure: propagated from :func:`integrate`.
    """
    resolve_method(method, k, s)
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list is empty")
    if any(n <= 0 for n in n_list):
        raise ValueError("n values must be positive")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"n_list must be strictly ascending without duplicates, got {n_list}")
    if int(periods) != periods or periods < 1:
        raise ValueError("periods must be a positive integer")

    workers = worker_count(len(n_list)) if workers is None else max(1, min(workers, len(n_list)))
    args = [(problem, method, k, s, n, periods, cfg) for n in n_list]
    if workers > 1 and isinstance(problem, str):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_table_cell, *zip(*args)))
    else:
        cells = [_table_cell(*a) for a in args]

    records = []
    prev = None
    for n, e_y, e_H, e_C, it, wall in cells:
        if prev is None:
            rates = (None, None, None)
        else:
            rates = tuple(observed_rate(a, b, prev[0], n) for a, b in ((prev[1], e_y), (prev[2], e_H), (prev[3], e_C)))
        records.append(ExperimentRecord(n, e_y, rates[0], e_H, rates[1], e_C, rates[2], it, wall))
        prev = (n, e_y, e_H, e_C)
    return records


@dataclass
class GrowthSeries:
    """Errors sampled at period boundaries ``1..periods`` for one method."""

    method: str
    k: int
    s: int
    period_index: np.ndarray
    e_y: np.ndarray
    e_H: np.ndarray
    e_C: Optional[np.ndarray]
    slope_y: float
    mean_iterations: float = 0.0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.method == "gauss":
            return f"gauss-{self.s}"
        return f"{self.method}({self.k},{self.s})"


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def growth_study(
    problem: Union[str, ProblemPreset],
    methods: Sequence[Union[str, tuple]],
    k: Optional[int],
    s: int,
    h_per_period: int = 100,
    periods: int = 20,
    cfg: SolverConfig = SolverConfig(),
) -> list[GrowthSeries]:
    """Long-time error behaviour with ``h = T / h_per_period``.

    ``methods`` holds method names (sharing ``k`` and ``s``) or explicit
    ``(method, k, s)`` tuples. The returned slope is fitted to ``log e_y`` versus
    ``log p`` over the second half of the periods ``p``.

    Raises:
        ValueError: fewer than 5 periods or an invalid method.
    """
    if int(periods) != periods or periods < 5:
        raise ValueError("growth studies need at least 5 periods")
    if int(h_per_period) != h_per_period or h_per_period < 1:
        raise ValueError("h_per_period must be a positive integer")
    prob = _as_preset(problem)
    out = []
    for entry in methods:
        name, kk, ss = (entry, k, s) if isinstance(entry, str) else entry
        kk, ss = resolve_method(name, kk, ss)
        traj = integrate(prob.system, name, kk, ss, prob.y0, prob.period / h_per_period,
                         h_per_period * periods, cfg, stride=h_per_period)
        idx = np.arange(1, periods + 1)
        ys = traj.states[1:]
        e_y = np.max(np.abs(ys - prob.y0[None, :]), axis=1)
        e_H = traj.H_error[idx * h_per_period]
        e_C = traj.C_error[idx * h_per_period] if traj.has_casimirs else None
        half = idx > periods / 2
        out.append(GrowthSeries(name, kk, ss, idx, e_y, e_H, e_C, loglog_slope(idx[half], e_y[half]),
                                traj.mean_iterations, traj.wall_time))
    return out
