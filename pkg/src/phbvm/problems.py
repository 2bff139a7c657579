"""Poisson systems ``y' = B(y) grad H(y)`` and the built-in benchmark problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DOMAIN_FLOOR = 1e-12
DEFAULT_FD_STEP = 1e-7


class DomainError(ValueError):
    """A state lies outside the domain where the Hamiltonian is defined."""


@dataclass(frozen=True)
class Casimir:
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PoissonSystem:
    """Definition of a Poisson problem.

    Callables receive a state of shape ``(m,)``. When ``vectorized`` is true,
    ``eval_B``, ``eval_gradH`` and the Casimir gradients also accept a stack of
    states of shape ``(k, m)`` and return ``(k, m, m)`` / ``(k, m)`` arrays, which
    lets the solvers evaluate all quadrature nodes in one call.
    """

    m: int
    eval_B: Callable[[np.ndarray], np.ndarray]
    eval_gradH: Callable[[np.ndarray], np.ndarray]
    eval_H: Callable[[np.ndarray], float]
    casimirs: Sequence[Casimir] = ()
    eval_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False
    name: str = "custom"
    # skew matrices used by the Casimir correction; None selects the default basis
    casimir_skew: Optional[Sequence[np.ndarray]] = None

    @property
    def r(self) -> int:
        return len(self.casimirs)

    def B_nodes(self, Y: np.ndarray) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.eval_B(Y))
        return np.stack([self.eval_B(y) for y in Y])

    def gradH_nodes(self, Y: np.ndarray) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.eval_gradH(Y))
        return np.stack([self.eval_gradH(y) for y in Y])

    def gradC_nodes(self, Y: np.ndarray) -> np.ndarray:
        """Casimir gradients at each node, shape ``(k, m, r)``."""
        cols = []
        for cas in self.casimirs:
            if self.vectorized:
                cols.append(np.asarray(cas.gradient(Y)))
            else:
                cols.append(np.stack([cas.gradient(y) for y in Y]))
        return np.stack(cols, axis=-1)

    def casimir_values(self, y: np.ndarray) -> np.ndarray:
        return np.array([cas.value(y) for cas in self.casimirs])


@dataclass(frozen=True)
class ProblemPreset:
    name: str
    system: PoissonSystem
    y0: np.ndarray
    period: float
    description: str = field(default="", compare=False)


def vector_field(sys: PoissonSystem, y) -> np.ndarray:
    """``f(y) = B(y) grad H(y)``."""
    y = np.asarray(y, dtype=float)
    return sys.eval_B(y) @ sys.eval_gradH(y)


def jacobian(sys: PoissonSystem, y, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Jacobian of the vector field.

    Uses ``sys.eval_jacobian`` when available, otherwise central differences with
    step ``fd_step * max(1, |y_i|)`` in coordinate ``i``.
    """
    y = np.asarray(y, dtype=float)
    if sys.eval_jacobian is not None:
        return np.asarray(sys.eval_jacobian(y), dtype=float)
    J = np.empty((sys.m, sys.m))
    for i in range(sys.m):
        d = fd_step * max(1.0, abs(y[i]))
        yp, ym = y.copy(), y.copy()
        yp[i] += d
        ym[i] -= d
        J[:, i] = (vector_field(sys, yp) - vector_field(sys, ym)) / (2.0 * d)
    return J


def _check_positive(y: np.ndarray) -> None:
    if np.any(~(y > DOMAIN_FLOOR)):
        raise DomainError(f"Lotka-Volterra state left the positive orthant: {y}")


def lotka_volterra_2d(a: float = 1.0, b: float = 3.0, y1s: float = 1.0, y2s: float = 1.0) -> PoissonSystem:
    """Two-species Lotka-Volterra model.

    ``B(y) = [[0, y1 y2], [-y1 y2, 0]]`` and
    ``H(y) = a (ln y1 - y1/y1*) + b (ln y2 - y2/y2*)``.
    """
    w = np.array([a, b])
    ys = np.array([y1s, y2s])

    def eval_H(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return float(np.sum(w * (np.log(y) - y / ys)))

    def eval_gradH(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return w * (1.0 / y - 1.0 / ys)

    def eval_B(y):
        y = np.asarray(y, dtype=float)
        p = y[..., 0] * y[..., 1]
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 1] = p
        out[..., 1, 0] = -p
        return out

    def eval_jacobian(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return np.array([
            [b * (1.0 - y[1] / y2s), -b * y[0] / y2s],
            [a * y[1] / y1s, -a * (1.0 - y[0] / y1s)],
        ])

    return PoissonSystem(2, eval_B, eval_gradH, eval_H, (), eval_jacobian, vectorized=True, name="lv2")


def lotka_volterra_3d(
    a: float = 1.0, b: float = 2.0, c: float = 3.0,
    y1s: float = 1.0, y2s: float = 10.0, y3s: float = 50.0,
) -> PoissonSystem:
    """Three-species Lotka-Volterra model with Casimir ``C = -ln y1 - ln y2 + ln y3``."""
    w = np.array([a, b, c])
    ys = np.array([y1s, y2s, y3s])

    def eval_H(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return float(np.sum(w * (np.log(y) - y / ys)))

    def eval_gradH(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return w * (1.0 / y - 1.0 / ys)

    def eval_B(y):
        y = np.asarray(y, dtype=float)
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        out = np.zeros(y.shape[:-1] + (3, 3))
        out[..., 0, 1], out[..., 0, 2] = y1 * y2, y1 * y3
        out[..., 1, 0], out[..., 1, 2] = -y1 * y2, -y2 * y3
        out[..., 2, 0], out[..., 2, 1] = -y1 * y3, y2 * y3
        return out

    def eval_jacobian(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        u = w * (1.0 - y / ys)
        y1, y2, y3 = y
        return np.array([
            [u[1] + u[2], -y1 * b / y2s, -y1 * c / y3s],
            [y2 * a / y1s, -(u[0] + u[2]), y2 * c / y3s],
            [y3 * a / y1s, -y3 * b / y2s, u[1] - u[0]],
        ])

    def eval_C(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return float(-math.log(y[0]) - math.log(y[1]) + math.log(y[2]))

    def eval_gradC(y):
        y = np.asarray(y, dtype=float)
        _check_positive(y)
        return np.array([-1.0, -1.0, 1.0]) / y

    return PoissonSystem(
        3, eval_B, eval_gradH, eval_H, (Casimir(eval_C, eval_gradC),), eval_jacobian,
        vectorized=True, name="lv3",
    )


def harmonic_oscillator() -> PoissonSystem:
    """Constant ``B = [[0, 1], [-1, 0]]`` with ``H = (y1^2 + y2^2) / 2``."""
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def eval_B(y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(J, y.shape[:-1] + (2, 2)).copy()

    def eval_gradH(y):
        return np.array(y, dtype=float)

    def eval_H(y):
        y = np.asarray(y, dtype=float)
        return 0.5 * float(y @ y)

    return PoissonSystem(2, eval_B, eval_gradH, eval_H, (), lambda y: J.copy(), vectorized=True, name="harmonic")


PRESETS = ("lv2", "lv3", "harmonic")


def preset(name: str) -> ProblemPreset:
    """Look up a benchmark problem by name.

    Raises:
        KeyError: for an unknown name.
    """
    if name == "lv2":
        return ProblemPreset(
            "lv2", lotka_volterra_2d(), np.array([5.0, 1.0]), 4.633434168477889,
            "two-species Lotka-Volterra, a=1, b=3, y*=(1,1)",
        )
    if name == "lv3":
        return ProblemPreset(
            "lv3", lotka_volterra_3d(), np.array([1.0, 1.0, 1.0]), 2.143610709155912,
            "three-species Lotka-Volterra with one Casimir, a=1, b=2, c=3, y*=(1,10,50)",
        )
    if name == "harmonic":
        return ProblemPreset(
            "harmonic", harmonic_oscillator(), np.array([1.0, 0.0]), 2.0 * math.pi,
            "harmonic oscillator with constant structure matrix",
        )
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
