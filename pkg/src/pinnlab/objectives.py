"""Fixed 2-D test landscapes for frozen-fitness sampling experiments.

evaluate() returns the printed formula value; the fitness used by the
sampling experiments adds a constant offset where the formula can go
negative, so fitness is always >= 0.  A constant shift does not change
which points survive a mean-threshold selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problems import Box

__all__ = ["ObjectiveFunction", "OBJECTIVES", "get_objective", "evaluate"]

# Bukin: both penalty terms peak together at x = -15, y = -3.
_BUKIN_OFFSET = 100.0 * np.sqrt(5.25) + 0.05
# Bohachevsky (negated bowl): minimum sits at the domain corners.
_BOHACHEVSKY_OFFSET = 30000.0
# Egg-holder: minimum located numerically (4001^2 grid + local descent),
# small safety margin added.
_EGG_HOLDER_OFFSET = 1049.1317


@dataclass(frozen=True)
class ObjectiveFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]  # printed formula, batched (N, d) -> (N,)
    domain: Box
    offset: float = 0.0
    known_max: tuple[tuple[float, ...], float] | None = None  # (location, raw value)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Printed-formula values."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.fn(points)

    def fitness(self, points: np.ndarray) -> np.ndarray:
        """Offset-shifted values, guaranteed >= 0 on the domain."""
        return self.evaluate(points) + self.offset


def _ackley(p, a=20.0, b=0.2, c=2.0 * np.pi):
    d = p.shape[1]
    sq = np.sqrt(np.sum(p**2, axis=1) / d)
    return a * np.exp(-b * sq) + np.exp(np.mean(np.cos(c * p), axis=1)) + a + np.e


def _bohachevsky(p):
    x, y = p[:, 0], p[:, 1]
    return -(x**2) - 2.0 * y**2 + 0.3 * np.cos(3.0 * np.pi * x) + 0.4 * np.cos(4.0 * np.pi * y) - 0.7


def _drop_wave(p):
    r2 = np.sum(p**2, axis=1)
    return (1.0 + np.cos(12.0 * np.sqrt(r2))) / (0.5 * r2 + 2.0)


def _egg_holder(p):
    x, y = p[:, 0], p[:, 1]
    return (y + 47.0) * np.sin(np.sqrt(np.abs(y + x / 2.0 + 47.0))) + x * np.sin(
        np.sqrt(np.abs(x - (y + 47.0)))
    )


def _holder_table(p):
    x, y = p[:, 0], p[:, 1]
    r = np.sqrt(x**2 + y**2)
    return np.abs(np.sin(x) * np.cos(y) * np.exp(np.abs(1.0 - r / np.pi)))


def _bukin(p):
    x, y = p[:, 0], p[:, 1]
    return -100.0 * np.sqrt(np.abs(y - 0.01 * x**2)) - 0.01 * np.abs(x + 10.0)


def _michalewicz(p, m=10):
    i = np.arange(1, p.shape[1] + 1)
    return np.sum(np.sin(p) * np.sin(i * p**2 / np.pi) ** (2 * m), axis=1)


OBJECTIVES: dict[str, ObjectiveFunction] = {
    o.name: o
    for o in [
        ObjectiveFunction(
            "ackley",
            _ackley,
            Box(lo=(-5.0, -5.0), hi=(5.0, 5.0)),
            known_max=((0.0, 0.0), 40.0 + 2.0 * np.e),
        ),
        ObjectiveFunction(
            "bohachevsky",
            _bohachevsky,
            Box(lo=(-100.0, -100.0), hi=(100.0, 100.0)),
            offset=_BOHACHEVSKY_OFFSET,
            known_max=((0.0, 0.0), 0.0),
        ),
        ObjectiveFunction(
            "drop-wave",
            _drop_wave,
            Box(lo=(-5.12, -5.12), hi=(5.12, 5.12)),
            known_max=((0.0, 0.0), 1.0),
        ),
        ObjectiveFunction(
            "egg-holder",
            _egg_holder,
            Box(lo=(-512.0, -512.0), hi=(512.0, 512.0)),
            offset=_EGG_HOLDER_OFFSET,
        ),
        ObjectiveFunction("holder-table", _holder_table, Box(lo=(-10.0, -10.0), hi=(10.0, 10.0))),
        ObjectiveFunction(
            "bukin",
            _bukin,
            Box(lo=(-15.0, -3.0), hi=(-5.0, 3.0)),
            offset=_BUKIN_OFFSET,
            known_max=((-10.0, 1.0), 0.0),
        ),
        ObjectiveFunction("michalewicz", _michalewicz, Box(lo=(0.0, 0.0), hi=(np.pi, np.pi))),
    ]
}


def get_objective(name: str) -> ObjectiveFunction:
    try:
        return OBJECTIVES[name]
    except KeyError:
        raise KeyError(f"unknown objective {name!r}; known: {', '.join(OBJECTIVES)}") from None


def evaluate(fn: ObjectiveFunction, point) -> float:
    """Printed-formula value at a single point."""
    return float(fn.evaluate(np.atleast_2d(point))[0])
