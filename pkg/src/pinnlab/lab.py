"""Frozen-fitness sampling experiments.

These runs never train anything: the fitness field is a fixed objective
function, which isolates the selection dynamics (how fast the retained set
climbs toward the dense-set maximum) and lets the importance-sampling /
p-norm identity be checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import ObjectiveFunction
from .problems import Box
from .sampling import RETAINED, Population, rrr_step

__all__ = [
    "FrozenRunResult",
    "frozen_rrr_run",
    "lp_norm",
    "lp_sampling_identity",
    "DegenerateObjectiveError",
]


class DegenerateObjectiveError(ValueError):
    """The importance weights are identically zero."""


@dataclass
class FrozenRunResult:
    iterations: np.ndarray  # (T,)
    retained_mean: np.ndarray  # (T,) mean fitness over the retained set (nan if empty)
    retained_size: np.ndarray  # (T,)
    population_mean_first: float  # mean fitness over the full initial population

    def final_retained_mean(self) -> float:
        return float(self.retained_mean[-1])


def frozen_rrr_run(
    objective: ObjectiveFunction,
    n_points: int,
    iterations: int,
    rng: np.random.Generator,
    record_every: int = 1,
) -> FrozenRunResult:
    """Iterate the retain-resample-release step on a never-updated fitness field."""
    box = objective.domain
    points = box.uniform(n_points, rng)
    fitness = objective.fitness(points)
    pop = Population(points, fitness, np.full(n_points, RETAINED, dtype=np.int8))
    population_mean_first = float(fitness.mean())

    its, means, sizes = [], [], []
    for i in range(iterations):
        fitness = objective.fitness(pop.points)
        new = rrr_step(pop, fitness, box, rng)
        if (i + 1) % record_every == 0 or i == iterations - 1:
            kept = new.provenance == RETAINED
            its.append(i + 1)
            sizes.append(int(kept.sum()))
            means.append(float(new.fitness[kept].mean()) if kept.any() else float("nan"))
        pop = new
    return FrozenRunResult(
        iterations=np.asarray(its),
        retained_mean=np.asarray(means),
        retained_size=np.asarray(sizes),
        population_mean_first=population_mean_first,
    )


def lp_norm(values_or_fn, p: float, dense_points: np.ndarray | None = None) -> float:
    """(mean |f|^p)^(1/p) over a dense point set.

    Accepts either precomputed values or a callable plus the points.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if callable(values_or_fn):
        values = np.abs(np.asarray(values_or_fn(dense_points), dtype=np.float64))
    else:
        values = np.abs(np.asarray(values_or_fn, dtype=np.float64))
    # normalize by the max first so large p does not overflow
    peak = values.max()
    if peak == 0.0:
        return 0.0
    return float(peak * np.mean((values / peak) ** p) ** (1.0 / p))


def lp_sampling_identity(
    fn,
    power: float,
    dense_points: np.ndarray,
    sample_count: int,
    rng: np.random.Generator,
    volume: float,
) -> tuple[float, float, float]:
    """Numerically compare the two routes to a residual-weighted L2 loss.

    lhs: the L2 norm estimated on points drawn with probability ~ |f|^power.
    rhs: (V/Z)^(1/2) * (mean |f|^(power+2))^(1/2) with Z = V * mean |f|^power,
    both estimated on the same dense set.  Returns (lhs, rhs, relative gap).
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    values = np.abs(np.asarray(fn(dense_points), dtype=np.float64))
    weights = values**power
    z = volume * float(weights.mean())
    if z == 0.0:
        raise DegenerateObjectiveError("importance weights are identically zero")
    probs = weights / weights.sum()
    idx = rng.choice(values.size, size=sample_count, replace=True, p=probs)
    lhs = float(np.sqrt(np.mean(values[idx] ** 2)))
    rhs = float(np.sqrt(volume / z * np.mean(values ** (power + 2.0))))
    gap = abs(lhs - rhs) / rhs
    return lhs, rhs, gap
