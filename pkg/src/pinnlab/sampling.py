"""Collocation samplers over a shared population type.

The adaptive retain-resample-release (rrr) step keeps points whose fitness is
strictly above the population mean and replaces the rest with fresh uniform
draws, so the population size never changes.  Baselines: fixed and dynamic
uniform sampling, dense-set refinement (greedy top-m growth, periodic
distribution resampling, distribution growth) and a dense top-k sweep.

Every sampler draws from an explicitly passed numpy Generator; nothing reads
global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gate import GateState, gate_value
from .problems import Box

__all__ = [
    "RETAINED",
    "RESAMPLED",
    "Population",
    "DenseSet",
    "threshold",
    "abs_fitness",
    "gated_fitness",
    "rrr_step",
    "uniform_points",
    "rar_greedy_step",
    "distribution_resample",
    "rar_distribution_step",
    "dense_topk",
    "expected_refinement_evals",
    "make_sampler",
    "write_snapshot",
    "SAMPLER_KINDS",
]

RETAINED = 0
RESAMPLED = 1


@dataclass
class Population:
    """Fixed-size collocation set with per-point fitness and provenance."""

    points: np.ndarray  # (N, d)
    fitness: np.ndarray  # (N,)
    provenance: np.ndarray  # (N,) int8, RETAINED / RESAMPLED
    tau: float = np.nan  # threshold used when this population was formed
    eval_counter: int = 0

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def retained_count(self) -> int:
        return int(np.sum(self.provenance == RETAINED))


def threshold(fitness: np.ndarray) -> float:
    """Population threshold: the arithmetic mean of the fitness values."""
    fitness = np.asarray(fitness)
    if fitness.size == 0:
        raise ValueError("threshold of an empty fitness list")
    return float(np.mean(fitness))


def abs_fitness(residuals: np.ndarray) -> np.ndarray:
    return np.abs(residuals)


def gated_fitness(residuals: np.ndarray, times: np.ndarray, gate: GateState) -> np.ndarray:
    return np.abs(residuals) * gate_value(times, gate)


def uniform_points(n: int, box: Box, rng: np.random.Generator) -> np.ndarray:
    return box.uniform(n, rng)


def rrr_step(
    pop: Population, fitness: np.ndarray, box: Box, rng: np.random.Generator
) -> Population:
    """One retain-resample-release update.

    Retains points with fitness strictly above the mean; everything else is
    released and replaced by fresh uniform draws.  Two guards keep the
    non-empty-resample and constant-field guarantees exact under floating
    point: an exactly constant fitness vector releases everything, and if
    summation rounding ever put the mean below every value the lowest-fitness
    point is force-released.
    """
    fitness = np.asarray(fitness, dtype=np.float64)
    if fitness.shape[0] != pop.size:
        raise ValueError("fitness length must match the population size")
    tau = threshold(fitness)
    if fitness.min() == fitness.max():
        keep = np.zeros(pop.size, dtype=bool)
    else:
        keep = fitness > tau
        if keep.all():
            keep[np.argmin(fitness)] = False
    n_new = int(pop.size - keep.sum())
    points = np.concatenate([pop.points[keep], box.uniform(n_new, rng)], axis=0)
    provenance = np.concatenate(
        [np.full(pop.size - n_new, RETAINED, dtype=np.int8), np.full(n_new, RESAMPLED, dtype=np.int8)]
    )
    new_fitness = np.concatenate([fitness[keep], np.full(n_new, np.nan)])
    return Population(points, new_fitness, provenance, tau=tau, eval_counter=pop.eval_counter)


# ---------------------------------------------------------------------------
# dense-set baselines
# ---------------------------------------------------------------------------


@dataclass
class DenseSet:
    """Auxiliary point set used by refinement baselines to scan the residual field."""

    points: np.ndarray

    @classmethod
    def uniform(cls, n: int, box: Box, rng: np.random.Generator) -> "DenseSet":
        return cls(box.uniform(n, rng))

    @property
    def size(self) -> int:
        return self.points.shape[0]


def _top_indices(values: np.ndarray, m: int) -> np.ndarray:
    # stable sort on the negated values: ties resolve to the lowest index
    return np.argsort(-values, kind="stable")[:m]


def rar_greedy_step(
    trainset: np.ndarray, dense: DenseSet, dense_residuals: np.ndarray, m: int
) -> np.ndarray:
    """Grow the train set by the m highest-|residual| dense points."""
    if m > dense.size:
        raise ValueError(f"cannot add {m} points from a dense set of {dense.size}")
    idx = _top_indices(np.abs(dense_residuals), m)
    return np.concatenate([trainset, dense.points[idx]], axis=0)


def distribution_resample(
    dense: DenseSet,
    dense_residuals: np.ndarray,
    power: float,
    n: int,
    rng: np.random.Generator,
):
    """Draw n points (with replacement) with probability ~ |residual|^power.

    Returns (points, fell_back) where fell_back marks the all-zero-residual
    case, which degrades to a uniform draw over the dense set.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    weights = np.abs(dense_residuals) ** power
    total = weights.sum()
    fell_back = False
    if total == 0.0 or not np.isfinite(total):
        probs = np.full(dense.size, 1.0 / dense.size)
        fell_back = total == 0.0
    else:
        probs = weights / total
    idx = rng.choice(dense.size, size=n, replace=True, p=probs)
    return dense.points[idx], fell_back


def rar_distribution_step(
    trainset: np.ndarray,
    dense: DenseSet,
    dense_residuals: np.ndarray,
    power: float,
    m: int,
    rng: np.random.Generator,
):
    """Grow the train set by m points sampled (with replacement) ~ |residual|^power."""
    added, fell_back = distribution_resample(dense, dense_residuals, power, m, rng)
    return np.concatenate([trainset, added], axis=0), fell_back


def dense_topk(dense: DenseSet, dense_residuals: np.ndarray, n: int) -> np.ndarray:
    """The n highest-|residual| dense points (ties to the lowest index)."""
    idx = _top_indices(np.abs(dense_residuals), n)
    return dense.points[idx]


def expected_refinement_evals(
    n_iterations: int, period: int, added_per_event: int, n_train0: int, dense_size: int
) -> int:
    """Closed-form residual-evaluation count for the growing refinement baselines.

    Per-iteration train-set evaluations (the set grows by added_per_event at
    the end of every `period`-th iteration) plus one dense-set evaluation per
    growth event.
    """
    blocks = n_iterations // period
    remainder = n_iterations - blocks * period
    train = period * (blocks * n_train0 + added_per_event * blocks * (blocks - 1) // 2)
    train += remainder * (n_train0 + added_per_event * blocks)
    return int(train + dense_size * (n_iterations // period))


# ---------------------------------------------------------------------------
# sampler strategies for the training loop
# ---------------------------------------------------------------------------


@dataclass
class SamplerUpdate:
    points: np.ndarray
    provenance: np.ndarray
    tau: float = np.nan
    fitness: np.ndarray | None = None  # selection fitness, nan where freshly drawn
    dense_evals: int = 0
    fell_back: bool = False


class BaseSampler:
    kind = "base"
    needs_gate = False

    def __init__(self, n_points: int, box: Box):
        if n_points < 1:
            raise ValueError("n_points must be >= 1")
        self.n_points = n_points
        self.box = box

    def initial_points(self, rng: np.random.Generator) -> np.ndarray:
        return self.box.uniform(self.n_points, rng)

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        raise NotImplementedError


class FixedSampler(BaseSampler):
    """One uniform (or equispaced, in 1-D) draw at iteration 0, never changed."""

    kind = "fixed"

    def __init__(self, n_points: int, box: Box, placement: str = "uniform"):
        super().__init__(n_points, box)
        if placement not in ("uniform", "equispaced"):
            raise ValueError(f"unknown placement {placement!r}")
        if placement == "equispaced" and box.dim != 1:
            raise ValueError("equispaced placement needs a 1-D domain")
        self.placement = placement

    def initial_points(self, rng):
        if self.placement == "equispaced":
            return np.linspace(self.box.lo[0], self.box.hi[0], self.n_points)[:, None]
        return super().initial_points(rng)

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        return SamplerUpdate(points, np.full(self.n_points, RETAINED, dtype=np.int8))


class DynamicSampler(BaseSampler):
    """Fresh uniform draw every iteration."""

    kind = "dynamic"

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        fresh = self.box.uniform(self.n_points, rng)
        return SamplerUpdate(fresh, np.full(self.n_points, RESAMPLED, dtype=np.int8))


class RetainResampleRelease(BaseSampler):
    """Keep strictly-above-mean fitness points, resample the rest uniformly."""

    kind = "rrr"

    def __init__(self, n_points: int, box: Box, causal: bool = False):
        super().__init__(n_points, box)
        self.causal = causal
        self.needs_gate = causal

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        if self.causal:
            fitness = abs_residuals * gate_value(times, gate)
        else:
            fitness = abs_residuals
        pop = Population(
            points, fitness, np.empty(points.shape[0], dtype=np.int8), eval_counter=0
        )
        new = rrr_step(pop, fitness, self.box, rng)
        return SamplerUpdate(new.points, new.provenance, tau=new.tau, fitness=new.fitness)


class DenseSetSampler(BaseSampler):
    def __init__(self, n_points: int, box: Box, dense_size: int):
        super().__init__(n_points, box)
        self.dense_size = dense_size
        self.dense: DenseSet | None = None

    def _dense(self, rng) -> DenseSet:
        if self.dense is None:
            self.dense = DenseSet.uniform(self.dense_size, self.box, rng)
        return self.dense


class RarGreedySampler(DenseSetSampler):
    kind = "rar-greedy"

    def __init__(self, n_points, box, dense_size=100_000, period=100, added_per_event=1):
        super().__init__(n_points, box, dense_size)
        self.period = period
        self.added = added_per_event

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        if (iteration + 1) % self.period == 0:
            dense = self._dense(rng)
            dense_res = dense_residual_fn(dense.points)
            grown = rar_greedy_step(points, dense, dense_res, self.added)
            prov = np.full(grown.shape[0], RETAINED, dtype=np.int8)
            prov[points.shape[0] :] = RESAMPLED
            return SamplerUpdate(grown, prov, dense_evals=dense.size)
        return SamplerUpdate(points, np.full(points.shape[0], RETAINED, dtype=np.int8))


class DistributionResampler(DenseSetSampler):
    """Periodic full resample of the train set ~ |residual|^power."""

    kind = "rad"

    def __init__(self, n_points, box, dense_size=100_000, period=100, power=1.0):
        super().__init__(n_points, box, dense_size)
        self.period = period
        self.power = power

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        if (iteration + 1) % self.period == 0:
            dense = self._dense(rng)
            dense_res = dense_residual_fn(dense.points)
            fresh, fell_back = distribution_resample(
                dense, dense_res, self.power, self.n_points, rng
            )
            prov = np.full(self.n_points, RESAMPLED, dtype=np.int8)
            return SamplerUpdate(fresh, prov, dense_evals=dense.size, fell_back=fell_back)
        return SamplerUpdate(points, np.full(points.shape[0], RETAINED, dtype=np.int8))


class RarDistributionSampler(DenseSetSampler):
    kind = "rar-dist"

    def __init__(self, n_points, box, dense_size=100_000, period=100, power=1.0, added_per_event=1):
        super().__init__(n_points, box, dense_size)
        self.period = period
        self.power = power
        self.added = added_per_event

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        if (iteration + 1) % self.period == 0:
            dense = self._dense(rng)
            dense_res = dense_residual_fn(dense.points)
            grown, fell_back = rar_distribution_step(
                points, dense, dense_res, self.power, self.added, rng
            )
            prov = np.full(grown.shape[0], RETAINED, dtype=np.int8)
            prov[points.shape[0] :] = RESAMPLED
            return SamplerUpdate(grown, prov, dense_evals=dense.size, fell_back=fell_back)
        return SamplerUpdate(points, np.full(points.shape[0], RETAINED, dtype=np.int8))


class DenseTopkSampler(DenseSetSampler):
    """Every iteration, train on the n highest-|residual| dense points."""

    kind = "linf-topk"

    def step(self, points, abs_residuals, times, gate, rng, iteration, dense_residual_fn):
        dense = self._dense(rng)
        dense_res = dense_residual_fn(dense.points)
        fresh = dense_topk(dense, dense_res, self.n_points)
        prov = np.full(self.n_points, RESAMPLED, dtype=np.int8)
        return SamplerUpdate(fresh, prov, dense_evals=dense.size)


SAMPLER_KINDS = (
    "fixed",
    "dynamic",
    "rrr",
    "causal-rrr",
    "rar-greedy",
    "rad",
    "rar-dist",
    "linf-topk",
)


def make_sampler(
    kind: str,
    n_points: int,
    box: Box,
    *,
    dense_size: int = 100_000,
    period: int = 100,
    added_per_event: int = 1,
    power: float = 1.0,
    placement: str = "uniform",
) -> BaseSampler:
    if kind == "fixed":
        return FixedSampler(n_points, box, placement=placement)
    if kind == "dynamic":
        return DynamicSampler(n_points, box)
    if kind == "rrr":
        return RetainResampleRelease(n_points, box, causal=False)
    if kind == "causal-rrr":
        return RetainResampleRelease(n_points, box, causal=True)
    if kind == "rar-greedy":
        return RarGreedySampler(n_points, box, dense_size, period, added_per_event)
    if kind == "rad":
        return DistributionResampler(n_points, box, dense_size, period, power)
    if kind == "rar-dist":
        return RarDistributionSampler(n_points, box, dense_size, period, power, added_per_event)
    if kind == "linf-topk":
        return DenseTopkSampler(n_points, box, dense_size)
    raise ValueError(f"unknown sampler kind {kind!r}; known: {', '.join(SAMPLER_KINDS)}")


def write_snapshot(path, points: np.ndarray, fitness: np.ndarray, provenance: np.ndarray) -> None:
    """Text rows "coords... fitness provenance" for plotting sample dynamics."""
    labels = {RETAINED: "retained", RESAMPLED: "resampled"}
    with open(path, "w") as fh:
        for p, f, prov in zip(points, fitness, provenance):
            coords = " ".join(repr(float(c)) for c in p)
            fh.write(f"{coords} {float(f)!r} {labels[int(prov)]}\n")
