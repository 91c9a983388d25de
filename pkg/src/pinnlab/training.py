"""Loss assembly, Adam with step decay, and the training loop.

Per iteration: residuals are evaluated once on the current population and
reused for both the gradient and the sampler decision; then the optimizer
steps, the causal gate (if any) advances, and the sampler produces the next
population.  Runs are bit-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import diagnostics as dx
from .gate import GateState, gate_update, gate_value
from .network import FieldNetwork, save_checkpoint
from .problems import PdeProblem
from .sampling import RESAMPLED, make_sampler, write_snapshot

__all__ = [
    "SamplerSettings",
    "GateSettings",
    "TrainConfig",
    "TrainingDiverged",
    "AdamState",
    "adam_step",
    "step_lr",
    "LossParts",
    "total_loss",
    "DiagRecord",
    "DIAG_FIELDS",
    "records_to_csv",
    "TrainResult",
    "train",
]


@dataclass(frozen=True)
class SamplerSettings:
    kind: str = "rrr"
    dense_size: int = 100_000
    period: int = 100
    added_per_event: int = 1
    power: float = 1.0
    placement: str = "uniform"


@dataclass(frozen=True)
class GateSettings:
    alpha: float = 5.0
    lr: float = 1e-3
    tolerance: float = 20.0
    max_step: float = 0.1
    initial_shift: float = -0.5
    kind: str = "tanh"


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int
    n_collocation: int = 1000
    lambda_residual: float = 1.0
    lambda_ic: float = 100.0
    lambda_bc: float = 100.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_rate: float = 0.9
    decay_period: int = 5000
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    gate: GateSettings = field(default_factory=GateSettings)
    seed: int = 0
    log_period: int = 500
    snapshot_period: int = 0
    checkpoint_period: int = 0
    n_ic: int = 256
    n_bc: int = 256
    grid_resolution: tuple[int, ...] | None = None

    def __post_init__(self):
        if min(self.lambda_residual, self.lambda_ic, self.lambda_bc) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError("decay_rate must lie in (0, 1]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


class TrainingDiverged(RuntimeError):
    """The loss became non-finite; carries the abort point and partial output."""

    def __init__(self, iteration, records, last_checkpoint=None):
        self.iteration = iteration
        self.records = records
        self.last_checkpoint = last_checkpoint
        extra = f" (last checkpoint: {last_checkpoint})" if last_checkpoint else ""
        super().__init__(f"non-finite loss at iteration {iteration}{extra}")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns the new theta."""
    if theta.shape != grad.shape:
        raise ValueError("theta and gradient shapes differ")
    state.step_count += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = state.m / (1.0 - beta1**state.step_count)
    v_hat = state.v / (1.0 - beta2**state.step_count)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


def step_lr(iteration: int, base_lr: float, rate: float = 0.9, period: int = 5000) -> float:
    """Step-decayed learning rate: base * rate^(iteration // period)."""
    return base_lr * rate ** (iteration // period)


# ---------------------------------------------------------------------------
# loss assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossParts:
    total: float
    residual: float  # gate-weighted when a gate is active
    ic: float
    bc: float


def _assemble(
    net: FieldNetwork,
    points: np.ndarray,
    problem: PdeProblem,
    weights: tuple[float, float, float],
    ic_terms: list,
    bc_terms: list,
    gate: GateState | None,
    want_grad: bool,
):
    lam_r, lam_ic, lam_bc = weights
    trace = [] if want_grad else None
    jets = net.forward_jets(points, order=problem.residual_order, trace=trace)
    residuals = problem.residual_batch(jets)
    if gate is not None:
        g = gate_value(problem.times(points), gate)
        loss_r = float(np.mean(residuals**2 * g))
    else:
        g = None
        loss_r = float(np.mean(residuals**2))

    tape = ad.LossTape(net) if want_grad else None
    if want_grad:
        rbar = 2.0 * lam_r * residuals / residuals.size
        if g is not None:
            rbar = rbar * g
        tape.add(trace, problem.residual_adjoint(jets, rbar))

    loss_ic = sum(term.loss(net, tape, lam_ic) for term in ic_terms)
    loss_bc = sum(term.loss(net, tape, lam_bc) for term in bc_terms)
    total = lam_r * loss_r + lam_ic * loss_ic + lam_bc * loss_bc
    return LossParts(total, loss_r, loss_ic, loss_bc), tape, residuals


def total_loss(
    net: FieldNetwork,
    population,
    problem: PdeProblem,
    gate: GateState | None = None,
    weights: tuple[float, float, float] = (1.0, 100.0, 100.0),
    ic_terms: list | None = None,
    bc_terms: list | None = None,
    n_data_points: int = 256,
) -> tuple[float, LossParts]:
    """Weighted total loss and its components on a collocation set.

    ic/bc terms default to a deterministic sample of n_data_points each.
    """
    points = population.points if hasattr(population, "points") else np.asarray(population)
    if ic_terms is None:
        ic_terms = problem.ic_factory(n_data_points, np.random.default_rng(0))
    if bc_terms is None:
        bc_terms = problem.bc_factory(n_data_points, np.random.default_rng(1))
    parts, _, _ = _assemble(
        net, points, problem, weights, ic_terms, bc_terms, gate, want_grad=False
    )
    return parts.total, parts


# ---------------------------------------------------------------------------
# diagnostics records
# ---------------------------------------------------------------------------

DIAG_FIELDS = (
    "iteration",
    "lr",
    "gate_shift",
    "loss_total",
    "loss_residual",
    "loss_ic",
    "loss_bc",
    "mean_abs_residual",
    "max_abs_residual",
    "skewness",
    "kurtosis",
    "rel_l2_pct",
    "eval_count",
)


@dataclass(frozen=True)
class DiagRecord:
    iteration: int
    lr: float
    gate_shift: float
    loss_total: float
    loss_residual: float
    loss_ic: float
    loss_bc: float
    mean_abs_residual: float
    max_abs_residual: float
    skewness: float
    kurtosis: float
    rel_l2_pct: float
    eval_count: int

    def csv_row(self) -> str:
        vals = []
        for name in DIAG_FIELDS:
            v = getattr(self, name)
            vals.append(str(v) if isinstance(v, int) else repr(float(v)))
        return ",".join(vals)


def records_to_csv(records) -> str:
    lines = [",".join(DIAG_FIELDS)]
    lines.extend(r.csv_row() for r in records)
    return "\n".join(lines) + "\n"


def default_grid_resolution(problem: PdeProblem) -> tuple[int, ...]:
    if problem.domain.dim == 1:
        return (512,)
    if problem.domain.time_axis is not None:
        return (256, 100)
    return (256, 256)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    net: FieldNetwork
    records: list
    points: np.ndarray
    provenance: np.ndarray
    gate: GateState | None
    eval_count: int
    wall_clock_s: float


def train(
    problem: PdeProblem,
    net: FieldNetwork,
    config: TrainConfig,
    snapshot_dir=None,
    checkpoint_dir=None,
) -> TrainResult:
    t_start = time.perf_counter()
    sampler_seed, data_seed = np.random.SeedSequence(config.seed).spawn(2)
    rng_sampler = np.random.Generator(np.random.PCG64(sampler_seed))
    rng_data = np.random.Generator(np.random.PCG64(data_seed))

    sampler = make_sampler(
        config.sampler.kind,
        config.n_collocation,
        problem.domain,
        dense_size=config.sampler.dense_size,
        period=config.sampler.period,
        added_per_event=config.sampler.added_per_event,
        power=config.sampler.power,
        placement=config.sampler.placement,
    )
    gate = None
    if sampler.needs_gate:
        gs = config.gate
        gate = GateState(
            t_horizon=problem.time_horizon,
            shift=gs.initial_shift,
            alpha=gs.alpha,
            lr=gs.lr,
            tolerance=gs.tolerance,
            max_step=gs.max_step,
            kind=gs.kind,
        )

    ic_terms = problem.ic_factory(config.n_ic, rng_data)
    bc_terms = problem.bc_factory(config.n_bc, rng_data)
    weights = (config.lambda_residual, config.lambda_ic, config.lambda_bc)

    points = sampler.initial_points(rng_sampler)
    provenance = np.full(points.shape[0], RESAMPLED, dtype=np.int8)
    adam = AdamState.zeros(net.n_params)
    eval_count = 0
    records: list[DiagRecord] = []
    last_checkpoint = None

    resolution = config.grid_resolution or default_grid_resolution(problem)
    grid_points = problem.domain.grid(resolution, centers=True)
    ref_values = None
    if problem.reference is not None:
        ref_values = problem.reference.values(grid_points)

    def dense_residual_fn(dense_points):
        nonlocal eval_count
        jets = net.forward_jets(dense_points, order=problem.residual_order)
        eval_count += dense_points.shape[0]
        return np.abs(problem.residual_batch(jets))

    def grid_record(iteration, lr, parts):
        res_jets = net.forward_jets(grid_points, order=problem.residual_order)
        abs_res = np.abs(problem.residual_batch(res_jets))
        try:
            skew = dx.skewness(abs_res)
        except dx.UndefinedMetricError:
            skew = float("nan")
        try:
            kurt = dx.kurtosis(abs_res)
        except dx.UndefinedMetricError:
            kurt = float("nan")
        rel = float("nan")
        if ref_values is not None:
            try:
                rel = dx.relative_l2(res_jets.val[:, 0], ref_values)
            except dx.UndefinedMetricError:
                pass
        return DiagRecord(
            iteration=iteration,
            lr=lr,
            gate_shift=gate.shift if gate is not None else float("nan"),
            loss_total=parts.total,
            loss_residual=parts.residual,
            loss_ic=parts.ic,
            loss_bc=parts.bc,
            mean_abs_residual=float(abs_res.mean()),
            max_abs_residual=float(abs_res.max()),
            skewness=skew,
            kurtosis=kurt,
            rel_l2_pct=rel,
            eval_count=eval_count,
        )

    times = None
    for iteration in range(config.max_iterations):
        lr = step_lr(iteration, config.lr, config.decay_rate, config.decay_period)
        if problem.domain.time_axis is not None:
            times = problem.times(points)

        parts, tape, residuals = _assemble(
            net, points, problem, weights, ic_terms, bc_terms, gate, want_grad=True
        )
        eval_count += points.shape[0]
        if not np.isfinite(parts.total):
            raise TrainingDiverged(iteration, records, last_checkpoint)

        if config.log_period and iteration % config.log_period == 0:
            records.append(grid_record(iteration, lr, parts))

        grad = ad.loss_gradient(tape)
        net.theta = adam_step(
            net.theta, grad, adam, lr, config.beta1, config.beta2, config.adam_eps
        )
        if gate is not None:
            gate = gate_update(gate, parts.residual)

        update = sampler.step(
            points,
            np.abs(residuals),
            times,
            gate,
            rng_sampler,
            iteration,
            dense_residual_fn,
        )
        points = update.points
        provenance = update.provenance

        if snapshot_dir is not None and config.snapshot_period:
            if (iteration + 1) % config.snapshot_period == 0:
                fit = update.fitness
                if fit is None:
                    fit = np.full(points.shape[0], np.nan)
                header = f"# iteration={iteration + 1}"
                if gate is not None:
                    header += f" gate_shift={gate.shift!r}"
                _write_snapshot_with_header(
                    f"{snapshot_dir}/population_{iteration + 1:08d}.txt",
                    header,
                    points,
                    fit,
                    provenance,
                )
        if checkpoint_dir is not None and config.checkpoint_period:
            if (iteration + 1) % config.checkpoint_period == 0:
                last_checkpoint = f"{checkpoint_dir}/ckpt_{iteration + 1:08d}.bin"
                save_checkpoint(last_checkpoint, net)

    if config.max_iterations > 0:
        parts, _, _ = _assemble(
            net, points, problem, weights, ic_terms, bc_terms, gate, want_grad=False
        )
        lr = step_lr(config.max_iterations, config.lr, config.decay_rate, config.decay_period)
        records.append(grid_record(config.max_iterations, lr, parts))

    return TrainResult(
        net=net,
        records=records,
        points=points,
        provenance=provenance,
        gate=gate,
        eval_count=eval_count,
        wall_clock_s=time.perf_counter() - t_start,
    )


def _write_snapshot_with_header(path, header, points, fitness, provenance):
    from .sampling import RETAINED

    labels = {RETAINED: "retained", RESAMPLED: "resampled"}
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, f, prov in zip(points, fitness, provenance):
            coords = " ".join(repr(float(c)) for c in p)
            fh.write(f"{coords} {float(f)!r} {labels[int(prov)]}\n")
