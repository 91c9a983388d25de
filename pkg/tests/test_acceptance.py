"""Acceptance suite: every release criterion at its stated scale and tolerance.

The training-based criteria run the real presets (tens of thousands of
iterations); expect a multi-hour wall time on two cores.  One [PASS]/[FAIL]
line is printed per criterion (visible with pytest -s).
"""

import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

import pinnlab as pl
from pinnlab import autodiff as ad
from pinnlab.diagnostics import failure_indicator, kurtosis, miou, skewness
from pinnlab.gate import GateState, gate_update, gate_value
from pinnlab.lab import frozen_rrr_run, lp_norm, lp_sampling_identity
from pinnlab.objectives import get_objective
from pinnlab.sampling import RESAMPLED, RETAINED, expected_refinement_evals, rrr_step
from pinnlab.sampling import Population
from pinnlab.problems import Box

# ---------------------------------------------------------------------------
# heavy-run machinery
# ---------------------------------------------------------------------------

_HEAVY_CACHE = {}


def _worker(case):  # runs in a spawned process
    import time

    import numpy as np
    import pinnlab as pl
    from pinnlab.config import resolve_config
    from pinnlab.diagnostics import miou

    t0 = time.perf_counter()
    name, preset, seed, extras = case
    overrides = {"train.seed": seed}
    overrides.update(extras.get("overrides", {}))
    config = resolve_config(preset=preset, overrides=overrides)
    problem = config.build_problem()
    net = config.build_network(problem)
    train_config = config.build_train_config()

    checkpoint_dir = extras.get("checkpoint_dir")
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    result = pl.train(problem, net, train_config, checkpoint_dir=checkpoint_dir)

    summary = {
        "name": name,
        "final_rel": result.records[-1].rel_l2_pct,
        "iterations": [r.iteration for r in result.records],
        "rel": [r.rel_l2_pct for r in result.records],
        "skew": [r.skewness for r in result.records],
        "kurt": [r.kurtosis for r in result.records],
        "gate": [r.gate_shift for r in result.records],
        "eval_count": result.eval_count,
        "seconds": time.perf_counter() - t0,
    }
    if extras.get("miou"):
        pts = problem.domain.grid((256, 256), centers=True)
        summary["miou"] = miou(result.net.values(pts), problem.reference.values(pts))
    if extras.get("frontier"):
        # contiguous low-error region radiating from the constrained endpoint
        xs = problem.domain.grid((2048,))
        ref = problem.reference.values(xs)
        frontiers = []
        for it in range(train_config.checkpoint_period, train_config.max_iterations + 1,
                        train_config.checkpoint_period):
            ckpt = pl.load_checkpoint(f"{checkpoint_dir}/ckpt_{it:08d}.bin")
            err = np.abs(ckpt.values(xs) - ref)
            good = err < 0.3
            frontier = int(np.argmin(good)) if not good.all() else good.size
            frontiers.append((it, frontier / good.size))
        summary["frontiers"] = frontiers
    return summary


CASES = {
    "b30-rrr-s1": ("convection-b30-rrr", 1, {}),
    "b30-rrr-s2": ("convection-b30-rrr", 2, {}),
    "b30-fixed-s0": ("convection-b30-fixed", 0, {}),
    "b30-fixed-s1": ("convection-b30-fixed", 1, {}),
    "b30-fixed-s2": ("convection-b30-fixed", 2, {}),
    "b50-rrr-s0": ("convection-b50-rrr", 0, {}),
    "b50-rrr-s1": ("convection-b50-rrr", 1, {}),
    "b50-rrr-s2": ("convection-b50-rrr", 2, {}),
    "b50-causal-s0": ("convection-b50-causal-rrr", 0, {}),
    "b50-causal-s1": ("convection-b50-causal-rrr", 1, {}),
    "b50-causal-s2": ("convection-b50-causal-rrr", 2, {}),
    "b50-fixed-s0": ("convection-b50-fixed", 0, {}),
    "b50-fixed-s1": ("convection-b50-fixed", 1, {}),
    "b50-fixed-s2": ("convection-b50-fixed", 2, {}),
    "eikonal-rrr-s0": ("eikonal-circle-rrr", 0, {"miou": True}),
}


@pytest.fixture(scope="session")
def heavy(tmp_path_factory):
    if _HEAVY_CACHE:
        return _HEAVY_CACHE
    base = tmp_path_factory.mktemp("acceptance")

    # the propagation run needs periodic checkpoints to trace the frontier
    ode_extras = {
        "frontier": True,
        "checkpoint_dir": str(base / "ode_ckpts"),
        "overrides": {"train.checkpoint_period": 2500},
    }
    cases = dict(CASES)
    cases["ode"] = ("harmonic-ode", 0, ode_extras)

    import multiprocessing as mp

    os.environ["OPENBLAS_NUM_THREADS"] = "1"
    ctx = mp.get_context("spawn")
    jobs = [(name, preset, seed, extras) for name, (preset, seed, extras) in cases.items()]
    # longest first so the pool tail stays busy
    order = {"b50": 0, "eik": 1, "ode": 2, "b30": 3}
    jobs.sort(key=lambda j: order.get(j[0][:3], 9))
    with ProcessPoolExecutor(max_workers=2, mp_context=ctx) as pool:
        futures = {pool.submit(_worker, job): job[0] for job in jobs}
        from concurrent.futures import as_completed

        for fut in as_completed(futures):
            summary = fut.result()
            _HEAVY_CACHE[summary["name"]] = summary
            print(
                f"[run] {summary['name']}: rel={summary['final_rel']:.2f}% "
                f"({summary['seconds']:.0f}s)",
                flush=True,
            )

    # criterion 12 representative: the seed-0 retain-resample-release run,
    # executed twice through the full experiment runner
    from pinnlab.config import resolve_config
    from pinnlab.runner import read_diagnostics, run_experiment

    for tag in ("first", "second"):
        out = base / f"b30-rrr-s0-{tag}"
        status = run_experiment(resolve_config(preset="convection-b30-rrr"), out)
        assert status == 0
        _HEAVY_CACHE[f"b30-rrr-s0-{tag}"] = {
            "dir": str(out),
            "bytes": (out / "diagnostics.csv").read_bytes(),
            "diag": read_diagnostics(out),
        }
    print("[run] b30-rrr-s0 runner pair complete", flush=True)
    return _HEAVY_CACHE


def report(number, ok, detail):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] criterion {number}: {detail}", flush=True)
    assert ok, f"criterion {number}: {detail}"


# ---------------------------------------------------------------------------
# criteria 1-4: training outcomes
# ---------------------------------------------------------------------------


def test_criterion_1_convection_b30(heavy):
    rrr = [
        heavy["b30-rrr-s0-first"]["diag"]["rel_l2_pct"][-1],
        heavy["b30-rrr-s1"]["final_rel"],
        heavy["b30-rrr-s2"]["final_rel"],
    ]
    fixed = [heavy[f"b30-fixed-s{s}"]["final_rel"] for s in range(3)]
    ok = np.median(rrr) <= 10.0 and np.median(fixed) >= 50.0
    report(
        1,
        ok,
        f"beta=30 30k iters: adaptive median {np.median(rrr):.2f}% (runs: "
        f"{', '.join(f'{v:.1f}' for v in rrr)}) <= 10; "
        f"fixed median {np.median(fixed):.2f}% >= 50",
    )


def test_criterion_2_convection_b50(heavy):
    rrr = [heavy[f"b50-rrr-s{s}"]["final_rel"] for s in range(3)]
    causal = [heavy[f"b50-causal-s{s}"]["final_rel"] for s in range(3)]
    fixed = [heavy[f"b50-fixed-s{s}"]["final_rel"] for s in range(3)]

    fixed_run = heavy["b50-fixed-s0"]
    fixed_report = failure_indicator(
        fixed_run["skew"], fixed_run["kurt"], fixed_run["rel"], fixed_run["iterations"]
    )
    rrr_run = heavy["b50-rrr-s0"]
    rrr_report = failure_indicator(
        rrr_run["skew"], rrr_run["kurt"], rrr_run["rel"], rrr_run["iterations"]
    )
    ok = (
        np.median(rrr) <= 15.0
        and np.median(causal) <= 15.0
        and np.median(fixed) >= 50.0
        and len(fixed_report.windows) >= 1
        and len(rrr_report.windows) == 0
    )
    report(
        2,
        ok,
        f"beta=50 60k iters: adaptive {np.median(rrr):.2f}%, causal {np.median(causal):.2f}% "
        f"<= 15; fixed {np.median(fixed):.2f}% >= 50; stall windows fixed/adaptive: "
        f"{len(fixed_report.windows)}/{len(rrr_report.windows)}",
    )


def test_criterion_3_harmonic_ode_propagation(heavy):
    ode = heavy["ode"]
    fronts = [f for _, f in ode["frontiers"]]
    monotone = all(b >= a - 0.05 for a, b in zip(fronts, fronts[1:]))
    ok = ode["final_rel"] <= 5.0 and monotone and fronts[-1] >= 0.95
    report(
        3,
        ok,
        f"oscillator k=20: rel {ode['final_rel']:.2f}% <= 5 within 50k; "
        f"frontier {fronts[0]:.2f} -> {fronts[-1]:.2f} monotone={monotone}",
    )


def test_criterion_4_eikonal_circle(heavy):
    eik = heavy["eikonal-rrr-s0"]
    ok = eik["miou"] >= 0.95 and eik["final_rel"] <= 5.0
    report(4, ok, f"circle distance field: mIOU {eik['miou']:.4f} >= 0.95, rel {eik['final_rel']:.2f}% <= 5")


# ---------------------------------------------------------------------------
# criteria 5-7: sampling theory
# ---------------------------------------------------------------------------


def test_criterion_5_selection_guarantees_fuzz():
    box = Box(lo=(0.0, 0.0), hi=(1.0, 1.0))
    rng = np.random.default_rng(123)
    worst = None
    for trial in range(10_000):
        n = int(rng.integers(1, 10_001))
        style = trial % 5
        if style == 0:
            fitness = rng.uniform(size=n)
        elif style == 1:
            fitness = np.full(n, float(rng.uniform(0.0, 10.0)))
        elif style == 2:
            fitness = np.zeros(n)
            fitness[rng.integers(n)] = float(rng.uniform(0.1, 100.0))
        elif style == 3:
            fitness = rng.integers(0, 4, size=n).astype(float)
        else:
            fitness = rng.exponential(size=n) ** 3
        pop = Population(
            rng.uniform(size=(n, 2)), fitness, np.full(n, RESAMPLED, dtype=np.int8)
        )
        new = rrr_step(pop, fitness, box, rng)
        resampled = int(np.sum(new.provenance == RESAMPLED))
        kept = new.fitness[new.provenance == RETAINED]
        if not (new.size == n and resampled >= 1 and np.all(kept > new.tau)):
            worst = (trial, n)
            break
    report(5, worst is None, f"10^4 fuzzed fitness vectors: released<=mean, resampled>=1, size const (worst={worst})")


def test_criterion_6_frozen_field_accumulation():
    details = []
    ok = True
    for name in ("ackley", "michalewicz"):
        objective = get_objective(name)
        seq = np.random.SeedSequence(7).spawn(2)
        rng = np.random.Generator(np.random.PCG64(seq[0]))
        dense = objective.domain.uniform(
            100_000, np.random.Generator(np.random.PCG64(seq[1]))
        )
        dense_fit = objective.fitness(dense)
        l4 = lp_norm(dense_fit, 4)
        l6 = lp_norm(dense_fit, 6)
        dense_max = float(dense_fit.max())
        run = frozen_rrr_run(objective, 1000, 10_000, rng, record_every=1)
        means = run.retained_mean
        cross4 = int(np.argmax(means >= l4)) if np.any(means >= l4) else -1
        cross6 = int(np.argmax(means >= l6)) if np.any(means >= l6) else -1
        terminal = run.final_retained_mean()
        good = (
            cross4 >= 0
            and cross6 >= 0
            and cross4 <= cross6
            and terminal >= 0.95 * dense_max
        )
        ok = ok and good
        details.append(
            f"{name}: L4@{cross4 + 1} L6@{cross6 + 1} terminal {terminal:.4g} vs max {dense_max:.4g}"
        )
    report(6, ok, "; ".join(details))


def test_criterion_7_importance_identity():
    rng = np.random.default_rng(11)
    dense = np.linspace(-1.0, 1.0, 1_000_001)[:, None]
    fn = lambda p: np.abs(p[:, 0])
    details = []
    ok = True
    for k in (0.0, 1.0, 2.0):
        lhs, rhs, gap = lp_sampling_identity(fn, k, dense, 1_000_000, rng, volume=2.0)
        good = gap <= 1e-2
        if k == 2.0:
            target = np.sqrt(3.0 / 5.0)
            good = good and abs(lhs - target) / target <= 1e-2 and abs(rhs - target) / target <= 1e-2
        ok = ok and good
        details.append(f"k={k:g}: lhs {lhs:.4f} rhs {rhs:.4f} gap {gap:.2e}")
    report(7, ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criteria 8-11: oracles and instrumentation
# ---------------------------------------------------------------------------


def test_criterion_8_moment_oracles():
    def oracle_skew(y):
        n = len(y)
        mean = sum(y) / n
        m2 = sum((v - mean) ** 2 for v in y) / n
        m3 = sum((v - mean) ** 3 for v in y) / n
        return (n * (n - 1)) ** 0.5 / (n - 2) * m3 / m2**1.5

    def oracle_kurt(y):
        n = len(y)
        mean = sum(y) / n
        m2 = sum((v - mean) ** 2 for v in y) / n
        m4 = sum((v - mean) ** 4 for v in y) / n
        return m4 / m2**2 - 3.0

    spike = [0.0, 0.0, 0.0, 1.0]
    line = [1.0, 2.0, 3.0, 4.0, 5.0]
    ok = (
        abs(skewness(spike) - 2.0) < 1e-14
        and abs(skewness(spike) - oracle_skew(spike)) < 1e-14
        and abs(kurtosis(line) - (-1.3)) < 1e-14
        and abs(kurtosis(line) - oracle_kurt(line)) < 1e-14
    )
    rng = np.random.default_rng(5)
    for _ in range(100):
        center = rng.uniform(-5, 5)
        spread = rng.uniform(0.1, 3.0)
        sym = [center - 2 * spread, center - spread, center, center + spread, center + 2 * spread]
        ok = ok and abs(skewness(sym)) <= 1e-12 and abs(skewness(sym) - oracle_skew(sym)) <= 1e-12
    report(8, ok, "skew([0,0,0,1])=2, kurt([1..5])=-1.3, symmetric 5-point sets skew 0 (vs two-pass oracle)")


def test_criterion_9_derivative_oracles():
    rng = np.random.default_rng(17)
    worst_d1 = worst_d2 = worst_grad = 0.0
    for trial in range(100):
        n_in = int(rng.integers(1, 3))
        spec = pl.NetworkSpec(
            input_dim=n_in,
            hidden_width=int(rng.integers(4, 24)),
            hidden_depth=int(rng.integers(1, 4)),
            activation="tanh",
            seed=9000 + trial,
        )
        net = pl.init_network(spec)
        point = rng.uniform(-0.8, 0.8, size=n_in)
        jet = pl.eval_jet(net, point, order=2)
        fd = pl.finite_diff_oracle(net, point, order=2, step=1e-4)
        worst_d1 = max(worst_d1, np.linalg.norm(jet.d1 - fd.d1) / max(np.linalg.norm(fd.d1), 1e-3))
        worst_d2 = max(worst_d2, np.linalg.norm(jet.d2 - fd.d2) / max(np.linalg.norm(fd.d2), 1e-3))

        points = rng.uniform(-0.8, 0.8, size=(8, n_in))
        targets = rng.uniform(-1, 1, size=8)
        trace = []
        jets = net.forward_jets(points, order=0, trace=trace)
        err = jets.val[:, 0] - targets
        adj = jets.zeros_like()
        adj[0, :, 0] = 2.0 * err / err.size
        tape = ad.LossTape(net)
        tape.add(trace, adj)
        grad = ad.loss_gradient(tape)

        def loss_fn(n):
            e = n.forward_jets(points, order=0).val[:, 0] - targets
            return float(np.mean(e**2))

        fd_grad = ad.finite_diff_param_gradient(net, loss_fn, step=1e-5)
        worst_grad = max(worst_grad, np.linalg.norm(grad - fd_grad) / np.linalg.norm(fd_grad))
    ok = worst_d1 <= 1e-5 and worst_d2 <= 1e-4 and worst_grad <= 1e-5
    report(
        9,
        ok,
        f"100 fuzzed nets: worst d1 {worst_d1:.2e} <= 1e-5, d2 {worst_d2:.2e} <= 1e-4, "
        f"param grad {worst_grad:.2e} <= 1e-5",
    )


def test_criterion_10_causal_gate_suite(heavy):
    state = GateState(t_horizon=1.0)
    ok = gate_value(np.array([state.shift]), state)[0] == 0.5
    rng = np.random.default_rng(23)
    for _ in range(1000):
        shift = rng.uniform(-0.5, 1.5)
        s = GateState(t_horizon=1.0, shift=shift)
        t1, t2 = np.sort(rng.uniform(0, 1, size=2))
        if t1 < t2:
            ok = ok and gate_value(t1, s) > gate_value(t2, s)
        t = rng.uniform(0, 1)
        ok = ok and gate_value(t, s) < gate_value(t, GateState(t_horizon=1.0, shift=shift + rng.uniform(0.01, 1.0)))
    s = GateState(t_horizon=1.0)
    for _ in range(200):
        loss = float(rng.uniform(0.0, 1.2))
        stepped = gate_update(s, loss)
        inc = stepped.shift - s.shift
        ok = ok and 0.0 < inc <= 1e-4 * (1.0 + 1e-9)
        s = stepped
    causal = heavy["b50-causal-s0"]
    gates = [g for g in causal["gate"] if np.isfinite(g)]
    ok = ok and all(b >= a for a, b in zip(gates, gates[1:])) and gates[0] >= -0.5
    report(
        10,
        ok,
        f"gate: g(shift)=0.5 exact, 10^3 monotonicity/shift checks, increments in (0, 1e-4], "
        f"run shift {gates[0]:.3f} -> {gates[-1]:.3f} non-decreasing",
    )


def test_criterion_11_refinement_cost_instrumentation():
    problem = pl.convection_problem(30.0)
    net = pl.init_network(pl.NetworkSpec(2, 16, 2, seed=0))
    cfg = pl.TrainConfig(
        max_iterations=1000,
        n_collocation=1000,
        seed=0,
        log_period=1000,
        grid_resolution=(32, 16),
        sampler=pl.SamplerSettings(kind="rar-greedy", dense_size=10_000, period=100, added_per_event=1),
    )
    result = pl.train(problem, net, cfg)
    expected = expected_refinement_evals(1000, 100, 1, 1000, 10_000)
    ok = result.eval_count == expected == 1_104_500
    report(11, ok, f"greedy refinement eval counter {result.eval_count} == closed form {expected}")


def test_criterion_12_byte_identical_reruns(heavy):
    a = heavy["b30-rrr-s0-first"]["bytes"]
    b = heavy["b30-rrr-s0-second"]["bytes"]
    ok = a == b and len(a) > 0
    report(12, ok, f"seed-0 run repeated through the runner: diagnostics identical ({len(a)} bytes)")
