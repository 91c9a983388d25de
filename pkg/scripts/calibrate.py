"""Calibration probes for the acceptance-scale runs (development aid)."""

import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

CASES = {}


def _run(case):
    import numpy as np
    import pinnlab as pl
    from pinnlab.training import SamplerSettings, TrainConfig, train
    from pinnlab.diagnostics import miou

    t0 = time.perf_counter()
    kind = case["kind"]
    seed = case.get("seed", 0)
    out = {"case": case}
    if kind.startswith("conv"):
        beta = case["beta"]
        problem = pl.convection_problem(beta)
        net_seed = int(np.random.SeedSequence(seed).spawn(3)[2].generate_state(1)[0])
        net = pl.init_network(pl.NetworkSpec(2, 50, 4, seed=net_seed))
        cfg = TrainConfig(max_iterations=case["iters"], n_collocation=1000, seed=seed,
                          log_period=1000, sampler=SamplerSettings(kind=case["sampler"]))
        res = train(problem, net, cfg)
        out["rel_series"] = [(r.iteration, r.rel_l2_pct) for r in res.records]
        out["final_rel"] = res.records[-1].rel_l2_pct
        out["skew"] = [r.skewness for r in res.records]
        out["kurt"] = [r.kurtosis for r in res.records]
        out["gate"] = [r.gate_shift for r in res.records]
    elif kind == "ode":
        problem = pl.harmonic_ode_problem(20.0)
        net = pl.init_network(pl.NetworkSpec(1, case["width"], case["depth"],
                                             activation=case["act"], seed=seed))
        cfg = TrainConfig(max_iterations=case["iters"], n_collocation=1000, seed=seed,
                          log_period=2500, grid_resolution=(1024,),
                          lambda_ic=100.0, lambda_bc=case.get("lbc", 100.0),
                          sampler=SamplerSettings(kind="fixed", placement="equispaced"))
        res = train(problem, net, cfg)
        out["rel_series"] = [(r.iteration, r.rel_l2_pct) for r in res.records]
        out["final_rel"] = res.records[-1].rel_l2_pct
    elif kind == "eikonal":
        geom = pl.circle_polygon(0.5, 256)
        problem = pl.eikonal_problem(geom)
        net = pl.init_network(pl.NetworkSpec(2, 128, 4, variant="modified", seed=seed))
        cfg = TrainConfig(max_iterations=case["iters"], n_collocation=1000, seed=seed,
                          log_period=2500, lambda_ic=500.0, lambda_bc=10.0,
                          grid_resolution=(256, 256),
                          sampler=SamplerSettings(kind=case["sampler"]))
        res = train(problem, net, cfg)
        pts = problem.domain.grid((256, 256), centers=True)
        pred = res.net.values(pts)
        ref = problem.reference.values(pts)
        out["miou"] = miou(pred, ref)
        out["final_rel"] = res.records[-1].rel_l2_pct
        out["rel_series"] = [(r.iteration, r.rel_l2_pct) for r in res.records]
    out["seconds"] = time.perf_counter() - t0
    return out


def main():
    cases = [
        {"name": "ode-tanh-50x4", "kind": "ode", "width": 50, "depth": 4, "act": "tanh", "iters": 50000},
        {"name": "eik-rrr", "kind": "eikonal", "sampler": "rrr", "iters": 50000},
        {"name": "b50-rrr-s0", "kind": "conv", "beta": 50.0, "sampler": "rrr", "iters": 60000},
        {"name": "b50-causal-s0", "kind": "conv", "beta": 50.0, "sampler": "causal-rrr", "iters": 60000},
        {"name": "b50-fixed-s0", "kind": "conv", "beta": 50.0, "sampler": "fixed", "iters": 60000},
        {"name": "b30-rrr-s1", "kind": "conv", "beta": 30.0, "sampler": "rrr", "iters": 30000, "seed": 1},
        {"name": "b30-rrr-s2", "kind": "conv", "beta": 30.0, "sampler": "rrr", "iters": 30000, "seed": 2},
        {"name": "ode-sin-50x4", "kind": "ode", "width": 50, "depth": 4, "act": "sin", "iters": 50000},
    ]
    os.makedirs("/tmp/calib", exist_ok=True)
    os.environ["OPENBLAS_NUM_THREADS"] = "1"
    import multiprocessing as mp

    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=2, mp_context=ctx) as pool:
        futures = {pool.submit(_run, c): c["name"] for c in cases}
        for fut in futures:
            pass
        from concurrent.futures import as_completed

        for fut in as_completed(futures):
            name = futures[fut]
            try:
                result = fut.result()
                with open(f"/tmp/calib/{name}.json", "w") as fh:
                    json.dump(result, fh)
                print(f"done {name}: final_rel={result.get('final_rel'):.2f}% "
                      f"miou={result.get('miou', float('nan'))} ({result['seconds']:.0f}s)",
                      flush=True)
            except Exception as exc:
                print(f"FAILED {name}: {exc!r}", flush=True)


if __name__ == "__main__":
    main()
