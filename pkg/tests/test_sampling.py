"""Sampler registry: threshold selection, baselines, counting instrumentation."""

import numpy as np
import pytest

import pinnlab as pl
from pinnlab.gate import GateState
from pinnlab.problems import Box
from pinnlab.sampling import (
    RESAMPLED,
    RETAINED,
    DenseSet,
    Population,
    dense_topk,
    distribution_resample,
    expected_refinement_evals,
    make_sampler,
    rar_greedy_step,
    rar_distribution_step,
    rrr_step,
    threshold,
    write_snapshot,
)

BOX = Box(lo=(0.0, 0.0), hi=(1.0, 1.0), time_axis=1)


def population(points):
    points = np.asarray(points, dtype=np.float64)
    return Population(
        points,
        np.zeros(points.shape[0]),
        np.full(points.shape[0], RESAMPLED, dtype=np.int8),
    )


def test_threshold_is_the_mean():
    assert threshold([0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.25)
    assert threshold([3.7, 3.7, 3.7]) == pytest.approx(3.7)
    assert threshold([2.5]) == 2.5
    with pytest.raises(ValueError):
        threshold([])


def test_abs_and_gated_fitness():
    assert np.array_equal(pl.abs_fitness(np.array([-1.0, 3.0])), [1.0, 3.0])
    assert pl.abs_fitness(np.array([-2.0]))[0] == 2.0
    assert pl.abs_fitness(np.array([0.0]))[0] == 0.0
    gate = GateState(t_horizon=1.0, shift=-0.5, alpha=5.0)
    fit = pl.gated_fitness(np.array([1.0, 1.0]), np.array([0.0, 1.0]), gate)
    assert fit[0] == pytest.approx((1 - np.tanh(2.5)) / 2, abs=1e-12)
    assert fit[1] == pytest.approx((1 - np.tanh(7.5)) / 2, abs=1e-12)
    # fully open gate recovers the plain magnitude fitness
    open_gate = GateState(t_horizon=1.0, shift=1e6)
    assert np.allclose(
        pl.gated_fitness(np.array([-2.0, 0.5]), np.array([0.3, 0.9]), open_gate), [2.0, 0.5]
    )


def test_rrr_step_keeps_strictly_above_mean():
    rng = np.random.default_rng(0)
    pop = population([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]])
    fitness = np.array([0.1, 0.2, 0.3, 0.4])
    new = rrr_step(pop, fitness, BOX, rng)
    assert new.size == 4
    assert new.retained_count == 2
    kept = new.points[new.provenance == RETAINED]
    assert np.allclose(sorted(kept[:, 0]), [0.3, 0.4])
    assert new.tau == pytest.approx(0.25)


def test_rrr_step_constant_fitness_releases_everything():
    rng = np.random.default_rng(1)
    for c in (0.0, 0.3, 7.7):
        pop = population(np.random.default_rng(2).uniform(size=(16, 2)))
        new = rrr_step(pop, np.full(16, c), BOX, rng)
        assert new.retained_count == 0


def test_rrr_step_single_point_always_resampled():
    rng = np.random.default_rng(3)
    pop = population([[0.5, 0.5]])
    new = rrr_step(pop, np.array([123.0]), BOX, rng)
    assert new.retained_count == 0 and new.size == 1


def test_rrr_step_release_and_nonempty_resample_fuzz():
    rng = np.random.default_rng(4)
    for trial in range(2000):
        n = int(rng.integers(1, 200))
        style = trial % 4
        if style == 0:
            fitness = rng.uniform(size=n)
        elif style == 1:
            fitness = np.full(n, float(rng.uniform()))
        elif style == 2:
            fitness = np.zeros(n)
            fitness[rng.integers(n)] = 1.0
        else:
            fitness = rng.integers(0, 3, size=n).astype(float)  # heavy ties
        pop = population(rng.uniform(size=(n, 2)))
        new = rrr_step(pop, fitness, BOX, rng)
        assert new.size == n
        n_resampled = int(np.sum(new.provenance == RESAMPLED))
        assert n_resampled >= 1
        kept_fitness = new.fitness[new.provenance == RETAINED]
        assert np.all(kept_fitness > new.tau)
        assert BOX.contains(new.points).all()


def test_rrr_step_rejects_length_mismatch():
    with pytest.raises(ValueError):
        rrr_step(population([[0.5, 0.5]]), np.array([1.0, 2.0]), BOX, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# uniform baselines
# ---------------------------------------------------------------------------


def test_fixed_sampler_never_moves():
    s = make_sampler("fixed", 64, BOX)
    rng = np.random.default_rng(0)
    pts = s.initial_points(rng)
    assert np.array_equal(pts, make_sampler("fixed", 64, BOX).initial_points(np.random.default_rng(0)))
    assert not np.array_equal(pts, make_sampler("fixed", 64, BOX).initial_points(np.random.default_rng(1)))
    assert BOX.contains(pts).all()
    upd = s.step(pts, np.zeros(64), None, None, rng, 0, None)
    assert upd.points is pts


def test_fixed_equispaced_placement():
    box1 = Box(lo=(-1.0,), hi=(1.0,))
    s = make_sampler("fixed", 5, box1, placement="equispaced")
    pts = s.initial_points(np.random.default_rng(0))
    assert np.allclose(pts[:, 0], [-1.0, -0.5, 0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        make_sampler("fixed", 5, BOX, placement="equispaced")


def test_dynamic_sampler_statistics():
    s = make_sampler("dynamic", 100_000, BOX)
    rng = np.random.default_rng(0)
    pts = s.step(s.initial_points(rng), None, None, None, rng, 0, None).points
    assert BOX.contains(pts).all()
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01 * 1.0 + 0.005)
    assert make_sampler("dynamic", 0, BOX) if False else True  # n = 0 handled below


def test_sampler_rejects_empty_population():
    with pytest.raises(ValueError):
        make_sampler("dynamic", 0, BOX)


# ---------------------------------------------------------------------------
# dense-set baselines
# ---------------------------------------------------------------------------


def dense3():
    return DenseSet(np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]]))


def test_rar_greedy_adds_top_points():
    train = np.zeros((2, 2))
    grown = rar_greedy_step(train, dense3(), np.array([1.0, 5.0, 3.0]), 1)
    assert grown.shape == (3, 2)
    assert np.allclose(grown[-1], [0.2, 0.2])
    grown = rar_greedy_step(train, dense3(), np.array([1.0, 5.0, 3.0]), 3)
    assert grown.shape == (5, 2)
    # tie: lowest index wins
    grown = rar_greedy_step(train, dense3(), np.array([5.0, 5.0, 1.0]), 1)
    assert np.allclose(grown[-1], [0.1, 0.1])
    with pytest.raises(ValueError):
        rar_greedy_step(train, dense3(), np.array([1.0, 5.0, 3.0]), 4)


def test_distribution_resample_degenerate_and_deterministic_cases():
    rng = np.random.default_rng(0)
    pts, fell_back = distribution_resample(dense3(), np.array([0.0, 1.0, 0.0]), 1.0, 50, rng)
    assert not fell_back
    assert np.allclose(pts, [0.2, 0.2])
    pts, fell_back = distribution_resample(dense3(), np.zeros(3), 1.0, 50, rng)
    assert fell_back
    with pytest.raises(ValueError):
        distribution_resample(dense3(), np.ones(3), -1.0, 5, rng)


def test_distribution_resample_frequencies():
    dense = DenseSet(np.array([[0.0, 0.0], [1.0, 1.0]]))
    rng = np.random.default_rng(1)
    pts, _ = distribution_resample(dense, np.array([1.0, 2.0]), 1.0, 100_000, rng)
    frac_second = np.mean(pts[:, 0] == 1.0)
    assert abs(frac_second - 2.0 / 3.0) < 0.01


def test_distribution_power_zero_is_uniform():
    dense = DenseSet(np.array([[0.0, 0.0], [1.0, 1.0]]))
    rng = np.random.default_rng(2)
    pts, _ = distribution_resample(dense, np.array([1.0, 1000.0]), 0.0, 100_000, rng)
    assert abs(np.mean(pts[:, 0] == 1.0) - 0.5) < 0.01


def test_rar_distribution_grows_by_m():
    train = np.zeros((4, 2))
    rng = np.random.default_rng(0)
    grown, _ = rar_distribution_step(train, dense3(), np.array([1.0, 2.0, 3.0]), 1.0, 2, rng)
    assert grown.shape == (6, 2)


def test_rar_distribution_large_power_concentrates_on_argmax():
    dense = DenseSet(np.random.default_rng(0).uniform(size=(100, 2)))
    residuals = np.random.default_rng(1).uniform(0.1, 1.0, size=100)
    best = dense.points[np.argmax(residuals)]
    rng = np.random.default_rng(2)
    grown, _ = rar_distribution_step(np.zeros((0, 2)), dense, residuals, 2000.0, 1000, rng)
    greedy = rar_greedy_step(np.zeros((0, 2)), dense, residuals, 1)
    assert np.allclose(greedy[0], best)
    assert np.mean(np.all(grown == best, axis=1)) > 0.99


def test_dense_topk():
    dense = DenseSet(np.arange(10, dtype=float).reshape(5, 2))
    res = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    assert np.array_equal(dense_topk(dense, res, 5), dense.points)
    top2 = dense_topk(dense, res, 2)
    assert np.array_equal(top2, dense.points[:2])
    tied = dense_topk(dense, np.array([1.0, 2.0, 2.0, 1.0, 0.0]), 1)
    assert np.array_equal(tied[0], dense.points[1])


def test_make_sampler_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_sampler("annealed", 10, BOX)


# ---------------------------------------------------------------------------
# evaluation counting
# ---------------------------------------------------------------------------


def test_expected_refinement_evals_matches_simulation():
    for n_iters, period, added, n0, dense in [
        (1000, 100, 1, 1000, 10_000),
        (330, 50, 3, 17, 500),
        (99, 100, 2, 10, 50),
    ]:
        count = 0
        size = n0
        events = 0
        for i in range(n_iters):
            count += size
            if (i + 1) % period == 0:
                count += dense
                size += added
                events += 1
        assert expected_refinement_evals(n_iters, period, added, n0, dense) == count
        assert events == n_iters // period


def test_snapshot_format(tmp_path):
    path = tmp_path / "snap.txt"
    write_snapshot(
        path,
        np.array([[0.1, 0.2], [0.3, 0.4]]),
        np.array([1.5, np.nan]),
        np.array([RETAINED, RESAMPLED], dtype=np.int8),
    )
    lines = path.read_text().strip().splitlines()
    assert lines[0].endswith("retained") and lines[1].endswith("resampled")
    assert lines[0].split()[:3] == ["0.1", "0.2", "1.5"]
