"""Run metrics: residual-field moments, error norms, sign-class overlap.

Skewness and kurtosis use population moments (divide by N) throughout; the
skewness additionally carries the finite-sample adjustment factor
sqrt(N(N-1))/(N-2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UndefinedMetricError",
    "skewness",
    "kurtosis",
    "relative_l2",
    "miou",
    "residual_field_grid",
    "FailureWindow",
    "FailureReport",
    "failure_indicator",
]


class UndefinedMetricError(ValueError):
    """The requested metric is undefined for this input (log as missing, not 0)."""


def _population_moments(samples: np.ndarray):
    mean = samples.mean()
    centered = samples - mean
    return centered, float(np.mean(centered**2))


def skewness(samples) -> float:
    """Adjusted skewness: sqrt(N(N-1))/(N-2) * m3 / s^3 with population moments."""
    y = np.asarray(samples, dtype=np.float64).ravel()
    n = y.size
    if n < 3:
        raise UndefinedMetricError(f"skewness needs >= 3 samples, got {n}")
    centered, m2 = _population_moments(y)
    if m2 == 0.0:
        raise UndefinedMetricError("skewness undefined for zero variance")
    m3 = float(np.mean(centered**3))
    adjust = np.sqrt(n * (n - 1.0)) / (n - 2.0)
    return float(adjust * m3 / m2**1.5)


def kurtosis(samples) -> float:
    """Excess kurtosis m4 / s^4 - 3 with population moments."""
    y = np.asarray(samples, dtype=np.float64).ravel()
    n = y.size
    if n < 2:
        raise UndefinedMetricError(f"kurtosis needs >= 2 samples, got {n}")
    centered, m2 = _population_moments(y)
    if m2 == 0.0:
        raise UndefinedMetricError("kurtosis undefined for zero variance")
    m4 = float(np.mean(centered**4))
    return float(m4 / m2**2 - 3.0)


def relative_l2(predicted: np.ndarray, reference: np.ndarray) -> float:
    """100 * ||predicted - reference||_2 / ||reference||_2."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if predicted.shape != reference.shape:
        raise ValueError("grids must have matching shapes")
    ref_norm = float(np.linalg.norm(reference))
    if ref_norm == 0.0:
        raise UndefinedMetricError("relative L2 undefined for a zero reference")
    return 100.0 * float(np.linalg.norm(predicted - reference)) / ref_norm


def miou(predicted_sdf: np.ndarray, reference_sdf: np.ndarray) -> float:
    """Mean IOU of the sign classes {interior: u < 0, exterior: u >= 0}."""
    predicted_sdf = np.asarray(predicted_sdf).ravel()
    reference_sdf = np.asarray(reference_sdf).ravel()
    if predicted_sdf.shape != reference_sdf.shape:
        raise ValueError("grids must have matching shapes")
    total = 0.0
    for cls_pred, cls_ref in (
        (predicted_sdf < 0, reference_sdf < 0),
        (predicted_sdf >= 0, reference_sdf >= 0),
    ):
        union = np.sum(cls_pred | cls_ref)
        if union == 0:
            total += 1.0  # class absent from both grids
        else:
            total += np.sum(cls_pred & cls_ref) / union
    return float(total / 2.0)


def residual_field_grid(net, problem, resolution: tuple[int, ...]):
    """|residual| on a uniform cell-center lattice over the domain.

    Returns (points (M, d), |R| (M,)) with M = prod(resolution).
    """
    points = problem.domain.grid(resolution, centers=True)
    jets = net.forward_jets(points, order=problem.residual_order)
    return points, np.abs(problem.residual_batch(jets))


@dataclass(frozen=True)
class FailureWindow:
    start_iteration: int
    end_iteration: int
    peak_skewness: float
    peak_kurtosis: float


@dataclass
class FailureReport:
    windows: list[FailureWindow]

    @property
    def flagged(self) -> bool:
        return bool(self.windows)


def failure_indicator(
    skew_series,
    kurt_series,
    rel_l2_series,
    iterations,
    *,
    skew_threshold: float = 10.0,
    kurt_threshold: float = 100.0,
    min_duration: int = 1000,
    error_slack: float = 0.05,
) -> FailureReport:
    """Flag sustained imbalanced-residual windows with no error progress.

    A window is a maximal run of logged steps with skewness >= skew_threshold
    and kurtosis >= kurt_threshold.  It is reported only if it spans at least
    min_duration iterations and the relative error at its end has not
    improved by more than error_slack (relative) over its start.
    """
    skew = np.asarray(skew_series, dtype=np.float64)
    kurt = np.asarray(kurt_series, dtype=np.float64)
    rel = np.asarray(rel_l2_series, dtype=np.float64)
    iters = np.asarray(iterations)
    if not (skew.shape == kurt.shape == rel.shape == iters.shape):
        raise ValueError("series must be aligned")
    with np.errstate(invalid="ignore"):
        hot = (skew >= skew_threshold) & (kurt >= kurt_threshold)
    hot &= np.isfinite(skew) & np.isfinite(kurt)
    windows = []
    i = 0
    n = hot.size
    while i < n:
        if not hot[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and hot[j + 1]:
            j += 1
        span = int(iters[j] - iters[i])
        stalled = np.isfinite(rel[i]) and np.isfinite(rel[j]) and rel[j] >= rel[i] * (1.0 - error_slack)
        if span >= min_duration and stalled:
            windows.append(
                FailureWindow(
                    start_iteration=int(iters[i]),
                    end_iteration=int(iters[j]),
                    peak_skewness=float(np.max(skew[i : j + 1])),
                    peak_kurtosis=float(np.max(kurt[i : j + 1])),
                )
            )
        i = j + 1
    return FailureReport(windows)
