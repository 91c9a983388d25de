"""Causal gate for time-dependent training.

The gate g(t) smoothly masks late times; its shift parameter moves right only
as fast as the gated residual loss allows, so the time domain is revealed in
causal order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["GateState", "gate_value", "causal_pde_loss", "gate_update"]


@dataclass(frozen=True)
class GateState:
    """Gate parameters; shift is the only field that changes during a run."""

    t_horizon: float
    shift: float = -0.5
    alpha: float = 5.0
    lr: float = 1e-3
    tolerance: float = 20.0
    max_step: float = 0.1
    kind: str = "tanh"

    def __post_init__(self):
        if self.t_horizon <= 0:
            raise ValueError("t_horizon must be positive")
        if self.alpha <= 0 or self.lr <= 0:
            raise ValueError("alpha and lr must be positive")
        if not 0.0 < self.max_step <= 1.0:
            raise ValueError("max_step must lie in (0, 1]")
        if self.kind not in ("tanh", "relu-tanh"):
            raise ValueError(f"unknown gate kind {self.kind!r}")


def gate_value(t, state: GateState):
    """g(t) in (0, 1): decreasing in t, increasing in the shift."""
    t_norm = np.asarray(t, dtype=np.float64) / state.t_horizon
    z = state.alpha * (t_norm - state.shift)
    if state.kind == "tanh":
        return (1.0 - np.tanh(z)) / 2.0
    # alternative gate with a hard cutoff; kept as a config option only
    return np.maximum(0.0, -np.tanh(z))


def causal_pde_loss(residuals: np.ndarray, times: np.ndarray, state: GateState) -> float:
    """Gate-weighted mean squared residual."""
    residuals = np.asarray(residuals)
    times = np.asarray(times)
    if residuals.shape != times.shape:
        raise ValueError("residuals and times must have matching shapes")
    return float(np.mean(residuals**2 * gate_value(times, state)))


def gate_update(state: GateState, gated_loss: float) -> GateState:
    """Advance the shift by lr * min(exp(-tolerance * loss), max_step).

    The increment is clipped so a sudden loss drop cannot jump the gate, and
    it is mathematically positive, so the shift never decreases.  Once the
    increment drops below the shift's ulp (loss above ~1.5 at the default
    tolerance) the float shift simply stalls until the loss comes down.
    """
    if gated_loss < 0:
        raise ValueError("gated_loss must be >= 0")
    increment = state.lr * min(np.exp(-state.tolerance * gated_loss), state.max_step)
    return replace(state, shift=state.shift + increment)
