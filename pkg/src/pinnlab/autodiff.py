"""Forward jet propagation and reverse-mode parameter gradients.

Input derivatives of network outputs (up to order 2) are obtained by pushing
truncated Taylor coefficients through the layer stack; parameter gradients of
scalar losses are obtained by a reverse sweep over the recorded forward pass.
Everything is float64 and batched: a jet batch is a single (channels, N, H)
array whose channel 0 holds values, the next block first derivatives (one
channel per input coordinate) and the last block second derivatives (one
channel per unordered coordinate pair).

All reductions go through numpy's pairwise summation, so results are
run-to-run deterministic for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "JetValue",
    "Jets",
    "LossTape",
    "NumericOverflowError",
    "EmptyTapeError",
    "derivative_pairs",
    "n_channels",
    "seed_jets",
    "linear_forward",
    "linear_backward",
    "activation_forward",
    "activation_backward",
    "jet_mul_forward",
    "jet_mul_backward",
    "eval_jet",
    "finite_diff_oracle",
    "finite_diff_param_gradient",
    "loss_gradient",
]


class NumericOverflowError(FloatingPointError):
    """A layer produced a non-finite intermediate value."""

    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(f"non-finite value produced by layer {layer_index}")


class EmptyTapeError(ValueError):
    """loss_gradient was asked to differentiate a tape with no recorded loss."""


def derivative_pairs(n_inputs: int) -> list[tuple[int, int]]:
    """Unordered coordinate pairs (i <= j) indexing the second-derivative block."""
    return [(i, j) for i in range(n_inputs) for j in range(i, n_inputs)]


def n_channels(n_inputs: int, order: int) -> int:
    c = 1
    if order >= 1:
        c += n_inputs
    if order >= 2:
        c += len(derivative_pairs(n_inputs))
    return c


@dataclass
class Jets:
    """Batched jets: data[0] values, then first- and second-derivative channels."""

    data: np.ndarray  # (C, N, H)
    n_inputs: int
    order: int

    @property
    def val(self) -> np.ndarray:
        return self.data[0]

    def d1(self, axis: int) -> np.ndarray:
        return self.data[1 + axis]

    def d2(self, pair_index: int) -> np.ndarray:
        return self.data[1 + self.n_inputs + pair_index]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return derivative_pairs(self.n_inputs) if self.order >= 2 else []

    def zeros_like(self) -> np.ndarray:
        return np.zeros_like(self.data)


@dataclass
class JetValue:
    """Value plus input derivatives of a scalar network output at one point.

    d2 is stored as the full symmetric matrix (mirrored from the upper
    triangle, so symmetry is exact).
    """

    value: float
    d1: np.ndarray | None = None  # (n_inputs,)
    d2: np.ndarray | None = None  # (n_inputs, n_inputs), symmetric


def seed_jets(points: np.ndarray, order: int) -> Jets:
    """Jets of the identity map: value x_j, unit first derivatives, zero second."""
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    data = np.zeros((n_channels(d, order), n, d))
    data[0] = points
    if order >= 1:
        for a in range(d):
            data[1 + a, :, a] = 1.0
    return Jets(data, n_inputs=d, order=order)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

# Each entry maps a cache (built from the pre-activation values) to the
# activation value and its first three derivatives.  The third derivative is
# only touched by the reverse sweep through order-2 jets.


def _tanh_cache(v):
    return np.tanh(v)


def _tanh_phi(t):
    return t


def _tanh_d1(t):
    return 1.0 - t * t


def _tanh_d2(t):
    return -2.0 * t * (1.0 - t * t)


def _tanh_d3(t):
    s = 1.0 - t * t
    return -2.0 * s * (1.0 - 3.0 * t * t)


def _sin_cache(v):
    return np.sin(v), np.cos(v)


def _identity_cache(v):
    return v


_ACTIVATIONS = {
    "tanh": (_tanh_cache, _tanh_phi, _tanh_d1, _tanh_d2, _tanh_d3),
    "sin": (
        _sin_cache,
        lambda c: c[0],
        lambda c: c[1],
        lambda c: -c[0],
        lambda c: -c[1],
    ),
    "identity": (
        _identity_cache,
        lambda v: v,
        lambda v: np.ones_like(v),
        lambda v: np.zeros_like(v),
        lambda v: np.zeros_like(v),
    ),
}

ACTIVATION_NAMES = tuple(_ACTIVATIONS)


# ---------------------------------------------------------------------------
# layer operations
# ---------------------------------------------------------------------------


def linear_forward(jets: Jets, weight: np.ndarray, bias: np.ndarray) -> Jets:
    c, n, fin = jets.data.shape
    out = (jets.data.reshape(c * n, fin) @ weight).reshape(c, n, weight.shape[1])
    out[0] += bias
    return Jets(out, jets.n_inputs, jets.order)


def linear_backward(
    adj: np.ndarray, in_jets: Jets, weight: np.ndarray, *, need_input_adjoint: bool = True
):
    """Adjoint of linear_forward: returns (input adjoint or None, dW, db)."""
    c, n, fout = adj.shape
    flat_adj = adj.reshape(c * n, fout)
    flat_in = in_jets.data.reshape(c * n, -1)
    d_weight = flat_in.T @ flat_adj
    d_bias = adj[0].sum(axis=0)
    in_adj = None
    if need_input_adjoint:
        in_adj = (flat_adj @ weight.T).reshape(c, n, -1)
    return in_adj, d_weight, d_bias


class ActCache:
    """Primitive activation state plus lazily computed derivative arrays."""

    __slots__ = ("kind", "prim", "_p1", "_p2")

    def __init__(self, kind: str, prim):
        self.kind = kind
        self.prim = prim
        self._p1 = None
        self._p2 = None

    @property
    def p1(self):
        if self._p1 is None:
            self._p1 = _ACTIVATIONS[self.kind][2](self.prim)
        return self._p1

    @property
    def p2(self):
        if self._p2 is None:
            self._p2 = _ACTIVATIONS[self.kind][3](self.prim)
        return self._p2

    @property
    def p3(self):
        return _ACTIVATIONS[self.kind][4](self.prim)


def activation_forward(jets: Jets, kind: str):
    """Apply an elementwise activation to a jet batch; returns (out, cache)."""
    make_cache, phi, _, _, _ = _ACTIVATIONS[kind]
    cache = ActCache(kind, make_cache(jets.val))
    out = np.empty_like(jets.data)
    out[0] = phi(cache.prim)
    if jets.order >= 1:
        p1 = cache.p1
        for a in range(jets.n_inputs):
            out[1 + a] = p1 * jets.d1(a)
        if jets.order >= 2:
            p2 = cache.p2
            base = 1 + jets.n_inputs
            for p, (a, b) in enumerate(jets.pairs):
                out[base + p] = p2 * jets.d1(a) * jets.d1(b) + p1 * jets.d2(p)
    return Jets(out, jets.n_inputs, jets.order), cache


def activation_backward(adj: np.ndarray, in_jets: Jets, kind: str, cache: ActCache) -> np.ndarray:
    p1 = cache.p1
    in_adj = np.zeros_like(adj)
    in_adj[0] = adj[0] * p1
    if in_jets.order >= 1:
        p2 = cache.p2
        for a in range(in_jets.n_inputs):
            in_adj[0] += adj[1 + a] * p2 * in_jets.d1(a)
            in_adj[1 + a] += adj[1 + a] * p1
        if in_jets.order >= 2:
            p3 = cache.p3
            base = 1 + in_jets.n_inputs
            for p, (a, b) in enumerate(in_jets.pairs):
                ap = adj[base + p]
                in_adj[0] += ap * (p3 * in_jets.d1(a) * in_jets.d1(b) + p2 * in_jets.d2(p))
                in_adj[1 + a] += ap * p2 * in_jets.d1(b)
                in_adj[1 + b] += ap * p2 * in_jets.d1(a)
                in_adj[base + p] += ap * p1
    return in_adj


def jet_mul_forward(h: Jets, d: Jets) -> Jets:
    """Elementwise product of two jet batches (Leibniz rule per channel)."""
    out = np.empty_like(h.data)
    out[0] = h.val * d.val
    if h.order >= 1:
        for a in range(h.n_inputs):
            out[1 + a] = h.d1(a) * d.val + h.val * d.d1(a)
        if h.order >= 2:
            base = 1 + h.n_inputs
            for p, (a, b) in enumerate(h.pairs):
                out[base + p] = (
                    h.d2(p) * d.val
                    + h.d1(a) * d.d1(b)
                    + h.d1(b) * d.d1(a)
                    + h.val * d.d2(p)
                )
    return Jets(out, h.n_inputs, h.order)


def jet_mul_backward(adj: np.ndarray, h: Jets, d: Jets):
    """Adjoint of jet_mul_forward: returns (h adjoint, d adjoint)."""
    h_adj = np.zeros_like(adj)
    d_adj = np.zeros_like(adj)
    h_adj[0] = adj[0] * d.val
    d_adj[0] = adj[0] * h.val
    if h.order >= 1:
        for a in range(h.n_inputs):
            aa = adj[1 + a]
            h_adj[1 + a] += aa * d.val
            d_adj[0] += aa * h.d1(a)
            h_adj[0] += aa * d.d1(a)
            d_adj[1 + a] += aa * h.val
        if h.order >= 2:
            base = 1 + h.n_inputs
            for p, (a, b) in enumerate(h.pairs):
                ap = adj[base + p]
                h_adj[base + p] += ap * d.val
                d_adj[0] += ap * h.d2(p)
                h_adj[1 + a] += ap * d.d1(b)
                d_adj[1 + b] += ap * h.d1(a)
                h_adj[1 + b] += ap * d.d1(a)
                d_adj[1 + a] += ap * h.d1(b)
                h_adj[0] += ap * d.d2(p)
                d_adj[base + p] += ap * h.val
    return h_adj, d_adj


# ---------------------------------------------------------------------------
# loss tape
# ---------------------------------------------------------------------------


@dataclass
class LossTape:
    """Recorded forward passes plus output adjoints for one scalar loss.

    Each entry pairs the op trace of a forward jet evaluation with the
    adjoint of the loss w.r.t. that evaluation's output jets.  Gradients of
    loss terms that are explicit functions of the parameters can be added
    directly.  Replaying the tape is deterministic; build a fresh tape every
    optimizer step.
    """

    net: "object"  # FieldNetwork; kept loose to avoid a circular import
    entries: list = field(default_factory=list)
    param_terms: list = field(default_factory=list)

    def add(self, trace: list, out_adjoint: np.ndarray) -> None:
        self.entries.append((trace, out_adjoint))

    def add_param_term(self, grad_contribution: np.ndarray) -> None:
        self.param_terms.append(np.asarray(grad_contribution, dtype=np.float64))


def loss_gradient(tape: LossTape) -> np.ndarray:
    """Gradient of the taped scalar loss w.r.t. every network parameter."""
    if not tape.entries and not tape.param_terms:
        raise EmptyTapeError("tape records no loss")
    grad = np.zeros_like(tape.net.theta)
    for trace, out_adjoint in tape.entries:
        tape.net.backward(trace, out_adjoint, grad)
    for term in tape.param_terms:
        grad += term
    return grad


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def eval_jet(net, point, order: int) -> JetValue:
    """Value and input derivatives (up to `order`) of a scalar-output network.

    Raises NumericOverflowError (with the offending layer index) if any layer
    produces a non-finite value.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    x = np.atleast_2d(np.asarray(point, dtype=np.float64))
    jets = net.forward_jets(x, order=order, validate=True)
    return jets_to_value(jets, index=0)


def jets_to_value(jets: Jets, index: int) -> JetValue:
    value = float(jets.val[index, 0])
    d1 = None
    d2 = None
    if jets.order >= 1:
        d1 = np.array([jets.d1(a)[index, 0] for a in range(jets.n_inputs)])
    if jets.order >= 2:
        d2 = np.zeros((jets.n_inputs, jets.n_inputs))
        for p, (a, b) in enumerate(jets.pairs):
            d2[a, b] = jets.d2(p)[index, 0]
            d2[b, a] = d2[a, b]
    return JetValue(value, d1, d2)


def finite_diff_oracle(net, point, order: int, step: float = 1e-4) -> JetValue:
    """Central-difference estimate of the same derivatives as eval_jet."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=np.float64)
    d = x.shape[0]

    def f(p):
        return float(net.forward_jets(p[None, :], order=0).val[0, 0])

    value = f(x)
    d1 = None
    d2 = None
    if order >= 1:
        d1 = np.zeros(d)
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            d1[a] = (f(x + e) - f(x - e)) / (2.0 * step)
    if order >= 2:
        d2 = np.zeros((d, d))
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            d2[a, a] = (f(x + e) - 2.0 * value + f(x - e)) / step**2
        for a in range(d):
            for b in range(a + 1, d):
                ea = np.zeros(d)
                eb = np.zeros(d)
                ea[a] = step
                eb[b] = step
                d2[a, b] = (
                    f(x + ea + eb) - f(x + ea - eb) - f(x - ea + eb) + f(x - ea - eb)
                ) / (4.0 * step**2)
                d2[b, a] = d2[a, b]
    return JetValue(value, d1, d2)


def finite_diff_param_gradient(net, loss_fn, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn(net) w.r.t. the flat parameters."""
    theta = net.theta
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + step
        up = loss_fn(net)
        theta[i] = old - step
        down = loss_fn(net)
        theta[i] = old
        grad[i] = (up - down) / (2.0 * step)
    return grad
