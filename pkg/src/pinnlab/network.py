"""Dense field networks: plain MLP, encoder-mixed MLP, periodic input features.

A FieldNetwork owns a flat float64 parameter vector; per-layer weights are
views into it so the optimizer can update parameters in place.  Forward
evaluation propagates jets (see autodiff) and can record a trace for the
reverse parameter-gradient sweep.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "PeriodicEmbedding",
    "NetworkSpec",
    "FieldNetwork",
    "init_network",
    "periodic_embed",
    "save_checkpoint",
    "load_checkpoint",
]

_CHECKPOINT_MAGIC = b"FNET"
_CHECKPOINT_VERSION = 1

_ACTIVATION_CODES = {"tanh": 0, "sin": 1, "identity": 2}
_VARIANT_CODES = {"plain": 0, "modified": 1}


@dataclass(frozen=True)
class PeriodicEmbedding:
    """Fourier features on the first input coordinate; other coordinates pass raw."""

    period: float
    harmonics: int = 1

    def n_features(self, input_dim: int) -> int:
        return 2 * self.harmonics + (input_dim - 1)


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_width: int
    hidden_depth: int
    activation: str = "tanh"
    variant: str = "plain"
    embedding: PeriodicEmbedding | None = None
    seed: int = 0

    def __post_init__(self):
        if self.hidden_width < 1 or self.hidden_depth < 1:
            raise ValueError("hidden_width and hidden_depth must be >= 1")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.activation not in _ACTIVATION_CODES:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.variant not in _VARIANT_CODES:
            raise ValueError(f"unsupported variant {self.variant!r}")
        if self.embedding is not None and self.embedding.period <= 0:
            raise ValueError("embedding period must be positive")

    @property
    def first_layer_inputs(self) -> int:
        if self.embedding is None:
            return self.input_dim
        return self.embedding.n_features(self.input_dim)


def periodic_embed(x: float | np.ndarray, period: float, harmonics: int) -> np.ndarray:
    """Features [cos(2*pi*k*x/period), sin(2*pi*k*x/period)] for k = 1..harmonics."""
    if period <= 0:
        raise ValueError("period must be positive")
    x = np.asarray(x, dtype=np.float64)
    feats = []
    for k in range(1, harmonics + 1):
        w = 2.0 * np.pi * k / period
        feats.append(np.cos(w * x))
        feats.append(np.sin(w * x))
    return np.stack(feats, axis=-1)


def _param_layout(spec: NetworkSpec) -> tuple[dict[str, tuple[int, tuple[int, ...]]], int]:
    """Name -> (offset, shape) for every weight/bias, plus the total size."""
    fin = spec.first_layer_inputs
    w = spec.hidden_width
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if spec.variant == "modified":
        shapes += [("Wu", (fin, w)), ("bu", (w,)), ("Wv", (fin, w)), ("bv", (w,))]
    prev = fin
    for i in range(spec.hidden_depth):
        shapes += [(f"W{i}", (prev, w)), (f"b{i}", (w,))]
        prev = w
    shapes += [("Wout", (prev, 1)), ("bout", (1,))]
    layout = {}
    offset = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        layout[name] = (offset, shape)
        offset += size
    return layout, offset


class FieldNetwork:
    """A scalar-output network with a flat parameter vector."""

    def __init__(self, spec: NetworkSpec, theta: np.ndarray):
        self.spec = spec
        layout, size = _param_layout(spec)
        if theta.shape != (size,):
            raise ValueError(f"theta must have shape ({size},), got {theta.shape}")
        self.theta = theta
        self._layout = layout

    @property
    def n_params(self) -> int:
        return self.theta.size

    def param(self, name: str) -> np.ndarray:
        offset, shape = self._layout[name]
        return self.theta[offset : offset + int(np.prod(shape))].reshape(shape)

    def _grad_view(self, grad: np.ndarray, name: str) -> np.ndarray:
        offset, shape = self._layout[name]
        return grad[offset : offset + int(np.prod(shape))].reshape(shape)

    # -- forward ------------------------------------------------------------

    def _embed_jets(self, points: np.ndarray, order: int) -> ad.Jets:
        emb = self.spec.embedding
        if emb is None:
            return ad.seed_jets(points, order)
        n = points.shape[0]
        d = self.spec.input_dim
        nf = emb.n_features(d)
        data = np.zeros((ad.n_channels(d, order), n, nf))
        x0 = points[:, 0]
        col = 0
        for k in range(1, emb.harmonics + 1):
            w = 2.0 * np.pi * k / emb.period
            c, s = np.cos(w * x0), np.sin(w * x0)
            data[0, :, col] = c
            data[0, :, col + 1] = s
            if order >= 1:
                data[1, :, col] = -w * s
                data[1, :, col + 1] = w * c
                if order >= 2:
                    # pair (0, 0) is always the first second-derivative channel
                    data[1 + d, :, col] = -w * w * c
                    data[1 + d, :, col + 1] = -w * w * s
            col += 2
        # remaining coordinates pass through unchanged
        for a in range(1, d):
            data[0, :, col] = points[:, a]
            if order >= 1:
                data[1 + a, :, col] = 1.0
            col += 1
        return ad.Jets(data, n_inputs=d, order=order)

    def forward_jets(
        self,
        points: np.ndarray,
        order: int,
        trace: list | None = None,
        validate: bool = False,
    ) -> ad.Jets:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"points must be (N, {self.spec.input_dim}), got {points.shape}"
            )
        act = self.spec.activation
        layer_index = 0

        def check(jets):
            nonlocal layer_index
            if validate and not np.isfinite(jets.data).all():
                raise ad.NumericOverflowError(layer_index)
            layer_index += 1
            return jets

        jets = check(self._embed_jets(points, order))

        if self.spec.variant == "modified":
            zu = ad.linear_forward(jets, self.param("Wu"), self.param("bu"))
            u, cu = ad.activation_forward(zu, act)
            zv = ad.linear_forward(jets, self.param("Wv"), self.param("bv"))
            v, cv = ad.activation_forward(zv, act)
            diff = ad.Jets(v.data - u.data, jets.n_inputs, jets.order)
            check(u)
            check(v)
            if trace is not None:
                trace.append(("encoders", jets, zu, cu, zv, cv, diff))
            cur = jets
            for i in range(self.spec.hidden_depth):
                z = ad.linear_forward(cur, self.param(f"W{i}"), self.param(f"b{i}"))
                h, cache = ad.activation_forward(z, act)
                mixed = ad.Jets(u.data + ad.jet_mul_forward(h, diff).data, h.n_inputs, h.order)
                check(mixed)
                if trace is not None:
                    trace.append(("layer", i, cur, z, cache, h))
                    trace.append(("mix", h, diff))
                cur = mixed
        else:
            cur = jets
            for i in range(self.spec.hidden_depth):
                z = ad.linear_forward(cur, self.param(f"W{i}"), self.param(f"b{i}"))
                h, cache = ad.activation_forward(z, act)
                check(h)
                if trace is not None:
                    trace.append(("layer", i, cur, z, cache, h))
                cur = h

        out = ad.linear_forward(cur, self.param("Wout"), self.param("bout"))
        check(out)
        if trace is not None:
            trace.append(("out", cur))
        return out

    # -- reverse ------------------------------------------------------------

    def backward(self, trace: list, out_adjoint: np.ndarray, grad: np.ndarray) -> None:
        """Accumulate d(loss)/d(theta) into grad given the output adjoint."""
        act = self.spec.activation
        adj = out_adjoint
        u_adj = None
        diff_adj = None
        i = len(trace) - 1
        while i >= 0:
            record = trace[i]
            kind = record[0]
            if kind == "out":
                _, cur = record
                adj, dw, db = ad.linear_backward(adj, cur, self.param("Wout"))
                self._grad_view(grad, "Wout")[...] += dw
                self._grad_view(grad, "bout")[...] += db
            elif kind == "mix":
                _, h, diff = record
                if u_adj is None:
                    u_adj = np.zeros_like(adj)
                    diff_adj = np.zeros_like(adj)
                u_adj += adj
                h_adj, d_adj = ad.jet_mul_backward(adj, h, diff)
                diff_adj += d_adj
                adj = h_adj
            elif kind == "layer":
                _, idx, cur, z, cache, _h = record
                adj = ad.activation_backward(adj, z, act, cache)
                first = idx == 0 and self.spec.variant == "plain"
                adj, dw, db = ad.linear_backward(
                    adj, cur, self.param(f"W{idx}"), need_input_adjoint=not first
                )
                self._grad_view(grad, f"W{idx}")[...] += dw
                self._grad_view(grad, f"b{idx}")[...] += db
            elif kind == "encoders":
                _, jets, zu, cu, zv, cv, _diff = record
                # trunk input adjoint (adj) feeds the first hidden layer's input,
                # which for the modified variant is the embedded input itself;
                # the embedding has no parameters, so only the encoders remain.
                v_adj = diff_adj
                u_direct = u_adj - diff_adj
                for enc_adj, z_enc, c_enc, w_name, b_name in (
                    (u_direct, zu, cu, "Wu", "bu"),
                    (v_adj, zv, cv, "Wv", "bv"),
                ):
                    e_adj = ad.activation_backward(enc_adj, z_enc, act, c_enc)
                    _, dw, db = ad.linear_backward(
                        e_adj, jets, self.param(w_name), need_input_adjoint=False
                    )
                    self._grad_view(grad, w_name)[...] += dw
                    self._grad_view(grad, b_name)[...] += db
            else:  # pragma: no cover - defensive
                raise RuntimeError(f"unknown trace record {kind!r}")
            i -= 1

    # convenience wrappers ----------------------------------------------------

    def values(self, points: np.ndarray) -> np.ndarray:
        """Network values at a batch of points, shape (N,)."""
        return self.forward_jets(points, order=0).val[:, 0]

    def forward(self, point, order: int = 0) -> ad.JetValue:
        return ad.eval_jet(self, point, order)


def init_network(spec: NetworkSpec) -> FieldNetwork:
    """Glorot-uniform weights, zero biases, reproducible from spec.seed."""
    layout, size = _param_layout(spec)
    theta = np.zeros(size)
    net = FieldNetwork(spec, theta)
    rng = np.random.default_rng(spec.seed)
    for name, (offset, shape) in layout.items():
        if len(shape) == 2:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            theta[offset : offset + fan_in * fan_out] = rng.uniform(
                -limit, limit, size=fan_in * fan_out
            )
    return net


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

# Layout: magic, then little-endian int64 header fields
# (version, input_dim, hidden_width, hidden_depth, activation, variant,
#  has_embedding, harmonics, seed, n_params), one float64 (embedding period,
# 0.0 when absent), then the raw float64 parameter vector.


def save_checkpoint(path, net: FieldNetwork) -> None:
    spec = net.spec
    emb = spec.embedding
    header = struct.pack(
        "<10q",
        _CHECKPOINT_VERSION,
        spec.input_dim,
        spec.hidden_width,
        spec.hidden_depth,
        _ACTIVATION_CODES[spec.activation],
        _VARIANT_CODES[spec.variant],
        1 if emb is not None else 0,
        emb.harmonics if emb is not None else 0,
        spec.seed,
        net.n_params,
    )
    period = struct.pack("<d", emb.period if emb is not None else 0.0)
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(header)
        fh.write(period)
        fh.write(np.ascontiguousarray(net.theta, dtype="<f8").tobytes())


def load_checkpoint(path) -> FieldNetwork:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        fields = struct.unpack("<10q", fh.read(80))
        (period,) = struct.unpack("<d", fh.read(8))
        version, input_dim, width, depth, act_code, var_code, has_emb, harmonics, seed, n_params = fields
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        activation = {v: k for k, v in _ACTIVATION_CODES.items()}[act_code]
        variant = {v: k for k, v in _VARIANT_CODES.items()}[var_code]
        embedding = PeriodicEmbedding(period, harmonics) if has_emb else None
        spec = NetworkSpec(
            input_dim=input_dim,
            hidden_width=width,
            hidden_depth=depth,
            activation=activation,
            variant=variant,
            embedding=embedding,
            seed=seed,
        )
        theta = np.frombuffer(fh.read(8 * n_params), dtype="<f8").astype(np.float64)
    return FieldNetwork(spec, theta)
