"""Problem definitions: residual operators, initial/boundary terms, references.

Four problems are provided: 1-D convection (periodic transport), the 1-D
Allen-Cahn reaction-diffusion equation, a 2-D distance-field (eikonal)
problem on polygonal geometry, and a second-order harmonic oscillator ODE.
Coordinate convention: axis 0 is space (x), axis 1 is time (or y for the
distance-field problem).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .geometry import Geometry2D, sdf_ground_truth

__all__ = [
    "Box",
    "PdeProblem",
    "TargetTerm",
    "PairTerm",
    "HingeTerm",
    "convection_residual",
    "convection_exact",
    "allen_cahn_residual",
    "eikonal_residual",
    "harmonic_ode_residual",
    "convection_problem",
    "allen_cahn_problem",
    "eikonal_problem",
    "harmonic_ode_problem",
    "ic_loss",
    "bc_loss",
    "read_grid",
    "write_grid",
    "AnalyticReference",
    "GridReference",
    "SdfReference",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain box; time_axis flags the temporal coordinate."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    time_axis: int | None = None

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same dimension")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("domain volume must be positive")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def grid(self, resolution: tuple[int, ...], centers: bool = False) -> np.ndarray:
        """Full lattice over the box, flattened to (prod(resolution), dim)."""
        axes = []
        for lo, hi, r in zip(self.lo, self.hi, resolution):
            if centers:
                step = (hi - lo) / r
                axes.append(lo + step * (np.arange(r) + 0.5))
            else:
                axes.append(np.linspace(lo, hi, r))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------------------
# loss terms (materialized point sets)
# ---------------------------------------------------------------------------


class TargetTerm:
    """Mean squared error of network values against fixed targets."""

    order = 0

    def __init__(self, points: np.ndarray, targets: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)

    def loss(self, net, tape: ad.LossTape | None = None, weight: float = 1.0) -> float:
        trace = [] if tape is not None else None
        jets = net.forward_jets(self.points, order=0, trace=trace)
        err = jets.val[:, 0] - self.targets
        if tape is not None:
            adj = jets.zeros_like()
            adj[0, :, 0] = 2.0 * weight * err / err.size
            tape.add(trace, adj)
        return float(np.mean(err**2))


class PairTerm:
    """Mean squared mismatch between paired points (values or one derivative)."""

    def __init__(self, points_a: np.ndarray, points_b: np.ndarray, axis: int | None = None):
        self.points_a = np.asarray(points_a, dtype=np.float64)
        self.points_b = np.asarray(points_b, dtype=np.float64)
        self.axis = axis
        self.order = 0 if axis is None else 1

    def _read(self, jets: ad.Jets) -> np.ndarray:
        if self.axis is None:
            return jets.val[:, 0]
        return jets.d1(self.axis)[:, 0]

    def loss(self, net, tape: ad.LossTape | None = None, weight: float = 1.0) -> float:
        trace_a = [] if tape is not None else None
        trace_b = [] if tape is not None else None
        jets_a = net.forward_jets(self.points_a, order=self.order, trace=trace_a)
        jets_b = net.forward_jets(self.points_b, order=self.order, trace=trace_b)
        diff = self._read(jets_a) - self._read(jets_b)
        if tape is not None:
            channel = 0 if self.axis is None else 1 + self.axis
            seed = 2.0 * weight * diff / diff.size
            adj_a = jets_a.zeros_like()
            adj_a[channel, :, 0] = seed
            adj_b = jets_b.zeros_like()
            adj_b[channel, :, 0] = -seed
            tape.add(trace_a, adj_a)
            tape.add(trace_b, adj_b)
        return float(np.mean(diff**2))


class HingeTerm:
    """Positivity penalty mean(max(0, -u)^2)."""

    order = 0

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)

    def loss(self, net, tape: ad.LossTape | None = None, weight: float = 1.0) -> float:
        trace = [] if tape is not None else None
        jets = net.forward_jets(self.points, order=0, trace=trace)
        viol = np.maximum(0.0, -jets.val[:, 0])
        if tape is not None:
            adj = jets.zeros_like()
            adj[0, :, 0] = -2.0 * weight * viol / viol.size
            tape.add(trace, adj)
        return float(np.mean(viol**2))


class GradTargetTerm:
    """Mean squared error of one first derivative against fixed targets."""

    order = 1

    def __init__(self, points: np.ndarray, axis: int, targets: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.axis = axis
        self.targets = np.asarray(targets, dtype=np.float64)

    def loss(self, net, tape: ad.LossTape | None = None, weight: float = 1.0) -> float:
        trace = [] if tape is not None else None
        jets = net.forward_jets(self.points, order=1, trace=trace)
        err = jets.d1(self.axis)[:, 0] - self.targets
        if tape is not None:
            adj = jets.zeros_like()
            adj[1 + self.axis, :, 0] = 2.0 * weight * err / err.size
            tape.add(trace, adj)
        return float(np.mean(err**2))


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------


class AnalyticReference:
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def values(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(points), dtype=np.float64)


class GridReference:
    """Bilinear interpolation of a tabulated solution on an (x, t) lattice."""

    def __init__(self, x: np.ndarray, t: np.ndarray, values: np.ndarray):
        from scipy.interpolate import RegularGridInterpolator

        self.x = np.asarray(x, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.grid_values = np.asarray(values, dtype=np.float64)
        self._interp = RegularGridInterpolator(
            (self.x, self.t), self.grid_values, method="linear", bounds_error=False, fill_value=None
        )

    def values(self, points: np.ndarray) -> np.ndarray:
        return self._interp(points)


class SdfReference:
    def __init__(self, geometry: Geometry2D):
        self.geometry = geometry

    def values(self, points: np.ndarray) -> np.ndarray:
        return sdf_ground_truth(self.geometry, points)


def read_grid(path):
    """Read the plain-text grid format: "nx nt", axis coords, values row-major."""
    with open(path) as fh:
        tokens = fh.read().split()
    nx, nt = int(tokens[0]), int(tokens[1])
    rest = np.asarray(tokens[2:], dtype=np.float64)
    if rest.size != nx + nt + nx * nt:
        raise ValueError(f"{path}: expected {nx + nt + nx * nt} numbers, got {rest.size}")
    x = rest[:nx]
    t = rest[nx : nx + nt]
    values = rest[nx + nt :].reshape(nx, nt)
    return x, t, values


def write_grid(path, x: np.ndarray, t: np.ndarray, values: np.ndarray) -> None:
    x = np.asarray(x)
    t = np.asarray(t)
    values = np.asarray(values)
    with open(path, "w") as fh:
        fh.write(f"{x.size} {t.size}\n")
        fh.write(" ".join(repr(float(v)) for v in x) + "\n")
        fh.write(" ".join(repr(float(v)) for v in t) + "\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# residual operators (single-jet form)
# ---------------------------------------------------------------------------


def convection_residual(jet: ad.JetValue, beta: float) -> float:
    """u_t + beta * u_x."""
    return float(jet.d1[1] + beta * jet.d1[0])


def convection_exact(x, t, beta: float):
    """Characteristics solution sin(x - beta * t) for the sin initial profile."""
    return np.sin(np.asarray(x) - beta * np.asarray(t))


def allen_cahn_residual(jet: ad.JetValue) -> float:
    """u_t - 0.0001 * u_xx + 5 u^3 - 5 u."""
    u = jet.value
    return float(jet.d1[1] - 1e-4 * jet.d2[0, 0] + 5.0 * u**3 - 5.0 * u)


def eikonal_residual(jet: ad.JetValue) -> float:
    """|grad u| - 1."""
    return float(np.hypot(jet.d1[0], jet.d1[1]) - 1.0)


def harmonic_ode_residual(jet: ad.JetValue, k: float) -> float:
    """u_xx + k^2 u."""
    return float(jet.d2[0, 0] + k * k * jet.value)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

_EIKONAL_NORM_FLOOR = 1e-30  # adjoint guard at grad-norm zero


@dataclass
class PdeProblem:
    name: str
    domain: Box
    residual_order: int
    residual_batch: Callable[[ad.Jets], np.ndarray]
    residual_adjoint: Callable[[ad.Jets, np.ndarray], np.ndarray]
    ic_factory: Callable[[int, np.random.Generator], list]
    bc_factory: Callable[[int, np.random.Generator], list]
    reference: object | None = None
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def times(self, points: np.ndarray) -> np.ndarray:
        if self.domain.time_axis is None:
            raise ValueError(f"{self.name} has no time axis")
        return points[:, self.domain.time_axis]

    @property
    def time_horizon(self) -> float:
        axis = self.domain.time_axis
        if axis is None:
            raise ValueError(f"{self.name} has no time axis")
        return self.domain.hi[axis] - self.domain.lo[axis]


def ic_loss(net, problem: PdeProblem, n_points: int, rng=None) -> float:
    """Mean squared initial-condition loss on freshly sampled points."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    return float(sum(term.loss(net) for term in problem.ic_factory(n_points, rng)))


def bc_loss(net, problem: PdeProblem, n_points: int, rng=None) -> float:
    """Mean squared boundary loss (sum over boundary terms) on fresh points."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    return float(sum(term.loss(net) for term in problem.bc_factory(n_points, rng)))


def convection_problem(beta: float) -> PdeProblem:
    domain = Box(lo=(0.0, 0.0), hi=(2.0 * np.pi, 1.0), time_axis=1)

    def residual(jets: ad.Jets) -> np.ndarray:
        return jets.d1(1)[:, 0] + beta * jets.d1(0)[:, 0]

    def adjoint(jets: ad.Jets, rbar: np.ndarray) -> np.ndarray:
        adj = jets.zeros_like()
        adj[1, :, 0] = beta * rbar
        adj[2, :, 0] = rbar
        return adj

    def ic(n, rng):
        x = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = np.stack([x, np.zeros(n)], axis=1)
        return [TargetTerm(pts, np.sin(x))]

    def bc(n, rng):
        t = rng.uniform(0.0, 1.0, size=n)
        lo = np.stack([np.zeros(n), t], axis=1)
        hi = np.stack([np.full(n, 2.0 * np.pi), t], axis=1)
        return [PairTerm(lo, hi)]

    exact = lambda p: convection_exact(p[:, 0], p[:, 1], beta)
    return PdeProblem(
        name=f"convection-b{beta:g}",
        domain=domain,
        residual_order=1,
        residual_batch=residual,
        residual_adjoint=adjoint,
        ic_factory=ic,
        bc_factory=bc,
        reference=AnalyticReference(exact),
        exact=exact,
        params={"beta": beta},
    )


def allen_cahn_problem(
    reference: GridReference | None = None, derivative_bc_axis: str = "t"
) -> PdeProblem:
    """Allen-Cahn with periodic value pairing plus a derivative pairing at x = +-1.

    derivative_bc_axis selects which derivative the pairing matches ("t" as
    printed in the problem statement, "x" for the conventional periodic flux).
    """
    if derivative_bc_axis not in ("t", "x"):
        raise ValueError("derivative_bc_axis must be 't' or 'x'")
    domain = Box(lo=(-1.0, 0.0), hi=(1.0, 1.0), time_axis=1)
    deriv_axis = 1 if derivative_bc_axis == "t" else 0

    def residual(jets: ad.Jets) -> np.ndarray:
        u = jets.val[:, 0]
        return jets.d1(1)[:, 0] - 1e-4 * jets.d2(0)[:, 0] + 5.0 * u**3 - 5.0 * u

    def adjoint(jets: ad.Jets, rbar: np.ndarray) -> np.ndarray:
        u = jets.val[:, 0]
        adj = jets.zeros_like()
        adj[0, :, 0] = (15.0 * u**2 - 5.0) * rbar
        adj[2, :, 0] = rbar
        adj[3, :, 0] = -1e-4 * rbar  # channel of the (x, x) pair
        return adj

    def ic(n, rng):
        x = rng.uniform(-1.0, 1.0, size=n)
        pts = np.stack([x, np.zeros(n)], axis=1)
        return [TargetTerm(pts, x**2 * np.cos(np.pi * x))]

    def bc(n, rng):
        t = rng.uniform(0.0, 1.0, size=n)
        lo = np.stack([np.full(n, -1.0), t], axis=1)
        hi = np.stack([np.ones(n), t], axis=1)
        return [PairTerm(lo, hi), PairTerm(lo, hi, axis=deriv_axis)]

    return PdeProblem(
        name="allen-cahn",
        domain=domain,
        residual_order=2,
        residual_batch=residual,
        residual_adjoint=adjoint,
        ic_factory=ic,
        bc_factory=bc,
        reference=reference,
        params={"derivative_bc_axis": derivative_bc_axis},
    )


def eikonal_problem(geometry: Geometry2D) -> PdeProblem:
    domain = Box(lo=(-1.0, -1.0), hi=(1.0, 1.0), time_axis=None)

    def residual(jets: ad.Jets) -> np.ndarray:
        return np.hypot(jets.d1(0)[:, 0], jets.d1(1)[:, 0]) - 1.0

    def adjoint(jets: ad.Jets, rbar: np.ndarray) -> np.ndarray:
        gx = jets.d1(0)[:, 0]
        gy = jets.d1(1)[:, 0]
        norm = np.maximum(np.hypot(gx, gy), _EIKONAL_NORM_FLOOR)
        adj = jets.zeros_like()
        adj[1, :, 0] = rbar * gx / norm
        adj[2, :, 0] = rbar * gy / norm
        return adj

    def ic(n, rng):
        # the zero contour pins the field on the surface
        pts = geometry.perimeter_points(n, rng)
        return [TargetTerm(pts, np.zeros(n))]

    def bc(n, rng):
        # positivity on the four domain edges
        s = rng.uniform(0.0, 8.0, size=n)  # unrolled perimeter of [-1, 1]^2
        side = np.minimum((s // 2).astype(int), 3)
        frac = s - 2.0 * side
        pts = np.empty((n, 2))
        for k, (fixed, axis) in enumerate([(-1.0, 1), (1.0, 1), (-1.0, 0), (1.0, 0)]):
            m = side == k
            pts[m, 1 - axis] = fixed
            pts[m, axis] = -1.0 + frac[m]
        return [HingeTerm(pts)]

    return PdeProblem(
        name="eikonal",
        domain=domain,
        residual_order=1,
        residual_batch=residual,
        residual_adjoint=adjoint,
        ic_factory=ic,
        bc_factory=bc,
        reference=SdfReference(geometry),
        params={"geometry": geometry},
    )


def harmonic_ode_problem(k: float = 20.0, constraint_x: float = -np.pi / 2.0) -> PdeProblem:
    """u_xx + k^2 u = 0 with the field and its slope pinned at one point.

    A single value condition admits u = 0; pinning u = 0 and u_x = k at
    constraint_x selects sin(k (x - constraint_x)) uniquely.
    """
    domain = Box(lo=(-np.pi / 2.0,), hi=(np.pi / 2.0,), time_axis=None)

    def residual(jets: ad.Jets) -> np.ndarray:
        return jets.d2(0)[:, 0] + k * k * jets.val[:, 0]

    def adjoint(jets: ad.Jets, rbar: np.ndarray) -> np.ndarray:
        adj = jets.zeros_like()
        adj[0, :, 0] = k * k * rbar
        adj[2, :, 0] = rbar
        return adj

    anchor = np.array([[constraint_x]])

    def ic(n, rng):
        return []

    def bc(n, rng):
        return [
            TargetTerm(anchor, np.zeros(1)),
            GradTargetTerm(anchor, axis=0, targets=np.full(1, k)),
        ]

    exact = lambda p: np.sin(k * (p[:, 0] - constraint_x))
    return PdeProblem(
        name=f"harmonic-ode-k{k:g}",
        domain=domain,
        residual_order=2,
        residual_batch=residual,
        residual_adjoint=adjoint,
        ic_factory=ic,
        bc_factory=bc,
        reference=AnalyticReference(exact),
        exact=exact,
        params={"k": k, "constraint_x": constraint_x},
    )
