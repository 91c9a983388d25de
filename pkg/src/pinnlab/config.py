"""Flat key-value experiment configuration with dotted sections.

Files look like:

    problem.kind = convection
    problem.beta = 30.0        # comments allowed
    sampler.kind = rrr

Unknown keys are rejected.  Any key can be overridden through the
environment as PINNLAB_<KEY> with the dot spelled as a double underscore
(e.g. PINNLAB_TRAIN__SEED=7).  A written manifest is itself a loadable
config; the run.* entries are informational and do not affect resolution.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any

import numpy as np

from .geometry import circle_polygon, read_geometry
from .network import FieldNetwork, NetworkSpec, PeriodicEmbedding, init_network
from .problems import (
    GridReference,
    PdeProblem,
    allen_cahn_problem,
    convection_problem,
    eikonal_problem,
    harmonic_ode_problem,
    read_grid,
)
from .sampling import SAMPLER_KINDS
from .training import GateSettings, SamplerSettings, TrainConfig

__all__ = [
    "ConfigError",
    "SCHEMA",
    "PRESETS",
    "ResolvedConfig",
    "parse_config_text",
    "load_config",
    "resolve_config",
    "format_config",
]

ENV_PREFIX = "PINNLAB_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KeySpec:
    type: type
    default: Any
    choices: tuple | None = None
    minimum: float | None = None
    info: bool = False  # metadata only; never used to build the run


def _schema() -> dict[str, KeySpec]:
    s: dict[str, KeySpec] = {
        "problem.kind": KeySpec(str, "convection", choices=("convection", "allen-cahn", "eikonal", "harmonic-ode")),
        "problem.beta": KeySpec(float, 30.0),
        "problem.wavenumber": KeySpec(float, 20.0),
        "problem.constraint_x": KeySpec(float, -np.pi / 2.0),
        "problem.geometry": KeySpec(str, "circle:0.5:256"),
        "problem.reference": KeySpec(str, ""),
        "problem.derivative_bc_axis": KeySpec(str, "t", choices=("t", "x")),
        "network.width": KeySpec(int, 50, minimum=1),
        "network.depth": KeySpec(int, 4, minimum=1),
        "network.activation": KeySpec(str, "tanh", choices=("tanh", "sin")),
        "network.variant": KeySpec(str, "plain", choices=("plain", "modified")),
        "network.embedding": KeySpec(str, "none", choices=("none", "periodic")),
        "network.harmonics": KeySpec(int, 1, minimum=1),
        "network.period": KeySpec(float, 0.0),  # 0 = spatial domain length
        "network.seed": KeySpec(int, -1),  # -1 = derive from train.seed
        "train.seed": KeySpec(int, 0),
        "train.iterations": KeySpec(int, 1000, minimum=0),
        "train.collocation_points": KeySpec(int, 1000, minimum=1),
        "train.lr": KeySpec(float, 1e-3),
        "train.decay_rate": KeySpec(float, 0.9),
        "train.decay_period": KeySpec(int, 5000, minimum=1),
        "train.lambda_residual": KeySpec(float, 1.0, minimum=0.0),
        "train.lambda_ic": KeySpec(float, 100.0, minimum=0.0),
        "train.lambda_bc": KeySpec(float, 100.0, minimum=0.0),
        "train.ic_points": KeySpec(int, 256, minimum=1),
        "train.bc_points": KeySpec(int, 256, minimum=1),
        "train.log_period": KeySpec(int, 500, minimum=1),
        "train.snapshot_period": KeySpec(int, 0, minimum=0),
        "train.checkpoint_period": KeySpec(int, 0, minimum=0),
        "sampler.kind": KeySpec(str, "rrr", choices=SAMPLER_KINDS),
        "sampler.dense_size": KeySpec(int, 100_000, minimum=1),
        "sampler.period": KeySpec(int, 100, minimum=1),
        "sampler.added_per_event": KeySpec(int, 1, minimum=1),
        "sampler.residual_power": KeySpec(float, 1.0, minimum=0.0),
        "sampler.placement": KeySpec(str, "uniform", choices=("uniform", "equispaced")),
        "gate.alpha": KeySpec(float, 5.0),
        "gate.lr": KeySpec(float, 1e-3),
        "gate.tolerance": KeySpec(float, 20.0),
        "gate.max_step": KeySpec(float, 0.1),
        "gate.initial_shift": KeySpec(float, -0.5),
        "gate.kind": KeySpec(str, "tanh", choices=("tanh", "relu-tanh")),
        "diagnostics.grid_x": KeySpec(int, 0, minimum=0),
        "diagnostics.grid_t": KeySpec(int, 0, minimum=0),
        "diagnostics.skew_threshold": KeySpec(float, 10.0),
        "diagnostics.kurt_threshold": KeySpec(float, 100.0),
        "diagnostics.min_duration": KeySpec(int, 1000, minimum=1),
        "diagnostics.error_slack": KeySpec(float, 0.05),
        "run.preset": KeySpec(str, "", info=True),
        "run.code_version": KeySpec(str, "", info=True),
        "run.created_unix": KeySpec(float, 0.0, info=True),
        "run.wall_clock_s": KeySpec(float, 0.0, info=True),
        "run.aborted_at": KeySpec(int, -1, info=True),
    }
    return s


SCHEMA = _schema()


def _coerce(key: str, raw: str, where: str = "") -> Any:
    spec = SCHEMA[key]
    try:
        if spec.type is int:
            value = int(raw)
        elif spec.type is float:
            value = float(raw)
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"{where}{key}: cannot parse {raw!r} as {spec.type.__name__}") from None
    _validate(key, value, where)
    return value


def _validate(key: str, value: Any, where: str = "") -> None:
    spec = SCHEMA[key]
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(
            f"{where}{key}: {value!r} is not one of {', '.join(map(str, spec.choices))}"
        )
    if spec.minimum is not None and value < spec.minimum:
        raise ConfigError(f"{where}{key}: {value!r} is below the minimum {spec.minimum}")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse "key = value" lines; errors carry line and column."""
    out: dict[str, Any] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError(f"{source}:{line_no}:{col}: expected 'key = value'")
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        value = value_part.strip()
        col = raw_line.index(key) + 1 if key and key in raw_line else 1
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{line_no}:{col}: unknown key {key!r}")
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]  # quoted (possibly empty) string
        elif not value:
            raise ConfigError(f"{source}:{line_no}:{col}: empty value for {key!r}")
        out[key] = _coerce(key, value, where=f"{source}:{line_no}: ")
    return out


def _env_overrides(env) -> dict[str, Any]:
    out = {}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        if key not in SCHEMA:
            raise ConfigError(f"environment variable {name}: unknown key {key!r}")
        out[key] = _coerce(key, raw, where=f"${name}: ")
    return out


@dataclass
class ResolvedConfig:
    """Every schema key bound to a concrete value."""

    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def core_items(self) -> dict[str, Any]:
        return {k: v for k, v in self.values.items() if not SCHEMA[k].info}

    # -- builders -----------------------------------------------------------

    def build_problem(self) -> PdeProblem:
        kind = self["problem.kind"]
        if kind == "convection":
            return convection_problem(self["problem.beta"])
        if kind == "allen-cahn":
            ref = None
            if self["problem.reference"]:
                x, t, values = read_grid(self["problem.reference"])
                ref = GridReference(x, t, values)
            return allen_cahn_problem(ref, self["problem.derivative_bc_axis"])
        if kind == "eikonal":
            return eikonal_problem(self._geometry())
        if kind == "harmonic-ode":
            return harmonic_ode_problem(self["problem.wavenumber"], self["problem.constraint_x"])
        raise ConfigError(f"problem.kind: unknown kind {kind!r}")

    def _geometry(self):
        text = self["problem.geometry"]
        if text.startswith("circle:"):
            parts = text.split(":")
            radius = float(parts[1])
            n = int(parts[2]) if len(parts) > 2 else 256
            return circle_polygon(radius, n)
        return read_geometry(text)

    def build_network(self, problem: PdeProblem) -> FieldNetwork:
        embedding = None
        if self["network.embedding"] == "periodic":
            period = self["network.period"]
            if period == 0.0:
                period = problem.domain.hi[0] - problem.domain.lo[0]
            embedding = PeriodicEmbedding(period, self["network.harmonics"])
        seed = self["network.seed"]
        if seed < 0:
            # derive a distinct stream from the run seed
            seed = int(np.random.SeedSequence(self["train.seed"]).spawn(3)[2].generate_state(1)[0])
        spec = NetworkSpec(
            input_dim=problem.domain.dim,
            hidden_width=self["network.width"],
            hidden_depth=self["network.depth"],
            activation=self["network.activation"],
            variant=self["network.variant"],
            embedding=embedding,
            seed=seed,
        )
        return init_network(spec)

    def build_train_config(self) -> TrainConfig:
        grid = None
        if self["diagnostics.grid_x"]:
            if self["diagnostics.grid_t"]:
                grid = (self["diagnostics.grid_x"], self["diagnostics.grid_t"])
            else:
                grid = (self["diagnostics.grid_x"],)
        return TrainConfig(
            max_iterations=self["train.iterations"],
            n_collocation=self["train.collocation_points"],
            lambda_residual=self["train.lambda_residual"],
            lambda_ic=self["train.lambda_ic"],
            lambda_bc=self["train.lambda_bc"],
            lr=self["train.lr"],
            decay_rate=self["train.decay_rate"],
            decay_period=self["train.decay_period"],
            sampler=SamplerSettings(
                kind=self["sampler.kind"],
                dense_size=self["sampler.dense_size"],
                period=self["sampler.period"],
                added_per_event=self["sampler.added_per_event"],
                power=self["sampler.residual_power"],
                placement=self["sampler.placement"],
            ),
            gate=GateSettings(
                alpha=self["gate.alpha"],
                lr=self["gate.lr"],
                tolerance=self["gate.tolerance"],
                max_step=self["gate.max_step"],
                initial_shift=self["gate.initial_shift"],
                kind=self["gate.kind"],
            ),
            seed=self["train.seed"],
            log_period=self["train.log_period"],
            snapshot_period=self["train.snapshot_period"],
            checkpoint_period=self["train.checkpoint_period"],
            n_ic=self["train.ic_points"],
            n_bc=self["train.bc_points"],
            grid_resolution=grid,
        )


def resolve_config(
    preset: str | None = None,
    config_path=None,
    overrides: dict[str, Any] | None = None,
    env=None,
) -> ResolvedConfig:
    """Defaults < preset < config file < environment < explicit overrides."""
    values = {k: s.default for k, s in SCHEMA.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; see `pinnlab train --list-presets`")
        values.update(PRESETS[preset])
        values["run.preset"] = preset
    if config_path is not None:
        with open(config_path) as fh:
            values.update(parse_config_text(fh.read(), source=str(config_path)))
    values.update(_env_overrides(os.environ if env is None else env))
    if overrides:
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"override: unknown key {key!r}")
            _validate(key, value, where="override: ")
            values[key] = value
    return ResolvedConfig(values)


def load_config(path) -> ResolvedConfig:
    """Resolve a config file on top of the defaults (no preset, no environment)."""
    return resolve_config(config_path=path, env={})


def format_config(values: dict[str, Any]) -> str:
    lines = []
    section = None
    for key in sorted(values):
        sec = key.split(".", 1)[0]
        if section is not None and sec != section:
            lines.append("")
        section = sec
        value = values[key]
        if isinstance(value, float):
            rendered = repr(value)
        elif isinstance(value, str) and (not value or value != value.split("#")[0].strip()):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# presets: one per benchmark x sampler combination
# ---------------------------------------------------------------------------


def _convection(beta: float, iterations: int, sampler: str) -> dict[str, Any]:
    return {
        "problem.kind": "convection",
        "problem.beta": beta,
        "network.width": 50,
        "network.depth": 4,
        "train.iterations": iterations,
        "train.collocation_points": 1000,
        "train.lambda_residual": 1.0,
        "train.lambda_ic": 100.0,
        "train.lambda_bc": 100.0,
        "sampler.kind": sampler,
    }


def _allen_cahn(sampler: str) -> dict[str, Any]:
    return {
        "problem.kind": "allen-cahn",
        "network.width": 128,
        "network.depth": 4,
        "network.embedding": "periodic",
        "train.iterations": 200_000,
        "train.collocation_points": 1000,
        "sampler.kind": sampler,
    }


def _eikonal(sampler: str) -> dict[str, Any]:
    return {
        "problem.kind": "eikonal",
        "network.width": 128,
        "network.depth": 4,
        "network.variant": "modified",
        "train.iterations": 50_000,
        "train.collocation_points": 1000,
        "train.lambda_ic": 500.0,
        "train.lambda_bc": 10.0,
        "sampler.kind": sampler,
    }


def _build_presets() -> dict[str, dict[str, Any]]:
    presets: dict[str, dict[str, Any]] = {}
    all_kinds = ["fixed", "dynamic", "rrr", "causal-rrr", "rar-greedy", "rad", "rar-dist", "linf-topk"]
    for beta, iters in ((30.0, 30_000), (50.0, 60_000)):
        for kind in all_kinds:
            presets[f"convection-b{int(beta)}-{kind}"] = _convection(beta, iters, kind)
    for kind in all_kinds:
        presets[f"allen-cahn-{kind}"] = _allen_cahn(kind)
    for kind in ("fixed", "dynamic", "rrr", "rar-greedy", "rad", "rar-dist", "linf-topk"):
        presets[f"eikonal-circle-{kind}"] = _eikonal(kind)
    presets["harmonic-ode"] = {
        "problem.kind": "harmonic-ode",
        "problem.wavenumber": 20.0,
        "network.width": 50,
        "network.depth": 4,
        "train.iterations": 50_000,
        "train.collocation_points": 1000,
        "train.lambda_ic": 100.0,
        "train.lambda_bc": 100.0,
        "sampler.kind": "fixed",
        "sampler.placement": "equispaced",
    }
    return presets


PRESETS = _build_presets()
