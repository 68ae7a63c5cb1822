"""Experiment configuration: JSON schema, parsing, and built-in defaults.

Amplitudes are written as ``[re, im]`` pairs (plain reals are accepted too)
and are normalized on load.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .hilbert import ProjectiveMeasurement, StateVector, real_rotation, tensor_measurement, tensor_state
from .sampling import (
    FixedState,
    FullRefresh,
    HaarUniform,
    HiddenSource,
    Mixture,
    Persistent,
    ProductHaar,
)
from .selector import AnalyticHaar, EmpiricalQuantile

EXPERIMENTS = ("born-check", "contextuality", "nonlocality", "no-signaling", "chsh", "sequential",
               "beamsplitter")

_R2 = 1 / math.sqrt(2)


class ConfigError(ValueError):
    pass


def _pairs(weights: list[float]) -> list[list[float]]:
    return [[math.sqrt(w), 0.0] for w in weights]


# named measurement bases, rows are basis kets
NAMED_BASES: dict[str, tuple[list[list[float]], list[str]]] = {
    "z": ([[1, 0], [0, 1]], ["0", "1"]),
    "x": ([[_R2, _R2], [_R2, -_R2]], ["+", "-"]),
    "sz": ([[1, 0, 0], [0, 1, 0], [0, 0, 1]], ["-1", "0", "+1"]),
    # {(|-1> + |0>)/sqrt2, (|-1> - |0>)/sqrt2, |+1>}
    "qutrit_pm": ([[_R2, _R2, 0], [_R2, -_R2, 0], [0, 0, 1]], ["+", "-", "+1"]),
}

# qutrit example: S_z basis ordered (m=-1, m=0, m=+1)
QUTRIT_PSI = _pairs([0.26, 0.25, 0.49])
QUTRIT_PHI = _pairs([0.3, 0.3, 0.4])
# two-qubit example in joint order |00>, |01>, |10>, |11>
PAIR_PSI = _pairs([0.5, 0.1, 0.0, 0.4])
PAIR_PHI_A = _pairs([0.8, 0.2])
PAIR_PHI_B = _pairs([0.4, 0.6])
SINGLET = [[0.0, 0.0], [_R2, 0.0], [-_R2, 0.0], [0.0, 0.0]]

DEFAULT_SEED = 20240601

DEFAULTS: dict[str, dict[str, Any]] = {
    "born-check": {
        "system": {"dims": [3], "psi": QUTRIT_PSI},
        "measurements": ["sz"],
        "hidden": {"distribution": "haar"},
        "trials": 100_000,
        "params": {"tolerance": 0.01},
    },
    "contextuality": {
        "system": {"dims": [3], "psi": QUTRIT_PSI},
        "measurements": ["sz", "qutrit_pm"],
        "hidden": {"distribution": "fixed", "state": QUTRIT_PHI},
        "trials": 1000,
        "params": {"expected": ["+1", "+"], "shared_label": "+1"},
    },
    "nonlocality": {
        "system": {"dims": [2, 2], "psi": PAIR_PSI},
        "measurements": [{"tensor": ["z", "z"]}, {"tensor": ["x", "z"]}],
        "hidden": {"distribution": "fixed", "state": {"product": [PAIR_PHI_A, PAIR_PHI_B]}},
        "trials": 1000,
        "params": {"expected": ["0⊗0", "+⊗1"]},
    },
    "no-signaling": {
        "system": {"dims": [2, 2], "psi": PAIR_PSI},
        "measurements": [{"tensor": ["z", "z"]}, {"tensor": ["x", "z"]}],
        "hidden": {"distribution": "haar"},
        "trials": 100_000,
        "params": {"tolerance": 0.01, "counter_hidden": {"product": [PAIR_PHI_A, PAIR_PHI_B]}},
    },
    "chsh": {
        "system": {"dims": [2, 2], "psi": SINGLET},
        "measurements": [],
        "hidden": {"distribution": "haar"},
        "trials": 100_000,
        # basis angles in the real plane; S = E(a,b) + E(a,b') + E(a',b) - E(a',b')
        "params": {"angles": {"a": 0.0, "a_prime": math.pi / 4, "b": 5 * math.pi / 8,
                              "b_prime": 3 * math.pi / 8},
                   "tolerance": 0.03, "correlator_tolerance": 0.02,
                   "control_psi": [[1, 0], [0, 0], [0, 0], [0, 0]]},
    },
    "sequential": {
        "system": {"dims": [2], "psi": [[1, 0], [0, 0]]},
        "measurements": ["z", "x"],
        "hidden": {"distribution": "haar", "refresh": "full"},
        "trials": 10_000,
        "params": {"length": 20, "tolerance": 0.02, "kappa_sweep": [0.0, 0.25, 0.5, 0.75, 1.0]},
    },
    "beamsplitter": {
        "system": {},
        "measurements": [],
        "hidden": {"distribution": "haar"},
        "trials": 100_000,
        "params": {"photons": [1, 2, 3], "tolerance": 0.01},
    },
}


@dataclass
class ExperimentConfig:
    name: str
    system: dict = field(default_factory=dict)
    measurements: list = field(default_factory=list)
    hidden: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = DEFAULT_SEED
    strategy: dict = field(default_factory=lambda: {"kind": "auto"})
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if not isinstance(self.trials, int) or isinstance(self.trials, bool) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {"name", "system", "measurements", "hidden", "trials", "seed", "strategy", "params"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "name" not in data:
            raise ConfigError("config needs a 'name'")
        return cls(**copy.deepcopy(data))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "system": self.system,
            "measurements": self.measurements,
            "hidden": self.hidden,
            "trials": self.trials,
            "seed": self.seed,
            "strategy": self.strategy,
            "params": self.params,
        }

    @property
    def dims(self) -> list[int]:
        return [int(d) for d in self.system.get("dims", [])]

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def with_overrides(self, *, seed: int | None = None, trials: int | None = None) -> ExperimentConfig:
        data = copy.deepcopy(self.to_dict())
        if seed is not None:
            data["seed"] = seed
            data["hidden"].pop("seed", None)
        if trials is not None:
            data["trials"] = trials
        return ExperimentConfig.from_dict(data)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def default_config(name: str, **overrides: Any) -> ExperimentConfig:
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}")
    data = _merge({"name": name, "seed": DEFAULT_SEED, **DEFAULTS[name]}, overrides)
    return ExperimentConfig.from_dict(data)


def load_config(path: str | Path, name: str | None = None) -> ExperimentConfig:
    """Read a JSON config and lay it over the defaults of its experiment."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data_name = data.get("name", name)
    if name is not None and data_name != name:
        raise ConfigError(f"config is for {data_name!r}, not {name!r}")
    if data_name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {data_name!r}")
    data.pop("name", None)
    return default_config(data_name, **data)


# builders from JSON fragments


def parse_amplitudes(spec: Any) -> np.ndarray:
    try:
        arr = np.asarray(spec, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad amplitude list: {spec!r}") from exc
    if arr.ndim == 1:
        return arr.astype(np.complex128)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    raise ConfigError(f"amplitudes must be reals or [re, im] pairs, got shape {arr.shape}")


def build_state(spec: Any, dim: int | None = None) -> StateVector:
    if isinstance(spec, dict):
        if "product" in spec:
            parts = [build_state(s) for s in spec["product"]]
            state = parts[0]
            for s in parts[1:]:
                state = tensor_state(state, s)
        elif "basis" in spec:
            if dim is None:
                raise ConfigError("basis-state spec needs a known dimension")
            state = StateVector.basis(dim, int(spec["basis"]))
        else:
            raise ConfigError(f"unknown state spec {spec!r}")
    else:
        try:
            state = StateVector(parse_amplitudes(spec))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if dim is not None and state.dim != dim:
        raise ConfigError(f"state has dimension {state.dim}, expected {dim}")
    return state


def build_measurement(spec: Any, dim: int | None = None) -> ProjectiveMeasurement:
    try:
        if isinstance(spec, str):
            if spec == "computational":
                if dim is None:
                    raise ConfigError("'computational' needs a known dimension")
                m = ProjectiveMeasurement.computational(dim)
            elif spec in NAMED_BASES:
                rows, labels = NAMED_BASES[spec]
                m = ProjectiveMeasurement.from_rows(rows, labels)
            else:
                raise ConfigError(f"unknown named basis {spec!r}")
        elif isinstance(spec, dict) and "tensor" in spec:
            parts = [build_measurement(s) for s in spec["tensor"]]
            m = parts[0]
            for part in parts[1:]:
                m = tensor_measurement(m, part)
        elif isinstance(spec, dict) and "angle" in spec:
            m = real_rotation(float(spec["angle"]))
        elif isinstance(spec, dict) and "basis" in spec:
            rows = [parse_amplitudes(r) for r in spec["basis"]]
            m = ProjectiveMeasurement.from_rows(rows, spec.get("labels"))
        else:
            raise ConfigError(f"unknown measurement spec {spec!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if dim is not None and m.dim != dim:
        raise ConfigError(f"measurement has dimension {m.dim}, expected {dim}")
    return m


def build_source(spec: dict, dim: int, seed: int) -> HiddenSource:
    kind = spec.get("distribution", "haar")
    if kind == "haar":
        dist = HaarUniform(dim)
    elif kind == "fixed":
        if "state" not in spec:
            raise ConfigError("fixed hidden distribution needs 'state'")
        dist = FixedState(build_state(spec["state"], dim))
    elif kind == "product_haar":
        dims = spec.get("dims")
        if not dims or math.prod(dims) != dim:
            raise ConfigError(f"product_haar dims {dims!r} do not multiply to {dim}")
        dist = ProductHaar(tuple(dims))
    else:
        raise ConfigError(f"unknown hidden distribution {kind!r}")
    refresh = spec.get("refresh", "full")
    if refresh == "full":
        policy = FullRefresh()
    elif refresh == "persistent":
        policy = Persistent()
    elif refresh == "mixture":
        try:
            policy = Mixture(float(spec.get("kappa", 0.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError(f"unknown refresh policy {refresh!r}")
    return HiddenSource(dist, seed=int(spec.get("seed", seed)), refresh=policy)


def build_strategy(spec: dict, source: HiddenSource):
    kind = spec.get("kind", "auto")
    if kind == "auto":
        kind = "empirical" if isinstance(source.distribution, ProductHaar) else "analytic"
    if kind == "analytic":
        return AnalyticHaar()
    if kind == "empirical":
        return EmpiricalQuantile(int(spec.get("sample_count", 100_000)),
                                 float(spec.get("band_epsilon", 0.005)))
    raise ConfigError(f"unknown threshold strategy {kind!r}")
