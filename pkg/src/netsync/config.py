"""JSON configuration: parsing, serialization and parameter paths.

Complex numbers are ``[re, im]`` pairs; plain numbers are accepted for real
entries.  Matrices are lists of rows.  Sampled functions are a number, a list
of real samples, or a list of ``[re, im]`` samples on the uniform grid.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .delay import DelaySpec
from .lti import CouplingMatrix, CouplingSource, LtiSystem
from .netsim import ParabolicNode
from .parabolic import Boundary, BoundaryKind, ParabolicSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DelayNode:
    spec: DelaySpec
    grid: int = 200


SystemConfig = Union[LtiSystem, ParabolicNode, DelayNode]


@dataclass(frozen=True)
class AnalysisConfig:
    margin: float = 1e-6
    criterion: str = "sync"  # or "stability"
    target: str = "output"  # or "state" (LTI only)
    margin_rate: float = 1e-3


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 10.0
    dt: float = 1e-3
    sample_every: int = 1
    seed: int = 0


@dataclass(frozen=True)
class Config:
    system: SystemConfig
    coupling: CouplingMatrix
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    simulation: SimulationConfig | None = None


# -- numbers -----------------------------------------------------------------


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_pair(x) -> bool:
    return isinstance(x, list) and len(x) == 2 and all(_is_number(v) for v in x)


def parse_complex(x) -> complex:
    if _is_number(x):
        return complex(x)
    if _is_pair(x):
        return complex(x[0], x[1])
    raise ConfigError(f"expected a number or [re, im] pair, got {x!r}")


def parse_matrix(x, name: str) -> np.ndarray:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) for r in x):
        raise ConfigError(f"{name}: expected a list of rows")
    try:
        m = np.array([[parse_complex(v) for v in row] for row in x], dtype=complex)
    except ValueError as exc:
        raise ConfigError(f"{name}: ragged matrix") from exc
    if m.ndim != 2:
        raise ConfigError(f"{name}: ragged matrix")
    if not np.all(np.isfinite(m)):
        raise ConfigError(f"{name}: non-finite entries")
    return m


def parse_samples(x, name: str) -> np.ndarray:
    if _is_number(x):
        return np.array([complex(x)])
    if isinstance(x, list) and x:
        if all(_is_number(v) for v in x):
            return np.array(x, dtype=complex)
        return np.array([parse_complex(v) for v in x], dtype=complex)
    raise ConfigError(f"{name}: expected a number or a list of samples")


def _c(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _m(m: np.ndarray) -> list:
    return [[_c(v) for v in row] for row in np.asarray(m)]


# -- parse -------------------------------------------------------------------


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def _parse_system(raw: dict) -> SystemConfig:
    kind = _need(raw, "type", "system")
    if kind == "lti":
        d = raw.get("d")
        try:
            return LtiSystem(
                parse_matrix(_need(raw, "a", "system"), "a"),
                parse_matrix(_need(raw, "b", "system"), "b"),
                parse_matrix(_need(raw, "c", "system"), "c"),
                None if d is None else parse_matrix(d, "d"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "parabolic":
        bd = raw.get("boundary", {"kind": "dirichlet"})
        try:
            bkind = BoundaryKind(_need(bd, "kind", "boundary"))
        except ValueError as exc:
            raise ConfigError(f"unknown boundary kind {bd.get('kind')!r}") from exc
        boundary = Boundary(
            bkind,
            parse_complex(bd.get("kappa_left", 0.0)),
            parse_complex(bd.get("kappa_right", 0.0)),
            parse_complex(bd.get("m_left", 0.0)),
            parse_complex(bd.get("m_right", 0.0)),
        )
        a = parse_samples(raw.get("a", 1.0), "a")
        if np.any(a.imag != 0):
            raise ConfigError("diffusion a must be real")
        try:
            spec = ParabolicSpec(
                a=a.real,
                r0=parse_samples(raw.get("r0", 0.0), "r0"),
                r1=parse_samples(raw.get("r1", 0.0), "r1"),
                b=parse_samples(raw.get("b", 1.0), "b"),
                boundary=boundary,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        n_cells = raw.get("n_cells", 100)
        if not isinstance(n_cells, int) or n_cells < 4:
            raise ConfigError(f"n_cells must be an integer >= 4, got {n_cells!r}")
        return ParabolicNode(spec, n_cells)
    if kind == "delay":
        delays = _need(raw, "delays", "system")
        if not isinstance(delays, list) or not all(_is_number(t) for t in delays):
            raise ConfigError("delays must be a list of numbers")
        a = np.stack([parse_matrix(m, "a_mats") for m in _need(raw, "a_mats", "system")])
        b_raw = raw.get("b_mats")
        b = np.zeros_like(a) if b_raw is None else np.stack([parse_matrix(m, "b_mats") for m in b_raw])
        grid = raw.get("grid", 200)
        if not isinstance(grid, int) or grid < 1:
            raise ConfigError(f"grid must be a positive integer, got {grid!r}")
        try:
            return DelayNode(DelaySpec(delays, a, b), grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown system type {kind!r}")


def _parse_coupling(raw: dict) -> CouplingMatrix:
    if "weights" in raw:
        w = raw["weights"]
        if not isinstance(w, list) or not all(isinstance(r, list) and all(_is_number(v) for v in r) for r in w):
            raise ConfigError("coupling.weights must be a real matrix")
        try:
            return CouplingMatrix.diffusive(np.array(w, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"coupling.weights: {exc}") from exc
    if "matrix" in raw:
        try:
            return CouplingMatrix(parse_matrix(raw["matrix"], "coupling.matrix"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("coupling needs 'weights' or 'matrix'")


def parse_config(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    system = _parse_system(_need(raw, "system", "config"))
    coupling = _parse_coupling(_need(raw, "coupling", "config"))
    an = raw.get("analysis", {})
    analysis = AnalysisConfig(
        margin=float(an.get("margin", 1e-6)),
        criterion=an.get("criterion", "sync"),
        target=an.get("target", "output"),
        margin_rate=float(an.get("margin_rate", 1e-3)),
    )
    if analysis.margin <= 0 or not np.isfinite(analysis.margin):
        raise ConfigError("analysis.margin must be positive")
    if analysis.criterion not in ("sync", "stability"):
        raise ConfigError(f"analysis.criterion must be 'sync' or 'stability', got {analysis.criterion!r}")
    if analysis.target not in ("output", "state"):
        raise ConfigError(f"analysis.target must be 'output' or 'state', got {analysis.target!r}")
    sim = None
    if "simulation" in raw:
        s = raw["simulation"]
        seed = s.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("simulation.seed must be an unsigned integer")
        sim = SimulationConfig(float(s.get("horizon", 10.0)), float(s.get("dt", 1e-3)),
                               int(s.get("sample_every", 1)), seed)
        if not (np.isfinite(sim.horizon) and np.isfinite(sim.dt)) or sim.dt <= 0 or sim.sample_every < 1:
            raise ConfigError("simulation needs finite horizon, dt > 0, sample_every >= 1")
    return Config(system, coupling, analysis, sim)


def load_config(path) -> tuple[Config, dict]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw), raw


# -- serialize ---------------------------------------------------------------


def _system_dict(sys: SystemConfig) -> dict:
    if isinstance(sys, LtiSystem):
        return {"type": "lti", "a": _m(sys.a), "b": _m(sys.b), "c": _m(sys.c), "d": _m(sys.d)}
    if isinstance(sys, ParabolicNode):
        s, bd = sys.spec, sys.spec.boundary
        return {
            "type": "parabolic",
            "n_cells": sys.n_cells,
            "a": [float(v) for v in s.a],
            "r0": [_c(v) for v in s.r0],
            "r1": [_c(v) for v in s.r1],
            "b": [_c(v) for v in s.b],
            "boundary": {"kind": bd.kind.value, "kappa_left": _c(bd.kappa_left), "kappa_right": _c(bd.kappa_right),
                         "m_left": _c(bd.m_left), "m_right": _c(bd.m_right)},
        }
    spec = sys.spec
    return {
        "type": "delay",
        "grid": sys.grid,
        "delays": [float(t) for t in spec.delays],
        "a_mats": [_m(a) for a in spec.a_mats],
        "b_mats": [_m(b) for b in spec.b_mats],
    }


def config_to_dict(cfg: Config) -> dict:
    if cfg.coupling.source is CouplingSource.DIFFUSIVE:
        coupling = {"weights": [[float(v) for v in row] for row in cfg.coupling.weights]}
    else:
        coupling = {"matrix": _m(cfg.coupling.l)}
    out: dict[str, Any] = {
        "system": _system_dict(cfg.system),
        "coupling": coupling,
        "analysis": {"margin": cfg.analysis.margin, "criterion": cfg.analysis.criterion,
                     "target": cfg.analysis.target, "margin_rate": cfg.analysis.margin_rate},
    }
    if cfg.simulation is not None:
        s = cfg.simulation
        out["simulation"] = {"horizon": s.horizon, "dt": s.dt, "sample_every": s.sample_every, "seed": s.seed}
    return out


# -- parameter paths ----------------------------------------------------------


def set_path(raw: dict, path: str, value: float) -> dict:
    """Copy of ``raw`` with the scalar at dotted ``path`` replaced by ``value``."""
    out = copy.deepcopy(raw)
    keys = path.split(".")
    node = out
    try:
        for key in keys[:-1]:
            node = node[int(key)] if isinstance(node, list) else node[key]
        last = keys[-1]
        if isinstance(node, list):
            idx = int(last)
            current = node[idx]
            node[idx] = value
        else:
            current = node[last]
            node[last] = value
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise ConfigError(f"parameter path {path!r} does not address a value") from exc
    if not _is_number(current):
        raise ConfigError(f"parameter path {path!r} addresses {type(current).__name__}, not a scalar")
    return out
