"""Glue between a parsed :class:`Config` and the criterion / simulation paths."""

from __future__ import annotations

import numpy as np

from .config import Config, DelayNode
from .delay import check_delay_network
from .lti import (
    LtiSystem, SyncReport, check_network_stability, check_synchronization, spectrum,
    state_feedback_form, tested_spectrum,
)
from .netsim import NetworkSpec, ParabolicNode, fit_rate, random_init, simulate, sync_error_series
from .parabolic import discretize


def subsystem_lti(cfg: Config) -> LtiSystem:
    sys = cfg.system
    if isinstance(sys, ParabolicNode):
        return discretize(sys.spec, sys.n_cells).sys
    if cfg.analysis.target == "state":
        return state_feedback_form(sys)
    return sys


def analyze(cfg: Config) -> SyncReport:
    an = cfg.analysis
    if isinstance(cfg.system, DelayNode):
        node = cfg.system
        if an.criterion == "stability":
            lam1, lams = None, spectrum(cfg.coupling.l)
        else:
            lam1, lams = tested_spectrum(cfg.coupling)
        results, verdict = check_delay_network(node.spec, lams, node.grid, an.margin, an.criterion)
        return SyncReport(verdict, lam1, results, an.margin, an.criterion)
    sys = subsystem_lti(cfg)
    if an.criterion == "stability":
        return check_network_stability(sys, cfg.coupling, an.margin)
    return check_synchronization(sys, cfg.coupling, an.margin)


def criterion_value(cfg: Config, report: SyncReport) -> float:
    """Worst max-real-part; for delay systems the worst monodromy spectral radius."""
    worst = report.worst
    if isinstance(cfg.system, DelayNode):
        return float(np.exp(worst * cfg.system.spec.t_max)) if np.isfinite(worst) else 0.0
    return worst


def network_of(cfg: Config) -> NetworkSpec:
    sub = cfg.system.spec if isinstance(cfg.system, DelayNode) else cfg.system
    return NetworkSpec(sub, cfg.coupling)


def simulate_config(cfg: Config, seed: int | None = None, diagonal: bool = False):
    if cfg.simulation is None:
        raise ValueError("config has no 'simulation' section")
    sim = cfg.simulation
    net = network_of(cfg)
    init = random_init(net, sim.seed if seed is None else seed, diagonal)
    return simulate(net, init, sim.horizon, sim.dt, sim.sample_every)


def fitted_rate(cfg: Config, trace) -> float:
    """Sync-error decay rate, or output-norm rate for the stability criterion."""
    if cfg.analysis.criterion == "stability":
        norms = np.abs(trace.outputs).reshape(len(trace.times), -1).max(axis=1)
        return fit_rate(trace.times, norms)[0]
    return sync_error_series(trace).rate
