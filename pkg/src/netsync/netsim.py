"""Time-domain simulation of closed-loop networks and empirical sync checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .delay import DelayIntegrator, DelaySpec
from .lti import CouplingMatrix, LtiSystem, SyncReport, Verdict, sync_projection
from .parabolic import ParabolicSpec, discretize_sparse


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class ParabolicNode:
    spec: ParabolicSpec
    n_cells: int = 100


Subsystem = Union[LtiSystem, ParabolicNode, DelaySpec]


@dataclass(frozen=True)
class NetworkSpec:
    subsystem: Subsystem
    coupling: CouplingMatrix

    @property
    def n(self) -> int:
        return self.coupling.n

    @property
    def state_dim(self) -> int:
        """State dimension of one node."""
        sub = self.subsystem
        if isinstance(sub, LtiSystem):
            return sub.n_states
        if isinstance(sub, ParabolicNode):
            return discretize_sparse(sub.spec, sub.n_cells)[2].size
        return sub.dim


@dataclass
class SimulationTrace:
    times: np.ndarray
    outputs: np.ndarray  # (samples, n, q)
    sync_error: np.ndarray
    state_norms: np.ndarray
    pairwise: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must increase strictly")
        if not (len(self.times) == len(self.outputs) == len(self.sync_error) == len(self.state_norms)):
            raise ValueError("trace arrays have inconsistent lengths")


def sync_metric(outputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sup-norm of ``(pi Q^{-1} (x) I_q) y`` and max pairwise node difference per sample."""
    n = outputs.shape[1]
    if n < 2:
        zero = np.zeros(outputs.shape[0])
        return zero, zero
    proj = sync_projection(n)
    projected = np.einsum("ij,tjq->tiq", proj, outputs)
    err = np.abs(projected).reshape(outputs.shape[0], -1).max(axis=1)
    diffs = np.abs(outputs[:, :, None, :] - outputs[:, None, :, :]).reshape(outputs.shape[0], -1).max(axis=1)
    return err, diffs


def _lti_network(sys: LtiSystem, l: np.ndarray):
    """Dense closed-loop matrices ``(A_net, C_out)`` with ``y = C_out x``."""
    n = l.shape[0]
    eye = np.eye(n)
    an = np.kron(eye, sys.a)
    bn = np.kron(eye, sys.b)
    cn = np.kron(eye, sys.c)
    dn = np.kron(eye, sys.d)
    lq = np.kron(l, np.eye(sys.n_outputs))
    if sys.n_inputs != sys.n_outputs:
        raise AssemblyError("coupling u_j = sum L_ji y_i needs matching input/output dimensions")
    loop = np.eye(lq.shape[0]) - lq @ dn
    if np.linalg.cond(loop) > 1e12:
        raise AssemblyError("network algebraic loop I - L D is singular")
    gain = np.linalg.solve(loop, lq @ cn)
    return an + bn @ gain, cn + dn @ gain


def _rk4_propagator(a: np.ndarray, dt: float) -> np.ndarray:
    ha = dt * a
    eye = np.eye(a.shape[0])
    return eye + ha @ (eye + ha / 2 @ (eye + ha / 3 @ (eye + ha / 4)))


def _parabolic_network(node: ParabolicNode, l: np.ndarray):
    mat, b, grid, _, _ = discretize_sparse(node.spec, node.n_cells)
    n = l.shape[0]
    a_net = sp.kron(sp.identity(n), mat) + sp.kron(sp.csr_matrix(l), b)
    return a_net.tocsc(), grid.size


def _sample_indices(n_steps: int, every: int) -> np.ndarray:
    idx = np.arange(0, n_steps + 1, every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def _finish(times, states, c_out, n, q) -> SimulationTrace:
    states = np.asarray(states)
    outputs = states @ c_out.T if c_out is not None else states
    outputs = outputs.reshape(len(times), n, q)
    err, pair = sync_metric(outputs)
    norms = np.linalg.norm(states.reshape(len(times), -1), axis=1)
    return SimulationTrace(np.asarray(times), outputs, err, norms, pair)


def simulate(net: NetworkSpec, init, horizon: float, dt: float, sample_every: int = 1,
             method: str | None = None) -> SimulationTrace:
    """Integrate ``Close(P^n, L)`` from ``init``.

    ``init`` is an ``(n, state_dim)`` array (constant history for delay
    nodes) or, for delay nodes, an ``(H + 1, n, d)`` history ending at t = 0.
    Methods: ``"rk4"`` (default for LTI), ``"cn"`` (Crank-Nicolson with one
    sparse LU, default for parabolic nodes), and RK4 method of steps for
    delay nodes.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < 10 * dt:
        raise ValueError("horizon must cover at least 10 steps")
    n_steps = int(round(horizon / dt))
    keep = _sample_indices(n_steps, max(1, int(sample_every)))
    times = keep * dt
    sub = net.subsystem
    n = net.n
    l = net.coupling.l

    if isinstance(sub, DelaySpec):
        return _simulate_delay(sub, l, init, dt, n_steps, keep, times)

    x0 = np.asarray(init, dtype=complex)
    per_node = net.state_dim
    if x0.size != n * per_node:
        raise AssemblyError(f"init has {x0.size} entries, expected {n}x{per_node}")
    x = x0.reshape(-1)

    if isinstance(sub, ParabolicNode):
        a_net, q = _parabolic_network(sub, l)
        c_out = None
        method = method or "cn"
    else:
        a_dense, c_out = _lti_network(sub, l)
        q = sub.n_outputs
        method = method or "rk4"

    states = []
    keep_set = iter(keep)
    nxt = next(keep_set)
    if method == "cn":
        a_sp = sp.csc_matrix(a_net) if not isinstance(sub, ParabolicNode) else a_net
        eye = sp.identity(a_sp.shape[0], format="csc")
        lu = spla.splu((eye - dt / 2 * a_sp).tocsc())
        rhs_op = (eye + dt / 2 * a_sp).tocsr()
        advance = lambda v: lu.solve(rhs_op @ v)  # noqa: E731
    elif method == "rk4":
        dense = a_dense if not isinstance(sub, ParabolicNode) else a_net.toarray()
        prop = _rk4_propagator(dense, dt)
        advance = lambda v: prop @ v  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")

    for step in range(n_steps + 1):
        if step == nxt:
            states.append(x.copy())
            nxt = next(keep_set, -1)
        if step < n_steps:
            x = advance(x)
    return _finish(times, states, c_out, n, q)


def _simulate_delay(spec: DelaySpec, l, init, dt, n_steps, keep, times) -> SimulationTrace:
    n, d = l.shape[0], spec.dim
    if spec.n_inputs != d:
        raise AssemblyError("delay nodes use full-state coupling; inputs must match states")
    eye = np.eye(n)
    a_net = np.stack([np.kron(eye, a) + np.kron(l, b) for a, b in zip(spec.a_mats, spec.b_mats)])
    net_spec = DelaySpec(spec.delays, a_net, np.zeros((a_net.shape[0], n * d, 1)))
    hist_len = int(round(spec.t_max / dt)) + 1
    init = np.asarray(init, dtype=complex)
    if init.size == n * d:
        hist = np.broadcast_to(init.reshape(1, n * d), (hist_len, n * d))
    elif init.ndim == 3 and init.shape[1:] == (n, d):
        hist = init.reshape(init.shape[0], n * d)
    else:
        raise AssemblyError(f"delay init must be (n, d) or (H+1, n, d), got {init.shape}")
    integ = DelayIntegrator(net_spec, hist, dt)
    sol = integ.run(n_steps)
    return _finish(times, sol[keep], None, n, d)


# ---------------------------------------------------------------------------
# rate fitting and agreement


@dataclass(frozen=True)
class RateFit:
    times: np.ndarray
    errors: np.ndarray
    rate: float
    r2: float
    degenerate: bool


def fit_rate(times, values, fit_fraction: float = 0.5, scale=None, floor: float = 1e-12):
    """Least-squares slope of ``log(values)`` over the last ``fit_fraction`` of time.

    Samples below ``floor * scale`` are round-off and skipped; ``scale`` is a
    per-sample magnitude (e.g. the largest output entry) and defaults to the
    largest value.  Returns ``(rate, r2)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if scale is None:
        scale = values.max()
    cutoff = times[-1] - fit_fraction * (times[-1] - times[0])
    alive = values > floor * np.maximum(scale, np.finfo(float).tiny)
    sel = alive & (times >= cutoff)
    if sel.sum() < 5:
        sel = alive
    if sel.sum() < 2:
        return -np.inf, 0.0
    t, y = times[sel], np.log(values[sel])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def sync_error_series(trace: SimulationTrace, fit_fraction: float = 0.5) -> RateFit:
    if len(trace.times) == 0:
        raise ValueError("empty trace")
    errors = trace.sync_error
    magnitude = np.abs(trace.outputs).reshape(len(trace.times), -1).max(axis=1)
    # round-off is relative to the outputs at the same instant
    if np.all(errors <= 1e-12 * np.maximum(1.0, magnitude)):
        return RateFit(trace.times, errors, -np.inf, 1.0, True)
    rate, r2 = fit_rate(trace.times, errors, fit_fraction, scale=np.maximum(magnitude, 1e-300))
    return RateFit(trace.times, errors, rate, r2, False)


@dataclass(frozen=True)
class Agreement:
    agree: bool | None
    excluded: bool
    reason: str = ""


def verify_prediction(report: SyncReport, fit: RateFit, margin_rate: float = 1e-3) -> Agreement:
    """Compare the spectral verdict with the fitted sync-error rate."""
    if report.verdict is Verdict.MARGINAL:
        return Agreement(None, True, "marginal verdict")
    if fit.degenerate:
        return Agreement(None, True, "sync error identically zero (diagonal start)")
    decays = fit.rate < -margin_rate
    if report.verdict in (Verdict.SYNCHRONIZES, Verdict.STABLE):
        return Agreement(decays, False)
    return Agreement(not decays, False)


def random_init(net: NetworkSpec, seed: int, diagonal: bool = False) -> np.ndarray:
    """Uniform in [-1, 1] per real and imaginary part; identical rows if ``diagonal``."""
    rng = np.random.default_rng(seed)
    rows = 1 if diagonal else net.n
    shape = (rows, net.state_dim)
    x = rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape)
    if diagonal:
        x = np.repeat(x, net.n, axis=0)
    return x

