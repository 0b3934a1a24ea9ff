"""Delay ODEs  x'(t) = sum_j A_j x(t - t_j) + B_j u(t - t_j).

Two independent routes to the one-period solution map (monodromy operator)
acting on histories sampled at ``n + 1`` uniform nodes of ``[0, t_m]``:

* :func:`build_kernels` / :func:`monodromy` -- the representation
  ``x(t) = p(t) x(t_m) + int f(t, s) x(s) ds + int g(t, s) u(s) ds`` built by
  the Volterra-type kernel recursion and composite trapezoid quadrature;
* :func:`monodromy_by_stepping` -- RK4 method of steps applied to every
  hat-function history.

Delays must sit on the quadrature grid.  The kernels jump across the lines
``s = t_m - t_j`` and ``s = t - t_j``; on those nodes the stored value is the
mean of the one-sided limits, which makes plain trapezoid sums identical to
panel-wise trapezoid sums.  At the ends of an integration domain the inner
one-sided limit is stored instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .lti import DimensionError, LambdaResult, Verdict, decide


class GridError(ValueError):
    pass


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class DelaySpec:
    delays: np.ndarray
    a_mats: np.ndarray
    b_mats: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        a = np.asarray(self.a_mats, dtype=complex)
        b = np.asarray(self.b_mats, dtype=complex)
        if delays.ndim != 1 or delays.size < 2:
            raise DimensionError("need delays t_0 = 0 < t_1 < ... < t_m with m >= 1")
        if delays[0] != 0 or np.any(np.diff(delays) <= 0):
            raise DimensionError(f"delays must start at 0 and increase strictly: {delays}")
        if a.ndim != 3 or a.shape[0] != delays.size or a.shape[1] != a.shape[2]:
            raise DimensionError(f"a_mats must be (m+1, d, d), got {a.shape}")
        if b.ndim != 3 or b.shape[0] != delays.size or b.shape[1] != a.shape[1]:
            raise DimensionError(f"b_mats must be (m+1, d, p), got {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DimensionError("non-finite coefficients")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "a_mats", a)
        object.__setattr__(self, "b_mats", b)

    @property
    def dim(self) -> int:
        return self.a_mats.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.b_mats.shape[2]

    @property
    def t_max(self) -> float:
        return float(self.delays[-1])

    @classmethod
    def scalar(cls, delays, a, b=None) -> "DelaySpec":
        a = np.asarray(a, dtype=complex).reshape(-1, 1, 1)
        b = np.zeros_like(a) if b is None else np.asarray(b, dtype=complex).reshape(-1, 1, 1)
        return cls(delays, a, b)


def grid_offsets(spec: DelaySpec, n: int) -> np.ndarray:
    """Integer node offsets of the delays on the grid ``t_m / n``."""
    h = spec.t_max / n
    k = np.rint(spec.delays / h).astype(int)
    if np.any(np.abs(spec.delays - k * h) > 1e-9 * spec.t_max):
        raise GridError(f"delays {spec.delays} are not multiples of the step {h}")
    if np.any(np.diff(k) <= 0):
        raise GridError(f"grid with n={n} is too coarse to separate the delays")
    return k


def closed_loop_delay(spec: DelaySpec, lam: complex) -> DelaySpec:
    """State feedback ``u = lam * x``: ``A_j <- A_j + lam B_j``."""
    if spec.n_inputs != spec.dim:
        raise TypeError("closed_loop_delay needs as many inputs as states")
    return DelaySpec(spec.delays, spec.a_mats + lam * spec.b_mats, spec.b_mats)


# ---------------------------------------------------------------------------
# method of steps


class DelayIntegrator:
    """Fixed-step RK4 for delay equations on a grid commensurate with the delays.

    ``history`` holds samples at ``t - t_m, ..., t`` (``t_m / dt + 1`` rows);
    trailing axes beyond the state dimension are integrated as a batch.
    Delayed values at RK half steps come from cubic Hermite interpolation of
    the computed solution (``interp="hermite"``) or from linear interpolation
    (``interp="linear"``).  The supplied history is interpolated as given by
    ``history_interp``.
    """

    def __init__(self, spec: DelaySpec, history, dt: float, u: Callable | None = None,
                 interp: str = "hermite", history_interp: str = "cubic", t0: float = 0.0):
        if dt <= 0:
            raise GridError("dt must be positive")
        steps = spec.delays / dt
        self.k = np.rint(steps).astype(int)
        if np.any(np.abs(steps - self.k) > 1e-9 * max(1.0, steps[-1])):
            raise GridError(f"dt={dt} is not commensurate with delays {spec.delays}")
        hist = np.asarray(history, dtype=complex)
        if hist.shape[0] < self.k[-1] + 1:
            raise CoverageError(f"history has {hist.shape[0]} samples, need {self.k[-1] + 1}")
        hist = hist[-(self.k[-1] + 1):]
        if hist.shape[1] != spec.dim:
            raise DimensionError(f"history state dimension {hist.shape[1]} != {spec.dim}")
        self.spec = spec
        self.dt = dt
        self.u = u
        self.interp = interp
        self.history_interp = history_interp
        self.t0 = t0
        self.origin = hist.shape[0] - 1  # index of t0
        self._x = [row for row in hist]
        self._dx: list = [None] * len(self._x)
        if history_interp == "cubic":
            grad = np.gradient(hist, dt, axis=0, edge_order=2) if hist.shape[0] > 2 else np.zeros_like(hist)
            self._hist_dx = grad
        self._a = spec.a_mats
        self._b = spec.b_mats

    @property
    def index(self) -> int:
        return len(self._x) - 1

    @property
    def time(self) -> float:
        return self.t0 + (self.index - self.origin) * self.dt

    @property
    def solution(self) -> np.ndarray:
        return np.stack(self._x)

    def _mid(self, q0: int):
        x0, x1 = self._x[q0], self._x[q0 + 1]
        if q0 + 1 <= self.origin:
            if self.history_interp == "linear":
                return 0.5 * (x0 + x1)
            d0, d1 = self._hist_dx[q0], self._hist_dx[q0 + 1]
        else:
            if self.interp == "linear":
                return 0.5 * (x0 + x1)
            d0, d1 = self._dx[q0], self._dx[q0 + 1]
        return 0.5 * (x0 + x1) + self.dt * (d0 - d1) / 8

    def _forcing(self, t: float, i: int, half: bool, full: bool):
        """Delayed terms j >= 1 and input terms at stage time ``t``."""
        acc = 0
        for j in range(1, len(self.k)):
            q = i - self.k[j]
            if half:
                xd = self._mid(q)
            else:
                xd = self._x[q + 1] if full else self._x[q]
            acc = acc + self._a[j] @ xd
        if self.u is not None:
            for j in range(len(self.k)):
                acc = acc + self._b[j] @ np.asarray(self.u(t - self.spec.delays[j]), dtype=complex)
        return acc

    def step(self):
        i = self.index
        dt = self.dt
        t = self.time
        a0 = self._a[0]
        x = self._x[i]
        k1 = a0 @ x + self._forcing(t, i, False, False)
        self._dx[i] = k1  # Hermite slopes at node i are needed by the half step
        vh = self._forcing(t + dt / 2, i, True, False)
        v1 = self._forcing(t + dt, i, False, True)
        k2 = a0 @ (x + dt / 2 * k1) + vh
        k3 = a0 @ (x + dt / 2 * k2) + vh
        k4 = a0 @ (x + dt * k3) + v1
        self._x.append(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        self._dx.append(None)
        return self._x[-1]

    def run(self, n_steps: int) -> np.ndarray:
        for _ in range(n_steps):
            self.step()
        return self.solution[-(n_steps + 1):]


def step_history(spec: DelaySpec, history, u: Callable | None, dt: float, t: float = 0.0):
    """One RK4 step from ``history`` (samples on ``[t - t_m, t]``); returns x(t + dt)."""
    return DelayIntegrator(spec, history, dt, u, t0=t).step()


# ---------------------------------------------------------------------------
# kernel recursion


@dataclass(frozen=True)
class KernelSet:
    """Kernels sampled on the uniform grid.

    ``p[i]`` is ``p(t_m + t_i)``; ``f[i, l]`` is ``f(t_m + t_i, s_l)`` for
    ``s_l`` in ``[0, t_m]``; ``g_left``/``g_right`` hold the one-sided limits
    in ``s`` of ``g(t_m + t_i, s_l)`` for ``s_l`` in ``[0, 2 t_m]``.
    """

    t_max: float
    n: int
    p: np.ndarray
    f: np.ndarray
    g_left: np.ndarray
    g_right: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n + 1)

    @property
    def h(self) -> float:
        return self.t_max / self.n

    @property
    def g(self) -> np.ndarray:
        return 0.5 * (self.g_left + self.g_right)


def _limits(nodes: np.ndarray, lo, hi):
    """Left and right limits of the indicator of ``[lo, hi]`` at integer nodes."""
    left = (nodes > lo) & (nodes <= hi)
    right = (nodes >= lo) & (nodes < hi)
    return left.astype(float), right.astype(float)


def _domain_value(left: np.ndarray, right: np.ndarray, first: int, last: int) -> np.ndarray:
    """Average of the limits, replaced by the inner limit at the domain ends."""
    val = 0.5 * (left + right)
    val[..., first] = right[..., first]
    val[..., last] = left[..., last]
    return val


def _trapezoid_weights(count: int, h: float) -> np.ndarray:
    w = np.full(count, h)
    w[0] = w[-1] = h / 2
    return w


def _exp_table(a0: np.ndarray, h: float, count: int) -> np.ndarray:
    """``e^{A_0 k h}`` for k = 0..count-1 by scaling and squaring (scipy.linalg.expm)."""
    return np.stack([scipy.linalg.expm(a0 * (k * h)) for k in range(count)])


def _shifted_kernel(expo, mats, k, i_idx, s_idx, lo_fn, hi_fn, first, last, one_sided=False):
    """Sum_j e^{A_0 (t - t_j - s)} M_j 1{lo_j <= s <= hi_j} on an index grid.

    ``i_idx`` indexes t (absolute grid index), ``s_idx`` indexes s.  Returns
    the domain value, or the (left, right) limits when ``one_sided``.
    """
    d, cols = mats.shape[1], mats.shape[2]
    shape = (i_idx.size, s_idx.size, d, cols)
    out_l = np.zeros(shape, complex)
    out_r = np.zeros(shape, complex)
    out = np.zeros(shape, complex)
    ii, ss = np.meshgrid(i_idx, s_idx, indexing="ij")
    for j, kj in enumerate(k):
        if not np.any(mats[j]):
            continue
        left, right = _limits(ss, lo_fn(kj, ii), hi_fn(kj, ii))
        lag = ii - kj - ss
        lag_c = np.clip(lag, 0, expo.shape[0] - 1)
        block = expo[lag_c] @ mats[j]  # (T, S, d, cols)
        if one_sided:
            out_l += left[..., None, None] * block
            out_r += right[..., None, None] * block
        else:
            val = _domain_value(left, right, first, last)
            out += val[..., None, None] * block
    if one_sided:
        return out_l, out_r
    return out


def _as_block(k: np.ndarray) -> np.ndarray:
    """(T, S, d, c) -> (T*d, S*c) block matrix."""
    t, s, d, c = k.shape
    return k.transpose(0, 2, 1, 3).reshape(t * d, s * c)


def _from_block(m: np.ndarray, t: int, s: int, d: int, c: int) -> np.ndarray:
    return m.reshape(t, d, s, c).transpose(0, 2, 1, 3)


def build_kernels(spec: DelaySpec, n: int) -> KernelSet:
    """Kernels ``p, f, g`` of the one-period solution representation.

    Base case ``p_0 = e^{A_0 (t - t_m)}`` with indicator kernels ``f_0, g_0``;
    then ``k_* = ceil(t_m / t_1)`` rounds of
    ``K_k(t, .) = K_0(t, .) + int_{t_m}^{2 t_m} f_0(t, r) K_{k-1}(r, .) dr``.
    Because ``f_0(t, r)`` vanishes for ``r > t - t_1`` the iteration is exact
    after ``k_*`` rounds.
    """
    m = spec.delays.size - 1
    if n < 8 * m:
        raise GridError(f"n={n} is too small for {m} delay intervals (need >= {8 * m})")
    k = grid_offsets(spec, n)
    h = spec.t_max / n
    d, p_in = spec.dim, spec.n_inputs
    a1 = spec.a_mats.copy()
    a1[0] = 0  # f_0 only carries the delayed terms j >= 1
    expo = _exp_table(spec.a_mats[0], h, 2 * n + 1)

    t_abs = n + np.arange(n + 1)
    p0 = expo[np.arange(n + 1)]
    lo = lambda kj, ii: n - kj  # noqa: E731
    hi = lambda kj, ii: ii - kj  # noqa: E731
    f0 = _shifted_kernel(expo, a1, k, t_abs, np.arange(n + 1), lo, hi, 0, n)
    g0_l, g0_r = _shifted_kernel(expo, spec.b_mats, k, t_abs, np.arange(2 * n + 1), lo, hi, 0, 2 * n,
                                 one_sided=True)
    # integration operator over r in [t_m, 2 t_m]: same kernel as f_0, with r
    # shifted to absolute index n + rho, and trapezoid weights folded in
    rho = n + np.arange(n + 1)
    op = _shifted_kernel(expo, a1, k, t_abs, rho, lo, hi, 0, n)
    op = op * _trapezoid_weights(n + 1, h)[None, :, None, None]
    op_m = _as_block(op)

    p0_m = _as_block(p0[:, None])
    f0_m = _as_block(f0)
    gl_m = _as_block(g0_l)
    gr_m = _as_block(g0_r)
    p_m, f_m, gL, gR = p0_m, f0_m, gl_m, gr_m
    for _ in range(math.ceil(k[-1] / k[1])):
        p_m = p0_m + op_m @ p_m
        f_m = f0_m + op_m @ f_m
        gL = gl_m + op_m @ gL
        gR = gr_m + op_m @ gR

    return KernelSet(
        t_max=spec.t_max,
        n=n,
        p=_from_block(p_m, n + 1, 1, d, d)[:, 0],
        f=_from_block(f_m, n + 1, n + 1, d, d),
        g_left=_from_block(gL, n + 1, 2 * n + 1, d, p_in),
        g_right=_from_block(gR, n + 1, 2 * n + 1, d, p_in),
    )


@dataclass(frozen=True)
class MonodromyOperator:
    """Discretized ``x_d[k+1] = P x_d[k] + Q u_d[k] + R u_d[k+1]`` on nodal values."""

    p_mat: np.ndarray
    q_mat: np.ndarray
    r_mat: np.ndarray
    n: int
    dim: int

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.p_mat)


def assemble_monodromy(kernels: KernelSet) -> MonodromyOperator:
    n, h = kernels.n, kernels.h
    d = kernels.p.shape[1]
    c = kernels.g_left.shape[3]
    w = _trapezoid_weights(n + 1, h)

    pk = kernels.f * w[None, :, None, None]
    pk[:, n] += kernels.p
    p_mat = _as_block(pk)

    gq = 0.5 * (kernels.g_left[:, : n + 1] + kernels.g_right[:, : n + 1])
    gq[:, 0] = kernels.g_right[:, 0]
    gq[:, n] = kernels.g_left[:, n]
    q_mat = _as_block(gq * w[None, :, None, None])

    rk = np.zeros((n + 1, n + 1, d, c), complex)
    gl = kernels.g_left[:, n:]
    gr = kernels.g_right[:, n:]
    for i in range(1, n + 1):
        vals = 0.5 * (gl[i, : i + 1] + gr[i, : i + 1])
        vals[0] = gr[i, 0]
        vals[i] = gl[i, i]
        rk[i, : i + 1] = vals * _trapezoid_weights(i + 1, h)[:, None, None]
    r_mat = _as_block(rk)
    return MonodromyOperator(p_mat, q_mat, r_mat, n, d)


def monodromy(spec: DelaySpec, n: int) -> MonodromyOperator:
    return assemble_monodromy(build_kernels(spec, n))


def monodromy_by_stepping(spec: DelaySpec, n: int, substeps: int = 1, interp: str = "hermite") -> np.ndarray:
    """Independent ``P``: integrate one period from every hat-function history."""
    grid_offsets(spec, n)
    d = spec.dim
    fine = n * substeps
    # hat basis sampled on the fine grid (piecewise linear, exact)
    coarse = np.linspace(0, 1, n + 1)
    fine_t = np.linspace(0, 1, fine + 1)
    interp_mat = np.stack([np.interp(fine_t, coarse, e) for e in np.eye(n + 1)], axis=1)
    basis = np.einsum("fl,ab->falb", interp_mat, np.eye(d)).reshape(fine + 1, d, (n + 1) * d)
    integ = DelayIntegrator(spec, basis, spec.t_max / fine, interp=interp, history_interp="linear")
    out = integ.run(fine)[::substeps]  # (n+1, d, (n+1)d)
    return out.reshape((n + 1) * d, (n + 1) * d)


def spectral_radius(mat: np.ndarray, dense_limit: int = 2000) -> float:
    if mat.shape[0] <= dense_limit:
        return float(np.max(np.abs(np.linalg.eigvals(mat))))
    vals = scipy.sparse.linalg.eigs(mat, k=1, which="LM", tol=1e-10, return_eigenvectors=False)
    return float(np.abs(vals[0]))


def growth_exponent(radius: float, t_max: float) -> float:
    """``log(radius) / t_m``: the continuous-time rate equivalent to a period gain."""
    return math.log(radius) / t_max if radius > 0 else -math.inf


def is_delay_stable(spec: DelaySpec, n: int = 200, margin: float = 1e-6) -> tuple[Verdict, float]:
    """Verdict from the spectral radius of ``P``; returns ``(verdict, radius)``."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    radius = monodromy(spec, n).spectral_radius
    if radius < 1 - margin:
        return Verdict.STABLE, radius
    if radius > 1 + margin:
        return Verdict.UNSTABLE, radius
    return Verdict.MARGINAL, radius


def check_delay_network(spec: DelaySpec, lams, n: int, margin: float, criterion: str):
    """Per-eigenvalue monodromy test; ``lams`` is an iterable of (lam, multiplicity)."""
    results = []
    for lam, mult in lams:
        radius = monodromy(closed_loop_delay(spec, lam), n).spectral_radius
        rate = growth_exponent(radius, spec.t_max)
        results.append(LambdaResult(complex(lam), int(mult), rate, rate < -margin))
    if criterion == "stability":
        verdict = decide((r.max_real_part for r in results), margin, Verdict.STABLE, Verdict.UNSTABLE)
    else:
        verdict = decide((r.max_real_part for r in results), margin, Verdict.SYNCHRONIZES,
                         Verdict.DOES_NOT_SYNCHRONIZE)
    return results, verdict
