"""Finite-difference surrogates for 1-D parabolic subsystems on [0, 1].

    x_t = (a x_xi)_xi + r0 x + r1 x_xi + b u

with Dirichlet, Robin (``n . a grad x = kappa x``) or boundary-input
(``n . a grad x = kappa x + m u``) closures.  Boundary nodes are kept for the
Robin variants and eliminated through a mirrored ghost node, which is the
same as a half-cell flux balance and keeps the scheme second order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .lti import LtiSystem


class GridError(ValueError):
    pass


class CoefficientError(ValueError):
    pass


class ShiftError(ArithmeticError):
    pass


class BoundaryKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    NEUMANN_INPUT = "neumann_input"


@dataclass(frozen=True)
class Boundary:
    kind: BoundaryKind = BoundaryKind.DIRICHLET
    kappa_left: complex = 0.0
    kappa_right: complex = 0.0
    m_left: complex = 0.0
    m_right: complex = 0.0

    @classmethod
    def dirichlet(cls) -> "Boundary":
        return cls(BoundaryKind.DIRICHLET)

    @classmethod
    def neumann(cls, kappa_left=0.0, kappa_right=0.0) -> "Boundary":
        return cls(BoundaryKind.NEUMANN, complex(kappa_left), complex(kappa_right))

    @classmethod
    def neumann_input(cls, kappa_left=0.0, kappa_right=0.0, m_left=1.0, m_right=1.0) -> "Boundary":
        return cls(BoundaryKind.NEUMANN_INPUT, complex(kappa_left), complex(kappa_right),
                   complex(m_left), complex(m_right))


def _samples(x, dtype=complex) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=dtype))
    if arr.ndim != 1:
        raise CoefficientError(f"sampled function must be 1-D, got shape {arr.shape}")
    if arr.size == 1:
        arr = np.repeat(arr, 2)
    if not np.all(np.isfinite(arr)):
        raise CoefficientError("sampled function has non-finite entries")
    return arr


@dataclass(frozen=True)
class ParabolicSpec:
    """Coefficients sampled on a uniform grid of [0, 1] (scalars broadcast)."""

    a: np.ndarray = 1.0
    r0: np.ndarray = 0.0
    r1: np.ndarray = 0.0
    b: np.ndarray = 1.0
    boundary: Boundary = field(default_factory=Boundary.dirichlet)

    def __post_init__(self):
        a = _samples(self.a, float)
        others = {k: _samples(getattr(self, k)) for k in ("r0", "r1", "b")}
        sizes = {a.size} | {v.size for v in others.values()}
        if len(sizes) > 1:
            # scalars were broadcast to length 2; stretch them to the common grid
            target = max(sizes)
            def stretch(v):
                if v.size == target:
                    return v
                if v.size == 2 and v[0] == v[1]:
                    return np.full(target, v[0], dtype=v.dtype)
                raise CoefficientError(f"sample arrays disagree in length: {sorted(sizes)}")
            a = stretch(a)
            others = {k: stretch(v) for k, v in others.items()}
        if a.min() <= 0:
            raise CoefficientError(f"diffusion must be positive, min a = {a.min()}")
        object.__setattr__(self, "a", a)
        for k, v in others.items():
            object.__setattr__(self, k, v)

    @property
    def n_samples(self) -> int:
        return self.a.size


def _resample(values: np.ndarray, xi: np.ndarray) -> np.ndarray:
    src = np.linspace(0.0, 1.0, values.size)
    if np.iscomplexobj(values):
        return np.interp(xi, src, values.real) + 1j * np.interp(xi, src, values.imag)
    return np.interp(xi, src, values)


@dataclass(frozen=True)
class DiscretizedSystem:
    sys: LtiSystem
    grid: np.ndarray
    h: float
    boundary: BoundaryKind
    # weights for the boundary rows: coefficient of the Robin flux in the ODE
    flux_gain: tuple[complex, complex] = (0.0, 0.0)

    @property
    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights matching the unknowns (boundary nodes get h/2)."""
        w = np.full(self.grid.size, self.h)
        if self.boundary is not BoundaryKind.DIRICHLET:
            w[0] = w[-1] = self.h / 2
        return w


def _operator(spec: ParabolicSpec, n_cells: int):
    """Assemble the sparse state matrix, the in-domain gains and the grid."""
    if n_cells < 4:
        raise GridError(f"n_cells must be >= 4, got {n_cells}")
    h = 1.0 / n_cells
    xi = np.linspace(0.0, 1.0, n_cells + 1)
    a = _resample(spec.a, xi)
    if a.min() <= 0:
        raise CoefficientError(f"diffusion must be positive, min a = {a.min()}")
    r0 = _resample(spec.r0, xi)
    r1 = _resample(spec.r1, xi)
    a_half = 0.5 * (a[1:] + a[:-1])  # a_{i+1/2}, i = 0..N-1

    lower = np.zeros(n_cells + 1, complex)  # coefficient of x_{i-1} in row i
    diag = np.zeros(n_cells + 1, complex)
    upper = np.zeros(n_cells + 1, complex)  # coefficient of x_{i+1} in row i
    i = np.arange(1, n_cells)
    lower[i] = a_half[i - 1] / h**2 - r1[i] / (2 * h)
    upper[i] = a_half[i] / h**2 + r1[i] / (2 * h)
    diag[i] = -(a_half[i - 1] + a_half[i]) / h**2 + r0[i]

    gains = (0.0, 0.0)
    if spec.boundary.kind is BoundaryKind.DIRICHLET:
        keep = slice(1, n_cells)
        lo, di, up = lower[keep], diag[keep], upper[keep]
        mat = sp.diags([lo[1:], di, up[:-1]], [-1, 0, 1], format="csr", dtype=complex)
        return mat, xi[keep], h, gains

    # mirrored ghost node: x_{-1} = x_1 + 2 h kappa x_0 / a_{1/2}
    diag[0] = -2 * a_half[0] / h**2 + r0[0]
    upper[0] = 2 * a_half[0] / h**2
    diag[-1] = -2 * a_half[-1] / h**2 + r0[-1]
    lower[-1] = 2 * a_half[-1] / h**2
    # Robin flux enters the boundary rows with these gains (2/h from the
    # half cell, r1 * d/dxi from the first-order term)
    gains = (2 / h - r1[0] / a[0], 2 / h + r1[-1] / a[-1])
    diag[0] += gains[0] * spec.boundary.kappa_left
    diag[-1] += gains[1] * spec.boundary.kappa_right
    mat = sp.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], format="csr", dtype=complex)
    return mat, xi, h, gains


def discretize_sparse(spec: ParabolicSpec, n_cells: int):
    """Sparse ``(a, b)`` pair of the discretization; used by the simulator."""
    mat, grid, h, gains = _operator(spec, n_cells)
    b = sp.diags(_resample(spec.b, grid), 0, format="lil", dtype=complex)
    if spec.boundary.kind is BoundaryKind.NEUMANN_INPUT:
        b[0, 0] += gains[0] * spec.boundary.m_left
        b[-1, -1] += gains[1] * spec.boundary.m_right
    return mat, b.tocsr(), grid, h, gains


def discretize(spec: ParabolicSpec, n_cells: int) -> DiscretizedSystem:
    """Second-order central differences in divergence form.

    Full-state output (``c = I``, ``d = 0``).  For ``neumann_input`` the input
    matrix also carries the boundary trace ``m * u(endpoint)``, so closing the
    loop ``u = lam * x`` reproduces :func:`closed_loop_boundary` exactly.
    """
    mat, b, grid, h, gains = discretize_sparse(spec, n_cells)
    size = grid.size
    sys = LtiSystem(mat.toarray(), b.toarray(), np.eye(size), np.zeros((size, size)))
    return DiscretizedSystem(sys, grid, h, spec.boundary.kind, gains)


def closed_loop_boundary(spec: ParabolicSpec, lam: complex) -> ParabolicSpec:
    """Absorb the feedback ``u = lam * x`` into a Robin condition and the reaction."""
    bd = spec.boundary
    if bd.kind is not BoundaryKind.NEUMANN_INPUT:
        raise TypeError(f"closed_loop_boundary needs a neumann_input boundary, got {bd.kind.value}")
    robin = Boundary.neumann(bd.kappa_left + lam * bd.m_left, bd.kappa_right + lam * bd.m_right)
    return replace(spec, r0=spec.r0 + lam * spec.b, boundary=robin)


def _default_shift(mat: np.ndarray) -> float:
    top = float(np.max(np.linalg.eigvals(mat).real))
    return 1.0 + max(0.0, top)


def boundary_lift(spec: ParabolicSpec, n_cells: int, mu: float | None = None,
                  retries: int = 3) -> tuple[np.ndarray, float]:
    """Discrete lift ``J_h`` with columns for boundary data at xi = 0 and xi = 1.

    Solves ``(A_h - mu) J = 0`` in the interior with boundary flux
    ``n . a grad J = kappa J - h``.  Returns ``(J_h, mu)``; the shift is
    doubled up to ``retries`` times if ``A_h - mu`` is numerically singular.
    """
    if spec.boundary.kind is BoundaryKind.DIRICHLET:
        raise TypeError("boundary_lift needs a Neumann-type boundary")
    mat, grid, h, gains = _operator(spec, n_cells)
    dense = mat.toarray()
    if mu is None:
        mu = _default_shift(dense)
    size = grid.size
    rhs = np.zeros((size, 2), complex)
    rhs[0, 0] = gains[0]
    rhs[-1, 1] = gains[1]
    for _ in range(retries + 1):
        shifted = dense - mu * np.eye(size)
        if np.linalg.cond(shifted) < 1e12:
            lift = np.linalg.solve(shifted, rhs)
            return lift, float(mu)
        mu = 2 * mu if mu > 0 else 1.0
    raise ShiftError(f"A_h - mu is singular up to mu={mu / 2}; pass a larger mu")


def trace_matrix(spec: ParabolicSpec, n_cells: int) -> np.ndarray:
    """Boundary input operator ``u -> (m_left u(0), m_right u(1))``."""
    bd = spec.boundary
    t = np.zeros((2, n_cells + 1), complex)
    t[0, 0] = bd.m_left
    t[1, -1] = bd.m_right
    return t


def lifted_input(spec: ParabolicSpec, n_cells: int, mu: float | None = None):
    """Move the boundary input into the domain.

    With ``z = x + JM u`` the boundary-input system becomes a homogeneous
    Robin problem ``z' = A z + B u + JM u' - mu JM u``.  Returns
    ``(A, B_in_domain, JM, mu)``.
    """
    if spec.boundary.kind is not BoundaryKind.NEUMANN_INPUT:
        raise TypeError("lifted_input needs a neumann_input boundary")
    lift, mu = boundary_lift(spec, n_cells, mu)
    mat, grid, _, _ = _operator(spec, n_cells)
    b_in = np.diag(_resample(spec.b, grid))
    return mat.toarray(), b_in, lift @ trace_matrix(spec, n_cells), mu


def boundary_flux(values: np.ndarray, a: np.ndarray, h: float) -> tuple[complex, complex]:
    """Outward flux ``n . a grad x`` at both ends by one-sided second-order differences."""
    left = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * h)
    right = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * h)
    return -a[0] * left, a[-1] * right
