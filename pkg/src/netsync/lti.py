"""Finite-dimensional LTI subsystems and the spectral network criteria.

A network of ``n`` identical subsystems ``(A, B, C, D)`` coupled through
``u_j = sum_i L[j, i] y_i`` is stable iff the observable part of the single
closed loop ``u = lam * y`` is Hurwitz for every eigenvalue ``lam`` of ``L``.
It synchronizes iff the same holds after removing one copy of the eigenvalue
``lam1`` attached to the all-ones eigenvector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class AlgebraicLoopError(ArithmeticError):
    """Raised when ``I - lam * D`` is singular."""


class PreconditionError(ValueError):
    pass


def _as_matrix(x, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(x, dtype=complex))
    if m.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class LtiSystem:
    """State-space quadruple ``x' = a x + b u, y = c x + d u`` (complex)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray = None

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        b = _as_matrix(self.b, "b")
        c = _as_matrix(self.c, "c")
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"a must be square, got {a.shape}")
        m = a.shape[0]
        if b.shape[0] != m:
            raise DimensionError(f"b has {b.shape[0]} rows, expected {m}")
        if c.shape[1] != m:
            raise DimensionError(f"c has {c.shape[1]} columns, expected {m}")
        d = np.zeros((c.shape[0], b.shape[1]), dtype=complex) if self.d is None else _as_matrix(self.d, "d")
        if d.shape != (c.shape[0], b.shape[1]):
            raise DimensionError(f"d must be {(c.shape[0], b.shape[1])}, got {d.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]

    @classmethod
    def scalar(cls, a, b=1.0, c=1.0, d=0.0) -> "LtiSystem":
        return cls([[a]], [[b]], [[c]], [[d]])


class CouplingSource(enum.Enum):
    RAW = "raw"
    DIFFUSIVE = "diffusive"


@dataclass(frozen=True)
class CouplingMatrix:
    l: np.ndarray
    source: CouplingSource = CouplingSource.RAW
    weights: np.ndarray | None = None

    def __post_init__(self):
        l = _as_matrix(self.l, "coupling")
        if l.shape[0] != l.shape[1]:
            raise DimensionError(f"coupling must be square, got {l.shape}")
        object.__setattr__(self, "l", l)

    @property
    def n(self) -> int:
        return self.l.shape[0]

    @classmethod
    def diffusive(cls, weights) -> "CouplingMatrix":
        """Build ``L`` from ``u_j = sum_i w[j, i] (y_i - y_j)``."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"weights must be square, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise NumericError("diffusive weights must be finite and non-negative")
        w = w.copy()
        np.fill_diagonal(w, 0.0)
        l = w - np.diag(w.sum(axis=1))
        return cls(l, CouplingSource.DIFFUSIVE, w)

    def permuted(self, perm) -> "CouplingMatrix":
        perm = np.asarray(perm)
        w = None if self.weights is None else self.weights[np.ix_(perm, perm)]
        return CouplingMatrix(self.l[np.ix_(perm, perm)], self.source, w)


def complete_graph(n: int, weight: float = 1.0) -> CouplingMatrix:
    return CouplingMatrix.diffusive(weight * (np.ones((n, n)) - np.eye(n)))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues with algebraic multiplicities, sorted by (-Re, Im)."""

    values: np.ndarray
    multiplicities: np.ndarray

    def __iter__(self):
        return iter(zip(self.values.tolist(), self.multiplicities.tolist()))

    def __len__(self):
        return len(self.values)

    def expanded(self) -> np.ndarray:
        return np.repeat(self.values, self.multiplicities)

    def remove_one(self, lam: complex) -> "Spectrum":
        """Drop one instance of the eigenvalue closest to ``lam``."""
        if len(self.values) == 0:
            raise PreconditionError("cannot remove from an empty spectrum")
        k = int(np.argmin(np.abs(self.values - lam)))
        mult = self.multiplicities.copy()
        mult[k] -= 1
        keep = mult > 0
        return Spectrum(self.values[keep], mult[keep])


def _sort_key_order(values: np.ndarray) -> np.ndarray:
    return np.lexsort((values.imag, -values.real))


def group_eigenvalues(eigs, tol: float) -> Spectrum:
    eigs = np.asarray(eigs, dtype=complex)
    if eigs.size == 0:
        return Spectrum(np.zeros(0, complex), np.zeros(0, int))
    eigs = eigs[_sort_key_order(eigs)]
    # single-linkage clustering; sizes are small so O(m^2) is fine
    label = -np.ones(len(eigs), dtype=int)
    n_clusters = 0
    for i in range(len(eigs)):
        if label[i] >= 0:
            continue
        label[i] = n_clusters
        stack = [i]
        while stack:
            k = stack.pop()
            near = np.flatnonzero((label < 0) & (np.abs(eigs - eigs[k]) <= tol))
            label[near] = n_clusters
            stack.extend(near.tolist())
        n_clusters += 1
    values = np.array([eigs[label == c].mean() for c in range(n_clusters)])
    mults = np.array([np.sum(label == c) for c in range(n_clusters)])
    order = _sort_key_order(values)
    return Spectrum(values[order], mults[order])


def spectrum(m, rel_tol: float = 1e-8) -> Spectrum:
    m = _as_matrix(m, "matrix")
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix must be square, got {m.shape}")
    try:
        eigs = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver did not converge: {exc}") from exc
    scale = np.linalg.norm(m, 2) if m.size else 0.0
    return group_eigenvalues(eigs, rel_tol * max(scale, np.finfo(float).tiny))


def closed_loop(sys: LtiSystem, lam: complex) -> LtiSystem:
    """Close the loop ``u = lam * y + v``; ``v`` is the new input."""
    if sys.n_inputs != sys.n_outputs:
        raise DimensionError("output feedback u = lam*y needs as many inputs as outputs")
    p = sys.n_inputs
    loop = np.eye(p) - lam * sys.d
    if np.linalg.cond(loop) > 1e12:
        raise AlgebraicLoopError(f"I - lam*d is singular for lam={lam}")
    s = np.linalg.inv(loop)
    a = sys.a + lam * sys.b @ s @ sys.c
    b = sys.b @ (np.eye(p) + lam * s @ sys.d)
    return LtiSystem(a, b, s @ sys.c, s @ sys.d)


def state_feedback_form(sys: LtiSystem) -> LtiSystem:
    """Replace ``c`` by the identity and ``b`` by ``b c``, giving state-level criteria."""
    if np.any(sys.d != 0):
        raise PreconditionError("state form requires d = 0")
    m = sys.n_states
    return LtiSystem(sys.a, sys.b @ sys.c, np.eye(m), np.zeros((m, m)))


def _observability_svd(a: np.ndarray, c: np.ndarray):
    m = a.shape[0]
    # powers of a/|a| span the same kernel and keep the blocks balanced
    scale = np.linalg.norm(a, 2)
    a_hat = a / scale if scale > 0 else a
    blocks = [c]
    for _ in range(m - 1):
        blocks.append(blocks[-1] @ a_hat)
    obs = np.vstack(blocks)
    _, sv, vh = np.linalg.svd(obs, full_matrices=False)
    tol = 1e-10 * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol)) if sv.size and sv[0] > 0 else 0
    return rank, vh


def unobservable_subspace(a, c) -> np.ndarray:
    a = _as_matrix(a, "a")
    c = _as_matrix(c, "c")
    if a.shape[0] != a.shape[1] or c.shape[1] != a.shape[0]:
        raise DimensionError(f"incompatible shapes a={a.shape}, c={c.shape}")
    rank, vh = _observability_svd(a, c)
    return vh[rank:].conj().T


def observable_part(a, c) -> tuple[np.ndarray, np.ndarray]:
    """Matrix of ``a`` on the quotient by the unobservable subspace.

    The quotient is represented by the orthogonal complement of the kernel of
    the observability matrix, so ``a_obs = W^H a W`` and ``c_obs = c W``.
    """
    a = _as_matrix(a, "a")
    c = _as_matrix(c, "c")
    if a.shape[0] != a.shape[1] or c.shape[1] != a.shape[0]:
        raise DimensionError(f"incompatible shapes a={a.shape}, c={c.shape}")
    rank, vh = _observability_svd(a, c)
    w = vh[:rank].conj().T
    return w.conj().T @ a @ w, c @ w


def max_real_part(a: np.ndarray) -> float:
    if a.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(a).real))


class Verdict(str, enum.Enum):
    SYNCHRONIZES = "synchronizes"
    DOES_NOT_SYNCHRONIZE = "does_not_synchronize"
    MARGINAL = "marginal"
    STABLE = "stable"
    UNSTABLE = "unstable"

    @property
    def exit_code(self) -> int:
        if self in (Verdict.SYNCHRONIZES, Verdict.STABLE):
            return 0
        if self is Verdict.MARGINAL:
            return 2
        return 1


@dataclass(frozen=True)
class LambdaResult:
    lam: complex
    multiplicity: int
    max_real_part: float
    stable: bool


@dataclass(frozen=True)
class SyncReport:
    verdict: Verdict
    lambda1: complex | None
    per_lambda: list[LambdaResult] = field(default_factory=list)
    margin: float = 1e-6
    criterion: str = "sync"

    @property
    def worst(self) -> float:
        """Largest max-real-part over tested eigenvalues (``-inf`` if none)."""
        return max((r.max_real_part for r in self.per_lambda), default=-np.inf)

    def to_json_dict(self) -> dict:
        def num(x):
            return float(x) if np.isfinite(x) else None

        lam1 = None if self.lambda1 is None else [self.lambda1.real, self.lambda1.imag]
        return {
            "verdict": self.verdict.value,
            "lambda1": lam1,
            "per_lambda": [
                {"lambda": [r.lam.real, r.lam.imag], "max_real_part": num(r.max_real_part), "stable": bool(r.stable)}
                for r in self.per_lambda
            ],
            "margin": self.margin,
        }


def decide(values, margin: float, positive: Verdict, negative: Verdict) -> Verdict:
    """Shared verdict rule: any clear failure dominates the marginal band."""
    values = list(values)
    if any(v > margin for v in values):
        return negative
    if any(abs(v) <= margin for v in values):
        return Verdict.MARGINAL
    return positive


def _evaluate(sys: LtiSystem, spec: Spectrum, margin: float) -> list[LambdaResult]:
    out = []
    for lam, mult in spec:
        cl = closed_loop(sys, lam)
        a_obs, _ = observable_part(cl.a, cl.c)
        mr = max_real_part(a_obs)
        out.append(LambdaResult(complex(lam), int(mult), mr, mr < -margin))
    return out


def check_network_stability(sys: LtiSystem, l: CouplingMatrix, margin: float = 1e-6) -> SyncReport:
    if margin <= 0:
        raise PreconditionError("margin must be positive")
    results = _evaluate(sys, spectrum(l.l), margin)
    verdict = decide((r.max_real_part for r in results), margin, Verdict.STABLE, Verdict.UNSTABLE)
    return SyncReport(verdict, None, results, margin, criterion="stability")


def consensus_eigenvalue(l: CouplingMatrix, rel_tol: float = 1e-10) -> complex:
    """Eigenvalue of the all-ones vector; raises if ``1_n`` is not an eigenvector."""
    ones = np.ones(l.n)
    image = l.l @ ones
    lam1 = complex(image[0])
    residual = np.linalg.norm(image - lam1 * ones)
    if residual > rel_tol * np.linalg.norm(l.l, 2):
        raise PreconditionError(f"1_n is not an eigenvector of L (residual norm {residual:.3e})")
    return lam1


def tested_spectrum(l: CouplingMatrix) -> tuple[complex, Spectrum]:
    lam1 = consensus_eigenvalue(l)
    return lam1, spectrum(l.l).remove_one(lam1)


def check_synchronization(sys: LtiSystem, l: CouplingMatrix, margin: float = 1e-6) -> SyncReport:
    if margin <= 0:
        raise PreconditionError("margin must be positive")
    lam1, spec = tested_spectrum(l)
    results = _evaluate(sys, spec, margin)
    verdict = decide((r.max_real_part for r in results), margin, Verdict.SYNCHRONIZES, Verdict.DOES_NOT_SYNCHRONIZE)
    return SyncReport(verdict, lam1, results, margin)


def sync_projection(n: int) -> np.ndarray:
    """``pi Q^{-1}`` for ``Q = [1_n | e_2 | ... | e_n]``: rows ``e_i - e_1``."""
    if n < 2:
        raise DimensionError("sync projection needs n >= 2")
    q = np.eye(n)
    q[:, 0] = 1.0
    return np.linalg.inv(q)[1:].astype(complex)
