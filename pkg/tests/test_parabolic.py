import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsync.parabolic import (
    Boundary, BoundaryKind, CoefficientError, GridError, ParabolicSpec, boundary_flux, boundary_lift,
    closed_loop_boundary, discretize, lifted_input, trace_matrix,
)


def eigs_desc(m):
    return np.sort(np.linalg.eigvals(m).real)[::-1]


def heat(boundary=None, **kw):
    return ParabolicSpec(boundary=boundary or Boundary.dirichlet(), **kw)


# -- discretize ------------------------------------------------------------------


def test_dirichlet_leading_eigenvalue():
    d = discretize(heat(), 200)
    assert d.sys.n_states == 199
    lead = eigs_desc(d.sys.a)[0]
    assert abs(lead + np.pi**2) < 0.005 * np.pi**2


def test_neumann_has_constant_mode():
    d = discretize(heat(Boundary.neumann()), 200)
    assert d.sys.n_states == 201
    ev = eigs_desc(d.sys.a)
    assert abs(ev[0]) < 1e-9
    assert ev[1] == pytest.approx(-np.pi**2, rel=5e-3)


def test_reaction_shifts_spectrum_exactly():
    base = discretize(heat(), 40).sys.a
    shifted = discretize(heat(r0=2.5), 40).sys.a
    np.testing.assert_allclose(shifted - base, 2.5 * np.eye(39), atol=1e-12)


def test_grid_shapes():
    d = discretize(heat(), 10)
    assert d.h == pytest.approx(0.1)
    assert d.grid[0] == pytest.approx(0.1) and d.grid[-1] == pytest.approx(0.9)
    n = discretize(heat(Boundary.neumann()), 10)
    assert n.grid[0] == 0 and n.grid[-1] == 1
    assert np.all(np.diff(n.grid) > 0)


def test_output_is_full_state():
    d = discretize(heat(b=np.linspace(1, 2, 11)), 10)
    np.testing.assert_array_equal(d.sys.c, np.eye(9))
    np.testing.assert_array_equal(d.sys.d, np.zeros((9, 9)))
    np.testing.assert_allclose(np.diag(d.sys.b).real, np.linspace(1.1, 1.9, 9))


def test_errors():
    with pytest.raises(GridError):
        discretize(heat(), 3)
    with pytest.raises(CoefficientError):
        heat(a=[1.0, 0.0, 1.0])
    with pytest.raises(CoefficientError):
        heat(a=[1.0, 2.0, 1.0], r0=[0.0, 1.0])


def test_banded_structure():
    a = discretize(heat(a=np.linspace(1, 3, 9), boundary=Boundary.neumann(0.5, -0.2)), 30).sys.a
    assert np.all(np.triu(a, 2) == 0) and np.all(np.tril(a, -2) == 0)
    assert np.all(a.imag == 0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_convergence_order(k):
    errs = []
    for n in (50, 100, 200):
        ev = eigs_desc(discretize(heat(), n).sys.a)[k - 1]
        errs.append(abs(ev + (k * np.pi) ** 2))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


def test_convergence_variable_coefficient():
    # a(x) = (1 + x)^2 has eigenfunctions sin(k pi ln(1+x)/ln 2)/sqrt(1+x),
    # eigenvalues -(k pi / ln 2)^2 - 1/4
    exact = -((np.pi / np.log(2)) ** 2) - 0.25
    errs = []
    for n in (50, 100, 200):
        xi = np.linspace(0, 1, 2001)
        ev = eigs_desc(discretize(heat(a=(1 + xi) ** 2), n).sys.a)[0]
        errs.append(abs(ev - exact))
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_dirichlet_symmetry(seed):
    rng = np.random.default_rng(seed)
    spec = heat(a=rng.uniform(0.5, 2, 7), r0=rng.normal(size=7))
    a = discretize(spec, 24).sys.a
    assert np.abs(a - a.T).max() < 1e-12
    assert np.abs(np.linalg.eigvals(a).imag).max() < 1e-8


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_neumann_weighted_symmetry(seed):
    """Ghost-node rows are halved cells: W A is symmetric for trapezoid weights W."""
    rng = np.random.default_rng(seed)
    spec = heat(a=rng.uniform(0.5, 2, 7), r0=rng.normal(size=7),
                boundary=Boundary.neumann(rng.normal(), rng.normal()))
    d = discretize(spec, 24)
    wa = np.diag(d.quadrature_weights) @ d.sys.a
    assert np.abs(wa - wa.T).max() < 1e-12
    assert np.abs(np.linalg.eigvals(d.sys.a).imag).max() < 1e-8


def test_neumann_conserves_mass():
    xi = np.linspace(0, 1, 11)
    d = discretize(heat(a=1 + xi**2, b=0.0, boundary=Boundary.neumann()), 50)
    w = d.quadrature_weights
    assert np.abs(w @ d.sys.a).max() < 1e-10


# -- closed_loop_boundary --------------------------------------------------------------


def test_closed_loop_boundary_open_loop():
    spec = heat(r0=0.3, boundary=Boundary.neumann_input(0.1, 0.2, 1.0, 1.0))
    out = closed_loop_boundary(spec, 0.0)
    assert out.boundary.kind is BoundaryKind.NEUMANN
    assert out.boundary.kappa_left == 0.1 and out.boundary.kappa_right == 0.2
    np.testing.assert_array_equal(out.r0, spec.r0)


def test_closed_loop_boundary_substitution():
    out = closed_loop_boundary(heat(b=1.0, boundary=Boundary.neumann_input()), -2.0)
    assert out.boundary.kappa_left == -2 and out.boundary.kappa_right == -2
    np.testing.assert_allclose(out.r0, -2.0)


def test_closed_loop_boundary_wrong_kind():
    with pytest.raises(TypeError):
        closed_loop_boundary(heat(Boundary.neumann()), -1.0)


def test_boundary_damping_monotone():
    spec = heat(b=0.0, boundary=Boundary.neumann_input())
    leads = [eigs_desc(discretize(closed_loop_boundary(spec, lam), 100).sys.a)[0] for lam in (-0.5, -1.0, -2.0)]
    assert leads[0] > leads[1] > leads[2]
    assert leads[0] < 0


@pytest.mark.parametrize("lam", [0.0, -1.0, 0.7 + 0.3j, -3.0])
def test_absorption_matches_discrete_closed_loop(lam):
    """Closing u = lam x on the discretization equals discretizing the absorbed spec."""
    xi = np.linspace(0, 1, 9)
    spec = heat(a=1 + xi, r0=np.sin(xi), b=0.5 + xi, boundary=Boundary.neumann_input(0.2, -0.1, 1.5, 0.5))
    d = discretize(spec, 32).sys
    direct = d.a + lam * d.b
    absorbed = discretize(closed_loop_boundary(spec, lam), 32).sys.a
    np.testing.assert_allclose(direct, absorbed, atol=1e-10)


# -- lift --------------------------------------------------------------------------


def test_lift_boundary_flux():
    n = 200
    spec = heat(boundary=Boundary.neumann())
    lift, mu = boundary_lift(spec, n, mu=1.0)
    assert mu == 1.0 and lift.shape == (n + 1, 2)
    j = lift @ [1.0, 0.0]
    assert np.abs(j).max() > 0
    left, right = boundary_flux(j, np.ones(n + 1), 1.0 / n)
    assert left == pytest.approx(-1.0, abs=1e-3)
    assert right == pytest.approx(0.0, abs=1e-3)


def test_lift_matches_continuous_solution():
    # J'' = J on [0, 1], -J'(0) = -1, J'(1) = 0  =>  J = -cosh(1 - x) / sinh(1)
    n = 200
    lift, _ = boundary_lift(heat(boundary=Boundary.neumann()), n, mu=1.0)
    x = np.linspace(0, 1, n + 1)
    exact = -np.cosh(1 - x) / np.sinh(1)
    assert np.abs(lift[:, 0] - exact).max() < 1e-4


def test_lift_residual():
    spec = heat(a=np.linspace(1, 2, 5), boundary=Boundary.neumann(0.3, 0.1))
    d = discretize(spec, 40)
    lift, mu = boundary_lift(spec, 40)
    resid = (d.sys.a - mu * np.eye(41)) @ lift
    resid[0, 0] -= d.flux_gain[0]
    resid[-1, 1] -= d.flux_gain[1]
    assert np.abs(resid).max() <= 1e-10 * np.abs(d.sys.a).max()


def test_lift_default_shift_exceeds_spectrum():
    spec = heat(r0=4.0, boundary=Boundary.neumann())
    _, mu = boundary_lift(spec, 20)
    assert mu == pytest.approx(5.0, rel=1e-8)


def test_lift_linearity_and_zero():
    lift, _ = boundary_lift(heat(boundary=Boundary.neumann()), 30, mu=1.0)
    np.testing.assert_array_equal(lift @ [0.0, 0.0], np.zeros(31))
    for alpha in (2.0, -0.5, 3j):
        np.testing.assert_allclose(lift @ [alpha, 0.0], alpha * (lift @ [1.0, 0.0]), rtol=0, atol=0)


def test_lift_depends_on_shift():
    spec = heat(boundary=Boundary.neumann())
    j1, _ = boundary_lift(spec, 50, mu=1.0)
    j2, _ = boundary_lift(spec, 50, mu=2.0)
    assert np.linalg.norm(j1 - j2) > 0


def test_lift_rejects_dirichlet():
    with pytest.raises(TypeError):
        boundary_lift(heat(), 20)


def test_lifted_input_reproduces_boundary_dynamics():
    """z = x + JM u obeys z' = A z + B u + JM u' - mu JM u along any trajectory."""
    n = 30
    spec = heat(a=np.linspace(1, 2, 4), b=0.5, boundary=Boundary.neumann_input(0.2, 0.0, 1.0, 2.0))
    a, b_in, jm, mu = lifted_input(spec, n)
    full = discretize(spec, n).sys
    rng = np.random.default_rng(0)
    x = rng.normal(size=n + 1)
    u = rng.normal(size=n + 1)
    udot = rng.normal(size=n + 1)
    xdot = full.a @ x + full.b @ u
    z = x + jm @ u
    zdot = xdot + jm @ udot
    np.testing.assert_allclose(zdot, a @ z + b_in @ u + jm @ udot - mu * jm @ u, atol=1e-9)
    assert trace_matrix(spec, n)[1, -1] == 2.0
