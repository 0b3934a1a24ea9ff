import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.optimize import brentq
from scipy.special import lambertw

from netsync.delay import (
    CoverageError, DelayIntegrator, DelaySpec, GridError, build_kernels, closed_loop_delay, is_delay_stable,
    monodromy, monodromy_by_stepping, spectral_radius, step_history,
)
from netsync.lti import Verdict


def hayes(a, b=None):
    return DelaySpec.scalar([0.0, 1.0], [0.0, -a], b)


def hayes_rate(a):
    """Rightmost root of s + a e^{-s} = 0 from the principal Lambert-W branch."""
    return lambertw(-a).real


def random_spec(rng, d=None, m=None, n=100):
    d = d or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    ks = np.sort(rng.choice(np.arange(5, n + 1), size=m, replace=False))
    ks[-1] = n
    delays = np.concatenate([[0.0], ks / n])
    a = rng.normal(scale=0.7, size=(m + 1, d, d))
    return DelaySpec(delays, a, np.zeros((m + 1, d, d)))


def rel(x, y):
    return np.linalg.norm(x - y) / np.linalg.norm(y)


# -- spec --------------------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        DelaySpec.scalar([0.0], [1.0])
    with pytest.raises(ValueError):
        DelaySpec.scalar([0.0, 0.5, 0.4], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        DelaySpec.scalar([0.1, 1.0], [1.0, 1.0])


def test_incommensurate_delays_rejected():
    spec = DelaySpec.scalar([0.0, 1.0 / 3.0 + 1e-4, 1.0], [0.0, 1.0, 1.0])
    with pytest.raises(GridError):
        monodromy(spec, 30)


# -- time stepping ---------------------------------------------------------------------


def test_step_history_no_delay_effect():
    spec = DelaySpec.scalar([0.0, 1.0], [-1.0, 0.0])
    dt = 1e-2
    hist = np.ones((101, 1))
    sol = DelayIntegrator(spec, hist, dt).run(100)
    assert sol[-1, 0] == pytest.approx(np.exp(-1), abs=1e-6)
    assert step_history(spec, hist, None, dt)[0] == pytest.approx(np.exp(-dt), abs=1e-12)


def test_step_history_against_closed_form():
    # x' = -x(t-1), x = 1 on [-1, 0]  =>  x(t) = 1 - t on [0, 1], 1 - t + (t-1)^2/2 on [1, 2]
    dt = 1e-2
    sol = DelayIntegrator(hayes(1.0), np.ones((101, 1)), dt).run(200)
    t = np.linspace(0, 2, 201)
    exact = np.where(t <= 1, 1 - t, 1 - t + (t - 1) ** 2 / 2)
    assert np.abs(sol[:, 0].real - exact).max() < 1e-10


def test_input_forcing():
    # x' = u(t - 1) with u = 1  =>  x(t) = x(0) + t
    spec = DelaySpec.scalar([0.0, 1.0], [0.0, 0.0], [0.0, 1.0])
    sol = DelayIntegrator(spec, np.zeros((11, 1)), 0.1, u=lambda t: np.ones(1)).run(20)
    assert sol[-1, 0] == pytest.approx(2.0, abs=1e-12)


def test_history_too_short():
    with pytest.raises(CoverageError):
        DelayIntegrator(hayes(1.0), np.ones((5, 1)), 0.1)


def _amplitude_per_period(a, periods, dt=1e-3):
    steps = int(round(1 / dt))
    sol = DelayIntegrator(hayes(a), np.ones((steps + 1, 1)), dt).run(periods * steps)[:, 0].real
    # amplitude of the oscillation over consecutive windows of four delays (one cycle)
    return np.array([np.abs(sol[k * steps:(k + 4) * steps]).max() for k in range(0, periods - 4, 4)])


def test_hayes_marginal_amplitude():
    amp = _amplitude_per_period(np.pi / 2, 120)
    tail = amp[len(amp) // 2:]
    assert abs(tail[-1] / tail[0] - 1) < 0.01


def test_hayes_decay():
    amp = _amplitude_per_period(0.5, 40)
    assert np.all(np.diff(amp) < 0)


# -- kernels --------------------------------------------------------------------------


def test_kernels_pure_delay():
    k = build_kernels(hayes(1.0), 40)
    np.testing.assert_allclose(k.p[:, 0, 0], 1.0, atol=1e-14)
    s = k.grid
    for i, t in enumerate(k.grid):
        # f(1 + t, s) = -1 for s < t, 0 for s > t; mean of the limits at s = t
        off = ~np.isclose(s, t)
        np.testing.assert_allclose(k.f[i, off, 0, 0], np.where(s < t, -1.0, 0.0)[off], atol=1e-14)
        if 0 < t < 1:
            assert k.f[i, i, 0, 0] == pytest.approx(-0.5)


def test_kernels_undelayed_exponential():
    a = np.array([[-0.3, 1.0], [-1.0, -0.3]])
    spec = DelaySpec([0.0, 1.0], np.stack([a, np.zeros((2, 2))]), np.zeros((2, 2, 2)))
    k = build_kernels(spec, 20)
    for i, t in enumerate(k.grid):
        np.testing.assert_allclose(k.p[i], expm(a * t), atol=1e-12)
    assert np.abs(k.f).max() == 0


def test_kernel_grid_requirement():
    with pytest.raises(GridError):
        build_kernels(DelaySpec.scalar([0.0, 0.5, 1.0], [0, 1, 1]), 3)


def test_kernel_reconstruction_matches_stepping():
    """P v from the kernels equals a fine-step integration from the smooth history v."""
    rng = np.random.default_rng(7)
    spec = DelaySpec([0.0, 0.5, 1.0], rng.normal(scale=0.8, size=(3, 2, 2)), np.zeros((3, 2, 2)))
    n = 200
    s = np.linspace(0, 1, n + 1)
    hist = np.stack([np.sin(2 * s) + 0.5, np.cos(3 * s)], axis=1)
    pv = (monodromy(spec, n).p_mat @ hist.reshape(-1)).reshape(n + 1, 2)
    fine = 20
    s_fine = np.linspace(0, 1, n * fine + 1)
    hist_fine = np.stack([np.sin(2 * s_fine) + 0.5, np.cos(3 * s_fine)], axis=1)
    ref = DelayIntegrator(spec, hist_fine, 1 / (n * fine)).run(n * fine)[::fine]
    assert rel(pv, ref) < 1e-3


def test_p_at_period_start_is_identity():
    rng = np.random.default_rng(2)
    k = build_kernels(random_spec(rng, d=2, m=2, n=40), 40)
    np.testing.assert_allclose(k.p[0], np.eye(2), atol=1e-14)
    # first row of P reproduces x(t_m) itself
    p = monodromy(random_spec(rng, d=2, m=2, n=40), 40).p_mat
    np.testing.assert_allclose(p[:2], np.eye(82)[80:], atol=1e-14)


# -- monodromy -------------------------------------------------------------------------


@pytest.mark.parametrize("a", [-0.7, 0.3, 0.2 + 1j])
def test_monodromy_undelayed_radius(a):
    spec = DelaySpec.scalar([0.0, 1.0], [a, 0.0])
    assert monodromy(spec, 50).spectral_radius == pytest.approx(abs(np.exp(a)), rel=1e-3)


@pytest.mark.parametrize("a, stable", [(1.0, True), (2.0, False)])
def test_monodromy_hayes(a, stable):
    r = monodromy(hayes(a), 200).spectral_radius
    assert (r < 1) == stable
    # the dominant Floquet multiplier is exp of the rightmost characteristic root
    assert r == pytest.approx(np.exp(hayes_rate(a)), rel=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_dual_construction_equivalence(seed):
    spec = random_spec(np.random.default_rng(seed))
    p_kernel = monodromy(spec, 100).p_mat
    p_step = monodromy_by_stepping(spec, 100)
    assert rel(p_kernel, p_step) <= 1e-3


def test_stepping_converges_to_kernels():
    spec = random_spec(np.random.default_rng(11), d=2, m=2, n=50)
    p_kernel = monodromy(spec, 50).p_mat
    coarse = rel(monodromy_by_stepping(spec, 50, substeps=1, interp="linear"), p_kernel)
    fine = rel(monodromy_by_stepping(spec, 50, substeps=8, interp="linear"), p_kernel)
    assert fine < coarse


def test_semigroup():
    spec = random_spec(np.random.default_rng(3), d=2, m=2, n=60)
    n = 60
    p = monodromy_by_stepping(spec, n, interp="linear")
    v = np.random.default_rng(4).normal(size=(n + 1, 2))
    two = DelayIntegrator(spec, v, 1 / n, interp="linear", history_interp="linear").run(2 * n)[-(n + 1):]
    assert rel(two.reshape(-1), p @ (p @ v.reshape(-1))) < 1e-6


def test_refinement_order():
    exact = np.exp(hayes_rate(1.0))
    errs = [abs(monodromy(hayes(1.0), n).spectral_radius - exact) for n in (50, 100, 200)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.0


def test_spectral_radius_large_uses_iterative():
    rng = np.random.default_rng(0)
    m = np.diag(np.linspace(0.1, 0.9, 2100)) + 1e-3 * rng.normal(size=(2100, 2100))
    m[0, 0] = 1.5
    assert spectral_radius(m) == pytest.approx(np.abs(np.linalg.eigvals(m)).max(), rel=1e-8)


# -- verdicts -------------------------------------------------------------------------


def test_is_delay_stable_examples():
    assert is_delay_stable(hayes(0.5))[0] is Verdict.STABLE
    assert is_delay_stable(hayes(-0.1))[0] is Verdict.UNSTABLE
    verdict, radius = is_delay_stable(hayes(np.pi / 2), margin=1e-4)
    assert verdict is Verdict.MARGINAL and radius == pytest.approx(1, abs=1e-4)


def test_hayes_bisection_boundary():
    crossing = brentq(lambda a: monodromy(hayes(a), 200).spectral_radius - 1, 0.5, 3.0, xtol=1e-4)
    assert 1.54 <= crossing <= 1.60


@given(st.floats(0.05, 2.95))
@settings(max_examples=10, deadline=None)
def test_radius_crosses_one_once(a):
    r = monodromy(hayes(a), 60).spectral_radius
    assert (r < 1) == (a < np.pi / 2) or abs(a - np.pi / 2) < 0.02


def test_closed_loop_delay():
    spec = DelaySpec([0.0, 1.0], np.zeros((2, 2, 2)), np.stack([np.eye(2)] * 2))
    np.testing.assert_array_equal(closed_loop_delay(spec, 0).a_mats, spec.a_mats)
    np.testing.assert_array_equal(closed_loop_delay(spec, -1).a_mats, -np.stack([np.eye(2)] * 2))
    cl = closed_loop_delay(hayes(0.0, b=[0.0, 1.0]), -1)
    assert is_delay_stable(cl)[0] is Verdict.STABLE


def test_closed_loop_delay_needs_square_input():
    spec = DelaySpec([0.0, 1.0], np.zeros((2, 2, 2)), np.zeros((2, 2, 1)))
    with pytest.raises(TypeError):
        closed_loop_delay(spec, 1.0)
