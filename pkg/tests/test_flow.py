import math

import numpy as np
import pytest
from scipy.integrate import quad_vec, solve_ivp

from trishadow.errors import StepSizeUnderflow
from trishadow.flow import (ContinuousSystem, SampledPath, constant_system, continuous_shadow,
                            delta_defect, diagonal_system, discretize, growth_constants,
                            integrate_path, linear_evolution, nonlinear_evolution, ode_residual,
                            read_path_csv, sample_function, sine_nonlinearity, spot_check,
                            tabulated_system, write_path_csv)
from trishadow.linsys import TrichotomyData, fit_constants

C = 0.05


@pytest.fixture
def scalar():
    return constant_system([[-1.0]], sine_nonlinearity(C), C)


def rotating():
    """Non-autonomous, non-vectorized test system."""
    A = lambda t: np.array([[-1.0, 0.3 * math.sin(t)], [0.0, 0.5]])
    f = lambda t, x: 0.1 * np.tanh(x[::-1])
    return ContinuousSystem(2, A, 1.3, f, 0.1)


def test_linear_evolution_examples():
    sys_ = diagonal_system([-1.0, 1.0])
    assert np.allclose(linear_evolution(sys_, 2.0, 0.5), np.diag([math.exp(-1.5), math.exp(1.5)]), rtol=1e-9)
    assert np.array_equal(linear_evolution(sys_, 0.3, 0.3), np.eye(2))
    s = rotating()
    T = linear_evolution(s, 1.7, -0.4)
    two_leg = linear_evolution(s, 1.7, 0.6) @ linear_evolution(s, 0.6, -0.4)
    assert np.max(np.abs(T - two_leg)) <= 1e-8
    assert np.linalg.norm(T, np.inf) <= math.exp(s.N * 2.1)


def test_nonlinear_evolution_examples(scalar):
    lin = diagonal_system([-1.0, 1.0])
    x0 = np.array([0.3, -0.2])
    assert np.allclose(nonlinear_evolution(lin, 1.0, 0.0, x0), linear_evolution(lin, 1.0, 0.0) @ x0)
    assert np.all(nonlinear_evolution(scalar, 3.0, 0.0, [0.0]) == 0)
    ref = solve_ivp(lambda t, x: -x + C * np.sin(x), (0.0, 2.0), [0.7], method="DOP853", rtol=1e-13, atol=1e-15)
    assert abs(nonlinear_evolution(scalar, 2.0, 0.0, [0.7])[0] - ref.y[0, -1]) <= 1e-8
    half = nonlinear_evolution(scalar, 2.0, 0.0, [0.7], h=5e-3)[0]
    assert abs(half - ref.y[0, -1]) <= 1e-8
    assert abs(nonlinear_evolution(scalar, 2.0, 0.0, [0.7])[0]) <= math.exp(growth_constants(scalar)["a"] * 2) * 0.7


def test_step_halving_order():
    s = rotating()
    ref = solve_ivp(lambda t, x: s.A(t) @ x + s.f(t, x), (0, 1.0), [1.0, -0.5], method="DOP853",
                    rtol=1e-13, atol=1e-15).y[:, -1]
    e1 = np.max(np.abs(nonlinear_evolution(s, 1.0, 0.0, [1.0, -0.5], h=0.1) - ref))
    e2 = np.max(np.abs(nonlinear_evolution(s, 1.0, 0.0, [1.0, -0.5], h=0.05) - ref))
    assert 16 * 0.8 <= e1 / e2 <= 16 * 1.2


def test_variation_of_constants():
    s = rotating()
    x = np.array([0.4, 0.9])
    lhs = nonlinear_evolution(s, 1.0, 0.0, x) - linear_evolution(s, 1.0, 0.0) @ x
    integrand = lambda tau: linear_evolution(s, 1.0, tau) @ s.f(tau, nonlinear_evolution(s, tau, 0.0, x))
    rhs, _ = quad_vec(integrand, 0.0, 1.0, epsabs=1e-12)
    assert np.max(np.abs(lhs - rhs)) <= 1e-7


def test_discretize_examples(scalar):
    cocycle, pert = discretize(diagonal_system([-1.0, 1.0]), -3, 3)
    assert np.allclose(cocycle.matrices, np.diag([math.exp(-1), math.e]), rtol=1e-9)
    assert pert.name == "zero"
    tri = TrichotomyData.dichotomy(np.diag([1.0, 0.0]), -3, 3, 1.0, 1.0)
    assert fit_constants(cocycle, tri, 1.0) == pytest.approx(1.0, abs=1e-8)
    cocycle, pert = discretize(scalar, 0, 5)
    gc = growth_constants(scalar)
    bound = C * gc["D"] * gc["K"] * math.exp(gc["a"] + gc["b"])
    assert pert.c == pytest.approx(bound)
    rng = np.random.default_rng(0)
    X, Z = rng.uniform(-3, 3, (50, 1)), rng.uniform(-3, 3, (50, 1))
    ns = rng.integers(0, 5, 50)
    q = np.abs(pert.evaluate(ns, X) - pert.evaluate(ns, Z)) / np.abs(X - Z)
    assert np.max(q) <= bound
    one = pert(2, np.array([0.7]))
    assert one == pytest.approx(nonlinear_evolution(scalar, 3.0, 2.0, [0.7]) - cocycle.A(2) @ [0.7])


def test_delta_defect_examples(scalar):
    grid = np.arange(-500, 501) / 100.0
    true = integrate_path(scalar, grid, [0.8])
    assert delta_defect(scalar, true).delta <= 1e-4
    bumped = SampledPath(grid, true.values + 1e-3 * np.sin(5 * grid)[:, None])
    d = delta_defect(scalar, bumped).delta
    N = 1.0
    assert 1e-3 * (5 - 1 - N - C) <= d <= 1e-3 * (5 + 1 + N + C)
    zero = SampledPath(grid, np.zeros((grid.size, 1)))
    assert delta_defect(scalar, zero) == (0.0, False)
    coarse = SampledPath(np.arange(0, 11, 2.0), np.zeros((6, 1)))
    assert delta_defect(scalar, coarse).coarse_grid


def test_exact_derivative_handle(scalar):
    grid = np.linspace(0, 2, 201)
    y = sample_function(lambda t: [math.exp(-t)], grid, derivative=lambda t: [-math.exp(-t)])
    assert delta_defect(scalar, y).delta == pytest.approx(C * math.sin(1.0), rel=1e-9)


def test_continuous_shadow_exact_path(scalar):
    grid = np.arange(-500, 501) / 100.0
    true = integrate_path(scalar, grid, [0.5])
    res = continuous_shadow(scalar, None, true)
    assert res.sup_deviation <= 1e-9


def test_continuous_shadow_integer_consistency(scalar):
    grid = np.arange(-800, 801) / 100.0
    true = integrate_path(scalar, grid, [1.0])
    y = SampledPath(grid, true.values + 1e-3 * np.sin(5 * grid)[:, None])
    res = continuous_shadow(scalar, None, y)
    ints = np.flatnonzero(np.abs(grid - np.rint(grid)) < 1e-9)
    assert np.array_equal(res.path.values[ints], res.discrete.x.values)
    assert res.discrete_delta <= res.discrete_delta_bound
    assert res.sup_deviation <= res.epsilon
    assert ode_residual(scalar, res.path) <= 1e-6


def test_continuous_shadow_guards(scalar):
    grid = np.linspace(0.5, 5.5, 501)
    with pytest.raises(ValueError):
        continuous_shadow(scalar, None, SampledPath(grid, np.zeros((501, 1))))
    liar = constant_system([[-1.0]], sine_nonlinearity(0.5), 0.05)
    g = np.arange(0, 501) / 100.0
    with pytest.raises(ValueError):
        continuous_shadow(liar, None, SampledPath(g, np.zeros((501, 1))))


def test_spot_check_and_tabulated():
    sys_ = tabulated_system([0.0, 1.0], [np.diag([-1.0, 1.0]), np.diag([-2.0, 0.5])])
    assert sys_.N == 2.0
    assert np.allclose(sys_.matrices(np.array([0.5]))[0], np.diag([-1.5, 0.75]))
    assert spot_check(sys_, np.linspace(-1, 2, 31))["ok"]
    bad = ContinuousSystem(1, lambda t: [[3.0]], 1.0)
    assert not spot_check(bad, np.linspace(0, 1, 5))["ok"]


def test_integrator_guards(scalar):
    with pytest.raises(ValueError):
        linear_evolution(scalar, 1.0, 0.0, h=0.0)
    with pytest.raises(StepSizeUnderflow):
        linear_evolution(scalar, 1.0, 0.0, h=1e-12)


def test_path_csv_round_trip(tmp_path):
    p = SampledPath(np.linspace(0, 1, 11), np.random.default_rng(0).standard_normal((11, 2)))
    write_path_csv(p, tmp_path / "p.csv")
    back = read_path_csv(tmp_path / "p.csv")
    assert np.array_equal(back.t, p.t) and np.array_equal(back.values, p.values)
    with pytest.raises(ValueError):
        SampledPath([0.0, 0.0], [1.0, 2.0])
