"""Grid-function representation, left limits, variations and mollifiers."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from genbackward import function_space as fs
from genbackward import process_models as pm
from genbackward.function_space import CompactGridFunction, GridFunction, Kernel, MembershipError

X = np.linspace(-2, 2, 41)
T = np.linspace(0, 1, 11)


def _box(values_fn, support=(0.2, 0.8, -1.5, 1.5)):
    return CompactGridFunction.from_function(values_fn, T, X, support=support)


def test_constructor_rejects_bad_grids():
    with pytest.raises(ValueError):
        GridFunction(np.array([0.1, 1.0]), X, np.zeros((2, X.size)))
    with pytest.raises(ValueError):
        GridFunction(T, X[::-1], np.zeros((T.size, X.size)))
    with pytest.raises(ValueError):
        GridFunction(T, X, np.zeros((3, 3)))


def test_evaluation_interpolates_and_extends_flat():
    f = GridFunction.from_function(lambda t, x: x + t, T, X)
    assert f(0.35, 0.55) == pytest.approx(0.3 + 0.55)
    # right-continuous rows
    assert f(0.3, 0.0) == pytest.approx(0.3)
    assert f(0.3, 0.0, left=True) == pytest.approx(0.2)
    assert f(0.5, 10.0) == pytest.approx(2.5)


def test_left_limit_constant_in_t():
    f = GridFunction.from_function(lambda t, x: np.sin(x) + 0 * t, T, X)
    np.testing.assert_array_equal(fs.left_limit(f).values, f.values)


def test_left_limit_single_jump():
    vals = np.zeros((T.size, X.size))
    vals[1:] = 1.0
    f = GridFunction(T, X, vals)
    fl = fs.left_limit(f)
    np.testing.assert_array_equal(fl.values[1], vals[0])
    np.testing.assert_array_equal(fl.values[0], vals[0])


@given(arrays(float, (5, 6), elements=st.floats(-5, 5)))
@settings(max_examples=40, deadline=None)
def test_left_limit_differs_only_on_rows(values):
    f = GridFunction(np.linspace(0, 1, 5), np.linspace(0, 1, 6), values)
    d = f.values - fs.left_limit(f).values
    np.testing.assert_array_equal(d[1:], np.diff(values, axis=0))
    # evaluated at the nodes, the left-limit rows agree with left lookups
    fl = fs.left_limit(f)
    for i, s in enumerate(f.t_nodes):
        assert np.allclose(fl.values[i], f(s, f.x_nodes, left=True))


def test_one_sided_derivatives():
    f = GridFunction.from_function(lambda t, x: x + 0 * t, T, X)
    assert fs.one_sided_x_derivative(f, 0.5, 0.33, "left") == pytest.approx(1.0)
    assert fs.one_sided_x_derivative(f, 0.5, 0.33, "right") == pytest.approx(1.0)
    g = GridFunction.from_function(lambda t, x: np.abs(x - 0.4) + 0 * t, T, X)
    assert fs.one_sided_x_derivative(g, 0.5, 0.4, "left") == pytest.approx(-1.0)
    assert fs.one_sided_x_derivative(g, 0.5, 0.4, "right") == pytest.approx(1.0)
    assert fs.one_sided_x_derivative(f, 0.5, 5.0, "left") == 0.0
    assert fs.one_sided_x_derivative(f, 0.5, 5.0, "right") == 0.0
    assert fs.one_sided_x_derivative(f, 0.5, -2.0, "left") == 0.0


@given(arrays(float, (4, 8), elements=st.floats(0, 1)))
@settings(max_examples=40, deadline=None)
def test_convex_rows_have_monotone_derivatives(raw):
    x = np.linspace(-1, 1, 9)
    # cumulate nonnegative increments into convex rows
    slopes = np.cumsum(raw, axis=1) - 4
    vals = np.hstack([np.zeros((4, 1)), np.cumsum(slopes * np.diff(x), axis=1)])
    f = GridFunction(np.linspace(0, 1, 4), x, vals)
    pts = np.linspace(-0.99, 0.99, 50)
    for side in ("left", "right"):
        d = f.dx(0.5, pts, side=side)
        assert np.all(np.diff(d) >= -1e-12)


def test_t_variation_examples():
    f = GridFunction.from_function(lambda t, x: 0 * t + x, T, X)
    assert fs.t_variation(f, 3) == 0.0
    g = GridFunction.from_function(lambda t, x: t**2 + x, T, X)
    assert fs.t_variation(g, 3, (0.2, 0.7)) == pytest.approx(0.7**2 - 0.2**2)
    h = GridFunction(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0]), np.array([[0.0, 0], [1, 1], [-1, -1]]))
    assert fs.t_variation(h, 0) == pytest.approx(3.0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_t_variation_additive(a, b):
    a, b = sorted((a, b))
    rng = np.random.default_rng(0)
    f = GridFunction(T, X, rng.normal(size=(T.size, X.size)))
    total = fs.t_variation(f, 7, (0.0, 1.0))
    parts = fs.t_variation(f, 7, (0.0, a)) + fs.t_variation(f, 7, (a, b)) + fs.t_variation(f, 7, (b, 1.0))
    assert parts == pytest.approx(total)


def test_validator_and_declared_lipschitz():
    f = GridFunction.from_function(lambda t, x: 3 * x + 0 * t, T, X)
    assert f.validate()
    bad = GridFunction(T, X, f.values, lipschitz_x=1.0)
    with pytest.raises(MembershipError):
        bad.validate()


def test_compact_support_checks():
    theta = _box(lambda t, x: fs.smooth_plateau(t, 0.2, 0.8, 0.1) * fs.smooth_plateau(x, -1, 1, 0.3))
    assert theta.validate()
    with pytest.raises(MembershipError):
        _box(lambda t, x: 1.0 + 0 * t * x)
    with pytest.raises(MembershipError):
        CompactGridFunction(T, X, np.zeros((T.size, X.size)), support=(0.0, 0.5, -1, 1))


def test_csv_and_binary_roundtrip(tmp_path):
    theta = fs.plateau_bump(T, X, (0.2, 0.8), (-1, 1))
    back = GridFunction.from_bytes(theta.to_bytes())
    assert isinstance(back, CompactGridFunction)
    np.testing.assert_array_equal(back.values, theta.values)
    assert back.support == theta.support
    theta.to_csv(tmp_path / "g.csv")
    g = GridFunction.from_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(g.values, theta.values)
    np.testing.assert_array_equal(g.x_nodes, X)


def test_resample_is_exact_on_refinement():
    f = GridFunction.from_function(lambda t, x: np.cos(3 * x) * (1 + t), T, X)
    t2 = np.linspace(0, 1, 21)
    x2 = np.linspace(-2, 2, 81)
    g = f.resample(t2, x2)
    pts_t = np.random.default_rng(1).uniform(0, 1, 100)
    pts_x = np.random.default_rng(2).uniform(-2.5, 2.5, 100)
    np.testing.assert_allclose(g(pts_t, pts_x), f(pts_t, pts_x), atol=1e-13)


# -- kernels -----------------------------------------------------------------


@pytest.mark.parametrize("kernel", [Kernel.triweight(), Kernel.triweight(0.1, 0.9)])
def test_kernel_moments_against_quadrature(kernel):
    mass = integrate.quad(kernel.pdf, kernel.a, kernel.b)[0]
    assert mass == pytest.approx(1.0, abs=1e-12)
    for k in (-2.0, kernel.a + 0.1, 0.5 * (kernel.a + kernel.b), kernel.b - 0.05, 3.0):
        ref = integrate.quad(lambda y: max(y - k, 0.0) * kernel.pdf(y), kernel.a, kernel.b, points=[k])[0]
        assert kernel.stop_loss(k) == pytest.approx(ref, abs=1e-12)
        refc = integrate.quad(kernel.pdf, kernel.a, np.clip(k, kernel.a, kernel.b))[0]
        assert kernel.cdf(k) == pytest.approx(refc, abs=1e-12)


# -- mollifiers ----------------------------------------------------------------


def _step_theta():
    # plateau in x, value 1 on rows [0.3, 0.5), 2 on [0.5, 0.7)
    prof = fs.smooth_plateau(X, -1, 1, 0.3)
    vals = np.zeros((T.size, X.size))
    vals[3:5] = prof
    vals[5:7] = 2 * prof
    return CompactGridFunction(T, X, vals, support=(0.3, 0.7, -1, 1))


def test_mollify_time_step_against_quadrature():
    theta = _step_theta()
    K = Kernel.triweight(0.1, 0.9)
    n = 8
    m = fs.mollify_time(theta, K, n)
    t = 0.5 + 1 / (2 * n)
    for x in (0.0, 0.9, -0.95):
        ref = integrate.quad(lambda s: theta(t - s / n, x) * K.pdf(s), 0, 1, points=[0.5], epsabs=1e-13)[0]
        assert m(t, x) == pytest.approx(ref, abs=1e-10)


def test_mollify_time_support_and_constant_region():
    prof = fs.smooth_plateau(X, -1, 1, 0.3)
    vals = np.zeros((T.size, X.size))
    vals[2:8] = prof
    theta = CompactGridFunction(T, X, vals, support=(0.2, 0.8, -1, 1))
    m = fs.mollify_time(theta, n=20)
    # interior of a t-constant stretch is reproduced
    assert m(0.5, 0.3) == pytest.approx(theta(0.5, 0.3), abs=1e-12)
    t_a, t_b, _, _ = m.support
    assert t_a >= 0.2 and t_b <= 0.8 + 1 / 20
    assert m(0.2 + 0.1 / 20 - 1e-9, 0.0) == 0.0


def test_mollify_time_rejects_small_n():
    with pytest.raises(ValueError, match="n >="):
        fs.mollify_time(_step_theta(), n=2)


def test_mollify_time_converges_to_left_limit():
    theta = _step_theta()
    errs = []
    for n in (4, 8, 16, 32, 64):
        m = fs.mollify_time(theta, n=n)
        pts = theta.t_nodes[4:8]
        errs.append(np.max(np.abs(m(pts[:, None], X[None, :]) - fs.left_limit(theta)(pts[:, None], X[None, :]))))
    assert errs[-1] < 1e-12
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_mollify_space_linear_band():
    f = GridFunction.from_function(lambda t, x: 2 * x + 0 * t, T, X)
    m = fs.mollify_space(f, n=4)
    xs = np.linspace(-1.7, 1.7, 15)
    np.testing.assert_allclose(m(0.5, xs), 2 * xs, atol=1e-12)
    np.testing.assert_allclose(m(0.5, xs, deriv=1), 2.0, atol=1e-12)
    np.testing.assert_allclose(m(0.5, xs, deriv=2), 0.0, atol=1e-12)


def test_mollify_space_tent_against_quadrature():
    f = GridFunction.from_function(lambda t, x: np.maximum(0, 1 - np.abs(x)) + 0 * t, T, X)
    K = Kernel.triweight()
    for n in (2, 5):
        m = fs.mollify_space(f, K, n)
        ref = integrate.quad(lambda y: max(0.0, 1 - abs(y / n)) * K.pdf(y), -1, 1, points=[0.0])[0]
        assert m(0.4, 0.0) == pytest.approx(ref, abs=1e-12)
        assert m(0.4, 0.0) < 1.0
        d1 = integrate.quad(lambda y: f.dx(0.4, 0.3 + y / n) * K.pdf(y), -1, 1, points=[-0.3 * n])[0]
        assert m(0.4, 0.3, deriv=1) == pytest.approx(d1, abs=1e-10)


@given(st.integers(1, 64))
@settings(max_examples=25, deadline=None)
def test_mollify_space_lipschitz_distance(n):
    rng = np.random.default_rng(n)
    f = GridFunction(T, X, rng.normal(size=(T.size, X.size)))
    m = fs.mollify_space(f, n=n)
    xs = np.linspace(-3, 3, 301)
    gap = np.max(np.abs(m(0.45, xs) - f(0.45, xs)))
    assert gap <= f.lipschitz_x * Kernel.triweight().radius / n + 1e-12
    # the Lipschitz bound survives smoothing
    assert np.max(np.abs(m(0.45, xs, deriv=1))) <= f.lipschitz_x + 1e-12


def test_mollified_on_grid_is_member():
    theta = _step_theta()
    g = fs.mollify_time(theta, n=10).on_grid()
    assert isinstance(g, CompactGridFunction)
    assert g.validate()


# -- path evaluation -------------------------------------------------------------


def test_eval_on_path_identity_and_constant():
    part = pm.Partition.uniform(1.0, 20)
    ens = pm.simulate(pm.jump_diffusion(), part, 30, seed=1)
    f = GridFunction.from_function(lambda t, x: x + 0 * t, T, np.linspace(-50, 50, 3))
    pv = fs.eval_on_path(f, ens, 4)
    np.testing.assert_allclose(pv.nodes[0], ens.paths[4], atol=1e-12)
    j = ens.jumps.for_path(4)
    np.testing.assert_allclose(pv.y_post - pv.y_pre, j.post - j.pre, atol=1e-12)
    c = GridFunction(T, X, np.full((T.size, X.size), 2.5))
    pv = fs.eval_on_ensemble(c, ens)
    assert np.all(pv.nodes == 2.5) and np.all(pv.t_jump == 0) and np.all(pv.x_part == 0)


def test_eval_on_path_time_jump():
    part = pm.Partition.uniform(1.0, 20)
    ens = pm.simulate(pm.brownian_motion(), part, 5, seed=1)
    vals = np.zeros((T.size, X.size))
    vals[1:] = np.sin(X)
    f = GridFunction(T, X, vals)
    pv = fs.eval_on_ensemble(f, ens)
    k = 2  # t = 0.1 = s_1
    np.testing.assert_allclose(pv.t_jump[:, k], f(0.1, ens.paths[:, k]) - f(0.1, ens.paths[:, k], left=True))
    assert np.all(pv.t_jump[:, 3] == 0)
