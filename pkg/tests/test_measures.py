"""Bilinear form, jump functional, drift measures and the generalized drift."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from genbackward import function_space as fs
from genbackward import marginals as mg
from genbackward import measures as ms
from genbackward import process_models as pm

T8 = np.linspace(0, 1, 9)
X41 = np.linspace(-2, 2, 41)


def theta_box(t_nodes, x_nodes, tb=(0.2, 0.8), xb=(-1.5, 1.5)):
    return fs.plateau_bump(t_nodes, x_nodes, tb, xb)


# smooth inputs for the density oracle (asymmetric so nothing cancels by parity)
def f_s(t, x):
    return np.exp(-(x**2)) * (1 + t)


def f_s_t(t, x):
    return np.exp(-(x**2)) + 0 * t


def f_s_xx(t, x):
    return (4 * x**2 - 2) * np.exp(-(x**2)) * (1 + t)


def g_s(t, x):
    return np.sin(x + 0.3) * np.cos(2 * t)


def g_s_t(t, x):
    return -2 * np.sin(x + 0.3) * np.sin(2 * t)


def g_s_xx(t, x):
    return -np.sin(x + 0.3) * np.cos(2 * t)


def th_s(t, x):
    return fs.smooth_plateau(t, 0.2, 0.8, 0.2) * fs.smooth_plateau(x, -1.5, 1.5, 1.0) * (1 + 0.3 * x)


def _smooth_grids(n):
    t = np.linspace(0, 1, n + 1)
    x = np.linspace(-3, 3, 2 * n + 1)
    F = fs.GridFunction.from_function(f_s, t, x)
    G = fs.GridFunction.from_function(g_s, t, x)
    TH = fs.CompactGridFunction.from_function(th_s, t, x, support=(0.2, 0.8, -1.5, 1.5))
    return F, G, TH


# -- mu_bilinear ------------------------------------------------------------------


def test_bilinear_time_constant_inputs_vanish():
    F = fs.GridFunction.from_function(lambda t, x: np.abs(x) + 0 * t, T8, X41)
    G = fs.GridFunction.from_function(lambda t, x: np.maximum(x - 0.3, 0) + 0 * t, T8, X41)
    assert abs(ms.mu_bilinear(F, G, theta_box(T8, X41))) < 1e-14


def test_bilinear_smooth_density_oracle_first_order():
    ref = ms.smooth_density_quadrature(f_s_t, f_s_xx, g_s_t, g_s_xx, th_s, (0.2, 0.8), (-1.5, 1.5))
    errs = []
    for n in (40, 80, 160):
        errs.append(abs(ms.mu_bilinear(*_smooth_grids(n)) - ref))
    assert errs[-1] < 0.01 * abs(ref)
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.9)


def test_bilinear_swap_is_bitwise():
    F, G, TH = _smooth_grids(40)
    assert ms.mu_bilinear(F, G, TH) == ms.mu_bilinear(G, F, TH)


def test_bilinear_linear_in_theta_and_f():
    F, G, TH = _smooth_grids(20)
    TH2 = theta_box(F.t_nodes, F.x_nodes, (0.3, 0.9), (-1.0, 2.0))
    a = 1.7
    lhs = ms.mu_bilinear(F, G, TH.scale(a) + TH2)
    rhs = a * ms.mu_bilinear(F, G, TH) + ms.mu_bilinear(F, G, TH2)
    assert lhs == pytest.approx(rhs, abs=1e-13)
    lhs = ms.mu_bilinear(F.scale(a) + G, G, TH)
    assert lhs == pytest.approx(a * ms.mu_bilinear(F, G, TH) + ms.mu_bilinear(G, G, TH), abs=1e-13)


def test_bilinear_aligns_mismatched_grids():
    F, G, TH = _smooth_grids(20)
    Gc = G.resample(np.linspace(0, 1, 11), np.linspace(-3, 3, 31))
    val = ms.mu_bilinear(F, Gc, TH)
    assert np.isfinite(val)
    assert val == ms.mu_bilinear(Gc, F, TH)


def test_bilinear_weights_reproduce_form():
    F, _, TH = _smooth_grids(20)
    C = mg.call_surface_from_function(mg.gaussian_call, F.t_nodes, np.linspace(-4, 4, 61)).grid
    W = ms.mu_bilinear_weights(F, TH, C)
    # sum_ij W_ij C_ij is the form evaluated on C
    assert np.sum(W * C.values) == pytest.approx(ms.mu_bilinear(F, C, TH), abs=1e-12)


# -- jump term ---------------------------------------------------------------------


def _jump_theta():
    t = np.linspace(0, 1, 5)
    x = np.linspace(-1, 5, 61)
    row = np.clip(np.minimum(x, 4 - x), 0, None)
    active = ((t >= 0.25) & (t < 0.75)).astype(float)
    return fs.CompactGridFunction(t, x, active[:, None] * row[None, :], support=(0.25, 0.75, 0, 4))


def test_jump_term_closed_form_example():
    TH = _jump_theta()
    F = fs.GridFunction.from_function(lambda t, x: np.maximum(x - 1, 0) + 0 * t, TH.t_nodes, TH.x_nodes)
    assert ms.jump_term(TH, F, 0.5, 0.0, 2.0) == pytest.approx(-1.0, abs=1e-14)
    # reversed orientation flips the sign of this particular integrand pair
    assert ms.jump_term(TH, F, 0.5, 2.0, 0.0) == pytest.approx(1.0, abs=1e-14)


def test_jump_term_trivial_cases():
    TH = _jump_theta()
    lin = fs.GridFunction.from_function(lambda t, x: 2 * x - 1 + t, TH.t_nodes, TH.x_nodes)
    kink = fs.GridFunction.from_function(lambda t, x: np.abs(x - 1.3), TH.t_nodes, TH.x_nodes)
    np.testing.assert_array_equal(ms.jump_term(TH, kink, [0.5, 0.6], [1.0, 2.5], [1.0, 2.5]), 0.0)
    np.testing.assert_allclose(ms.jump_term(TH, lin, [0.3, 0.5, 0.7], [0.1, 3.0, -1], [2.9, 0.2, 4.5]), 0.0,
                               atol=1e-13)


def _quad_jump(theta, f, t, a, b):
    """Oracle: adaptive quadrature of the defining integral with kinks as breakpoints."""
    fb = f(t, b)

    def integrand(x):
        return (f(t, x) - fb + (b - x) * f.dx(t, x, side="left", left=True)) * theta.dx(t, x, side="left", left=True)

    lo, hi = min(a, b), max(a, b)
    pts = np.union1d(f.x_nodes, theta.x_nodes)
    pts = pts[(pts > lo) & (pts < hi)]
    val = sum(integrate.quad(integrand, u, v)[0] for u, v in zip(np.r_[lo, pts], np.r_[pts, hi]))
    return val if b >= a else -val


@given(st.floats(0.26, 0.74), st.floats(-1.5, 5.5), st.floats(-1.5, 5.5), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_jump_term_against_quadrature(t, a, b, seed):
    rng = np.random.default_rng(seed)
    tn = np.linspace(0, 1, 9)
    xf = np.sort(np.r_[-1.0, 5.0, rng.uniform(-1, 5, 7)])
    F = fs.GridFunction(tn, xf, rng.normal(size=(tn.size, xf.size)))
    TH = _jump_theta()
    ours = float(ms.jump_term(TH, F, t, a, b))
    assert ours == pytest.approx(_quad_jump(TH, F, t, a, b), abs=1e-9)


@given(st.floats(0.26, 0.74), st.floats(-1, 5), st.floats(-1, 5), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_jump_term_lipschitz_bound(t, a, b, seed):
    rng = np.random.default_rng(seed)
    tn = np.linspace(0, 1, 9)
    F = fs.GridFunction(tn, np.linspace(-1, 5, 13), rng.normal(size=(9, 13)))
    TH = _jump_theta()
    Lf = np.max(np.abs(F.slopes))
    Lt = np.max(np.abs(TH.slopes))
    assert abs(ms.jump_term(TH, F, t, a, b)) <= 2 * Lf * Lt * (b - a) ** 2 / 2 + 1e-12


# -- drift measure --------------------------------------------------------------


@pytest.fixture(scope="module")
def dbm():
    m = pm.drifted_bm(1.0)
    return m, pm.simulate(m, pm.Partition.uniform(1.0, 64), 4000, seed=3)


def test_drift_measure_zero_for_martingale():
    m = pm.brownian_motion()
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 16), 100, seed=0)
    est = ms.drift_measure_X(ens, m, lambda t, x: np.ones_like(x))
    assert est.value == 0.0 and est.se == 0.0


def test_drift_measure_unit_drift(dbm):
    m, ens = dbm

    def theta(t, x):
        return fs.smooth_plateau(x, -10, 10, 1.0) * (t <= 1.0)

    est = ms.drift_measure_X(ens, m, theta)
    # paths stay inside [-9, 9] with overwhelming probability, where theta = 1
    assert np.max(np.abs(ens.paths)) < 9
    assert abs(est.value - 1.0) <= 3 * est.se + 1e-12


def test_drift_measure_linear(dbm):
    m, ens = dbm
    t = ens.times
    x = np.linspace(-3, 4, 29)
    th1 = theta_box(t, x, (0.1, 0.6), (-1, 1))
    th2 = theta_box(t, x, (0.3, 0.9), (0, 2))
    a = -2.5
    lhs = ms.drift_measure_X(ens, m, th1.scale(a) + th2).value
    rhs = a * ms.drift_measure_X(ens, m, th1).value + ms.drift_measure_X(ens, m, th2).value
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_drift_measure_rejects_foreign_ensemble(dbm):
    _, ens = dbm
    with pytest.raises(ValueError):
        ms.drift_measure_X(ens, pm.brownian_motion(), lambda t, x: x)


# -- mu_tilde ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def bm_setup():
    m = pm.brownian_motion()
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 32), 3000, seed=4)
    x = np.linspace(-3, 3, 61)
    C = mg.estimate_call_surface(ens, np.linspace(-5, 5, 81))
    F = fs.GridFunction.from_function(lambda t, x: np.exp(-(x**2)) * (1 + t), ens.times, x)
    TH = theta_box(ens.times, x, (0.25, 0.75), (-1, 1))
    return m, ens, C, F, TH


def test_mu_tilde_continuous_martingale_reduces_to_bilinear(bm_setup):
    m, ens, C, F, TH = bm_setup
    res = ms.mu_tilde(F, TH, C, ens, m)
    assert res.drift.value == 0.0 and res.jumps.value == 0.0
    assert res.value == pytest.approx(ms.mu_bilinear(F, C.raw_grid(), TH), abs=1e-12)


def test_mu_tilde_zero_function(bm_setup):
    m, ens, C, F, TH = bm_setup
    res = ms.mu_tilde(F.scale(0.0), TH, C, ens, m)
    assert res.value == 0.0


def test_per_path_samples_average_to_raw_form(bm_setup):
    m, ens, C, F, TH = bm_setup
    res = ms.mu_tilde(F, TH, C, ens, m)
    assert res.bilinear.samples.size == ens.n_paths
    assert res.bilinear.se > 0
    exact = ms.mu_tilde(F, TH, C.raw_grid(), ens, m)
    assert exact.bilinear.se == 0.0
    assert res.value == pytest.approx(exact.value, abs=1e-12)


def test_mu_tilde_requires_covering_surface(bm_setup):
    m, ens, _, F, TH = bm_setup
    narrow = mg.estimate_call_surface(ens, np.linspace(-0.5, 0.5, 5))
    with pytest.raises(ValueError):
        ms.mu_tilde(F, TH, narrow, ens, m)


def test_mu_tilde_jump_term_matches_jump_sum():
    m = pm.jump_diffusion(sigma=0.3, rate=2.0, size=0.5)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 32), 500, seed=6)
    x = np.linspace(-3, 4, 71)
    F = fs.GridFunction.from_function(lambda t, x: np.maximum(x - 0.5, 0) * (1 + t), ens.times, x)
    TH = theta_box(ens.times, x, (0.25, 0.75), (-1, 2))
    C = mg.estimate_call_surface(ens, np.linspace(-4, 6, 101))
    res = ms.mu_tilde(F, TH, C, ens, m)
    js = ms.jump_sum(TH, F, ens)
    assert res.jumps.value == pytest.approx(js.mean())
    assert np.all(ms.jump_sum(TH, F, ens, absolute=True) >= np.abs(js) - 1e-15)
    rec = ms.functional_record("mu_tilde", {"f": F, "theta": TH, "ensemble": ens}, res)
    assert set(rec["result"]) == {"total", "bilinear", "drift", "jumps"}


def test_mcestimate_paired_arithmetic():
    a = ms.MCEstimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]))
    b = ms.MCEstimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]) + 0.5)
    d = b - a
    assert d.value == pytest.approx(0.5) and d.se == 0.0
    e = a + ms.MCEstimate(1.0, 0.3)
    assert e.se == pytest.approx(np.hypot(a.se, 0.3))


# -- variation --------------------------------------------------------------------


def _unit(t, x):
    return np.ones(np.broadcast(t, x).shape)


def test_variation_of_zero_and_unit_box():
    te, xe = np.linspace(0, 1, 5), np.linspace(0, 1, 5)
    zero = ms.LocalSignedMeasure(te, xe, np.zeros((4, 4)))
    assert ms.variation(zero, _unit) == 0.0
    neg = ms.LocalSignedMeasure(te, xe, -np.ones((4, 4)))
    assert ms.variation(neg, _unit) == pytest.approx(1.0)
    assert neg.evaluate(_unit) == pytest.approx(-1.0)


def test_variation_dominates_random_modulations():
    rng = np.random.default_rng(0)
    te, xe = np.linspace(0, 1, 9), np.linspace(-1, 1, 11)
    mu = ms.LocalSignedMeasure(te, xe, rng.normal(size=(8, 10)), np.array([0.5]), rng.normal(size=(1, 11)))

    def theta(t, x):
        return fs.smooth_plateau(t, 0, 1, 0.2) * fs.smooth_plateau(x, -1, 1, 0.4)

    total = ms.variation(mu, theta)
    for _ in range(100):
        c = rng.uniform(-1, 1, 4)

        def g(t, x, c=c):
            return np.clip(c[0] * np.sin(7 * x + c[1]) + c[2] * np.cos(5 * t + c[3]), -1, 1)

        assert abs(mu.evaluate(lambda t, x: g(t, x) * theta(t, x))) <= total + 1e-12


def test_drift_density_histogram_matches_functional(dbm):
    m, ens = dbm
    te = ens.times[::8]
    xe = np.linspace(-4, 6, 41)
    mu = ms.drift_measure_density(ens, m, te, xe)
    # integral of 1 over the box equals the average drift accumulated inside the box
    inside = np.mean(np.sum(((ens.paths[:, :-1] >= -4) & (ens.paths[:, :-1] < 6)) * np.diff(ens.times), axis=1))
    assert mu.evaluate(_unit) == pytest.approx(inside, rel=1e-12)
    assert mu.variation(_unit) == pytest.approx(inside, rel=1e-12)
