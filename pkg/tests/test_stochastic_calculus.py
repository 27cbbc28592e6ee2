"""Quadratic variation, Ito drift, Dirichlet QV and conditional variations."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genbackward import function_space as fs
from genbackward import marginals as mg
from genbackward import measures as ms
from genbackward import process_models as pm
from genbackward import stochastic_calculus as sc

# -- quadratic variation -----------------------------------------------------------


def test_qv_of_smooth_deterministic_path():
    part = pm.Partition.uniform(2.0, 50)
    qv = sc.qv_partition(part.times, partition=part)
    assert qv.terminal[0] == pytest.approx(2.0 * part.mesh, rel=1e-12)


def test_qv_single_jump():
    times = np.linspace(0, 1, 11)
    x = np.where(times >= 0.45, 2.0, 0.0)
    qv = sc.qv_partition(x, times=times, jumps=([0], [0.45], [2.0], [2.0]))
    assert qv.terminal[0] == 4.0
    assert qv.continuous[0, -1] == 0.0
    # the jump sits inside (0.4, 0.5]: nothing before, all of it after
    assert qv.values[0, 4] == 0.0 and qv.values[0, 5] == 4.0
    np.testing.assert_array_equal(qv.ledger, qv.values)


def test_qv_brownian_mean_and_monotone():
    ens = pm.simulate(pm.brownian_motion(), pm.Partition.uniform(1.0, 64), 5000, seed=2)
    qv = sc.ensemble_qv(ens)
    assert np.all(np.diff(qv.values, axis=1) >= 0)
    est = ms.MCEstimate.from_samples(qv.terminal)
    assert abs(est.value - 1.0) <= 3 * est.se


def test_qv_ledger_on_jump_diffusion():
    m = pm.jump_diffusion(sigma=0.5, rate=2.0, size=0.7)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 256), 2000, seed=5)
    qv = sc.ensemble_qv(ens)
    counts = ens.jump_counts()
    np.testing.assert_allclose(qv.ledger[:, -1], 0.49 * counts)
    # the continuous part estimates sigma^2 T, up to cross terms of order sqrt(mesh)
    cont = ms.MCEstimate.from_samples(qv.continuous[:, -1])
    assert abs(cont.value - 0.25) <= 3 * cont.se + 0.01


@given(st.integers(0, 1000), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_qv_polarization_and_bilinearity(seed, a):
    rng = np.random.default_rng(seed)
    x = np.cumsum(rng.normal(size=(3, 40)), axis=1)
    y = np.cumsum(rng.normal(size=(3, 40)), axis=1)
    xy = sc.qv_partition(x, y).values
    pol = (sc.qv_partition(x + y).values - sc.qv_partition(x).values - sc.qv_partition(y).values) / 2
    np.testing.assert_allclose(xy, pol, rtol=1e-12, atol=1e-10)
    lin = sc.qv_partition(a * x + y, y).values
    np.testing.assert_allclose(lin, a * xy + sc.qv_partition(y).values, rtol=1e-12, atol=1e-10)


def test_qv_variance_shrinks_with_mesh():
    ens = pm.simulate(pm.brownian_motion(), pm.Partition.uniform(1.0, 256), 4000, seed=9)
    var = [sc.ensemble_qv(ens, stride=s).terminal.var(ddof=1) for s in (8, 4, 2, 1)]
    assert all(b < a for a, b in zip(var, var[1:]))
    # fourth-moment identity: Var [W]^P_1 = 2 * mesh
    assert var[-1] == pytest.approx(2 / 256, rel=0.1)


def test_qv_rejects_foreign_partition():
    with pytest.raises(ValueError):
        sc.qv_partition(np.zeros(5), partition=[0.0, 0.33], times=np.linspace(0, 1, 5))


# -- Ito drift ---------------------------------------------------------------------

IDENT = sc.C2Function(lambda t, x: x, lambda t, x: 0 * x, lambda t, x: 1 + 0 * x, lambda t, x: 0 * x, "x")
SQUARE = sc.C2Function(lambda t, x: x**2, lambda t, x: 0 * x, lambda t, x: 2 * x, lambda t, x: 2 + 0 * x, "x^2")


def _bump(a=2.0, c=0.3):
    def u(x):
        return np.clip((x - c) / a, -1, 1)

    return sc.C2Function(
        lambda t, x: (1 + t) * (1 - u(x) ** 2) ** 4,
        lambda t, x: (1 - u(x) ** 2) ** 4 + 0 * t,
        lambda t, x: (1 + t) * -8 * u(x) * (1 - u(x) ** 2) ** 3 / a,
        lambda t, x: (1 + t) * (48 * u(x) ** 2 * (1 - u(x) ** 2) ** 2 - 8 * (1 - u(x) ** 2) ** 3) / a**2,
        "bump",
    )


def test_ito_drift_identity_martingale():
    m = pm.jump_diffusion(sigma=1.0, rate=1.0, size=0.5, b=0.0)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 16), 200, seed=1)
    dec = sc.ito_drift(IDENT, ens, m)
    np.testing.assert_array_equal(dec.A, 0.0)
    assert dec.functional(lambda t, x: np.ones_like(x)).value == 0.0
    np.testing.assert_allclose(dec.M + dec.A + dec.Y[:, :1], dec.Y, atol=1e-13)


def test_ito_drift_identity_unit_drift():
    m = pm.drifted_bm(1.0)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 32), 300, seed=1)
    dec = sc.ito_drift(IDENT, ens, m)
    np.testing.assert_allclose(dec.A, np.broadcast_to(ens.times, dec.A.shape), atol=1e-14)
    x = np.linspace(-3, 5, 33)
    th = fs.plateau_bump(ens.times, x, (0.2, 0.7), (-1, 2))
    assert dec.functional(th).value == pytest.approx(ms.drift_measure_X(ens, m, th).value, abs=1e-14)


def test_ito_drift_martingale_part_has_zero_mean_increments():
    m = pm.jump_diffusion(sigma=0.8, rate=1.5, size=0.4, b=0.3)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 64), 20_000, seed=3)
    dec = sc.ito_drift(SQUARE, ens, m)
    M = dec.M
    for k0, k1 in [(0, 16), (16, 32), (32, 48), (48, 64)]:
        inc = ms.MCEstimate.from_samples(M[:, k1] - M[:, k0])
        assert abs(inc.value) <= 3 * inc.se
    assert np.all(np.isfinite(dec.variation()))


def test_ito_drift_rejects_nonfinite_derivative():
    bad = sc.C2Function(lambda t, x: x, lambda t, x: 0 * x, lambda t, x: np.nan * x, lambda t, x: 0 * x)
    m = pm.drifted_bm(1.0)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 4), 3, seed=0)
    with pytest.raises(sc.DerivativeError) as err:
        sc.ito_drift(bad, ens, m)
    assert err.value.t == 0.0


def test_ito_drift_matches_mu_tilde_under_bm():
    # continuous martingale: the generalized drift is the bilinear form on the MC call surface
    m = pm.brownian_motion()
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 64), 20_000, seed=12)
    f = _bump()
    x = np.linspace(-4, 5, 91)
    F = fs.GridFunction.from_function(f.f, ens.times, x)
    TH = fs.plateau_bump(ens.times, x, (0.2, 0.8), (-1.0, 1.5))
    C = mg.estimate_call_surface(ens, np.linspace(-6, 7, 181), project=False)
    diff = ms.mu_tilde(F, TH, C, ens, m).total - sc.ito_drift(f, ens, m).functional(TH)
    assert abs(diff.value) <= 3 * diff.se


# -- Dirichlet quadratic variation ----------------------------------------------------


def test_dirichlet_identity_function_exact():
    ens = pm.simulate(pm.brownian_motion(), pm.Partition.uniform(1.0, 64), 50, seed=0)
    f = fs.GridFunction.from_function(lambda t, x: x + 0 * t, ens.times, np.linspace(-8, 8, 5))
    rep = sc.dirichlet_qv_check(f, ens, strides=(1,))
    assert rep["meshes"][0]["rel_error"] < 1e-13


def test_dirichlet_deterministic_path():
    m = pm.pure_drift(1.0)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 128), 2, seed=0)
    f = fs.GridFunction.from_function(lambda t, x: np.sin(3 * x) + 0 * t, ens.times, np.linspace(-1, 2, 301))
    rep = sc.dirichlet_qv_check(f, ens, strides=(4, 2, 1), model=m)
    assert rep["rhs"]["value"] == 0.0
    for row in rep["meshes"]:
        assert row["lhs"]["value"] <= 1.0 * row["mesh"] * 3.0**2 + 1e-15


def test_dirichlet_abs_under_bm():
    m = pm.brownian_motion()
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 4096), 200, seed=4)
    f = fs.GridFunction.from_function(lambda t, x: np.abs(x) + 0 * t, ens.times, np.linspace(-6, 6, 13))
    rep = sc.dirichlet_qv_check(f, ens, strides=(8, 4, 2, 1), model=m)
    assert rep["rhs"]["value"] == pytest.approx(1.0, abs=1e-12)
    assert rep["monotone"]
    assert rep["meshes"][-1]["rel_error"] < 0.05


# -- conditional variations -----------------------------------------------------------


def test_equal_mass_bins_with_ties():
    z = np.r_[np.zeros(500), np.linspace(1, 2, 500)]
    labels, merged = sc.equal_mass_bins(z, 10)
    # all tied values share one bin
    assert np.unique(labels[:500]).size == 1
    assert np.unique(labels).size >= 5
    assert merged >= 0
    labels, _ = sc.equal_mass_bins(np.full(100, 3.0), 8)
    assert np.unique(labels).size == 1


@pytest.fixture(scope="module")
def unit_drift_ens():
    m = pm.drifted_bm(1.0)
    return m, pm.simulate(m, pm.Partition.uniform(1.0, 32), 40_000, seed=13)


def test_conditional_variation_unit_drift(unit_drift_ens):
    _, ens = unit_drift_ens
    v = sc.conditional_variation(ens)
    assert 1.0 - 3 * v.se[-1] <= v.value <= 1.0 + v.bias_bound[-1] + 3 * v.se[-1]
    assert np.all(np.diff(v.curve) >= 0)
    assert v.at(0.5) <= v.at(1.0)


def test_conditional_variation_martingale_below_bias_bound():
    m = pm.brownian_motion()
    small = sc.conditional_variation(pm.simulate(m, pm.Partition.uniform(1.0, 32), 5_000, seed=1))
    big = sc.conditional_variation(pm.simulate(m, pm.Partition.uniform(1.0, 32), 40_000, seed=1))
    assert small.value <= small.bias_bound[-1]
    assert big.value <= big.bias_bound[-1]
    assert big.value < small.value


def test_reversed_variation_trivial_cases(unit_drift_ens):
    m, ens = unit_drift_ens
    zero = sc.reversed_conditional_variation(ens, np.zeros_like(ens.paths))
    assert zero.value == 0.0
    lin = sc.reversed_conditional_variation(ens, pm.drift_path(m, ens))
    assert lin.value == pytest.approx(1.0, rel=1e-12)


def test_reversed_variation_below_drift_variation():
    m = pm.ornstein_uhlenbeck(kappa=1.0, x0=0.5)
    ens = pm.simulate(m, pm.Partition.uniform(1.0, 32), 40_000, seed=17)

    def theta(t, x):
        return fs.smooth_plateau(t, 0.1, 0.9, 0.2) * fs.smooth_plateau(x, -1.5, 1.5, 0.5)

    t = ens.times
    B = np.zeros_like(ens.paths)
    for k in range(t.size - 1):
        xk = ens.paths[:, k]
        B[:, k + 1] = B[:, k] + theta(t[k], xk) * m.b(t[k], xk) * (t[k + 1] - t[k])
    v = sc.reversed_conditional_variation(ens, B)
    # zero is a cell edge so no cell mixes the sign of b = -x
    mu = ms.drift_measure_density(ens, m, t, np.linspace(-5, 5, 81))
    bound = mu.variation(theta)
    assert v.value <= bound + 3 * v.se[-1]
    assert v.value > 0.5 * bound
