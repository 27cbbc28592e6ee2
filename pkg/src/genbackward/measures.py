"""Measure-valued functionals evaluated on grid functions and path ensembles.

On the grid representation every time-Stieltjes integral is a finite sum over
the t-nodes, and every space integral is an exact sum over cells where the
integrand is a polynomial of low degree.  The functionals here are

* ``mu_bilinear(f, g, theta)``: the three-term bilinear form built from
  ``f_x g_x d_t theta``, ``theta_x^- f_x^- d_t g`` and ``g_x^- theta_x^- d_t f``,
  which reduces to ``int theta (f_t g_xx + g_t f_xx)`` for smooth inputs;
* ``jump_term``: the per-jump correction for discontinuous paths;
* ``drift_measure_X``: ``E[int theta(t, X_{t-}) dA_t]``;
* ``mu_tilde``: the sum of the three, the generalized backward-equation drift.

Monte Carlo quantities come back as :class:`MCEstimate` with per-path samples,
so differences between estimators on the same ensemble can use paired SEs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .function_space import CompactGridFunction, GridFunction, common_grid
from .io_utils import array_hash

__all__ = [
    "MCEstimate",
    "LocalSignedMeasure",
    "MuTilde",
    "mu_bilinear",
    "mu_bilinear_weights",
    "jump_term",
    "jump_sum",
    "drift_measure_X",
    "drift_measure_density",
    "inner_antiderivative",
    "mu_tilde",
    "variation",
    "smooth_density_quadrature",
    "functional_record",
]


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error and the per-path samples."""

    value: float
    se: float
    samples: np.ndarray | None = None

    @classmethod
    def from_samples(cls, samples) -> "MCEstimate":
        s = np.asarray(samples, dtype=float)
        n = s.size
        se = float(s.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(s)), se, s)

    @classmethod
    def exact(cls, value) -> "MCEstimate":
        return cls(float(value), 0.0, None)

    def __add__(self, other: "MCEstimate") -> "MCEstimate":
        if self.samples is not None and other.samples is not None:
            return MCEstimate.from_samples(self.samples + other.samples)
        return MCEstimate(self.value + other.value, float(np.hypot(self.se, other.se)))

    def __sub__(self, other: "MCEstimate") -> "MCEstimate":
        return self + MCEstimate(-other.value, other.se, None if other.samples is None else -other.samples)

    def as_dict(self):
        return {"value": self.value, "se": self.se}


# -- helpers ---------------------------------------------------------------


def _on_union(*fs):
    t, x = common_grid(*fs)
    return t, x, [f.resample(t, x) for f in fs]


def _cell_avg(v):
    return 0.5 * (v[..., 1:] + v[..., :-1])


# -- bilinear functional -------------------------------------------------------


def _cross(th_slope, a_slope, b_vals, h):
    """``- sum_i int theta_x^-(s_i) a_x^-(s_i) (b(s_i) - b(s_{i-1})) dx``."""
    left = (th_slope[:-1] * a_slope[:-1]) * h
    return -np.sum(left * _cell_avg(np.diff(b_vals, axis=0)))


def mu_bilinear(f: GridFunction, g: GridFunction, theta: GridFunction, terms=False):
    """The bilinear functional of ``f`` and ``g`` tested against ``theta``.

    All three inputs are resampled onto the union grid, where

    * term 1 sums ``f_x g_x`` (current rows) against the t-increments of ``theta``,
    * term 2 is ``-int theta_x^- f_x^- d_t g``,
    * term 3 is ``-int g_x^- theta_x^- d_t f``,

    each exactly (products of cell slopes times the cell mean of a linear
    increment).  The result is symmetric in ``f`` and ``g`` bit for bit.
    With ``terms=True`` a dict with the three addends is returned as well.
    """
    t, x, (F, G, TH) = _on_union(f, g, theta)
    h = np.diff(x)
    fs, gs, ts = F.slopes, G.slopes, TH.slopes
    t1 = np.sum(((fs[1:] * gs[1:]) * h) * _cell_avg(np.diff(TH.values, axis=0)))
    t2 = _cross(ts, fs, G.values, h)
    t3 = _cross(ts, gs, F.values, h)
    total = float(t1 + (t2 + t3))
    if terms:
        return total, {"term1": float(t1), "term2": float(t2), "term3": float(t3)}
    return total


def mu_bilinear_weights(f: GridFunction, theta: GridFunction, C: GridFunction):
    """Node weights ``W`` with ``mu_bilinear(f, C, theta) = sum W * C.values``.

    The functional is linear in the node values of ``C``; the weights let it
    be evaluated on per-path surfaces ``(X_t - x)_+`` without building them.
    """
    t, x = common_grid(f, theta, C)
    F, TH = f.resample(t, x), theta.resample(t, x)
    h = np.diff(x)
    fs, ts = F.slopes, TH.slopes
    n_t, n_x = t.size, x.size
    # derivative of the union-grid functional with respect to union node values U of C
    W = np.zeros((n_t, n_x))

    def add_slope_weights(rows, coef):
        # sum_c coef[r, c] * (U[r, c+1] - U[r, c]) / h_c
        q = coef / h
        W[rows, 1:] += q
        W[rows, :-1] -= q

    # term 1: sum_{i>=1} fs_i * gs_i * h * avg(dTheta_i)
    add_slope_weights(slice(1, None), fs[1:] * h * _cell_avg(np.diff(TH.values, axis=0)))
    # term 2: -sum_{i>=1} ts_{i-1} fs_{i-1} h avg(U_i - U_{i-1})
    c2 = -(ts[:-1] * fs[:-1]) * h * 0.5
    for sgn, rows in ((1.0, slice(1, None)), (-1.0, slice(None, -1))):
        W[rows, 1:] += sgn * c2
        W[rows, :-1] += sgn * c2
    # term 3: -sum_{i>=1} gs_{i-1} ts_{i-1} h avg(dF_i)
    add_slope_weights(slice(None, -1), -ts[:-1] * h * _cell_avg(np.diff(F.values, axis=0)))
    # pull back from the union grid to C's own nodes (resampling is linear)
    rows = C.row_index(t)
    interp = np.empty((n_x, C.x_nodes.size))
    eye = np.eye(C.x_nodes.size)
    for j in range(C.x_nodes.size):
        interp[:, j] = np.interp(x, C.x_nodes, eye[j])
    WC = np.zeros(C.values.shape)
    np.add.at(WC, rows, W @ interp)
    return WC


def smooth_density_quadrature(f_t, f_xx, g_t, g_xx, theta, t_range, x_range, n_t=400, n_x=400):
    """``int int theta (f_t g_xx + g_t f_xx) dt dx`` by tensor Gauss-Legendre quadrature."""
    from numpy.polynomial.legendre import leggauss

    def nodes(lo, hi, n):
        z, w = leggauss(8)
        edges = np.linspace(lo, hi, n // 8 + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        return (mid[:, None] + half[:, None] * z).ravel(), (half[:, None] * w).ravel()

    tq, wt = nodes(*t_range, n_t)
    xq, wx = nodes(*x_range, n_x)
    T, X = np.meshgrid(tq, xq, indexing="ij")
    dens = theta(T, X) * (f_t(T, X) * g_xx(T, X) + g_t(T, X) * f_xx(T, X))
    return float(wt @ dens @ wx)


# -- jump functional -------------------------------------------------------------


def _jump_antiderivatives(fr, fq_slope, thq_slope, x):
    """Cumulative node values of the four integrals that make up a jump term."""
    h = np.diff(x)
    u, v, s_r = thq_slope, fq_slope, np.diff(fr) / h
    g1 = u * (fr[:-1] * h + 0.5 * s_r * h**2)
    g3 = v * u * 0.5 * (x[1:] ** 2 - x[:-1] ** 2)
    g4 = v * u * h
    z = np.zeros(1)
    return [np.concatenate([z, np.cumsum(g)]) for g in (g1, g3, g4)]


def _eval_antiderivs(y, fr, fq_slope, thq_slope, x, cum):
    """G1, G2, G3, G4 at the points ``y`` (clipped to the node range)."""
    y = np.clip(y, x[0], x[-1])
    c = np.clip(np.searchsorted(x, y, side="right") - 1, 0, x.size - 2)
    d = y - x[c]
    u, v = thq_slope[c], fq_slope[c]
    s_r = (fr[c + 1] - fr[c]) / (x[c + 1] - x[c])
    g1 = cum[0][c] + u * (fr[c] * d + 0.5 * s_r * d**2)
    g2 = cum[3][c] + u * d
    g3 = cum[1][c] + v * u * 0.5 * (y**2 - x[c] ** 2)
    g4 = cum[2][c] + v * u * d
    return g1, g2, g3, g4


def jump_term(theta: GridFunction, f: GridFunction, t, x_pre, x_post):
    """Jump functional for jumps ``x_pre -> x_post`` at times ``t`` (vectorized).

    ``int_{x_pre}^{x_post} (f(t, x) - f(t, x_post) + (x_post - x) f_x^-(t, x)) theta_x^-(t, x) dx``
    with orientation sign, computed exactly: on every cell of the union grid the
    integrand is linear in ``x``.  Jumps are grouped by the pair of grid rows
    active at and just before ``t``.
    """
    t, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x_pre, x_post)))
    out = np.zeros(t.shape)
    if t.size == 0:
        return out
    tn, x, (F, TH) = _on_union(f, theta)
    r = F.row_index(t)
    q = F.row_index(t, left=True)
    fsl, tsl = F.slopes, TH.slopes
    flat_r, flat_q = r.ravel(), q.ravel()
    fa, fb = a.ravel(), b.ravel()
    res = out.ravel()
    for key in np.unique(flat_r * tn.size + flat_q):
        rr, qq = divmod(int(key), tn.size)
        sel = (flat_r == rr) & (flat_q == qq)
        fr = F.values[rr]
        cum = _jump_antiderivatives(fr, fsl[qq], tsl[qq], x)
        cum.append(TH.values[qq] - TH.values[qq][0])
        lo = _eval_antiderivs(fa[sel], fr, fsl[qq], tsl[qq], x, cum)
        hi = _eval_antiderivs(fb[sel], fr, fsl[qq], tsl[qq], x, cum)
        d1, d2, d3, d4 = (p - m for p, m in zip(hi, lo))
        f_post = np.interp(fb[sel], x, fr)
        res[sel] = d1 - f_post * d2 + fb[sel] * d4 - d3
    return out


def jump_sum(theta, f, ensemble, absolute=False):
    """Per-path sums of jump terms over the recorded jumps of ``ensemble``."""
    j = ensemble.jumps
    vals = jump_term(theta, f, j.time, j.pre, j.post)
    if absolute:
        vals = np.abs(vals)
    return np.bincount(j.path, weights=vals, minlength=ensemble.n_paths)


# -- drift measure ---------------------------------------------------------------


def _eval_theta(theta, t, x):
    return theta(np.full(np.shape(x), t), x)


def drift_measure_X(ensemble, model, theta) -> MCEstimate:
    """``E[int theta(t, X_{t-}) dA_t]`` with ``dA = b dt`` by left-point sums.

    ``theta`` is a grid function or any vectorized callable ``theta(t, x)``.
    """
    if ensemble.model_tag != model.tag:
        raise ValueError(f"ensemble was simulated from {ensemble.model_tag!r}, not {model.tag!r}")
    t = ensemble.times
    acc = np.zeros(ensemble.n_paths)
    for k in range(t.size - 1):
        xk = ensemble.paths[:, k]
        acc += _eval_theta(theta, t[k], xk) * model.b(t[k], xk) * (t[k + 1] - t[k])
    return MCEstimate.from_samples(acc)


def inner_antiderivative(theta: GridFunction, f: GridFunction) -> GridFunction:
    """``Psi(t, x) = int_{-inf}^x theta_x(t, y) f_x(t, y) dy`` as a grid function.

    The drift term uses the left limit ``Phi = Psi^-``, i.e. ``Psi(t, x, left=True)``;
    on a step ``(t_k, t_{k+1}]`` whose ends are grid nodes that is the row active
    at ``t_k``.  Exact: the integrand is constant on cells of the union grid, so
    ``Psi`` is piecewise linear with the same nodes (flat beyond them).
    """
    t, x, (F, TH) = _on_union(f, theta)
    prod = TH.slopes * F.slopes
    vals = np.concatenate([np.zeros((t.size, 1)), np.cumsum(prod * np.diff(x), axis=1)], axis=1)
    lip = float(np.max(np.abs(prod), initial=0.0))
    return GridFunction(t, x, vals, lipschitz_x=lip)


@dataclass(frozen=True)
class LocalSignedMeasure:
    """Cellwise-constant density on a (t, x) box plus atoms in time.

    ``density[i, c]`` is the mass per unit area on ``[t_i, t_{i+1}) x [x_c, x_{c+1})``.
    ``atom_times[a]`` carry a piecewise-linear x-density ``atom_profiles[a]`` on
    ``x_edges``.  Test functions are integrated by an ``n_sub``-point midpoint rule
    per cell direction.
    """

    t_edges: np.ndarray
    x_edges: np.ndarray
    density: np.ndarray
    atom_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_profiles: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    n_sub: int = 4

    @property
    def support_box(self):
        return (self.t_edges[0], self.t_edges[-1], self.x_edges[0], self.x_edges[-1])

    def _cell_means(self, fn):
        k = self.n_sub
        u = (np.arange(k) + 0.5) / k
        te, xe = self.t_edges, self.x_edges
        tq = (te[:-1, None] + np.diff(te)[:, None] * u).ravel()
        xq = (xe[:-1, None] + np.diff(xe)[:, None] * u).ravel()
        vals = fn(tq[:, None], xq[None, :])
        vals = np.broadcast_to(vals, (tq.size, xq.size))
        return vals.reshape(te.size - 1, k, xe.size - 1, k).mean(axis=(1, 3))

    def _atom_integral(self, fn, absolute):
        if self.atom_times.size == 0:
            return 0.0
        xe = self.x_edges
        xm = 0.5 * (xe[1:] + xe[:-1])
        total = 0.0
        for ta, prof in zip(self.atom_times, self.atom_profiles):
            p = np.abs(prof) if absolute else prof
            vals = fn(np.full(xm.shape, ta), xm)
            total += float(np.sum(vals * 0.5 * (p[1:] + p[:-1]) * np.diff(xe)))
        return total

    def evaluate(self, theta) -> float:
        area = np.outer(np.diff(self.t_edges), np.diff(self.x_edges))
        return float(np.sum(self._cell_means(theta) * self.density * area)) + self._atom_integral(theta, False)

    def variation(self, theta) -> float:
        area = np.outer(np.diff(self.t_edges), np.diff(self.x_edges))
        dens = np.sum(self._cell_means(theta) * np.abs(self.density) * area)
        return float(dens) + self._atom_integral(theta, True)


def variation(mu: LocalSignedMeasure, theta) -> float:
    """Total variation ``|mu|(theta)`` for a nonnegative test function."""
    return mu.variation(theta)


def drift_measure_density(ensemble, model, t_edges, x_edges, weight=None) -> LocalSignedMeasure:
    """Histogram estimate of the drift measure ``p_t(x) b(t, x) dt dx``.

    Each left-point drift increment ``b(t_k, X_{t_k}) dt`` is binned at
    ``(t_k, X_{t_k})``; an optional ``weight(t, x)`` multiplies the increments
    (giving the drift measure of ``int weight dA``).
    """
    t = ensemble.times
    te, xe = np.asarray(t_edges, float), np.asarray(x_edges, float)
    mass = np.zeros((te.size - 1, xe.size - 1))
    for k in range(t.size - 1):
        xk = ensemble.paths[:, k]
        inc = model.b(t[k], xk) * (t[k + 1] - t[k])
        if weight is not None:
            inc = inc * weight(np.full(xk.shape, t[k]), xk)
        i = np.searchsorted(te, t[k], side="right") - 1
        if i < 0 or i >= te.size - 1:
            continue
        c = np.searchsorted(xe, xk, side="right") - 1
        ok = (c >= 0) & (c < xe.size - 1)
        np.add.at(mass[i], c[ok], inc[ok])
    area = np.outer(np.diff(te), np.diff(xe))
    return LocalSignedMeasure(te, xe, mass / ensemble.n_paths / area)


# -- generalized drift functional -------------------------------------------------


@dataclass(frozen=True)
class MuTilde:
    """Value of the generalized drift functional and its three addends."""

    total: MCEstimate
    bilinear: MCEstimate
    drift: MCEstimate
    jumps: MCEstimate

    @property
    def value(self):
        return self.total.value

    @property
    def se(self):
        return self.total.se

    def as_dict(self):
        return {k: getattr(self, k).as_dict() for k in ("total", "bilinear", "drift", "jumps")}


def _per_path_bilinear(W, C_t_nodes, C_x_nodes, ensemble):
    """``sum_i sum_j W[i, j] (X_{t_i} - x_j)_+`` for every path."""
    idx = ensemble.partition.nearest_index(C_t_nodes)
    off = np.abs(ensemble.times[idx] - C_t_nodes)
    if np.any(off > 1e-9 * max(1.0, ensemble.times[-1])):
        raise ValueError("call-surface times must be partition nodes")
    x = C_x_nodes
    out = np.zeros(ensemble.n_paths)
    for i, k in enumerate(idx):
        w = W[i]
        if not np.any(w):
            continue
        cw = np.concatenate([[0.0], np.cumsum(w)])
        cwx = np.concatenate([[0.0], np.cumsum(w * x)])
        X = ensemble.paths[:, k]
        pos = np.searchsorted(x, X, side="left")  # nodes strictly below X
        out += X * cw[pos] - cwx[pos]
    return out


def mu_tilde(f: GridFunction, theta: CompactGridFunction, C, ensemble, model, per_path=True) -> MuTilde:
    """Generalized drift functional of ``f`` tested against ``theta``.

    Sum of ``mu_bilinear(f, C, theta)``, the drift term ``int Phi dmu_X`` with
    ``Phi`` from :func:`inner_antiderivative`, and the expected sum of jump
    terms.  ``C`` is a :class:`~genbackward.marginals.CallSurface` or grid
    function.  For Monte Carlo surfaces with ``per_path`` the bilinear term is
    evaluated on each path's own surface ``(X_t - x)_+`` (its mean is exactly
    the bilinear form of the raw estimate), giving per-path samples of the
    whole functional.
    """
    mc_surface = getattr(C, "raw", None) is not None
    Cg = C.raw_grid() if hasattr(C, "raw_grid") else C
    t_a, t_b, x_a, x_b = theta.support
    if x_a < Cg.x_nodes[0] or x_b > Cg.x_nodes[-1]:
        raise ValueError("call-surface x-range must cover the support of theta")
    if mc_surface and per_path:
        W = mu_bilinear_weights(f, theta, Cg)
        bil = MCEstimate.from_samples(_per_path_bilinear(W, Cg.t_nodes, Cg.x_nodes, ensemble))
    else:
        val = mu_bilinear(f, Cg, theta)
        bil = MCEstimate(val, 0.0, np.full(ensemble.n_paths, val))
    phi = inner_antiderivative(theta, f)
    drift = _drift_of_phi(phi, ensemble, model)
    if len(ensemble.jumps):
        jumps = MCEstimate.from_samples(jump_sum(theta, f, ensemble))
    else:
        jumps = MCEstimate(0.0, 0.0, np.zeros(ensemble.n_paths))
    total = bil + drift + jumps
    return MuTilde(total, bil, drift, jumps)


def _drift_of_phi(phi, ensemble, model):
    """Left-point sums of ``Psi(t_k, X_{t_k}) b dt``, i.e. ``Psi^-`` on each step."""
    if ensemble.model_tag != model.tag:
        raise ValueError(f"ensemble was simulated from {ensemble.model_tag!r}, not {model.tag!r}")
    t = ensemble.times
    acc = np.zeros(ensemble.n_paths)
    for k in range(t.size - 1):
        xk = ensemble.paths[:, k]
        b = model.b(t[k], xk)
        if not np.any(b):
            continue
        # on (t_k, t_{k+1}] the left limit is the row active at t_k
        acc += phi(np.full(xk.shape, t[k]), xk) * b * (t[k + 1] - t[k])
    return MCEstimate.from_samples(acc)


def functional_record(name, inputs, result, grids=None) -> dict:
    """JSON-ready record of one functional evaluation."""
    rec = {"functional": name, "inputs": {}, "grids": grids or {}}
    for key, obj in inputs.items():
        if isinstance(obj, GridFunction):
            rec["inputs"][key] = array_hash(obj.t_nodes, obj.x_nodes, obj.values)
        elif hasattr(obj, "paths"):
            rec["inputs"][key] = array_hash(obj.times, obj.paths)
        elif hasattr(obj, "grid"):
            rec["inputs"][key] = array_hash(obj.grid.t_nodes, obj.grid.x_nodes, obj.grid.values)
        else:
            rec["inputs"][key] = str(obj)
    if isinstance(result, MuTilde):
        rec["result"] = result.as_dict()
    elif isinstance(result, MCEstimate):
        rec["result"] = result.as_dict()
    else:
        rec["result"] = {"value": float(result)}
    return rec
