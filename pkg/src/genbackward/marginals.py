"""Call surfaces ``C(t, x) = E[(X_t - x)_+]``, densities, local volatility and
conditional-expectation surfaces.

``C`` encodes the one-dimensional marginals of ``X``: it is convex in ``x`` with
slopes in ``[-1, 0]``, its second derivative is the density of ``X_t``, and for a
martingale it is nondecreasing in ``t``.  For a driftless diffusion it solves
the forward equation ``C_t = 1/2 sigma^2 C_xx`` which, read backwards, gives the
local volatility ``sigma^2 = 2 C_t / C_xx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.optimize import isotonic_regression

from .function_space import GridFunction

__all__ = [
    "CallSurface",
    "DensitySlice",
    "PDEError",
    "ShapeViolation",
    "estimate_call_surface",
    "call_surface_forward_pde",
    "call_surface_from_function",
    "project_convex",
    "dupire_sigma",
    "dupire_surface",
    "density",
    "conditional_expectation_surface",
    "shape_report",
    "gaussian_call",
    "gaussian_conditional_call",
    "gaussian_density",
]


class PDEError(RuntimeError):
    """Finite-difference solve failed; the message suggests a refinement."""


class ShapeViolation(RuntimeError):
    """A surface breaks convexity or monotonicity beyond tolerance."""


# -- closed forms ----------------------------------------------------------


def gaussian_call(t, x, x0=0.0, sigma=1.0):
    """``E[(x0 + sigma W_t - x)_+]``."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    s = sigma * np.sqrt(t)
    intrinsic = np.maximum(x0 - x, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (x0 - x) / s
        val = s * stats.norm.pdf(d) + (x0 - x) * stats.norm.cdf(d)
    return np.where(s > 0, val, intrinsic)


def gaussian_conditional_call(t, x, strike, horizon, sigma=1.0):
    """``E[(X_T - K)_+ | X_t = x]`` for ``X`` a Brownian motion with volatility ``sigma``."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    return gaussian_call(np.maximum(horizon - t, 0.0), strike, x0=x, sigma=sigma)


def gaussian_density(t, x, x0=0.0, sigma=1.0):
    return stats.norm.pdf(x, loc=x0, scale=sigma * np.sqrt(t))


# -- surfaces ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CallSurface:
    """A call surface on a grid together with its diagnostics.

    Attributes
    ----------
    grid : GridFunction
        ``C`` at the nodes (projected when built from samples).
    mean_curve : ndarray
        ``E[X_t]`` per t-node.
    adjusted_variation : ndarray or None
        Estimate or bound of the conditional variation per t-node; zero for
        martingales.
    se : ndarray or None
        Nodewise standard errors of the raw Monte Carlo estimate.
    raw : ndarray or None
        Unprojected Monte Carlo values.
    """

    grid: GridFunction
    mean_curve: np.ndarray
    adjusted_variation: np.ndarray | None = None
    se: np.ndarray | None = None
    raw: np.ndarray | None = None
    source: str = "unknown"
    projection_distance: float = 0.0
    snap_offsets: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t_nodes(self):
        return self.grid.t_nodes

    @property
    def x_nodes(self):
        return self.grid.x_nodes

    @property
    def values(self):
        return self.grid.values

    def raw_grid(self) -> GridFunction:
        """The unprojected estimate as a grid function (the projected one if none)."""
        if self.raw is None:
            return self.grid
        return GridFunction(self.t_nodes, self.x_nodes, self.raw, lipschitz_x=1.0 + 1e-9)

    def __call__(self, t, x, left=False):
        return self.grid(t, x, left=left)

    def convexity_defect(self) -> float:
        """Largest decrease of consecutive x-slopes (0 for convex rows)."""
        s = self.grid.slopes
        return float(max(0.0, -np.min(np.diff(s, axis=1), initial=0.0)))

    def slope_excess(self) -> float:
        s = self.grid.slopes
        return float(max(0.0, np.max(s, initial=-1.0), -1.0 - np.min(s, initial=0.0)))

    def monotonicity_defect(self) -> np.ndarray:
        """Per-node decrease of ``C + Var_X`` between consecutive t-nodes (0 when monotone)."""
        v = self.values
        if self.adjusted_variation is not None:
            v = v + np.asarray(self.adjusted_variation)[:, None]
        return np.maximum(0.0, -np.diff(v, axis=0))

    def to_csv(self, path=None):
        return self.grid.to_csv(path)


def call_surface_from_function(fn, t_nodes, x_nodes, mean_curve=None, source="closed_form") -> CallSurface:
    """Sample a closed-form ``C(t, x)`` on a grid."""
    g = GridFunction.from_function(fn, t_nodes, x_nodes, lipschitz_x=1.0)
    mc = np.zeros(len(t_nodes)) if mean_curve is None else np.asarray(mean_curve, dtype=float)
    return CallSurface(g, mc, np.zeros(len(t_nodes)), source=source)


def project_convex(x_nodes, values, weights=None):
    """L2-nearest row with nondecreasing slopes clamped to ``[-1, 0]``.

    Pool-adjacent-violators on the slopes (weighted by cell width), clamping,
    then the constant offset that best matches ``values``.  Rows already
    satisfying the constraints are returned unchanged.
    """
    x = np.asarray(x_nodes, dtype=float)
    v = np.asarray(values, dtype=float)
    h = np.diff(x)
    s = np.diff(v) / h
    if np.all(np.diff(s) >= 0) and s[0] >= -1.0 and s[-1] <= 0.0:
        return v.copy()
    s_iso = isotonic_regression(s, weights=h, increasing=True).x
    s_iso = np.clip(s_iso, -1.0, 0.0)
    shape = np.concatenate([[0.0], np.cumsum(s_iso * h)])
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    offset = np.sum(w * (v - shape)) / np.sum(w)
    return shape + offset


def estimate_call_surface(ensemble, x_nodes, t_nodes=None, project=True) -> CallSurface:
    """Monte Carlo call surface from an ensemble.

    Requested times are snapped to the nearest partition node (offsets are
    reported).  Nodewise means and standard errors come from sorted cumulative
    sums, so the cost is ``O(n log n)`` per time.
    """
    if ensemble.n_paths < 1:
        raise ValueError("empty ensemble")
    x = np.asarray(x_nodes, dtype=float)
    times = ensemble.times
    if t_nodes is None:
        idx = np.arange(times.size)
        t_req = times
    else:
        t_req = np.atleast_1d(np.asarray(t_nodes, dtype=float))
        if t_req[0] != 0.0:
            # grid functions start at t = 0
            t_req = np.concatenate([[0.0], t_req])
        idx = np.atleast_1d(ensemble.partition.nearest_index(t_req))
        if np.any(np.diff(idx) <= 0):
            raise ValueError("requested times snap to repeated or unordered partition nodes")
    n = ensemble.n_paths
    raw = np.empty((idx.size, x.size))
    se = np.empty_like(raw)
    means = np.empty(idx.size)
    for r, k in enumerate(idx):
        xs = np.sort(ensemble.paths[:, k])
        c1 = np.concatenate([np.cumsum(xs[::-1])[::-1], [0.0]])
        c2 = np.concatenate([np.cumsum((xs**2)[::-1])[::-1], [0.0]])
        pos = np.searchsorted(xs, x, side="right")
        cnt = n - pos
        s1 = c1[pos] - x * cnt
        s2 = c2[pos] - 2 * x * c1[pos] + x**2 * cnt
        mean = s1 / n
        raw[r] = mean
        var = np.maximum(s2 / n - mean**2, 0.0) * n / max(n - 1, 1)
        se[r] = np.sqrt(var / n)
        means[r] = xs.mean()
    vals = raw
    dist = 0.0
    if project:
        vals = np.vstack([project_convex(x, row) for row in raw])
        dist = float(np.max(np.abs(vals - raw)))
    g = GridFunction(times[idx], x, vals, lipschitz_x=1.0)
    return CallSurface(
        g,
        means,
        None,
        se=se,
        raw=raw,
        source=f"monte_carlo(n={n},seed={ensemble.seed})",
        projection_distance=dist,
        snap_offsets=times[idx] - t_req,
    )


# -- finite differences -----------------------------------------------------------


def _second_diff_matrix(x):
    """Tridiagonal coefficients (lower, diag, upper) of d^2/dx^2 on interior nodes."""
    h = np.diff(x)
    hl, hr = h[:-1], h[1:]
    lower = 2.0 / (hl * (hl + hr))
    upper = 2.0 / (hr * (hl + hr))
    return lower, -(lower + upper), upper


def _theta_step(u_prev, a_new, a_old, theta, lower, diag, upper, left_bc, right_bc):
    """One theta-scheme step of ``u_t = a u_xx`` (``a`` already multiplied by dt).

    Solves ``(I - theta a_new D2) u = (I + (1 - theta) a_old D2) u_prev`` on the
    interior nodes with Dirichlet data; ``theta = 1`` is implicit Euler and
    ``theta = 1/2`` Crank-Nicolson.
    """
    m = u_prev.size
    an = theta * a_new
    ab = np.zeros((3, m - 2))
    ab[0, 1:] = -an[:-1] * upper[:-1]
    ab[1] = 1.0 - an * diag
    ab[2, :-1] = -an[1:] * lower[1:]
    d2 = lower * u_prev[:-2] + diag * u_prev[1:-1] + upper * u_prev[2:]
    rhs = u_prev[1:-1] + (1.0 - theta) * a_old * d2
    rhs[0] += an[0] * lower[0] * left_bc
    rhs[-1] += an[-1] * upper[-1] * right_bc
    u = np.empty(m)
    u[0], u[-1] = left_bc, right_bc
    u[1:-1] = linalg.solve_banded((1, 1), ab, rhs)
    return u


def _march(u0, t_from, t_to, sigma_fn, x, lower, diag, upper, bc, startup):
    """Crank-Nicolson from ``t_from`` to ``t_to``; ``startup`` implicit quarter steps first.

    ``sigma_fn(t)`` gives the interior volatilities; the implicit start damps the
    oscillations CN would otherwise produce from a kinked initial row.
    """
    u = u0
    t = t_from
    if startup:
        dt = (t_to - t_from) / 4
        for _ in range(4):
            a = 0.5 * sigma_fn(t + dt) ** 2 * dt
            u = _theta_step(u, a, a, 1.0, lower, diag, upper, *bc)
            t += dt
        return u
    dt = t_to - t_from
    a_new = 0.5 * sigma_fn(t_to) ** 2 * dt
    a_old = 0.5 * sigma_fn(t_from) ** 2 * dt
    return _theta_step(u, a_new, a_old, 0.5, lower, diag, upper, *bc)


def call_surface_forward_pde(model, x_nodes, t_nodes, boundary_tol=1e-4, startup_steps=2) -> CallSurface:
    """Forward equation ``C_t = 1/2 sigma^2 C_xx`` on the grid ``t_nodes x x_nodes``.

    Crank-Nicolson between consecutive t-nodes, except the first
    ``startup_steps`` intervals which use four implicit Euler substeps each
    (the initial row has a kink for a point-mass start).  Boundary values are
    ``C = E[X] - x`` at the lower end and ``0`` at the upper end, exact while the
    law keeps negligible mass near the edges; an error suggesting a wider grid is
    raised otherwise.
    """
    if model.has_jumps or not model.is_martingale_diffusion:
        raise ValueError("forward call-surface PDE needs a driftless continuous model")
    x = np.asarray(x_nodes, dtype=float)
    t = np.asarray(t_nodes, dtype=float)
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_nodes must start at 0 and increase")
    if x.size < 3:
        raise ValueError("need at least three x nodes")
    m0 = model.initial_mean
    if np.isscalar(model.initial):
        c0 = np.maximum(m0 - x, 0.0)
    else:
        c0 = np.array([model.initial.expect(lambda y, k=k: max(y - k, 0.0)) for k in x])
    lower, diag, upper = _second_diff_matrix(x)
    out = np.empty((t.size, x.size))
    out[0] = c0
    bc = (m0 - x[0], 0.0)
    for i in range(1, t.size):
        out[i] = _march(out[i - 1], t[i - 1], t[i], lambda s: model.sigma(s, x[1:-1]), x, lower, diag, upper,
                        bc, i <= startup_steps)
        if not np.all(np.isfinite(out[i])):
            raise PDEError(f"non-finite values at t={t[i]}; refine the t-grid")
    # boundary consistency: slopes next to the edges should be -1 and 0
    s = np.diff(out[-1]) / np.diff(x)
    edge = max(abs(s[0] + 1.0), abs(s[-1]))
    if edge > boundary_tol:
        raise PDEError(
            f"boundary slope error {edge:.2e} exceeds {boundary_tol:.0e}; "
            f"widen the x-range beyond [{x[0]}, {x[-1]}]"
        )
    g = GridFunction(t, x, out, lipschitz_x=1.0)
    return CallSurface(g, np.full(t.size, m0), np.zeros(t.size), source=f"forward_pde({model.tag})",
                       meta={"startup_steps": startup_steps})


def dupire_surface(C: CallSurface, eps=1e-8):
    """Local volatility on interior nodes, NaN where the curvature is at most ``eps``.

    ``C_t`` is the backward difference between consecutive t-nodes and ``C_xx``
    the average of the second differences at both ends of the interval, which
    inverts a Crank-Nicolson step exactly.  Returns an array of shape
    ``(n_t, n_x)`` whose first row and edge columns are NaN; a node is NaN when
    either second difference is at most ``eps``.
    """
    v, x, t = C.values, C.x_nodes, C.t_nodes
    out = np.full(v.shape, np.nan)
    hl, hr = np.diff(x)[:-1], np.diff(x)[1:]
    raw2 = (v[:, 2:] - v[:, 1:-1]) * hl / (hl + hr) - (v[:, 1:-1] - v[:, :-2]) * hr / (hl + hr)
    # raw2 is (hl*hr/2) * C_xx
    cxx = 2 * raw2 / (hl * hr)
    ct = np.diff(v[:, 1:-1], axis=0) / np.diff(t)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        sig2 = 2 * ct / (0.5 * (cxx[1:] + cxx[:-1]))
    ok = (raw2[1:] > eps) & (raw2[:-1] > eps) & np.isfinite(sig2)
    out[1:, 1:-1] = np.where(ok, np.sqrt(np.maximum(sig2, 0.0)), np.nan)
    return out


def dupire_sigma(C: CallSurface, t, x, eps=1e-8):
    """Local volatility at the grid node nearest ``(t, x)``; NaN when undefined."""
    i = int(np.argmin(np.abs(C.t_nodes - t)))
    j = int(np.argmin(np.abs(C.x_nodes - x)))
    if i == 0 or j == 0 or j == C.x_nodes.size - 1:
        return float("nan")
    return float(dupire_surface(C, eps)[i, j])


@dataclass(frozen=True)
class DensitySlice:
    t: float
    x_nodes: np.ndarray
    values: np.ndarray
    clipped_mass: float

    @property
    def weights(self):
        """Quadrature weights that make ``sum(values * weights)`` the mass."""
        h = np.diff(self.x_nodes)
        w = np.zeros(self.x_nodes.size)
        w[1:-1] = 0.5 * (h[:-1] + h[1:])
        return w

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.weights))

    def to_csv(self, path=None):
        text = "x,density\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(self.x_nodes.tolist(), self.values.tolist()))
        if path is None:
            return text
        from .io_utils import atomic_write_text

        atomic_write_text(path, text)


def density(C: CallSurface, t) -> DensitySlice:
    """Discrete ``C_xx`` at the t-node nearest ``t``, clipped at zero."""
    i = int(np.argmin(np.abs(C.t_nodes - t)))
    x = C.x_nodes
    s = np.diff(C.values[i]) / np.diff(x)
    h = np.diff(x)
    p = np.zeros(x.size)
    p[1:-1] = np.diff(s) / (0.5 * (h[:-1] + h[1:]))
    w = np.zeros(x.size)
    w[1:-1] = 0.5 * (h[:-1] + h[1:])
    clipped = float(np.sum(np.minimum(p, 0.0) * w))
    return DensitySlice(float(C.t_nodes[i]), x, np.maximum(p, 0.0), -clipped)


# -- backward equation ------------------------------------------------------------


def shape_report(f: GridFunction, tol=1e-10) -> dict:
    """Convexity in ``x`` and monotone decrease in ``t`` of a surface."""
    s = f.slopes
    conv = float(max(0.0, -np.min(np.diff(s, axis=1), initial=0.0)))
    mono = float(max(0.0, np.max(np.diff(f.values, axis=0), initial=0.0)))
    return {"convexity_defect": conv, "t_increase": mono, "ok": conv <= tol and mono <= tol}


def conditional_expectation_surface(model, g, horizon, x_nodes, t_nodes, lipschitz=None, tol=1e-10,
                                    strict=True, startup_steps=2) -> GridFunction:
    """``f(t, x) = E[g(X_T) | X_t = x]`` from the backward equation ``f_t + 1/2 sigma^2 f_xx = 0``.

    Crank-Nicolson backwards from ``f(T) = g`` along ``t_nodes`` (which must end
    at ``horizon``), with implicit start-up steps as in
    :func:`call_surface_forward_pde`, with ``f = g`` on the x-boundary, so ``g`` should be linear
    outside the grid.  For convex ``g`` the result is convex in ``x`` and
    nonincreasing in ``t``; with ``strict`` a :class:`ShapeViolation` is raised
    when either property fails by more than ``tol``.
    """
    if model.has_jumps or not model.is_martingale_diffusion:
        raise ValueError("conditional-expectation PDE needs a driftless continuous model")
    x = np.asarray(x_nodes, dtype=float)
    t = np.asarray(t_nodes, dtype=float)
    if abs(t[-1] - horizon) > 1e-12 * max(1.0, horizon):
        raise ValueError("t_nodes must end at the horizon")
    gx = np.asarray(g(x), dtype=float) * np.ones_like(x)
    lower, diag, upper = _second_diff_matrix(x)
    out = np.empty((t.size, x.size))
    out[-1] = gx
    n = t.size - 1
    for i in range(n - 1, -1, -1):
        # march in time-to-maturity tau = T - t
        out[i] = _march(out[i + 1], horizon - t[i + 1], horizon - t[i],
                        lambda tau: model.sigma(horizon - tau, x[1:-1]), x, lower, diag, upper,
                        (gx[0], gx[-1]), n - i <= startup_steps)
        if not np.all(np.isfinite(out[i])):
            raise PDEError(f"non-finite values at t={t[i]}; refine the grid")
    lip = float(np.max(np.abs(np.diff(gx) / np.diff(x)))) if lipschitz is None else float(lipschitz)
    f = GridFunction(t, x, out, lipschitz_x=lip)
    if strict:
        rep = shape_report(f, tol)
        if not rep["ok"]:
            raise ShapeViolation(
                f"convexity defect {rep['convexity_defect']:.3e}, t-increase {rep['t_increase']:.3e} "
                f"(tolerance {tol:.0e})"
            )
    return f
