"""Pathwise estimators on simulated ensembles.

Partition quadratic (co)variations with a jump ledger, the Ito drift of
``Y_t = f(t, X_t)`` for smooth ``f``, the quadratic-variation identity for
functions of ``X`` that are only Lipschitz in ``x``, and binned estimates of the
conditional variation and its time-reversed counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import MCEstimate
from .process_models import Partition

__all__ = [
    "QVPath",
    "C2Function",
    "DriftDecomposition",
    "DerivativeError",
    "VariationEstimate",
    "qv_partition",
    "ensemble_qv",
    "ito_drift",
    "dirichlet_qv_check",
    "conditional_variation",
    "reversed_conditional_variation",
    "equal_mass_bins",
]


class DerivativeError(ValueError):
    """A supplied partial derivative returned non-finite values."""

    def __init__(self, msg, t=None, x=None):
        super().__init__(msg)
        self.t, self.x = t, x


# -- quadratic variation -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QVPath:
    """Cumulative partition covariation at the partition nodes.

    ``values[i, k]`` is ``sum_{j < k} (X_{t_{j+1}} - X_{t_j})(Y_{t_{j+1}} - Y_{t_j})``
    on path ``i`` and ``ledger[i, k]`` the sum of ``dX dY`` over recorded jumps
    up to ``t_k``.
    """

    times: np.ndarray
    values: np.ndarray
    ledger: np.ndarray

    @property
    def continuous(self) -> np.ndarray:
        """Partition estimate of the continuous part ``[X, Y] - sum dX dY``."""
        return self.values - self.ledger

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def _node_indices(times, partition):
    if partition is None:
        return np.arange(times.size)
    nodes = partition.times if isinstance(partition, Partition) else np.asarray(partition, dtype=float)
    idx = np.searchsorted(times, nodes)
    idx = np.clip(idx, 0, times.size - 1)
    tol = 1e-9 * max(1.0, times[-1])
    if np.any(np.abs(times[idx] - nodes) > tol):
        raise ValueError("partition nodes must be sample times of the paths")
    return idx


def qv_partition(x_paths, y_paths=None, partition=None, times=None, jumps=None) -> QVPath:
    """Partition covariation ``[X, Y]^P`` from sampled paths.

    Parameters
    ----------
    x_paths, y_paths : array_like
        Shape ``(n_paths, n_times)`` or ``(n_times,)``; ``y_paths`` defaults to
        ``x_paths``.
    partition : Partition or array_like, optional
        Nodes to difference over; each must be a sample time.  Defaults to all
        sample times.
    times : array_like, optional
        Sample times; required when ``partition`` is given.
    jumps : tuple, optional
        ``(path, time, dx, dy)`` columns of recorded jumps for the ledger.
    """
    x = np.atleast_2d(np.asarray(x_paths, dtype=float))
    y = x if y_paths is None else np.atleast_2d(np.asarray(y_paths, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"path shapes differ: {x.shape} vs {y.shape}")
    if times is None:
        if partition is not None and not isinstance(partition, Partition):
            raise ValueError("sample times are needed to locate partition nodes")
        times = partition.times if partition is not None else np.arange(x.shape[1], dtype=float)
    times = np.asarray(times, dtype=float)
    idx = _node_indices(times, partition)
    xs, ys = x[:, idx], y[:, idx]
    prod = np.diff(xs, axis=1) * np.diff(ys, axis=1)
    vals = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(prod, axis=1)], axis=1)
    ledger = np.zeros_like(vals)
    nodes = times[idx]
    if jumps is not None and len(jumps[0]):
        path, jt, dx, dy = (np.asarray(c) for c in jumps)
        # a jump at time s counts from the first node >= s
        k = np.searchsorted(nodes, jt, side="left")
        ok = k < nodes.size
        np.add.at(ledger, (path[ok].astype(np.int64), k[ok]), (dx * dy)[ok])
        np.cumsum(ledger, axis=1, out=ledger)
    return QVPath(nodes, vals, ledger)


def _eval_f(f, t, x, left=False):
    if hasattr(f, "row_index"):
        return f(t, x, left=left)
    return f(t, x)


def ensemble_qv(ensemble, f=None, g=None, stride=1) -> QVPath:
    """``[f(., X), g(., X)]^P`` on the ensemble partition coarsened by ``stride``.

    ``f`` and ``g`` default to the identity; the jump ledger uses
    ``f(s, X_s) - f(s-, X_{s-})`` for every recorded jump.
    """
    ens = ensemble.coarsen(stride) if stride > 1 else ensemble
    t = ens.times
    T = np.broadcast_to(t, ens.paths.shape)

    def apply(fn):
        return ens.paths if fn is None else np.asarray(_eval_f(fn, T, ens.paths), dtype=float)

    def jump_delta(fn):
        j = ens.jumps
        if fn is None:
            return j.post - j.pre
        return _eval_f(fn, j.time, j.post) - _eval_f(fn, j.time, j.pre, left=True)

    y1 = apply(f)
    y2 = y1 if g is f else apply(g)
    j = ens.jumps
    ledger = (j.path, j.time, jump_delta(f), jump_delta(g)) if len(j) else None
    return qv_partition(y1, y2, None, t, ledger)


# -- Ito drift ---------------------------------------------------------------------


@dataclass(frozen=True)
class C2Function:
    """A smooth ``f(t, x)`` with its partials ``f_t``, ``f_x``, ``f_xx`` (all vectorized)."""

    f: object
    f_t: object
    f_x: object
    f_xx: object
    name: str = "f"

    def __call__(self, t, x):
        return self.f(t, x)


def _checked(fn, name, t, x):
    v = np.asarray(fn(t, x), dtype=float) * np.ones(np.shape(x))
    bad = ~np.isfinite(v)
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        tt = float(np.broadcast_to(t, np.shape(x)).ravel()[i])
        xx = float(np.ravel(x)[i])
        raise DerivativeError(f"{name} is not finite at t={tt!r}, x={xx!r}", tt, xx)
    return v


@dataclass(frozen=True, eq=False)
class DriftDecomposition:
    """``Y = f(t, X) = Y_0 + M + A`` along every path.

    ``dA`` holds the continuous drift increments per step,
    ``(f_t + b f_x + sigma^2 f_xx / 2)(t_k, X_{t_k}) dt``, and ``jump_drift`` the
    per-jump remainders ``J0 = f(X_t) - f(X_{t-}) - f_x(X_{t-}) dX``.
    """

    times: np.ndarray
    Y: np.ndarray
    dA: np.ndarray
    jump_drift: np.ndarray
    jumps: object
    states: np.ndarray

    @property
    def A(self) -> np.ndarray:
        out = np.zeros_like(self.Y)
        out[:, 1:] = np.cumsum(self.dA, axis=1)
        if self.jump_drift.size:
            inc = np.zeros_like(self.Y)
            np.add.at(inc, (self.jumps.path, self.jumps.step + 1), self.jump_drift)
            out += np.cumsum(inc, axis=1)
        return out

    @property
    def M(self) -> np.ndarray:
        return self.Y - self.Y[:, :1] - self.A

    def variation(self) -> np.ndarray:
        """Per-path total variation of ``A`` (finite by construction)."""
        v = np.sum(np.abs(self.dA), axis=1)
        if self.jump_drift.size:
            v = v + np.bincount(self.jumps.path, np.abs(self.jump_drift), minlength=v.size)
        return v

    def functional(self, theta) -> MCEstimate:
        """``E[int theta(t-, X_{t-}) dA_t]`` with per-path samples.

        Steps use the left node; jumps use ``theta`` at ``(s-, X_{s-})``.
        """
        t = self.times
        acc = np.zeros(self.Y.shape[0])
        for k in range(t.size - 1):
            xk = self.states[:, k]
            acc += _eval_f(theta, np.full(xk.shape, t[k]), xk) * self.dA[:, k]
        if self.jump_drift.size:
            j = self.jumps
            w = _eval_f(theta, j.time, j.pre, left=True)
            acc += np.bincount(j.path, w * self.jump_drift, minlength=acc.size)
        return MCEstimate.from_samples(acc)


def ito_drift(fn: C2Function, ensemble, model) -> DriftDecomposition:
    """Drift of ``f(t, X_t)`` from the Ito formula.

    The continuous part of ``[X]`` is taken as ``int sigma^2 dt`` from the model
    and ``dA_X = b dt``; each recorded jump contributes the Taylor remainder
    ``f(t, X_t) - f(t, X_{t-}) - f_x(t, X_{t-}) dX``, which equals
    ``int_{X_{t-}}^{X_t} (X_t - x) f_xx(t, x) dx`` in closed form.
    """
    if ensemble.model_tag != model.tag:
        raise ValueError(f"ensemble was simulated from {ensemble.model_tag!r}, not {model.tag!r}")
    t = ensemble.times
    X = ensemble.paths
    n, m = X.shape
    Y = _checked(fn.f, "f", np.broadcast_to(t, X.shape), X)
    dA = np.empty((n, m - 1))
    for k in range(m - 1):
        xk = X[:, k]
        tk = np.full(xk.shape, t[k])
        gen = (_checked(fn.f_t, "f_t", tk, xk) + model.b(t[k], xk) * _checked(fn.f_x, "f_x", tk, xk)
               + 0.5 * model.sigma(t[k], xk) ** 2 * _checked(fn.f_xx, "f_xx", tk, xk))
        dA[:, k] = gen * (t[k + 1] - t[k])
    j = ensemble.jumps
    if len(j):
        jd = (_checked(fn.f, "f", j.time, j.post) - _checked(fn.f, "f", j.time, j.pre)
              - _checked(fn.f_x, "f_x", j.time, j.pre) * (j.post - j.pre))
    else:
        jd = np.zeros(0)
    return DriftDecomposition(t, Y, dA, jd, j, X)


# -- Dirichlet quadratic variation -----------------------------------------------------


def dirichlet_qv_check(f, ensemble, strides=(8, 4, 2, 1), model=None) -> dict:
    """Compare ``[f(., X)]^P_T`` with ``int f_x^2 d[X]^c + sum (df)^2`` at several meshes.

    The right side is computed once on the finest partition: ``f_x`` is the
    left x-derivative of the grid function at ``X_{t_k}``, and ``d[X]^c`` is
    ``sigma^2 dt`` when ``model`` is given, otherwise the squared continuous
    increments.  The left side is recomputed on every coarsening.  Errors are
    relative differences of ensemble means (paired on the same paths).
    """
    t = ensemble.times
    X = ensemble.paths
    dt = np.diff(t)
    if model is not None:
        dqc = np.stack([model.sigma(t[k], X[:, k]) ** 2 * dt[k] for k in range(t.size - 1)], axis=1)
    else:
        dqc = np.diff(ensemble.continuous_part(), axis=1) ** 2
    T = np.broadcast_to(t[:-1], X[:, :-1].shape)
    if hasattr(f, "dx"):
        fx = f.dx(T, X[:, :-1], side="left")
    else:
        fx = np.asarray(f.f_x(T, X[:, :-1]), dtype=float)
    rhs = np.sum(fx**2 * dqc, axis=1)
    j = ensemble.jumps
    if len(j):
        df = _eval_f(f, j.time, j.post) - _eval_f(f, j.time, j.pre, left=True)
        rhs = rhs + np.bincount(j.path, df**2, minlength=rhs.size)
    rhs_est = MCEstimate.from_samples(rhs)
    rows = []
    for s in strides:
        lhs = ensemble_qv(ensemble, f, f, stride=s).terminal
        diff = MCEstimate.from_samples(lhs - rhs)
        rows.append({
            "stride": int(s),
            "mesh": float(ensemble.partition.mesh * s),
            "lhs": MCEstimate.from_samples(lhs).as_dict(),
            "rel_error": abs(diff.value) / abs(rhs_est.value) if rhs_est.value else abs(diff.value),
            "diff": diff.as_dict(),
        })
    errs = [r["rel_error"] for r in rows]
    return {
        "rhs": rhs_est.as_dict(),
        "meshes": rows,
        "monotone": bool(all(b <= a for a, b in zip(errs, errs[1:]))),
    }


# -- conditional variations -------------------------------------------------------


def equal_mass_bins(z, n_bins=64, min_count=None):
    """Bin labels with roughly equal counts; ties share a bin and sparse bins merge.

    Returns ``(labels, n_merged)``.  ``min_count`` defaults to half the target
    occupancy.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    n_bins = max(1, min(int(n_bins), n))
    if min_count is None:
        min_count = max(2, n // (2 * n_bins))
    edges = np.quantile(z, np.linspace(0, 1, n_bins + 1)[1:-1])
    raw = np.searchsorted(edges, z, side="right")
    counts = np.bincount(raw, minlength=n_bins)
    # merge left to right until each bin is populated enough; a short tail joins its neighbour
    mapping = np.empty(n_bins, dtype=np.int64)
    label, acc = 0, 0
    for b in range(n_bins):
        mapping[b] = label
        acc += counts[b]
        if acc >= min_count:
            label += 1
            acc = 0
    if acc and label > 0:
        mapping[mapping == label] = label - 1
    labels = mapping[raw]
    used = np.unique(labels).size
    nonempty = int(np.count_nonzero(counts))
    return labels, nonempty - used


@dataclass(frozen=True)
class VariationEstimate:
    """Cumulative estimate at the partition nodes with its SE and positive-bias bound."""

    times: np.ndarray
    curve: np.ndarray
    se: np.ndarray
    bias_bound: np.ndarray
    merged_bins: int

    @property
    def value(self) -> float:
        return float(self.curve[-1])

    def at(self, t) -> float:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.curve[k])

    def as_dict(self):
        return {"value": self.value, "se": float(self.se[-1]), "bias_bound": float(self.bias_bound[-1]),
                "merged_bins": self.merged_bins}


def _binned_abs_mean(z, inc, n_bins, min_count):
    """``sum_b w_b |mean_b(inc)|`` with bins on ``z``; returns value, variance, bias bound, merges."""
    labels, merged = equal_mass_bins(z, n_bins, min_count)
    n = z.size
    cnt = np.bincount(labels).astype(float)
    keep = cnt > 0
    s1 = np.bincount(labels, inc)[keep]
    s2 = np.bincount(labels, inc * inc)[keep]
    cnt = cnt[keep]
    mean = s1 / cnt
    var = np.maximum(s2 / cnt - mean**2, 0.0) * cnt / np.maximum(cnt - 1, 1)
    w = cnt / n
    value = float(np.sum(w * np.abs(mean)))
    mvar = var / cnt
    # E|m + e| - |m| <= E|e| <= sd(e) for the bin-mean error e
    return value, float(np.sum(w**2 * mvar)), float(np.sum(w * np.sqrt(mvar))), merged


def _variation_curve(t, cond, incs, n_bins, min_count):
    m = incs.shape[1]
    vals = np.zeros(m)
    var = np.zeros(m)
    bias = np.zeros(m)
    merged = 0
    for k in range(m):
        v, s2, b, mg = _binned_abs_mean(cond[:, k], incs[:, k], n_bins, min_count)
        vals[k], var[k], bias[k] = v, s2, b
        merged += mg
    z = np.zeros(1)
    return VariationEstimate(
        t,
        np.concatenate([z, np.cumsum(vals)]),
        np.sqrt(np.concatenate([z, np.cumsum(var)])),
        np.concatenate([z, np.cumsum(bias)]),
        merged,
    )


def conditional_variation(ensemble, partition=None, n_bins=64, min_count=None) -> VariationEstimate:
    """``sum_k E|E[X_{t_{k+1}} - X_{t_k} | X_{t_k}]|`` by equal-mass binning on ``X_{t_k}``.

    For a Markov ensemble, conditioning on the current state realizes the
    optimal simple previsible ``xi_k = sign(E[dX | F_{t_k}])``.  The estimate is
    biased upwards by at most ``bias_bound`` (the summed SE of the bin means);
    ``se`` ignores that bias.
    """
    t = ensemble.times
    idx = _node_indices(t, partition)
    X = ensemble.paths[:, idx]
    return _variation_curve(t[idx], X[:, :-1], np.diff(X, axis=1), n_bins, min_count)


def reversed_conditional_variation(ensemble, a_paths, partition=None, n_bins=64, min_count=None) -> VariationEstimate:
    """``sum_k E|E[A_{t_k} - A_{t_{k-1}} | X_{t_k}]|``, conditioning on the later state.

    ``Z_k = sign(E[dA | X_{t_k}])`` is one feasible choice in the supremum, so for
    exact conditional means this is a lower bound; the binning adds the
    positive bias reported in ``bias_bound``.
    """
    t = ensemble.times
    idx = _node_indices(t, partition)
    X = ensemble.paths[:, idx]
    A = np.asarray(a_paths, dtype=float)[:, idx]
    return _variation_curve(t[idx], X[:, 1:], np.diff(A, axis=1), n_bins, min_count)
