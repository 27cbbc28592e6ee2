"""Grid functions: piecewise linear in space, right-continuous step functions in time.

A :class:`GridFunction` with time nodes ``s_0 = 0 < s_1 < ...`` and space nodes
``x_0 < ... < x_m`` is the function

    f(t, x) = linear interpolation of values[i, :] at x,   s_i <= t < s_{i+1},

extended flat beyond ``[x_0, x_m]`` and beyond the last time node.  Such a function
is Lipschitz in ``x``, cadlag in ``t``, has one-sided space derivatives everywhere
and its time variation is a finite sum of atoms, so every instance belongs to the
class of functions the backward equation is stated for.  All the Lebesgue-Stieltjes
integrals in :mod:`genbackward.measures` reduce to finite sums on this
representation.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "GridFunction",
    "CompactGridFunction",
    "MembershipError",
    "Kernel",
    "Mollified",
    "PathValues",
    "left_limit",
    "one_sided_x_derivative",
    "t_variation",
    "mollify_time",
    "mollify_space",
    "eval_on_path",
    "eval_on_ensemble",
    "common_grid",
    "smooth_plateau",
    "plateau_bump",
]

_GRID_MAGIC = b"GBEQGRD\x00"
_FORMAT_VERSION = 1
# lookups treat points within this relative distance of a node as on the node,
# so grids built independently (linspace vs k * h) agree on which row is active
NODE_RTOL = 1e-9


def _node_lookup(nodes, q, side, scale):
    """``searchsorted(nodes, q, side) - 1`` with ``q`` snapped onto nearby nodes."""
    eps = NODE_RTOL * scale
    if side == "right":
        return np.searchsorted(nodes, q + eps, side="right") - 1
    return np.searchsorted(nodes, q - eps, side="left") - 1


class MembershipError(ValueError):
    """A grid function violates one of the class-membership conditions."""


def _strictly_increasing(a, name):
    a = np.array(a, dtype=float)
    if a.ndim != 1 or a.size < 1 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 1-d array")
    if np.any(np.diff(a) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-linear-in-x, piecewise-constant-in-t function.

    Parameters
    ----------
    t_nodes : array, shape (n_t,)
        Strictly increasing, starting at 0.
    x_nodes : array, shape (n_x,)
        Strictly increasing space nodes, at least two.
    values : array, shape (n_t, n_x)
    lipschitz_x : float, optional
        Declared Lipschitz bound; defaults to the largest slope magnitude.
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray
    lipschitz_x: float | None = None

    def __post_init__(self):
        t = _strictly_increasing(self.t_nodes, "t_nodes")
        x = _strictly_increasing(self.x_nodes, "x_nodes")
        if t[0] != 0.0:
            raise ValueError("t_nodes must start at 0")
        if x.size < 2:
            raise ValueError("need at least two x nodes")
        v = np.array(self.values, dtype=float)
        if v.shape != (t.size, x.size):
            raise ValueError(f"values must have shape {(t.size, x.size)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "t_nodes", t)
        object.__setattr__(self, "x_nodes", x)
        object.__setattr__(self, "values", v)
        lip = float(np.max(np.abs(self.slopes))) if self.lipschitz_x is None else float(self.lipschitz_x)
        object.__setattr__(self, "lipschitz_x", lip)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_function(cls, fn, t_nodes, x_nodes, lipschitz_x=None, **kwargs):
        """Sample ``fn(t, x)`` (vectorized) on the grid."""
        t = np.asarray(t_nodes, dtype=float)
        x = np.asarray(x_nodes, dtype=float)
        vals = np.asarray(fn(t[:, None], x[None, :]), dtype=float)
        vals = np.broadcast_to(vals, (t.size, x.size))
        return cls(t, x, vals, lipschitz_x, **kwargs)

    def _replace_values(self, t_nodes, x_nodes, values):
        return GridFunction(t_nodes, x_nodes, values, self.lipschitz_x)

    # -- geometry ----------------------------------------------------------

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x_nodes)

    @property
    def slopes(self) -> np.ndarray:
        """Space slopes per cell, shape ``(n_t, n_x - 1)``."""
        return np.diff(self.values, axis=1) / np.diff(self.x_nodes)

    def row_index(self, t, left=False):
        """Row active at ``t`` (``left=True``: row active just before ``t``)."""
        t = np.asarray(t, dtype=float)
        side = "left" if left else "right"
        idx = _node_lookup(self.t_nodes, t, side, max(1.0, self.t_nodes[-1]))
        return np.clip(idx, 0, self.t_nodes.size - 1)

    def _interp_rows(self, rows, x):
        xn = self.x_nodes
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(xn, x, side="right") - 1, 0, xn.size - 2)
        w = np.clip((x - xn[j]) / (xn[j + 1] - xn[j]), 0.0, 1.0)
        v = self.values
        lo = v[rows, j]
        return lo + w * (v[rows, j + 1] - lo)

    def __call__(self, t, x, left=False):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return self._interp_rows(self.row_index(t, left=left), x)

    def row(self, i, x):
        return np.interp(x, self.x_nodes, self.values[i])

    def dx(self, t, x, side="right", left=False):
        """One-sided space derivative; zero beyond the node range."""
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        rows = self.row_index(t, left=left)
        xn = self.x_nodes
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        cell = _node_lookup(xn, x, side, float(np.min(np.diff(xn))))
        ok = (cell >= 0) & (cell < xn.size - 1)
        c = np.clip(cell, 0, xn.size - 2)
        return np.where(ok, self.slopes[rows, c], 0.0)

    # -- structure ---------------------------------------------------------

    def resample(self, t_nodes, x_nodes) -> "GridFunction":
        """Values on another grid; exact when the new grid refines this one."""
        t_nodes = np.asarray(t_nodes, dtype=float)
        x_nodes = np.asarray(x_nodes, dtype=float)
        rows = self.row_index(t_nodes)
        vals = np.empty((t_nodes.size, x_nodes.size))
        for out_i, i in enumerate(rows):
            vals[out_i] = np.interp(x_nodes, self.x_nodes, self.values[i])
        return self._replace_values(t_nodes, x_nodes, vals)

    def t_jumps(self) -> np.ndarray:
        """Row differences ``f(s_i) - f(s_{i-1})`` for ``i >= 1``."""
        return np.diff(self.values, axis=0)

    def validate(self, tol=1e-12):
        """Re-check the membership conditions; raise :class:`MembershipError`."""
        slopes = np.abs(self.slopes)
        if np.max(slopes, initial=0.0) > self.lipschitz_x * (1 + tol) + tol:
            raise MembershipError(
                f"x-slope {np.max(slopes)!r} exceeds declared Lipschitz bound {self.lipschitz_x!r}"
            )
        var = np.sum(np.abs(self.t_jumps()), axis=0)
        if not np.all(np.isfinite(var)):
            raise MembershipError("time variation is not finite")
        return True

    def __add__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        t, x = common_grid(self, other)
        a, b = self.resample(t, x), other.resample(t, x)
        return GridFunction(t, x, a.values + b.values, self.lipschitz_x + other.lipschitz_x)

    def scale(self, c: float) -> "GridFunction":
        return GridFunction(self.t_nodes, self.x_nodes, c * self.values, abs(c) * self.lipschitz_x)

    # -- persistence -------------------------------------------------------

    def to_csv(self, path=None):
        """CSV with a header row of x-nodes and t-nodes in the first column."""
        lines = ["t\\x," + ",".join(repr(float(v)) for v in self.x_nodes)]
        for t, row in zip(self.t_nodes, self.values):
            lines.append(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row))
        text = "\n".join(lines) + "\n"
        if path is None:
            return text
        from .io_utils import atomic_write_text

        atomic_write_text(path, text)

    @classmethod
    def from_csv(cls, path_or_text, lipschitz_x=None):
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        rows = [r.split(",") for r in text.strip().splitlines()]
        x = np.array([float(v) for v in rows[0][1:]])
        t = np.array([float(r[0]) for r in rows[1:]])
        vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(t, x, vals, lipschitz_x)

    def _header(self):
        return {"kind": "grid", "lipschitz_x": self.lipschitz_x}

    def to_bytes(self) -> bytes:
        hdr = json.dumps(
            {**self._header(), "n_t": self.t_nodes.size, "n_x": self.x_nodes.size}, sort_keys=True
        ).encode()
        buf = io.BytesIO()
        buf.write(_GRID_MAGIC)
        buf.write(struct.pack("<BI", _FORMAT_VERSION, len(hdr)))
        buf.write(hdr)
        for a in (self.t_nodes, self.x_nodes, self.values):
            buf.write(a.astype("<f8").tobytes())
        return buf.getvalue()

    @staticmethod
    def from_bytes(data: bytes) -> "GridFunction":
        if data[:8] != _GRID_MAGIC:
            raise ValueError("not a grid-function file (bad magic)")
        version, hlen = struct.unpack_from("<BI", data, 8)
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported grid format version {version}")
        hdr = json.loads(data[13 : 13 + hlen])
        pos = 13 + hlen
        nt, nx = hdr["n_t"], hdr["n_x"]
        arrs = []
        for count in (nt, nx, nt * nx):
            arrs.append(np.frombuffer(data, "<f8", count, pos).astype(float))
            pos += 8 * count
        t, x, v = arrs[0], arrs[1], arrs[2].reshape(nt, nx)
        if hdr["kind"] == "compact":
            return CompactGridFunction(t, x, v, hdr["lipschitz_x"], support=tuple(hdr["support"]))
        return GridFunction(t, x, v, hdr["lipschitz_x"])

    def save(self, path):
        from .io_utils import atomic_write_bytes

        atomic_write_bytes(path, self.to_bytes())

    @staticmethod
    def load(path) -> "GridFunction":
        with open(path, "rb") as fh:
            return GridFunction.from_bytes(fh.read())


def _covering_support(t, x, vals, box):
    """Smallest enlargement of ``box`` containing the support of the grid values.

    Rows hold until the next t-node; columns interpolate to the neighbouring
    x-nodes.
    """
    t_a, t_b, x_a, x_b = (float(b) for b in box)
    rows = np.flatnonzero(np.any(vals != 0.0, axis=1))
    if rows.size:
        if t[rows[0]] > 0:
            t_a = min(t_a, float(t[rows[0]]))
        if rows[-1] + 1 < t.size:
            t_b = max(t_b, float(t[rows[-1] + 1]))
    cols = np.flatnonzero(np.any(vals != 0.0, axis=0))
    if cols.size:
        x_a = min(x_a, float(x[max(cols[0] - 1, 0)]))
        x_b = max(x_b, float(x[min(cols[-1] + 1, x.size - 1)]))
    return (t_a, t_b, x_a, x_b)


@dataclass(frozen=True, eq=False)
class CompactGridFunction(GridFunction):
    """Grid function vanishing outside ``support = (t_a, t_b, x_a, x_b)`` with ``t_a > 0``.

    A row ``i`` may be nonzero only when ``[s_i, s_{i+1})`` lies inside
    ``[t_a, t_b]``; in particular the last row is zero.
    """

    support: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "support", tuple(float(s) for s in self.support))
        self._check_support()

    def _check_support(self):
        t_a, t_b, x_a, x_b = self.support
        if not (0.0 < t_a < t_b and x_a < x_b):
            raise MembershipError(f"invalid support box {self.support}")
        v = self.values
        nz_rows = np.flatnonzero(np.any(v != 0.0, axis=1))
        t = self.t_nodes
        t_next = np.append(t[1:], np.inf)
        eps = 1e-12 * max(1.0, t_b)
        bad = (t[nz_rows] < t_a - eps) | (t_next[nz_rows] > t_b + eps)
        if np.any(bad):
            raise MembershipError(f"nonzero row at t={t[nz_rows[bad][0]]!r} outside [{t_a}, {t_b}]")
        nz_cols = np.flatnonzero(np.any(v != 0.0, axis=0))
        x = self.x_nodes
        if nz_cols.size and (nz_cols[0] == 0 or nz_cols[-1] == x.size - 1):
            raise MembershipError("end columns must vanish so the flat extension is zero")
        epsx = 1e-12 * max(1.0, abs(x_a), abs(x_b))
        # piecewise-linear support reaches the zero nodes next to the nonzero columns
        if nz_cols.size and (x[nz_cols[0] - 1] < x_a - epsx or x[nz_cols[-1] + 1] > x_b + epsx):
            raise MembershipError("nonzero column outside the x-support")

    @classmethod
    def from_function(cls, fn, t_nodes, x_nodes, support, lipschitz_x=None):
        """Sample ``fn``; the support box widens to what the grid function occupies.

        A row sampled inside ``[t_a, t_b]`` stays in force until the next node and a
        nonzero column is interpolated down to the neighbouring zero node, so the
        grid function can reach slightly past the box of ``fn``.
        """
        t = np.asarray(t_nodes, dtype=float)
        x = np.asarray(x_nodes, dtype=float)
        vals = np.broadcast_to(np.asarray(fn(t[:, None], x[None, :]), dtype=float), (t.size, x.size))
        return cls(t, x, vals, lipschitz_x, support=_covering_support(t, x, vals, support))

    def _replace_values(self, t_nodes, x_nodes, values):
        support = _covering_support(t_nodes, x_nodes, values, self.support)
        return CompactGridFunction(t_nodes, x_nodes, values, self.lipschitz_x, support=support)

    def scale(self, c):
        return CompactGridFunction(self.t_nodes, self.x_nodes, c * self.values, abs(c) * self.lipschitz_x,
                                   support=self.support)

    def __add__(self, other):
        out = GridFunction.__add__(self, other)
        if out is NotImplemented or not isinstance(other, CompactGridFunction):
            return out
        a, b = self.support, other.support
        box = (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))
        return CompactGridFunction(out.t_nodes, out.x_nodes, out.values, out.lipschitz_x, support=box)

    def validate(self, tol=1e-12):
        super().validate(tol)
        self._check_support()
        return True

    def _header(self):
        return {"kind": "compact", "lipschitz_x": self.lipschitz_x, "support": list(self.support)}


def common_grid(*fs):
    """Union of the time nodes and of the space nodes of several grid functions."""
    t = np.unique(np.concatenate([f.t_nodes for f in fs]))
    x = np.unique(np.concatenate([f.x_nodes for f in fs]))
    return t, x


def left_limit(f: GridFunction) -> GridFunction:
    """Node values of the left limit ``f^-``: row ``i`` replaced by row ``i - 1`` (row 0 kept).

    The rows hold ``f^-(s_i, .)``.  Between nodes ``f^-`` equals ``f`` itself
    (``f^-`` is left-continuous), so for evaluation at arbitrary times use
    ``f(t, x, left=True)`` instead of calling the returned object.
    """
    vals = np.vstack([f.values[:1], f.values[:-1]])
    if isinstance(f, CompactGridFunction):
        t_a, t_b, x_a, x_b = f.support
        nxt = np.append(f.t_nodes[1:], np.inf)
        # shifting rows delays support by one time cell
        nz = np.flatnonzero(np.any(vals != 0, axis=1))
        t_b = max(t_b, float(nxt[nz[-1]])) if nz.size else t_b
        return CompactGridFunction(f.t_nodes, f.x_nodes, vals, f.lipschitz_x, support=(t_a, t_b, x_a, x_b))
    return GridFunction(f.t_nodes, f.x_nodes, vals, f.lipschitz_x)


def one_sided_x_derivative(f: GridFunction, t, x, side="right"):
    return f.dx(t, x, side=side)


def t_variation(f: GridFunction, x_index: int, window=None) -> float:
    """Total variation of ``t -> f(t, x_j)`` over atoms in ``(T0, T1]``."""
    t = f.t_nodes
    col = f.values[:, x_index]
    jumps = np.abs(np.diff(col))
    times = t[1:]
    if window is not None:
        t0, t1 = window
        eps = NODE_RTOL * max(1.0, t[-1])
        jumps = jumps[(times > t0 + eps) & (times <= t1 + eps)]
    return float(np.sum(jumps))


# -- mollifiers ------------------------------------------------------------


class Kernel:
    """Probability density given by a polynomial on ``[a, b]`` (zero elsewhere).

    Exact cdf and stop-loss transform ``E[(Y - k)_+]`` make the mollifiers below
    closed-form on piecewise-linear/piecewise-constant inputs.
    """

    def __init__(self, poly: Polynomial, a: float, b: float):
        total = poly.integ()(b) - poly.integ()(a)
        self.pdf_poly = poly / total
        self.a, self.b = float(a), float(b)
        self._cdf = self.pdf_poly.integ(lbnd=self.a)
        self._m1 = (Polynomial([0.0, 1.0]) * self.pdf_poly).integ(lbnd=self.a)
        self.mean = float(self._m1(self.b))

    @classmethod
    def triweight(cls, a=-1.0, b=1.0) -> "Kernel":
        """``(1 - u^2)^3`` rescaled to ``[a, b]``: a C^2 density with compact support."""
        c, r = (a + b) / 2, (b - a) / 2
        u = Polynomial([-c / r, 1.0 / r])
        return cls((1 - u**2) ** 3, a, b)

    @property
    def radius(self) -> float:
        return max(abs(self.a), abs(self.b))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.a) & (y <= self.b), self.pdf_poly(y), 0.0)

    def cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.a, self.b)
        return self._cdf(y)

    def stop_loss(self, k):
        """``E[(Y - k)_+]``."""
        k = np.asarray(k, dtype=float)
        kc = np.clip(k, self.a, self.b)
        inside = (self._m1(self.b) - self._m1(kc)) - kc * (1.0 - self._cdf(kc))
        return np.where(k < self.a, self.mean - k, np.where(k > self.b, 0.0, inside))


DEFAULT_TIME_KERNEL = Kernel.triweight(0.1, 0.9)
DEFAULT_SPACE_KERNEL = Kernel.triweight(-1.0, 1.0)


class Mollified:
    """Exact evaluation of a mollified grid function.

    ``kind='time'``:  theta_n(t, x) = int_0^1 theta(t - s/n, x) alpha(s) ds
    ``kind='space'``: theta_n(t, x) = int theta(t, x + y/n) alpha(y) dy
    """

    def __init__(self, theta: GridFunction, kernel: Kernel, n: int, kind: str):
        self.theta, self.kernel, self.n, self.kind = theta, kernel, int(n), kind
        if kind == "space":
            # f(x) = f(x_0) + sum_j d_j (x - x_j)_+ with slope 0 left of x_0
            s = theta.slopes
            zeros = np.zeros((s.shape[0], 1))
            self._kinks = np.diff(np.hstack([zeros, s, zeros]), axis=1)

    @property
    def support(self):
        t_a, t_b, x_a, x_b = getattr(self.theta, "support", (np.nan,) * 4)
        r = self.kernel
        if self.kind == "time":
            return (t_a + r.a / self.n, t_b + r.b / self.n, x_a, x_b)
        return (t_a, t_b, x_a - r.b / self.n, x_b - r.a / self.n)

    def __call__(self, t, x, deriv=0):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        th, K, n = self.theta, self.kernel, self.n
        if self.kind == "time":
            s = th.t_nodes
            upper = np.append(s[1:], np.inf)
            out = np.zeros(t.shape)
            for i in range(s.size):
                w = K.cdf(n * (t - s[i])) - K.cdf(n * (t - upper[i]))
                if np.any(w != 0):
                    vals = th.row(i, x) if deriv == 0 else _row_deriv(th, i, x)
                    out += w * vals
            return out
        rows = th.row_index(t)
        xn = th.x_nodes
        out = np.zeros(t.shape)
        if deriv == 0:
            out += th.values[rows, 0]
        for j in range(xn.size):
            d = self._kinks[rows, j]
            k = n * (xn[j] - x)
            if deriv == 0:
                out += d * K.stop_loss(k) / n
            elif deriv == 1:
                out += d * (1.0 - K.cdf(k))
            elif deriv == 2:
                out += d * n * K.pdf(k)
            else:
                raise ValueError("deriv must be 0, 1 or 2")
        return out

    def on_grid(self, t_nodes=None, x_nodes=None) -> GridFunction:
        th = self.theta
        if t_nodes is None:
            t_nodes = th.t_nodes
        if x_nodes is None:
            x_nodes = th.x_nodes
        t_nodes = np.asarray(t_nodes, dtype=float)
        x_nodes = np.asarray(x_nodes, dtype=float)
        vals = self(t_nodes[:, None], x_nodes[None, :])
        vals = np.where(np.abs(vals) < 1e-14 * max(1.0, np.max(np.abs(vals), initial=0.0)), 0.0, vals)
        if isinstance(th, CompactGridFunction):
            support = _covering_support(t_nodes, x_nodes, vals, self.support)
            return CompactGridFunction(t_nodes, x_nodes, vals, th.lipschitz_x, support=support)
        return GridFunction(t_nodes, x_nodes, vals, th.lipschitz_x)


def _row_deriv(th, i, x):
    return th.dx(np.full(np.shape(x), th.t_nodes[i]), x, side="right")


def mollify_time(theta: CompactGridFunction, kernel: Kernel = DEFAULT_TIME_KERNEL, n: int = 8) -> Mollified:
    """Average ``theta`` over the time window ``[t - 1/n, t]`` with weight ``kernel``.

    The kernel must live inside ``(0, 1)``.  Converges to the left limit
    ``theta^-`` as ``n`` grows.
    """
    if not (0.0 <= kernel.a and kernel.b <= 1.0):
        raise ValueError("time kernel must be supported in (0, 1)")
    t_a = theta.support[0]
    if t_a <= 1.0 / n:
        need = int(np.floor(1.0 / t_a)) + 1
        raise ValueError(f"support starts at t={t_a}; need n >= {need}")
    return Mollified(theta, kernel, n, "time")


def mollify_space(theta: GridFunction, kernel: Kernel = DEFAULT_SPACE_KERNEL, n: int = 8) -> Mollified:
    """Convolve ``theta`` in ``x`` with ``kernel`` scaled by ``1/n``."""
    return Mollified(theta, kernel, n, "space")


# -- bump builders ---------------------------------------------------------


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u**2)


def smooth_plateau(z, lo, hi, ramp):
    """C^2 indicator of ``[lo, hi]`` with quintic ramps of width ``ramp`` inside it."""
    z = np.asarray(z, dtype=float)
    return _smoothstep((z - lo) / ramp) * _smoothstep((hi - z) / ramp)


def plateau_bump(t_nodes, x_nodes, t_box, x_box, t_ramp=None, x_ramp=None, height=1.0):
    """Tensor-product smoothed box as a :class:`CompactGridFunction`."""
    (t0, t1), (x0, x1) = t_box, x_box
    t_ramp = (t1 - t0) / 4 if t_ramp is None else t_ramp
    x_ramp = (x1 - x0) / 4 if x_ramp is None else x_ramp

    def fn(t, x):
        return height * smooth_plateau(t, t0, t1, t_ramp) * smooth_plateau(x, x0, x1, x_ramp)

    return CompactGridFunction.from_function(fn, t_nodes, x_nodes, support=(t0, t1, x0, x1))


# -- evaluation along paths ------------------------------------------------


@dataclass(frozen=True)
class PathValues:
    """``Y_t = f(t, X_t)`` along one or more paths.

    ``nodes`` has the ensemble's shape; ``t_jump`` is ``Delta_t f`` at the nodes.
    Per recorded jump: ``y_pre = f^-(t, X_{t-})``, ``y_post = f(t, X_t)`` and the
    split ``y_post - y_pre = x_part + t_part``.
    """

    times: np.ndarray
    nodes: np.ndarray
    t_jump: np.ndarray
    jump_path: np.ndarray
    jump_time: np.ndarray
    y_pre: np.ndarray
    y_post: np.ndarray
    x_part: np.ndarray
    t_part: np.ndarray


def eval_on_ensemble(f: GridFunction, ensemble) -> PathValues:
    times = ensemble.times
    X = ensemble.paths
    tt = np.broadcast_to(times, X.shape)
    nodes = f(tt, X)
    t_jump = nodes - f(tt, X, left=True)
    j = ensemble.jumps
    y_post = f(j.time, j.post)
    mid = f(j.time, j.pre)
    y_pre = f(j.time, j.pre, left=True)
    return PathValues(times, nodes, t_jump, j.path, j.time, y_pre, y_post, y_post - mid, mid - y_pre)


def eval_on_path(f: GridFunction, ensemble, path: int) -> PathValues:
    """Evaluate ``f`` along a single path of ``ensemble``."""
    from .process_models import JumpRecords, PathEnsemble

    sub = ensemble.jumps.for_path(path)

    single = PathEnsemble(
        ensemble.partition,
        ensemble.paths[path : path + 1],
        JumpRecords(np.zeros_like(sub.path), sub.step, sub.time, sub.pre, sub.post),
        ensemble.seed,
        ensemble.model_tag,
    )
    return eval_on_ensemble(f, single)
