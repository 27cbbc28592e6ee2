"""Generator-driven one-dimensional processes and their path ensembles.

A model is described by its generator

    L_t f(x) = 1/2 sigma^2 f'' + b f' + int (f(y) - f(x) - (y - x) f'(x)) j(t, x, y) dy

with a compound-Poisson jump kernel ``j(t, x, y) = lambda(t, x) * q(y - x)`` where
``q`` is the (state independent) law of the jump size.  Because the jump part of
the generator is compensated, ``b`` is the full drift of ``X``: the Rao
decomposition ``X = M + A`` has ``A_t = int_0^t b(s, X_s) ds``.  The simulator
therefore subtracts ``lambda * E[size]`` from the Euler drift.

Paths are produced by an Euler-Maruyama scheme with left-point coefficients.
Jump times are exact (thinning of a dominating Poisson clock) and the diffusion
value just before each jump is drawn from the Brownian bridge of the step, so
the continuous part of a path does not depend on whether jumps occurred.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "ModelSpec",
    "Partition",
    "JumpRecords",
    "PathEnsemble",
    "SimulationError",
    "QuadratureError",
    "simulate",
    "drift_path",
    "generator_apply",
    "brownian_motion",
    "drifted_bm",
    "ornstein_uhlenbeck",
    "pure_drift",
    "poisson_process",
    "jump_diffusion",
    "local_vol_martingale",
    "MODEL_PRESETS",
    "make_model",
]

CHUNK_SIZE = 8192
_ENSEMBLE_MAGIC = b"GBEQENS\x00"
_FORMAT_VERSION = 1


class SimulationError(RuntimeError):
    """Raised when a path reaches a state the model cannot handle."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class QuadratureError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def _as_float_array(value, shape):
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of a one-dimensional jump diffusion.

    Parameters
    ----------
    drift, vol : callable
        ``b(t, x)`` and ``sigma(t, x)``, vectorized over ``x``.
    jump_intensity : callable, optional
        ``lambda(t, x)`` in 1/time.  ``None`` means a continuous model.
    jump_size : float or frozen scipy distribution, optional
        Law of ``X_t - X_{t-}``.  A float is a deterministic jump size.
    intensity_bound : float
        Upper bound of ``lambda`` used by the thinning sampler.
    initial : float or frozen scipy distribution
        Law of ``X_0``.
    horizon : float
        Largest time the coefficients may be evaluated at.
    tag : str
        Identifier copied into every ensemble simulated from this model.
    state_bound : float
        Simulation aborts when ``|X|`` exceeds this value.
    """

    drift: Callable
    vol: Callable
    jump_intensity: Callable | None = None
    jump_size: object = None
    intensity_bound: float = 0.0
    initial: object = 0.0
    horizon: float = 1.0
    tag: str = "custom"
    state_bound: float = 1e6
    params: dict = field(default_factory=dict, compare=False)

    @property
    def has_jumps(self) -> bool:
        return self.jump_intensity is not None

    def b(self, t, x):
        x = np.asarray(x, dtype=float)
        return _as_float_array(self.drift(t, x), x.shape)

    def sigma(self, t, x):
        x = np.asarray(x, dtype=float)
        return _as_float_array(self.vol(t, x), x.shape)

    def intensity(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.jump_intensity is None:
            return np.zeros(x.shape)
        return _as_float_array(self.jump_intensity(t, x), x.shape)

    @property
    def mean_jump(self) -> float:
        if self.jump_size is None:
            return 0.0
        if np.isscalar(self.jump_size):
            return float(self.jump_size)
        return float(self.jump_size.mean())

    def sample_jumps(self, rng, n):
        if np.isscalar(self.jump_size):
            return np.full(n, float(self.jump_size))
        return np.asarray(self.jump_size.rvs(size=n, random_state=rng), dtype=float)

    def sample_initial(self, rng, n):
        if np.isscalar(self.initial):
            return np.full(n, float(self.initial))
        return np.asarray(self.initial.rvs(size=n, random_state=rng), dtype=float)

    @property
    def initial_mean(self) -> float:
        if np.isscalar(self.initial):
            return float(self.initial)
        return float(self.initial.mean())

    @property
    def is_martingale_diffusion(self) -> bool:
        """True when the preset declares ``b = 0`` and no jumps."""
        return not self.has_jumps and bool(self.params.get("driftless", False))


@dataclass(frozen=True, eq=False)
class Partition:
    """Finite time partition ``0 = t_0 < t_1 < ... < t_N``."""

    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a partition needs at least two times")
        if times[0] != 0.0:
            raise ValueError("partition must start at 0")
        if not np.all(np.isfinite(times)) or np.any(np.diff(times) <= 0):
            raise ValueError("partition times must be finite and strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "Partition":
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())

    def coarsen(self, stride: int) -> "Partition":
        if (self.times.size - 1) % stride:
            raise ValueError(f"stride {stride} does not divide {self.times.size - 1} steps")
        return Partition(self.times[::stride])

    def nearest_index(self, t):
        """Index of the node closest to each ``t`` (ties go to the earlier node)."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t)
        k = np.clip(k, 1, self.times.size - 1)
        left = self.times[k - 1]
        right = self.times[k]
        return np.where(t - left <= right - t, k - 1, k)

    def step_index(self, t):
        """Index ``k`` with ``t`` in ``(t_k, t_{k+1}]``."""
        k = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left") - 1
        return np.clip(k, 0, self.times.size - 2)


@dataclass(frozen=True, eq=False)
class JumpRecords:
    """Flat columns of jump events, sorted by path and then time."""

    path: np.ndarray
    step: np.ndarray
    time: np.ndarray
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        for name in ("path", "step", "time", "pre", "post"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name in ("path", "step") else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls) -> "JumpRecords":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros(0), np.zeros(0))

    def __len__(self):
        return self.path.size

    @property
    def size(self) -> np.ndarray:
        return self.post - self.pre

    def for_path(self, i: int) -> "JumpRecords":
        sel = self.path == i
        return JumpRecords(self.path[sel], self.step[sel], self.time[sel], self.pre[sel], self.post[sel])


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated paths on a partition together with their jump records.

    ``paths[i, k]`` is ``X_{t_k}`` on path ``i``.  Jumps inside ``(t_k, t_{k+1}]``
    carry ``step == k``.
    """

    partition: Partition
    paths: np.ndarray
    jumps: JumpRecords
    seed: int
    model_tag: str

    def __post_init__(self):
        paths = np.array(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != len(self.partition):
            raise ValueError("paths must have shape (n_paths, len(partition))")
        if not np.all(np.isfinite(paths)):
            raise ValueError("path values must be finite")
        paths.setflags(write=False)
        object.__setattr__(self, "paths", paths)
        j = self.jumps
        if len(j):
            if np.any(j.time <= 0) or np.any(j.time > self.partition.horizon):
                raise ValueError("jump times must lie in (0, t_N]")
            if np.any(j.pre == j.post):
                raise ValueError("recorded jumps must change the state")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.partition.times

    def at(self, t) -> np.ndarray:
        """Path values at the partition node nearest ``t``."""
        return self.paths[:, int(self.partition.nearest_index(t))]

    def jump_increments(self) -> np.ndarray:
        """Cumulative jump sum at each node, shape ``(n_paths, n_nodes)``."""
        out = np.zeros_like(self.paths)
        if len(self.jumps):
            np.add.at(out, (self.jumps.path, self.jumps.step + 1), self.jumps.size)
            np.cumsum(out, axis=1, out=out)
        return out

    def continuous_part(self) -> np.ndarray:
        return self.paths - self.jump_increments()

    def coarsen(self, stride: int) -> "PathEnsemble":
        part = self.partition.coarsen(stride)
        j = self.jumps
        jumps = JumpRecords(j.path, j.step // stride, j.time, j.pre, j.post)
        return PathEnsemble(part, self.paths[:, ::stride], jumps, self.seed, self.model_tag)

    def subset(self, n: int) -> "PathEnsemble":
        sel = self.jumps.path < n
        j = self.jumps
        jumps = JumpRecords(j.path[sel], j.step[sel], j.time[sel], j.pre[sel], j.post[sel])
        return PathEnsemble(self.partition, self.paths[:n], jumps, self.seed, self.model_tag)

    def jump_counts(self) -> np.ndarray:
        return np.bincount(self.jumps.path, minlength=self.n_paths)

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = {
            "seed": int(self.seed),
            "model_tag": self.model_tag,
            "n_paths": self.n_paths,
            "n_nodes": len(self.partition),
            "n_jumps": len(self.jumps),
        }
        hdr = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(_ENSEMBLE_MAGIC)
        buf.write(struct.pack("<BI", _FORMAT_VERSION, len(hdr)))
        buf.write(hdr)
        buf.write(self.partition.times.astype("<f8").tobytes())
        buf.write(self.paths.astype("<f8").tobytes())
        j = self.jumps
        buf.write(j.path.astype("<i8").tobytes())
        buf.write(j.step.astype("<i8").tobytes())
        for col in (j.time, j.pre, j.post):
            buf.write(col.astype("<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PathEnsemble":
        if data[:8] != _ENSEMBLE_MAGIC:
            raise ValueError("not an ensemble file (bad magic)")
        version, hlen = struct.unpack_from("<BI", data, 8)
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported ensemble format version {version}")
        pos = 13
        header = json.loads(data[pos : pos + hlen])
        pos += hlen

        def take(dtype, count):
            nonlocal pos
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr.astype(np.int64 if dtype == "<i8" else float)

        n, m, nj = header["n_paths"], header["n_nodes"], header["n_jumps"]
        times = take("<f8", m)
        paths = take("<f8", n * m).reshape(n, m)
        jumps = JumpRecords(take("<i8", nj), take("<i8", nj), take("<f8", nj), take("<f8", nj), take("<f8", nj))
        return cls(Partition(times), paths, jumps, header["seed"], header["model_tag"])

    def save(self, path):
        from .io_utils import atomic_write_bytes

        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        """Long-format CSV: one row per node and one per jump."""
        from .io_utils import atomic_write_text

        lines = ["kind,path,t,x_pre,x"]
        t = self.partition.times
        for i in range(self.n_paths):
            for k in range(t.size):
                v = repr(float(self.paths[i, k]))
                lines.append(f"node,{i},{t[k]!r},{v},{v}")
        j = self.jumps
        for p, tj, a, b in zip(j.path, j.time, j.pre, j.post):
            lines.append(f"jump,{p},{tj!r},{a!r},{b!r}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def _check_finite(name, values, t, x):
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SimulationError(f"non-finite {name} at t={t!r}, x={x[i]!r}", t=t, x=float(x[i]))


def _simulate_chunk(model, times, n, seed, chunk):
    ss_diff = np.random.SeedSequence(seed, spawn_key=(chunk, 0))
    ss_jump = np.random.SeedSequence(seed, spawn_key=(chunk, 1))
    ss_init = np.random.SeedSequence(seed, spawn_key=(chunk, 2))
    rng_d = np.random.Generator(np.random.Philox(ss_diff))
    rng_j = np.random.Generator(np.random.Philox(ss_jump))
    rng_0 = np.random.Generator(np.random.Philox(ss_init))

    n_steps = times.size - 1
    out = np.empty((CHUNK_SIZE, times.size))
    x = model.sample_initial(rng_0, CHUNK_SIZE)
    out[:, 0] = x
    rec = []
    bound = float(model.intensity_bound)
    kappa = model.mean_jump
    for k in range(n_steps):
        t, h = times[k], times[k + 1] - times[k]
        b = model.b(t, x)
        s = model.sigma(t, x)
        _check_finite("drift", b, t, x)
        _check_finite("volatility", s, t, x)
        if np.any(s < 0):
            i = int(np.argmax(s < 0))
            raise SimulationError(f"negative volatility at t={t!r}, x={x[i]!r}", t=t, x=float(x[i]))
        dw = np.sqrt(h) * rng_d.standard_normal(CHUNK_SIZE)
        if model.has_jumps:
            lam = model.intensity(t, x)
            _check_finite("jump intensity", lam, t, x)
            drift = b - lam * kappa
            jump_total = np.zeros(CHUNK_SIZE)
            if bound > 0:
                clock = np.zeros(CHUNK_SIZE)
                # Brownian value and clock at the latest accepted jump of the step
                w_last = np.zeros(CHUNK_SIZE)
                c_last = np.zeros(CHUNK_SIZE)
                active = np.ones(CHUNK_SIZE, dtype=bool)
                while True:
                    idx = np.flatnonzero(active)
                    if idx.size == 0:
                        break
                    clock[idx] += rng_j.exponential(1.0 / bound, idx.size)
                    inside = clock[idx] < h
                    active[idx[~inside]] = False
                    idx = idx[inside]
                    if idx.size == 0:
                        break
                    tau = t + clock[idx]
                    xj = x[idx] + jump_total[idx]
                    lam_tau = model.intensity(tau, xj)
                    over = lam_tau > bound * (1 + 1e-12)
                    if np.any(over):
                        i = int(np.argmax(over))
                        raise SimulationError(
                            f"jump intensity {lam_tau[i]!r} exceeds bound {bound!r} at t={tau[i]!r}",
                            t=float(tau[i]),
                            x=float(xj[i]),
                        )
                    acc = rng_j.uniform(size=idx.size) * bound < lam_tau
                    idx = idx[acc]
                    if idx.size == 0:
                        continue
                    c = clock[idx]
                    c0 = c_last[idx]
                    w0 = w_last[idx]
                    mean = w0 + (c - c0) / (h - c0) * (dw[idx] - w0)
                    var = (c - c0) * (h - c) / (h - c0)
                    w_tau = mean + np.sqrt(np.maximum(var, 0.0)) * rng_j.standard_normal(idx.size)
                    pre = x[idx] + drift[idx] * c + s[idx] * w_tau + jump_total[idx]
                    size = model.sample_jumps(rng_j, idx.size)
                    nz = size != 0.0
                    for i, tt, a, z in zip(idx[nz], (t + c)[nz], pre[nz], size[nz]):
                        rec.append((i, k, tt, a, a + z))
                    jump_total[idx] += size
                    w_last[idx] = w_tau
                    c_last[idx] = c
            x = x + drift * h + s * dw + jump_total
        else:
            x = x + b * h + s * dw
        if np.any(np.abs(x) > model.state_bound):
            i = int(np.argmax(np.abs(x) > model.state_bound))
            raise SimulationError(
                f"state bound {model.state_bound!r} exceeded at t={times[k + 1]!r}",
                t=float(times[k + 1]),
                x=float(x[i]),
            )
        out[:, k + 1] = x
    return out[:n], rec


def simulate(model: ModelSpec, partition: Partition, n_paths: int, seed: int) -> PathEnsemble:
    """Simulate ``n_paths`` paths of ``model`` on ``partition``.

    Paths are generated in fixed chunks of ``CHUNK_SIZE`` with independent
    Philox streams keyed by ``(seed, chunk)``, so path ``i`` does not depend on
    ``n_paths`` and chunks could be evaluated in any order.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if partition.horizon > model.horizon * (1 + 1e-12):
        raise ValueError(f"partition ends at {partition.horizon} beyond model horizon {model.horizon}")
    times = partition.times
    blocks, records = [], []
    for chunk in range((n_paths + CHUNK_SIZE - 1) // CHUNK_SIZE):
        n = min(CHUNK_SIZE, n_paths - chunk * CHUNK_SIZE)
        out, rec = _simulate_chunk(model, times, n, seed, chunk)
        blocks.append(out)
        records.extend((chunk * CHUNK_SIZE + i, k, t, a, b) for i, k, t, a, b in rec if i < n)
    paths = np.concatenate(blocks, axis=0)
    if records:
        cols = list(zip(*records))
        order = np.lexsort((np.asarray(cols[2]), np.asarray(cols[0])))
        jumps = JumpRecords(*(np.asarray(c)[order] for c in cols))
    else:
        jumps = JumpRecords.empty()
    return PathEnsemble(partition, paths, jumps, int(seed), model.tag)


def drift_path(model: ModelSpec, ensemble: PathEnsemble) -> np.ndarray:
    """Drift ``A_t = int_0^t b(s, X_s) ds`` at the nodes, by left-point quadrature.

    Returns an array of shape ``(n_paths, n_nodes)`` with ``A_0 = 0``.
    """
    if ensemble.model_tag != model.tag:
        raise ValueError(f"ensemble was simulated from {ensemble.model_tag!r}, not {model.tag!r}")
    t = ensemble.times
    inc = np.empty((ensemble.n_paths, t.size - 1))
    for k in range(t.size - 1):
        inc[:, k] = model.b(t[k], ensemble.paths[:, k]) * (t[k + 1] - t[k])
    out = np.zeros_like(ensemble.paths)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def generator_apply(model, f, fprime, fsecond, t, x, jump_range=None, tol=1e-10, full_output=False):
    """Apply the time-``t`` generator of ``model`` to ``f`` at the level ``x``.

    ``f``, ``fprime`` and ``fsecond`` are callables of ``x``.  For a continuous
    jump-size law the jump integral is computed by adaptive quadrature over
    ``jump_range`` (default: the 1e-12 and 1 - 1e-12 quantiles of the size law);
    the mass left outside that range is reported as ``tail_mass`` when
    ``full_output`` is true.
    """
    x = float(x)
    d1, d2 = float(fprime(x)), float(fsecond(x))
    value = 0.5 * float(model.sigma(t, x)) ** 2 * d2 + float(model.b(t, x)) * d1
    info = {"jump": 0.0, "tail_mass": 0.0, "abserr": 0.0}
    if model.has_jumps:
        lam = float(model.intensity(t, x))
        fx = float(f(x))

        def integrand(z):
            return f(x + z) - fx - z * d1

        law = model.jump_size
        if np.isscalar(law):
            jump = lam * float(integrand(float(law)))
        else:
            lo, hi = jump_range if jump_range is not None else law.ppf([1e-12, 1 - 1e-12])
            val, err, *rest = integrate.quad(
                lambda z: integrand(z) * law.pdf(z), lo, hi, epsabs=tol, epsrel=tol, limit=200, full_output=1
            )
            if len(rest) > 1 and err > max(tol, tol * abs(val)) * 1e3:
                raise QuadratureError(f"jump integral did not converge: {rest[1]}", residual=err)
            jump = lam * val
            info["abserr"] = lam * err
            info["tail_mass"] = float(law.cdf(lo) + law.sf(hi))
        info["jump"] = jump
        value += jump
    return (value, info) if full_output else value


# -- presets ---------------------------------------------------------------


def _const(c):
    return lambda t, x: np.full(np.shape(x), float(c))


def brownian_motion(sigma=1.0, x0=0.0, horizon=1.0) -> ModelSpec:
    return ModelSpec(
        _const(0.0), _const(sigma), initial=x0, horizon=horizon,
        tag=f"bm(sigma={sigma},x0={x0})", params={"driftless": True, "sigma": sigma, "x0": x0},
    )


def drifted_bm(b=1.0, sigma=1.0, x0=0.0, horizon=1.0) -> ModelSpec:
    return ModelSpec(
        _const(b), _const(sigma), initial=x0, horizon=horizon,
        tag=f"drifted_bm(b={b},sigma={sigma},x0={x0})", params={"b": b, "sigma": sigma, "x0": x0},
    )


def ornstein_uhlenbeck(kappa=1.0, sigma=1.0, x0=0.0, horizon=1.0) -> ModelSpec:
    return ModelSpec(
        lambda t, x: -kappa * np.asarray(x, dtype=float), _const(sigma), initial=x0, horizon=horizon,
        tag=f"ou(kappa={kappa},sigma={sigma},x0={x0})", params={"kappa": kappa, "sigma": sigma, "x0": x0},
    )


def pure_drift(b=1.0, x0=0.0, horizon=1.0) -> ModelSpec:
    return ModelSpec(
        _const(b), _const(0.0), initial=x0, horizon=horizon,
        tag=f"pure_drift(b={b},x0={x0})", params={"b": b, "x0": x0},
    )


def poisson_process(rate=1.0, size=1.0, horizon=1.0) -> ModelSpec:
    """Uncompensated Poisson counting process scaled by ``size``."""
    return ModelSpec(
        _const(rate * size), _const(0.0), jump_intensity=_const(rate), jump_size=size,
        intensity_bound=rate, horizon=horizon,
        tag=f"poisson(rate={rate},size={size})", params={"rate": rate, "size": size},
    )


def jump_diffusion(sigma=1.0, rate=1.0, size=0.5, b=None, x0=0.0, horizon=1.0) -> ModelSpec:
    """Brownian motion plus compound Poisson jumps of fixed ``size``.

    With ``b=None`` the jumps are left uncompensated, i.e. the drift of ``X``
    is ``rate * size``.
    """
    drift = rate * size if b is None else b
    return ModelSpec(
        _const(drift), _const(sigma), jump_intensity=_const(rate), jump_size=size,
        intensity_bound=rate, initial=x0, horizon=horizon,
        tag=f"jump_diffusion(sigma={sigma},rate={rate},size={size},b={drift},x0={x0})",
        params={"sigma": sigma, "rate": rate, "size": size, "b": drift, "x0": x0},
    )


def local_vol_martingale(base=0.2, amplitude=0.1, x0=0.0, horizon=1.0) -> ModelSpec:
    """Driftless diffusion with ``sigma(x) = base + amplitude * tanh(x)``."""
    return ModelSpec(
        _const(0.0), lambda t, x: base + amplitude * np.tanh(np.asarray(x, dtype=float)),
        initial=x0, horizon=horizon,
        tag=f"local_vol(base={base},amplitude={amplitude},x0={x0})",
        params={"driftless": True, "base": base, "amplitude": amplitude, "x0": x0},
    )


MODEL_PRESETS = {
    "bm": brownian_motion,
    "drifted_bm": drifted_bm,
    "ou": ornstein_uhlenbeck,
    "pure_drift": pure_drift,
    "poisson": poisson_process,
    "jump_diffusion": jump_diffusion,
    "local_vol": local_vol_martingale,
}


def make_model(name: str, **params) -> ModelSpec:
    try:
        factory = MODEL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_PRESETS)}") from None
    return factory(**params)
