"""Static SVG figures for experiment reports.

The output is byte-stable across runs: the SVG date stamp is dropped and the
element-id salt is fixed, so an unchanged figure hashes the same.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io_utils import atomic_write_text  # noqa: E402

_RC = {"svg.hashsalt": "genbackward", "svg.fonttype": "path", "font.size": 9}


def _to_svg(fig, config_hash=None) -> str:
    buf = io.StringIO()
    meta = {"Date": None, "Creator": "genbackward"}
    if config_hash:
        meta["Description"] = f"config_hash={config_hash}"
    with plt.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata=meta)
    plt.close(fig)
    return buf.getvalue()


def heatmap(t, x, z, title="", config_hash=None) -> str:
    """Signed values on a (t, x) grid, color scale symmetric about zero."""
    z = np.asarray(z, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        lim = float(np.nanmax(np.abs(z))) or 1.0
        mesh = ax.pcolormesh(np.asarray(x), np.asarray(t), z, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="nearest")
        fig.colorbar(mesh, ax=ax)
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        ax.set_title(title)
        fig.tight_layout()
    return _to_svg(fig, config_hash)


def loglog(h, err, title="", config_hash=None) -> str:
    """Error against mesh on log axes with the fitted slope in the legend."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ok = (h > 0) & (err > 0)
        label = "error"
        if ok.sum() >= 2:
            slope = np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0]
            label = f"error (slope {slope:.2f})"
        ax.loglog(h[ok], err[ok], "o-", label=label)
        ax.set_xlabel("mesh")
        ax.set_ylabel("error")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
    return _to_svg(fig, config_hash)


def cdf_surface(z, title="", config_hash=None) -> str:
    """Gap between two quadrant CDFs on the quantile grid."""
    z = np.asarray(z, dtype=float)
    n, m = z.shape
    return heatmap(np.arange(n), np.arange(m), z, title=title, config_hash=config_hash)


def render(spec, config_hash=None) -> str:
    """Render a figure description from :attr:`ExperimentReport.figures`."""
    kind = spec["kind"]
    if kind == "heatmap":
        return heatmap(spec["t"], spec["x"], spec["z"], spec.get("title", ""), config_hash)
    if kind == "loglog":
        return loglog(spec["h"], spec["err"], spec.get("title", ""), config_hash)
    if kind == "cdf_surface":
        return cdf_surface(spec["z"], spec.get("title", ""), config_hash)
    raise ValueError(f"unknown figure kind {kind!r}")


def write_figures(report, directory, prefix=""):
    """Write every figure of ``report`` as ``<prefix><name>.svg``; returns the paths."""
    import os

    paths = []
    for name in sorted(report.figures):
        p = os.path.join(directory, f"{prefix}{name}.svg")
        atomic_write_text(p, render(report.figures[name], report.config_hash))
        paths.append(p)
    return paths
