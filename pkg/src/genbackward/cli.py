"""Command-line entry point.

Subcommands::

    genbackward simulate --model drifted_bm --paths 1000 --seed 7
    genbackward surface  --source ensemble
    genbackward measure  --f '{"kind": "bump"}' --theta '{"t": [0.2, 0.8], "x": [-1, 1]}'
    genbackward verify   --suite occupation --model bm --paths 100000 --seed 7
    genbackward report

Every command accepts ``--config FILE`` (a JSON run configuration, see
``RunConfig``); flags override fields of the file.  Artifacts land in the
output directory (``--output``, else the ``GENBACKWARD_OUTPUT`` environment
variable, else ``output_dir`` of the config) and every one of them carries
the hash of the configuration that produced it.

Exit status: 0 when everything ran and every check passed, 1 when a check
failed, 2 for invalid configuration or missing inputs.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from . import function_space as fs
from . import marginals as mg
from . import measures as ms
from . import plots
from . import process_models as pm
from . import stochastic_calculus as sc
from . import verifier as vf
from .io_utils import array_hash, atomic_write_text, config_hash, dumps

OUTPUT_ENV = "GENBACKWARD_OUTPUT"
CONFIG_SCHEMA = 1


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


class MissingInput(FileNotFoundError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on.  Serializes to the JSON config format.

    ``suite_config`` maps suite names to overrides of their defaults (grids,
    path counts, tolerance coefficients).
    """

    model: dict = field(default_factory=lambda: {"name": "bm", "params": {}})
    n_paths: int = 10_000
    seed: int = 7
    partition: dict = field(default_factory=lambda: {"horizon": 1.0, "n_steps": 64})
    x_grid: list = field(default_factory=lambda: [-4.0, 5.0, 91])
    f: dict = field(default_factory=lambda: {"kind": "bump", "center": 0.3, "half_width": 2.0, "slope": 1.0})
    theta: dict = field(default_factory=lambda: {"t": [0.2, 0.8], "x": [-1.0, 1.5]})
    source: str = "ensemble"
    suites: list = field(default_factory=lambda: sorted(vf.SUITES))
    suite_config: dict = field(default_factory=dict)
    output_dir: str = "genbackward-out"
    plots: bool = True
    schema: int = CONFIG_SCHEMA

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError([("<root>", "configuration must be a JSON object")])
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([(k, "unknown field") for k in unknown])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def validate(self):
        p = []
        if self.schema != CONFIG_SCHEMA:
            p.append(("schema", f"expected {CONFIG_SCHEMA}, got {self.schema!r}"))
        if not isinstance(self.n_paths, int) or isinstance(self.n_paths, bool) or self.n_paths < 1:
            p.append(("n_paths", f"must be a positive integer, got {self.n_paths!r}"))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            p.append(("seed", f"must be a non-negative integer, got {self.seed!r}"))
        if not isinstance(self.model, dict) or self.model.get("name") not in pm.MODEL_PRESETS:
            p.append(("model.name", f"must be one of {sorted(pm.MODEL_PRESETS)}"))
        else:
            try:
                pm.make_model(self.model["name"], **self.model.get("params", {}))
            except (TypeError, ValueError) as exc:
                p.append(("model.params", str(exc)))
        part = self.partition if isinstance(self.partition, dict) else {}
        if not isinstance(part.get("n_steps"), int) or part.get("n_steps", 0) < 1:
            p.append(("partition.n_steps", "must be a positive integer"))
        if not isinstance(part.get("horizon"), (int, float)) or not part.get("horizon", 0) > 0:
            p.append(("partition.horizon", "must be a positive number"))
        xg = self.x_grid
        if not (isinstance(xg, list) and len(xg) == 3 and xg[0] < xg[1] and int(xg[2]) >= 3):
            p.append(("x_grid", "must be [lo, hi, n] with lo < hi and n >= 3"))
        if self.source not in ("ensemble", "closed_form", "pde"):
            p.append(("source", "must be ensemble, closed_form or pde"))
        bad = [s for s in self.suites if s not in vf.SUITES]
        if bad or not self.suites:
            p.append(("suites", f"unknown {bad}; choose from {sorted(vf.SUITES)}"))
        for name, over in self.suite_config.items():
            if name not in vf.SUITES:
                p.append((f"suite_config.{name}", "unknown suite"))
                continue
            try:
                vf._merge(vf.SUITES[name][1], over)
            except ValueError as exc:
                p.append((f"suite_config.{name}", str(exc)))
        if not isinstance(self.theta, dict) or len(self.theta.get("t", [])) != 2 or len(self.theta.get("x", [])) != 2:
            p.append(("theta", "must be {'t': [a, b], 'x': [c, d]}"))
        if p:
            raise ConfigError(p)

    def build_model(self):
        return pm.make_model(self.model["name"], **self.model.get("params", {}))

    def build_partition(self):
        return pm.Partition.uniform(float(self.partition["horizon"]), int(self.partition["n_steps"]))

    def x_nodes(self):
        return np.linspace(float(self.x_grid[0]), float(self.x_grid[1]), int(self.x_grid[2]))


def _parse_json_arg(name, text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(name, f"not valid JSON ({exc.msg})")]) from None


def _param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        if not os.path.exists(args.config):
            raise MissingInput(f"configuration file {args.config} does not exist")
        with open(args.config) as fh:
            data = _parse_json_arg("--config", fh.read())
        if not isinstance(data, dict):
            raise ConfigError([("<root>", "configuration must be a JSON object")])
    if getattr(args, "model", None):
        data["model"] = {"name": args.model, "params": dict(args.param or [])}
    elif getattr(args, "param", None):
        data.setdefault("model", {"name": "bm", "params": {}})
        data["model"] = {**data["model"], "params": {**data["model"].get("params", {}), **dict(args.param)}}
    for flag, key in (("paths", "n_paths"), ("seed", "seed"), ("source", "source")):
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    if getattr(args, "steps", None) is not None:
        data["partition"] = {**data.get("partition", {"horizon": 1.0}), "n_steps": args.steps}
    if getattr(args, "f", None):
        data["f"] = _parse_json_arg("--f", args.f)
    if getattr(args, "theta", None):
        data["theta"] = _parse_json_arg("--theta", args.theta)
    if getattr(args, "no_plots", False):
        data["plots"] = False
    return RunConfig.from_dict(data)


def output_dir(args, cfg: RunConfig) -> str:
    return args.output or os.environ.get(OUTPUT_ENV) or cfg.output_dir


def _write_json(path, obj):
    atomic_write_text(path, dumps(obj) + "\n")


def _sidecar(cfg, kind, **extra):
    return {"artifact": kind, "config": cfg.to_dict(), "config_hash": cfg.hash, "version": __version__, **extra}


def _read_sidecar(path):
    if not os.path.exists(path):
        raise MissingInput(f"expected input artifact {path} (run the producing subcommand first)")
    with open(path) as fh:
        meta = json.load(fh)
    if config_hash(meta.get("config")) != meta.get("config_hash"):
        raise ConfigError([(path, "config_hash does not match the stored configuration")])
    return meta


# -- subcommands -----------------------------------------------------------------------


def cmd_simulate(args, cfg, out):
    ens = pm.simulate(cfg.build_model(), cfg.build_partition(), cfg.n_paths, cfg.seed)
    ens.save(os.path.join(out, "ensemble.bin"))
    if args.csv:
        ens.to_csv(os.path.join(out, "ensemble.csv"))
    _write_json(os.path.join(out, "ensemble.json"),
                _sidecar(cfg, "ensemble", file="ensemble.bin", data_hash=array_hash(ens.times, ens.paths),
                         n_jumps=len(ens.jumps), model_tag=ens.model_tag))
    print(f"wrote {len(ens.times) - 1}-step ensemble of {ens.n_paths} paths to {out}")
    return 0


def _load_ensemble(out):
    meta = _read_sidecar(os.path.join(out, "ensemble.json"))
    path = os.path.join(out, meta["file"])
    if not os.path.exists(path):
        raise MissingInput(f"expected input artifact {path}")
    return pm.PathEnsemble.load(path), RunConfig.from_dict(meta["config"])


def _surface(cfg, out):
    x = cfg.x_nodes()
    if cfg.source == "ensemble":
        ens, ecfg = _load_ensemble(out)
        return mg.estimate_call_surface(ens, x), ecfg
    model = cfg.build_model()
    t = cfg.build_partition().times
    if cfg.source == "closed_form":
        if model.tag.split("(")[0] != "bm":
            raise ConfigError([("source", "closed_form is available for model bm only")])
        s = float(model.params.get("sigma", 1.0))
        x0 = float(model.params.get("x0", 0.0))
        return mg.call_surface_from_function(lambda tt, xx: mg.gaussian_call(tt, xx, x0, s), t, x), cfg
    return mg.call_surface_forward_pde(model, x, t), cfg


def cmd_surface(args, cfg, out):
    C, used = _surface(cfg, out)
    C.grid.save(os.path.join(out, "surface.grid"))
    C.to_csv(os.path.join(out, "surface.csv"))
    _write_json(os.path.join(out, "surface.json"),
                _sidecar(used, "call_surface", file="surface.grid", source=cfg.source,
                         data_hash=array_hash(C.t_nodes, C.x_nodes, C.values),
                         convexity_defect=C.convexity_defect(), projection_distance=C.projection_distance))
    print(f"wrote {cfg.source} call surface on {C.values.shape[0]}x{C.values.shape[1]} nodes to {out}")
    return 0


def cmd_measure(args, cfg, out):
    ens, ecfg = _load_ensemble(out)
    model = ecfg.build_model()
    x = cfg.x_nodes()
    fn = vf.smooth_function(cfg.f)
    F = fs.GridFunction.from_function(fn.f, ens.times, x)
    TH = fs.plateau_bump(ens.times, x, tuple(cfg.theta["t"]), tuple(cfg.theta["x"]))
    lo, hi = TH.support[2], TH.support[3]
    pad = max(1.0, hi - lo)
    C = mg.estimate_call_surface(ens, np.linspace(lo - pad, hi + pad, 2 * x.size), project=False)
    grids = {"x_grid": cfg.x_grid, "n_steps": len(ens.times) - 1}
    inputs = {"f": F, "theta": TH, "C": C, "ensemble": ens}
    recs = [
        ms.functional_record("mu_tilde", inputs, ms.mu_tilde(F, TH, C, ens, model), grids),
        ms.functional_record("mu_bilinear", inputs, ms.mu_bilinear(F, C.raw_grid(), TH), grids),
        ms.functional_record("ito_drift", {"theta": TH, "ensemble": ens},
                             sc.ito_drift(fn, ens, model).functional(TH), grids),
    ]
    _write_json(os.path.join(out, "measure.json"),
                _sidecar(cfg, "functionals", ensemble_config_hash=ecfg.hash, records=recs))
    for r in recs:
        print(f"{r['functional']}: {r['result']}")
    return 0


def _suite_overrides(args, cfg, name):
    over = dict(cfg.suite_config.get(name, {}))
    defaults = vf.SUITES[name][1]
    problems = []
    explicit = {k for k in ("model", "paths", "seed") if getattr(args, k, None) is not None}
    if "paths" in explicit:
        key = "n_paths" if "n_paths" in defaults else "n" if "n" in defaults else None
        if key is None:
            problems.append(("--paths", f"suite {name} does not simulate paths"))
        else:
            over[key] = cfg.n_paths
    if "seed" in explicit:
        if "seed" in defaults:
            over["seed"] = cfg.seed
        elif "seeds" in defaults:
            over["seeds"] = [cfg.seed, cfg.seed + 1]
        else:
            problems.append(("--seed", f"suite {name} is deterministic"))
    if "model" in explicit:
        if "models" in defaults:
            over["models"] = [cfg.model]
        elif "model" in defaults:
            over["model"] = cfg.model
        else:
            problems.append(("--model", f"suite {name} fixes its own models"))
    for k, v in args.set or []:
        over[k] = v
    try:
        vf._merge(defaults, over)
    except ValueError as exc:
        raise ConfigError([(f"suite_config.{name}", str(exc))]) from None
    return over, problems


def cmd_verify(args, cfg, out):
    names = sorted(vf.SUITES) if args.suite == ["all"] else (args.suite or cfg.suites)
    bad = [n for n in names if n not in vf.SUITES]
    if bad:
        raise ConfigError([("--suite", f"unknown {bad}; choose from {sorted(vf.SUITES)} or all")])
    overrides, rejected = {}, []
    for n in names:
        overrides[n], probs = _suite_overrides(args, cfg, n)
        rejected.append(probs)
    # a flag is an error only if none of the selected suites can use it
    flags = {k for probs in rejected for k, _ in probs}
    unusable = [(k, m) for probs in rejected for k, m in probs
                if all(any(k == j for j, _ in other) for other in rejected)]
    if unusable and flags:
        seen = set()
        raise ConfigError([(k, m) for k, m in unusable if not (k in seen or seen.add(k))])
    status = 0
    rdir = os.path.join(out, "reports")
    for n in names:
        rep = vf.run_suite(n, overrides[n])
        _write_json(os.path.join(rdir, f"{n}.json"), {**rep.as_dict(), "suite": n})
        if cfg.plots:
            plots.write_figures(rep, rdir, prefix=f"{n}__")
        for line in rep.lines():
            print(line)
        if not rep.passed:
            status = 1
    return status


def cmd_report(args, cfg, out):
    rdir = os.path.join(out, "reports")
    found = {}
    problems = []
    for p in sorted(glob.glob(os.path.join(rdir, "*.json"))):
        with open(p) as fh:
            rep = json.load(fh)
        h = config_hash({"experiment": rep.get("experiment"), "config": rep.get("config")})
        if h != rep.get("config_hash"):
            problems.append((p, f"config_hash {rep.get('config_hash')} does not match its configuration ({h})"))
            continue
        for svg in sorted(glob.glob(os.path.join(rdir, f"{rep['suite']}__*.svg"))):
            with open(svg) as fh:
                if f"config_hash={h}" not in fh.read():
                    problems.append((svg, f"figure does not carry config_hash {h}"))
        found[rep["suite"]] = rep
    if problems:
        raise ConfigError(problems)
    expected = args.suite or cfg.suites
    lines, summary, status = [], {}, 0
    for n in expected:
        rep = found.get(n)
        if rep is None:
            lines.append(f"MISSING  {n}")
            summary[n] = {"verdict": "MISSING"}
            status = 1
            continue
        fails = [c["name"] for c in rep["checks"] if c["verdict"] != "PASS"]
        lines.append(f"{rep['verdict']:7}  {n} ({len(rep['checks'])} checks, config {rep['config_hash']})"
                     + (f" failed: {', '.join(fails)}" if fails else ""))
        summary[n] = {"verdict": rep["verdict"], "config_hash": rep["config_hash"], "failed": fails}
        if rep["verdict"] != "PASS":
            status = 1
    text = "\n".join(lines) + "\n"
    atomic_write_text(os.path.join(out, "report.txt"), text)
    _write_json(os.path.join(out, "report.json"), {"suites": summary, "verdict": "PASS" if status == 0 else "FAIL"})
    sys.stdout.write(text)
    return status


COMMANDS = {"simulate": cmd_simulate, "surface": cmd_surface, "measure": cmd_measure,
            "verify": cmd_verify, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="genbackward", description="Desk-scale backward-equation laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--model", choices=sorted(pm.MODEL_PRESETS))
        p.add_argument("--param", action="append", type=_param, metavar="KEY=VALUE", help="model parameter")
        p.add_argument("--paths", type=int)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", parents=[common], help="simulate an ensemble")
    model_flags(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--csv", action="store_true", help="also write a long-format CSV")
    p = sub.add_parser("surface", parents=[common], help="build a call surface")
    p.add_argument("--source", choices=["ensemble", "closed_form", "pde"])
    p.add_argument("--model", choices=sorted(pm.MODEL_PRESETS))
    p.add_argument("--param", action="append", type=_param, metavar="KEY=VALUE")
    p.add_argument("--steps", type=int)
    p = sub.add_parser("measure", parents=[common], help="evaluate functionals on the saved ensemble")
    p.add_argument("--f", help="JSON spec of a C^2 function")
    p.add_argument("--theta", help='JSON box {"t": [a, b], "x": [c, d]}')
    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("--suite", action="append", help=f"one of {sorted(vf.SUITES)} or all (repeatable)")
    model_flags(p)
    p.add_argument("--set", action="append", type=_param, metavar="KEY=JSON", help="suite config override")
    p.add_argument("--no-plots", action="store_true")
    p = sub.add_parser("report", parents=[common], help="aggregate saved reports")
    p.add_argument("--suite", action="append", help="suites expected in the report (default: config suites)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        out = output_dir(args, cfg)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        for k, m in exc.problems:
            print(f"error: {k}: {m}", file=sys.stderr)
        return 2
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
