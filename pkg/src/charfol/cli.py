"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 only degenerate
characteristic points found, 3 numerical failure (including a convergence
order below 0.5).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import diffusion as D
from . import foliation as F
from . import jets as J
from . import models as M
from . import operators as O
from . import schemas
from .artifacts import RunOutput, dump_json
from .expr import ExpressionError, compile_expression
from .geometry import Chart, ContactStructure, GeometryError, OneForm, ScalarField, VectorField

log = logging.getLogger("charfol")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NUMERICAL = 0, 1, 2, 3

NUMERICAL_ERRORS = (GeometryError, F.ProjectionError, F.CharacteristicPointError,
                    F.NotCharacteristicError, F.InsufficientSamplesError, D.SimulationError,
                    J.DomainError, ArithmeticError, np.linalg.LinAlgError)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# configuration ------------------------------------------------------------------

def _eps_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: out)")
    common.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    common.add_argument("--threads", type=int, help="worker threads (capped by FOLIATION_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")

    surf = argparse.ArgumentParser(add_help=False)
    surf.add_argument("--surface", help="built-in surface name (see list-models)")
    surf.add_argument("--a", type=float)
    surf.add_argument("--c", type=float)
    surf.add_argument("--k", type=float)
    surf.add_argument("--kappa", type=float)

    p = _Parser(prog="charfol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("classify", parents=[common, surf], help="find and classify characteristic points")

    t = sub.add_parser("trace", parents=[common, surf], help="trace leaves of the foliation")
    t.add_argument("--n-leaves", type=int)
    t.add_argument("--step", type=float)
    t.add_argument("--max-length", type=float)

    for name, helptext in (("ops", "operator convergence and curvature"),
                           ("curvature", "curvature and Riccati residuals")):
        o = sub.add_parser(name, parents=[common, surf], help=helptext)
        o.add_argument("--eps", type=_eps_list, help="comma-separated decreasing eps values")
        o.add_argument("--n-points", type=int)

    s = sub.add_parser("sim", parents=[common, surf], help="Monte Carlo of a leaf diffusion")
    s.add_argument("--process", choices=[k.value for k in D.ProcessKind])
    s.add_argument("--order", type=float, help="order of a plain Bessel process")
    s.add_argument("--leaf")
    s.add_argument("--leaf-length", type=float)
    s.add_argument("--s0", type=float)
    s.add_argument("--paths", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-max", type=float)
    s.add_argument("--kill-radius", type=float)

    b = sub.add_parser("boundary", parents=[common, surf], help="accessibility of a characteristic point")
    b.add_argument("--leaf")
    b.add_argument("--leaf-length", type=float)

    sub.add_parser("list-models", parents=[common], help="print the surface registry")
    return p


_SECTION_FLAGS = {
    "trace": {"n_leaves": "n_leaves", "step": "step", "max_length": "max_length"},
    "ops": {"eps": "eps", "n_points": "n_points"},
    "curvature": {"eps": "eps", "n_points": "curvature_points"},
    "sim": {"process": "process", "order": "order", "leaf": "leaf", "leaf_length": "leaf_length",
            "s0": "s0", "paths": "paths", "dt": "dt", "t_max": "t_max", "kill_radius": "kill_radius",
            "k": "k"},
    "boundary": {"leaf": "leaf", "leaf_length": "leaf_length"},
}


def load_config(args) -> dict:
    """Merge the JSON file with command-line overrides and validate the result."""
    cfg: dict = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("master_seed", "threads"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if args.out is not None:
        cfg["output_dir"] = str(args.out)
    if getattr(args, "surface", None):
        params = {k: getattr(args, k) for k in ("a", "c", "k", "kappa") if getattr(args, k) is not None}
        cfg["surface"] = {"name": args.surface, "params": params}
    elif "surface" in cfg and "name" in cfg["surface"]:
        params = cfg["surface"].setdefault("params", {})
        for k in ("a", "c", "k", "kappa"):
            if getattr(args, k, None) is not None:
                params[k] = getattr(args, k)
    section = "ops" if args.command == "curvature" else args.command
    for flag, key in _SECTION_FLAGS.get(args.command, {}).items():
        val = getattr(args, flag, None)
        if val is not None and not (args.command == "sim" and flag == "k"):
            cfg.setdefault(section, {})[key] = val
    if args.command == "sim" and getattr(args, "k", None) is not None and "surface" not in cfg:
        cfg.setdefault("sim", {})["k"] = args.k
    try:
        schemas.validate(cfg, "config")
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    return cfg


def custom_surface(spec: dict) -> M.NamedSurface:
    """Surface (and optionally frame) given by expressions."""
    chart = Chart(spec.get("chart", "heisenberg"))
    names = spec.get("variables", list(chart.names))
    if len(names) != chart.dim:
        raise ConfigError(f"chart {chart.value} needs {chart.dim} variables")
    params = spec.get("params", {})
    try:
        u = compile_expression(spec["u"], names, params)
        if "frame" in spec:
            fr = spec["frame"]
            fields = []
            for key in ("X1", "X2", "X0"):
                if len(fr[key]) != chart.dim:
                    raise ConfigError(f"frame field {key} needs {chart.dim} components")
                comps = [compile_expression(e, names, params) for e in fr[key]]
                fields.append(VectorField(lambda p, comps=comps: [c(p) for c in comps], key))
            omega = None
            if "omega" in spec:
                oc = [compile_expression(e, names, params) for e in spec["omega"]]
                omega = OneForm(lambda p: [c(p) for c in oc])
            cs = ContactStructure(*fields, chart, omega)
            model = M.ModelSpace("custom", math.nan, 0.0, cs)
        else:
            k = float(params.get("k", 1.0))
            model = {Chart.HEISENBERG: M.heisenberg, Chart.SU2: lambda: M.su2(k),
                     Chart.SL2: lambda: M.sl2(k)}[chart]()
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from exc
    S = F.SurfaceSpec(ScalarField.from_expression(u, "custom"), chart, "custom")
    return M.NamedSurface("custom", model, S, dict(params))


def surface_from_config(cfg: dict) -> M.NamedSurface:
    if "surface" not in cfg:
        raise ConfigError("no surface given (use --surface or a config file)")
    s = cfg["surface"]
    if "custom" in s:
        return custom_surface(s["custom"])
    name, params = s["name"], s.get("params", {})
    entry = M.REGISTRY.get(name)
    if entry is None:
        raise ConfigError(f"unknown surface {name!r}; known: {', '.join(M.REGISTRY)}")
    used = {k: v for k, v in params.items() if k in entry["params"]}
    try:
        jsonschema.validate(used, {"type": "object", "properties": entry["params"]})
        if name == "hyperbolic-paraboloid" and used.get("a") == 0.5:
            log.warning("a = 1/2 makes the x-axis degenerate")
        return M.build(name, **used)
    except (ValueError, jsonschema.ValidationError) as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def _custom_starts(sf: M.NamedSurface, cfg: dict, section: str) -> list:
    starts = cfg.get(section, {}).get("starts")
    if starts is None and "custom" in cfg.get("surface", {}):
        starts = cfg["surface"]["custom"].get("starts")
    return starts


def _rng(cfg: dict) -> np.random.Generator:
    return np.random.default_rng(int(cfg.get("master_seed", 0)))


# commands -----------------------------------------------------------------------

def cmd_classify(cfg: dict, out: RunOutput) -> int:
    sf = surface_from_config(cfg)
    c = cfg.get("classify", {})
    seeds = c.get("seeds")
    if seeds is None:
        seeds = F.default_seeds(sf.spec, c.get("box", 2.0), c.get("grid", 11))
    res = F.find_characteristic_points(sf.on_sheet(), sf.cs, seeds, report_failures=True)
    reports = [F.classify(sf.spec, sf.cs, p) for p in res.points]
    doc = {"surface": sf.name, "points": [r.to_dict() for r in reports],
           "failures": [{"seed": list(q), "reason": why} for q, why in res.failures]}
    out.json("classify.json", doc, "classify")
    for r in reports:
        ev = ", ".join(f"{e.real:.6g}{e.imag:+.6g}i" for e in r.eigenvalues)
        print(f"{r.cls.value} at {tuple(round(v, 10) for v in r.location.coords)} eigenvalues ({ev})")
    if not reports:
        print("no characteristic points found")
    if reports and all(r.cls is F.PointClass.DEGENERATE for r in reports):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_trace(cfg: dict, out: RunOutput) -> int:
    sf = surface_from_config(cfg)
    t = cfg.get("trace", {})
    starts = _custom_starts(sf, cfg, "trace")
    direction = t.get("direction")
    if starts is None:
        if not sf.char_points_expected:
            raise ConfigError("custom surfaces need explicit trace starts")
        n = t.get("n_leaves", 8)
        r = t.get("radius", 0.5)
        starts = [M.point_near(sf, r, 2 * math.pi * i / max(n, 1)) for i in range(n)]
    if not starts:
        raise ConfigError("empty start list")
    stop = F.StopRule(max_length=t.get("max_length", 2.0))
    ok = 0
    for i, p in enumerate(starts):
        p = np.asarray(p, dtype=float)
        try:
            d = direction
            if d is None:
                d = -M.direction_towards(sf, p, sf.char_points_expected[-1]) if sf.char_points_expected else 1
            tr = F.trace_leaf(sf.on_sheet(), sf.cs, p, d, t.get("step", 1e-3), stop)
        except NUMERICAL_ERRORS as exc:
            log.warning("leaf %d from %s failed: %s", i, p.tolist(), exc)
            continue
        out.trace(f"leaf_{i}.csv", tr)
        ok += 1
    print(f"traced {ok} of {len(starts)} leaves")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _ops_points(sf, cfg, n, rng):
    o = cfg.get("ops", {})
    if "bump_center" in o:
        center = np.asarray(o["bump_center"], dtype=float)
    elif sf.char_points_expected:
        center = M.point_near(sf, 1.0, 0.0)
    else:
        raise ConfigError("custom surfaces need ops.bump_center")
    radius = o.get("bump_radius", 0.5)
    pts = O.sample_in_support(sf.on_sheet(), sf.cs, center, radius, n, rng,
                              min_criterion=o.get("min_criterion", 0.05))
    return center, radius, pts


def _curvature(sf, eps, pts, out) -> tuple[float, bool]:
    samples = O.curvature_sweep(sf.spec, sf.cs, pts, eps)
    rows, worst, monotone = [], 0.0, True
    for smp in samples:
        gaps = [abs(smp.K_eps[e] - smp.K0) for e in eps]
        monotone &= all(g2 <= 1.05 * g1 for g1, g2 in zip(gaps, gaps[1:]))
        worst = max(worst, smp.riccati_residual)
        for e in eps:
            rows.append([*smp.point, e, smp.K_eps[e], smp.K0, smp.riccati_residual])
    names = list(sf.spec.chart.names)
    out.csv("curvature.csv", names + ["eps", "K_eps", "K0", "riccati_residual"], rows)
    return worst, monotone


def cmd_ops(cfg: dict, out: RunOutput) -> int:
    sf = surface_from_config(cfg)
    o = cfg.get("ops", {})
    eps = o.get("eps", O.default_eps_list())
    rng = _rng(cfg)
    center, radius, pts = _ops_points(sf, cfg, o.get("n_points", 50), rng)
    rep = O.convergence_study(sf.on_sheet(), sf.cs, O.bump(center, radius), pts, eps)
    names = list(sf.spec.chart.names)
    out.csv("ops_samples.csv", names + ["eps", "delta_eps_f", "delta0_f", "error"],
            [[*smp.point, smp.epsilon, smp.delta_eps_f, smp.delta0_f, smp.error] for smp in rep.samples])
    n_curv = o.get("curvature_points", 20)
    riccati = None
    if n_curv:
        riccati, _ = _curvature(sf, eps, pts[:n_curv], out)
    doc = {"surface": sf.name, **rep.summary(), "n_points": len(pts),
           "riccati_max_residual": riccati, "curvature_points": min(n_curv, len(pts))}
    out.json("ops.json", doc, "ops")
    for e, m in zip(rep.eps_list, rep.max_error_per_eps):
        print(f"eps={e:.0e} max error {m:.6e}")
    print("empirical orders", " ".join(f"{q:.4f}" for q in rep.empirical_order))
    if riccati is not None:
        print(f"Riccati max residual {riccati:.3e}")
    return EXIT_NUMERICAL if min(rep.empirical_order) < 0.5 else EXIT_OK


def cmd_curvature(cfg: dict, out: RunOutput) -> int:
    sf = surface_from_config(cfg)
    o = cfg.get("ops", {})
    eps = o.get("eps", O.default_eps_list())
    _, _, pts = _ops_points(sf, cfg, o.get("curvature_points", 20), _rng(cfg))
    worst, monotone = _curvature(sf, eps, pts, out)
    out.json("curvature.json", {"surface": sf.name, "eps": eps, "riccati_max_residual": worst,
                                "monotone": monotone, "n_points": len(pts)})
    print(f"Riccati max residual {worst:.3e}; |K_eps - K0| monotone: {monotone}")
    return EXIT_OK


def _leaf_for(sf, section: dict, default_length: float):
    leaf = section.get("leaf", "default")
    if not sf.char_points_expected:
        raise ConfigError("custom surfaces do not have named leaves")
    try:
        start, target = M.approach_leaf(sf, leaf, section.get("leaf_length", default_length))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = M.direction_towards(sf, start, target)
    return leaf, D.approach_leaf_diffusion(sf.on_sheet(), sf.cs, start, d, target,
                                           section.get("step", 1e-3), label=f"{sf.name}:{leaf}")


def cmd_sim(cfg: dict, out: RunOutput) -> int:
    s = cfg.get("sim", {})
    if "process" in s:
        try:
            spec = D.reference_process(s["process"], s.get("k", 1.0), s.get("order"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        s0_default = math.pi / (2 * s.get("k", 1.0)) if s["process"] == "legendre3" else 1.0
    elif "surface" in cfg:
        _, al = _leaf_for(surface_from_config(cfg), s, 1.5)
        spec = al.spec
        s0_default = 0.5 * spec.domain[1]
    else:
        raise ConfigError("sim needs --process or a surface")
    try:
        sc = D.SimConfig(dt=s.get("dt", 1e-4), t_max=s.get("t_max", 10.0), n_paths=s.get("paths", 10_000),
                         kill_radius=s.get("kill_radius", 1e-3), master_seed=cfg.get("master_seed", 0),
                         s0=s.get("s0", s0_default))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stats = D.simulate(spec, sc, cfg.get("threads"))
    doc = stats.report(spec, sc)
    out.json("sim.json", doc, "sim")
    lo, hi = stats.wilson_ci_95
    print(f"{spec.label}: hit fraction {stats.hit_fraction:.6g} (95% CI {lo:.3g}..{hi:.3g}), "
          f"{stats.n_hit} of {stats.n_paths}")
    return EXIT_OK


def cmd_boundary(cfg: dict, out: RunOutput) -> int:
    sf = surface_from_config(cfg)
    b = cfg.get("boundary", {})
    leaf, al = _leaf_for(sf, b, 1.5)
    rep = D.classify_boundary(al.spec, b.get("side", "lower"), al.report, al.eigen_index)
    doc = {**rep.to_dict(), "surface": sf.name, "leaf": leaf, "point_class": al.report.cls.value}
    out.json("boundary.json", doc, "boundary")
    print(f"{rep.verdict.value} ({al.report.cls.value}, lambda={rep.lambda_exponent}, "
          f"q={rep.fitted_exponent_q:.4f}) flags={rep.flags}")
    return EXIT_NUMERICAL if rep.disagreement else EXIT_OK


def cmd_list_models(cfg: dict, out: RunOutput) -> int:
    reg = M.registry_json()
    print(dump_json(reg))
    if "output_dir" in cfg:
        out.json("registry.json", reg)
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "trace": cmd_trace,
    "ops": cmd_ops,
    "curvature": cmd_curvature,
    "sim": cmd_sim,
    "boundary": cmd_boundary,
    "list-models": cmd_list_models,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = None
    try:
        cfg = load_config(args)
        out = RunOutput(cfg.get("output_dir", "out"), args.command)
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"charfol: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"charfol: numerical failure: {exc}", file=sys.stderr)
        if out is not None:
            out.finish(EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"charfol: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command != "list-models" or "output_dir" in cfg:
        out.finish(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
