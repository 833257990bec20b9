"""Command-line front end.

``mincopula solve run.json`` builds a problem from a JSON configuration, runs
the solver and writes the result array, the per-cycle trace, a text summary
and optionally a sample. Axes in configuration files are 1-based.

Exit codes: 0 converged, 2 stopped at ``max_cycles`` without converging,
1 any error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import io
from .checkerboard import FAMILIES, CopulaFamily, sample, skeleton_from_copula
from .constraints import MarginConstraint, MomentConstraint, ProblemSpec, spearman_constraint, spearman_of_array
from .errors import ConfigError, MinCopulaError
from .prob_array import GridShape, ProbArray
from .solver import SolveAborted, SolveReport, SolverConfig, solve

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
SAMPLE_MODES = ("cell_centers", "continuous")


@dataclass
class SampleRequest:
    count: int
    seed: int
    mode: str
    path: Path


@dataclass
class RunConfig:
    d: int
    n: int
    reference: Any = "uniform"  # "uniform" or a Path
    margins: list = field(default_factory=list)  # (axes0, CopulaFamily | Path)
    moments: list = field(default_factory=list)  # (axes0, "spearman_rho" | Path, target)
    solver: SolverConfig = field(default_factory=SolverConfig)
    result: Optional[Path] = None
    trace: Optional[Path] = None
    summary: Optional[Path] = None
    samples: Optional[SampleRequest] = None


# ------------------------------------------------------------------ parsing helpers


def _expect(value, kinds, where: str):
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(f"{where}: expected {_kind_name(kinds)}, got a boolean")
    if not isinstance(value, kinds):
        raise ConfigError(f"{where}: expected {_kind_name(kinds)}, got {type(value).__name__}")
    return value


def _kind_name(kinds) -> str:
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    names = {int: "integer", float: "number", str: "string", dict: "object", list: "array", bool: "boolean"}
    return " or ".join(dict.fromkeys(names.get(k, k.__name__) for k in kinds))


def _number(value, where: str) -> float:
    x = float(_expect(value, (int, float), where))
    if not np.isfinite(x):
        raise ConfigError(f"{where}: must be finite")
    return x


def _integer(value, where: str, minimum: int) -> int:
    x = _expect(value, int, where)
    if x < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {x}")
    return x


def _only_keys(obj: dict, allowed, where: str) -> None:
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _axes(value, d: int, where: str) -> tuple[int, ...]:
    _expect(value, list, where)
    axes = [_integer(a, f"{where}[{i}]", 1) for i, a in enumerate(value)]
    if any(a > d for a in axes):
        raise ConfigError(f"{where}: axes are 1-based and must be <= d={d}")
    if len(axes) < 2 or any(b <= a for a, b in zip(axes, axes[1:])):
        raise ConfigError(f"{where}: need at least two strictly increasing axes")
    return tuple(a - 1 for a in axes)


def _file(value, base: Path, where: str) -> Path:
    _expect(value, dict, where)
    _only_keys(value, {"file"}, where)
    if "file" not in value:
        raise ConfigError(f"{where}: missing field 'file'")
    p = base / _expect(value["file"], str, f"{where}.file")
    if not p.is_file():
        raise ConfigError(f"{where}.file: no such file: {p}")
    return p


def _out_path(value, base: Path, where: str) -> Path:
    return base / _expect(value, str, where)


def parse_config(obj, base: Path = Path(".")) -> RunConfig:
    """Validate a decoded JSON configuration; errors name the offending field."""
    _expect(obj, dict, "config")
    _only_keys(obj, {"grid", "reference", "margins", "moments", "solver", "output"}, "config")
    if "grid" not in obj:
        raise ConfigError("config: missing field 'grid'")
    grid = _expect(obj["grid"], dict, "grid")
    _only_keys(grid, {"d", "n"}, "grid")
    for key in ("d", "n"):
        if key not in grid:
            raise ConfigError(f"grid: missing field '{key}'")
    d = _integer(grid["d"], "grid.d", 2)
    n = _integer(grid["n"], "grid.n", 2)
    try:
        GridShape(d, n)
    except MinCopulaError as exc:
        raise ConfigError(f"grid: {exc}") from None
    cfg = RunConfig(d=d, n=n)

    ref = obj.get("reference", "uniform")
    if isinstance(ref, str):
        if ref != "uniform":
            raise ConfigError(f"reference: expected \"uniform\" or {{file: path}}, got {ref!r}")
    else:
        cfg.reference = _file(ref, base, "reference")

    for i, m in enumerate(_expect(obj.get("margins", []), list, "margins")):
        where = f"margins[{i}]"
        _expect(m, dict, where)
        _only_keys(m, {"axes", "source"}, where)
        if "axes" not in m or "source" not in m:
            raise ConfigError(f"{where}: needs 'axes' and 'source'")
        axes = _axes(m["axes"], d, f"{where}.axes")
        src = _expect(m["source"], dict, f"{where}.source")
        if "file" in src:
            cfg.margins.append((axes, _file(src, base, f"{where}.source")))
            continue
        _only_keys(src, {"family", "param"}, f"{where}.source")
        fam = _expect(src.get("family"), str, f"{where}.source.family")
        if fam not in FAMILIES:
            raise ConfigError(f"{where}.source.family: unknown family {fam!r}; expected one of {FAMILIES}")
        param = src.get("param")
        if param is not None:
            param = _number(param, f"{where}.source.param")
        try:
            family = CopulaFamily(fam, param, d=len(axes))
        except MinCopulaError as exc:
            raise ConfigError(f"{where}.source: {exc}") from None
        cfg.margins.append((axes, family))

    for i, m in enumerate(_expect(obj.get("moments", []), list, "moments")):
        where = f"moments[{i}]"
        _expect(m, dict, where)
        _only_keys(m, {"axes", "moment", "target"}, where)
        for key in ("axes", "moment", "target"):
            if key not in m:
                raise ConfigError(f"{where}: missing field '{key}'")
        axes = _axes(m["axes"], d, f"{where}.axes")
        target = _number(m["target"], f"{where}.target")
        if m["moment"] == "spearman_rho":
            if len(axes) != 2:
                raise ConfigError(f"{where}: spearman_rho needs exactly two axes")
            cfg.moments.append((axes, "spearman_rho", target))
        elif isinstance(m["moment"], dict):
            cfg.moments.append((axes, _file(m["moment"], base, f"{where}.moment"), target))
        else:
            raise ConfigError(f"{where}.moment: expected \"spearman_rho\" or {{file: path}}")

    cfg.solver = _parse_solver(obj.get("solver", {}))
    _parse_output(obj.get("output", {}), base, cfg)
    return cfg


def _parse_solver(s) -> SolverConfig:
    _expect(s, dict, "solver")
    _only_keys(s, {"procedure", "epsilon", "max_cycles", "gis_inner_iters", "plateau"}, "solver")
    kw = {}
    if "procedure" in s:
        if s["procedure"] not in ("gis", "tilt"):
            raise ConfigError(f"solver.procedure: expected \"gis\" or \"tilt\", got {s['procedure']!r}")
        kw["procedure"] = s["procedure"]
    if "epsilon" in s:
        kw["epsilon"] = _number(s["epsilon"], "solver.epsilon")
        if kw["epsilon"] <= 0:
            raise ConfigError("solver.epsilon: must be positive")
    if "max_cycles" in s:
        kw["max_cycles"] = _integer(s["max_cycles"], "solver.max_cycles", 1)
    if "gis_inner_iters" in s:
        kw["gis_inner_iters"] = _integer(s["gis_inner_iters"], "solver.gis_inner_iters", 1)
    if "plateau" in s:
        pl = _expect(s["plateau"], dict, "solver.plateau")
        _only_keys(pl, {"window", "rel_tol"}, "solver.plateau")
        if "window" in pl:
            kw["plateau_window"] = _integer(pl["window"], "solver.plateau.window", 1)
        if "rel_tol" in pl:
            kw["plateau_rel_tol"] = _number(pl["rel_tol"], "solver.plateau.rel_tol")
            if kw["plateau_rel_tol"] <= 0:
                raise ConfigError("solver.plateau.rel_tol: must be positive")
    return SolverConfig(**kw)


def _parse_output(o, base: Path, cfg: RunConfig) -> None:
    _expect(o, dict, "output")
    _only_keys(o, {"result", "trace", "summary", "samples"}, "output")
    for key in ("result", "trace", "summary"):
        if key in o:
            setattr(cfg, key, _out_path(o[key], base, f"output.{key}"))
    if "samples" in o:
        s = _expect(o["samples"], dict, "output.samples")
        _only_keys(s, {"count", "seed", "mode", "path"}, "output.samples")
        for key in ("count", "seed", "path"):
            if key not in s:
                raise ConfigError(f"output.samples: missing field '{key}'")
        mode = s.get("mode", "continuous")
        if mode not in SAMPLE_MODES:
            raise ConfigError(f"output.samples.mode: expected one of {SAMPLE_MODES}, got {mode!r}")
        cfg.samples = SampleRequest(
            count=_integer(s["count"], "output.samples.count", 1),
            seed=_integer(s["seed"], "output.samples.seed", 0),
            mode=mode,
            path=_out_path(s["path"], base, "output.samples.path"),
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return parse_config(obj, path.parent)


def build_spec(cfg: RunConfig) -> ProblemSpec:
    """Turn a parsed configuration into a problem; any inconsistency becomes a ConfigError."""
    shape = GridShape(cfg.d, cfg.n)
    try:
        ref = None if cfg.reference == "uniform" else ProbArray(io.read_array(cfg.reference))
        margins = []
        for i, (axes, src) in enumerate(cfg.margins):
            sub = GridShape(len(axes), cfg.n)
            target = skeleton_from_copula(src, sub) if isinstance(src, CopulaFamily) else ProbArray(io.read_array(src))
            margins.append(MarginConstraint(axes, target))
        moments = []
        for axes, src, target in cfg.moments:
            if src == "spearman_rho":
                moments.append(spearman_constraint(shape, axes, target))
            else:
                moments.append(MomentConstraint.from_reduced(axes, io.read_array(src), target, cfg.d))
        return ProblemSpec(shape, tuple(margins), tuple(moments), ref)
    except (MinCopulaError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid problem: {exc}") from None


# ------------------------------------------------------------------ outputs


def emit_plot_data(report: SolveReport, trace_path=None, points=None, samples_path=None) -> list[Path]:
    """Write error-vs-cycle data (the trace CSV) and sample scatter data when requested."""
    written = []
    if trace_path is not None:
        io.write_trace(trace_path, report)
        written.append(Path(trace_path))
    if points is not None and samples_path is not None:
        io.write_samples(samples_path, points)
        written.append(Path(samples_path))
    return written


def run(config_path, out=None) -> int:
    """Execute ``solve`` for one configuration file and return the exit code."""
    cfg = load_config(config_path)
    spec = build_spec(cfg)
    report = solve(spec, cfg.solver)
    if cfg.result is not None:
        io.write_array(cfg.result, report.result.values)
    points = None
    if cfg.samples is not None:
        points = sample(report.result, cfg.samples.count, cfg.samples.seed, cfg.samples.mode)
    emit_plot_data(report, cfg.trace, points, cfg.samples.path if cfg.samples else None)
    text = report.summary()
    if cfg.summary is not None:
        Path(cfg.summary).write_text(text + "\n")
    print(text, file=out or sys.stdout)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


# ------------------------------------------------------------------ entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mincopula", description="Minimum information checkerboard copulas.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the problem described by a JSON configuration")
    p.add_argument("config")

    p = sub.add_parser("sample", help="sample from a probability array file")
    p.add_argument("array")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=SAMPLE_MODES, default="continuous")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rho", help="print Spearman's rho of a bivariate array")
    p.add_argument("array")

    p = sub.add_parser("discretize", help="write the skeleton of a parametric bivariate copula")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--param", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "solve":
            return run(args.config)
        if args.command == "sample":
            p = ProbArray(io.read_array(args.array))
            io.write_samples(args.out, sample(p, args.count, args.seed, args.mode))
        elif args.command == "rho":
            p = ProbArray(io.read_array(args.array))
            if p.d != 2:
                raise ConfigError(f"{args.array}: rho needs a bivariate array, got d={p.d}")
            print(format(spearman_of_array(p), ".12g"))
        elif args.command == "discretize":
            fam = CopulaFamily(args.family, args.param)
            io.write_array(args.out, skeleton_from_copula(fam, GridShape(2, args.n)).values)
        return EXIT_OK
    except SolveAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MinCopulaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
