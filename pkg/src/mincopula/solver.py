"""Cyclic iterated I-projection solver.

Every cycle projects, in this fixed order, onto the singleton margins
(axis 1..d), the user's margin constraints and then the moment constraints
(each in declaration order). Moment steps use either generalized iterative
scaling (``procedure="gis"``) or the exact exponential tilt
(``procedure="tilt"``). The run stops when two consecutive end-of-cycle
arrays differ by less than ``epsilon`` in max-norm, or after ``max_cycles``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, NamedTuple, Optional

import numpy as np

from .constraints import ProblemSpec, moment_values, normalize_moment, residuals_of_values
from .errors import DegenerateMoment, MinCopulaError
from .prob_array import ProbArray
from .projections import TiltSolveConfig, _gis_moment_values, _scale_margin_values, _tilt_values

log = logging.getLogger(__name__)

PLATEAU_LABEL = "heuristic: error plateau suggests inconsistent constraints"


@dataclass(frozen=True)
class SolverConfig:
    procedure: Literal["gis", "tilt"] = "tilt"
    epsilon: float = 1e-12
    max_cycles: int = 10_000
    gis_inner_iters: int = 1
    tilt: TiltSolveConfig = field(default_factory=TiltSolveConfig)
    plateau_window: int = 200
    plateau_rel_tol: float = 1e-3
    record_residuals: bool = True

    def __post_init__(self):
        if self.procedure not in ("gis", "tilt"):
            raise ValueError(f"procedure must be 'gis' or 'tilt', got {self.procedure!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_cycles < 1 or self.gis_inner_iters < 1:
            raise ValueError("max_cycles and gis_inner_iters must be positive")
        if self.plateau_window < 1 or not self.plateau_rel_tol > 0:
            raise ValueError("plateau window and tolerance must be positive")


class CycleRecord(NamedTuple):
    cycle: int
    max_abs_change: float
    residuals: Optional[dict]


@dataclass
class SolveReport:
    result: ProbArray
    cycles_run: int
    converged: bool
    suspected_inconsistent: bool
    trace: list
    residuals: dict
    moment_values: dict
    wall_time: float
    procedure: str
    epsilon: float
    constraint_names: list

    @property
    def errors(self) -> np.ndarray:
        return np.array([rec.max_abs_change for rec in self.trace])

    def summary(self) -> str:
        lines = [
            f"procedure: {'I (generalized iterative scaling)' if self.procedure == 'gis' else 'II (exponential tilt)'}",
            f"converged: {self.converged} (epsilon = {self.epsilon:g})",
            f"cycles: {self.cycles_run}",
            f"final max abs change: {self.trace[-1].max_abs_change:.6e}" if self.trace else "final max abs change: n/a",
        ]
        if not self.converged:
            lines.append(f"suspected inconsistent: {self.suspected_inconsistent} ({PLATEAU_LABEL})")
        lines.append("residuals:")
        lines.extend(f"  {k}: {v:.6e}" for k, v in self.residuals.items())
        if self.moment_values:
            lines.append("moment values:")
            lines.extend(f"  {k}: {v:.9f}" for k, v in self.moment_values.items())
        lines.append(f"wall time: {self.wall_time:.3f} s")
        return "\n".join(lines)


class SolveAborted(MinCopulaError):
    """A projection step failed; ``report`` holds the last completed cycle."""

    def __init__(self, message: str, constraint: str, report: SolveReport):
        super().__init__(message)
        self.constraint = constraint
        self.report = report


Step = Callable[[np.ndarray], np.ndarray]


def projection_steps(spec: ProblemSpec, cfg: SolverConfig) -> list[tuple[str, Step]]:
    """The ordered (name, step) pairs making up one cycle."""
    steps: list[tuple[str, Step]] = []
    for mc in spec.all_margins:
        target = mc.target.values
        steps.append((mc.name, lambda v, axes=mc.axes, t=target: _scale_margin_values(v, axes, t)))
    for mc in spec.moments:
        if cfg.procedure == "tilt":
            _check_tilt_applicable(spec, mc)
            steps.append(
                (mc.name, lambda v, mc=mc: _tilt_values(v, mc.axes, mc.reduced, mc.target, cfg.tilt, mc.name)[0])
            )
        else:
            try:
                nm = normalize_moment(mc)
            except DegenerateMoment:
                log.info("%s is vacuous (constant moment array equal to target); skipped", mc.name)
                continue
            steps.append((mc.name, _gis_repeat(nm.axes, nm.reduced, nm.abar, cfg.gis_inner_iters)))
    return steps


def _gis_repeat(axes, hbar, abar, times: int) -> Step:
    def step(v):
        for _ in range(times):
            v = _gis_moment_values(v, axes, hbar, abar)
        return v

    return step


def _check_tilt_applicable(spec: ProblemSpec, mc) -> None:
    h = mc.h.values
    where = (spec.reference.values > 0) & (h != 0)
    vals = np.broadcast_to(h, where.shape)[where]
    if vals.size and vals.min() == vals.max():
        raise DegenerateMoment(
            f"{mc.name}: moment array is constant on supp(reference) & supp(h); the tilt procedure needs it non-constant"
        )


def iterate_steps(spec: ProblemSpec, cfg: SolverConfig, cycles: int) -> Iterator[tuple[int, str, ProbArray]]:
    """Yield ``(cycle, constraint name, array)`` after every projection step."""
    steps = projection_steps(spec, cfg)
    cur = np.array(spec.reference.values)
    for cycle in range(1, cycles + 1):
        for name, step in steps:
            cur = step(cur)
            yield cycle, name, ProbArray(cur)


def plateau_detector(errors, window: int = 200, rel_tol: float = 1e-3, epsilon: float = 0.0) -> bool:
    """Heuristic stagnation flag.

    True when, over the last ``window`` cycles, the per-cycle relative change of
    the max-abs-change sequence averages below ``rel_tol`` while the latest value
    is still at or above ``epsilon``. A geometrically converging run shrinks by a
    fixed fraction every cycle and is not flagged. Slow convergence and genuine
    nonconvergence cannot be told apart from a finite trace, so the flag is advisory.
    """
    errors = np.asarray([getattr(e, "max_abs_change", e) for e in errors], dtype=float)
    if errors.size < window or window < 2:
        return False
    tail = errors[-window:]
    if not tail[-1] >= epsilon or np.any(tail <= 0):
        return False
    rel = np.abs(np.diff(tail)) / tail[:-1]
    return bool(np.mean(rel) < rel_tol)


def solve(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Run the cyclic projection procedure from the reference array."""
    t0 = time.perf_counter()
    steps = projection_steps(spec, cfg)
    cur = np.array(spec.reference.values)
    trace: list[CycleRecord] = []
    converged = False

    def report(values, converged_):
        suspected = (not converged_) and plateau_detector(
            trace, cfg.plateau_window, cfg.plateau_rel_tol, cfg.epsilon
        )
        res = ProbArray(values, check=False)
        return SolveReport(
            result=res,
            cycles_run=len(trace),
            converged=converged_,
            suspected_inconsistent=suspected,
            trace=trace,
            residuals=residuals_of_values(values, spec),
            moment_values=moment_values(res, spec),
            wall_time=time.perf_counter() - t0,
            procedure=cfg.procedure,
            epsilon=cfg.epsilon,
            constraint_names=spec.constraint_names,
        )

    for cycle in range(1, cfg.max_cycles + 1):
        prev = cur
        for name, step in steps:
            try:
                cur = step(cur)
            except MinCopulaError as exc:
                raise SolveAborted(f"cycle {cycle}, constraint {name}: {exc}", name, report(prev, False)) from exc
        change = float(np.max(np.abs(cur - prev)))
        res = residuals_of_values(cur, spec) if cfg.record_residuals else None
        trace.append(CycleRecord(cycle, change, res))
        if change < cfg.epsilon:
            converged = True
            break
    out = report(cur, converged)
    # validates the final array (nonnegative, unit mass)
    out.result = ProbArray(out.result.values)
    return out


class ProcedureComparison(NamedTuple):
    gis: SolveReport
    tilt: SolveReport

    @property
    def cycle_ratio(self) -> float:
        return self.gis.cycles_run / self.tilt.cycles_run


def compare_procedures(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> ProcedureComparison:
    """Run both procedures with otherwise identical settings."""
    from dataclasses import replace

    return ProcedureComparison(
        gis=solve(spec, replace(cfg, procedure="gis")),
        tilt=solve(spec, replace(cfg, procedure="tilt")),
    )
