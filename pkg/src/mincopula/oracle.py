"""Brute-force reference minimizer for small problems (test-time only).

Every constraint, margins included, is rewritten as an expectation
constraint: a margin on ``J`` becomes one indicator array per cell of
[n]^{|J|}. The whole family is shifted to be nonnegative, scaled by a common
constant and completed with a slack row, which gives a single GIS family.
Iterating GIS on it updates all constraints at once, unlike the cyclic solver.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .constraints import ProblemSpec, lift, residuals_of_values
from .errors import InvalidArray, OracleBudgetExceeded, ShapeError
from .projections import GISFamily, _gis_update
from .prob_array import ProbArray

MAX_ORACLE_CELLS = 4096
FEASIBILITY_TOL = 1e-8
SLACK_ZERO = 1e-12


@dataclass(frozen=True)
class OracleConfig:
    max_iter: int = 500_000
    tol: float = 1e-13
    method: str = "gis-simultaneous"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method != "gis-simultaneous":
            raise ValueError(f"unknown oracle method {self.method!r}")


def _expectation_rows(spec: ProblemSpec):
    """All constraints as (array over the full grid, target) pairs."""
    d, n = spec.shape.d, spec.shape.n
    rows, targets = [], []
    for mc in spec.all_margins:
        t = mc.target.values
        for cell in itertools.product(range(n), repeat=len(mc.axes)):
            ind = np.zeros((n,) * len(mc.axes))
            ind[cell] = 1.0
            rows.append(lift(ind, mc.axes, d))
            targets.append(float(t[cell]))
    for mc in spec.moments:
        rows.append(mc.h.values)
        targets.append(mc.target)
    return rows, targets


def compile_family(spec: ProblemSpec) -> GISFamily:
    """Combined GIS family (with a trailing slack row) equivalent to the problem's constraints."""
    rows, targets = _expectation_rows(spec)
    shifted, shifted_targets = [], []
    for h, a in zip(rows, targets):
        delta = min(float(np.min(h)), a)
        shifted.append(np.asarray(h, dtype=float) - delta)
        shifted_targets.append(a - delta)
    H = np.stack(shifted)
    a = np.array(shifted_targets)
    scale = max(float(H.sum(axis=0).max()), float(a.sum()))
    H = H / scale
    a = a / scale
    # rounding residue would otherwise turn an all-zero slack row into one that kills cells
    slack = 1.0 - H.sum(axis=0)
    slack[slack < SLACK_ZERO] = 0.0
    slack_target = 1.0 - a.sum()
    if slack_target < SLACK_ZERO:
        slack_target = 0.0
    return GISFamily(np.concatenate([H, slack[None]]), np.append(a, slack_target))


def oracle_solve(spec: ProblemSpec, cfg: OracleConfig = OracleConfig()) -> ProbArray:
    """Minimize ``kl(p, reference)`` subject to all constraints by simultaneous GIS.

    Raises :class:`OracleBudgetExceeded` when the iteration budget runs out or
    when the iteration stalls at a point violating the constraints by more than
    1e-8 (which happens for inconsistent constraint sets).
    """
    if spec.shape.cells > MAX_ORACLE_CELLS:
        raise ShapeError(f"oracle is limited to {MAX_ORACLE_CELLS} cells, got {spec.shape.cells}")
    ref = spec.reference
    if np.any(ref.values <= 0):
        raise InvalidArray("oracle needs a reference with full support")
    family = compile_family(spec)
    H = family.hbar.reshape(family.abar.size, -1)
    cur = ref.flat.copy()
    for _ in range(cfg.max_iter):
        nxt = _gis_update(H, family.abar, cur)
        change = np.max(np.abs(nxt - cur))
        cur = nxt
        if change < cfg.tol:
            break
    else:
        raise OracleBudgetExceeded(f"no convergence within {cfg.max_iter} iterations (last change {change:.3e})")
    values = cur.reshape(spec.shape.dims)
    worst = max(residuals_of_values(values, spec).values())
    if worst > FEASIBILITY_TOL:
        raise OracleBudgetExceeded(f"iteration stalled at an infeasible point (residual {worst:.3e})")
    return ProbArray(values)


def random_reference(shape, seed: int) -> ProbArray:
    """Random full-support array with entries bounded away from zero."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, size=shape.dims)
    return ProbArray(w / w.sum())


def random_feasible_point(spec: ProblemSpec, seed: int, cfg: OracleConfig = OracleConfig()) -> Optional[ProbArray]:
    """A feasible array obtained from a random full-support reference, or None."""
    try:
        return oracle_solve(replace(spec, reference=random_reference(spec.shape, seed)), cfg)
    except OracleBudgetExceeded:
        return None
