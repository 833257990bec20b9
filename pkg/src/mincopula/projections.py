"""I-projection kernels: block scaling, generalized iterative scaling (GIS) and
exponential tilting.

Public kernels take and return :class:`ProbArray`. The underscore-prefixed
``*_values`` helpers work on raw ndarrays and are what the solver loop calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .constraints import MomentConstraint, NormalizedMoment, lift
from .errors import (
    DegenerateMoment,
    InfeasibleScaling,
    InvalidGISFamily,
    ShapeError,
    TargetOutOfRange,
)
from .prob_array import MomentArray, ProbArray, check_axes, margin_values

FAMILY_TOL = 1e-12


@dataclass(frozen=True)
class TiltSolveConfig:
    """Root-finding settings for the exponential tilt.

    Bisection stops once ``|Lambda(lam) - target| <= root_tol`` and the bracket
    is narrower than ``lambda_tol * max(1, |lam|)``, or when the bracket cannot
    be split further in floating point.
    """

    root_tol: float = 1e-13
    lambda_tol: float = 1e-14
    max_doublings: int = 64
    exponent_cap: float = 700.0

    def __post_init__(self):
        for name in ("root_tol", "lambda_tol", "exponent_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be positive")


# ---------------------------------------------------------------- scaling


def partition_scaling(q: ProbArray, blocks, targets: Sequence[float]) -> ProbArray:
    """Rescale ``q`` so that block ``k`` carries mass ``targets[k]``.

    ``blocks`` is an integer label array with the grid's shape assigning every
    cell to a block ``0..len(targets)-1``.
    """
    labels = np.asarray(blocks)
    if labels.shape != q.values.shape:
        raise ShapeError(f"block labels have shape {labels.shape}, expected {q.values.shape}")
    targets = np.asarray(targets, dtype=float)
    if labels.min() < 0 or labels.max() >= targets.size:
        raise ShapeError("block labels must index into targets")
    if np.any(targets < 0) or abs(targets.sum() - 1.0) > FAMILY_TOL:
        raise InfeasibleScaling("block targets must be nonnegative and sum to 1")
    mass = np.bincount(labels.reshape(-1), weights=q.flat, minlength=targets.size)
    bad = (targets > 0) & (mass <= 0)
    if np.any(bad):
        raise InfeasibleScaling(f"positive target on zero-mass blocks {np.flatnonzero(bad).tolist()}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mass > 0, targets / mass, 0.0)
    return ProbArray(q.values * ratio[labels])


def _scale_margin_values(values: np.ndarray, axes: tuple[int, ...], target: np.ndarray) -> np.ndarray:
    m = margin_values(values, axes)
    if np.any((target > 0) & (m <= 0)):
        raise InfeasibleScaling("target margin is positive where the current margin is zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(m > 0, target / m, 0.0)
    return values * lift(ratio, axes, values.ndim)


def marginal_scaling(q: ProbArray, axes: Sequence[int], target) -> ProbArray:
    """I-projection of ``q`` onto arrays whose ``axes``-margin equals ``target``.

    Each cell is multiplied by ``target / current margin`` of its block; cells
    outside the support stay zero.
    """
    axes = check_axes(axes, q.d)
    target = np.asarray(getattr(target, "values", target), dtype=float)
    if target.shape != (q.n,) * len(axes):
        raise ShapeError(f"target has shape {target.shape}, expected {(q.n,) * len(axes)}")
    return ProbArray(_scale_margin_values(q.values, axes, target))


# ---------------------------------------------------------------- GIS


@dataclass(frozen=True)
class GISFamily:
    """Nonnegative arrays ``hbar[k]`` summing to one in every cell, with targets ``abar``."""

    hbar: np.ndarray
    abar: np.ndarray

    def __post_init__(self):
        hbar = np.asarray(self.hbar, dtype=float)
        abar = np.asarray(self.abar, dtype=float).reshape(-1)
        if hbar.ndim < 2 or hbar.shape[0] != abar.size:
            raise InvalidGISFamily("hbar must be stacked along axis 0, one slice per target")
        if np.any(hbar < 0) or not np.all(np.isfinite(hbar)):
            raise InvalidGISFamily("hbar entries must be finite and nonnegative")
        rows = hbar.sum(axis=0)
        if np.max(np.abs(rows - 1.0)) > FAMILY_TOL:
            raise InvalidGISFamily(f"hbar does not sum to 1 pointwise (max error {np.max(np.abs(rows - 1.0)):.3e})")
        if np.any(abar < 0) or abs(abar.sum() - 1.0) > FAMILY_TOL:
            raise InvalidGISFamily("abar must be a probability vector")
        object.__setattr__(self, "hbar", hbar)
        object.__setattr__(self, "abar", abar)

    @classmethod
    def from_normalized(cls, nm: NormalizedMoment) -> "GISFamily":
        if not 0.0 <= nm.abar <= 1.0:
            raise InvalidGISFamily(f"abar must lie in [0, 1], got {nm.abar}")
        h = np.asarray(nm.hbar.values, dtype=float)
        return cls(np.stack([h, 1.0 - h]), np.array([nm.abar, 1.0 - nm.abar]))


def _log_ratios(abar: np.ndarray, sums: np.ndarray):
    # 0/0 := 0; a positive target over zero mass only touches cells that are already zero.
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where((sums > 0) & (abar > 0), np.log(abar / sums), 0.0)
    kills = (abar == 0) & (sums > 0)
    return logr, kills


def _gis_update(H: np.ndarray, abar: np.ndarray, qf: np.ndarray) -> np.ndarray:
    # H is (c, cells), qf the flat current array; returns the renormalized update.
    sums = H @ qf
    logr, kills = _log_ratios(abar, sums)
    new = qf * np.exp(logr @ H)
    if np.any(kills):
        # 0 ** hbar is 0 for hbar > 0 and 1 for hbar == 0
        new[(H[kills] > 0).any(axis=0)] = 0.0
    total = new.sum()
    if not total > 0 or not math.isfinite(total):
        raise InfeasibleScaling("GIS update removed all mass")
    return new / total


def gis_step(q: ProbArray, family: GISFamily) -> ProbArray:
    """One GIS update ``q_i * prod_k (abar_k / E_q[hbar_k]) ** hbar_k[i]``, renormalized once."""
    if family.hbar.shape[1:] != q.values.shape:
        raise ShapeError(f"family arrays have shape {family.hbar.shape[1:]}, expected {q.values.shape}")
    H = family.hbar.reshape(family.abar.size, -1)
    return ProbArray(_gis_update(H, family.abar, q.flat).reshape(q.values.shape))


def _gis_moment_values(values: np.ndarray, axes: tuple[int, ...], hbar: np.ndarray, abar: float) -> np.ndarray:
    m = margin_values(values, axes)
    s1 = float(np.sum(m * hbar))
    s0 = float(np.sum(m * (1.0 - hbar)))
    logr, kills = _log_ratios(np.array([abar, 1.0 - abar]), np.array([s1, s0]))
    log_factor = logr[0] * hbar + logr[1] * (1.0 - hbar)
    factor = np.exp(log_factor)
    if kills[0]:
        factor = np.where(hbar > 0, 0.0, factor)
    if kills[1]:
        factor = np.where(hbar < 1, 0.0, factor)
    new = values * lift(factor, axes, values.ndim)
    total = new.sum()
    if not total > 0 or not math.isfinite(total):
        raise InfeasibleScaling("GIS update removed all mass")
    return new / total


def gis_single_constraint_step(q: ProbArray, nm: NormalizedMoment) -> ProbArray:
    """GIS update for one normalized moment, using the two-array family (hbar, 1 - hbar)."""
    if not 0.0 <= nm.abar <= 1.0:
        raise InvalidGISFamily(f"abar must lie in [0, 1], got {nm.abar}")
    if nm.hbar.shape != q.shape:
        raise ShapeError(f"moment array has shape {nm.hbar.shape}, expected {q.shape}")
    return ProbArray(_gis_moment_values(q.values, nm.axes, nm.reduced, nm.abar))


class GISResult(NamedTuple):
    array: ProbArray
    converged: bool
    iterations: int


def gis_project(q: ProbArray, family, inner_eps: float = 1e-12, max_iter: int = 1) -> GISResult:
    """Iterate GIS until successive iterates differ by less than ``inner_eps`` (max-norm).

    ``family`` is a :class:`GISFamily` or a :class:`NormalizedMoment`.
    The limit is the I-projection only if some member of the family has its
    support inside supp(q). This cannot be checked up front; a violation shows
    up as non-convergence or as :class:`InfeasibleScaling`.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    if isinstance(family, NormalizedMoment):
        step = lambda arr: gis_single_constraint_step(arr, family)  # noqa: E731
    else:
        step = lambda arr: gis_step(arr, family)  # noqa: E731
    cur = q
    for it in range(1, max_iter + 1):
        nxt = step(cur)
        if np.max(np.abs(nxt.values - cur.values)) < inner_eps:
            return GISResult(nxt, True, it)
        cur = nxt
    return GISResult(cur, False, max_iter)


# ---------------------------------------------------------------- exponential tilt


def _shifted_weights(w: np.ndarray, h: np.ndarray, lam: float) -> np.ndarray:
    e = lam * h
    return w * np.exp(e - e[w > 0].max())


def lambda_fn(q: ProbArray, h: MomentArray, lam: float) -> float:
    """Mean of ``h`` under the tilted array ``q_i exp(lam h_i)``.

    Exponents are shifted by their maximum over supp(q) before exponentiation.
    """
    if h.shape != q.shape:
        raise ShapeError(f"moment array has shape {h.shape}, expected {q.shape}")
    w = q.flat
    hv = h.flat
    t = _shifted_weights(w, hv, lam)
    inside = (w > 0) & (hv != 0)
    return float(np.sum(hv[inside] * t[inside]) / np.sum(t))


def _tilt_mean(w: np.ndarray, h: np.ndarray, lam: float) -> float:
    t = _shifted_weights(w, h, lam)
    return float(np.dot(h, t) / t.sum())


def _solve_lambda(w: np.ndarray, h: np.ndarray, target: float, cfg: TiltSolveConfig, name: str = "") -> float:
    """Root of Lambda(lam) = target by bracket doubling from [-1, 1] then bisection."""
    keep = w > 0
    w, h = w[keep], h[keep]
    hmin, hmax = float(h.min()), float(h.max())
    label = f"{name}: " if name else ""
    if hmin == hmax:
        if hmin == target:
            return 0.0
        raise DegenerateMoment(f"{label}moment array is constant on the support")
    if not hmin < target < hmax:
        raise TargetOutOfRange(
            f"{label}target {target!r} outside the attainable open interval ({hmin!r}, {hmax!r})"
        )
    # keeps every shifted exponent above -exponent_cap, so the tilt cannot underflow a cell to zero
    cap = cfg.exponent_cap / (hmax - hmin)
    f = lambda lam: _tilt_mean(w, h, lam) - target  # noqa: E731

    lo, hi = -min(1.0, cap), min(1.0, cap)
    flo, fhi = f(lo), f(hi)
    doublings = 0
    while fhi < 0:
        if hi >= cap or doublings >= cfg.max_doublings:
            raise TargetOutOfRange(f"{label}no sign change for lambda up to {hi:.6g}")
        lo, flo = hi, fhi
        hi = min(2.0 * hi, cap)
        fhi = f(hi)
        doublings += 1
    while flo > 0:
        if -lo >= cap or doublings >= cfg.max_doublings:
            raise TargetOutOfRange(f"{label}no sign change for lambda down to {lo:.6g}")
        hi, fhi = lo, flo
        lo = max(2.0 * lo, -cap)
        flo = f(lo)
        doublings += 1
    if flo == 0:
        return lo
    if fhi == 0:
        return hi

    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            return lo if abs(flo) <= abs(fhi) else hi
        fm = f(mid)
        if fm == 0:
            return mid
        if fm < 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if abs(fm) <= cfg.root_tol and hi - lo <= cfg.lambda_tol * max(1.0, abs(mid)):
            return mid


def _tilt_values(values: np.ndarray, axes: tuple[int, ...], h: np.ndarray, target: float,
                 cfg: TiltSolveConfig, name: str = "") -> tuple[np.ndarray, float]:
    m = margin_values(values, axes)
    lam = _solve_lambda(m.reshape(-1), h.reshape(-1), target, cfg, name)
    e = lam * h
    factor = np.exp(e - e[m > 0].max())
    new = values * lift(factor, axes, values.ndim)
    return new / new.sum(), lam


def tilt_parameter(q: ProbArray, mc: MomentConstraint, cfg: TiltSolveConfig = TiltSolveConfig()) -> float:
    """The root ``lam*`` of ``Lambda(lam) = target`` used by :func:`exp_tilt_project`."""
    m = margin_values(q.values, mc.axes)
    return _solve_lambda(m.reshape(-1), mc.reduced.reshape(-1), mc.target, cfg, mc.name)


def exp_tilt_project(q: ProbArray, mc: MomentConstraint, cfg: TiltSolveConfig = TiltSolveConfig()) -> ProbArray:
    """I-projection of ``q`` onto ``{p : sum_i p_i h_i = target}`` by exponential tilting.

    The support is preserved exactly. Raises :class:`TargetOutOfRange` when the
    target is not strictly inside the range of ``h`` over supp(q) or cannot be
    bracketed, and :class:`DegenerateMoment` when ``h`` is constant on supp(q)
    but differs from the target.
    """
    if mc.h.shape != q.shape:
        raise ShapeError(f"moment array has shape {mc.h.shape}, expected {q.shape}")
    new, _ = _tilt_values(q.values, mc.axes, mc.reduced, mc.target, cfg, mc.name)
    return ProbArray(new)
