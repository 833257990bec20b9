"""Constraint sets: fixed higher-order margins and linear expectation constraints.

Moment arrays depend only on their coordinate set ``K``; they are exposed lifted
to the full grid (as read-only broadcast views, so lifting costs no memory) and
also in reduced form over [n]^{|K|}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateMoment, InvalidArray, InvalidAxes, NumericalError, ShapeError
from .prob_array import (
    GridShape,
    MomentArray,
    ProbArray,
    check_axes,
    is_copula_array,
    margin_values,
)

COPULA_TARGET_TOL = 1e-10


def axes_label(prefix: str, axes: Sequence[int]) -> str:
    """Display name using 1-based coordinates, e.g. ``J_1_2`` for axes (0, 1)."""
    return prefix + "_" + "_".join(str(a + 1) for a in axes)


def lift(reduced: np.ndarray, axes: tuple[int, ...], d: int) -> np.ndarray:
    """Read-only view of ``reduced`` (over the ``axes`` coordinates) as a d-dimensional array."""
    n = reduced.shape[0]
    view_shape = [n if a in axes else 1 for a in range(d)]
    return np.broadcast_to(np.asarray(reduced, dtype=float).reshape(view_shape), (n,) * d)


def reduce(values: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Slice a lifted array at index 0 along every axis outside ``axes``."""
    index = tuple(slice(None) if a in axes else 0 for a in range(values.ndim))
    return np.array(values[index])


@dataclass(frozen=True)
class MarginConstraint:
    """The ``axes``-margin must equal ``target``.

    Targets for two or more axes must be copula arrays (to 1e-10); singleton
    targets must be exactly uniform.
    """

    axes: tuple[int, ...]
    target: ProbArray

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not isinstance(self.target, ProbArray):
            object.__setattr__(self, "target", ProbArray(self.target))
        if len(axes) != self.target.d:
            raise ShapeError(f"target has d={self.target.d} but {len(axes)} axes were given")
        if len(axes) == 1:
            if not np.all(self.target.values == 1.0 / self.target.n):
                raise InvalidArray("singleton margin targets must be exactly uniform")
        else:
            check = is_copula_array(self.target, COPULA_TARGET_TOL)
            if not check.ok:
                raise InvalidArray(
                    f"margin target for {axes_label('J', axes)} is not a copula array "
                    f"(margin error {check.max_error:.3e})"
                )

    @property
    def name(self) -> str:
        return axes_label("J", self.axes)


@dataclass(frozen=True)
class MomentConstraint:
    """Expectation constraint ``sum_i p_i h_i = target`` with ``h`` depending on ``axes`` only."""

    axes: tuple[int, ...]
    h: MomentArray
    target: float

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not isinstance(self.h, MomentArray):
            object.__setattr__(self, "h", MomentArray(self.h))
        axes = check_axes(axes, self.h.shape.d)
        if len(axes) < 2:
            raise InvalidAxes(f"moment constraints need at least two axes, got {axes}")
        t = float(self.target)
        if not np.isfinite(t):
            raise InvalidArray(f"moment target must be finite, got {self.target!r}")
        object.__setattr__(self, "target", t)
        red = reduce(self.h.values, axes)
        if not np.array_equal(lift(red, axes, self.h.shape.d), self.h.values):
            raise InvalidArray(f"moment array for {axes_label('K', axes)} varies along axes outside K")
        object.__setattr__(self, "_reduced", red)

    @classmethod
    def from_reduced(cls, axes: Sequence[int], reduced, target: float, d: int) -> "MomentConstraint":
        axes = check_axes(axes, d)
        reduced = np.asarray(reduced, dtype=float)
        if reduced.ndim != len(axes):
            raise ShapeError(f"reduced moment array has {reduced.ndim} axes, expected {len(axes)}")
        return cls(axes, MomentArray(lift(reduced, axes, d)), target)

    @property
    def reduced(self) -> np.ndarray:
        """``h`` over [n]^{|K|}."""
        return self._reduced

    @property
    def name(self) -> str:
        return axes_label("K", self.axes)


@dataclass(frozen=True)
class NormalizedMoment:
    """Moment constraint rescaled so that ``hbar`` lies in [0, 1] and ``abar`` in [0, 1]."""

    axes: tuple[int, ...]
    hbar: MomentArray
    abar: float
    shift: float
    span: float

    @property
    def reduced(self) -> np.ndarray:
        return reduce(self.hbar.values, self.axes)


def normalize_moment(mc: MomentConstraint) -> NormalizedMoment:
    """Shift by ``min(min h, target)`` and divide by the span up to ``max(max h, target)``."""
    h = mc.reduced
    lo = min(float(h.min()), mc.target)
    hi = max(float(h.max()), mc.target)
    if hi == lo:
        raise DegenerateMoment(f"{mc.name}: moment array is constant and equal to its target")
    span = hi - lo
    hbar = np.clip((h - lo) / span, 0.0, 1.0)
    abar = min(max((mc.target - lo) / span, 0.0), 1.0)
    d = mc.h.shape.d
    return NormalizedMoment(mc.axes, MomentArray(lift(hbar, mc.axes, d)), abar, lo, span)


def _cell_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def spearman_moment_array(shape: GridShape, axes: Sequence[int] = (0, 1)) -> MomentArray:
    """Moment array whose expectation is the checkerboard Spearman's rho of the ``axes`` margin.

    ``h_i = 12 (c(i_a) - 1/2)(c(i_b) - 1/2)`` with ``c`` the cell midpoint.
    """
    axes = check_axes(axes, shape.d)
    if len(axes) != 2:
        raise InvalidAxes(f"Spearman's rho needs exactly two axes, got {axes}")
    c = _cell_centers(shape.n) - 0.5
    reduced = 12.0 * np.multiply.outer(c, c)
    return MomentArray(lift(reduced, axes, shape.d))


def spearman_constraint(shape: GridShape, axes: Sequence[int], target: float) -> MomentConstraint:
    axes = check_axes(axes, shape.d)
    return MomentConstraint(axes, spearman_moment_array(shape, axes), target)


def spearman_of_array(p: ProbArray, axes: Sequence[int] = (0, 1)) -> float:
    """Spearman's rho of the checkerboard copula with skeleton ``p`` (on the ``axes`` margin)."""
    axes = check_axes(axes, p.d)
    if len(axes) != 2:
        raise InvalidAxes(f"Spearman's rho needs exactly two axes, got {axes}")
    c = _cell_centers(p.n) - 0.5
    m = margin_values(p.values, axes)
    return float(12.0 * (c @ m @ c))


def generic_moment_array(
    g: Callable[[np.ndarray], np.ndarray],
    axes: Sequence[int],
    shape: GridShape,
    subdivisions: int = 1,
) -> MomentArray:
    """Cell averages of ``g`` by tensor-product midpoint quadrature.

    ``g`` receives an array of points of shape ``(..., len(axes))`` and returns
    the values. Each cell uses ``subdivisions ** len(axes)`` nodes; the rule is
    exact for functions that are affine in each coordinate.
    """
    axes = check_axes(axes, shape.d)
    if subdivisions < 1:
        raise ValueError(f"subdivisions must be >= 1, got {subdivisions}")
    n, m, k = shape.n, subdivisions, len(axes)
    offsets = (np.arange(m) + 0.5) / (m * n)
    nodes_1d = (np.arange(n)[:, None] / n + offsets[None, :]).reshape(-1)  # (n*m,)
    mesh = np.stack(np.meshgrid(*([nodes_1d] * k), indexing="ij"), axis=-1)
    vals = np.asarray(g(mesh), dtype=float)
    if vals.shape != mesh.shape[:-1]:
        vals = np.broadcast_to(vals, mesh.shape[:-1])
    if not np.all(np.isfinite(vals)):
        raise NumericalError("integrand returned non-finite values")
    vals = vals.reshape(sum(([n, m] for _ in range(k)), []))
    reduced = vals.mean(axis=tuple(range(1, 2 * k, 2)))
    return MomentArray(lift(reduced, axes, shape.d))


def rho_bounds(n: int) -> tuple[float, float]:
    return -1.0 + 1.0 / n**2, 1.0 - 1.0 / n**2


def rho_range_check(alpha: float, n: int) -> bool:
    """True when ``alpha`` lies in the attainable checkerboard Spearman range [-1 + 1/n^2, 1 - 1/n^2]."""
    lo, hi = rho_bounds(n)
    return lo <= alpha <= hi


@dataclass(frozen=True)
class ProblemSpec:
    """Reference array plus constraint collections.

    Singleton margins with uniform targets are always present and come first;
    ``margins`` holds the user's higher-order margin constraints. A coordinate
    set may appear at most once across ``margins`` and ``moments``.
    """

    shape: GridShape
    margins: tuple[MarginConstraint, ...] = ()
    moments: tuple[MomentConstraint, ...] = ()
    reference: Optional[ProbArray] = None
    singletons: tuple[MarginConstraint, ...] = field(init=False, repr=False)

    def __post_init__(self):
        shape = self.shape
        if shape.d < 2:
            raise ShapeError(f"problems need d >= 2, got d={shape.d}")
        margins = tuple(self.margins)
        moments = tuple(self.moments)
        object.__setattr__(self, "margins", margins)
        object.__setattr__(self, "moments", moments)
        ref = self.reference
        if ref is None:
            ref = ProbArray.uniform(shape.d, shape.n)
        elif not isinstance(ref, ProbArray):
            ref = ProbArray(ref)
        if ref.shape != shape:
            raise ShapeError(f"reference has shape {ref.shape}, expected {shape}")
        object.__setattr__(self, "reference", ref)

        seen = set()
        for mc in margins:
            axes = check_axes(mc.axes, shape.d)
            if len(axes) < 2:
                raise InvalidAxes("singleton margins are implicit (uniform) and cannot be listed")
            if mc.target.n != shape.n:
                raise ShapeError(f"{mc.name}: target has n={mc.target.n}, expected {shape.n}")
            if axes in seen:
                raise InvalidAxes(f"coordinate set {mc.name} constrained twice")
            seen.add(axes)
        for mc in moments:
            axes = check_axes(mc.axes, shape.d)
            if mc.h.shape != shape:
                raise ShapeError(f"{mc.name}: moment array has shape {mc.h.shape}, expected {shape}")
            if axes in seen:
                raise InvalidAxes(f"coordinate set {axes_label('K', axes)} constrained twice")
            seen.add(axes)

        u1 = ProbArray(np.full(shape.n, 1.0 / shape.n))
        object.__setattr__(
            self, "singletons", tuple(MarginConstraint((ax,), u1) for ax in range(shape.d))
        )

    @property
    def all_margins(self) -> tuple[MarginConstraint, ...]:
        return self.singletons + self.margins

    @property
    def constraint_names(self) -> list[str]:
        return [mc.name for mc in self.all_margins] + [mc.name for mc in self.moments]


def residuals(p: ProbArray, spec: ProblemSpec) -> dict[str, float]:
    """Per-constraint errors: max margin deviation, or |expectation - target|."""
    if p.shape != spec.shape:
        raise ShapeError(f"array shape {p.shape} does not match problem shape {spec.shape}")
    return residuals_of_values(p.values, spec)


def residuals_of_values(values: np.ndarray, spec: ProblemSpec) -> dict[str, float]:
    out = {}
    for mc in spec.all_margins:
        m = margin_values(values, mc.axes)
        out[mc.name] = float(np.max(np.abs(m - mc.target.values)))
    for mc in spec.moments:
        m = margin_values(values, mc.axes)
        out[mc.name] = abs(float(np.sum(m * mc.reduced)) - mc.target)
    return out


def moment_values(p: ProbArray, spec: ProblemSpec) -> dict[str, float]:
    """Current expectation of every moment constraint's array."""
    return {
        mc.name: float(np.sum(margin_values(p.values, mc.axes) * mc.reduced)) for mc in spec.moments
    }
