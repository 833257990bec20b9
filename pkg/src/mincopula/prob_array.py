"""Dense probability arrays over the grid [n]^d.

Arrays are held as C-ordered numpy arrays of shape ``(n,) * d``, so the
flattened order is row-major with the last coordinate varying fastest.
Axes are 0-based throughout the Python API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import InvalidArray, InvalidAxes, ShapeError

SUM_TOL = 1e-12
DEFAULT_MAX_CELLS = 2**31


@dataclass(frozen=True)
class GridShape:
    """Grid [n]^d: ``d`` axes of ``n`` points each."""

    d: int
    n: int
    max_cells: int = field(default=DEFAULT_MAX_CELLS, compare=False, repr=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ShapeError(f"d must be a positive integer, got {self.d!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ShapeError(f"n must be an integer >= 2, got {self.n!r}")
        if self.n**self.d > self.max_cells:
            raise ShapeError(
                f"grid with n={self.n}, d={self.d} has {self.n**self.d} cells, "
                f"above the cap of {self.max_cells}"
            )

    @property
    def cells(self) -> int:
        return self.n**self.d

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.n,) * self.d


def _shape_of(values: np.ndarray) -> GridShape:
    if values.ndim < 1 or len(set(values.shape)) != 1:
        raise ShapeError(f"array must have equal axis lengths, got {values.shape}")
    return GridShape(values.ndim, values.shape[0])


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    arr.flags.writeable = False
    return arr


class ProbArray:
    """Nonnegative array over [n]^d whose entries sum to one.

    The sum is checked to within ``1e-12`` but never renormalized.
    Instances are immutable.
    """

    __slots__ = ("values", "shape")

    def __init__(self, values, *, check: bool = True):
        arr = _frozen(values)
        self.shape = _shape_of(arr)
        if check:
            if not np.all(np.isfinite(arr)):
                raise InvalidArray("probability array has non-finite entries")
            if np.any(arr < 0):
                raise InvalidArray(f"probability array has negative entries (min {arr.min():.3e})")
            total = arr.sum()
            if abs(total - 1.0) > SUM_TOL:
                raise InvalidArray(f"probability array sums to {total!r}, not 1")
        self.values = arr

    @classmethod
    def from_flat(cls, flat: Sequence[float], d: int, n: int) -> "ProbArray":
        shape = GridShape(d, n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != shape.cells:
            raise ShapeError(f"expected {shape.cells} values for d={d}, n={n}, got {flat.size}")
        return cls(flat.reshape(shape.dims))

    @classmethod
    def uniform(cls, d: int, n: int) -> "ProbArray":
        shape = GridShape(d, n)
        return cls(np.full(shape.dims, 1.0 / shape.cells))

    @classmethod
    def point_mass(cls, d: int, n: int, index: Sequence[int]) -> "ProbArray":
        """Unit mass at the 0-based multi-index ``index``."""
        shape = GridShape(d, n)
        arr = np.zeros(shape.dims)
        arr[tuple(index)] = 1.0
        return cls(arr)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def n(self) -> int:
        return self.shape.n

    def support(self) -> np.ndarray:
        return support(self)

    def __repr__(self):
        return f"ProbArray(d={self.d}, n={self.n})"

    def __eq__(self, other):
        if not isinstance(other, ProbArray):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    __hash__ = None


class MomentArray:
    """Real-valued array over [n]^d, finite entries only."""

    __slots__ = ("values", "shape")

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.flags.writeable:
            arr = _frozen(arr)
        self.shape = _shape_of(arr)
        if not np.all(np.isfinite(arr)):
            raise InvalidArray("moment array has non-finite entries")
        self.values = arr

    @property
    def flat(self) -> np.ndarray:
        return np.ascontiguousarray(self.values).reshape(-1)

    def __repr__(self):
        return f"MomentArray(d={self.shape.d}, n={self.shape.n})"


def check_axes(axes: Sequence[int], d: int) -> tuple[int, ...]:
    """Validate a 0-based, strictly increasing, nonempty coordinate set."""
    axes = tuple(axes)
    if not axes:
        raise InvalidAxes("coordinate set must be nonempty")
    for a in axes:
        if isinstance(a, bool) or int(a) != a:
            raise InvalidAxes(f"axes must be integers, got {axes!r}")
    axes = tuple(int(a) for a in axes)
    if any(a < 0 or a >= d for a in axes):
        raise InvalidAxes(f"axes {axes} out of range for d={d}")
    if any(b <= a for a, b in zip(axes, axes[1:])):
        raise InvalidAxes(f"axes must be strictly increasing, got {axes}")
    return axes


def margin_values(values: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Sum ``values`` over every axis not in ``axes`` (no validation)."""
    other = tuple(a for a in range(values.ndim) if a not in axes)
    if not other:
        return np.array(values)
    return values.sum(axis=other)


def margin(p: ProbArray, axes: Sequence[int]) -> ProbArray:
    """The ``axes``-margin of ``p``, an array over [n]^{len(axes)}."""
    axes = check_axes(axes, p.d)
    return ProbArray(margin_values(p.values, axes))


def support(p) -> np.ndarray:
    """Boolean mask of strictly positive cells (exact zero is outside)."""
    return np.asarray(p.values if hasattr(p, "values") else p) > 0


def support_subset(p: ProbArray, q: ProbArray) -> bool:
    """True when supp(p) is contained in supp(q)."""
    _same_shape(p, q)
    return not np.any(support(p) & ~support(q))


def _same_shape(p, q):
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {q.shape}")


def kl_divergence(p: ProbArray, q: ProbArray) -> float:
    """Kullback-Leibler divergence I(p || q), ``inf`` when supp(p) is not inside supp(q)."""
    _same_shape(p, q)
    # rel_entr implements 0 log 0 = 0, 0 log(0/0) = 0 and x log(x/0) = inf.
    return float(np.sum(rel_entr(p.values, q.values)))


class CopulaCheck(NamedTuple):
    ok: bool
    max_error: float


def is_copula_array(p: ProbArray, tol: float = 1e-12) -> CopulaCheck:
    """Check that every univariate margin of ``p`` is uniform to within ``tol``."""
    err = 0.0
    for axis in range(p.d):
        m = margin_values(p.values, (axis,))
        err = max(err, float(np.max(np.abs(m - 1.0 / p.n))))
    return CopulaCheck(err <= tol, err)


def max_abs_diff(p, q) -> float:
    _same_shape(p, q)
    return float(np.max(np.abs(p.values - q.values)))


def linear_index(index: Sequence[int], n: int) -> int:
    """Row-major position of the 1-based multi-index ``index``.

    ``L(i) = sum_k (i_k - 1) * n**(d - k)``; the result is 0-based.
    """
    d = len(index)
    out = 0
    for k, i in enumerate(index, start=1):
        if not 1 <= i <= n:
            raise InvalidAxes(f"index component {i} outside [1, {n}]")
        out += (i - 1) * n ** (d - k)
    return out


def multi_index(position: int, d: int, n: int) -> tuple[int, ...]:
    """Inverse of :func:`linear_index`."""
    if not 0 <= position < n**d:
        raise InvalidAxes(f"linear index {position} outside [0, {n**d})")
    digits = []
    for _ in range(d):
        position, r = divmod(position, n)
        digits.append(r + 1)
    return tuple(reversed(digits))
