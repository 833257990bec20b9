"""Checkerboard copulas: discretizing parametric copulas into skeletons,
evaluating checkerboard distribution functions and sampling.

Cells are ``B_i = A_{i_1} x ... x A_{i_d}`` with ``A_1 = [0, 1/n]`` and
``A_i = ((i-1)/n, i/n]``; in 0-based terms cell ``i`` spans ``[i/n, (i+1)/n]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from scipy.special import ndtri

from ._bvn import bvn_cdf
from .errors import DomainError, InvalidParameter, NumericalError, ShapeError
from .prob_array import GridShape, ProbArray, is_copula_array

FAMILIES = ("independence", "comonotone", "gaussian", "clayton", "gumbel")
NEGATIVE_CLAMP = 1e-13

#: Generator used by :func:`sample`: numpy's PCG64 seeded with the given integer.
SAMPLER_BIT_GENERATOR = "PCG64"


@dataclass(frozen=True)
class CopulaFamily:
    """A parametric copula.

    ``kind`` is one of ``independence`` (any d), ``comonotone``, ``gaussian``
    (Pearson parameter in (-1, 1)), ``clayton`` (theta > 0) or ``gumbel``
    (theta >= 1); all but independence are bivariate.
    """

    kind: str
    param: Optional[float] = None
    d: int = 2

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise InvalidParameter(f"unknown copula family {self.kind!r}; expected one of {FAMILIES}")
        if self.kind != "independence" and self.d != 2:
            raise InvalidParameter(f"{self.kind} copula is only available for d=2, got d={self.d}")
        if self.d < 1:
            raise InvalidParameter(f"d must be positive, got {self.d}")
        p = self.param
        if self.kind in ("gaussian", "clayton", "gumbel"):
            if p is None or not math.isfinite(p):
                raise InvalidParameter(f"{self.kind} copula needs a finite parameter, got {p!r}")
        if self.kind == "gaussian" and not -1.0 < p < 1.0:
            raise InvalidParameter(f"gaussian parameter must lie in (-1, 1), got {p}")
        if self.kind == "clayton" and not p > 0.0:
            raise InvalidParameter(f"clayton parameter must be > 0, got {p}")
        if self.kind == "gumbel" and not p >= 1.0:
            raise InvalidParameter(f"gumbel parameter must be >= 1, got {p}")

    def cdf(self, points) -> np.ndarray:
        """Copula distribution function at ``points`` of shape ``(..., d)``."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.d:
            raise ShapeError(f"points must have last axis {self.d}, got {pts.shape}")
        if np.any((pts < 0) | (pts > 1)) or np.any(np.isnan(pts)):
            raise DomainError("copula arguments must lie in [0, 1]")
        if self.kind == "independence":
            return np.prod(pts, axis=-1)
        u, v = pts[..., 0], pts[..., 1]
        if self.kind == "comonotone":
            return np.minimum(u, v)
        if self.kind == "gaussian":
            return bvn_cdf(ndtri(u), ndtri(v), self.param)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.kind == "clayton":
                t = self.param
                s = u**-t + v**-t - 1.0
                out = s ** (-1.0 / t)
                return np.where((u == 0) | (v == 0), 0.0, out)
            t = self.param
            s = (-np.log(u)) ** t + (-np.log(v)) ** t
            return np.exp(-(s ** (1.0 / t)))


def gaussian_rho_to_pearson(rho_s: float) -> float:
    """Pearson parameter of the bivariate normal copula with Spearman's rho ``rho_s``."""
    if not -1.0 <= rho_s <= 1.0:
        raise DomainError(f"Spearman's rho must lie in [-1, 1], got {rho_s}")
    return 2.0 * math.sin(math.pi * rho_s / 6.0)


def _cell_volumes(grid_cdf: np.ndarray) -> np.ndarray:
    """d-fold finite differences of corner values: inclusion-exclusion per cell."""
    out = grid_cdf
    for axis in range(grid_cdf.ndim):
        out = np.diff(out, axis=axis)
    return out


def skeleton_from_copula(family: CopulaFamily, shape: GridShape) -> ProbArray:
    """Copula array whose entries are the C-volumes of the n^d cells."""
    if family.d != shape.d:
        raise ShapeError(f"family has d={family.d} but grid has d={shape.d}")
    n = shape.n
    if family.kind == "independence":
        return ProbArray(np.full(shape.dims, 1.0 / shape.cells))
    g = np.arange(n + 1) / n
    corners = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    values = family.cdf(corners)
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{family.kind} copula returned non-finite values on the grid")
    vol = _cell_volumes(values)
    if vol.min() < -NEGATIVE_CLAMP:
        raise NumericalError(f"negative cell volume {vol.min():.3e} for {family}")
    vol = np.maximum(vol, 0.0)
    vol = vol / vol.sum()
    return ProbArray(vol)


class CheckerboardModel:
    """Checkerboard copula given by its skeleton (a copula array)."""

    def __init__(self, skeleton: ProbArray, tol: float = 1e-10):
        check = is_copula_array(skeleton, tol)
        if not check.ok:
            raise ShapeError(f"skeleton is not a copula array (margin error {check.max_error:.3e})")
        self.skeleton = skeleton

    @property
    def shape(self) -> GridShape:
        return self.skeleton.shape

    def cdf(self, v) -> np.ndarray:
        return checkerboard_cdf(self, v)


def _axis_weights(v: np.ndarray, n: int) -> np.ndarray:
    # Fraction of each cell A_i lying in [0, v], for every point: shape (..., n).
    return np.clip(n * v[..., None] - np.arange(n), 0.0, 1.0)


def checkerboard_cdf(model: CheckerboardModel, v) -> Union[float, np.ndarray]:
    """Distribution function of the checkerboard copula at ``v`` (shape ``(d,)`` or ``(m, d)``)."""
    p = model.skeleton
    pts = np.asarray(v, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != p.d:
        raise ShapeError(f"points must have {p.d} coordinates, got {pts.shape[-1]}")
    if np.any(np.isnan(pts)) or np.any((pts < 0) | (pts > 1)):
        raise DomainError("checkerboard d.f. arguments must lie in [0, 1]")
    res = np.tensordot(_axis_weights(pts[:, 0], p.n), p.values, axes=([1], [0]))
    for k in range(1, p.d):
        res = np.einsum("mi...,mi->m...", res, _axis_weights(pts[:, k], p.n))
    return float(res[0]) if single else res


def _checkerboard_on_grid(p: ProbArray, g: np.ndarray) -> np.ndarray:
    w = _axis_weights(g, p.n)
    res = p.values
    for _ in range(p.d):
        # contracting the leading axis and appending the grid axis cycles through all d axes
        res = np.tensordot(res, w, axes=([0], [1]))
    return res


def approximation_gap(family: CopulaFamily, shape: GridShape, points_per_axis: int = 101) -> float:
    """Largest |checkerboard d.f. - copula d.f.| over a regular tensor grid of test points."""
    g = np.linspace(0.0, 1.0, points_per_axis)
    skeleton = skeleton_from_copula(family, shape)
    approx = _checkerboard_on_grid(skeleton, g)
    mesh = np.stack(np.meshgrid(*([g] * shape.d), indexing="ij"), axis=-1)
    exact = family.cdf(mesh)
    return float(np.max(np.abs(approx - exact)))


def sample(
    model: Union[CheckerboardModel, ProbArray],
    count: int,
    seed: int,
    mode: Literal["cell_centers", "continuous"] = "continuous",
) -> np.ndarray:
    """Draw ``count`` points in [0, 1]^d.

    A cell is chosen with probability equal to its skeleton entry by inverse-CDF
    search over the row-major cumulative sums, driven by ``PCG64(seed)``.
    ``cell_centers`` returns the cell midpoint; ``continuous`` adds independent
    uniform offsets inside the cell (drawn after all cell uniforms).
    """
    p = model.skeleton if isinstance(model, CheckerboardModel) else model
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if mode not in ("cell_centers", "continuous"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cum = np.cumsum(p.flat)
    u = rng.random(count) * cum[-1]
    pos = np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)
    cells = np.stack(np.unravel_index(pos, p.shape.dims), axis=-1).astype(float)
    if mode == "cell_centers":
        return (cells + 0.5) / p.n
    return (cells + rng.random((count, p.d))) / p.n
