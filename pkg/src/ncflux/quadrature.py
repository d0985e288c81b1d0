"""Gauss quadrature on intervals, tensor-product boxes, and triangles.

Reference rules live on the unit interval [0, 1], the unit box [0, 1]^d,
or the unit triangle with vertices (0, 0), (1, 0), (0, 1). Mapping helpers
push a reference rule onto physical geometry, batched over many cells at
once (leading axes of ``lo``/``ext``/``verts`` broadcast).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Nodes and weights on a reference domain.

    points has shape (nq,) for interval rules and (nq, dim) otherwise;
    weights has shape (nq,) and sums to the reference measure.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def npoints(self) -> int:
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def gauss1d_4() -> QuadRule:
    """4-point Gauss-Legendre rule on [0, 1], exact through degree 7."""
    t, w = np.polynomial.legendre.leggauss(4)
    return QuadRule((t + 1.0) / 2.0, w / 2.0)


@lru_cache(maxsize=None)
def tensor_rule(dim: int) -> QuadRule:
    """Tensor product of the 4-point Gauss rule on [0, 1]^dim.

    4^dim points; exact for polynomials of degree <= 7 in each variable.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    line = gauss1d_4()
    grids = np.meshgrid(*([line.points] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(points.shape[0])
    wgrids = np.meshgrid(*([line.weights] * dim), indexing="ij")
    for wg in wgrids:
        weights = weights * wg.ravel()
    return QuadRule(points, weights)


@lru_cache(maxsize=None)
def triangle_rule() -> QuadRule:
    """7-point degree-5 rule on the unit triangle (weights sum to 1/2)."""
    s15 = np.sqrt(15.0)
    a1 = (6.0 + s15) / 21.0
    a2 = (6.0 - s15) / 21.0
    w0 = 9.0 / 40.0
    w1 = (155.0 + s15) / 1200.0
    w2 = (155.0 - s15) / 1200.0
    points = np.array([
        [1.0 / 3.0, 1.0 / 3.0],
        [a1, a1], [1.0 - 2.0 * a1, a1], [a1, 1.0 - 2.0 * a1],
        [a2, a2], [1.0 - 2.0 * a2, a2], [a2, 1.0 - 2.0 * a2],
    ])
    weights = 0.5 * np.array([w0, w1, w1, w1, w2, w2, w2])
    return QuadRule(points, weights)


def map_to_interval(rule: QuadRule, a: float, b: float):
    """Map an interval rule from [0, 1] to [a, b]."""
    return a + (b - a) * rule.points, (b - a) * rule.weights


def map_to_box(rule: QuadRule, lo: np.ndarray, ext: np.ndarray):
    """Map a box rule from [0, 1]^d onto axis-aligned boxes.

    lo and ext have shape (..., d); returns points (..., nq, d) and
    weights (..., nq).
    """
    lo = np.asarray(lo, dtype=float)
    ext = np.asarray(ext, dtype=float)
    points = lo[..., None, :] + ext[..., None, :] * rule.points
    weights = np.prod(ext, axis=-1)[..., None] * rule.weights
    return points, weights


def map_to_triangle(rule: QuadRule, verts: np.ndarray):
    """Map the triangle rule onto physical triangles.

    verts has shape (..., 3, 2); returns points (..., nq, 2) and weights
    (..., nq) summing to each triangle's area.
    """
    verts = np.asarray(verts, dtype=float)
    v0 = verts[..., 0, :]
    e1 = verts[..., 1, :] - v0
    e2 = verts[..., 2, :] - v0
    t = rule.points
    points = (v0[..., None, :]
              + t[:, 0, None] * e1[..., None, :]
              + t[:, 1, None] * e2[..., None, :])
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    weights = np.abs(det)[..., None] * rule.weights
    return points, weights
