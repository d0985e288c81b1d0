"""Flux correction and superconvergent recovery on box meshes.

The discrete flux of the nonconforming method is discontinuous across
facets. Three ingredients repair it:

* a divergence-one correction field, scaled per element so that the
  corrected flux has (numerically) continuous normal components;
* the element-wise L2 projection of the raw flux onto the span of the
  local shape-function gradients, which is where the correction theory
  lives;
* a midpoint-averaging operator that turns the corrected flux into a
  midpoint-continuous vector field, using measure-weighted averages at
  interior facets and extrapolation along inward chains at boundary
  facets.

The same code paths serve 2d (edges) and 3d (faces).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import NcrtField, _blocks, _slice_tables
from .elements import (BrokenRT, basis_values, cell_quadrature,
                       facet_quadrature, nc_basis)
from .mesh import TensorMesh
from .problems import Problem


def correction_field(mesh: TensorMesh) -> BrokenRT:
    """Element-wise field r with div r = 1 and special orthogonality.

    On element K with extents l_1..l_d centered at x_K,

        r_i(x) = gamma_i (x_i - x_K,i),
        gamma_i = prod_{j != i} l_j^2 / sum_k prod_{j != k} l_j^2.

    The coefficients make r L2(K)-orthogonal to every divergence-free
    local flux polynomial, which is what lets a piecewise-constant
    multiple of r cancel the normal jumps of the discrete flux.
    """
    l2 = mesh.elem_ext ** 2
    prod = np.prod(l2, axis=1, keepdims=True)
    p = prod / l2                      # p[:, i] = prod_{j != i} l_j^2
    gamma = p / p.sum(axis=1, keepdims=True)
    return BrokenRT(mesh, alpha=-gamma * mesh.elem_center, beta=gamma)


def project_onto_gradients(mesh: TensorMesh, values: np.ndarray,
                           pts: np.ndarray, wts: np.ndarray) -> BrokenRT:
    """Element-wise L2 projection onto the local gradient span.

    The target span on each element is generated by the constant fields
    e_1..e_d together with the gradients of the quadratic shape
    monomials, i.e. fields of the form (2 x_1, 0, .., -2 x_k, .., 0).
    values (ne, nq, d) are samples of the projected function at the
    quadrature points pts with weights wts; Gram systems are assembled
    per element from the same rule.
    """
    d = mesh.dim
    nb = 2 * d - 1
    tables = nc_basis(mesh, "mean")
    ne = mesh.ne
    coef = np.empty((ne, nb))
    for blk in _blocks(ne):
        xi = ((pts[blk] - tables.center[blk, None, :])
              / tables.scale[blk, None, None])
        nq = pts.shape[1]
        B = np.zeros((xi.shape[0], nq, d, nb))
        for j in range(d):
            B[:, :, j, j] = 1.0
        for k in range(1, d):
            B[:, :, 0, d + k - 1] = xi[..., 0]
            B[:, :, k, d + k - 1] = -xi[..., k]
        gram = np.einsum("eq,eqdi,eqdj->eij", wts[blk], B, B)
        rhs = np.einsum("eq,eqd,eqdi->ei", wts[blk], values[blk], B)
        coef[blk] = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
    s = tables.scale
    beta = np.empty((ne, d))
    beta[:, 0] = coef[:, d:].sum(axis=1) / s
    for k in range(1, d):
        beta[:, k] = -coef[:, d + k - 1] / s
    alpha = coef[:, :d] - beta * tables.center
    return BrokenRT(mesh, alpha, beta)


def corrected_flux(field: NcrtField, problem: Problem,
                   variant: str = "centroid") -> BrokenRT:
    """Continuity-corrected discrete flux.

    Projects a grad u_h onto the local gradient span, then subtracts the
    correction field scaled by the residual load f - b.grad u_h - c u_h.
    variant "centroid" samples that scalar at element centroids (the
    cheap choice used for the convergence tables); "projected" uses its
    element mean.
    """
    mesh = field.mesh
    pts, wts = cell_quadrature(mesh)
    grads = field.gradients(pts)
    raw = problem.a(pts)[..., None] * grads
    q = project_onto_gradients(mesh, raw, pts, wts)

    if variant == "centroid":
        xc = mesh.elem_center
        p = problem.f(xc)
        gc = field.gradients_at_centers()
        if problem.b is not None:
            p = p - np.einsum("ed,ed->e", problem.b(xc), gc)
        if problem.c is not None:
            p = p - problem.c(xc) * field.values_at_centers()
    elif variant == "projected":
        pv = problem.f(pts)
        if problem.b is not None:
            pv = pv - np.einsum("eqd,eqd->eq", problem.b(pts), grads)
        if problem.c is not None:
            pv = pv - problem.c(pts) * field.values(pts)
        p = np.einsum("eq,eq->e", wts, pv) / mesh.elem_measure
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return q - correction_field(mesh).scaled_by(p)


def rt_interpolate(mesh: TensorMesh, vec) -> BrokenRT:
    """Canonical facet-flux interpolant of a continuous vector field.

    Matches the facet integrals of the normal component, facet by facet,
    with the Gauss facet rule; the result has continuous normal
    components by construction. vec maps points (..., d) to (..., d).
    """
    pts, wts = facet_quadrature(mesh)
    vals = vec(pts)
    normal_comp = np.take_along_axis(
        vals, mesh.facet_axis[:, None, None], axis=2)[..., 0]
    dofs = np.einsum("fq,fq->f", wts, normal_comp)

    d = mesh.dim
    alpha = np.empty((mesh.ne, d))
    beta = np.empty((mesh.ne, d))
    for k in range(d):
        lo_id = mesh.elem_facets[:, 2 * k]
        hi_id = mesh.elem_facets[:, 2 * k + 1]
        area = mesh.facet_measure[lo_id]
        beta[:, k] = (dofs[hi_id] - dofs[lo_id]) / mesh.elem_measure
        alpha[:, k] = dofs[lo_id] / area - beta[:, k] * mesh.elem_lo[:, k]
    return BrokenRT(mesh, alpha, beta)


def max_normal_jump(flux: BrokenRT) -> float:
    """Largest normal-component jump over interior facets.

    Normal traces of the flux polynomials are constant along each facet,
    so midpoint traces capture the jumps exactly.
    """
    mesh = flux.mesh
    traces = flux.midpoint_traces()
    inter = mesh.interior_facets
    if inter.size == 0:
        return 0.0
    ax = mesh.facet_axis[inter]
    lo = traces[inter, 0, :][np.arange(inter.size), ax]
    hi = traces[inter, 1, :][np.arange(inter.size), ax]
    return float(np.abs(hi - lo).max())


@dataclass
class MidpointFlux:
    """Vector field with one value per facet midpoint.

    Componentwise it lives in the midpoint-dof nonconforming space, so
    values anywhere come from the midpoint-dual basis of each element.
    """

    mesh: TensorMesh
    values: np.ndarray           # (nf, d)

    def eval_at(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at element-local points (ne, nq, d) -> (ne, nq, d)."""
        mesh = self.mesh
        tables = nc_basis(mesh, "midpoint")
        out = np.empty(pts.shape)
        for blk in _blocks(mesh.ne):
            phi = basis_values(_slice_tables(tables, blk), pts[blk])
            local = self.values[mesh.elem_facets[blk]]       # (b, ndof, d)
            out[blk] = np.einsum("bqj,bjd->bqd", phi, local)
        return out


def midpoint_average(flux: BrokenRT) -> MidpointFlux:
    """Average a broken flux into facet-midpoint values.

    Interior facet midpoints take the measure-weighted average of the
    two one-sided traces, each trace weighted by the measure of the
    element across the facet. Boundary midpoints are filled by linear
    extrapolation along the inward chain of facets: with E' the next
    facet into the mesh and E'' the one after,

        value(E) = (value(E') - w' value(E'')) / w,
        w = |K'| / (|K| + |K'|),  w' = |K| / (|K| + |K'|),

    where K is the boundary element and K' its inward neighbor. When E''
    is itself a boundary facet (only two elements across the axis), the
    one-sided trace from K' replaces value(E''). Meshes with fewer than
    two elements across an axis cannot support the chain and are
    rejected.
    """
    mesh = flux.mesh
    d = mesh.dim
    for k in range(d):
        if mesh.shape[k] < 2:
            raise ValueError(
                "boundary extrapolation needs >= 2 elements per axis; "
                f"axis {k} has {mesh.shape[k]}")
    traces = flux.midpoint_traces()
    measure = mesh.elem_measure
    vals = np.empty((mesh.nf, d))

    inter = mesh.interior_facets
    m = measure[mesh.facet_elems[inter]]           # (ni, 2)
    wsum = m.sum(axis=1, keepdims=True)
    vals[inter] = (m[:, [0]] * traces[inter, 1, :]
                   + m[:, [1]] * traces[inter, 0, :]) / wsum

    for k in range(d):
        block = mesh.facet_block(k)
        ids_all = np.arange(block.start, block.stop)
        pos = mesh.facet_pos[block]
        step = mesh.cross_size(k)
        n_k = mesh.shape[k]
        for side, sign in ((0, 1), (1, -1)):
            ids = ids_all[pos == (0 if side == 0 else n_k)]
            e1 = ids + sign * step
            e2 = ids + 2 * sign * step
            inner = 1 if side == 0 else 0
            K = mesh.facet_elems[ids, inner]
            Kp = mesh.facet_elems[e1, inner]
            w = measure[Kp] / (measure[K] + measure[Kp])
            wp = measure[K] / (measure[K] + measure[Kp])
            # When E'' is the opposite boundary facet (two elements
            # across), K' is its one adjacent element: below it on the
            # low-side chain, above it on the high-side chain.
            m2 = np.where(mesh.facet_boundary[e2][:, None],
                          traces[e2, side, :], vals[e2])
            vals[ids] = (vals[e1] - wp[:, None] * m2) / w[:, None]
    return MidpointFlux(mesh, vals)
