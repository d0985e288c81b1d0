"""Assembly of the nonconforming method on box meshes.

Degrees of freedom are facet means. Dirichlet data enters by lifting:
boundary dofs are fixed to facet means of g and their coupling columns
are folded into the right-hand side, so the assembled system only
carries interior unknowns.

Element loops are chunked so the (chunk, nq, dim, ndof) gradient
tensors stay small regardless of mesh size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import (BrokenRT, basis_gradients, basis_values,
                       cell_quadrature, facet_quadrature, nc_basis,
                       span_gradients, span_values)
from .mesh import TensorMesh
from .problems import Problem

CHUNK = 2048


def _blocks(n: int, size: int = CHUNK):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


@dataclass(frozen=True)
class DofMap:
    """Facet-based dof numbering: interior facets are unknowns."""

    mesh: TensorMesh
    unknown: np.ndarray          # (nf,) unknown index, -1 on the boundary
    interior: np.ndarray         # (n_unknown,) facet ids
    boundary: np.ndarray         # (nb,) facet ids

    @property
    def n_unknown(self) -> int:
        return self.interior.size


def dof_map(mesh: TensorMesh) -> DofMap:
    hit = mesh._cache.get("dof_map")
    if hit is None:
        unknown = np.full(mesh.nf, -1, dtype=np.int64)
        unknown[mesh.interior_facets] = np.arange(mesh.interior_facets.size)
        hit = DofMap(mesh=mesh, unknown=unknown,
                     interior=mesh.interior_facets,
                     boundary=mesh.boundary_facets)
        mesh._cache["dof_map"] = hit
    return hit


def boundary_means(mesh: TensorMesh, g) -> np.ndarray:
    """Facet means of g on boundary facets, ordered like boundary_facets."""
    pts, wts = facet_quadrature(mesh)
    b = mesh.boundary_facets
    vals = g(pts[b])
    return np.einsum("fq,fq->f", wts[b], vals) / mesh.facet_measure[b]


@dataclass
class LinearSystem:
    """Assembled interior system plus the boundary data it was lifted with."""

    mesh: TensorMesh
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    bc_values: np.ndarray        # per boundary facet, ordered like boundary

    def full_dofs(self, x: np.ndarray) -> np.ndarray:
        """Combine solved unknowns with boundary values into (nf,)."""
        full = np.empty(self.mesh.nf)
        full[self.dofmap.interior] = x
        full[self.dofmap.boundary] = self.bc_values
        return full


def assemble(mesh: TensorMesh, problem: Problem) -> LinearSystem:
    """Assemble stiffness, convection, reaction, and load terms.

    All element integrals use the tensor Gauss rule of cell_quadrature.
    """
    if problem.dim != mesh.dim:
        raise ValueError(
            f"problem dimension {problem.dim} != mesh dimension {mesh.dim}")
    tables = nc_basis(mesh, "mean")
    dm = dof_map(mesh)
    pts, wts = cell_quadrature(mesh)
    ndof = 2 * mesh.dim

    g_full = np.zeros(mesh.nf)
    bc = boundary_means(mesh, problem.boundary)
    g_full[dm.boundary] = bc

    rows, cols, data = [], [], []
    rhs = np.zeros(dm.n_unknown)
    for blk in _blocks(mesh.ne):
        sub = _slice_tables(tables, blk)
        p, w = pts[blk], wts[blk]
        phi = basis_values(sub, p)                     # (b, nq, ndof)
        gphi = basis_gradients(sub, p)                 # (b, nq, d, ndof)
        aval = problem.a(p)
        local = np.einsum("bq,bqdi,bqdj->bij", w * aval, gphi, gphi)
        if problem.b is not None:
            bdotg = np.einsum("bqd,bqdj->bqj", problem.b(p), gphi)
            local += np.einsum("bq,bqj,bqi->bij", w, bdotg, phi)
        if problem.c is not None:
            local += np.einsum("bq,bqj,bqi->bij", w * problem.c(p), phi, phi)
        load = np.einsum("bq,bqi->bi", w * problem.f(p), phi)

        facets = mesh.elem_facets[blk]                 # (b, ndof)
        load -= np.einsum("bij,bj->bi", local, g_full[facets])
        unk = dm.unknown[facets]
        ri = np.repeat(unk, ndof, axis=1).ravel()
        ci = np.tile(unk, (1, ndof)).ravel()
        keep = (ri >= 0) & (ci >= 0)
        rows.append(ri[keep])
        cols.append(ci[keep])
        data.append(local.ravel()[keep])
        rkeep = unk.ravel() >= 0
        np.add.at(rhs, unk.ravel()[rkeep], load.ravel()[rkeep])

    n = dm.n_unknown
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    return LinearSystem(mesh=mesh, matrix=matrix, rhs=rhs, dofmap=dm,
                        bc_values=bc)


def _slice_tables(tables, blk):
    from .elements import BasisTables
    return BasisTables(kind=tables.kind, center=tables.center[blk],
                       scale=tables.scale[blk], coeff=tables.coeff[blk])


@dataclass
class NcrtField:
    """A scalar field in the nonconforming space, stored by facet dofs.

    coeffs holds the per-element monomial coefficients in the centered,
    scaled local frame of its basis tables.
    """

    mesh: TensorMesh
    kind: str
    dofs: np.ndarray             # (nf,)
    coeffs: np.ndarray           # (ne, nm)

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Field values at element-local points (ne, nq, d) -> (ne, nq)."""
        tables = nc_basis(self.mesh, self.kind)
        out = np.empty(pts.shape[:-1])
        for blk in _blocks(self.mesh.ne):
            xi = ((pts[blk] - tables.center[blk, None, :])
                  / tables.scale[blk, None, None])
            out[blk] = np.einsum("eqm,em->eq", span_values(xi),
                                 self.coeffs[blk])
        return out

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        """Gradients at element-local points (ne, nq, d) -> (ne, nq, d)."""
        tables = nc_basis(self.mesh, self.kind)
        out = np.empty(pts.shape)
        for blk in _blocks(self.mesh.ne):
            xi = ((pts[blk] - tables.center[blk, None, :])
                  / tables.scale[blk, None, None])
            g = span_gradients(xi, 1.0 / tables.scale[blk, None])
            out[blk] = np.einsum("eqdm,em->eqd", g, self.coeffs[blk])
        return out

    def values_at_centers(self) -> np.ndarray:
        # centered monomials all vanish at the center except the constant
        return self.coeffs[:, 0].copy()

    def gradients_at_centers(self) -> np.ndarray:
        tables = nc_basis(self.mesh, self.kind)
        d = self.mesh.dim
        return self.coeffs[:, 1:d + 1] / tables.scale[:, None]

    def gradient_rt(self) -> BrokenRT:
        """The broken gradient, exactly represented component-wise."""
        mesh = self.mesh
        d = mesh.dim
        tables = nc_basis(mesh, self.kind)
        s = tables.scale
        c = tables.center
        alpha = np.empty((mesh.ne, d))
        beta = np.empty((mesh.ne, d))
        quad = self.coeffs[:, d + 1:]                  # (ne, d-1)
        beta[:, 0] = 2.0 * quad.sum(axis=1) / s**2
        for k in range(1, d):
            beta[:, k] = -2.0 * quad[:, k - 1] / s**2
        alpha = self.coeffs[:, 1:d + 1] / s[:, None] - beta * c
        return BrokenRT(mesh, alpha, beta)


def reconstruct_field(mesh: TensorMesh, dofs: np.ndarray,
                      kind: str = "mean") -> NcrtField:
    """Build the element-wise polynomial representation from facet dofs."""
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape != (mesh.nf,):
        raise ValueError(f"expected {mesh.nf} dof values, got {dofs.shape}")
    tables = nc_basis(mesh, kind)
    coeffs = np.einsum("emj,ej->em", tables.coeff, dofs[mesh.elem_facets])
    return NcrtField(mesh=mesh, kind=kind, dofs=dofs, coeffs=coeffs)
