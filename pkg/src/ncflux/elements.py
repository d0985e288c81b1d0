"""Local finite element bases and the broken flux polynomial type.

The scalar nonconforming space on a box element K is spanned by
{1, x_1, ..., x_d, x_1^2 - x_2^2, ..., x_1^2 - x_d^2}; its 2d degrees of
freedom sit on the facets of K, either as facet means ("mean") or as
facet-midpoint values ("midpoint"). On triangles the space is the
classic midpoint-continuous linear element.

All tables are built for every element at once. Monomials are expressed
in centered coordinates xi = (x - center)/scale, which keeps the dual
(generalized Vandermonde) systems well conditioned under refinement; the
scale is uniform across components so the difference-of-squares terms
stay inside the span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TensorMesh, TriMesh
from .quadrature import map_to_box, map_to_triangle, tensor_rule, triangle_rule


def span_size(dim: int) -> int:
    return 2 * dim


def span_values(xi: np.ndarray) -> np.ndarray:
    """Evaluate the local span at scaled coordinates xi (..., d)."""
    d = xi.shape[-1]
    cols = [np.ones(xi.shape[:-1])]
    for k in range(d):
        cols.append(xi[..., k])
    sq0 = xi[..., 0] ** 2
    for k in range(1, d):
        cols.append(sq0 - xi[..., k] ** 2)
    return np.stack(cols, axis=-1)


def span_gradients(xi: np.ndarray, inv_scale) -> np.ndarray:
    """Physical-coordinate gradients of the span, shape (..., d, nm).

    inv_scale is 1/scale, broadcastable against xi[..., 0].
    """
    d = xi.shape[-1]
    nm = span_size(d)
    out = np.zeros(xi.shape[:-1] + (d, nm))
    for k in range(d):
        out[..., k, 1 + k] = inv_scale
    for k in range(1, d):
        out[..., 0, d + k] = 2.0 * xi[..., 0] * inv_scale
        out[..., k, d + k] = -2.0 * xi[..., k] * inv_scale
    return out


@dataclass(frozen=True)
class BasisTables:
    """Per-element change of basis from monomials to dof-dual functions.

    coeff[e] maps dof values to monomial coefficients: a local function
    with dof vector v is sum_m (coeff[e] @ v)[m] * monomial_m(xi). Dof
    order matches TensorMesh.elem_facets.
    """

    kind: str
    center: np.ndarray        # (ne, d)
    scale: np.ndarray         # (ne,)
    coeff: np.ndarray         # (ne, nm, ndof)

    def local_coords(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.center[:, None, :]) / self.scale[:, None, None]


def nc_basis(mesh: TensorMesh, kind: str = "mean") -> BasisTables:
    """Dof-dual basis tables for the nonconforming space on a box mesh.

    kind "mean" uses facet means (the solvable space); "midpoint" uses
    facet-midpoint values (the space the recovered flux lives in). Facet
    means are evaluated with the Gauss rule, exact here because traces of
    the span are quadratic.
    """
    if kind not in ("mean", "midpoint"):
        raise ValueError(f"unknown dof kind {kind!r}")
    key = ("nc_basis", kind)
    hit = mesh._cache.get(key)
    if hit is not None:
        return hit
    d = mesh.dim
    if d < 2:
        raise ValueError("element requires dimension >= 2")
    nm = span_size(d)
    half = 0.5 * mesh.elem_ext / (0.5 * mesh.elem_ext.max(axis=1))[:, None]
    # half[:, k] is the facet offset l_k/(2s) in scaled coordinates
    ne = mesh.ne
    M = np.empty((ne, 2 * d, nm))
    if kind == "mean":
        ref = tensor_rule(d - 1) if d > 1 else None
        for k in range(d):
            other = [j for j in range(d) if j != k]
            nq = ref.npoints
            xi = np.zeros((ne, nq, d))
            # map [0,1]^{d-1} onto the scaled facet, symmetric about 0
            for c, j in enumerate(other):
                xi[:, :, j] = (2.0 * ref.points[:, c] - 1.0) * half[:, None, j]
            for side, sign in ((0, -1.0), (1, 1.0)):
                xi[:, :, k] = sign * half[:, None, k]
                vals = span_values(xi)                       # (ne, nq, nm)
                M[:, 2 * k + side, :] = np.einsum(
                    "q,eqm->em", ref.weights, vals)
    else:
        for k in range(d):
            for side, sign in ((0, -1.0), (1, 1.0)):
                xi = np.zeros((ne, d))
                xi[:, k] = sign * half[:, k]
                M[:, 2 * k + side, :] = span_values(xi)
    tables = BasisTables(kind=kind,
                         center=mesh.elem_center,
                         scale=0.5 * mesh.elem_ext.max(axis=1),
                         coeff=np.linalg.inv(M))
    mesh._cache[key] = tables
    return tables


def basis_values(tables: BasisTables, pts: np.ndarray) -> np.ndarray:
    """Basis function values at pts (ne, nq, d) -> (ne, nq, ndof)."""
    xi = tables.local_coords(pts)
    return span_values(xi) @ tables.coeff


def basis_gradients(tables: BasisTables, pts: np.ndarray) -> np.ndarray:
    """Basis gradients at pts (ne, nq, d) -> (ne, nq, d, ndof)."""
    xi = tables.local_coords(pts)
    g = span_gradients(xi, 1.0 / tables.scale[:, None])
    return np.einsum("eqdm,emj->eqdj", g, tables.coeff)


@dataclass
class BrokenRT:
    """Element-wise flux polynomial, component j of the form a_j + b_j x_j.

    The global field may jump across facets; its normal component on any
    facet is constant along that facet, so midpoint traces determine the
    normal jumps exactly.
    """

    mesh: TensorMesh
    alpha: np.ndarray        # (ne, d)
    beta: np.ndarray         # (ne, d)

    def eval_at(self, pts: np.ndarray) -> np.ndarray:
        """Values at element-local points (ne, nq, d) -> (ne, nq, d)."""
        return self.alpha[:, None, :] + self.beta[:, None, :] * pts

    def divergence(self) -> np.ndarray:
        return self.beta.sum(axis=1)

    def midpoint_traces(self) -> np.ndarray:
        """Full-vector traces at facet midpoints from both sides.

        Returns (nf, 2, d); side 0 is the lower-id neighbor in
        facet_elems, entries for missing neighbors are zero.
        """
        mesh = self.mesh
        out = np.zeros((mesh.nf, 2, mesh.dim))
        mid = mesh.facet_midpoint
        for side in (0, 1):
            e = mesh.facet_elems[:, side]
            ok = e >= 0
            out[ok, side, :] = self.alpha[e[ok]] + self.beta[e[ok]] * mid[ok]
        return out

    def __add__(self, other: "BrokenRT") -> "BrokenRT":
        return BrokenRT(self.mesh, self.alpha + other.alpha,
                        self.beta + other.beta)

    def __sub__(self, other: "BrokenRT") -> "BrokenRT":
        return BrokenRT(self.mesh, self.alpha - other.alpha,
                        self.beta - other.beta)

    def scaled_by(self, factor: np.ndarray) -> "BrokenRT":
        """Multiply by an element-wise scalar (ne,)."""
        f = np.asarray(factor)[:, None]
        return BrokenRT(self.mesh, self.alpha * f, self.beta * f)


@dataclass(frozen=True)
class CRTables:
    """Barycentric data for the midpoint-linear triangular element.

    bary[t] holds the coefficients of the barycentric coordinates:
    lambda_j(x, y) = bary[t, 0, j] + bary[t, 1, j] x + bary[t, 2, j] y.
    Basis function j (attached to the edge opposite vertex j) is
    1 - 2 lambda_j; grad[t] are its constant gradients, shape (2, 3).
    """

    bary: np.ndarray
    grad: np.ndarray


def cr_basis(trimesh: TriMesh) -> CRTables:
    hit = trimesh._cache.get("cr_basis")
    if hit is not None:
        return hit
    v = trimesh.vertices[trimesh.triangles]       # (nt, 3, 2)
    V = np.concatenate([np.ones((trimesh.nt, 3, 1)), v], axis=2)
    bary = np.linalg.inv(V)                       # (nt, 3, 3)
    tables = CRTables(bary=bary, grad=-2.0 * bary[:, 1:, :])
    trimesh._cache["cr_basis"] = tables
    return tables


def cr_values(tables: CRTables, pts: np.ndarray) -> np.ndarray:
    """Basis values at pts (nt, nq, 2) -> (nt, nq, 3)."""
    ones = np.ones(pts.shape[:-1] + (1,))
    aug = np.concatenate([ones, pts], axis=-1)
    lam = np.einsum("tqc,tcj->tqj", aug, tables.bary)
    return 1.0 - 2.0 * lam


# -- cached mesh quadrature --------------------------------------------------

def cell_quadrature(mesh: TensorMesh):
    """Mapped tensor Gauss rule on every element: (pts, wts)."""
    hit = mesh._cache.get("cell_quad")
    if hit is None:
        hit = map_to_box(tensor_rule(mesh.dim), mesh.elem_lo, mesh.elem_ext)
        mesh._cache["cell_quad"] = hit
    return hit


def facet_quadrature(mesh: TensorMesh):
    """Mapped Gauss rule on every facet: (pts (nf, nq, d), wts (nf, nq))."""
    hit = mesh._cache.get("facet_quad")
    if hit is not None:
        return hit
    d = mesh.dim
    ref = tensor_rule(d - 1)
    nq = ref.npoints
    pts = np.empty((mesh.nf, nq, d))
    wts = np.empty((mesh.nf, nq))
    fe = mesh.facet_elems
    inside = np.where(fe[:, 1] >= 0, fe[:, 1], fe[:, 0])
    for k in range(d):
        sl = mesh.facet_block(k)
        other = [j for j in range(d) if j != k]
        e = inside[sl]
        lo = mesh.elem_lo[e][:, other]
        ext = mesh.elem_ext[e][:, other]
        pts[sl, :, k] = mesh.facet_midpoint[sl, k][:, None]
        for c, j in enumerate(other):
            pts[sl, :, j] = (lo[:, None, c]
                             + ext[:, None, c] * ref.points[:, c])
        wts[sl] = np.prod(ext, axis=1)[:, None] * ref.weights
    mesh._cache["facet_quad"] = (pts, wts)
    return pts, wts


def tri_quadrature(trimesh: TriMesh):
    """Mapped degree-5 rule on every triangle: (pts, wts)."""
    hit = trimesh._cache.get("tri_quad")
    if hit is None:
        verts = trimesh.vertices[trimesh.triangles]
        hit = map_to_triangle(triangle_rule(), verts)
        trimesh._cache["tri_quad"] = hit
    return hit


def edge_quadrature(trimesh: TriMesh):
    """Mapped 4-point Gauss rule on every edge: (pts, wts)."""
    hit = trimesh._cache.get("edge_quad")
    if hit is not None:
        return hit
    from .quadrature import gauss1d_4
    ref = gauss1d_4()
    a = trimesh.vertices[trimesh.edges[:, 0]]
    b = trimesh.vertices[trimesh.edges[:, 1]]
    pts = a[:, None, :] + ref.points[:, None] * (b - a)[:, None, :]
    wts = trimesh.edge_len[:, None] * ref.weights
    hit = (pts, wts)
    trimesh._cache["edge_quad"] = hit
    return hit
