"""Axis-aligned tensor-product meshes and triangulations.

A TensorMesh is the product of one sorted gridline array per axis. Facets
(edges in 2d, faces in 3d) are numbered in blocks by normal axis; inside
the block the gridline position varies slowest, so the facet one layer
deeper into the mesh is always ``id +- cross_size(axis)``. That layout is
what the midpoint-averaging recovery relies on to follow its
boundary-extrapolation chains without searching.

Meshes are immutable: all derived arrays are computed once and write-
protected. Refinement and perturbation return new meshes.
"""

from __future__ import annotations

import warnings

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class TensorMesh:
    """Tensor-product mesh on a box, any dimension >= 1.

    Attributes
    ----------
    dim : int
    gridlines : tuple of ndarray
        Strictly increasing coordinates per axis.
    shape : tuple of int
        Number of intervals per axis.
    ne, nf : int
        Element and facet counts.
    elem_lo, elem_ext, elem_center : ndarray (ne, dim)
    elem_measure : ndarray (ne,)
    elem_facets : ndarray (ne, 2*dim) int
        Global facet ids, ordered (axis0 low, axis0 high, axis1 low, ...).
    facet_axis : ndarray (nf,) int
        Normal axis of each facet.
    facet_pos : ndarray (nf,) int
        Gridline index of the facet along its normal axis.
    facet_elems : ndarray (nf, 2) int
        Adjacent element ids (lower side, upper side); -1 where absent.
    facet_midpoint : ndarray (nf, dim)
    facet_measure : ndarray (nf,)
    facet_boundary : ndarray (nf,) bool
    interior_facets, boundary_facets : ndarray of int
    """

    def __init__(self, gridlines, nondegeneracy_limit: float = 20.0):
        gls = tuple(np.ascontiguousarray(g, dtype=float) for g in gridlines)
        if len(gls) < 1:
            raise ValueError("need at least one axis")
        for k, g in enumerate(gls):
            if g.ndim != 1 or g.size < 2:
                raise ValueError(f"axis {k}: need >= 2 gridlines")
            if not np.all(np.diff(g) > 0):
                raise ValueError(f"axis {k}: gridlines must strictly increase")
        self.gridlines = tuple(_frozen(g) for g in gls)
        self.dim = len(gls)
        self.shape = tuple(g.size - 1 for g in gls)
        self.ne = int(np.prod(self.shape))
        self._build_elements()
        self._build_facets()
        self._check_nondegeneracy(nondegeneracy_limit)
        self._cache: dict = {}

    # -- construction ------------------------------------------------------

    def _build_elements(self):
        d, shape = self.dim, self.shape
        idx = np.indices(shape).reshape(d, -1).T          # (ne, d) C-order
        lo = np.empty((self.ne, d))
        ext = np.empty((self.ne, d))
        for k in range(d):
            g = self.gridlines[k]
            lo[:, k] = g[idx[:, k]]
            ext[:, k] = g[idx[:, k] + 1] - g[idx[:, k]]
        self.elem_index = _frozen(idx)
        self.elem_lo = _frozen(lo)
        self.elem_ext = _frozen(ext)
        self.elem_center = _frozen(lo + 0.5 * ext)
        self.elem_measure = _frozen(np.prod(ext, axis=1))

    def _facet_block_shapes(self):
        # facets with normal axis k: (n_k + 1) positions x other-axis intervals
        d, shape = self.dim, self.shape
        return [(shape[k] + 1,) + tuple(shape[j] for j in range(d) if j != k)
                for k in range(d)]

    def _build_facets(self):
        d, shape = self.dim, self.shape
        blocks = self._facet_block_shapes()
        sizes = [int(np.prod(b)) for b in blocks]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        nf = int(offsets[-1])
        self.nf = nf
        self._block_offset = _frozen(offsets)
        # number of facets sharing a normal-axis position (cross section size)
        self._cross_size = _frozen(np.array(
            [sizes[k] // (shape[k] + 1) for k in range(d)], dtype=np.int64))

        axis = np.empty(nf, dtype=np.int64)
        pos = np.empty(nf, dtype=np.int64)
        mid = np.empty((nf, d))
        meas = np.empty(nf)
        elems = np.full((nf, 2), -1, dtype=np.int64)

        centers = [0.5 * (g[:-1] + g[1:]) for g in self.gridlines]
        lens = [np.diff(g) for g in self.gridlines]
        estrides = np.array(
            [int(np.prod(shape[j + 1:])) for j in range(d)], dtype=np.int64)

        for k in range(d):
            sl = slice(offsets[k], offsets[k + 1])
            bidx = np.indices(blocks[k]).reshape(d, -1).T   # (size_k, d)
            p = bidx[:, 0]
            cross = bidx[:, 1:]                              # other-axis intervals
            other = [j for j in range(d) if j != k]
            axis[sl] = k
            pos[sl] = p
            mid[sl, k] = self.gridlines[k][p]
            m = np.ones(len(p))
            for c, j in enumerate(other):
                mid[sl, j] = centers[j][cross[:, c]]
                m = m * lens[j][cross[:, c]]
            meas[sl] = m
            # adjacent elements: i_k = p-1 (lower side), i_k = p (upper side)
            base = cross @ estrides[other]
            lower = base + (p - 1) * estrides[k]
            upper = base + p * estrides[k]
            block = elems[sl]
            block[p > 0, 0] = lower[p > 0]
            block[p < shape[k], 1] = upper[p < shape[k]]
            elems[sl] = block

        self.facet_axis = _frozen(axis)
        self.facet_pos = _frozen(pos)
        self.facet_midpoint = _frozen(mid)
        self.facet_measure = _frozen(meas)
        self.facet_elems = _frozen(elems)
        bnd = (elems[:, 0] < 0) | (elems[:, 1] < 0)
        self.facet_boundary = _frozen(bnd)
        self.interior_facets = _frozen(np.flatnonzero(~bnd))
        self.boundary_facets = _frozen(np.flatnonzero(bnd))

        # element -> facet table, (axis0 lo, axis0 hi, axis1 lo, ...)
        ef = np.empty((self.ne, 2 * d), dtype=np.int64)
        idx = self.elem_index
        cs = self._cross_size
        for k in range(d):
            other = [j for j in range(d) if j != k]
            fstrides = np.array(
                [int(np.prod([shape[o] for o in other[c + 1:]]))
                 for c in range(len(other))], dtype=np.int64)
            cross_flat = idx[:, other] @ fstrides
            ef[:, 2 * k] = offsets[k] + idx[:, k] * cs[k] + cross_flat
            ef[:, 2 * k + 1] = offsets[k] + (idx[:, k] + 1) * cs[k] + cross_flat
        self.elem_facets = _frozen(ef)

    def _check_nondegeneracy(self, limit: float):
        aspect = self.elem_ext.max(axis=1) / self.elem_ext.min(axis=1)
        worst = aspect.max()
        inter = self.interior_facets
        if inter.size:
            m = self.elem_measure[self.facet_elems[inter]]
            ratio = (m.max(axis=1) / m.min(axis=1)).max()
            worst = max(worst, ratio)
        self.nondegeneracy = float(worst)
        if worst > limit:
            warnings.warn(
                f"mesh nondegeneracy measure {worst:.3g} exceeds {limit:g}; "
                "recovery accuracy may suffer", stacklevel=3)

    # -- queries -----------------------------------------------------------

    @property
    def h(self) -> float:
        """Largest interval length over all axes."""
        return float(max(np.diff(g).max() for g in self.gridlines))

    def cross_size(self, axis: int) -> int:
        """Facet-id stride for stepping one gridline along ``axis``."""
        return int(self._cross_size[axis])

    def facet_block(self, axis: int) -> slice:
        """Slice of facet ids whose normal is ``axis``."""
        return slice(int(self._block_offset[axis]),
                     int(self._block_offset[axis + 1]))

    def patch(self, facet_id: int) -> tuple[int, ...]:
        """Element ids adjacent to a facet (two interior, one boundary)."""
        pair = self.facet_elems[facet_id]
        return tuple(int(e) for e in pair if e >= 0)


def build_tensor_mesh(*gridlines, nondegeneracy_limit: float = 20.0) -> TensorMesh:
    """Construct a TensorMesh from per-axis gridline sequences."""
    return TensorMesh(gridlines, nondegeneracy_limit=nondegeneracy_limit)


def refine_midpoint(mesh: TensorMesh) -> TensorMesh:
    """Halve every interval by inserting gridline midpoints."""
    fine = []
    for g in mesh.gridlines:
        out = np.empty(2 * g.size - 1)
        out[::2] = g
        out[1::2] = 0.5 * (g[:-1] + g[1:])
        fine.append(out)
    return TensorMesh(fine)


def perturb(mesh: TensorMesh, fraction: float, seed: int) -> TensorMesh:
    """Randomly shift interior gridlines; boundary gridlines stay put.

    Each interior gridline of axis k moves by an independent uniform draw
    from [-fraction*s_k, fraction*s_k], where s_k is the smallest interval
    of axis k before perturbation. Draws consume one seeded PCG64 stream
    in axis order, then gridline order, so results are reproducible given
    (mesh, fraction, seed). fraction must lie in [0, 0.5) to keep the
    gridlines strictly increasing.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError(f"fraction must be in [0, 0.5), got {fraction}")
    rng = np.random.default_rng(seed)
    moved = []
    for g in mesh.gridlines:
        g = g.copy()
        if g.size > 2:
            s = np.diff(g).min()
            g[1:-1] += rng.uniform(-fraction * s, fraction * s, g.size - 2)
        moved.append(g)
    return TensorMesh(moved)


class TriMesh:
    """Triangulation of a planar domain.

    Attributes
    ----------
    vertices : ndarray (nv, 2)
    triangles : ndarray (nt, 3) int
        Vertex ids, counterclockwise.
    edges : ndarray (nedge, 2) int
        Vertex id pairs (low, high), lexicographically ordered.
    tri_edges : ndarray (nt, 3) int
        Global edge ids; local edge j is opposite local vertex j.
    edge_tris : ndarray (nedge, 2) int
        Adjacent triangle ids in increasing order; -1 where absent.
    edge_mid, edge_len, edge_boundary, interior_edges, boundary_edges,
    tri_area, tri_center : derived geometry.
    uniform_parallel : bool
        True when built so each adjacent triangle pair forms a
        parallelogram (required by the edge-averaging recovery theory).
    """

    def __init__(self, vertices, triangles, uniform_parallel: bool = False):
        v = np.ascontiguousarray(vertices, dtype=float)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle vertex id out of range")
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det == 0):
            raise ValueError("degenerate triangle")
        flip = det < 0
        t[flip, 1], t[flip, 2] = t[flip, 2].copy(), t[flip, 1].copy()
        det = np.abs(det)

        self.vertices = _frozen(v)
        self.triangles = _frozen(t)
        self.nv = v.shape[0]
        self.nt = t.shape[0]
        self.tri_area = _frozen(0.5 * det)
        self.tri_center = _frozen(v[t].mean(axis=1))
        self.uniform_parallel = bool(uniform_parallel)

        # local edge j connects vertices (j+1)%3, (j+2)%3
        pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        pairs = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.edges = _frozen(edges)
        self.nedge = edges.shape[0]
        self.tri_edges = _frozen(inverse.reshape(self.nt, 3))

        et = np.full((self.nedge, 2), -1, dtype=np.int64)
        tri_of = np.repeat(np.arange(self.nt), 3)
        order = np.lexsort((tri_of, inverse))
        eid = inverse[order]
        tid = tri_of[order]
        first = np.ones(eid.size, dtype=bool)
        first[1:] = eid[1:] != eid[:-1]
        et[eid[first], 0] = tid[first]
        second = ~first
        et[eid[second], 1] = tid[second]
        self.edge_tris = _frozen(et)

        self.edge_mid = _frozen(0.5 * (v[edges[:, 0]] + v[edges[:, 1]]))
        evec = v[edges[:, 1]] - v[edges[:, 0]]
        self.edge_len = _frozen(np.hypot(evec[:, 0], evec[:, 1]))
        bnd = et[:, 1] < 0
        self.edge_boundary = _frozen(bnd)
        self.interior_edges = _frozen(np.flatnonzero(~bnd))
        self.boundary_edges = _frozen(np.flatnonzero(bnd))
        self._cache: dict = {}

    @property
    def h(self) -> float:
        """Largest edge length."""
        return float(self.edge_len.max())


def build_uniform_parallel(nx: int, ny: int,
                           x0: float = 0.0, x1: float = 1.0,
                           y0: float = 0.0, y1: float = 1.0) -> TriMesh:
    """Triangulate a rectangle into nx*ny cells split by the same diagonal.

    Every pair of adjacent triangles forms a parallelogram, which the
    edge-averaging recovery needs; 2*nx*ny triangles total.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need nx, ny >= 1")
    x = np.linspace(x0, x1, nx + 1)
    y = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return TriMesh(verts, np.array(tris), uniform_parallel=True)
