"""Finite element spaces on a triangulation: Morley, Crouzeix-Raviart, P1, P0.

Degrees of freedom
------------------
Morley   : one value per vertex plus one mean normal derivative per edge;
           boundary vertices and boundary edges are constrained to zero
           (homogeneous clamped conditions).
CR       : one value per edge midpoint; boundary edges constrained to zero.
P1       : one value per vertex; boundary vertices constrained to zero.
P0       : one value per triangle, unconstrained.

The Morley basis is built per physical element by inverting the 6x6 matrix
that pairs centered, h-scaled quadratic monomials with the six dof
functionals (3 vertex evaluations, 3 edge-mean normal derivatives taken
against the global edge normal).  The normal-derivative dof is not
affine-equivariant, so no reference-element mapping is attempted; the two
elements sharing an edge see one dof with a consistent sign because both use
the same global normal.

Basis tables accept either paired input (tris (n,), pts (n, 2)) or one point
set per element (tris (nt,), pts (nt, nq, 2)).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .mesh import Triangulation, geometry

__all__ = [
    "SpaceTag", "DofMap", "DiscreteFunction", "ElementBasis",
    "build_dofmap", "element_basis", "evaluate", "basis_tables",
    "local_coefficients", "function_from_element_values",
]


class SpaceTag(Enum):
    MORLEY = "morley"
    CROUZEIX_RAVIART = "crouzeix_raviart"
    P1_CONFORMING = "p1"
    P0 = "p0"


@dataclass(frozen=True, eq=False)
class DofMap:
    space: SpaceTag
    element_dofs: np.ndarray     # (nt, nloc) global dof indices
    is_boundary_dof: np.ndarray  # (n_dofs,) bool, True = constrained to zero
    free_of_dof: np.ndarray      # (n_dofs,) free index or -1
    dof_of_free: np.ndarray      # (n_free,) global dof index
    n_free: int

    @property
    def n_dofs(self):
        return len(self.is_boundary_dof)

    @property
    def n_local(self):
        return self.element_dofs.shape[1]


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    space: SpaceTag
    n_components: int
    coeffs: np.ndarray  # (n_components * n_free,) free-dof coefficients

    def component(self, i: int, n_free: int) -> np.ndarray:
        return self.coeffs[i * n_free:(i + 1) * n_free]


@dataclass(frozen=True, eq=False)
class ElementBasis:
    values: np.ndarray     # (nloc,)
    gradients: np.ndarray  # (nloc, 2)
    hessians: np.ndarray   # (nloc, 2, 2), symmetric; zero for CR/P1/P0


def build_dofmap(mesh: Triangulation, space: SpaceTag) -> DofMap:
    nt = mesh.n_triangles
    if space is SpaceTag.MORLEY:
        nv = mesh.n_vertices
        element_dofs = np.hstack([mesh.triangles, nv + mesh.edge_of_triangle])
        is_bdry = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
    elif space is SpaceTag.CROUZEIX_RAVIART:
        element_dofs = mesh.edge_of_triangle.copy()
        is_bdry = mesh.boundary_edge.copy()
    elif space is SpaceTag.P1_CONFORMING:
        element_dofs = mesh.triangles.copy()
        is_bdry = mesh.boundary_vertex.copy()
    elif space is SpaceTag.P0:
        element_dofs = np.arange(nt, dtype=np.int64)[:, None]
        is_bdry = np.zeros(nt, dtype=bool)
    else:
        raise ValueError(f"unknown space {space}")

    free_of_dof = np.full(len(is_bdry), -1, dtype=np.int64)
    dof_of_free = np.flatnonzero(~is_bdry)
    free_of_dof[dof_of_free] = np.arange(len(dof_of_free))
    return DofMap(space=space, element_dofs=element_dofs,
                  is_boundary_dof=is_bdry, free_of_dof=free_of_dof,
                  dof_of_free=dof_of_free, n_free=len(dof_of_free))


# ---------------------------------------------------------------------------
# quadratic monomial helpers (local frame xi = (x - center) / h)

_MONO_HESS = np.zeros((6, 2, 2))
_MONO_HESS[3] = [[2.0, 0.0], [0.0, 0.0]]
_MONO_HESS[4] = [[0.0, 1.0], [1.0, 0.0]]
_MONO_HESS[5] = [[0.0, 0.0], [0.0, 2.0]]


def _mono_values(xi):
    """Monomials 1, a, b, a^2, ab, b^2 at local points (..., 2)."""
    a, b = xi[..., 0], xi[..., 1]
    return np.stack([np.ones_like(a), a, b, a * a, a * b, b * b], axis=-1)


def _mono_grads(xi):
    a, b = xi[..., 0], xi[..., 1]
    zero = np.zeros_like(a)
    one = np.ones_like(a)
    gx = np.stack([zero, one, zero, 2 * a, b, zero], axis=-1)
    gy = np.stack([zero, zero, one, zero, a, 2 * b], axis=-1)
    return np.stack([gx, gy], axis=-1)  # (..., 6, 2)


def _per_element(arr, pts_ndim):
    """Insert a broadcast axis for per-element point sets (pts of ndim 3)."""
    return arr[:, None, ...] if pts_ndim == 3 else arr


class _MorleyTables:
    """Per-element Morley basis coefficients against the local monomials."""

    nloc = 6

    def __init__(self, mesh):
        self.mesh = mesh
        geom = geometry(mesh)
        self.geom = geom
        p = mesh.vertices[mesh.triangles]           # (nt, 3, 2)
        self.center = p.mean(axis=1)
        self.scale = geom.h_T
        nt = mesh.n_triangles

        D = np.empty((nt, 6, 6))
        loc_v = (p - self.center[:, None, :]) / self.scale[:, None, None]
        D[:, 0:3, :] = _mono_values(loc_v)
        for k in range(3):
            va = p[:, (k + 1) % 3]
            vb = p[:, (k + 2) % 3]
            mid = 0.5 * (va + vb)
            loc_m = (mid - self.center) / self.scale[:, None]
            grads = _mono_grads(loc_m) / self.scale[:, None, None]  # (nt, 6, 2)
            nu = geom.nu_E[mesh.edge_of_triangle[:, k]]
            D[:, 3 + k, :] = np.einsum("tmd,td->tm", grads, nu)
        try:
            self.C = np.linalg.inv(D)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "singular Morley dof matrix (degenerate triangle)") from exc
        # constant per-element hessians of the 6 basis functions
        hess = np.einsum("tmj,mab->tjab", self.C, _MONO_HESS)
        self.hess = hess / (self.scale ** 2)[:, None, None, None]
        self.dof_matrix = D

    def _local(self, tris, pts):
        c = _per_element(self.center[tris], pts.ndim)
        s = _per_element(self.scale[tris], pts.ndim)
        return (pts - c) / s[..., None]

    def monomials_at(self, tris, pts):
        return _mono_values(self._local(tris, pts))

    def mono_grads_at(self, tris, pts):
        s = _per_element(self.scale[tris], pts.ndim)
        return _mono_grads(self._local(tris, pts)) / s[..., None, None]

    def values_at(self, tris, pts):
        m = self.monomials_at(tris, pts)
        C = _per_element(self.C[tris], pts.ndim)
        return np.einsum("...mj,...m->...j", C, m)

    def grads_at(self, tris, pts):
        g = self.mono_grads_at(tris, pts)
        C = _per_element(self.C[tris], pts.ndim)
        return np.einsum("...mj,...md->...jd", C, g)

    def hess_at(self, tris, pts=None):
        return self.hess[tris]


class _LagrangeTables:
    """CR (1 - 2*lambda) and P1 (lambda) bases from barycentric coordinates."""

    nloc = 3

    def __init__(self, mesh, kind):
        self.mesh = mesh
        self.kind = kind
        p = mesh.vertices[mesh.triangles]
        nt = mesh.n_triangles
        mats = np.empty((nt, 3, 3))
        mats[:, :, 0] = 1.0
        mats[:, :, 1:] = p
        inv = np.linalg.inv(mats)
        # lambda_k(x) = inv[0, k] + inv[1, k] x + inv[2, k] y
        self.grad_lambda = np.transpose(inv[:, 1:, :], (0, 2, 1))  # (nt, 3, 2)
        self.verts = p

    def _bary(self, tris, pts):
        v0 = _per_element(self.verts[tris, 0], pts.ndim)
        g = _per_element(self.grad_lambda[tris], pts.ndim)
        lam12 = np.einsum("...kd,...d->...k", g[..., 1:, :], pts - v0)
        lam0 = 1.0 - lam12.sum(axis=-1)
        return np.concatenate([lam0[..., None], lam12], axis=-1)

    def values_at(self, tris, pts):
        lam = self._bary(tris, pts)
        return 1.0 - 2.0 * lam if self.kind is SpaceTag.CROUZEIX_RAVIART else lam

    def grads_at(self, tris, pts):
        g = self.grad_lambda[tris]
        if self.kind is SpaceTag.CROUZEIX_RAVIART:
            g = -2.0 * g
        if pts.ndim == 3:
            g = np.broadcast_to(g[:, None, :, :], pts.shape[:2] + (3, 2))
        return g

    def hess_at(self, tris, pts=None):
        return np.zeros(np.shape(tris) + (3, 2, 2))


class _P0Tables:
    nloc = 1

    def __init__(self, mesh):
        self.mesh = mesh

    def values_at(self, tris, pts):
        return np.ones(pts.shape[:-1] + (1,))

    def grads_at(self, tris, pts):
        return np.zeros(pts.shape[:-1] + (1, 2))

    def hess_at(self, tris, pts=None):
        return np.zeros(np.shape(tris) + (1, 2, 2))


@lru_cache(maxsize=8)
def basis_tables(mesh: Triangulation, space: SpaceTag):
    if space is SpaceTag.MORLEY:
        return _MorleyTables(mesh)
    if space in (SpaceTag.CROUZEIX_RAVIART, SpaceTag.P1_CONFORMING):
        return _LagrangeTables(mesh, space)
    if space is SpaceTag.P0:
        return _P0Tables(mesh)
    raise ValueError(f"unknown space {space}")


def physical_points(mesh, bary):
    """Map barycentric points (nq, 3) to physical points per element (nt, nq, 2)."""
    p = mesh.vertices[mesh.triangles]
    return np.einsum("qk,tkd->tqd", bary, p)


def element_basis(mesh, geom, space: SpaceTag, triangle: int, point) -> ElementBasis:
    """Values, gradients and hessians of the local basis at one physical point."""
    tab = basis_tables(mesh, space)
    tris = np.asarray([triangle])
    pts = np.asarray(point, dtype=float)[None, :]
    return ElementBasis(values=tab.values_at(tris, pts)[0],
                        gradients=tab.grads_at(tris, pts)[0],
                        hessians=tab.hess_at(tris)[0])


def local_coefficients(dofmap: DofMap, u: DiscreteFunction, component: int = 0):
    """Per-element local coefficient vectors (nt, nloc); constrained dofs are 0."""
    comp = u.component(component, dofmap.n_free)
    fo = dofmap.free_of_dof[dofmap.element_dofs]
    vals = comp[np.clip(fo, 0, None)]
    vals[fo < 0] = 0.0
    return vals


def function_from_element_values(dofmap: DofMap, dof_values,
                                 n_components: int = 1) -> DiscreteFunction:
    """Assemble a DiscreteFunction from values indexed by global dof."""
    dof_values = np.atleast_2d(np.asarray(dof_values, dtype=float))
    coeffs = dof_values[:, dofmap.dof_of_free].ravel()
    return DiscreteFunction(space=dofmap.space, n_components=len(dof_values),
                            coeffs=coeffs)


def evaluate(mesh, dofmap: DofMap, u: DiscreteFunction, triangle: int, point,
             derivative: str = "value", component: int = 0):
    """Evaluate a discrete function on one element; derivative in
    {'value', 'gradient', 'hessian'}.  No inter-element continuity is
    assumed: the element's own polynomial is used."""
    tab = basis_tables(mesh, dofmap.space)
    loc = local_coefficients(dofmap, u, component)[triangle]
    tris = np.asarray([triangle])
    pts = np.asarray(point, dtype=float)[None, :]
    if derivative == "value":
        return float(tab.values_at(tris, pts)[0] @ loc)
    if derivative == "gradient":
        return tab.grads_at(tris, pts)[0].T @ loc
    if derivative == "hessian":
        return np.einsum("jab,j->ab", tab.hess_at(tris)[0], loc)
    raise ValueError(f"unknown derivative {derivative!r}")
