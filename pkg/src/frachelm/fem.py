"""Linear (P1) finite-element building blocks on triangle meshes.

Stiffness and mass matrices, triangle quadrature rules, load vectors of
callables and boundary edge mass matrices. Everything here is real-valued and
independent of the scattering physics.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "triangle_rule",
    "collapsed_rule",
    "p1_gradients",
    "stiffness_matrix",
    "mass_matrix",
    "weighted_mass_matrix",
    "load_vectors",
    "edge_mass_matrix",
    "edge_trapezoid_matrix",
]

# symmetric 6-point rule, exact for polynomials of degree 4 (barycentric coords, weights sum to 1)
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
_SIX_POINT = (
    np.array([
        [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
        [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
    ]),
    np.array([_W1] * 3 + [_W2] * 3),
)


def collapsed_rule(n_radial: int, n_angular: int | None = None, grade: float = 1.0,
                   towards: str = "vertex"):
    """Tensor Gauss rule on the reference triangle through a collapsed square.

    Parameters
    ----------
    n_radial, n_angular : int
        Gauss-Legendre orders in the collapsed and the transverse direction.
    grade : float
        Points are clustered as ``u = t**grade`` in the collapsed coordinate.
    towards : {"vertex", "edge"}
        Cluster towards local vertex 0, or towards the edge opposite vertex 0.

    Returns
    -------
    bary : (n, 3) barycentric coordinates
    weights : (n,) weights summing to one
    """
    n_angular = n_radial if n_angular is None else n_angular
    t, wt = np.polynomial.legendre.leggauss(n_radial)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    s, ws = np.polynomial.legendre.leggauss(n_angular)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    u = t ** grade
    du = grade * t ** (grade - 1.0) * wt
    U, S = np.meshgrid(u, s, indexing="ij")
    DU, WS = np.meshgrid(du, ws, indexing="ij")
    U, S, DU, WS = U.ravel(), S.ravel(), DU.ravel(), WS.ravel()
    if towards == "vertex":
        bary = np.column_stack([1.0 - U, U * (1.0 - S), U * S])
        w = 2.0 * U * DU * WS
    elif towards == "edge":
        bary = np.column_stack([U, (1.0 - U) * (1.0 - S), (1.0 - U) * S])
        w = 2.0 * (1.0 - U) * DU * WS
    else:
        raise ValueError(f"unknown clustering target {towards!r}")
    return bary, w


def triangle_rule(order: int = 4):
    """Quadrature rule on the reference triangle as (barycentric points, weights).

    ``order <= 4`` returns the symmetric six-point rule; higher orders return a
    collapsed Gauss rule with enough points to integrate degree ``order``.
    """
    if order <= 4:
        return _SIX_POINT[0].copy(), _SIX_POINT[1].copy()
    n = order // 2 + 1
    return collapsed_rule(n)


def p1_gradients(nodes: np.ndarray, triangles: np.ndarray):
    """Constant gradients of the three hat functions on each triangle.

    Returns
    -------
    grads : (N_t, 3, 2) array
    areas : (N_t,) array of (unsigned) areas
    """
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.empty((len(triangles), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    # reference gradients of (1-s-t, s, t)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("ij,tjk->tik", ref, inv)
    return grads, 0.5 * np.abs(det)


def _assemble(triangles, local, n):
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness_matrix(mesh) -> sp.csr_matrix:
    """Matrix of the Dirichlet form, entries int grad(phi_i) . grad(phi_j)."""
    grads, area = p1_gradients(mesh.nodes, mesh.triangles)
    local = np.einsum("tik,tjk->tij", grads, grads) * area[:, None, None]
    return _assemble(mesh.triangles, local, mesh.n_nodes)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def weighted_mass_matrix(mesh, coef_per_triangle, triangles=None) -> sp.csr_matrix:
    """Mass matrix with a piecewise-constant weight (exact for P1 products).

    Parameters
    ----------
    coef_per_triangle : array
        One weight per entry of ``triangles`` (all mesh triangles by default).
    triangles : index array, optional
        Subset of triangles to integrate over.
    """
    tri_idx = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    tris = mesh.triangles[tri_idx]
    area = np.abs(mesh.areas()[tri_idx])
    coef = np.broadcast_to(np.asarray(coef_per_triangle), area.shape)
    local = _MASS_REF[None] * (area * coef)[:, None, None]
    return _assemble(tris, local, mesh.n_nodes)


def mass_matrix(mesh, triangles=None) -> sp.csr_matrix:
    """Consistent P1 mass matrix, optionally restricted to a triangle subset."""
    n_t = mesh.n_triangles if triangles is None else len(triangles)
    return weighted_mass_matrix(mesh, np.ones(n_t), triangles)


def load_vectors(mesh, func, triangles=None, order: int = 6):
    """Per-triangle local load vectors int_T f phi_i for a callable ``f``.

    Parameters
    ----------
    func : callable
        Maps an (..., 2) array of points to values (real or complex).

    Returns
    -------
    local : (n_t, 3) array
        ``local[t, i] = int_T f phi_i``; scatter with ``np.add.at``.
    tri_idx : the triangle indices used
    """
    tri_idx = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    bary, w = triangle_rule(order)
    p = mesh.nodes[mesh.triangles[tri_idx]]
    pts = np.einsum("qi,tid->tqd", bary, p)
    vals = func(pts)
    area = np.abs(mesh.areas()[tri_idx])
    local = np.einsum("tq,q,qi->ti", vals, w, bary) * area[:, None]
    return local, tri_idx


def edge_mass_matrix(nodes: np.ndarray, edges: np.ndarray, n: int) -> sp.csr_matrix:
    """Consistent 1D P1 mass matrix on a set of boundary edges."""
    L = np.linalg.norm(nodes[edges[:, 0]] - nodes[edges[:, 1]], axis=1)
    local = np.array([[2.0, 1.0], [1.0, 2.0]])[None] * (L / 6.0)[:, None, None]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def edge_trapezoid_matrix(nodes: np.ndarray, edges: np.ndarray, n: int) -> sp.csr_matrix:
    """Lumped (trapezoid-rule) boundary mass: half of each edge length to each end node."""
    L = np.linalg.norm(nodes[edges[:, 0]] - nodes[edges[:, 1]], axis=1)
    d = np.zeros(n)
    np.add.at(d, edges[:, 0], 0.5 * L)
    np.add.at(d, edges[:, 1], 0.5 * L)
    return sp.diags(d).tocsr()
