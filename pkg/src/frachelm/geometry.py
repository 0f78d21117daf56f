"""Concentric disk geometry: nested polar-ring triangulation and region tags.

The computational domain is the disk of radius ``R``. Two inner concentric
disks carry the scatterer support (radius ``r_q``) and the attenuating region
(radius ``r_omega``). Rings of nodes are placed so that every requested
interface radius is hit exactly, which makes region boundaries conform to mesh
edges. Fine meshes are uniform refinements of a coarse ring mesh, so halving
``h`` refines the previous mesh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Mesh",
    "RegionTags",
    "ScattererConfig",
    "build_disk_mesh",
    "mark_regions",
    "export_mesh",
    "triangle_areas",
]

EXTERIOR, SUPPQ, OMEGA = 0, 1, 2

# coarse ring meshes are built at a size in (R * _BASE_FRACTION / 2, R * _BASE_FRACTION]
_BASE_FRACTION = 0.25


@dataclass(frozen=True)
class Mesh:
    """Triangulated disk.

    Attributes
    ----------
    nodes : (N_v, 2) float array
    triangles : (N_t, 3) int array, positively oriented
    boundary_nodes : indices of nodes on the outer circle, sorted by angle
    boundary_angles : polar angles of ``boundary_nodes`` in [0, 2*pi)
    h : target edge length
    R : disk radius
    ring_radii : radii of the node rings (the centre node is ring 0)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    boundary_angles: np.ndarray
    h: float
    R: float
    ring_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def key(self) -> str:
        """Short identifier used to tie fields to their mesh."""
        return f"disk(R={self.R:g},h={self.h:g},nv={self.n_nodes},nt={self.n_triangles})"

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.nodes, self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (N_e, 2) array."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def max_edge(self) -> float:
        e = self.edges()
        return float(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1).max())


@dataclass(frozen=True)
class RegionTags:
    """Index sets of the attenuating region and the scatterer support."""

    omega_nodes: np.ndarray
    omega_triangles: np.ndarray
    suppq_triangles: np.ndarray
    r_omega: float
    r_q: float
    omega_empty: bool = False

    def region_codes(self, n_triangles: int) -> np.ndarray:
        codes = np.full(n_triangles, EXTERIOR, dtype=int)
        codes[self.suppq_triangles] = SUPPQ
        codes[self.omega_triangles] = OMEGA
        return codes

    def omega_boundary_edges(self, mesh: Mesh) -> np.ndarray:
        """Edges of Omega triangles that belong to exactly one Omega triangle."""
        t = mesh.triangles[self.omega_triangles]
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]


@dataclass
class ScattererConfig:
    """Physical coefficients of the scattering problem.

    ``q_values`` is one contrast value per scatterer-support triangle (the
    contrast vanishes elsewhere). ``tau_tilde`` scales the loss term on Omega
    and ``eta_tilde`` the dispersion term; ``gamma_tilde`` is the fractional
    exponent.
    """

    q_values: np.ndarray
    gamma_tilde: float
    tau_tilde: float
    k: float
    R: float
    omega_freq: float | None = None
    eta_tilde: float = 0.0

    def __post_init__(self):
        self.q_values = np.asarray(self.q_values, dtype=float)
        if self.omega_freq is None:
            # frequency-domain convention with unit wave speed
            self.omega_freq = self.k
        if np.any(self.q_values <= -1.0):
            raise ValueError("contrast must satisfy q > -1 everywhere")
        if not np.all(np.isfinite(self.q_values)):
            raise ValueError("contrast values must be finite")
        if not 0.0 <= self.gamma_tilde <= 0.5:
            raise ValueError(f"gamma_tilde must lie in [0, 1/2], got {self.gamma_tilde}")
        if self.tau_tilde < 0 or self.eta_tilde < 0:
            raise ValueError("tau_tilde and eta_tilde must be nonnegative")
        if not (self.k > 0 and self.R > 0 and self.omega_freq > 0):
            raise ValueError("k, R and omega_freq must be positive")

    @property
    def q_max_abs(self) -> float:
        return float(np.abs(self.q_values).max()) if self.q_values.size else 0.0


def triangle_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas of the triangles (positive for counter-clockwise order)."""
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _ring_radii(R: float, h: float, fit_radii: Sequence[float]) -> np.ndarray:
    stops = sorted({0.0, float(R), *[float(r) for r in fit_radii if 0.0 < r < R]})
    radii = [0.0]
    for a, b in zip(stops[:-1], stops[1:]):
        n_layers = max(1, int(math.ceil((b - a) / (0.95 * h) - 1e-9)))
        radii.extend(np.linspace(a, b, n_layers + 1)[1:])
    return np.asarray(radii)


def _zip_rings(inner_idx, inner_ang, outer_idx, outer_ang, nodes):
    """Triangulate the band between two closed rings.

    Walks both rings counter-clockwise and, at each step, closes the triangle
    whose new diagonal is shorter.
    """
    n_a, n_b = len(inner_idx), len(outer_idx)
    # start the outer ring at the node nearest (from below) to the first inner angle
    j0 = int(np.searchsorted(outer_ang, inner_ang[0], side="right")) - 1
    ia = [inner_idx[i % n_a] for i in range(n_a + 1)]
    ob = [outer_idx[(j0 + m) % n_b] for m in range(n_b + 1)]
    tris = []
    i = m = 0
    while i < n_a or m < n_b:
        if m >= n_b:
            take_inner = True
        elif i >= n_a:
            take_inner = False
        else:
            d_inner = np.sum((nodes[ia[i + 1]] - nodes[ob[m]]) ** 2)
            d_outer = np.sum((nodes[ia[i]] - nodes[ob[m + 1]]) ** 2)
            take_inner = d_inner <= d_outer
        if take_inner:
            tris.append((ia[i], ia[i + 1], ob[m]))
            i += 1
        else:
            tris.append((ia[i], ob[m + 1], ob[m]))
            m += 1
    return tris


def _ring_mesh(R: float, h: float, fit_radii: Sequence[float]):
    """Single-level polar-ring triangulation.

    Returns nodes, triangles, ring radii and a per-node label holding the
    radius of the circle it must stay on (the outer boundary or a fitted
    interface), NaN otherwise.
    """
    radii = _ring_radii(R, h, fit_radii)
    nodes = [np.zeros((1, 2))]
    labels = [np.array([np.nan])]
    rings = []  # (indices, angles)
    count = 1
    for j, r in enumerate(radii[1:], start=1):
        n_j = max(6, int(math.ceil(2 * math.pi * r / (0.95 * h))))
        offset = 0.0 if j == len(radii) - 1 else (0.5 * (j % 2)) * 2 * math.pi / n_j
        ang = np.sort(np.mod(offset + 2 * math.pi * np.arange(n_j) / n_j, 2 * math.pi))
        nodes.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        fitted = j == len(radii) - 1 or any(abs(r - f) <= 1e-12 * R for f in fit_radii)
        labels.append(np.full(n_j, r if fitted else np.nan))
        rings.append((np.arange(count, count + n_j), ang))
        count += n_j
    nodes = np.concatenate(nodes)

    tris = []
    idx1, _ = rings[0]
    for i in range(len(idx1)):
        tris.append((0, idx1[i], idx1[(i + 1) % len(idx1)]))
    for (ia, aa), (ib, ab) in zip(rings[:-1], rings[1:]):
        tris.extend(_zip_rings(ia, aa, ib, ab, nodes))
    return nodes, np.asarray(tris, dtype=np.int64), radii, np.concatenate(labels)


def _refine(nodes, tris, labels):
    """Uniform red refinement: every triangle splits into four.

    Midpoints of edges whose end nodes lie on the same labelled circle are
    moved onto that circle, so interfaces and the boundary stay exact.
    """
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    n_t = len(tris)
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    la, lb = labels[edges[:, 0]], labels[edges[:, 1]]
    on_ring = np.isfinite(la) & (la == lb)
    rad = np.linalg.norm(mid[on_ring], axis=1)
    mid[on_ring] *= (la[on_ring] / rad)[:, None]
    mid_label = np.where(on_ring, la, np.nan)
    m = len(nodes) + inv
    m01, m12, m20 = m[:n_t], m[n_t:2 * n_t], m[2 * n_t:]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    children = np.concatenate([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    return np.concatenate([nodes, mid]), children, np.concatenate([labels, mid_label])


def build_disk_mesh(R: float, h: float, fit_radii: Sequence[float] = ()) -> Mesh:
    """Nested polar-ring triangulation of the disk of radius ``R``.

    A ring mesh is built at the coarse size ``h * 2**L`` lying in ``(R/4, R/2]``
    and refined uniformly ``L`` times. Hence ``build_disk_mesh(R, h/2)`` is the
    uniform refinement of ``build_disk_mesh(R, h)`` and has exactly four times
    as many triangles.

    Parameters
    ----------
    R : float
        Disk radius.
    h : float
        Target edge length; must satisfy ``h <= R/2``.
    fit_radii : sequence of float, optional
        Interior radii that must coincide with node rings (region interfaces).

    Returns
    -------
    Mesh
    """
    if not (R > 0 and h > 0 and math.isfinite(R) and math.isfinite(h)):
        raise ValueError(f"degenerate mesh parameters R={R}, h={h}")
    if not h <= R / 2:
        raise ValueError(f"mesh size h={h} must not exceed R/2={R / 2}")
    levels = 0
    while h * 2 ** (levels + 1) <= R * _BASE_FRACTION * (1 + 1e-12):
        levels += 1
    nodes, tris, radii, labels = _ring_mesh(R, h * 2 ** levels, fit_radii)
    for _ in range(levels):
        nodes, tris, labels = _refine(nodes, tris, labels)

    area = triangle_areas(nodes, tris)
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    if np.abs(area).min() <= 1e-14 * h * h:
        raise RuntimeError("mesh construction produced a degenerate triangle")

    bidx = np.flatnonzero(labels == radii[-1])
    bang = np.mod(np.arctan2(nodes[bidx, 1], nodes[bidx, 0]), 2 * math.pi)
    order = np.argsort(bang)
    bidx, bang = bidx[order], bang[order]
    # snap boundary nodes exactly onto the circle
    nodes[bidx] = R * np.column_stack([np.cos(bang), np.sin(bang)])
    mesh = Mesh(nodes=nodes, triangles=tris, boundary_nodes=bidx,
                boundary_angles=bang, h=float(h), R=float(R), ring_radii=radii)
    logger.debug("built %s", mesh.key)
    return mesh


def mark_regions(mesh: Mesh, r_omega: float, r_q: float) -> RegionTags:
    """Tag triangles whose centroids fall inside the Omega and supp(q) disks."""
    if not (0.0 < r_omega < r_q < mesh.R):
        raise ValueError(f"need 0 < r_omega < r_q < R, got {r_omega}, {r_q}, {mesh.R}")
    rc = np.linalg.norm(mesh.centroids(), axis=1)
    omega_t = np.flatnonzero(rc < r_omega)
    suppq_t = np.flatnonzero(rc < r_q)
    omega_n = np.unique(mesh.triangles[omega_t]) if omega_t.size else np.zeros(0, dtype=np.int64)
    empty = omega_t.size == 0
    if empty:
        logger.warning("Omega (r_omega=%g) contains no triangles at h=%g", r_omega, mesh.h)
    return RegionTags(omega_nodes=omega_n, omega_triangles=omega_t,
                      suppq_triangles=suppq_t, r_omega=float(r_omega),
                      r_q=float(r_q), omega_empty=empty)


def export_mesh(mesh: Mesh, tags: RegionTags | None, path) -> None:
    """Write the mesh as plain text: header, node coordinates, triangles with region code."""
    codes = tags.region_codes(mesh.n_triangles) if tags is not None else np.zeros(mesh.n_triangles, int)
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (i, j, k), c in zip(mesh.triangles, codes):
            fh.write(f"{i} {j} {k} {c}\n")
