r"""Loss-dominated fractional Helmholtz scattering with P1 finite elements.

The scattered field :math:`u` solves, for every test function :math:`\phi`,

.. math::
    \int \nabla u\cdot\nabla\phi - i\omega\tilde\tau E_\Omega(u,\phi)
    - k^2\int (1+q) u\phi - \int_{\partial B_R} (\mathcal{B}u)\phi
    = \int \bigl(k^2 q + i\omega\tilde\tau k^{2\tilde\gamma+1}1_\Omega\bigr)
      u^{inc}\phi,

where :math:`E_\Omega` is the regional fractional form of order
:math:`\tilde\gamma + 1/2` and :math:`\mathcal{B}` is the exterior
Dirichlet-to-Neumann map on the circle, truncated to Fourier modes
``|n| <= N``. The reduced model replaces :math:`\mathcal{B}` by the absorbing
condition :math:`\partial_n u = iku`, either on the mesh boundary itself or on
a larger concentric circle whose homogeneous annulus is eliminated exactly
mode by mode.

:class:`LossProblem` caches everything that does not depend on the contrast,
so repeated solves (sampling, optimisation) only rebuild one sparse mass
matrix and one load vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import edge_mass_matrix, load_vectors, mass_matrix, stiffness_matrix
from .specfun import dtn_coefficients, hankel1_all

logger = logging.getLogger(__name__)

__all__ = [
    "ComplexField",
    "LossSystem",
    "LossProblem",
    "SolverError",
    "incident_field",
    "assemble_loss_system",
    "solve_loss_dtn",
    "solve_loss_absorbing",
    "lipschitz_ratio",
    "h1_norm",
    "l2_norm",
    "dtn_block",
    "absorbing_exterior_coefficients",
    "write_field_csv",
]


class SolverError(RuntimeError):
    """Raised when a discrete system cannot be solved to the residual contract."""


@dataclass
class ComplexField:
    """Complex nodal values tied to a mesh."""

    values: np.ndarray
    mesh_ref: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def __len__(self):
        return len(self.values)


@dataclass
class LossSystem:
    """Assembled linear system ``lhs @ u = rhs``."""

    lhs: sp.csc_matrix
    rhs: np.ndarray
    dtn_truncation: int
    mesh_ref: str
    boundary: str = "dtn"
    meta: dict = field(default_factory=dict)


def incident_field(k: float, theta: float, mesh) -> ComplexField:
    """Plane wave exp(i k x.d), d = (cos theta, sin theta), at the mesh nodes."""
    d = np.array([math.cos(theta), math.sin(theta)])
    return ComplexField(np.exp(1j * k * (mesh.nodes @ d)), mesh.key)


def _plane_wave(k, theta):
    d = np.array([math.cos(theta), math.sin(theta)])
    return lambda p: np.exp(1j * k * (p @ d))


def _fourier_boundary_block(mesh, coefs):
    """Boundary matrix R w_j w_l / (2 pi) * sum_n c_|n| e^{i n (t_j - t_l)}."""
    ang = mesh.boundary_angles
    # angular trapezoid weights for possibly nonuniform boundary nodes
    nxt = np.roll(ang, -1) - ang
    nxt[-1] += 2 * np.pi
    prv = np.roll(nxt, 1)
    w = 0.5 * (nxt + prv)
    diff = ang[:, None] - ang[None, :]
    kern = np.full(diff.shape, coefs[0], dtype=complex)
    for n in range(1, len(coefs)):
        kern += 2.0 * coefs[n] * np.cos(n * diff)
    return kern * (mesh.R * np.outer(w, w) / (2 * np.pi))


def dtn_block(mesh, k: float, N: int) -> np.ndarray:
    """Dense DtN matrix over the ordered boundary nodes, modes |n| <= N."""
    return _fourier_boundary_block(mesh, dtn_coefficients(N, k, mesh.R))


def absorbing_exterior_coefficients(N: int, k: float, R: float, rho: float) -> np.ndarray:
    """Mode-wise Neumann/Dirichlet ratios at radius ``R`` of the absorbing model on ``B_rho``.

    In the homogeneous annulus ``R < r < rho`` each mode is a combination of
    H^(1)_n(kr) and H^(2)_n(kr); the absorbing condition u_r = i k u at
    ``rho`` fixes their ratio. For ``rho = R`` every coefficient equals ``i k``.
    """
    if rho < R:
        raise ValueError("the absorbing radius must not be smaller than the mesh radius")
    if rho == R:
        return np.full(N + 1, 1j * k)
    h_r = hankel1_all(N + 1, k * R)
    h_p = hankel1_all(N + 1, k * rho)

    def deriv(h, x):
        d = np.empty(N + 1, dtype=complex)
        d[0] = -h[1]
        n = np.arange(1, N + 1)
        d[1:] = h[:N] - n / x * h[1:N + 1]
        return d

    d_r, d_p = deriv(h_r, k * R), deriv(h_p, k * rho)
    # H2 = conj(H1) for real arguments
    refl = -(d_p - 1j * h_p[:N + 1]) / (np.conj(d_p) - 1j * np.conj(h_p[:N + 1]))
    num = d_r + refl * np.conj(d_r)
    den = h_r[:N + 1] + refl * np.conj(h_r[:N + 1])
    out = k * num / den
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"absorbing exterior coefficients overflowed at k*rho={k * rho:g}")
    return out


class LossProblem:
    """Contrast-independent pieces of the loss-dominated model on one mesh.

    Parameters
    ----------
    mesh, tags : Mesh and RegionTags
    k, gamma_tilde, tau_tilde, omega_freq : physical parameters
    frac : FracForm or None
        Fractional form of order ``gamma_tilde + 1/2``; may be None if ``tau_tilde == 0``.
    boundary : {"dtn", "absorbing"}
    N_dtn : int
        Fourier truncation of the DtN map (and of the exterior absorbing reduction).
    absorbing_radius : float, optional
        Radius of the absorbing circle for ``boundary="absorbing"``; defaults to
        the mesh radius. Larger radii are handled by exact annulus elimination.
    theta : incidence angle
    """

    def __init__(self, mesh, tags, k, gamma_tilde, tau_tilde, frac=None, *,
                 omega_freq=None, boundary="dtn", N_dtn=32, absorbing_radius=None,
                 theta=0.0):
        if boundary not in ("dtn", "absorbing"):
            raise ValueError(f"unknown boundary model {boundary!r}")
        if N_dtn < 8:
            raise ValueError("the DtN truncation must be at least 8")
        self.mesh, self.tags = mesh, tags
        self.k = float(k)
        self.gamma_tilde = float(gamma_tilde)
        self.tau_tilde = float(tau_tilde)
        self.omega_freq = float(k if omega_freq is None else omega_freq)
        self.boundary = boundary
        self.N_dtn = int(N_dtn)
        self.theta = float(theta)
        self.absorbing_radius = mesh.R if absorbing_radius is None else float(absorbing_radius)
        if tau_tilde > 0:
            if frac is None:
                raise ValueError("a fractional form is required when tau_tilde > 0")
            if abs(frac.sigma - (gamma_tilde + 0.5)) > 1e-12:
                raise ValueError(f"fractional form has order {frac.sigma}, expected {gamma_tilde + 0.5}")
        self.frac = frac
        n = mesh.n_nodes
        self.K = stiffness_matrix(mesh)
        self.M = mass_matrix(mesh)
        self.suppq = np.asarray(tags.suppq_triangles)
        tq = mesh.triangles[self.suppq]
        area = np.abs(mesh.areas()[self.suppq])
        self._mq_rows = np.repeat(tq, 3, axis=1).ravel()
        self._mq_cols = np.tile(tq, (1, 3)).ravel()
        self._mq_local = ((np.ones((3, 3)) + np.eye(3)) / 12.0)[None] * area[:, None, None]

        uinc = _plane_wave(self.k, self.theta)
        self._load_q, _ = load_vectors(mesh, uinc, self.suppq)
        self._tq = tq
        src_om = np.zeros(n, dtype=complex)
        if self.tau_tilde > 0 and len(tags.omega_triangles):
            lo, idx = load_vectors(mesh, uinc, tags.omega_triangles)
            np.add.at(src_om, mesh.triangles[idx], lo)
        self._src_omega = (1j * self.omega_freq * self.tau_tilde
                           * self.k ** (2 * self.gamma_tilde + 1)) * src_om

        base = (self.K - self.k ** 2 * self.M).astype(complex).tolil()
        bn = mesh.boundary_nodes
        if boundary == "dtn":
            self.boundary_block = dtn_block(mesh, self.k, self.N_dtn)
            base[np.ix_(bn, bn)] = base[np.ix_(bn, bn)].toarray() - self.boundary_block
        elif self.absorbing_radius == mesh.R:
            edges = np.column_stack([bn, np.roll(bn, -1)])
            bm = edge_mass_matrix(mesh.nodes, edges, n)
            self.boundary_block = (1j * self.k) * bm[bn][:, bn].toarray()
            base = (base.tocsr() - 1j * self.k * bm).tolil()
        else:
            coefs = absorbing_exterior_coefficients(self.N_dtn, self.k, mesh.R, self.absorbing_radius)
            self.boundary_block = _fourier_boundary_block(mesh, coefs)
            base[np.ix_(bn, bn)] = base[np.ix_(bn, bn)].toarray() - self.boundary_block
        if self.tau_tilde > 0:
            on = frac.nodes
            base[np.ix_(on, on)] = (base[np.ix_(on, on)].toarray()
                                    - 1j * self.omega_freq * self.tau_tilde * frac.matrix)
        self._base = base.tocsc()
        self._uinc_nodes = incident_field(self.k, self.theta, mesh).values

    # -- contrast dependent parts -------------------------------------------------
    def contrast_mass(self, q_values) -> sp.csc_matrix:
        """Matrix of int q u phi for piecewise constant q on supp(q)."""
        q = np.asarray(q_values, dtype=float)
        if q.shape != (len(self.suppq),):
            raise ValueError(f"expected {len(self.suppq)} contrast values, got {q.shape}")
        data = (self._mq_local * q[:, None, None]).ravel()
        n = self.mesh.n_nodes
        return sp.csc_matrix((data, (self._mq_rows, self._mq_cols)), shape=(n, n))

    def rhs(self, q_values) -> np.ndarray:
        q = np.asarray(q_values, dtype=float)
        b = self._src_omega.copy()
        np.add.at(b, self._tq, self.k ** 2 * q[:, None] * self._load_q)
        return b

    def system(self, q_values) -> LossSystem:
        lhs = (self._base - self.k ** 2 * self.contrast_mass(q_values)).tocsc()
        return LossSystem(lhs=lhs, rhs=self.rhs(q_values), dtn_truncation=self.N_dtn,
                          mesh_ref=self.mesh.key, boundary=self.boundary,
                          meta={"absorbing_radius": self.absorbing_radius})

    def solve(self, q_values, rhs=None) -> ComplexField:
        sysm = self.system(q_values)
        if rhs is not None:
            sysm.rhs = np.asarray(rhs, dtype=complex)
        return solve_system(sysm)

    @property
    def incident(self) -> np.ndarray:
        return self._uinc_nodes


def solve_system(system: LossSystem, rtol: float = 1e-10) -> ComplexField:
    """Sparse LU solve with a relative residual check."""
    try:
        lu = spla.splu(system.lhs.tocsc())
    except RuntimeError as exc:  # exactly singular factor
        raise SolverError(f"factorisation failed: {exc}") from exc
    u = lu.solve(system.rhs)
    if not np.all(np.isfinite(u)):
        raise SolverError("solution contains non-finite values")
    nrm_b = np.linalg.norm(system.rhs)
    res = np.linalg.norm(system.lhs @ u - system.rhs)
    if nrm_b == 0.0:
        if res != 0.0 or np.linalg.norm(u) != 0.0:
            raise SolverError("nonzero solution for a zero right-hand side")
    elif res > rtol * nrm_b:
        # one step of iterative refinement before giving up
        u = u + lu.solve(system.rhs - system.lhs @ u)
        res = np.linalg.norm(system.lhs @ u - system.rhs)
        if res > rtol * nrm_b:
            cond = spla.onenormest(system.lhs) * spla.onenormest(spla.LinearOperator(
                system.lhs.shape, matvec=lu.solve, dtype=complex))
            raise SolverError(f"relative residual {res / nrm_b:.3e} exceeds {rtol:g} "
                              f"(condition estimate {cond:.3e})")
    return ComplexField(u, system.mesh_ref)


def assemble_loss_system(mesh, tags, sc, frac, N_dtn: int = 32, theta: float = 0.0) -> LossSystem:
    """Assemble the DtN-truncated system for the scatterer configuration ``sc``."""
    if abs(sc.R - mesh.R) > 1e-12 * mesh.R:
        raise ValueError("scatterer radius does not match the mesh radius")
    prob = LossProblem(mesh, tags, sc.k, sc.gamma_tilde, sc.tau_tilde, frac,
                       omega_freq=sc.omega_freq, boundary="dtn", N_dtn=N_dtn, theta=theta)
    return prob.system(sc.q_values)


def solve_loss_dtn(system: LossSystem) -> ComplexField:
    """Solve the DtN system (residual checked to 1e-10 relative)."""
    return solve_system(system)


def solve_loss_absorbing(mesh_D, tags, sc, frac, N_dtn: int = 32, theta: float = 0.0,
                         absorbing_radius: float | None = None) -> ComplexField:
    """Solve the reduced problem with the absorbing condition.

    The condition sits on the boundary of ``mesh_D`` unless ``absorbing_radius``
    is larger, in which case the homogeneous annulus is eliminated exactly.
    """
    if tags.r_q >= mesh_D.R:
        raise ValueError("the scatterer support must lie inside the absorbing domain")
    prob = LossProblem(mesh_D, tags, sc.k, sc.gamma_tilde, sc.tau_tilde, frac,
                       omega_freq=sc.omega_freq, boundary="absorbing", N_dtn=N_dtn,
                       absorbing_radius=absorbing_radius, theta=theta)
    return prob.solve(sc.q_values)


def h1_norm(field, mesh, K=None, M=None) -> float:
    """Discrete H1 norm sqrt(u^H (K + M) u)."""
    u = field.values if isinstance(field, ComplexField) else np.asarray(field)
    K = stiffness_matrix(mesh) if K is None else K
    M = mass_matrix(mesh) if M is None else M
    return float(math.sqrt(max(np.real(np.conj(u) @ ((K + M) @ u)), 0.0)))


def l2_norm(field, mesh, M=None) -> float:
    """Discrete L2 norm sqrt(u^H M u)."""
    u = field.values if isinstance(field, ComplexField) else np.asarray(field)
    M = mass_matrix(mesh) if M is None else M
    return float(math.sqrt(max(np.real(np.conj(u) @ (M @ u)), 0.0)))


def lipschitz_ratio(problem: LossProblem, q1, q2) -> float:
    """||S(q1) u_inc - S(q2) u_inc||_H1 / (||q1 - q2||_inf ||u_inc||_L2)."""
    dq = float(np.max(np.abs(np.asarray(q1) - np.asarray(q2))))
    if dq == 0.0:
        raise ValueError("the Lipschitz ratio is undefined for identical contrasts")
    u1 = problem.solve(q1).values
    u2 = problem.solve(q2).values
    num = h1_norm(u1 - u2, problem.mesh, problem.K, problem.M)
    den = dq * l2_norm(problem.incident, problem.mesh, problem.M)
    return num / den


def write_field_csv(field: ComplexField, mesh, path) -> None:
    """CSV with columns node_index, x, y, re, im."""
    data = np.column_stack([np.arange(mesh.n_nodes), mesh.nodes, field.values.real, field.values.imag])
    np.savetxt(path, data, delimiter=",", header="node_index,x,y,re,im", comments="",
               fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"])
