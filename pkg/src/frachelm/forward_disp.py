r"""Dispersion-dominated model: coupled second-order / fractional system.

Unknowns are a field ``g`` on the whole disk and a field ``u`` on the
attenuating region Omega (outside Omega, ``u`` is read as ``g``). Starting from
``g_0 = u_0 = 0`` the fixed-point iteration alternates

.. math::
    \int\nabla g_{n+1}\cdot\nabla\phi - \int_{\partial B_R}(\mathcal{B}g_{n+1})\phi
      = k\int (1+q)\tilde u_n\phi + k\int (q+1-k^{2\tilde\gamma})u^{inc}\phi,

    E^D_\Omega(u_{n+1},\psi) + \int_{\partial\Omega}u_{n+1}\psi
      = k\int_\Omega g_n\psi + \int_{\partial\Omega} g_n\psi,

with :math:`E^D_\Omega` the regional form of order :math:`\tilde\gamma` (the
Omega mass matrix when :math:`\tilde\gamma = 0`). Boundary integrals over
:math:`\partial\Omega` use the edge trapezoid rule.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fem import edge_trapezoid_matrix, load_vectors, mass_matrix, stiffness_matrix, weighted_mass_matrix
from .forward_loss import ComplexField, dtn_block, h1_norm

logger = logging.getLogger(__name__)

__all__ = [
    "DispState",
    "DispProblem",
    "DivergenceError",
    "check_contraction_condition",
    "solve_disp_iterative",
    "residual_disp",
    "calibrate_contraction_constant",
    "write_history_csv",
]


class DivergenceError(RuntimeError):
    """Update norms grew for several consecutive iterations."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class DispState:
    """Iterate of the coupled system.

    ``g`` lives on all mesh nodes, ``u`` on the Omega nodes (in the row order
    of the fractional form).
    """

    g: ComplexField
    u: np.ndarray
    iterate_index: int
    diff_norm: float
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=complex)
        if not (np.isfinite(self.diff_norm) and self.diff_norm >= 0):
            raise ValueError("update norm must be finite and nonnegative")


def check_contraction_condition(k: float, q_field, C_cal: float):
    """Evaluate ``C k^(1/2) (1 + ||q||_inf) < 1``.

    Returns
    -------
    ok : bool
    margin : float, ``1 - C k^(1/2) (1 + ||q||_inf)``
    """
    if not C_cal > 0:
        raise ValueError("the calibrated constant must be positive")
    q_inf = float(np.max(np.abs(q_field))) if np.size(q_field) else 0.0
    lhs = C_cal * math.sqrt(max(k, 0.0)) * (1.0 + q_inf)
    return lhs < 1.0, 1.0 - lhs


class DispProblem:
    """Assembled operators of the iteration for one configuration.

    Parameters
    ----------
    mesh, tags : Mesh and RegionTags
    sc : ScattererConfig
    frac_D : FracForm of order ``gamma_tilde`` (mass substitute for order 0)
    N_dtn : int
    theta : incidence angle
    """

    def __init__(self, mesh, tags, sc, frac_D, N_dtn: int = 32, theta: float = 0.0):
        if abs(frac_D.sigma - sc.gamma_tilde) > 1e-12:
            raise ValueError(f"fractional form order {frac_D.sigma} differs from gamma_tilde {sc.gamma_tilde}")
        self.mesh, self.tags, self.sc, self.frac = mesh, tags, sc, frac_D
        k = sc.k
        n = mesh.n_nodes
        self.k = k
        self.K = stiffness_matrix(mesh)
        self.M = mass_matrix(mesh)
        coef = np.ones(mesh.n_triangles)
        coef[tags.suppq_triangles] += sc.q_values
        is_om = np.zeros(mesh.n_triangles, bool)
        is_om[tags.omega_triangles] = True
        # (1+q)-weighted mass split into Omega and non-Omega triangles
        self.Mq_omega = weighted_mass_matrix(mesh, coef[is_om], np.flatnonzero(is_om))
        self.Mq_rest = weighted_mass_matrix(mesh, coef[~is_om], np.flatnonzero(~is_om))
        bn = mesh.boundary_nodes
        A = self.K.astype(complex).tolil()
        A[np.ix_(bn, bn)] = A[np.ix_(bn, bn)].toarray() - dtn_block(mesh, k, N_dtn)
        self.A_g = A.tocsc()
        self.lu_g = spla.splu(self.A_g)

        # load of (q + 1 - k^(2 gamma)) u_inc over the whole disk
        coef_src = coef - k ** (2 * sc.gamma_tilde)
        d = np.array([math.cos(theta), math.sin(theta)])
        loc, idx = load_vectors(mesh, lambda p: np.exp(1j * k * (p @ d)))
        src = np.zeros(n, dtype=complex)
        np.add.at(src, mesh.triangles[idx], coef_src[:, None] * loc)
        self.src = k * src

        on = frac_D.nodes
        self.omega_nodes = on
        edges = tags.omega_boundary_edges(mesh)
        self.B_om = edge_trapezoid_matrix(mesh.nodes, edges, n)[on][:, on].toarray()
        self.M_om = mass_matrix(mesh, tags.omega_triangles)[on][:, on].toarray()
        self.A_u = frac_D.matrix + self.B_om
        self.lu_u = _dense_lu(self.A_u)
        self.ED = frac_D.matrix

    def lift_u(self, u_omega, g):
        """Global field equal to ``u`` on Omega nodes and ``g`` elsewhere."""
        out = np.array(g, dtype=complex, copy=True)
        out[self.omega_nodes] = u_omega
        return out

    def g_step(self, u_omega, g):
        rhs = self.k * (self.Mq_omega @ self.lift_u(u_omega, g) + self.Mq_rest @ g) + self.src
        return self.lu_g.solve(rhs)

    def u_step(self, g):
        g_om = g[self.omega_nodes]
        rhs = self.k * (self.M_om @ g_om) + self.B_om @ g_om
        return self.lu_u(rhs)

    def update_norm(self, dg, du):
        ng = h1_norm(dg, self.mesh, self.K, self.M)
        nu = float(math.sqrt(max(np.real(np.conj(du) @ (self.ED @ du)), 0.0)))
        return ng, nu

    def residual_vectors(self, g, u_omega):
        """Residuals of the summed iteration equations (g rows, u rows)."""
        r_g = self.A_g @ g - self.k * (self.Mq_omega @ self.lift_u(u_omega, g) + self.Mq_rest @ g) - self.src
        g_om = g[self.omega_nodes]
        r_u = self.ED @ u_omega + self.B_om @ u_omega - self.k * (self.M_om @ g_om) - self.B_om @ g_om
        return r_g, r_u


def _dense_lu(A):
    import scipy.linalg as sla

    fac = sla.lu_factor(A)
    return lambda b: sla.lu_solve(fac, b)


def residual_disp(state: DispState, problem: DispProblem) -> float:
    """Largest normalised residual over the nodal test basis.

    Each g-row is divided by the H1 norm of its hat function, each u-row by
    the norm of its hat function in the fractional form plus the mass.
    """
    r_g, r_u = problem.residual_vectors(state.g.values, state.u)
    ng = np.sqrt((problem.K + problem.M).diagonal())
    nu = np.sqrt(np.diag(problem.ED) + np.diag(problem.M_om))
    return float(max(np.max(np.abs(r_g) / ng), np.max(np.abs(r_u) / nu)))


def solve_disp_iterative(problem: DispProblem, tol: float = 1e-10, max_iter: int = 200,
                         C_cal: float | None = None, init=None, min_iter: int = 0,
                         track_residual: bool = True) -> DispState:
    """Run the fixed-point iteration until the combined update norm is below ``tol``.

    Parameters
    ----------
    init : (g0, u0) or None
        Initial iterate; zero by default.
    min_iter : int
        Keep iterating at least this many times even below ``tol``.
    C_cal : float, optional
        Calibrated contraction constant; a warning is logged when the
        condition fails, and the iteration proceeds.
    """
    sc = problem.sc
    if C_cal is not None:
        ok, margin = check_contraction_condition(sc.k, sc.q_values, C_cal)
        if not ok:
            logger.warning("contraction condition fails (margin %.3f); iterating anyway", margin)
    n_om = len(problem.omega_nodes)
    if init is None:
        g = np.zeros(problem.mesh.n_nodes, dtype=complex)
        u = np.zeros(n_om, dtype=complex)
    else:
        g = np.asarray(init[0], dtype=complex).copy()
        u = np.asarray(init[1], dtype=complex).copy()
    history = []
    grow = 0
    last = math.inf
    diff = math.inf
    for it in range(1, max_iter + 1):
        g_new = problem.g_step(u, g)
        u_new = problem.u_step(g)
        ng, nu = problem.update_norm(g_new - g, u_new - u)
        diff = ng + nu
        g, u = g_new, u_new
        res = np.nan
        if track_residual:
            res = residual_disp(DispState(ComplexField(g, problem.mesh.key), u, it, diff), problem)
        history.append({"iter": it, "update_norm_g": ng, "update_norm_u": nu, "residual": res})
        logger.debug("disp iter %d: |dg|=%.3e |du|=%.3e res=%.3e", it, ng, nu, res)
        if not np.isfinite(diff):
            raise DivergenceError("non-finite update", history)
        grow = grow + 1 if diff > last else 0
        if grow >= 3:
            raise DivergenceError(f"update norm grew for 3 consecutive iterations at {it}", history)
        last = diff
        if diff <= tol and it >= min_iter:
            break
    return DispState(ComplexField(g, problem.mesh.key), u, len(history), diff, history)


def calibrate_contraction_constant(problem: DispProblem, n_iter: int = 12) -> tuple[float, float]:
    """Measure the contraction factor at a reference problem.

    Returns ``(C_cal, rho0)`` with ``rho0`` the geometric-mean ratio of
    successive update norms over iterations 2..n_iter and
    ``C_cal = rho0 / (k0^(1/2) (1 + ||q0||_inf))``.
    """
    try:
        history = solve_disp_iterative(problem, tol=0.0, max_iter=n_iter, track_residual=False).history
    except DivergenceError as exc:
        logger.warning("reference iteration diverged; calibrating from %d iterates", len(exc.history))
        history = exc.history
    norms = np.array([h["update_norm_g"] + h["update_norm_u"] for h in history])
    norms = norms[1:]
    norms = norms[norms > 0]
    rho0 = float(np.exp(np.mean(np.diff(np.log(norms))))) if len(norms) > 1 else 0.0
    sc = problem.sc
    c = rho0 / (math.sqrt(sc.k) * (1.0 + sc.q_max_abs))
    return c, rho0


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "update_norm_g", "update_norm_u", "residual"])
        for h in history:
            wr.writerow([h["iter"], repr(h["update_norm_g"]), repr(h["update_norm_u"]), repr(h["residual"])])
