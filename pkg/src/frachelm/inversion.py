"""Bayesian inversion for the contrast of a fractional Helmholtz scatterer.

The unknown is the log contrast ``q~ = log(1 + q)`` expanded in the KL basis of
a Gaussian prior. Data are mollified local averages of the scattered field at
receivers on a circle between the scatterer and the truncation boundary. The
module provides:

* forward maps ``G`` (DtN boundary) and ``G_a`` (absorbing boundary),
* Bayesian approximation error (BAE) calibration of ``eps = G - G_a``,
* the potential ``Phi`` (exact or with model error), the Onsager-Machlup
  functional and its scaled variant,
* preconditioned Crank-Nicolson sampling, MAP estimation with finite-difference
  gradients, a Hellinger-Lipschitz probe in the data, and the small-error
  consistency experiment.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .forward_loss import LossProblem, SolverError
from .measures import (
    GaussianMeasure,
    JointNoiseModel,
    ModelError,
    hellinger_from_logweights,
    make_prior,
    nu_given_x,
    sample,
)

logger = logging.getLogger(__name__)

__all__ = [
    "OptimizerStall",
    "log_transform",
    "inverse_log_transform",
    "locate_points",
    "ObservationSet",
    "make_observation_set",
    "observe",
    "ScatteringSetup",
    "forward_G",
    "forward_Ga",
    "BAEModel",
    "bae_calibrate",
    "PosteriorSpec",
    "potential_phi",
    "om_functional",
    "om_functional_n",
    "pcn_sample",
    "MAPResult",
    "map_estimate",
    "hellinger_lipschitz_probe",
    "ConsistencyRow",
    "consistency_experiment",
    "write_consistency_csv",
]


class OptimizerStall(RuntimeError):
    """The objective failed to decrease over several accepted steps."""


# ---------------------------------------------------------------------------
# log transform
# ---------------------------------------------------------------------------
def log_transform(q) -> np.ndarray:
    """``log(1 + q)``; requires ``q > -1`` pointwise."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= -1.0):
        raise ValueError("contrast must exceed -1 everywhere")
    return np.log1p(q)


def inverse_log_transform(qt) -> np.ndarray:
    """``exp(q~) - 1``."""
    return np.expm1(np.asarray(qt, dtype=float))


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------
def locate_points(mesh, points, chunk: int = 256, tol: float = 1e-12):
    """Containing triangle and barycentric coordinates of each point (brute force).

    Raises
    ------
    ValueError
        If a point lies outside the mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = mesh.nodes[mesh.triangles]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri = np.empty(len(pts), dtype=int)
    bary = np.empty((len(pts), 3))
    for s in range(0, len(pts), chunk):
        x = pts[s:s + chunk, None, :]
        l1 = ((x[..., 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (x[..., 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (x[..., 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x[..., 0] - a[:, 0])) / det
        l0 = 1.0 - l1 - l2
        worst = np.minimum(np.minimum(l0, l1), l2)
        best = np.argmax(worst, axis=1)
        rows = np.arange(len(best))
        if np.any(worst[rows, best] < -tol):
            bad = s + int(np.flatnonzero(worst[rows, best] < -tol)[0])
            raise ValueError(f"point {pts[bad]} lies outside the mesh")
        tri[s:s + chunk] = best
        bary[s:s + chunk] = np.column_stack([l0[rows, best], l1[rows, best], l2[rows, best]])
    return tri, bary


@dataclass
class ObservationSet:
    """Receivers measuring disk averages of the field.

    ``operator`` is a sparse (J_obs x n_nodes) matrix whose rows average a
    nodal P1 field over the mollification disks.
    """

    receiver_centers: np.ndarray
    moll_radius: float
    operator: sp.csr_matrix
    y: np.ndarray | None = None

    @property
    def J_obs(self) -> int:
        return len(self.receiver_centers)

    @property
    def dim(self) -> int:
        return 2 * self.J_obs


def _disk_rule(radius: float, n_r: int = 6, n_theta: int = 16):
    t, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * radius * (t + 1.0)
    wr = 0.5 * radius * w * r
    th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    R_, T_ = np.meshgrid(r, th, indexing="ij")
    W = np.repeat(wr, n_theta)
    pts = np.column_stack([(R_ * np.cos(T_)).ravel(), (R_ * np.sin(T_)).ravel()])
    return pts, W / W.sum()


def make_observation_set(mesh, tags=None, J_obs: int = 8, radius: float | None = None,
                         moll_radius: float | None = None, n_r: int = 6,
                         n_theta: int = 16) -> ObservationSet:
    """Equally spaced receivers on a circle with mollified averaging functionals.

    Defaults: radius ``0.8 R`` and mollifier radius ``max(0.05 R, 2 h)``.
    """
    R = mesh.R
    radius = 0.8 * R if radius is None else float(radius)
    moll = max(0.05 * R, 2.0 * mesh.h) if moll_radius is None else float(moll_radius)
    if moll < 2.0 * mesh.h * (1 - 1e-12):
        raise ValueError(f"mollifier radius {moll:g} is below twice the mesh size {mesh.h:g}")
    if radius + moll >= R:
        raise ValueError("receiver disks must lie strictly inside the solver domain")
    if tags is not None and radius - moll <= tags.r_q:
        raise ValueError("receiver disks must not overlap supp(q)")
    ang = 2 * np.pi * np.arange(J_obs) / J_obs
    centers = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    loc, w = _disk_rule(moll, n_r, n_theta)
    rows, cols, vals = [], [], []
    for j, c in enumerate(centers):
        tri, bary = locate_points(mesh, c + loc)
        rows.append(np.full(3 * len(w), j))
        cols.append(mesh.triangles[tri].ravel())
        vals.append((bary * w[:, None]).ravel())
    op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(J_obs, mesh.n_nodes))
    return ObservationSet(centers, moll, op)


def observe(field, obs: ObservationSet, mesh=None) -> np.ndarray:
    """Real data vector: real parts of the receiver averages, then imaginary parts."""
    v = field.values if hasattr(field, "values") else np.asarray(field)
    z = obs.operator @ np.asarray(v, dtype=complex)
    return np.concatenate([z.real, z.imag])


# ---------------------------------------------------------------------------
# forward maps
# ---------------------------------------------------------------------------
class ScatteringSetup:
    """Everything needed to map KL coordinates to data.

    Parameters
    ----------
    mesh, tags : mesh and region tags
    k, gamma_tilde, tau_tilde : physical parameters
    frac : FracForm of order ``gamma_tilde + 1/2`` (None when ``tau_tilde == 0``)
    prior : GaussianMeasure whose basis is evaluated at supp(q) centroids
        (built from ``s`` and ``J_KL`` when omitted)
    obs : ObservationSet (defaults from :func:`make_observation_set`)
    N_dtn : Fourier truncation of the DtN map
    absorbing_radius : radius used by ``G_a`` (defaults to the mesh radius)
    cache_size : number of forward evaluations kept per boundary model
    """

    def __init__(self, mesh, tags, k, gamma_tilde, tau_tilde, frac=None, *, prior=None,
                 obs=None, s: float = 0.5, J_KL: int = 8, N_dtn: int = 32,
                 absorbing_radius: float | None = None, omega_freq=None, theta: float = 0.0,
                 cache_size: int = 256):
        self.mesh, self.tags, self.frac = mesh, tags, frac
        self.k, self.gamma_tilde, self.tau_tilde = float(k), float(gamma_tilde), float(tau_tilde)
        self.omega_freq = omega_freq
        self.theta = theta
        self.N_dtn = N_dtn
        self.absorbing_radius = mesh.R if absorbing_radius is None else float(absorbing_radius)
        centroids = mesh.centroids()[tags.suppq_triangles]
        self.prior = prior if prior is not None else make_prior(centroids, s=s, J_KL=J_KL, R=mesh.R)
        if self.prior.basis is None or self.prior.basis.shape[1] != len(tags.suppq_triangles):
            raise ValueError("prior basis must be evaluated at the supp(q) triangles")
        self.obs = obs if obs is not None else make_observation_set(mesh, tags)
        self._problems: dict = {}
        self._cache: dict = {}
        self.cache_size = cache_size
        self.n_solves = 0

    def problem(self, radius: float | None = None) -> LossProblem:
        """Loss problem with DtN boundary (``radius=None``) or absorbing at ``radius``."""
        key = None if radius is None else float(radius)
        if key not in self._problems:
            kw = dict(omega_freq=self.omega_freq, N_dtn=self.N_dtn, theta=self.theta)
            if key is None:
                p = LossProblem(self.mesh, self.tags, self.k, self.gamma_tilde, self.tau_tilde,
                                self.frac, boundary="dtn", **kw)
            else:
                p = LossProblem(self.mesh, self.tags, self.k, self.gamma_tilde, self.tau_tilde,
                                self.frac, boundary="absorbing", absorbing_radius=key, **kw)
            self._problems[key] = p
        return self._problems[key]

    def contrast(self, x) -> np.ndarray:
        """Per-triangle contrast ``q = exp(q~) - 1`` on supp(q)."""
        qt = self.prior.field(x)
        if not np.all(np.isfinite(qt)):
            raise ValueError("log contrast must be finite")
        return inverse_log_transform(qt)

    def predict(self, x, radius: float | None = None) -> np.ndarray:
        """Data predicted for KL coordinates ``x`` (cached)."""
        x = np.asarray(x, dtype=float)
        key = None if radius is None else float(radius)
        cache = self._cache.setdefault(key, OrderedDict())
        h = x.tobytes()
        if h in cache:
            cache.move_to_end(h)
            return cache[h].copy()
        field_ = self.problem(key).solve(self.contrast(x))
        self.n_solves += 1
        y = observe(field_, self.obs)
        cache[h] = y
        if len(cache) > self.cache_size:
            cache.popitem(last=False)
        return y.copy()

    def G(self, x) -> np.ndarray:
        return self.predict(x, None)

    def G_a(self, x) -> np.ndarray:
        return self.predict(x, self.absorbing_radius)

    def G_n(self, radius: float) -> Callable:
        return lambda x: self.predict(x, radius)

    def describe(self) -> dict:
        return {"k": self.k, "gamma_tilde": self.gamma_tilde, "tau_tilde": self.tau_tilde,
                "N_dtn": self.N_dtn, "absorbing_radius": self.absorbing_radius,
                "J_KL": self.prior.J_KL, "s": self.prior.s, "J_obs": self.obs.J_obs,
                "moll_radius": self.obs.moll_radius, "n_nodes": self.mesh.n_nodes}


def forward_G(x, setup: ScatteringSetup) -> np.ndarray:
    """Data of the DtN-truncated model for KL coordinates of ``q~``."""
    return setup.G(x)


def forward_Ga(x, setup: ScatteringSetup) -> np.ndarray:
    """Data of the absorbing-boundary model for KL coordinates of ``q~``."""
    return setup.G_a(x)


# ---------------------------------------------------------------------------
# approximation error calibration
# ---------------------------------------------------------------------------
@dataclass
class BAEModel:
    """Calibrated joint Gaussian model of ``eps = G - G_a`` and the unknown."""

    noise: JointNoiseModel
    n_calib: int
    meta: dict = field(default_factory=dict)
    eps_samples: np.ndarray | None = None


def _map_threads(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def bae_calibrate(prior: GaussianMeasure, G: Callable, G_a: Callable, n_samples: int,
                  seed=None, C_eta=None, ridge: float = 1e-10, threads: int = 1,
                  meta: dict | None = None) -> BAEModel:
    """Monte Carlo calibration of the approximation error ``eps = G(x) - G_a(x)``.

    The mean is the sample mean. The cross-covariance and covariance come from
    the least-squares regression ``eps ~ B x`` on the draws: ``C_eps_x = B C_x``
    and ``C_eps = S + B C_x B^T`` with ``S`` the sample residual covariance, so
    the conditional covariance of ``eps`` given ``x`` is ``S`` and stays PSD.

    The diagonal ridge is relative: ``ridge * mean(diag(C_eps))`` (zero when the
    two maps coincide).

    Raises
    ------
    SolverError
        Naming the draw index on which a forward solve failed.
    """
    if n_samples < 50:
        raise ValueError("at least 50 calibration samples are required")
    rng = np.random.default_rng(seed)
    xs = sample(prior, rng, size=n_samples)

    def eps_of(i):
        try:
            return G(xs[i]) - G_a(xs[i])
        except (SolverError, ValueError) as exc:
            raise SolverError(f"forward solve failed on calibration draw {i}: {exc}") from exc

    eps = np.array(_map_threads(eps_of, range(n_samples), threads))
    m = eps.shape[1]
    eps_mean = eps.mean(axis=0)
    de = eps - eps_mean
    dx = xs - xs.mean(axis=0)
    S_ee = de.T @ de / (n_samples - 1)
    S_ex = de.T @ dx / (n_samples - 1)
    S_xx = dx.T @ dx / (n_samples - 1)
    # Regression of eps on x, re-expressed against the exact prior covariance so
    # that C_eps - C_ex C_x^-1 C_xe equals the (PSD) sample Schur complement.
    B = np.linalg.solve(S_xx, S_ex.T).T
    C_eps_given_x = S_ee - B @ S_ex.T
    C_eps_given_x = 0.5 * (C_eps_given_x + C_eps_given_x.T)
    w, V = np.linalg.eigh(C_eps_given_x)
    C_eps_given_x = (V * np.clip(w, 0.0, None)) @ V.T
    var_x = prior.sqrt_eigenvalues ** 2
    C_eps_x = B * var_x[None, :]
    C_eps = C_eps_given_x + (B * var_x[None, :]) @ B.T
    C_eps = 0.5 * (C_eps + C_eps.T)
    scale = float(np.mean(np.diag(C_eps)))
    C_eps = C_eps + ridge * scale * np.eye(m)
    C_eta = np.zeros((m, m)) if C_eta is None else np.atleast_2d(C_eta)
    noise = JointNoiseModel(eps_mean, C_eps, C_eps_x, C_eta)
    return BAEModel(noise, n_samples, dict(meta or {}), eps)


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------
class PosteriorSpec:
    """Prior, data, forward map and noise model defining a posterior.

    Parameters
    ----------
    prior : GaussianMeasure
    forward : callable mapping KL coordinates to predicted data
        (``G`` for the exact variant, ``G_a`` for the BAE variant)
    y : data vector
    variant : {"exact", "bae"}
    noise_cov : observation noise covariance (exact variant)
    bae : BAEModel (BAE variant); its ``C_eta`` is the noise covariance
    """

    def __init__(self, prior: GaussianMeasure, forward: Callable, y, variant: str = "exact",
                 noise_cov=None, bae: BAEModel | None = None):
        if variant not in ("exact", "bae"):
            raise ValueError(f"unknown potential variant {variant!r}")
        self.prior, self.forward, self.variant, self.bae = prior, forward, variant, bae
        self.y = np.asarray(y, dtype=float)
        m = len(self.y)
        if variant == "exact":
            if noise_cov is None:
                raise ValueError("the exact variant needs a noise covariance")
            cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
            self._mean_shift = lambda x: np.zeros(m)
        else:
            if bae is None:
                raise ValueError("the bae variant needs a calibrated model")
            if bae.noise.dim != m:
                raise ValueError("BAE model and data have different dimensions")
            _, cov = nu_given_x(bae.noise, prior, prior.mean)
            gain = bae.noise.C_eps_x / prior.sqrt_eigenvalues[None, :] ** 2
            eps0 = bae.noise.eps_mean
            self._mean_shift = lambda x: eps0 + gain @ (np.asarray(x) - prior.mean)
        if cov.shape != (m, m):
            raise ValueError("noise covariance and data have different dimensions")
        try:
            self.chol = sla.cholesky(cov, lower=True)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise ModelError("noise covariance is not positive definite") from exc
        self.cov = cov

    def nu_mean(self, x) -> np.ndarray:
        """Conditional mean of the total error (zero for the exact variant)."""
        return self._mean_shift(x)

    def whitened_residual(self, x, y=None, forward=None, scale: float = 1.0) -> np.ndarray:
        """``C^{-1/2} (y - forward(x) - scale * nu_mean(x))``."""
        y = self.y if y is None else np.asarray(y, float)
        f = self.forward if forward is None else forward
        r = y - f(x) - scale * self.nu_mean(x)
        return sla.solve_triangular(self.chol, r, lower=True)

    def with_data(self, y) -> "PosteriorSpec":
        other = object.__new__(PosteriorSpec)
        other.__dict__.update(self.__dict__)
        other.y = np.asarray(y, dtype=float)
        return other


def potential_phi(x, y, spec: PosteriorSpec) -> float:
    """Data misfit ``1/2 |C^{-1/2}(y - F(x) - nu_mean(x))|^2``."""
    r = spec.whitened_residual(x, y)
    return 0.5 * float(r @ r)


def om_functional(x, spec: PosteriorSpec) -> float:
    """Onsager-Machlup functional ``Phi(x; y) + 1/2 ||x - x_bar||_E^2``."""
    z = spec.prior.whiten(x)
    return potential_phi(x, spec.y, spec) + 0.5 * float(z @ z)


def om_functional_n(x, n: float, y_n, spec: PosteriorSpec, forward_n: Callable | None = None) -> float:
    """Scaled functional ``||x||_E^2 + n^2 |y_n - G_n(x) - nu_mean(x)/n|^2_C``."""
    z = spec.prior.whiten(x)
    r = spec.whitened_residual(x, y_n, forward_n, scale=1.0 / n)
    return float(z @ z) + n * n * float(r @ r)


def pcn_sample(spec: PosteriorSpec, n_steps: int, beta: float, seed=None, x0=None,
               potential: Callable | None = None):
    """Preconditioned Crank-Nicolson chain.

    Proposal ``x' = x_bar + sqrt(1 - beta^2)(x - x_bar) + beta xi`` with
    ``xi ~ N(0, C_x)``, accepted with probability ``min(1, exp(Phi(x) - Phi(x')))``.

    Returns
    -------
    chain : (n_steps + 1, J_KL) array including the initial state
    acceptance_rate : float
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    prior = spec.prior
    phi = potential if potential is not None else (lambda x: potential_phi(x, spec.y, spec))
    rng = np.random.default_rng(seed)
    x = prior.mean.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    fx = phi(x)
    chain = np.empty((n_steps + 1, prior.J_KL))
    chain[0] = x
    acc = 0
    c = math.sqrt(1.0 - beta * beta)
    for i in range(n_steps):
        xi = prior.sqrt_eigenvalues * rng.standard_normal(prior.J_KL)
        xp = prior.mean + c * (x - prior.mean) + beta * xi
        fp = phi(xp)
        if math.log(rng.uniform()) < fx - fp:
            x, fx = xp, fp
            acc += 1
        chain[i + 1] = x
    return chain, acc / n_steps if n_steps else 1.0


# ---------------------------------------------------------------------------
# MAP estimation
# ---------------------------------------------------------------------------
@dataclass
class MAPResult:
    x: np.ndarray
    objective: float
    trace: list
    n_evals: int
    grad_norm: float
    converged: bool


def _fd_gradient(f, z, fz, step):
    g = np.empty_like(z)
    n = 0
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = step
        g[i] = (f(z + e) - f(z - e)) / (2 * step)
        n += 2
    return g, n


def map_estimate(objective: Callable | PosteriorSpec, init, prior: GaussianMeasure | None = None,
                 method: str = "gd", tol: float = 1e-8, max_evals: int = 20000,
                 fd_step: float = 1e-5, armijo: float = 1e-4, stall_steps: int = 10,
                 max_step: float = 2.0) -> MAPResult:
    """Minimise an objective over KL coordinates in whitened variables.

    Parameters
    ----------
    objective : callable or PosteriorSpec
        Function of KL coordinates; a PosteriorSpec means its Onsager-Machlup
        functional.
    prior : GaussianMeasure used for whitening (taken from the PosteriorSpec if one is given)
    method : {"gd", "bfgs"}
        Steepest descent, or quasi-Newton directions, both with central
        finite-difference gradients and Armijo backtracking.
    tol : stop when the whitened gradient norm is at most ``tol``
    max_step : longest trial step in whitened coordinates; trial points where
        the objective is not finite (or the forward solve fails) are rejected

    Raises
    ------
    OptimizerStall
        If ``stall_steps`` successive accepted steps fail to lower the objective.
    """
    if isinstance(objective, PosteriorSpec):
        spec = objective
        prior = spec.prior
        objective = lambda x: om_functional(x, spec)  # noqa: E731
    if prior is None:
        raise ValueError("a prior is needed for whitening")
    if method not in ("gd", "bfgs"):
        raise ValueError(f"unknown optimiser {method!r}")
    init = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(init)):
        raise ValueError("initial point must be finite")
    def f(z):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                v = float(objective(prior.unwhiten(z)))
        except (SolverError, ValueError, FloatingPointError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    z = prior.whiten(init)
    fz = f(z)
    if not math.isfinite(fz):
        raise ValueError("objective is not finite at the initial point")
    evals = 1
    trace = [fz]
    g, n = _fd_gradient(f, z, fz, fd_step)
    evals += n
    H = np.eye(len(z))
    step = 1.0
    stalled = 0
    converged = False
    while evals < max_evals:
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            converged = True
            break
        d = -H @ g if method == "bfgs" else -g
        slope = float(g @ d)
        if slope >= 0:  # not a descent direction, reset the quasi-Newton model
            H = np.eye(len(z))
            d, slope = -g, -gn * gn
        t = 1.0 if method == "bfgs" else min(2.0 * step, 1e6)
        t = min(t, max_step / float(np.linalg.norm(d)))
        while True:
            zn = z + t * d
            fn = f(zn)
            evals += 1
            if fn <= fz + armijo * t * slope or evals >= max_evals:
                break
            t *= 0.5
            if t * np.linalg.norm(d) < 1e-16 * max(1.0, np.linalg.norm(z)):
                break
        if not fn <= fz:
            # no acceptable step could be found at this resolution
            converged = gn <= 10 * tol
            break
        stalled = stalled + 1 if fz - fn <= 1e-15 * max(1.0, abs(fz)) else 0
        if stalled >= stall_steps:
            raise OptimizerStall(f"objective did not decrease over {stall_steps} accepted steps")
        step = t
        gnew, n = _fd_gradient(f, zn, fn, fd_step)
        evals += n
        if method == "bfgs":
            s_, yv = zn - z, gnew - g
            sy = float(s_ @ yv)
            if sy > 1e-12 * np.linalg.norm(s_) * np.linalg.norm(yv):
                rho = 1.0 / sy
                I = np.eye(len(z))
                H = (I - rho * np.outer(s_, yv)) @ H @ (I - rho * np.outer(yv, s_)) + rho * np.outer(s_, s_)
        z, fz, g = zn, fn, gnew
        trace.append(fz)
    return MAPResult(prior.unwhiten(z), fz, trace, evals, float(np.linalg.norm(g)), converged)


# ---------------------------------------------------------------------------
# Hellinger-Lipschitz probe
# ---------------------------------------------------------------------------
def hellinger_lipschitz_probe(spec: PosteriorSpec, y, deltas: Sequence[float], n_samples: int,
                              seed=None, unit=None, n_boot: int = 200, threads: int = 1):
    """Hellinger distance between posteriors for data ``y`` and ``y + delta * unit``.

    All distances share one set of prior samples and forward solves.

    Returns
    -------
    list of dict with keys ``delta``, ``distance``, ``se``, ``ratio``
    """
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise ValueError("perturbation sizes must be nonnegative")
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    if unit is None:
        unit = rng.standard_normal(len(y))
    unit = np.asarray(unit, float) / np.linalg.norm(unit)
    xs = sample(spec.prior, rng, size=n_samples)
    preds = np.array(_map_threads(lambda x: spec.forward(x) + spec.nu_mean(x), xs, threads))

    def logw(data):
        r = sla.solve_triangular(spec.chol, (data[None, :] - preds).T, lower=True)
        return -0.5 * np.sum(r * r, axis=0)

    l0 = logw(y)
    out = []
    for d in deltas:
        if d == 0:
            dist, se = 0.0, 0.0
        else:
            dist, se = hellinger_from_logweights(l0, logw(y + d * unit), n_boot=n_boot, seed=rng)
        out.append({"delta": d, "distance": dist, "se": se, "ratio": dist / d if d > 0 else float("nan")})
    return out


# ---------------------------------------------------------------------------
# small-error consistency
# ---------------------------------------------------------------------------
@dataclass
class ConsistencyRow:
    n: int
    gap_Gn: float
    gap_G: float
    cm_norm: float
    bound: float
    seed: int
    absorbing_radius: float
    converged: bool
    status: str = "ok"


def consistency_experiment(setup: ScatteringSetup, bae: BAEModel, n_list: Sequence[int], x_true,
                           seed: int = 0, radius_of_n: Callable | None = None,
                           zero_noise: bool = False, method: str = "bfgs", tol: float = 1e-6,
                           max_evals: int = 4000, init=None) -> list:
    """Minimisers of the scaled functional for a sequence of shrinking errors.

    For each ``n`` the data are ``y_n = G_n(x_true) + (eps_n + eta_n) / n`` with
    ``eps_n ~ N(eps_bar_x, C_eps|x)`` and ``eta_n ~ N(0, C_eta)``, and ``G_n``
    is the absorbing model with radius ``radius_of_n(n)`` (default ``n R``);
    a radius of None selects the DtN model itself (recorded as an infinite
    radius).

    Returns
    -------
    list of ConsistencyRow; ``bound`` is the a-priori bound ``I_n(x_true)``
    on ``||x_n||_E^2``.
    """
    R = setup.mesh.R
    radius_of_n = radius_of_n or (lambda n: n * R)
    x_true = np.asarray(x_true, dtype=float)
    G_true = setup.G(x_true)
    spec = PosteriorSpec(setup.prior, setup.G_a, np.zeros_like(G_true), "bae", bae=bae)
    noise = bae.noise
    eps_mean_x = spec.nu_mean(x_true)
    gain = noise.C_eps_x / setup.prior.sqrt_eigenvalues[None, :] ** 2
    C_eps_x = noise.C_eps - gain @ noise.C_eps_x.T
    rows = []
    for n in n_list:
        row_seed = int(seed) * 1000 + int(n)
        rng = np.random.default_rng(row_seed)
        rad = radius_of_n(n)
        G_n = setup.G if rad is None else setup.G_n(float(rad))
        rad = math.inf if rad is None else float(rad)
        if zero_noise:
            err = np.zeros_like(G_true)
        else:
            eps = rng.multivariate_normal(eps_mean_x, 0.5 * (C_eps_x + C_eps_x.T), method="eigh")
            eta = rng.multivariate_normal(np.zeros(len(G_true)), noise.C_eta, method="eigh")
            err = eps + eta
        y_n = G_n(x_true) + err / n
        obj = lambda x, n=n, y_n=y_n, G_n=G_n: om_functional_n(x, n, y_n, spec, G_n)  # noqa: E731
        bound = obj(x_true)
        x0 = setup.prior.mean if init is None else np.asarray(init, float)
        try:
            res = map_estimate(obj, x0, prior=setup.prior, method=method, tol=tol, max_evals=max_evals)
            x_n, conv, status = res.x, res.converged, "ok"
        except OptimizerStall as exc:
            logger.warning("row n=%d: %s", n, exc)
            x_n, conv, status = x0, False, "stalled"
        rows.append(ConsistencyRow(
            n=int(n),
            gap_Gn=float(np.linalg.norm(G_n(x_n) - G_true)),
            gap_G=float(np.linalg.norm(setup.G(x_n) - G_true)),
            cm_norm=float(np.linalg.norm(setup.prior.whiten(x_n))),
            bound=float(bound), seed=row_seed, absorbing_radius=rad, converged=conv, status=status))
        logger.info("consistency n=%d: %s", n, rows[-1])
    return rows


def write_consistency_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "gap_Gn", "gap_G", "cm_norm", "seed", "bound", "absorbing_radius", "status"])
        for r in rows:
            wr.writerow([r.n, repr(r.gap_Gn), repr(r.gap_G), repr(r.cm_norm), r.seed, repr(r.bound),
                         repr(r.absorbing_radius), r.status])
