"""Gaussian measures in Karhunen-Loeve coordinates and related diagnostics.

Priors are diagonal Gaussians on the coefficients of tensor trigonometric
modes of the square ``[-R, R]^2``. The module also provides conditioning of a
jointly Gaussian model error on the unknown, the Kakutani summability test for
product measures, Cameron-Martin norms and Hellinger distances (closed form in
1D, self-normalised Monte Carlo in general).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "GaussianMeasure",
    "JointNoiseModel",
    "ModelError",
    "trig_modes",
    "make_prior",
    "sample",
    "cameron_martin_norm",
    "condition_eps_given_x",
    "nu_given_x",
    "kakutani_check",
    "hellinger_gaussian_1d",
    "hellinger_empirical",
    "hellinger_from_logweights",
]


class ModelError(ValueError):
    """A covariance that must be positive definite is not."""


def _mode_table(J: int):
    """First J (cx, cy) pairs of 1D indices ordered by increasing frequency.

    1D index 0 is the constant, 2m-1 is cos(m pi x / R), 2m is sin(m pi x / R).
    """
    m_max = int(math.ceil(math.sqrt(J))) + 2
    idx = range(2 * m_max + 1)
    freq = lambda i: (i + 1) // 2  # noqa: E731
    pairs = sorted(((a, b) for a in idx for b in idx),
                   key=lambda ab: (freq(ab[0]) ** 2 + freq(ab[1]) ** 2, max(freq(ab[0]), freq(ab[1])), ab))
    return pairs[:J]


def _basis_1d(i: int, x: np.ndarray, R: float) -> np.ndarray:
    if i == 0:
        return np.full_like(x, 1.0 / math.sqrt(2 * R))
    m = (i + 1) // 2
    f = np.cos if i % 2 == 1 else np.sin
    return f(m * math.pi * x / R) / math.sqrt(R)


def trig_modes(points: np.ndarray, J: int, R: float) -> np.ndarray:
    """Values of the first ``J`` L2-orthonormal trig modes of ``[-R, R]^2`` at ``points``.

    Returns an array of shape (J, n_points).
    """
    pts = np.asarray(points, dtype=float)
    out = np.empty((J, len(pts)))
    for j, (a, b) in enumerate(_mode_table(J)):
        out[j] = _basis_1d(a, pts[:, 0], R) * _basis_1d(b, pts[:, 1], R)
    return out


@dataclass
class GaussianMeasure:
    """Diagonal Gaussian on KL coordinates with an attached nodal basis.

    A coordinate vector ``x`` represents the field ``basis.T @ x``.
    """

    mean: np.ndarray
    sqrt_eigenvalues: np.ndarray
    basis: np.ndarray | None = None
    s: float = float("nan")
    R: float = 1.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.sqrt_eigenvalues = np.asarray(self.sqrt_eigenvalues, dtype=float)
        if np.any(self.sqrt_eigenvalues <= 0):
            raise ValueError("prior standard deviations must be strictly positive")
        if np.any(np.diff(self.sqrt_eigenvalues) > 0):
            raise ValueError("prior standard deviations must be nonincreasing")
        if self.mean.shape != self.sqrt_eigenvalues.shape:
            raise ValueError("mean and standard deviations must have the same length")

    @property
    def J_KL(self) -> int:
        return len(self.mean)

    @property
    def std(self) -> np.ndarray:
        return self.sqrt_eigenvalues

    @property
    def cov(self) -> np.ndarray:
        return np.diag(self.sqrt_eigenvalues ** 2)

    def field(self, x) -> np.ndarray:
        if self.basis is None:
            raise ValueError("this measure has no basis attached")
        return self.basis.T @ np.asarray(x)

    def whiten(self, x):
        return (np.asarray(x) - self.mean) / self.sqrt_eigenvalues

    def unwhiten(self, z):
        return self.mean + self.sqrt_eigenvalues * np.asarray(z)

    def to_json(self) -> str:
        return json.dumps({"J_KL": self.J_KL, "s": self.s, "mean": self.mean.tolist(),
                           "std": self.sqrt_eigenvalues.tolist()})

    @classmethod
    def from_json(cls, text: str, basis=None) -> "GaussianMeasure":
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["std"]), basis=basis, s=d["s"])


def make_prior(points, s: float = 0.5, J_KL: int = 8, decay_exponent: float = 1.0,
               R: float = 1.0, mean=None) -> GaussianMeasure:
    """Trig-mode prior with mode ``j`` having standard deviation ``j^-(s+1)``.

    Parameters
    ----------
    points : (n, 2) array or Mesh
        Where the basis is evaluated (mesh nodes if a Mesh is given).
    s : float > 0
        Smoothness exponent.
    decay_exponent : float
        Eigenvalue growth ``alpha_j = j^decay_exponent`` of the precision
        operator (1 in two dimensions); the std is ``alpha_j^-(s+1)``.
    """
    if J_KL < 4:
        raise ValueError("J_KL must be at least 4")
    if not s > 0:
        raise ValueError("s must be positive")
    if hasattr(points, "nodes"):
        R = points.R
        points = points.nodes
    j = np.arange(1, J_KL + 1, dtype=float)
    std = (j ** decay_exponent) ** (-(s + 1.0))
    mean = np.zeros(J_KL) if mean is None else np.asarray(mean, float)
    return GaussianMeasure(mean, std, trig_modes(points, J_KL, R), s=s, R=R)


def sample(measure: GaussianMeasure, seed=None, size=None, xi=None) -> np.ndarray:
    """Draw KL coordinates ``mean + std * xi`` with ``xi`` standard normal.

    ``seed`` may be an int or a numpy Generator; ``xi`` overrides the draw.
    """
    if xi is None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        shape = (measure.J_KL,) if size is None else (size, measure.J_KL)
        xi = rng.standard_normal(shape)
    return measure.mean + measure.sqrt_eigenvalues * np.asarray(xi)


def cameron_martin_norm(measure: GaussianMeasure, x) -> float:
    """sqrt(sum_j (x_j - mean_j)^2 / std_j^2)."""
    z = measure.whiten(x)
    return float(np.sqrt(np.sum(z * z, axis=-1)))


@dataclass
class JointNoiseModel:
    """Model error ``eps`` jointly Gaussian with the KL coordinates, plus noise ``eta``."""

    eps_mean: np.ndarray
    C_eps: np.ndarray
    C_eps_x: np.ndarray
    C_eta: np.ndarray

    def __post_init__(self):
        self.eps_mean = np.asarray(self.eps_mean, dtype=float)
        self.C_eps = np.atleast_2d(np.asarray(self.C_eps, dtype=float))
        self.C_eps_x = np.atleast_2d(np.asarray(self.C_eps_x, dtype=float))
        self.C_eta = np.atleast_2d(np.asarray(self.C_eta, dtype=float))
        m = len(self.eps_mean)
        for name, mat in (("C_eps", self.C_eps), ("C_eta", self.C_eta)):
            if mat.shape != (m, m):
                raise ValueError(f"{name} has shape {mat.shape}, expected {(m, m)}")
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise ValueError(f"{name} must be symmetric")
        if self.C_eps_x.shape[0] != m:
            raise ValueError("C_eps_x must have one row per observation")

    @property
    def dim(self) -> int:
        return len(self.eps_mean)


def _check_prior(prior: GaussianMeasure):
    if np.any(prior.sqrt_eigenvalues <= 0):
        raise ZeroDivisionError("prior covariance is singular")


def condition_eps_given_x(model: JointNoiseModel, prior: GaussianMeasure, x):
    """Conditional mean and covariance of ``eps`` given the unknown ``x``.

    mean = eps_bar + C_ex C_x^-1 (x - x_bar), cov = C_e - C_ex C_x^-1 C_xe.
    """
    _check_prior(prior)
    var = prior.sqrt_eigenvalues ** 2
    gain = model.C_eps_x / var[None, :]
    mean = model.eps_mean + gain @ (np.asarray(x, float) - prior.mean)
    cov = model.C_eps - gain @ model.C_eps_x.T
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def nu_given_x(model: JointNoiseModel, prior: GaussianMeasure, x):
    """Mean and covariance of ``nu = eps + eta`` given ``x``.

    Raises
    ------
    ModelError
        If the covariance is not positive definite.
    """
    mean, cov = condition_eps_given_x(model, prior, x)
    cov = cov + model.C_eta
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ModelError("conditional covariance of nu is not positive definite") from exc
    return mean, cov


def kakutani_check(lambda_seq, r_seq, h_seq, K_trunc: int | None = None,
                   tail_tol: float = 1e-6, growth_ratio: float = 0.4):
    """Partial sums of the two Kakutani series and a verdict.

    sum1 = sum h_k^2 / (lambda_k + r_k), sum2 = sum (lambda_k - r_k)^2 / (lambda_k + r_k)^2.

    The verdict compares the partial sums at ``K`` and ``K/2``: both tails
    below ``tail_tol`` means "equivalent", a tail at least ``growth_ratio``
    times the first-half sum means "singular", otherwise "inconclusive".

    Returns
    -------
    (sum1, sum2, verdict)
    """
    lam = np.asarray(lambda_seq, dtype=float)
    r = np.asarray(r_seq, dtype=float)
    h = np.asarray(h_seq, dtype=float)
    K = len(lam) if K_trunc is None else int(K_trunc)
    if K < 100:
        raise ValueError("K_trunc must be at least 100")
    lam, r, h = lam[:K], r[:K], h[:K]
    if np.any(lam <= 0) or np.any(r <= 0):
        raise ValueError("variance sequences must be strictly positive")
    if np.any(~np.isfinite(h)):
        raise ValueError("mean shifts must be finite")
    t1 = h * h / (lam + r)
    t2 = ((lam - r) / (lam + r)) ** 2
    half = K // 2
    verdicts = []
    for t in (t1, t2):
        first, total = t[:half].sum(), t.sum()
        tail = total - first
        if tail < tail_tol:
            verdicts.append("equivalent")
        elif tail >= growth_ratio * first:
            verdicts.append("singular")
        else:
            verdicts.append("inconclusive")
    if "singular" in verdicts:
        verdict = "singular"
    elif all(v == "equivalent" for v in verdicts):
        verdict = "equivalent"
    else:
        verdict = "inconclusive"
    return float(t1.sum()), float(t2.sum()), verdict


def hellinger_gaussian_1d(m1, v1, m2, v2) -> float:
    """Hellinger distance between N(m1, v1) and N(m2, v2) (closed form)."""
    if not (v1 > 0 and v2 > 0):
        raise ValueError("variances must be positive")
    bc = math.sqrt(2 * math.sqrt(v1 * v2) / (v1 + v2)) * math.exp(-(m1 - m2) ** 2 / (4 * (v1 + v2)))
    return math.sqrt(max(0.0, 1.0 - bc))


def _normalise(logw):
    m = np.max(logw)
    if not np.isfinite(m):
        raise ValueError("all importance weights vanish")
    w = np.exp(logw - m)
    return w / w.mean()


def hellinger_from_logweights(logw1, logw2, n_boot: int = 200, seed=None):
    """Self-normalised Hellinger estimate from log density ratios on shared prior samples.

    Returns
    -------
    (estimate, bootstrap standard error)
    """
    logw1 = np.asarray(logw1, float)
    logw2 = np.asarray(logw2, float)

    def est(a, b):
        w1, w2 = _normalise(a), _normalise(b)
        return math.sqrt(max(0.0, 0.5 * np.mean((np.sqrt(w1) - np.sqrt(w2)) ** 2)))

    value = est(logw1, logw2)
    rng = np.random.default_rng(seed)
    n = len(logw1)
    boots = [est(logw1[idx], logw2[idx]) for idx in rng.integers(0, n, size=(n_boot, n))]
    return value, float(np.std(boots, ddof=1))


def hellinger_empirical(logdens_ratio_1, logdens_ratio_2, prior: GaussianMeasure,
                        n_samples: int = 4000, seed=None, n_boot: int = 200):
    """Monte Carlo Hellinger distance between two reweightings of the prior.

    Parameters
    ----------
    logdens_ratio_1, logdens_ratio_2 : callable
        Unnormalised log densities with respect to the prior (minus the
        potentials), evaluated on KL coordinates.

    Returns
    -------
    (estimate, bootstrap standard error)
    """
    rng = np.random.default_rng(seed)
    xs = sample(prior, rng, size=n_samples)
    l1 = np.array([logdens_ratio_1(x) for x in xs])
    l2 = np.array([logdens_ratio_2(x) for x in xs])
    if not (np.all(np.isfinite(l1)) and np.all(np.isfinite(l2))):
        raise ValueError("potentials must be finite on prior samples")
    return hellinger_from_logweights(l1, l2, n_boot=n_boot, seed=rng)
