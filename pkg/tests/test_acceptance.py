"""Acceptance criteria: each test prints one PASS/FAIL line with the measured quantity.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""

import math

import numpy as np

from frachelm.forward_disp import (
    DispProblem,
    calibrate_contraction_constant,
    check_contraction_condition,
    solve_disp_iterative,
)
from frachelm.forward_loss import LossProblem, h1_norm, l2_norm, lipschitz_ratio
from frachelm.fraclap import gauss_green_residual, pv_fractional_laplacian
from frachelm.geometry import ScattererConfig
from frachelm.inversion import (
    PosteriorSpec,
    bae_calibrate,
    hellinger_lipschitz_probe,
    map_estimate,
    pcn_sample,
    potential_phi,
)
from frachelm.measures import (
    GaussianMeasure,
    JointNoiseModel,
    condition_eps_given_x,
    hellinger_empirical,
    hellinger_gaussian_1d,
    kakutani_check,
    sample,
)


def const_q(tags, value=0.5):
    return np.full(len(tags.suppq_triangles), value)


# ---------------------------------------------------------------- 1


def test_plane_wave_eigenrelation(acceptance_report):
    d = np.array([math.cos(0.3), math.sin(0.3)])
    worst = 0.0
    for alpha in (0.3, 0.5, 0.7):
        for k in (1.0, 2.0):
            u = lambda p, k=k: np.exp(1j * k * (np.asarray(p) @ d))  # noqa: E731
            value = pv_fractional_laplacian(u, [0.0, 0.0], alpha)
            worst = max(worst, abs(value - k ** (2 * alpha)) / k ** (2 * alpha))
    assert acceptance_report(1, worst <= 1e-2, f"plane-wave eigenrelation, max rel error {worst:.2e} (<= 1e-2)")


# ---------------------------------------------------------------- 2


def test_gaussian_conditioning_matches_schur_complement(acceptance_report):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m, J = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        std = np.sort(rng.uniform(0.2, 2.0, J))[::-1]
        A = rng.standard_normal((m, m + J))
        B = 0.5 * rng.standard_normal((m, J))
        C_ex = B * std ** 2
        C_e = A @ A.T / (m + J) + C_ex @ B.T
        mu = rng.standard_normal(m + J)
        x = rng.standard_normal(J)
        S = np.block([[C_e, C_ex], [C_ex.T, np.diag(std ** 2)]])
        ref_mean = mu[:m] + S[:m, m:] @ np.linalg.solve(S[m:, m:], x - mu[m:])
        ref_cov = S[:m, :m] - S[:m, m:] @ np.linalg.solve(S[m:, m:], S[m:, :m])
        model = JointNoiseModel(mu[:m], C_e, C_ex, np.zeros((m, m)))
        mean, cov = condition_eps_given_x(model, GaussianMeasure(mu[m:], std), x)
        worst = max(worst, np.max(np.abs(mean - ref_mean)), np.max(np.abs(cov - ref_cov)))
    assert acceptance_report(2, worst <= 1e-10, f"Schur-complement conditioning, 50 instances, max error {worst:.1e}")


# ---------------------------------------------------------------- 3


def test_small_wavenumber_slope(fine, fine_forms, acceptance_report):
    """Expected to fail: the scattered field is driven by k^2 q u_inc, so the ratio scales like k^2
    at small k (measured slope about 1.8). The analytic estimate is only the upper bound C k, which holds."""
    mesh, tags = fine
    ks = np.array([0.02, 0.04, 0.08, 0.16])
    ratios = []
    for k in ks:
        prob = LossProblem(mesh, tags, k, 0.25, 1e-6, fine_forms[0.75])
        u = prob.solve(const_q(tags))
        ratios.append(h1_norm(u, mesh, prob.K, prob.M) / l2_norm(prob.incident, mesh, prob.M))
    slope = np.polyfit(np.log(ks), np.log(ratios), 1)[0]
    ok = abs(slope - 1.0) <= 0.1
    assert acceptance_report(3, ok, f"small-k log-log slope {slope:.3f} (target 1.0 +- 0.1)")


# ---------------------------------------------------------------- 4


def test_lipschitz_ratio_stable(coarse, coarse_forms, acceptance_report):
    mesh, tags = coarse
    prob = LossProblem(mesh, tags, 2.0, 0.25, 0.1, coarse_forms[0.75])
    cent = mesh.centroids()[tags.suppq_triangles]
    bump = np.exp(-np.sum(cent ** 2, axis=1) / 0.1)
    q = const_q(tags)
    ratios = [lipschitz_ratio(prob, q, q + d * bump) for d in (1e-1, 1e-2, 1e-3)]
    spread = max(ratios) / min(ratios)
    text = f"Lipschitz ratios {', '.join(f'{r:.4f}' for r in ratios)}, spread {spread:.3f} (<= 2)"
    assert acceptance_report(4, spread <= 2.0, text)


# ---------------------------------------------------------------- 5


def test_zero_source_gives_zero_solution(fine, fine_forms, acceptance_report):
    mesh, tags = fine
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(5):
        kw = {"theta": rng.uniform(0, 2 * np.pi)}
        if i % 2:
            kw.update(boundary="absorbing", absorbing_radius=rng.uniform(1.0, 3.0))
        prob = LossProblem(mesh, tags, rng.uniform(0.5, 4.0), 0.25, rng.uniform(0.0, 0.5),
                           fine_forms[0.75], **kw)
        u = prob.solve(rng.uniform(-0.5, 2.0, len(tags.suppq_triangles)), rhs=np.zeros(mesh.n_nodes))
        worst = max(worst, float(np.linalg.norm(u.values)))
    assert acceptance_report(5, worst <= 1e-12, f"zero source, 5 configurations, max norm {worst:.1e}")


# ---------------------------------------------------------------- 6


def test_dispersion_contraction(coarse, coarse_forms, acceptance_report):
    mesh, tags = coarse
    sc = ScattererConfig(q_values=const_q(tags), gamma_tilde=0.25, tau_tilde=0.0, k=0.2, R=1.0)
    prob = DispProblem(mesh, tags, sc, coarse_forms[0.25])
    c_cal, _ = calibrate_contraction_constant(prob)
    _, margin = check_contraction_condition(0.2, sc.q_values, c_cal)
    tol = 1e-10
    a = solve_disp_iterative(prob, tol=tol, C_cal=c_cal)
    rng = np.random.default_rng(7)
    n, m = mesh.n_nodes, len(prob.omega_nodes)
    init = (1e-2 * (rng.standard_normal(n) + 1j * rng.standard_normal(n)), 1e-2 * rng.standard_normal(m))
    b = solve_disp_iterative(prob, tol=tol, C_cal=c_cal, init=init)
    norms = np.array([h["update_norm_g"] + h["update_norm_u"] for h in a.history])
    it = np.arange(2, 11)
    y = np.log(norms[1:10])
    fit = np.polyval(np.polyfit(it, y, 1), it)
    r2 = 1 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2)
    du = b.u - a.u
    diff = h1_norm(a.g.values - b.g.values, mesh, prob.K, prob.M) + math.sqrt(abs(np.conj(du) @ prob.ED @ du))
    ok = margin >= 0.5 and r2 >= 0.95 and diff <= 10 * tol
    text = f"dispersion contraction, margin {margin:.3f}, R^2 {r2:.5f}, initialisation gap {diff:.1e}"
    assert acceptance_report(6, ok, text)


# ---------------------------------------------------------------- 7


def test_kakutani_families(acceptance_report):
    k = np.arange(1, 401, dtype=float)
    verdicts = [
        kakutani_check(k ** -2.0, k ** -2.0, 2.0 ** -k)[2],
        kakutani_check(k ** -2.0, k ** -2.0, 1 / k)[2],
        kakutani_check(k ** -2.0, 2 * k ** -2.0, np.zeros_like(k))[2],
    ]
    ok = verdicts == ["equivalent", "singular", "singular"]
    assert acceptance_report(7, ok, f"Kakutani verdicts {verdicts}")


# ---------------------------------------------------------------- 8


def test_conjugate_posterior_oracle(acceptance_report):
    g, noise_var, y = 2.0, 0.25, 1.3
    prior = GaussianMeasure(np.zeros(1), np.ones(1))
    spec = PosteriorSpec(prior, lambda x: g * np.asarray(x), [y], "exact", noise_cov=[[noise_var]])
    post_var = 1 / (1 + g * g / noise_var)
    post_mean = post_var * g * y / noise_var

    chain, _ = pcn_sample(spec, 40000, 0.3, seed=2)
    x = chain[1000:, 0]
    batches = np.array_split(x, 40)
    bm = np.array([b.mean() for b in batches])
    bv = np.array([np.mean((b - post_mean) ** 2) for b in batches])
    se_m, se_v = bm.std(ddof=1) / math.sqrt(40), bv.std(ddof=1) / math.sqrt(40)
    z_mean = abs(x.mean() - post_mean) / se_m
    z_var = abs(np.mean((x - post_mean) ** 2) - post_var) / se_v

    y2 = 0.9
    est, se = hellinger_empirical(lambda v: -0.5 * (y - g * v[0]) ** 2 / noise_var,
                                  lambda v: -0.5 * (y2 - g * v[0]) ** 2 / noise_var, prior,
                                  n_samples=20000, seed=4)
    exact = hellinger_gaussian_1d(post_mean, post_var, post_var * g * y2 / noise_var, post_var)
    z_hell = abs(est - exact) / se

    res = map_estimate(spec, [0.0], method="bfgs", tol=1e-8)
    map_err = abs(res.x[0] - post_mean)
    ok = z_mean <= 3 and z_var <= 3 and z_hell <= 3 and map_err <= 1e-6
    text = (f"conjugate oracle, |z| mean {z_mean:.2f}, variance {z_var:.2f}, Hellinger {z_hell:.2f} "
            f"(<= 3 SE), MAP error {map_err:.1e}")
    assert acceptance_report(8, ok, text)


# ---------------------------------------------------------------- 9


def test_hellinger_lipschitz_in_data(scattering, truth, acceptance_report):
    """Noise level 0.02 (absolute): at 0.005 the likelihood is so sharp that every perturbation
    size saturates the distance near 1 and no difference quotient is observable."""
    sigma = 0.02
    m = scattering.obs.dim
    bae = bae_calibrate(scattering.prior, scattering.G, scattering.G_a, 60, seed=1, C_eta=sigma ** 2 * np.eye(m))
    y = scattering.G(truth) + sigma * np.random.default_rng(5).standard_normal(m)
    spec = PosteriorSpec(scattering.prior, scattering.G_a, y, "bae", bae=bae)
    out = hellinger_lipschitz_probe(spec, y, [0.1, 0.05, 0.025], 1000, seed=2)
    ratios = [o["ratio"] for o in out]
    spread = max(ratios) / min(ratios)
    text = f"Hellinger difference quotients {', '.join(f'{r:.3f}' for r in ratios)}, spread {spread:.3f} (<= 3)"
    assert acceptance_report(9, spread <= 3.0, text)


# ---------------------------------------------------------------- 10


def test_small_error_consistency(consistency_rows, acceptance_report):
    first, last = consistency_rows[0], consistency_rows[-1]
    bounded = all(r.cm_norm ** 2 <= r.bound for r in consistency_rows)
    ok = last.gap_Gn <= 0.5 * first.gap_Gn and bounded
    text = (f"consistency gap n=1 {first.gap_Gn:.4f}, n=8 {last.gap_Gn:.4f} (<= half), "
            f"a-priori bound {'holds' if bounded else 'violated'} on all rows")
    assert acceptance_report(10, ok, text)


# ---------------------------------------------------------------- 11


def test_identical_maps_reduce_to_exact_potential(scattering, truth, acceptance_report):
    m = scattering.obs.dim
    C_eta = 1e-4 * np.eye(m)
    bae = bae_calibrate(scattering.prior, scattering.G, scattering.G, 50, seed=4, C_eta=C_eta)
    stats_err = max(np.max(np.abs(bae.noise.eps_mean)), np.max(np.abs(bae.noise.C_eps_x)))
    y = scattering.G(truth) + 0.01
    with_bae = PosteriorSpec(scattering.prior, scattering.G, y, "bae", bae=bae)
    exact = PosteriorSpec(scattering.prior, scattering.G, y, "exact", noise_cov=C_eta)
    pot_err = max(abs(potential_phi(x, y, with_bae) - potential_phi(x, y, exact))
                  / max(1.0, potential_phi(x, y, exact)) for x in sample(scattering.prior, 9, size=3))
    ok = stats_err <= 1e-12 and pot_err <= 1e-12
    text = f"identical maps, calibrated statistics {stats_err:.1e}, potential gap {pot_err:.1e}"
    assert acceptance_report(11, ok, text)


# ---------------------------------------------------------------- 12


def test_fractional_form_correctness(fine, fine_forms, acceptance_report):
    mesh, tags = fine

    def bump(p):
        r2 = np.sum(np.asarray(p) ** 2, axis=-1) / 0.18 ** 2
        out = np.zeros(r2.shape)
        out[r2 < 1] = np.exp(1 - 1 / (1 - r2[r2 < 1]))
        return out

    worst_inv, worst_gg = 0.0, 0.0
    for sigma, form in fine_forms.items():
        A = form.matrix
        scale = np.max(np.abs(A))
        asym = np.max(np.abs(A - A.T)) / scale
        neg = max(0.0, -np.min(np.linalg.eigvalsh(A))) / scale
        kernel = np.max(np.abs(A @ np.ones(form.size))) / scale
        worst_inv = max(worst_inv, asym, neg, kernel)
        res = gauss_green_residual(bump, bump(mesh.nodes), form, mesh, tags)
        worst_gg = max(worst_gg, res.residual / abs(res.form_value))
    ok = worst_inv <= 1e-10 and worst_gg <= 5e-2
    text = f"fractional form invariants {worst_inv:.1e} (<= 1e-10), Gauss-Green relative residual {worst_gg:.3f}"
    assert acceptance_report(12, ok, text)
