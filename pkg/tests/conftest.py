"""Shared meshes and assembled forms (built once per test session)."""

import numpy as np
import pytest
from hypothesis import settings

from frachelm.fraclap import assemble_fractional_form
from frachelm.geometry import build_disk_mesh, mark_regions

settings.register_profile("frachelm", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("frachelm")

R, R_OMEGA, R_Q = 1.0, 0.3, 0.6


@pytest.fixture(scope="session")
def coarse():
    """h = 0.1 disk mesh with its region tags."""
    mesh = build_disk_mesh(R, 0.1, (R_OMEGA, R_Q))
    return mesh, mark_regions(mesh, R_OMEGA, R_Q)


@pytest.fixture(scope="session")
def fine():
    """h = 0.05 disk mesh (about 2000 nodes) with its region tags."""
    mesh = build_disk_mesh(R, 0.05, (R_OMEGA, R_Q))
    return mesh, mark_regions(mesh, R_OMEGA, R_Q)


@pytest.fixture(scope="session")
def coarse_forms(coarse):
    """Fractional forms of order 0.25 and 0.75 on the coarse mesh."""
    mesh, tags = coarse
    return {s: assemble_fractional_form(mesh, tags, s) for s in (0.25, 0.75)}


@pytest.fixture(scope="session")
def fine_forms(fine):
    """Fractional forms of order 0.25 and 0.75 on the fine mesh."""
    mesh, tags = fine
    return {s: assemble_fractional_form(mesh, tags, s) for s in (0.25, 0.75)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report
_ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_report(capsys):
    """Record (and print) one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, passed: bool, text: str):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {text}"
        _ACCEPTANCE_LINES.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


# ---------------------------------------------------------------- scattering posterior
SCATTER_K, SCATTER_GAMMA, SCATTER_TAU = 2.0, 0.25, 0.05


@pytest.fixture(scope="session")
def scattering(fine, fine_forms):
    """DtN / absorbing forward maps on the fine mesh with the default prior (J_KL = 8)."""
    from frachelm.inversion import ScatteringSetup

    mesh, tags = fine
    return ScatteringSetup(mesh, tags, SCATTER_K, SCATTER_GAMMA, SCATTER_TAU, fine_forms[0.75])


@pytest.fixture(scope="session")
def truth(scattering):
    """Ground-truth KL coordinates: a prior draw scaled by 0.8."""
    prior = scattering.prior
    return 0.8 * prior.sqrt_eigenvalues * np.random.default_rng(0).standard_normal(prior.J_KL)


@pytest.fixture(scope="session")
def consistency_rows(scattering, truth):
    """Consistency sweep over n = 1, 2, 4, 8 with 1% relative noise and 100 calibration draws."""
    from frachelm.inversion import bae_calibrate, consistency_experiment

    sigma = 0.01 * np.max(np.abs(scattering.G(truth)))
    m = scattering.obs.dim
    bae = bae_calibrate(scattering.prior, scattering.G, scattering.G_a, 100, seed=1,
                        C_eta=sigma ** 2 * np.eye(m))
    return consistency_experiment(scattering, bae, [1, 2, 4, 8], truth, seed=3)
