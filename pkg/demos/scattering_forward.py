"""Scattered field of a constant contrast: DtN boundary versus absorbing reduced models.

Run with ``python3 demos/scattering_forward.py``. Prints the H1 norm of the
scattered field for each boundary model and the relative gap of the absorbing
models, which shrinks as the absorbing radius grows.
"""

import numpy as np

from frachelm.forward_loss import LossProblem, h1_norm
from frachelm.fraclap import assemble_fractional_form
from frachelm.geometry import build_disk_mesh, mark_regions


def main():
    mesh = build_disk_mesh(1.0, 0.1, (0.3, 0.6))
    tags = mark_regions(mesh, 0.3, 0.6)
    gamma, tau, k = 0.25, 0.1, 2.0
    frac = assemble_fractional_form(mesh, tags, gamma + 0.5)
    q = np.full(len(tags.suppq_triangles), 0.5)
    exact = LossProblem(mesh, tags, k, gamma, tau, frac).solve(q)
    ref = h1_norm(exact, mesh)
    print(f"nodes {mesh.n_nodes}, DtN model |u_s|_H1 = {ref:.6f}")
    for rho in (1.0, 2.0, 4.0, 8.0):
        u = LossProblem(mesh, tags, k, gamma, tau, frac, boundary="absorbing", absorbing_radius=rho).solve(q)
        gap = h1_norm(u.values - exact.values, mesh) / ref
        print(f"absorbing radius {rho:4.1f}: relative H1 gap {gap:.4f}")


if __name__ == "__main__":
    main()
