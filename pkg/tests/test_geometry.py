"""Disk meshes, region tagging and mesh export."""

import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frachelm.geometry import ScattererConfig, build_disk_mesh, export_mesh, mark_regions, triangle_areas


def _edge_counts(mesh):
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    return np.unique(e, axis=0, return_counts=True)


def test_coarse_mesh_sanity():
    mesh = build_disk_mesh(1.0, 0.5)
    assert mesh.n_triangles >= 12
    assert np.all(triangle_areas(mesh.nodes, mesh.triangles) > 0)


@given(R=st.floats(0.5, 3.0), frac=st.floats(0.06, 0.5))
def test_mesh_contract(R, frac):
    h = frac * R
    mesh = build_disk_mesh(R, h)
    assert np.all(triangle_areas(mesh.nodes, mesh.triangles) > 0)
    r = np.linalg.norm(mesh.nodes[mesh.boundary_nodes], axis=1)
    assert np.all(np.abs(r - R) <= 1e-9 * R)
    assert np.all(np.diff(mesh.boundary_angles) > 0)
    assert mesh.max_edge() <= 1.5 * h
    area = triangle_areas(mesh.nodes, mesh.triangles).sum()
    assert abs(area - math.pi * R ** 2) <= 2 * h * 2 * math.pi * R


def test_mesh_is_conforming(fine):
    mesh, _ = fine
    edges, counts = _edge_counts(mesh)
    assert set(np.unique(counts)) <= {1, 2}
    boundary = edges[counts == 1]
    assert len(boundary) == len(mesh.boundary_nodes)
    assert set(boundary.ravel()) == set(mesh.boundary_nodes)
    # Euler characteristic of a disk
    assert mesh.n_nodes - len(edges) + mesh.n_triangles == 1


@pytest.mark.parametrize("h", [0.25, 0.2, 0.1, 0.05])
@pytest.mark.parametrize("fit", [(), (0.3, 0.6)])
def test_refinement_scaling(h, fit):
    a = build_disk_mesh(1.0, h, fit)
    b = build_disk_mesh(1.0, h / 2, fit)
    assert b.n_triangles >= 4 * a.n_triangles
    # interior edges halve exactly; chords of curved rings shrink slightly less
    assert b.max_edge() <= 0.5 * a.max_edge() * 1.05
    # the finer mesh refines the coarser one
    assert np.allclose(b.nodes[:a.n_nodes], a.nodes, atol=1e-12)


def test_mesh_precondition():
    with pytest.raises(ValueError):
        build_disk_mesh(1.0, 0.0)
    with pytest.raises(ValueError):
        build_disk_mesh(-1.0, 0.1)
    with pytest.raises(ValueError):
        build_disk_mesh(1.0, 0.8)


def test_regions_nest(fine):
    mesh, tags = fine
    assert set(tags.omega_triangles) < set(tags.suppq_triangles) < set(range(mesh.n_triangles))
    assert set(np.unique(mesh.triangles[tags.omega_triangles])) == set(tags.omega_nodes)


@pytest.mark.parametrize("r", [0.3, 0.6])
def test_region_area(fine, r):
    mesh, tags = fine
    idx = tags.omega_triangles if r == 0.3 else tags.suppq_triangles
    area = np.abs(mesh.areas()[idx]).sum()
    assert abs(area - math.pi * r * r) <= 2 * mesh.h * 2 * math.pi * r


def test_fitted_circles_are_exact(fine):
    mesh, tags = fine
    # Omega is a union of whole rings, its outer boundary nodes lie on r_omega
    edges = tags.omega_boundary_edges(mesh)
    r = np.linalg.norm(mesh.nodes[np.unique(edges)], axis=1)
    assert np.allclose(r, 0.3, atol=1e-12)


def test_empty_omega_warns(caplog):
    mesh = build_disk_mesh(1.0, 0.2)
    with caplog.at_level(logging.WARNING):
        tags = mark_regions(mesh, 1e-3, 0.6)
    assert tags.omega_empty and tags.omega_triangles.size == 0
    assert "no triangles" in caplog.text


@pytest.mark.parametrize("radii", [(0.6, 0.3), (0.3, 1.0), (0.0, 0.5)])
def test_region_radii_order(coarse, radii):
    with pytest.raises(ValueError):
        mark_regions(coarse[0], *radii)


def test_export_format(coarse, tmp_path):
    mesh, tags = coarse
    path = tmp_path / "mesh.txt"
    export_mesh(mesh, tags, path)
    lines = path.read_text().splitlines()
    nv, nt = map(int, lines[0].split())
    assert (nv, nt) == (mesh.n_nodes, mesh.n_triangles)
    xy = np.array([list(map(float, l.split())) for l in lines[1:1 + nv]])
    assert np.array_equal(xy, mesh.nodes)
    tri = np.array([list(map(int, l.split())) for l in lines[1 + nv:]])
    assert np.array_equal(tri[:, :3], mesh.triangles)
    assert np.array_equal(tri[:, 3], tags.region_codes(nt))
    assert set(tri[:, 3]) == {0, 1, 2}


def test_scatterer_config_validation():
    ScattererConfig(np.zeros(3), 0.25, 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        ScattererConfig(np.array([-1.0]), 0.25, 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        ScattererConfig(np.zeros(3), 0.6, 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        ScattererConfig(np.zeros(3), 0.25, -0.1, 1.0, 1.0)
    assert ScattererConfig(np.zeros(3), 0.25, 0.1, 2.0, 1.0).omega_freq == 2.0
