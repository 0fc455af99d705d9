import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mesh
from srbim.mesh import TriangleMesh
from srbim.mfs.smoothing import laplacian_smooth
from srbim.synthetic import grid_mesh, icosphere


def test_full_step_to_neighbor_mean():
    m = TriangleMesh([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], [[0, 1, 2]])
    out = laplacian_smooth(m, 1.0, 1)
    assert out.vertices[0].tolist() == [1.0, 0.0, 0.0]


def test_jacobi_update_uses_old_positions():
    m = TriangleMesh([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]], [[0, 1, 2]])
    out = laplacian_smooth(m, 0.5, 1)
    v = m.vertices
    want = [v[i] + 0.5 * ((v.sum(0) - v[i]) / 2 - v[i]) for i in range(3)]
    assert np.allclose(out.vertices, want, atol=0, rtol=0)


@pytest.mark.parametrize("lam,iters", [(0.0, 10), (0.7, 0)])
def test_identity_cases(rng, lam, iters):
    m = random_mesh(rng)
    out = laplacian_smooth(m, lam, iters)
    assert np.array_equal(out.vertices, m.vertices)


def test_isolated_vertices_and_attributes_kept(rng):
    m = random_mesh(rng, 10, 5)
    verts = np.vstack([m.vertices, [[9.0, 9.0, 9.0]]])
    m = TriangleMesh(verts, m.faces, densities=np.append(m.densities, 0.3),
                     vertex_colors=np.vstack([m.vertex_colors, [[1, 2, 3]]]))
    out = laplacian_smooth(m, 0.5, 5)
    assert out.vertices[-1].tolist() == [9.0, 9.0, 9.0]
    assert np.array_equal(out.faces, m.faces)
    assert np.array_equal(out.densities, m.densities)
    assert np.array_equal(out.vertex_colors, m.vertex_colors)


def test_planar_grid_stays_planar():
    g = grid_mesh(20, 15, 0.1)
    tilt = np.array([[1, 0, 0], [0, 0.8, -0.6], [0, 0.6, 0.8]])
    m = g.replace(vertices=g.vertices @ tilt.T + [0.3, -2.0, 5.0])
    normal = tilt @ [0, 0, 1]
    offset = m.vertices[0] @ normal
    out = laplacian_smooth(m, 0.5, 10)
    assert np.abs(out.vertices @ normal - offset).max() < 1e-9
    assert out.surface_area() <= m.surface_area() + 1e-12


def test_noisy_sphere_radial_variance_decreases():
    base = icosphere(3)
    rng = np.random.default_rng(5)
    r = 1 + rng.uniform(-0.05, 0.05, base.vertex_count)
    m = base.replace(vertices=base.vertices * r[:, None])
    variances = [np.var(np.linalg.norm(m.vertices, axis=1))]
    for _ in range(10):
        m = laplacian_smooth(m, 0.5, 1)
        variances.append(np.var(np.linalg.norm(m.vertices, axis=1)))
    assert all(b < a for a, b in zip(variances, variances[1:]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.integers(0, 15))
def test_bounding_box_never_grows(seed, lam, iters):
    m = random_mesh(np.random.default_rng(seed), 40, 60)
    lo, hi = m.bounds()
    out = laplacian_smooth(m, lam, iters)
    lo2, hi2 = out.bounds()
    assert np.all(lo2 >= lo - 1e-12) and np.all(hi2 <= hi + 1e-12)


def test_rejects_bad_arguments(rng):
    m = random_mesh(rng)
    with pytest.raises(ValueError):
        laplacian_smooth(m, 1.5, 1)
    with pytest.raises(ValueError):
        laplacian_smooth(m, 0.5, -1)
