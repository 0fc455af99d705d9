from __future__ import annotations

import numpy as np

from ..mesh import TriangleMesh


def laplacian_smooth(mesh: TriangleMesh, lam: float = 0.5, iterations: int = 10) -> TriangleMesh:
    """Uniform-weight Laplacian smoothing with simultaneous updates.

    Each pass moves every vertex that has at least one edge neighbor by
    ``lam`` times the offset to its neighbors' mean. Isolated vertices stay put;
    faces, densities and colors are carried over untouched.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    v = mesh.vertices.copy()
    if iterations and lam and mesh.face_count:
        adj = mesh.adjacency()
        deg = np.asarray(adj.sum(axis=1)).reshape(-1)
        active = deg > 0
        inv = np.zeros_like(deg)
        inv[active] = 1.0 / deg[active]
        for _ in range(iterations):
            mean = (adj @ v) * inv[:, None]
            v[active] += lam * (mean[active] - v[active])
    return mesh.replace(vertices=v)
