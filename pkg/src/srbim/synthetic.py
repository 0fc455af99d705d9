"""Synthetic point clouds and meshes with known geometry.

Used by the test suite and handy for trying the CLI without real scans::

    python -m srbim.synthetic room.ply
"""

from __future__ import annotations

import argparse

import numpy as np

from .mesh import TriangleMesh
from .pointcloud_io import LabeledScene, write_ply


def sphere_samples(n: int, radius: float = 1.0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform samples on a sphere and their analytic outward normals."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return radius * d, d.copy()


def biased_sphere_samples(n: int, dense_fraction: float = 0.9, seed: int = 0):
    """Sphere samples with ``dense_fraction`` of them on the z > 0 hemisphere."""
    rng = np.random.default_rng(seed)
    n_north = int(round(n * dense_fraction))
    out = []
    for count, sign in ((n_north, 1.0), (n - n_north, -1.0)):
        d = rng.normal(size=(count, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d[:, 2] = sign * np.abs(d[:, 2])
        out.append(d)
    p = np.concatenate(out)
    return p, p.copy()


def box_surface_samples(n: int, size, center=(0.0, 0.0, 0.0), seed: int = 0):
    """Area-uniform samples on the surface of an axis-aligned box, with face normals."""
    rng = np.random.default_rng(seed)
    size = np.asarray(size, dtype=np.float64)
    areas = np.array([size[1] * size[2], size[0] * size[2], size[0] * size[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    side = rng.choice([-1.0, 1.0], size=n)
    p = (rng.uniform(-0.5, 0.5, size=(n, 3))) * size
    rows = np.arange(n)
    p[rows, axis] = 0.5 * side * size[axis]
    normals = np.zeros((n, 3))
    normals[rows, axis] = side
    return p + np.asarray(center, dtype=np.float64), normals


def box_distance(points, size, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Unsigned distance from points to the surface of a box."""
    q = np.abs(np.asarray(points) - np.asarray(center)) - 0.5 * np.asarray(size)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return np.abs(outside + inside)


def box_solid_distance(points, size, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Distance to the solid box (zero inside)."""
    q = np.abs(np.asarray(points) - np.asarray(center)) - 0.5 * np.asarray(size)
    return np.linalg.norm(np.maximum(q, 0.0), axis=1)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    t = (1.0 + 5**0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(x, dtype=np.float64) / np.linalg.norm(x) for x in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return TriangleMesh(np.array(verts) * radius, np.array(faces))


def grid_mesh(nx: int = 10, ny: int = 10, spacing: float = 0.1) -> TriangleMesh:
    """Regular triangulated grid in the z = 0 plane."""
    xs, ys = np.meshgrid(np.arange(nx + 1) * spacing, np.arange(ny + 1) * spacing, indexing="ij")
    verts = np.stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return TriangleMesh(verts, faces)


ROOM_CLASSES = {0: "floor", 1: "wall", 2: "clutter"}
ROOM_COLORS = {0: (150, 120, 90), 1: (200, 200, 190), 2: (60, 110, 40)}
FLOOR = dict(size=(4.0, 3.0, 0.2), center=(0.0, 0.0, -0.1))
WALL = dict(size=(4.0, 0.2, 2.5), center=(0.0, 1.6, 1.25))
CLUTTER_CENTER = (0.8, -0.5, 0.6)


def room_scene(n_floor: int = 6000, n_wall: int = 6000, n_clutter: int = 400,
               seed: int = 7, jitter: int = 3) -> LabeledScene:
    """Floor slab, wall slab and a noisy clutter blob, labeled 0/1/2."""
    rng = np.random.default_rng(seed)
    floor, _ = box_surface_samples(n_floor, seed=seed, **FLOOR)
    wall, _ = box_surface_samples(n_wall, seed=seed + 1, **WALL)
    clutter = np.asarray(CLUTTER_CENTER) + rng.normal(scale=0.15, size=(n_clutter, 3))
    positions = np.concatenate([floor, wall, clutter])
    labels = np.repeat([0, 1, 2], [n_floor, n_wall, n_clutter])
    base = np.array([ROOM_COLORS[i] for i in labels], dtype=np.int64)
    colors = np.clip(base + rng.integers(-jitter, jitter + 1, size=base.shape), 0, 255)
    order = rng.permutation(len(positions))
    return LabeledScene(positions[order], colors[order], labels[order], dict(ROOM_CLASSES))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="Write the synthetic three-class room as PLY.")
    ap.add_argument("output")
    ap.add_argument("--ascii", action="store_true")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    write_ply(room_scene(seed=args.seed), args.output, binary=not args.ascii)


if __name__ == "__main__":
    main()
