from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import sparse


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh with optional per-vertex density and color.

    ``densities`` holds raw or max-normalized values depending on the stage
    that produced the mesh; ``vertex_colors`` are 8-bit RGB.
    """

    vertices: np.ndarray
    faces: np.ndarray
    densities: np.ndarray | None = None
    vertex_colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(v)
        if f.size:
            if f.min() < 0 or f.max() >= n:
                raise ValueError(f"face index out of range [0, {n})")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("degenerate face: repeated vertex index")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        if self.densities is not None:
            d = np.array(self.densities, dtype=np.float64).reshape(-1)
            if len(d) != n:
                raise ValueError(f"{len(d)} densities for {n} vertices")
            object.__setattr__(self, "densities", _frozen(d))
        if self.vertex_colors is not None:
            c = np.asarray(self.vertex_colors)
            if c.dtype != np.uint8:
                if np.any((c < 0) | (c > 255)):
                    raise ValueError("vertex colors must be in [0, 255]")
                c = c.astype(np.uint8)
            c = np.array(c, dtype=np.uint8).reshape(-1, 3)
            if len(c) != n:
                raise ValueError(f"{len(c)} vertex colors for {n} vertices")
            object.__setattr__(self, "vertex_colors", _frozen(c))

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def replace(self, **changes) -> TriangleMesh:
        return dataclasses.replace(self, **changes)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (E, 2) array with ``e[:, 0] < e[:, 1]``."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0) if len(e) else np.empty((0, 2), dtype=np.int64)

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 vertex adjacency matrix over mesh edges."""
        e = self.edges()
        n = self.vertex_count
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def euler_characteristic(self) -> int:
        """V - E + F counted over referenced vertices only."""
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges()) + self.face_count)

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def surface_area(self) -> float:
        return float(self.face_areas().sum())

    def signed_volume(self) -> float:
        """Positive for closed meshes with outward-facing winding."""
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)
