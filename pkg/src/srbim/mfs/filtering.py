from __future__ import annotations

import numpy as np

from ..errors import AllRemovedError, EmptyInputError, ZeroMaxDensityError
from ..mesh import TriangleMesh

FILTER_MODES = ("absolute", "quantile")


def normalize_densities(densities) -> np.ndarray:
    """Divide every density by the maximum so the largest becomes exactly 1."""
    d = np.asarray(densities, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise EmptyInputError("no densities to normalize")
    if not np.all(np.isfinite(d)) or d.min() < 0:
        raise ValueError("densities must be finite and non-negative")
    top = d.max()
    if top == 0:
        raise ZeroMaxDensityError("all densities are zero; reconstruction is degenerate")
    return d / top


def removal_threshold(normalized: np.ndarray, alpha: float, mode: str = "absolute") -> float:
    """Density cut below which vertices are dropped.

    ``absolute`` compares normalized densities to ``alpha`` directly;
    ``quantile`` uses the ``alpha``-quantile of the normalized densities.
    """
    if mode == "absolute":
        return float(alpha)
    if mode == "quantile":
        return float(np.quantile(normalized, alpha))
    raise ValueError(f"unknown filter mode {mode!r}; expected one of {FILTER_MODES}")


def quantile_filter(mesh: TriangleMesh, alpha: float = 0.05, mode: str = "absolute") -> TriangleMesh:
    """Drop vertices whose normalized density is below the cut, plus their faces.

    Survivors are reindexed compactly in their original order; densities and
    colors travel with their vertices.
    """
    if mesh.densities is None:
        raise ValueError("mesh has no densities")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    d = mesh.densities
    cut = removal_threshold(d, alpha, mode)
    keep = d >= cut
    if not keep.any():
        raise AllRemovedError(alpha, float(d.min()), float(d.max()))

    remap = np.full(mesh.vertex_count, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    faces = mesh.faces[keep[mesh.faces].all(axis=1)]
    return TriangleMesh(
        mesh.vertices[keep],
        remap[faces],
        densities=d[keep],
        vertex_colors=None if mesh.vertex_colors is None else mesh.vertex_colors[keep],
    )
