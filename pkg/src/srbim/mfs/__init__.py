"""Mesh reconstruction, density filtering and smoothing for one point segment."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import MfsError, ReconstructionError
from ..ifc_model import transfer_colors
from ..mesh import TriangleMesh
from ..pointcloud_io import Segment
from .filtering import FILTER_MODES, normalize_densities, quantile_filter, removal_threshold
from .normals import DegenerateNeighborhoodWarning, estimate_normals
from .poisson import conjugate_gradient, poisson_reconstruct
from .smoothing import laplacian_smooth

__all__ = [
    "MfsConfig", "MfsResult", "run_mfs", "run_mfs_detailed",
    "estimate_normals", "poisson_reconstruct", "normalize_densities",
    "quantile_filter", "removal_threshold", "laplacian_smooth", "conjugate_gradient",
    "DegenerateNeighborhoodWarning", "FILTER_MODES",
]


@dataclass(frozen=True)
class MfsConfig:
    alpha: float = 0.05
    octree_depth: int = 8
    normals_k: int = 16
    smooth_lambda: float = 0.5
    smooth_iterations: int = 10
    filter_mode: str = "absolute"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.octree_depth < 3:
            raise ValueError(f"octree_depth must be >= 3, got {self.octree_depth}")
        if self.normals_k < 3:
            raise ValueError(f"normals_k must be >= 3, got {self.normals_k}")
        if not 0 < self.smooth_lambda <= 1:
            raise ValueError(f"smooth_lambda must be in (0, 1], got {self.smooth_lambda}")
        if self.smooth_iterations < 0:
            raise ValueError(f"smooth_iterations must be >= 0, got {self.smooth_iterations}")
        if self.filter_mode not in FILTER_MODES:
            raise ValueError(f"filter_mode must be one of {FILTER_MODES}, got {self.filter_mode!r}")


@dataclass(eq=False)
class MfsResult:
    """Every intermediate of one MFS run; ``mesh`` is the refined segment."""

    label: str
    initial: TriangleMesh   # Poisson output with raw densities
    normalized: np.ndarray  # max-normalized densities of ``initial``
    filtered: TriangleMesh  # after vertex removal, densities normalized
    mesh: TriangleMesh      # colored and smoothed
    threshold: float
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def removed_count(self) -> int:
        return self.initial.vertex_count - self.filtered.vertex_count


def run_mfs_detailed(segment: Segment, config: MfsConfig = MfsConfig()) -> MfsResult:
    """Run normals -> Poisson -> normalize -> filter -> colors -> smooth.

    Any stage failure is re-raised as :class:`MfsError` carrying the stage
    name and the segment label.
    """
    label = segment.label_name
    timings: dict[str, float] = {}
    stage = "poisson"

    def clock(name, fn, *args, **kw):
        nonlocal stage
        stage = name
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        timings[name] = time.perf_counter() - t0
        return out

    try:
        if len(segment) < 4:
            raise ReconstructionError(f"need at least 4 points, got {len(segment)}", label)
        k = min(config.normals_k, len(segment))
        normals = clock("normals", estimate_normals, segment.positions, k)
        initial = clock("poisson", poisson_reconstruct, segment.positions, normals,
                        config.octree_depth, label=label)
        normalized = clock("normalize", normalize_densities, initial.densities)
        threshold = removal_threshold(normalized, config.alpha, config.filter_mode)
        filtered = clock("filter", quantile_filter, initial.replace(densities=normalized),
                         config.alpha, config.filter_mode)
        colored = clock("colors", transfer_colors, segment, filtered)
        smoothed = clock("smooth", laplacian_smooth, colored, config.smooth_lambda,
                         config.smooth_iterations)
    except MfsError:
        raise
    except Exception as exc:
        raise MfsError(stage, label, exc) from exc
    return MfsResult(label, initial, normalized, filtered, smoothed, threshold, timings)


def run_mfs(segment: Segment, config: MfsConfig = MfsConfig()) -> TriangleMesh:
    return run_mfs_detailed(segment, config).mesh
