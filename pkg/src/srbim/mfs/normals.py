"""Oriented normal estimation for unorganized point samples."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from ..errors import InsufficientPointsError


class DegenerateNeighborhoodWarning(UserWarning):
    """Some neighborhoods had rank < 2; their normals fell back to +Z."""


FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])
_RANK_TOL = 1e-12


def estimate_normals(points, k: int = 16) -> np.ndarray:
    """Unit normals from k-NN PCA, consistently oriented by MST propagation.

    The smallest principal axis of each point's ``k`` nearest neighbors
    (the point itself included) gives the unoriented normal. Signs are then
    propagated along a Euclidean minimum spanning tree of the symmetric k-NN
    graph, and each connected component is finally flipped so that normals
    point away from the component centroid on balance.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(p)
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    if n < k:
        raise InsufficientPointsError(f"{n} points is fewer than k={k}")

    tree = cKDTree(p)
    dist, idx = tree.query(p, k=k)
    nbrs = p[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    degenerate = (evals[:, 2] <= _RANK_TOL * max(float(np.abs(p).max()), 1.0) ** 2) | (
        evals[:, 1] <= _RANK_TOL * scale
    )
    if degenerate.any():
        normals[degenerate] = FALLBACK_NORMAL
        warnings.warn(
            f"{int(degenerate.sum())} of {n} neighborhoods are rank-deficient; "
            "using +Z as their normal",
            DegenerateNeighborhoodWarning,
            stacklevel=2,
        )

    _orient(p, normals, dist, idx)
    return normals


def _orient(p: np.ndarray, normals: np.ndarray, dist: np.ndarray, idx: np.ndarray) -> None:
    n, k = idx.shape
    rows = np.repeat(np.arange(n), k)
    cols = idx.reshape(-1)
    w = dist.reshape(-1)
    keep = rows != cols
    rows, cols, w = rows[keep], cols[keep], w[keep]
    # csgraph treats explicit zeros as missing edges; duplicates still need linking
    w = np.where(w > 0, w, np.finfo(float).tiny)
    graph = sparse.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    graph = graph.maximum(graph.T)
    mst = csgraph.minimum_spanning_tree(graph)
    mst = mst + mst.T

    ncomp, comp = csgraph.connected_components(mst, directed=False)
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        root = int(members[0])
        order, pred = csgraph.breadth_first_order(mst, root, directed=False)
        flip = np.einsum("ij,ij->i", normals[order[1:]], normals[pred[order[1:]]]) < 0
        sign = np.ones(n, dtype=np.int8)
        # sign of a node relative to the root = product of edge flips along its path
        pred_list = pred.tolist()
        order_list = order.tolist()
        flip_list = flip.tolist()
        for node, f in zip(order_list[1:], flip_list):
            s = sign[pred_list[node]]
            sign[node] = -s if f else s
        normals[members] *= sign[members, None]

        outward = np.einsum("ij,ij->", normals[members], p[members] - p[members].mean(axis=0))
        extent = float(np.ptp(p[members], axis=0).max()) if len(members) > 1 else 0.0
        if abs(outward) <= 1e-9 * max(extent, 1e-12) * len(members):
            # no inside/outside (flat or symmetric): prefer the dominant axis positive
            total = normals[members].sum(axis=0)
            outward = total[np.argmax(np.abs(total))]
        if outward < 0:
            normals[members] *= -1
