"""Exact nearest-neighbor queries over 3D point sets.

Backed by scipy's compiled k-d tree, with explicit handling of distance ties:
equal-distance candidates always resolve to the lowest point index, so
downstream subgradient selection is deterministic.  Brute-force references are
provided for testing.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class PointIndex:
    """Immutable spatial index over a non-empty (n, 3) point set."""

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (n, 3) array")
        self.points = pts
        self.points.setflags(write=False)
        self._tree = cKDTree(pts)

    def __len__(self):
        return self.points.shape[0]

    def nearest(self, queries):
        """Exact nearest neighbor for one query or a batch.

        Returns (indices, distances); scalars for a single (3,) query.
        Ties break to the lowest point index.
        """
        q = np.asarray(queries, dtype=float)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        k = min(2, len(self))
        dist, idx = self._tree.query(q, k=k)
        if k == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        best_d = dist[:, 0].copy()
        best_i = idx[:, 0].copy()
        if k == 2:
            # A tie with the runner-up means there may be several equidistant
            # points; resolve those queries exactly.
            for row in np.nonzero(dist[:, 1] == best_d)[0]:
                cand = self._tree.query_ball_point(q[row], r=best_d[row])
                d = np.linalg.norm(self.points[cand] - q[row], axis=1)
                exact = [c for c, dc in zip(cand, d) if dc == best_d[row]]
                if exact:
                    best_i[row] = min(exact)
        if single:
            return int(best_i[0]), float(best_d[0])
        return best_i, best_d

    def k_nearest(self, query, k):
        """The k exact nearest neighbors of a single query, ascending by
        distance with ties broken by lowest index."""
        n = len(self)
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}], got {k}")
        q = np.asarray(query, dtype=float)
        kk = min(k + 1, n)
        dist, idx = self._tree.query(q, k=kk)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        if kk > k and dist[k] == dist[k - 1]:
            # Boundary tie: gather every point within the kth distance.
            cand = np.asarray(self._tree.query_ball_point(q, r=dist[k - 1]),
                              dtype=int)
            d = np.linalg.norm(self.points[cand] - q, axis=1)
        else:
            cand, d = idx[:k], dist[:k]
        order = np.lexsort((cand, d))[:k]
        return cand[order], d[order]


def brute_force_nearest(points, query):
    """Reference nearest neighbor: full scan, lowest index on ties."""
    d = np.linalg.norm(np.asarray(points, float) - np.asarray(query, float),
                       axis=1)
    i = int(np.argmin(d))  # argmin returns the first (lowest) index
    return i, float(d[i])


def brute_force_k_nearest(points, query, k):
    """Reference k nearest: full sort by (distance, index)."""
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(pts - np.asarray(query, dtype=float), axis=1)
    order = np.lexsort((np.arange(len(pts)), d))[:k]
    return order, d[order]
