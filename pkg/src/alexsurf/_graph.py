"""Weighted graphs with temporary attachment points, solved by Dijkstra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DisconnectedPoint


@dataclass
class Attachment:
    """An off-graph point joined to graph nodes by edges of given weights."""

    nodes: np.ndarray
    weights: np.ndarray
    node: int | None = None  # set when the point coincides with a graph node


@dataclass
class MetricGraph:
    n_nodes: int
    lo: np.ndarray
    hi: np.ndarray
    w: np.ndarray
    _csr: object = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n_nodes: int, lo, hi, w) -> "MetricGraph":
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        w = np.asarray(w, dtype=float)
        ok = np.isfinite(w) & (lo != hi)
        # explicit zeros would vanish from a sparse matrix
        return cls(n_nodes, lo[ok], hi[ok], np.maximum(w[ok], 1e-300))

    def _augmented(self, attachments):
        rows, cols, wts, ids = [self.lo], [self.hi], [self.w], []
        n = self.n_nodes
        for a in attachments:
            if a.node is not None:
                ids.append(a.node)
                continue
            ok = np.isfinite(a.weights)
            rows.append(np.full(int(ok.sum()), n))
            cols.append(np.asarray(a.nodes)[ok])
            wts.append(np.maximum(np.asarray(a.weights)[ok], 1e-300))
            ids.append(n)
            n += 1
        g = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
        return g, ids

    def field(self, source: Attachment) -> np.ndarray:
        """Distances from an attached source to every graph node."""
        g, ids = self._augmented([source])
        d = dijkstra(g, directed=False, indices=ids[0])
        return d[: self.n_nodes]

    def path(self, source: Attachment, target: Attachment):
        """(length, node path) between two attachments; temp ids are -1 and -2."""
        g, ids = self._augmented([source, target])
        d, pred = dijkstra(g, directed=False, indices=ids[0], return_predecessors=True)
        t = ids[1]
        if not np.isfinite(d[t]):
            raise DisconnectedPoint("points are not connected in the graph")
        path = [t]
        while path[-1] != ids[0]:
            p = int(pred[path[-1]])
            if p < 0:
                raise DisconnectedPoint("points are not connected in the graph")
            path.append(p)
        path = path[::-1]
        out = []
        for p in path:
            if p >= self.n_nodes:
                out.append(-1 if p == ids[0] else -2)
            else:
                out.append(p)
        return float(d[t]), out
