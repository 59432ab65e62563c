"""Path integration of exact edge increments over grid graphs.

Increments ``d_e ~ f(x_dst) - f(x_src)`` are integrated once along a BFS
spanning tree (cheap, used as a drift diagnostic) and then by least squares
over all edges, which spreads loop-closure residuals over the cycles
instead of accumulating them along tree paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .errors import StructureError


@dataclass
class EdgeGraph:
    """Nodes ``0..n-1`` and directed edges ``src -> dst``."""

    n: int
    src: np.ndarray
    dst: np.ndarray

    def incidence(self):
        m = self.src.size
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.src, self.dst])
        vals = np.concatenate([-np.ones(m), np.ones(m)])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(m, self.n))


@dataclass
class Integration:
    values: np.ndarray  # (n,) or (n, k); NaN off the base component
    edge_residual: float  # max |f(dst) - f(src) - d| after least squares
    tree_drift: float  # max |tree - least squares| over the component
    component: np.ndarray  # bool mask of integrated nodes


def grid_edges(mask: np.ndarray):
    """Horizontal and vertical edges between adjacent ``True`` nodes.

    Returns ``(index, (hs, hd), (vs, vd))`` where ``index`` maps ``(j, i)``
    to a node number (or -1) and the pairs are flat node-number arrays.
    """
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    hm = mask[:, :-1] & mask[:, 1:]
    vm = mask[:-1, :] & mask[1:, :]
    hs = index[:, :-1][hm]
    hd = index[:, 1:][hm]
    vs = index[:-1, :][vm]
    vd = index[1:, :][vm]
    return index, (hs, hd), (vs, vd)


def check_simply_connected(mask: np.ndarray) -> None:
    """Raise unless the complement of ``mask`` has no component away from the border."""
    labels, n = ndimage.label(~mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    holes = set(range(1, n + 1)) - set(int(b) for b in border)
    if holes:
        raise StructureError(f"region is not simply connected ({len(holes)} enclosed holes)", count=len(holes))


def integrate_edges(graph: EdgeGraph, incr: np.ndarray, base: int) -> Integration:
    """Integrate ``incr`` (shape ``(m,)`` or ``(m, k)``) with ``f(base) = 0``."""
    incr = np.asarray(incr, dtype=float)
    vector = incr.ndim == 2
    d = incr if vector else incr[:, None]
    n = graph.n
    adj = sparse.csr_matrix((np.ones(graph.src.size), (graph.src, graph.dst)), shape=(n, n))
    adj = adj + adj.T
    _, labels = csgraph.connected_components(adj, directed=False)
    comp = labels == labels[base]
    keep_e = comp[graph.src]
    old = np.nonzero(comp)[0]
    new_of = -np.ones(n, dtype=np.int64)
    new_of[old] = np.arange(old.size)
    s = new_of[graph.src[keep_e]]
    t = new_of[graph.dst[keep_e]]
    de = d[keep_e]
    b0 = int(new_of[base])
    nc = old.size

    tree = _tree_integrate(nc, s, t, de, b0)

    B = EdgeGraph(nc, s, t).incidence().tocsc()
    free = np.ones(nc, dtype=bool)
    free[b0] = False
    Bf = B[:, free]
    L = (Bf.T @ Bf).tocsc()
    rhs = Bf.T @ de
    sol = np.zeros((nc, d.shape[1]))
    if nc > 1:
        lu = splu(L)
        sol[free] = lu.solve(np.ascontiguousarray(rhs))
    res = float(np.max(np.abs(B @ sol - de))) if de.size else 0.0
    drift = float(np.max(np.abs(tree - sol))) if nc else 0.0

    out = np.full((n, d.shape[1]), np.nan)
    out[old] = sol
    return Integration(out if vector else out[:, 0], res, drift, comp)


def _tree_integrate(n, s, t, d, base):
    adj = sparse.csr_matrix((np.ones(s.size), (s, t)), shape=(n, n))
    _, pred = csgraph.breadth_first_order(adj + adj.T, base, directed=False, return_predecessors=True)
    pred = pred.astype(np.int64)
    # signed edge lookup for (pred, node) pairs
    keys = np.concatenate([s * n + t, t * n + s])
    eid = np.concatenate([np.arange(s.size), np.arange(s.size)])
    sign = np.concatenate([np.ones(s.size), -np.ones(s.size)])
    order = np.argsort(keys)
    keys, eid, sign = keys[order], eid[order], sign[order]
    nodes = np.nonzero(pred >= 0)[0]
    k = np.searchsorted(keys, pred[nodes] * n + nodes)
    acc = np.zeros((n, d.shape[1]))
    acc[nodes] = sign[k, None] * d[eid[k]]
    ptr = np.where(pred >= 0, pred, base)
    # pointer jumping: log(depth) vectorised passes instead of a walk per node
    while np.any(ptr != base):
        acc = acc + acc[ptr]
        ptr = ptr[ptr]
    return acc
