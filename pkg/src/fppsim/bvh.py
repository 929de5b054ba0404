"""Triangle-mesh bounding volume hierarchy with vectorized (packet) traversal."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgument

LEAF_SIZE = 4
DEGENERATE_AREA = 1e-14
_DET_EPS = 1e-14


def as_triangles(triangles):
    tri = np.asarray(triangles, dtype=np.float64)
    if tri.ndim == 2 and tri.shape[1] == 9:
        tri = tri.reshape(-1, 3, 3)
    if tri.ndim != 3 or tri.shape[1:] != (3, 3):
        raise InvalidArgument(f"triangles must have shape (N, 3, 3), got {tri.shape}")
    return tri


def triangle_areas(tri):
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


def moller_trumbore(origins, dirs, v0, e1, e2, t_min=1e-9):
    """Ray/triangle distances for every (ray, triangle) pair.

    ``origins``/``dirs`` are (R, 3); ``v0``/``e1``/``e2`` are (T, 3).
    Returns an (R, T) array of t with ``inf`` for misses.
    """
    o = origins[:, None, :]
    d = dirs[:, None, :]
    p = np.cross(d, e2[None])
    det = np.einsum("rtk,tk->rt", p, e1)
    ok = np.abs(det) > _DET_EPS
    inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
    s = o - v0[None]
    u = np.einsum("rtk,rtk->rt", s, p) * inv
    q = np.cross(s, e1[None])
    v = np.einsum("rtk,rtk->rt", d, q) * inv
    t = np.einsum("rtk,tk->rt", q, e2) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > t_min)
    return np.where(hit, t, np.inf)


def exhaustive_intersect(triangles, origins, dirs, t_min=1e-9, chunk=2048):
    """Brute-force nearest hit over every triangle; ties go to the lowest index."""
    tri = as_triangles(triangles)
    v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    n = len(origins)
    best_t = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=np.int64)
    step = max(1, chunk * 64 // max(len(tri), 1))
    for a in range(0, n, step):
        t = moller_trumbore(origins[a:a + step], dirs[a:a + step], v0, e1, e2, t_min)
        idx = np.argmin(t, axis=1)
        tt = t[np.arange(len(t)), idx]
        hit = np.isfinite(tt)
        best_t[a:a + step] = tt
        best_i[a:a + step] = np.where(hit, idx, -1)
    return best_t, best_i


class MeshBVH:
    """Axis-aligned BVH over a triangle list (median split, leaves of <= 4 triangles).

    Degenerate triangles are dropped at build time; triangle indices reported by
    :meth:`intersect` refer to the original input list.
    """

    def __init__(self, triangles, leaf_size=LEAF_SIZE):
        tri = as_triangles(triangles)
        if len(tri) == 0:
            raise InvalidArgument("mesh has no triangles")
        keep = np.flatnonzero(triangle_areas(tri) > DEGENERATE_AREA)
        if len(keep) == 0:
            raise InvalidArgument("mesh has only degenerate triangles")
        self.triangles = tri
        self.leaf_size = int(leaf_size)
        self._build(tri, keep)

    def _build(self, tri, keep):
        centroids = tri.mean(axis=1)
        lo_all = tri.min(axis=1)
        hi_all = tri.max(axis=1)
        order = []
        bmin, bmax, left, right, start, count = [], [], [], [], [], []

        def new_node(idx):
            lo = lo_all[idx].min(axis=0)
            hi = hi_all[idx].max(axis=0)
            pad = 1e-9 * max(1.0, float(np.abs(np.concatenate([lo, hi])).max()))
            bmin.append(lo - pad)
            bmax.append(hi + pad)
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return len(bmin) - 1

        root = new_node(keep)
        stack = [(root, keep)]
        while stack:
            node, idx = stack.pop()
            if len(idx) <= self.leaf_size:
                start[node] = len(order)
                count[node] = len(idx)
                order.extend(idx.tolist())
                continue
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            srt = idx[np.argsort(c[:, axis], kind="stable")]
            mid = len(srt) // 2
            lnode = new_node(srt[:mid])
            rnode = new_node(srt[mid:])
            left[node], right[node] = lnode, rnode
            stack.append((rnode, srt[mid:]))
            stack.append((lnode, srt[:mid]))

        self.node_min = np.array(bmin)
        self.node_max = np.array(bmax)
        self.node_left = np.array(left)
        self.node_right = np.array(right)
        self.node_start = np.array(start)
        self.node_count = np.array(count)
        self.tri_index = np.array(order, dtype=np.int64)
        ordered = tri[self.tri_index]
        self._v0 = ordered[:, 0]
        self._e1 = ordered[:, 1] - ordered[:, 0]
        self._e2 = ordered[:, 2] - ordered[:, 0]

    @property
    def n_nodes(self):
        return len(self.node_min)

    @property
    def bounds(self):
        return self.node_min[0], self.node_max[0]

    def intersect(self, origins, dirs, t_min=1e-9):
        """Nearest hit per ray. Returns ``(t, triangle_index)``; misses are ``(inf, -1)``."""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = len(origins)
        best_t = np.full(n, np.inf)
        best_i = np.full(n, -1, dtype=np.int64)
        with np.errstate(divide="ignore"):
            inv = 1.0 / dirs
        stack = [(0, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            o = origins[idx]
            iv = inv[idx]
            with np.errstate(invalid="ignore"):
                t1 = (self.node_min[node] - o) * iv
                t2 = (self.node_max[node] - o) * iv
            tn = np.fmax.reduce(np.fmin(t1, t2), axis=1)
            tf = np.fmin.reduce(np.fmax(t1, t2), axis=1)
            live = (tf >= tn) & (tf > t_min) & (tn <= best_t[idx])
            idx = idx[live]
            if idx.size == 0:
                continue
            cnt = self.node_count[node]
            if cnt:
                s = self.node_start[node]
                t = moller_trumbore(origins[idx], dirs[idx], self._v0[s:s + cnt],
                                    self._e1[s:s + cnt], self._e2[s:s + cnt], t_min)
                for j in range(cnt):
                    tj = t[:, j]
                    orig = self.tri_index[s + j]
                    bt = best_t[idx]
                    better = (tj < bt) | ((tj == bt) & np.isfinite(tj) & (orig < best_i[idx]))
                    sel = idx[better]
                    best_t[sel] = tj[better]
                    best_i[sel] = orig
            else:
                stack.append((self.node_right[node], idx))
                stack.append((self.node_left[node], idx))
        return best_t, best_i

    def normals(self, tri_idx):
        """Unit geometric normals of the given triangles."""
        tri = self.triangles[tri_idx]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def build_mesh_accel(triangles):
    return MeshBVH(triangles)
