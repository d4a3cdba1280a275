"""Batched ray casting for bundles that share one travel direction.

Shadow questions for a fixed sun position are many rays along the same line.
Projecting the scene onto a plane perpendicular to that line reduces every
query to a 2D point-in-triangle test plus depth recovery along the shared
axis: along the ray the two in-plane coordinates are constant and the depth
coordinate grows linearly. A 2D bucket grid pairs each origin with nearby
triangles only, and the (origin, triangle) pairs are expanded into flat
arrays so one vectorized pass covers the whole bundle.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["DirectionalScene", "directional_any_hit", "directional_hits"]

_CHUNK = 1 << 18  # origins per pass, caps transient pair arrays


def _light_basis(direction):
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    d = d / norm
    n = -d
    u = np.cross([0.0, 0.0, 1.0], n)
    if np.linalg.norm(u) < 1e-9:
        u = np.cross([1.0, 0.0, 0.0], n)
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return n, u, v


class DirectionalScene:
    """Scene triangles projected perpendicular to one travel direction.

    Build once per direction, then query any number of origin batches.
    ``direction`` is the travel direction of the light; rays go the other
    way, so a hit at depth t from origin o is the point o - t * direction,
    t meters closer to the source.
    """

    def __init__(self, corners, direction):
        a, b, c, bids = corners
        self.normal, self._ub, self._vb = _light_basis(direction)
        self.direction = -self.normal  # unit travel direction, normalized
        self.bids = np.asarray(bids, dtype=np.int32)
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        au, av, ah = a @ self._ub, a @ self._vb, a @ self.normal
        bu, bv, bh = b @ self._ub, b @ self._vb, b @ self.normal
        cu, cv, ch = c @ self._ub, c @ self._vb, c @ self.normal

        area2 = (bu - au) * (cv - av) - (bv - av) * (cu - au)
        live = np.abs(area2) > 1e-12
        sign = np.where(area2 >= 0, 1.0, -1.0)
        self._tol = 1e-9 * np.abs(area2) + 1e-30

        def edge(pu, pv, qu, qv):
            # affine coefficients of the edge function for p -> q, sign-folded
            ex = -(qv - pv) * sign
            ey = (qu - pu) * sign
            e0 = ((qv - pv) * pu - (qu - pu) * pv) * sign
            return ex, ey, e0

        self._e = [edge(au, av, bu, bv), edge(bu, bv, cu, cv), edge(cu, cv, au, av)]
        inv = np.where(live, 1.0 / np.where(live, area2, 1.0), 0.0)
        g1 = ((bh - ah) * (cv - av) - (ch - ah) * (bv - av)) * inv
        g2 = ((ch - ah) * (bu - au) - (bh - ah) * (cu - au)) * inv
        self._g = (ah - g1 * au - g2 * av, g1, g2)

        # bucket grid over projected bounding boxes
        self._nt = int(live.sum())
        if self._nt == 0:
            self._nx = self._ny = 1
            self._u0 = self._v0 = 0.0
            self._cu = self._cv = 1.0
            self._cell_start = np.zeros(2, dtype=np.int64)
            self._cell_tris = np.zeros(0, dtype=np.int32)
            return
        lo_u = np.minimum(np.minimum(au, bu), cu)
        hi_u = np.maximum(np.maximum(au, bu), cu)
        lo_v = np.minimum(np.minimum(av, bv), cv)
        hi_v = np.maximum(np.maximum(av, bv), cv)
        self._u0 = float(lo_u[live].min())
        self._v0 = float(lo_v[live].min())
        u1 = float(hi_u[live].max())
        v1 = float(hi_v[live].max())
        n_side = int(np.clip(math.ceil(math.sqrt(2.0 * self._nt)), 4, 2048))
        self._nx = self._ny = n_side
        self._cu = max((u1 - self._u0) / n_side, 1e-9)
        self._cv = max((v1 - self._v0) / n_side, 1e-9)

        ids = np.flatnonzero(live).astype(np.int32)
        ix0 = np.clip(((lo_u[live] - self._u0) / self._cu).astype(np.int64), 0, n_side - 1)
        ix1 = np.clip(((hi_u[live] - self._u0) / self._cu).astype(np.int64), 0, n_side - 1)
        iy0 = np.clip(((lo_v[live] - self._v0) / self._cv).astype(np.int64), 0, n_side - 1)
        iy1 = np.clip(((hi_v[live] - self._v0) / self._cv).astype(np.int64), 0, n_side - 1)
        spans_x = ix1 - ix0 + 1
        spans_y = iy1 - iy0 + 1
        counts = spans_x * spans_y
        total = int(counts.sum())
        rep = np.repeat(np.arange(len(ids)), counts)
        k = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = ix0[rep] + k % spans_x[rep]
        cy = iy0[rep] + k // spans_x[rep]
        flat = cy * n_side + cx
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        self._cell_tris = ids[rep[order]]
        cnt = np.bincount(flat, minlength=n_side * n_side)
        self._cell_start = np.zeros(n_side * n_side + 1, dtype=np.int64)
        np.cumsum(cnt, out=self._cell_start[1:])

    def _project_origins(self, origins):
        o = np.asarray(origins, dtype=np.float64)
        return o @ self._ub, o @ self._vb, o @ self.normal

    def _pairs(self, ou, ov):
        """Expand (origin, candidate triangle) pairs for one origin chunk."""
        ix = np.floor((ou - self._u0) / self._cu).astype(np.int64)
        iy = np.floor((ov - self._v0) / self._cv).astype(np.int64)
        ok = (ix >= 0) & (ix < self._nx) & (iy >= 0) & (iy < self._ny)
        oid = np.flatnonzero(ok)
        flat = iy[oid] * self._nx + ix[oid]
        start = self._cell_start[flat]
        counts = self._cell_start[flat + 1] - start
        total = int(counts.sum())
        rep = np.repeat(oid, counts)
        k = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        tri = self._cell_tris[np.repeat(start, counts) + k]
        return rep, tri

    def _hit_pairs(self, ou, ov, oh, min_offset):
        """Valid (origin, triangle, depth) hit triples for one chunk."""
        rep, tri = self._pairs(ou, ov)
        if len(rep) == 0:
            return rep, tri, np.zeros(0)
        pu = ou[rep]
        pv = ov[rep]
        inside = np.ones(len(rep), dtype=bool)
        for ex, ey, e0 in self._e:
            inside &= ex[tri] * pu + ey[tri] * pv + e0[tri] >= -self._tol[tri]
        g0, g1, g2 = self._g
        t = g0[tri] + g1[tri] * pu + g2[tri] * pv - oh[rep]
        good = inside & (t > min_offset)
        return rep[good], tri[good], t[good]

    def any_hit(self, origins, min_offset: float = 1e-6) -> np.ndarray:
        """Boolean per origin: is anything in the way toward the light."""
        ou, ov, oh = self._project_origins(origins)
        n = len(ou)
        out = np.zeros(n, dtype=bool)
        if self._nt == 0:
            return out
        for s in range(0, n, _CHUNK):
            e = min(s + _CHUNK, n)
            rep, _, _ = self._hit_pairs(ou[s:e], ov[s:e], oh[s:e], min_offset)
            if len(rep):
                out[s:e] |= np.bincount(rep, minlength=e - s) > 0
        return out

    def nearest(self, origins, min_offset: float = 1.0, max_hits: int = 3):
        """Up to max_hits nearest surfaces per origin, depth-sorted.

        Returns (t, building_id) arrays of shape (n, max_hits); empty slots
        hold inf and -1. Coincident hits on the same building (shared wall
        diagonals, cap edges) are collapsed; true entry and exit surfaces of
        one building stay distinct.
        """
        ou, ov, oh = self._project_origins(origins)
        n = len(ou)
        t_out = np.full((n, max_hits), np.inf)
        b_out = np.full((n, max_hits), -1, dtype=np.int32)
        if self._nt == 0:
            return t_out, b_out
        for s in range(0, n, _CHUNK):
            e = min(s + _CHUNK, n)
            rep, tri, t = self._hit_pairs(ou[s:e], ov[s:e], oh[s:e], min_offset)
            if not len(rep):
                continue
            bid = self.bids[tri]
            order = np.lexsort((t, rep))
            rep, t, bid = rep[order], t[order], bid[order]
            if len(rep) > 1:
                dup = np.zeros(len(rep), dtype=bool)
                dup[1:] = (rep[1:] == rep[:-1]) & (bid[1:] == bid[:-1]) & (t[1:] - t[:-1] < 1e-6)
                if dup.any():
                    rep, t, bid = rep[~dup], t[~dup], bid[~dup]
            uniq, first = np.unique(rep, return_index=True)
            per = np.diff(np.append(first, len(rep)))
            for slot in range(max_hits):
                sel = per > slot
                t_out[s + uniq[sel], slot] = t[first[sel] + slot]
                b_out[s + uniq[sel], slot] = bid[first[sel] + slot]
        return t_out, b_out


def directional_any_hit(corners, direction, origins, min_offset: float = 1e-6) -> np.ndarray:
    """One-shot occlusion test for a batch of origins sharing a direction."""
    return DirectionalScene(corners, direction).any_hit(origins, min_offset)


def directional_hits(corners, direction, origins, min_offset: float = 1.0, max_hits: int = 3):
    """One-shot nearest-surfaces query; see DirectionalScene.nearest."""
    return DirectionalScene(corners, direction).nearest(origins, min_offset, max_hits)
