"""Inverse accrual maps: shadow endpoints per ground pixel, drawn as lines.

Instead of asking "is this pixel shadowed at minute i" sixty times, cast a
few rays per pixel at the two swing endpoints only. A surface found toward
the start direction casts its shadow exactly on the source pixel at the
first minute, and on the stored endpoint (its shadow along the end
direction) at the last; in between, the shadow slides along the segment
joining them. Drawing every pixel's segments with per-minute sample spacing
reconstructs the whole hour from two ray passes, with up to
``source_levels`` surfaces kept per pixel so stacked occluders still land
their marks.

Raw surface crossings are kept as found: a building contributes both its
entry and exit surface, which is what makes the drawn segments cover its
shadow rather than just the shadow of its sunward wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accrual import _ratios
from .rays import DirectionalScene
from .solar import HourlyInterval

__all__ = ["InverseMap", "build_inverse_map", "accumulate_inverse"]


@dataclass
class InverseMap:
    """Endpoint layers for one interval over one ground raster.

    ``fwd_*`` layers come from rays toward the start direction (their
    endpoints are shadows along the end direction); ``rev_*`` layers are the
    mirror image. Endpoint slot (level, row, col) holds the ground x, y of
    the level-th surface's far shadow, NaN when the ray found nothing there.
    ``degenerate_rays`` counts surfaces whose far shadow was undefined
    because the other direction ran parallel to the ground.
    """

    raster: object
    interval: HourlyInterval
    source_levels: int
    fwd_end: np.ndarray
    fwd_bid: np.ndarray
    rev_end: np.ndarray
    rev_bid: np.ndarray
    degenerate_rays: int

    @property
    def memory_bytes(self) -> int:
        """Payload bytes: endpoint layers plus the n-bit accumulation grid.

        Building-id layers are auxiliary (only attribution queries need
        them) and are counted in total_bytes instead.
        """
        pixels = self.raster.width * self.raster.height
        return int(self.fwd_end.nbytes + self.rev_end.nbytes + pixels * self.interval.n // 8)

    @property
    def total_bytes(self) -> int:
        return self.memory_bytes + int(self.fwd_bid.nbytes + self.rev_bid.nbytes)


def _endpoint_layer(engine: DirectionalScene, origins, d_near, d_far, raster, levels, min_offset):
    """Cast toward d_near, project each hit to the ground along d_far."""
    t, bid = engine.nearest(origins, min_offset=min_offset, max_hits=levels)
    found = np.isfinite(t)
    tt = np.where(found, t, 0.0)
    hit = origins[:, None, :] - tt[..., None] * d_near  # (P, L, 3)
    dz = float(d_far[2])
    degenerate = 0
    ex = np.full(t.shape, np.nan, dtype=np.float32)
    ey = np.full(t.shape, np.nan, dtype=np.float32)
    if dz >= -1e-12:
        degenerate = int(found.sum())
    else:
        s = hit[..., 2] / -dz
        ex[found] = (hit[..., 0] + s * d_far[0])[found]
        ey[found] = (hit[..., 1] + s * d_far[1])[found]
    H, W = raster.shape
    ends = np.stack([ex, ey], axis=-1).transpose(1, 0, 2).reshape(levels, H, W, 2)
    bids = bid.T.reshape(levels, H, W)
    return ends, bids, degenerate


def build_inverse_map(
    view,
    interval: HourlyInterval,
    raster,
    source_levels: int = 3,
    min_offset: float = 1.0,
) -> InverseMap:
    """Two endpoint-direction ray passes instead of one per minute.

    ``min_offset`` skips surfaces closer than that along the ray so a pixel
    sitting exactly on geometry does not occlude itself.
    """
    corners = view.corner_arrays()
    origins = raster.points3d()
    ds = interval.d_start.vector
    de = interval.d_end.vector
    fwd_engine = DirectionalScene(corners, ds)
    fwd_end, fwd_bid, deg_f = _endpoint_layer(fwd_engine, origins, ds, de, raster, source_levels, min_offset)
    rev_engine = DirectionalScene(corners, de)
    rev_end, rev_bid, deg_r = _endpoint_layer(rev_engine, origins, de, ds, raster, source_levels, min_offset)
    return InverseMap(
        raster=raster,
        interval=interval,
        source_levels=source_levels,
        fwd_end=fwd_end,
        fwd_bid=fwd_bid,
        rev_end=rev_end,
        rev_bid=rev_bid,
        degenerate_rays=deg_f + deg_r,
    )


def _bresenham_fill(bits_flat, x0, y0, x1, y1, bitval, W, H):
    """Mark pixels strictly between two sample pixels."""
    steps = max(abs(x1 - x0), abs(y1 - y0))
    if steps < 2:
        return
    ts = np.arange(1, steps) / steps
    xs = np.rint(x0 + ts * (x1 - x0)).astype(np.int64)
    ys = np.rint(y0 + ts * (y1 - y0)).astype(np.int64)
    ok = (xs >= 0) & (xs < W) & (ys >= 0) & (ys < H)
    if ok.any():
        flat = ys[ok] * W + xs[ok]
        bits_flat[flat] |= bitval


def accumulate_inverse(imap: InverseMap, per_building: bool = False):
    """Draw every pixel's shadow segments into per-minute bits.

    Sample j of a segment sits at the tangent-ratio position between the
    source pixel and its endpoint and stamps minute j's bit (counted from
    the near direction of its layer); pixels strictly between two
    consecutive sample pixels take the earlier sample's bit. An endpoint
    landing on the source pixel itself means the shadow never leaves, so
    the whole lit span is stamped at once.

    Returns a (height, width) uint64 bit grid, or with ``per_building`` a
    dict keyed by building id whose grids attribute each mark to the
    surface that produced it (overlapping shadows count for every caster).
    """
    rast = imap.raster
    H, W = rast.shape
    iv = imap.interval
    i0, i1 = iv.span
    m = i1 - i0
    r = _ratios(np.arange(m + 1) / max(m, 1), iv.theta_deg)
    span_bits = np.uint64(0)
    for i in range(i0, i1 + 1):
        if iv.lit[i]:
            span_bits |= np.uint64(1) << np.uint64(i)

    pxi = np.tile(np.arange(W, dtype=np.float64), H)
    pyi = np.repeat(np.arange(H, dtype=np.float64), W)

    grids: dict[int, np.ndarray] = {}

    def grid_for(bid: int) -> np.ndarray:
        g = grids.get(bid)
        if g is None:
            g = np.zeros(H * W, dtype=np.uint64)
            grids[bid] = g
        return g

    merged = np.zeros(H * W, dtype=np.uint64)

    for ends, bids, reversed_time in ((imap.fwd_end, imap.fwd_bid, False), (imap.rev_end, imap.rev_bid, True)):
        for level in range(imap.source_levels):
            ex = ends[level, :, :, 0].ravel()
            ey = ends[level, :, :, 1].ravel()
            lb = bids[level].ravel()
            src = np.flatnonzero(np.isfinite(ex))
            if len(src) == 0:
                continue
            fx = (ex[src].astype(np.float64) - rast.x0) / rast.cell - 0.5
            fy = (ey[src].astype(np.float64) - rast.y0) / rast.cell - 0.5
            sx = pxi[src]
            sy = pyi[src]
            stationary = np.hypot(fx - sx, fy - sy) < 0.5

            stat_src = src[stationary]
            if len(stat_src):
                if per_building:
                    sb = lb[stat_src]
                    for ub in np.unique(sb):
                        grid_for(int(ub))[stat_src[sb == ub]] |= span_bits
                else:
                    merged[stat_src] |= span_bits

            mov = ~stationary
            if not mov.any():
                continue
            msrc = src[mov]
            mfx, mfy, msx, msy = fx[mov], fy[mov], sx[mov], sy[mov]
            mbid = lb[msrc]
            prev_x = msx.astype(np.int64)
            prev_y = msy.astype(np.int64)
            for j in range(m + 1):
                minute = (i1 - j) if reversed_time else (i0 + j)
                cx = np.rint(msx + r[j] * (mfx - msx)).astype(np.int64)
                cy = np.rint(msy + r[j] * (mfy - msy)).astype(np.int64)
                if iv.lit[minute]:
                    bitval = np.uint64(1) << np.uint64(minute)
                    ok = (cx >= 0) & (cx < W) & (cy >= 0) & (cy < H)
                    if ok.any():
                        flat = cy[ok] * W + cx[ok]
                        if per_building:
                            ob = mbid[ok]
                            for ub in np.unique(ob):
                                grid_for(int(ub))[flat[ob == ub]] |= bitval
                        else:
                            merged[flat] |= bitval
                if j > 0:
                    seg_minute = (i1 - (j - 1)) if reversed_time else (i0 + j - 1)
                    if iv.lit[seg_minute]:
                        gap = np.maximum(np.abs(cx - prev_x), np.abs(cy - prev_y)) >= 2
                        if gap.any():
                            segval = np.uint64(1) << np.uint64(seg_minute)
                            for k in np.flatnonzero(gap):
                                target = grid_for(int(mbid[k])) if per_building else merged
                                _bresenham_fill(
                                    target, int(prev_x[k]), int(prev_y[k]), int(cx[k]), int(cy[k]), segval, W, H
                                )
                prev_x, prev_y = cx, cy

    if per_building:
        return {bid: g.reshape(H, W) for bid, g in grids.items()}
    return merged.reshape(H, W)
