"""Schedule-scale shadow accumulation and the measures built on top of it.

A schedule's hours collapse into the direction graph; each graph edge is
evaluated once, weighted by how many hours it represents, and each day's
chronological edge sequence is stitched for the longest-continuous-shadow
statistic. Gross totals are integer arithmetic throughout, so splitting a
schedule into sub-schedules and adding the results is exact.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import date

import numpy as np

from .accrual import DEFAULT_BIAS_M, build_accrual_map, query_accrual
from .baselines import shadow_mask_map, shadow_mask_ray
from .bitruns import RunStats, gross_of, merge_runs, run_stats
from .inverse import accumulate_inverse, build_inverse_map
from .raster import GroundRaster, region_mask
from .solar import (
    DirectionGraph,
    Schedule,
    build_direction_graph,
    light_vector,
    minutes_since_epoch,
    slerp,
    solar_angles,
    solar_interval_fn,
)

__all__ = [
    "MONTHLY_WEIGHTS_SEASONAL",
    "EdgeStats",
    "AccumulationResult",
    "ShadowScore",
    "ContributionEntry",
    "stitch_runs",
    "accumulate",
    "brute_accumulate",
    "impact_diff",
    "shadow_area",
    "shadow_score",
    "contribution",
]

# winter shade hurts, summer shade helps; shoulder months taper
MONTHLY_WEIGHTS_SEASONAL = (-1.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.0, -0.5, -1.0)

METHODS = ("accrual", "inverse", "brute_map", "brute_ray")

stitch_runs = merge_runs


@dataclass
class EdgeStats:
    """What survives of an edge once its bits have been reduced."""

    gross: np.ndarray  # (H, W) uint8 shadowed minutes
    runs: RunStats | None  # absent when only gross totals were requested


@dataclass
class AccumulationResult:
    raster: GroundRaster
    schedule: Schedule
    method: str
    gross_minutes: np.ndarray  # (H, W) int64, summed over all scheduled hours
    continuous: np.ndarray  # (H, W) uint16, longest within-day run in minutes
    graph_edges: int | None
    dropped_intervals: int
    degenerate_rays: int
    slices_per_hour: int

    @property
    def gross_per_day(self) -> np.ndarray:
        return (self.gross_minutes / self.schedule.days).astype(np.float32)

    @property
    def scheduled_minutes(self) -> int:
        return self.schedule.days * self.schedule.hours_per_day * self.slices_per_hour


def _require_interval_fn(view, interval_fn, slices_per_hour):
    if interval_fn is not None:
        return interval_fn
    anchor = view.anchor
    if anchor is None:
        raise ValueError("scene has no lat/lon anchor; pass interval_fn explicitly")
    return solar_interval_fn(anchor[0], anchor[1], slices_per_hour)


def _edge_bits(view, interval, raster, points, method, resolution, bias, source_levels):
    """One edge's per-pixel minute bits plus its degenerate-ray count."""
    if method == "accrual":
        amap = build_accrual_map(view, interval, raster=raster, resolution=resolution)
        return query_accrual(amap, points, bias).reshape(raster.shape), 0
    if method == "inverse":
        imap = build_inverse_map(view, interval, raster, source_levels=source_levels)
        return accumulate_inverse(imap), imap.degenerate_rays
    if method not in ("brute_map", "brute_ray"):
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    bits = np.zeros(raster.shape, dtype=np.uint64)
    vs = interval.d_start.vector
    ve = interval.d_end.vector
    frac = interval.fractions()
    for i in range(interval.n):
        if not interval.lit[i]:
            continue
        d = slerp(vs, ve, float(frac[i]))
        if method == "brute_map":
            mask = shadow_mask_map(view, d, raster, resolution=resolution, bias=bias, points=points)
        else:
            mask = shadow_mask_ray(view, d, raster, points=points)
        bits |= mask.astype(np.uint64) << np.uint64(i)
    return bits, 0


def accumulate(
    view,
    schedule: Schedule,
    raster: GroundRaster,
    method: str = "accrual",
    resolution: int = 1024,
    bias: float = DEFAULT_BIAS_M,
    source_levels: int = 3,
    bound_deg: float = 5.0,
    slices_per_hour: int = 60,
    interval_fn=None,
    progress=None,
    continuous: bool = True,
) -> AccumulationResult:
    """Accumulate a whole schedule through the direction graph.

    Edges are built lazily and freed as soon as no remaining day path needs
    them; identical day paths are folded once. ``progress`` receives a
    completed-weight fraction in [0, 1] after each edge evaluation, plus the
    partial gross grid built so far (it only ever grows), so callers can
    publish preliminary results. ``continuous=False`` skips run extraction
    and day stitching entirely; the result's continuous grid stays zero.
    """
    interval_fn = _require_interval_fn(view, interval_fn, slices_per_hour)
    graph = build_direction_graph(schedule, bound_deg, interval_fn)
    points = raster.points3d()
    n = slices_per_hour

    gross = np.zeros(raster.shape, dtype=np.int64)
    cont = np.zeros(raster.shape, dtype=np.uint16)
    degenerate = 0
    done_weight = 0
    total_weight = max(graph.total_weight, 1)

    distinct: dict[tuple[int, ...], int] = {}
    order: list[tuple[int, ...]] = []
    for path in graph.day_paths:
        key = tuple(path)
        if key not in distinct:
            distinct[key] = 0
            order.append(key)
        distinct[key] += 1
    refs: dict[int, int] = {}
    for key in order:
        for eid in set(key):
            refs[eid] = refs.get(eid, 0) + 1

    cache: dict[int, EdgeStats] = {}

    def stats_of(eid: int) -> EdgeStats:
        nonlocal degenerate, done_weight
        st = cache.get(eid)
        if st is None:
            edge = graph.edges[eid]
            bits, deg = _edge_bits(view, edge.interval, raster, points, method, resolution, bias, source_levels)
            st = EdgeStats(gross_of(bits, n), run_stats(bits, n) if continuous else None)
            cache[eid] = st
            gross[...] += edge.weight * st.gross.astype(np.int64)
            degenerate += deg
            done_weight += edge.weight
            if progress is not None:
                progress(done_weight / total_weight, gross)
        return st

    for key in order:
        if key and continuous:
            fold = stats_of(key[0]).runs
            for eid in key[1:]:
                fold = stitch_runs(fold, stats_of(eid).runs)
            np.maximum(cont, fold.max_run.astype(np.uint16), out=cont)
        else:
            for eid in key:
                stats_of(eid)
        for eid in set(key):
            refs[eid] -= 1
            if refs[eid] == 0:
                cache.pop(eid, None)

    return AccumulationResult(
        raster=raster,
        schedule=schedule,
        method=method,
        gross_minutes=gross,
        continuous=cont,
        graph_edges=len(graph.edges),
        dropped_intervals=graph.dropped,
        degenerate_rays=degenerate,
        slices_per_hour=n,
    )


def brute_accumulate(
    view,
    schedule: Schedule,
    raster: GroundRaster,
    via: str = "map",
    resolution: int = 1024,
    bias: float = DEFAULT_BIAS_M,
    progress=None,
    continuous: bool = True,
) -> AccumulationResult:
    """Minute-exact reference: true sun directions, no binning, no swings.

    Slow by construction; exists to measure what the fast paths give up.
    """
    anchor = view.anchor
    if anchor is None:
        raise ValueError("scene has no lat/lon anchor")
    if via not in ("map", "ray"):
        raise ValueError("via must be 'map' or 'ray'")
    lat, lon = anchor
    gross = np.zeros(raster.shape, dtype=np.int64)
    cont = np.zeros(raster.shape, dtype=np.uint16)
    points = raster.points3d()
    starts = schedule.interval_starts()
    dropped = 0
    for hour_idx, (day, start) in enumerate(starts):
        if hour_idx == 0 or starts[hour_idx - 1][0] != day:
            fold: RunStats | None = None
        base = minutes_since_epoch(start)
        az, el = solar_angles(lat, lon, base + np.arange(60))
        lit_idx = np.flatnonzero(el > 0.0)
        if len(lit_idx) == 0:
            dropped += 1

        def minute_mask(i):
            d = light_vector(float(az[i]), float(el[i]))
            if via == "map":
                return shadow_mask_map(view, d, raster, resolution=resolution, bias=bias, points=points)
            return shadow_mask_ray(view, d, raster, points=points)

        if continuous:
            bits = np.zeros(raster.shape, dtype=np.uint64)
            for i in lit_idx:
                bits |= minute_mask(i).astype(np.uint64) << np.uint64(i)
            gross[...] += gross_of(bits, 60).astype(np.int64)
            # a fully dark hour folds in as all-zero runs and breaks continuity
            hour_runs = run_stats(bits, 60)
            fold = hour_runs if fold is None else stitch_runs(fold, hour_runs)
            last_of_day = hour_idx + 1 == len(starts) or starts[hour_idx + 1][0] != day
            if last_of_day:
                np.maximum(cont, fold.max_run.astype(np.uint16), out=cont)
        elif len(lit_idx):
            # gross only needs counts, so skip the minute-bit bookkeeping
            acc = np.zeros(raster.shape, dtype=np.uint8)
            for i in lit_idx:
                acc += minute_mask(i)
            gross[...] += acc
        if progress is not None:
            progress((hour_idx + 1) / len(starts), gross)
    return AccumulationResult(
        raster=raster,
        schedule=schedule,
        method=f"brute_{via}_exact",
        gross_minutes=gross,
        continuous=cont,
        graph_edges=None,
        dropped_intervals=dropped,
        degenerate_rays=0,
        slices_per_hour=60,
    )


def impact_diff(base: AccumulationResult, scenario: AccumulationResult) -> np.ndarray:
    """Per-pixel change in daily shadow minutes (scenario minus base)."""
    if base.raster != scenario.raster:
        raise ValueError("results cover different rasters")
    if base.schedule != scenario.schedule:
        raise ValueError("results cover different schedules")
    return scenario.gross_per_day - base.gross_per_day


def shadow_area(result: AccumulationResult, region=None) -> float:
    """Time-averaged instantaneous shadowed area in square meters.

    Every pixel-minute of shadow contributes pixel_area / scheduled_minutes;
    a region polygon (or mask) restricts which pixels count.
    """
    if region is None:
        mask = None
    elif isinstance(region, np.ndarray) and region.dtype == bool:
        mask = region
    else:
        mask = region_mask(result.raster, region)
    g = result.gross_minutes if mask is None else result.gross_minutes[mask]
    return float(g.sum()) * result.raster.pixel_area / result.scheduled_minutes


@dataclass
class ShadowScore:
    score: float
    per_pixel: np.ndarray  # (H, W) float32, weighted shadow hours per day
    monthly_hours: list[float]  # mean daily shadow hours per month


def shadow_score(
    view,
    raster: GroundRaster,
    year: int,
    weights=MONTHLY_WEIGHTS_SEASONAL,
    start_minute: int = 8 * 60,
    hours_per_day: int = 8,
    utc_offset_minutes: int = 0,
    method: str = "accrual",
    resolution: int = 1024,
    bias: float = DEFAULT_BIAS_M,
    source_levels: int = 3,
    bound_deg: float = 5.0,
    region=None,
    interval_fn=None,
    progress=None,
) -> ShadowScore:
    """Seasonally weighted year profile of a site.

    Each month is accumulated over its full run of days and reduced to mean
    daily shadow hours per pixel; the score is the weight-summed mean over
    the raster (or a region within it).
    """
    weights = list(weights)
    if len(weights) != 12:
        raise ValueError("need exactly 12 monthly weights")
    per_pixel = np.zeros(raster.shape, dtype=np.float64)
    monthly = []
    mask = region_mask(raster, region) if region is not None else None
    for month in range(1, 13):
        days = calendar.monthrange(year, month)[1]
        sched = Schedule(date(year, month, 1), start_minute, days, hours_per_day, utc_offset_minutes)
        sub = (lambda frac, partial, m=month: progress((m - 1 + frac) / 12.0, None)) if progress else None
        res = accumulate(
            view,
            sched,
            raster,
            method=method,
            resolution=resolution,
            bias=bias,
            source_levels=source_levels,
            bound_deg=bound_deg,
            interval_fn=interval_fn,
            progress=sub,
        )
        hours = res.gross_per_day / 60.0
        per_pixel += weights[month - 1] * hours
        sel = hours[mask] if mask is not None else hours
        monthly.append(float(sel.mean()) if sel.size else 0.0)
    pp = per_pixel.astype(np.float32)
    sel = pp[mask] if mask is not None else pp
    return ShadowScore(float(sel.mean()) if sel.size else 0.0, pp, monthly)


@dataclass
class ContributionEntry:
    building_id: int
    name: str | None
    area_hours: float  # square-meter hours of shadow cast into the region


def contribution(
    view,
    schedule: Schedule,
    region,
    source_levels: int = 3,
    resolution: int = 256,
    bound_deg: float = 5.0,
    interval_fn=None,
    progress=None,
) -> list[ContributionEntry]:
    """Rank buildings by how much shadow they drop into a region.

    Uses the endpoint layers' building ids, so a pixel-minute covered by two
    buildings at once is charged to both: entries answer "how much shade is
    this building responsible for", not "who owns which square meter".
    """
    import shapely

    if not isinstance(region, shapely.Geometry):
        region = shapely.Polygon(np.asarray(region, dtype=np.float64))
    x0, y0, x1, y1 = region.bounds
    raster = GroundRaster.from_bbox((x0, y0), (x1, y1), resolution)
    mask = region_mask(raster, region)
    interval_fn = _require_interval_fn(view, interval_fn, 60)
    graph = build_direction_graph(schedule, bound_deg, interval_fn)
    totals: dict[int, int] = {}
    for k, edge in enumerate(graph.edges):
        imap = build_inverse_map(view, edge.interval, raster, source_levels=source_levels)
        for bid, bits in accumulate_inverse(imap, per_building=True).items():
            minutes = int(gross_of(bits[mask], edge.interval.n).astype(np.int64).sum())
            if minutes:
                totals[bid] = totals.get(bid, 0) + minutes * edge.weight
        if progress is not None:
            progress((k + 1) / max(len(graph.edges), 1), None)
    names = {b.building_id: b.name for b in view.buildings()}
    entries = [
        ContributionEntry(bid, names.get(bid), minutes * raster.pixel_area / 60.0)
        for bid, minutes in totals.items()
    ]
    entries.sort(key=lambda e: e.area_hours, reverse=True)
    return entries
