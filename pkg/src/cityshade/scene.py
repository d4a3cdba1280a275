"""City scene geometry: extruded footprints, a uniform grid index, ray queries.

Scenes live in a local planar frame, x east, y north, z up, all meters, with
the ground at z = 0. Buildings are watertight prisms extruded from footprint
polygons: two wall triangles per ring edge plus ear-triangulated roof and
floor caps. The floor keeps the solid closed for arbitrary ray directions
even though it is invisible to top-down queries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon as _ShapelyPolygon

from .triangulate import ring_area, triangulate_polygon

log = logging.getLogger(__name__)

__all__ = [
    "Building",
    "CityScene",
    "ScenarioOverlay",
    "SceneView",
    "UniformGrid",
    "Hit",
    "extrude_footprint",
    "build_grid",
    "intersect_ray",
    "apply_overlay",
]


@dataclass
class Building:
    """One building: a footprint polygon (optionally holed) and a flat height."""

    building_id: int
    height: float
    rings: list[np.ndarray]  # ring 0 exterior, others holes; (V, 2) meters
    name: str | None = None

    def footprint_polygon(self) -> _ShapelyPolygon:
        return _ShapelyPolygon(self.rings[0], [r for r in self.rings[1:]])


def extrude_footprint(rings, height: float) -> tuple[np.ndarray, np.ndarray]:
    """Extrude a footprint into a closed prism.

    Args:
        rings: sequence of (V, 2) rings; ring 0 is the exterior, the rest are
            holes. Winding is normalized here (exterior CCW, holes CW).
        height: prism height in meters, must be positive.

    Returns:
        (vertices, triangles): (N, 3) float64 and (T, 3) int32. Roof normals
        face up, floor normals down, walls outward.
    """
    if not math.isfinite(height) or height <= 0:
        raise ValueError(f"building height must be positive, got {height}")
    norm_rings: list[np.ndarray] = []
    for k, ring in enumerate(rings):
        r = np.asarray(ring, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != 2:
            raise ValueError("footprint rings must be (V, 2) arrays")
        if len(r) > 1 and np.allclose(r[0], r[-1]):
            r = r[:-1]
        if len(r) < 3:
            raise ValueError("footprint ring needs at least 3 distinct vertices")
        area = ring_area(r)
        if abs(area) < 1e-9:
            raise ValueError("footprint ring has zero area")
        want_ccw = k == 0
        if (area > 0) != want_ccw:
            r = r[::-1].copy()
        norm_rings.append(r)
    poly = _ShapelyPolygon(norm_rings[0], norm_rings[1:])
    if not poly.is_valid:
        raise ValueError("invalid footprint polygon (self-intersection or hole outside exterior)")

    counts = [len(r) for r in norm_rings]
    total = sum(counts)
    flat = np.concatenate(norm_rings, axis=0)
    verts = np.empty((2 * total, 3), dtype=np.float64)
    verts[:total, :2] = flat
    verts[:total, 2] = 0.0
    verts[total:, :2] = flat
    verts[total:, 2] = height

    tris: list[tuple[int, int, int]] = []
    base = 0
    for r, cnt in zip(norm_rings, counts):
        for i in range(cnt):
            a = base + i
            b = base + (i + 1) % cnt
            tris.append((a, b, b + total))
            tris.append((a, b + total, a + total))
        base += cnt
    roof = triangulate_polygon(norm_rings[0], norm_rings[1:])
    for i, j, k in roof:
        tris.append((i + total, j + total, k + total))  # up
        tris.append((k, j, i))  # floor, down
    return verts, np.asarray(tris, dtype=np.int32)


@dataclass
class UniformGrid:
    """Uniform cell index over triangle AABBs, traversed with 3D DDA."""

    origin: np.ndarray  # (3,)
    cell: float
    dims: tuple[int, int, int]
    cell_start: np.ndarray  # (ncells + 1,) int64, CSR offsets
    cell_tris: np.ndarray  # int32 triangle indices

    @property
    def ncells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def flat(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.dims
        return (iz * ny + iy) * nx + ix

    def tris_in(self, flat_cell: int) -> np.ndarray:
        s, e = self.cell_start[flat_cell], self.cell_start[flat_cell + 1]
        return self.cell_tris[s:e]


def build_grid(vertices: np.ndarray, triangles: np.ndarray, target_cell: float | None = None) -> UniformGrid:
    """Index triangles into uniform cells.

    Cell edge is clamp(target_cell, 1 m, extent / 16); the default target is
    extent / 128. For very small scenes the upper bound wins, so the grid
    never collapses below 16 cells along the longest axis. Every triangle is
    registered in every cell its AABB overlaps.
    """
    if len(triangles) == 0:
        origin = np.zeros(3)
        return UniformGrid(origin, 1.0, (1, 1, 1), np.zeros(2, dtype=np.int64), np.zeros(0, dtype=np.int32))
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    extent = float(max(hi - lo))
    if extent <= 0:
        extent = 1.0
    if target_cell is None:
        target_cell = extent / 128.0
    cell = float(np.clip(target_cell, 1.0, extent / 16.0))
    pad = 1e-6 * extent + 1e-9
    origin = lo - pad
    size = (hi - lo) + 2 * pad
    dims = tuple(max(1, int(math.ceil(s / cell))) for s in size)
    nx, ny, nz = dims

    tv = vertices[triangles]  # (T, 3, 3)
    tlo = np.floor((tv.min(axis=1) - origin) / cell).astype(np.int64)
    thi = np.floor((tv.max(axis=1) - origin) / cell).astype(np.int64)
    np.clip(tlo, 0, np.array(dims) - 1, out=tlo)
    np.clip(thi, 0, np.array(dims) - 1, out=thi)

    pairs_cell: list[np.ndarray] = []
    pairs_tri: list[np.ndarray] = []
    for t in range(len(triangles)):
        xs = np.arange(tlo[t, 0], thi[t, 0] + 1)
        ys = np.arange(tlo[t, 1], thi[t, 1] + 1)
        zs = np.arange(tlo[t, 2], thi[t, 2] + 1)
        cx, cy, cz = np.meshgrid(xs, ys, zs, indexing="ij")
        flat = (cz.ravel() * ny + cy.ravel()) * nx + cx.ravel()
        pairs_cell.append(flat)
        pairs_tri.append(np.full(flat.shape, t, dtype=np.int32))
    cells = np.concatenate(pairs_cell)
    tris = np.concatenate(pairs_tri)
    order = np.argsort(cells, kind="stable")
    cells = cells[order]
    tris = tris[order]
    counts = np.bincount(cells, minlength=nx * ny * nz)
    starts = np.zeros(nx * ny * nz + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return UniformGrid(origin, cell, dims, starts, tris)


class CityScene:
    """Immutable collection of extruded buildings plus their spatial index."""

    def __init__(
        self,
        buildings: list[Building],
        anchor: tuple[float, float] | None = None,
        target_cell: float | None = None,
        _mesh: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    ):
        self.buildings = list(buildings)
        self.anchor = anchor
        if _mesh is not None:
            self.vertices, self.triangles, self.tri_building = _mesh
        else:
            vlist, tlist, blist = [], [], []
            offset = 0
            for b in self.buildings:
                v, t = extrude_footprint(b.rings, b.height)
                vlist.append(v)
                tlist.append(t + offset)
                blist.append(np.full(len(t), b.building_id, dtype=np.int32))
                offset += len(v)
            if vlist:
                self.vertices = np.concatenate(vlist, axis=0)
                self.triangles = np.concatenate(tlist, axis=0)
                self.tri_building = np.concatenate(blist)
            else:
                self.vertices = np.zeros((0, 3))
                self.triangles = np.zeros((0, 3), dtype=np.int32)
                self.tri_building = np.zeros(0, dtype=np.int32)
        self.grid = build_grid(self.vertices, self.triangles, target_cell)
        by_id = {}
        for b in self.buildings:
            if b.building_id in by_id:
                raise ValueError(f"duplicate building id {b.building_id}")
            by_id[b.building_id] = b
        self.by_id = by_id

    @classmethod
    def from_mesh(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        tri_building: np.ndarray,
        buildings: list[Building],
        anchor: tuple[float, float] | None = None,
        target_cell: float | None = None,
    ) -> "CityScene":
        """Wrap an already-triangulated mesh instead of extruding footprints."""
        mesh = (
            np.asarray(vertices, dtype=np.float64),
            np.asarray(triangles, dtype=np.int32),
            np.asarray(tri_building, dtype=np.int32),
        )
        return cls(buildings, anchor=anchor, target_cell=target_cell, _mesh=mesh)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class ScenarioOverlay:
    """A what-if edit: buildings to hide plus buildings to drop in."""

    removed: tuple[int, ...] = ()
    added: tuple[Building, ...] = ()


@dataclass
class Hit:
    t: float
    point: np.ndarray
    building_id: int


class SceneView:
    """Read-only composite of a base scene and an overlay.

    The base scene and its grid are never modified; removed buildings are
    masked out per triangle and added buildings get their own small grid so
    overlay churn stays cheap.
    """

    def __init__(self, base: CityScene, overlay: ScenarioOverlay | None = None):
        overlay = overlay or ScenarioOverlay()
        for bid in overlay.removed:
            if bid not in base.by_id:
                raise KeyError(f"cannot remove unknown building id {bid}")
        added_ids = [b.building_id for b in overlay.added]
        if len(set(added_ids)) != len(added_ids):
            raise ValueError("duplicate building ids in overlay additions")
        remaining = set(base.by_id) - set(overlay.removed)
        for bid in added_ids:
            if bid in remaining:
                raise ValueError(f"added building id {bid} collides with the base scene")
        self.base = base
        self.overlay = overlay
        self.removed = frozenset(overlay.removed)
        self._keep_mask = ~np.isin(base.tri_building, list(self.removed)) if self.removed else None
        if overlay.added:
            self._added = CityScene(list(overlay.added), anchor=base.anchor,
                                    target_cell=base.grid.cell)
        else:
            self._added = None
        self._corners: tuple | None = None

    @property
    def anchor(self):
        return self.base.anchor

    def corner_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Consolidated (a, b, c, building_id) triangle corners for this view."""
        if self._corners is None:
            tv = self.base.vertices[self.base.triangles]
            bb = self.base.tri_building
            if self._keep_mask is not None:
                tv = tv[self._keep_mask]
                bb = bb[self._keep_mask]
            if self._added is not None:
                av = self._added.vertices[self._added.triangles]
                tv = np.concatenate([tv, av], axis=0)
                bb = np.concatenate([bb, self._added.tri_building])
            self._corners = (
                np.ascontiguousarray(tv[:, 0]),
                np.ascontiguousarray(tv[:, 1]),
                np.ascontiguousarray(tv[:, 2]),
                bb.copy(),
            )
        return self._corners

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        a, b, c, _ = self.corner_arrays()
        if len(a) == 0:
            return np.zeros(3), np.zeros(3)
        stack = np.concatenate([a, b, c], axis=0)
        return stack.min(axis=0), stack.max(axis=0)

    def buildings(self) -> list[Building]:
        out = [b for b in self.base.buildings if b.building_id not in self.removed]
        if self._added is not None:
            out.extend(self._added.buildings)
        return out


def apply_overlay(scene: CityScene, overlay: ScenarioOverlay) -> SceneView:
    """Compose a scenario view; the base scene is left untouched."""
    return SceneView(scene, overlay)


def _mt_hits(origin, direction, a, b, c):
    """Moller-Trumbore for one ray against (K, 3) corner arrays; t or nan."""
    e1 = b - a
    e2 = c - a
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = origin - a
    u = np.einsum("ij,ij->i", tv, p) * inv
    q = np.cross(tv, e1)
    v = q @ direction * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    eps = 1e-9
    good = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps)
    return np.where(good, t, np.nan)


def _traverse(grid: UniformGrid, origin, direction):
    """Yield (flat_cell, t_exit) along the ray, Amanatides-Woo stepping."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    nx, ny, nz = grid.dims
    size = np.array([nx, ny, nz]) * grid.cell
    t0, t1 = 0.0, math.inf
    for ax in range(3):
        if abs(d[ax]) < 1e-15:
            if o[ax] < grid.origin[ax] or o[ax] > grid.origin[ax] + size[ax]:
                return
            continue
        ta = (grid.origin[ax] - o[ax]) / d[ax]
        tb = (grid.origin[ax] + size[ax] - o[ax]) / d[ax]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t0 > t1:
        return
    start = o + (t0 + 1e-12) * d
    idx = np.floor((start - grid.origin) / grid.cell).astype(np.int64)
    np.clip(idx, 0, np.array(grid.dims) - 1, out=idx)
    step = np.where(d > 0, 1, -1)
    t_delta = np.where(np.abs(d) > 1e-15, grid.cell / np.abs(d), math.inf)
    nxt = np.empty(3)
    for ax in range(3):
        if abs(d[ax]) < 1e-15:
            nxt[ax] = math.inf
        else:
            bound = grid.origin[ax] + (idx[ax] + (1 if d[ax] > 0 else 0)) * grid.cell
            nxt[ax] = (bound - o[ax]) / d[ax]
    while True:
        ax = int(np.argmin(nxt))
        t_exit = min(float(nxt[ax]), t1)
        yield grid.flat(int(idx[0]), int(idx[1]), int(idx[2])), t_exit
        if nxt[ax] > t1:
            return
        idx[ax] += step[ax]
        if idx[ax] < 0 or idx[ax] >= grid.dims[ax]:
            return
        nxt[ax] += t_delta[ax]


def _grid_hits(scene: CityScene, keep_mask, origin, direction, min_offset, max_hits):
    hits: list[tuple[float, int]] = []
    tested: set[int] = set()
    settled = 0.0  # hits with t <= settled can no longer be displaced
    for flat_cell, t_exit in _traverse(scene.grid, origin, direction):
        cand = scene.grid.tris_in(flat_cell)
        if len(cand):
            fresh = np.array([c for c in cand if c not in tested], dtype=np.int32)
            tested.update(int(c) for c in fresh)
            if keep_mask is not None and len(fresh):
                fresh = fresh[keep_mask[fresh]]
            if len(fresh):
                tv = scene.vertices[scene.triangles[fresh]]
                ts = _mt_hits(origin, direction, tv[:, 0], tv[:, 1], tv[:, 2])
                for k in np.flatnonzero(~np.isnan(ts)):
                    if ts[k] > min_offset:
                        hits.append((float(ts[k]), int(scene.tri_building[fresh[k]])))
        settled = t_exit
        if max_hits is not None:
            done = sorted(h for h in hits if h[0] <= settled)
            if len(done) >= max_hits:
                break
    return hits


def intersect_ray(
    view: SceneView | CityScene,
    origin,
    direction,
    min_offset: float = 0.0,
    max_hits: int | None = None,
) -> list[Hit]:
    """All ray-scene intersections beyond min_offset, nearest first.

    Duplicate intersections from triangles sharing an edge are collapsed.
    ``max_hits`` bounds the returned list and allows early exit from the
    grid traversal.
    """
    if isinstance(view, CityScene):
        view = SceneView(view)
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(direction)
    if n == 0:
        raise ValueError("ray direction must be nonzero")
    direction = direction / n

    raw = _grid_hits(view.base, view._keep_mask, origin, direction, min_offset, max_hits)
    if view._added is not None:
        raw += _grid_hits(view._added, None, origin, direction, min_offset, max_hits)
    raw.sort()
    hits: list[Hit] = []
    for t, bid in raw:
        if hits and bid == hits[-1].building_id and abs(t - hits[-1].t) < 1e-9:
            continue  # shared-edge double count
        hits.append(Hit(t=t, point=origin + t * direction, building_id=bid))
        if max_hits is not None and len(hits) == max_hits:
            break
    return hits
