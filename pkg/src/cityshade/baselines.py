"""Reference shadow methods that handle one sun direction at a time.

These share the exact rasterization kernel and ray engine with the batched
builders, so timing comparisons isolate the thing that actually differs:
whether projection and rasterization are amortized across a whole swing or
redone per direction.
"""

from __future__ import annotations

import numpy as np

from .accrual import DEFAULT_BIAS_M, ShadowPlane, _splat_instances, build_shadow_plane
from .rays import directional_any_hit
from .solar import HourlyInterval, SunDirection

__all__ = [
    "plane_for_direction",
    "build_directional_depth_map",
    "query_directional",
    "shadow_mask_map",
    "shadow_mask_ray",
]


def plane_for_direction(view, direction, raster=None, resolution: int = 1024) -> ShadowPlane:
    """A plane perpendicular to a single direction, sized like the swing case."""
    d = SunDirection.from_vector(direction)
    still = HourlyInterval(d, d, n=2, lit=np.array([True, True]))
    return build_shadow_plane(view, still, raster=raster, resolution=resolution)


def build_directional_depth_map(
    view, direction, plane: ShadowPlane, cull_back: bool = True
) -> np.ndarray:
    """Classic farthest-surface depth map for one direction on a given plane.

    Stored values are travel distances along ``direction``, directly
    comparable with swing slices built on the same plane.
    """
    direction = np.asarray(direction, dtype=np.float64)
    depth = np.zeros((1, plane.height, plane.width), dtype=np.float32)
    a, b, c, _ = view.corner_arrays()
    if len(a) == 0:
        return depth[0]
    cosg = -float(direction @ plane.normal)
    if cosg <= 1e-9:
        raise ValueError("direction does not face the plane")
    ax, ay, ah = plane.land(a, direction)
    bx, by, bh = plane.land(b, direction)
    cx, cy, ch = plane.land(c, direction)
    zero = np.zeros(len(ax), dtype=np.int32)
    _splat_instances(
        depth, zero, ax, ay, ah / cosg, bx, by, bh / cosg, cx, cy, ch / cosg, cull_back=cull_back
    )
    return depth[0]


def query_directional(
    depth: np.ndarray,
    plane: ShadowPlane,
    direction,
    points,
    bias: float = DEFAULT_BIAS_M,
) -> np.ndarray:
    """Shadow test of points against a single-direction depth map."""
    direction = np.asarray(direction, dtype=np.float64)
    cosg = -float(direction @ plane.normal)
    tx, ty, h = plane.land(points, direction)
    ix = np.floor(tx).astype(np.int64)
    iy = np.floor(ty).astype(np.int64)
    ok = (ix >= 0) & (ix < plane.width) & (iy >= 0) & (iy < plane.height)
    stored = depth[np.clip(iy, 0, plane.height - 1), np.clip(ix, 0, plane.width - 1)]
    return ok & (h / cosg + bias < stored)


def shadow_mask_map(
    view,
    direction,
    raster,
    resolution: int = 1024,
    bias: float = DEFAULT_BIAS_M,
    plane: ShadowPlane | None = None,
    points: np.ndarray | None = None,
) -> np.ndarray:
    """(height, width) ground shadow mask via a fresh per-direction depth map.

    ``points`` lets repeated callers reuse one ``raster.points3d()`` array.
    """
    if plane is None:
        plane = plane_for_direction(view, direction, raster=raster, resolution=resolution)
    if points is None:
        points = raster.points3d()
    depth = build_directional_depth_map(view, direction, plane)
    flat = query_directional(depth, plane, direction, points, bias)
    return flat.reshape(raster.shape)


def shadow_mask_ray(
    view,
    direction,
    raster,
    min_offset: float = 1e-6,
    points: np.ndarray | None = None,
) -> np.ndarray:
    """(height, width) ground shadow mask by casting one ray per pixel."""
    if points is None:
        points = raster.points3d()
    flat = directional_any_hit(view.corner_arrays(), direction, points, min_offset)
    return flat.reshape(raster.shape)
