"""Regular pixel grids on the ground plane z = 0.

Pixels are squares of side ``cell``; row index increases with y (north), so
array row 0 is the southern edge. Exporters that need image row order flip
at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely

__all__ = ["GroundRaster", "region_mask"]


@dataclass(frozen=True)
class GroundRaster:
    x0: float
    y0: float
    cell: float
    width: int
    height: int

    @classmethod
    def from_bbox(cls, lo, hi, resolution: int, pad_frac: float = 0.0) -> "GroundRaster":
        """Cover [lo, hi] (2D or 3D corner points) with square pixels.

        The longer side gets ``resolution`` pixels; the shorter side keeps the
        same pixel size, so pixel footprints never stretch.
        """
        x0, y0 = float(lo[0]), float(lo[1])
        x1, y1 = float(hi[0]), float(hi[1])
        if pad_frac:
            px = (x1 - x0) * pad_frac
            py = (y1 - y0) * pad_frac
            x0, x1, y0, y1 = x0 - px, x1 + px, y0 - py, y1 + py
        sx = max(x1 - x0, 1e-9)
        sy = max(y1 - y0, 1e-9)
        cell = max(sx, sy) / resolution
        return cls(x0, y0, cell, max(1, math.ceil(sx / cell - 1e-9)), max(1, math.ceil(sy / cell - 1e-9)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def pixel_area(self) -> float:
        return self.cell * self.cell

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x0 + self.width * self.cell, self.y0 + self.height * self.cell)

    def center_axes(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x0 + (np.arange(self.width) + 0.5) * self.cell
        ys = self.y0 + (np.arange(self.height) + 0.5) * self.cell
        return xs, ys

    def points3d(self) -> np.ndarray:
        """Pixel centers as (height * width, 3) points on z = 0, row-major."""
        xs, ys = self.center_axes()
        gx, gy = np.meshgrid(xs, ys)
        pts = np.zeros((self.height * self.width, 3))
        pts[:, 0] = gx.ravel()
        pts[:, 1] = gy.ravel()
        return pts


def region_mask(raster: GroundRaster, polygon) -> np.ndarray:
    """Boolean (height, width) mask of pixel centers inside a polygon.

    ``polygon`` is a shapely geometry or an (N, 2) ring of vertices.
    """
    if not isinstance(polygon, shapely.Geometry):
        polygon = shapely.Polygon(np.asarray(polygon, dtype=np.float64))
    xs, ys = raster.center_axes()
    gx, gy = np.meshgrid(xs, ys)
    return shapely.contains_xy(polygon, gx, gy)
