"""Scene loading, raster export, and engine configuration.

GeoJSON footprints arrive in WGS84 and are flattened into the local frame
with an equirectangular projection around an anchor point; at city extents
the distortion is centimeters, far below footprint accuracy. OBJ input is
taken as-is in local meters for scenes that were already modeled flat.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
from dataclasses import dataclass, fields

import numpy as np
from PIL import Image

from .raster import GroundRaster
from .scene import Building, CityScene

log = logging.getLogger(__name__)

__all__ = [
    "EARTH_RADIUS_M",
    "EngineConfig",
    "lonlat_to_local",
    "local_to_lonlat",
    "load_geojson",
    "load_obj",
    "load_scene",
    "export_asc",
    "load_asc",
    "colormap_rgba",
    "render_png_bytes",
    "export_png",
    "load_config",
]

EARTH_RADIUS_M = 6378137.0


def lonlat_to_local(lon, lat, anchor_lat: float, anchor_lon: float):
    """WGS84 degrees to local meters, x east, y north of the anchor."""
    k = math.pi / 180.0 * EARTH_RADIUS_M
    x = (np.asarray(lon, dtype=np.float64) - anchor_lon) * k * math.cos(math.radians(anchor_lat))
    y = (np.asarray(lat, dtype=np.float64) - anchor_lat) * k
    return x, y


def local_to_lonlat(x, y, anchor_lat: float, anchor_lon: float):
    k = math.pi / 180.0 * EARTH_RADIUS_M
    lon = np.asarray(x, dtype=np.float64) / (k * math.cos(math.radians(anchor_lat))) + anchor_lon
    lat = np.asarray(y, dtype=np.float64) / k + anchor_lat
    return lon, lat


def _feature_polygons(geom) -> list[list[list[list[float]]]]:
    if geom["type"] == "Polygon":
        return [geom["coordinates"]]
    if geom["type"] == "MultiPolygon":
        return list(geom["coordinates"])
    return []


def load_geojson(source, anchor: tuple[float, float] | None = None, target_cell: float | None = None) -> CityScene:
    """Build a scene from a FeatureCollection of footprint polygons.

    Each feature needs a positive numeric ``height`` property; features
    without one are skipped with a warning rather than failing the load.
    ``anchor`` (lat, lon) fixes the local origin; by default the mean of all
    footprint vertices is used. MultiPolygon features become one building
    per part, sharing the feature's name.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = source
    feats = data.get("features", [])

    if anchor is None:
        lons, lats = [], []
        for f in feats:
            for poly in _feature_polygons(f.get("geometry") or {}):
                for ring in poly:
                    for pt in ring:
                        lons.append(pt[0])
                        lats.append(pt[1])
        if not lons:
            raise ValueError("no polygon features in GeoJSON input")
        anchor = (float(np.mean(lats)), float(np.mean(lons)))

    buildings: list[Building] = []
    next_id = 1
    used: set[int] = set()
    for idx, f in enumerate(feats):
        props = f.get("properties") or {}
        h = props.get("height")
        if not isinstance(h, (int, float)) or isinstance(h, bool) or not math.isfinite(h) or h <= 0:
            log.warning("skipping feature %s: missing or invalid height %r", props.get("id", idx), h)
            continue
        polys = _feature_polygons(f.get("geometry") or {})
        if not polys:
            log.warning("skipping feature %s: unsupported geometry", props.get("id", idx))
            continue
        raw_id = props.get("id", f.get("id"))
        name = props.get("name")
        for part, poly in enumerate(polys):
            if isinstance(raw_id, int) and len(polys) == 1 and raw_id not in used:
                bid = raw_id
            else:
                while next_id in used:
                    next_id += 1
                bid = next_id
            used.add(bid)
            rings = []
            for ring in poly:
                pts = np.asarray(ring, dtype=np.float64)
                x, y = lonlat_to_local(pts[:, 0], pts[:, 1], anchor[0], anchor[1])
                rings.append(np.stack([x, y], axis=1))
            try:
                buildings.append(Building(building_id=bid, height=float(h), rings=rings, name=name))
            except ValueError as exc:
                used.discard(bid)
                log.warning("skipping feature %s part %d: %s", raw_id if raw_id is not None else idx, part, exc)
    return CityScene(buildings, anchor=anchor, target_cell=target_cell)


def load_obj(path, anchor: tuple[float, float] | None = None, target_cell: float | None = None) -> CityScene:
    """Load a pre-triangulated local-meter mesh, one building per o/g group.

    Polygonal faces are fanned into triangles. Display footprints are the
    convex hull of each group's vertices, which is only used for drawing.
    """
    import shapely

    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    tri_group: list[int] = []
    groups: dict[int, str | None] = {1: None}
    group_verts: dict[int, set[int]] = {}
    current = 1
    current_faces = 0
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] in ("o", "g"):
                name = " ".join(parts[1:]) or None
                if current_faces:
                    current = max(groups) + 1
                    current_faces = 0
                groups[current] = name
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[k], idx[k + 1]))
                    tri_group.append(current)
                current_faces += 1
                group_verts.setdefault(current, set()).update(idx)
    if not tris:
        raise ValueError(f"no faces in {path}")
    v = np.asarray(verts, dtype=np.float64)
    t = np.asarray(tris, dtype=np.int32)
    gid = np.asarray(tri_group, dtype=np.int32)
    buildings = []
    for g, vset in group_verts.items():
        pts = v[sorted(vset)][:, :2]
        hull = shapely.MultiPoint(pts).convex_hull
        ring = np.asarray(hull.exterior.coords)[:-1] if hull.geom_type == "Polygon" else pts
        buildings.append(
            Building(building_id=int(g), height=float(v[sorted(vset)][:, 2].max()), rings=[ring], name=groups.get(g))
        )
    return CityScene.from_mesh(v, t, gid, buildings, anchor=anchor, target_cell=target_cell)


def export_asc(path, raster: GroundRaster, values: np.ndarray, nodata: float = -9999.0) -> None:
    """Write an ESRI ASCII grid; rows flip to the format's top-down order."""
    if values.shape != raster.shape:
        raise ValueError("values shape does not match raster")
    with open(path, "w") as fh:
        fh.write(f"ncols {raster.width}\n")
        fh.write(f"nrows {raster.height}\n")
        fh.write(f"xllcorner {raster.x0:.6f}\n")
        fh.write(f"yllcorner {raster.y0:.6f}\n")
        fh.write(f"cellsize {raster.cell:.9f}\n")
        fh.write(f"NODATA_value {nodata}\n")
        np.savetxt(fh, np.asarray(values, dtype=np.float64)[::-1], fmt="%.6g")


def load_asc(path) -> tuple[GroundRaster, np.ndarray]:
    header: dict[str, float] = {}
    with open(path) as fh:
        pos = fh.tell()
        for _ in range(6):
            pos = fh.tell()
            parts = fh.readline().split()
            if len(parts) == 2 and parts[0].lower() in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
            ):
                header[parts[0].lower()] = float(parts[1])
            else:
                fh.seek(pos)
                break
        values = np.loadtxt(fh, ndmin=2)[::-1].copy()
    raster = GroundRaster(
        x0=header["xllcorner"],
        y0=header["yllcorner"],
        cell=header["cellsize"],
        width=int(header["ncols"]),
        height=int(header["nrows"]),
    )
    if values.shape != raster.shape:
        raise ValueError("grid body does not match header dimensions")
    return raster, values


_SHADE_STOPS = np.array(
    [[255, 255, 255], [190, 210, 235], [110, 150, 205], [45, 80, 150], [15, 25, 70]], dtype=np.float64
)
_IMPACT_STOPS = np.array(
    [[30, 60, 160], [120, 160, 220], [245, 245, 245], [230, 140, 110], [170, 30, 40]], dtype=np.float64
)


def colormap_rgba(values: np.ndarray, vmin: float, vmax: float, colormap: str = "shade") -> np.ndarray:
    """Map values to (H, W, 4) uint8.

    ``shade`` is sequential with transparency fading in from zero; ``impact``
    is diverging around the midpoint of [vmin, vmax], transparent at center.
    """
    v = np.asarray(values, dtype=np.float64)
    if vmax <= vmin:
        vmax = vmin + 1.0
    t = np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0)
    if colormap == "shade":
        stops = _SHADE_STOPS
        alpha = np.clip(t * 4.0, 0.0, 1.0) * 220.0
    elif colormap == "impact":
        stops = _IMPACT_STOPS
        alpha = np.clip(np.abs(t - 0.5) * 5.0, 0.0, 1.0) * 220.0
    else:
        raise ValueError(f"unknown colormap {colormap!r}")
    pos = t * (len(stops) - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(stops) - 1)
    frac = (pos - lo)[..., None]
    rgb = stops[lo] * (1.0 - frac) + stops[hi] * frac
    out = np.empty(v.shape + (4,), dtype=np.uint8)
    out[..., :3] = np.round(rgb)
    out[..., 3] = np.round(alpha)
    return out


def render_png_bytes(values: np.ndarray, vmin: float, vmax: float, colormap: str = "shade") -> bytes:
    """PNG-encoded colormapped raster, north at the top."""
    rgba = colormap_rgba(values, vmin, vmax, colormap)[::-1]
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def export_png(path, values: np.ndarray, vmin: float, vmax: float, colormap: str = "shade") -> None:
    with open(path, "wb") as fh:
        fh.write(render_png_bytes(values, vmin, vmax, colormap))


@dataclass
class EngineConfig:
    """Site and engine defaults, loadable from JSON via SHADOW_CONFIG."""

    scene_path: str | None = None
    anchor_lat: float | None = None
    anchor_lon: float | None = None
    utc_offset_minutes: int = 0
    bin_bound_degrees: float = 5.0
    slices_per_hour: int = 60
    default_resolution: int = 512
    bias_m: float = 0.2
    source_levels: int = 3


def load_config(path: str | None = None) -> EngineConfig:
    """Read config from ``path``, else $SHADOW_CONFIG, else defaults."""
    if path is None:
        path = os.environ.get("SHADOW_CONFIG")
    if path is None:
        return EngineConfig()
    with open(path) as fh:
        raw = json.load(fh)
    known = {f.name for f in fields(EngineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return EngineConfig(**raw)


def load_scene(config: EngineConfig) -> CityScene:
    """Load the configured scene file, anchoring it for solar queries."""
    if not config.scene_path:
        raise ValueError("config has no scene_path")
    anchor = None
    if config.anchor_lat is not None and config.anchor_lon is not None:
        anchor = (config.anchor_lat, config.anchor_lon)
    path = str(config.scene_path)
    if path.endswith(".obj"):
        if anchor is None:
            raise ValueError("OBJ scenes need anchor_lat/anchor_lon in config")
        return load_obj(path, anchor=anchor)
    return load_geojson(path, anchor=anchor)
