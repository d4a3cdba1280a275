"""Sun positions, direction interpolation, and the hourly direction graph.

Conventions used everywhere downstream:

* Azimuth is degrees clockwise from true north; elevation is degrees above
  the horizon. Both are geometric (no atmospheric refraction).
* A direction's ``vector`` is the unit vector light travels along in the
  local east/north/up frame, so for a sun above the horizon the z component
  is negative.
* Times are minutes since 2000-01-01T00:00 UTC; naive datetimes are read as
  UTC. Positions come from the NOAA low-accuracy ephemeris, good to well
  under a tenth of a degree over the supported decades, which is far below
  the direction-binning resolution used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np

__all__ = [
    "SunDirection",
    "HourlyInterval",
    "Schedule",
    "DirectionBin",
    "GraphEdge",
    "DirectionGraph",
    "LinearityStats",
    "solar_angles",
    "light_vector",
    "solar_direction",
    "slerp",
    "interpolate_direction",
    "angle_between",
    "hourly_interval",
    "solar_interval_fn",
    "bin_direction",
    "build_direction_graph",
    "linearity_check",
    "minutes_since_epoch",
]

_D2R = math.pi / 180.0
_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


def minutes_since_epoch(when: datetime) -> float:
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    return (when - _EPOCH).total_seconds() / 60.0


def solar_angles(lat_deg: float, lon_deg: float, minutes_utc) -> tuple[np.ndarray, np.ndarray]:
    """Geometric solar (azimuth, elevation) in degrees, vectorized over time."""
    minutes_utc = np.asarray(minutes_utc, dtype=np.float64)
    jd = 2451544.5 + minutes_utc / 1440.0
    t = (jd - 2451545.0) / 36525.0
    l0 = np.remainder(280.46646 + t * (36000.76983 + 0.0003032 * t), 360.0)
    m = 357.52911 + t * (35999.05029 - 0.0001537 * t)
    ecc = 0.016708634 - t * (0.000042037 + 0.0000001267 * t)
    mr = m * _D2R
    c = (
        np.sin(mr) * (1.914602 - t * (0.004817 + 0.000014 * t))
        + np.sin(2 * mr) * (0.019993 - 0.000101 * t)
        + np.sin(3 * mr) * 0.000289
    )
    omega = (125.04 - 1934.136 * t) * _D2R
    app_long = (l0 + c - 0.00569 - 0.00478 * np.sin(omega)) * _D2R
    e0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0
    eps = (e0 + 0.00256 * np.cos(omega)) * _D2R
    decl = np.arcsin(np.sin(eps) * np.sin(app_long))
    y = np.tan(eps / 2.0) ** 2
    l0r = l0 * _D2R
    eot = 4.0 / _D2R * (
        y * np.sin(2 * l0r)
        - 2 * ecc * np.sin(mr)
        + 4 * ecc * y * np.sin(mr) * np.cos(2 * l0r)
        - 0.5 * y * y * np.sin(4 * l0r)
        - 1.25 * ecc * ecc * np.sin(2 * mr)
    )
    tst = np.remainder(np.remainder(minutes_utc, 1440.0) + eot + 4.0 * lon_deg, 1440.0)
    ha = tst / 4.0 - 180.0
    ha = np.where(ha < -180.0, ha + 360.0, ha) * _D2R
    latr = lat_deg * _D2R
    cos_zen = np.clip(np.sin(latr) * np.sin(decl) + np.cos(latr) * np.cos(decl) * np.cos(ha), -1.0, 1.0)
    zen = np.arccos(cos_zen)
    el = 90.0 - zen / _D2R
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_az = (np.sin(latr) * cos_zen - np.sin(decl)) / (np.cos(latr) * np.sin(zen))
    az = np.arccos(np.clip(cos_az, -1.0, 1.0)) / _D2R
    az = np.where(ha > 0, np.remainder(az + 180.0, 360.0), np.remainder(540.0 - az, 360.0))
    return az, el


def light_vector(azimuth_deg, elevation_deg) -> np.ndarray:
    """Unit travel vector(s) of sunlight for given sky angles."""
    azr = np.asarray(azimuth_deg, dtype=np.float64) * _D2R
    elr = np.asarray(elevation_deg, dtype=np.float64) * _D2R
    return np.stack(
        [-np.sin(azr) * np.cos(elr), -np.cos(azr) * np.cos(elr), -np.sin(elr)],
        axis=-1,
    )


@dataclass(frozen=True)
class SunDirection:
    azimuth_deg: float
    elevation_deg: float

    @property
    def vector(self) -> np.ndarray:
        return light_vector(self.azimuth_deg, self.elevation_deg)

    @classmethod
    def from_vector(cls, v) -> "SunDirection":
        v = np.asarray(v, dtype=np.float64)
        v = v / np.linalg.norm(v)
        el = math.degrees(math.asin(max(-1.0, min(1.0, -v[2]))))
        az = math.degrees(math.atan2(-v[0], -v[1])) % 360.0
        return cls(az, el)


def solar_direction(lat_deg: float, lon_deg: float, when: datetime) -> SunDirection:
    az, el = solar_angles(lat_deg, lon_deg, minutes_since_epoch(when))
    return SunDirection(float(az), float(el))


def slerp(a: np.ndarray, b: np.ndarray, fraction) -> np.ndarray:
    """Spherical interpolation between unit vectors, broadcast over fraction."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(fraction, dtype=np.float64)[..., None]
    d = np.clip(np.sum(a * b, axis=-1, keepdims=True), -1.0, 1.0)
    th = np.arccos(d)
    s = np.sin(th)
    small = s < 1e-9
    w1 = np.where(small, 1.0 - f, np.sin((1.0 - f) * th) / np.where(small, 1.0, s))
    w2 = np.where(small, f, np.sin(f * th) / np.where(small, 1.0, s))
    v = w1 * a + w2 * b
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def interpolate_direction(d_start: SunDirection, d_end: SunDirection, fraction: float) -> SunDirection:
    return SunDirection.from_vector(slerp(d_start.vector, d_end.vector, float(fraction))[0])


def angle_between(d_start: SunDirection, d_end: SunDirection) -> float:
    """Separation angle in degrees."""
    d = float(np.clip(np.dot(d_start.vector, d_end.vector), -1.0, 1.0))
    return math.degrees(math.acos(d))


@dataclass(frozen=True, eq=False)
class HourlyInterval:
    """One accumulation interval: a swing from d_start to d_end over n minutes.

    ``lit`` marks which of the n minutes the sun is up; the two directions
    belong to the first and last lit minutes, so partially dark hours are
    clipped to their sunlit span. Minute i of the span sits at fraction
    (i - first) / (last - first) of the swing.
    """

    d_start: SunDirection
    d_end: SunDirection
    n: int
    lit: np.ndarray
    start_utc: datetime | None = None

    def __post_init__(self):
        lit = np.asarray(self.lit, dtype=bool)
        if lit.shape != (self.n,):
            raise ValueError("lit mask length must equal n")
        if not lit.any():
            raise ValueError("interval must contain at least one lit minute")
        object.__setattr__(self, "lit", lit)
        if min(self.d_start.elevation_deg, self.d_end.elevation_deg) <= 0:
            raise ValueError("interval endpoint directions must be above the horizon")

    @property
    def theta_deg(self) -> float:
        return angle_between(self.d_start, self.d_end)

    @property
    def span(self) -> tuple[int, int]:
        idx = np.flatnonzero(self.lit)
        return int(idx[0]), int(idx[-1])

    def fractions(self) -> np.ndarray:
        """Swing fraction of every slice; slices outside the lit span clamp."""
        i0, i1 = self.span
        if i1 == i0:
            return np.zeros(self.n)
        return np.clip((np.arange(self.n) - i0) / (i1 - i0), 0.0, 1.0)


def hourly_interval(lat_deg: float, lon_deg: float, start_utc: datetime, n: int = 60) -> HourlyInterval | None:
    """Build the interval starting at start_utc, or None if fully dark."""
    base = minutes_since_epoch(start_utc)
    az, el = solar_angles(lat_deg, lon_deg, base + np.arange(n))
    lit = el > 0.0
    if not lit.any():
        return None
    i0 = int(np.argmax(lit))
    i1 = n - 1 - int(np.argmax(lit[::-1]))
    return HourlyInterval(
        d_start=SunDirection(float(az[i0]), float(el[i0])),
        d_end=SunDirection(float(az[i1]), float(el[i1])),
        n=n,
        lit=lit,
        start_utc=start_utc,
    )


def solar_interval_fn(lat_deg: float, lon_deg: float, n: int = 60):
    """Interval factory bound to a site, as build_direction_graph expects."""

    def fn(start_utc: datetime) -> HourlyInterval | None:
        return hourly_interval(lat_deg, lon_deg, start_utc, n)

    return fn


@dataclass(frozen=True)
class Schedule:
    """A daily time window repeated over consecutive days.

    ``start_minute`` is minutes after local midnight; ``utc_offset_minutes``
    converts the local wall clock to UTC (east positive).
    """

    start_date: date
    start_minute: int
    days: int
    hours_per_day: int
    utc_offset_minutes: int = 0

    def __post_init__(self):
        if self.days < 1 or self.hours_per_day < 1:
            raise ValueError("schedule needs at least one day and one hour")
        if not 0 <= self.start_minute < 1440:
            raise ValueError("start_minute must be within a day")

    def interval_starts(self) -> list[tuple[int, datetime]]:
        """(day_index, interval start in UTC) for every scheduled hour."""
        out = []
        day0 = datetime(self.start_date.year, self.start_date.month, self.start_date.day, tzinfo=timezone.utc)
        for d in range(self.days):
            local = day0 + timedelta(days=d, minutes=self.start_minute)
            utc = local - timedelta(minutes=self.utc_offset_minutes)
            for h in range(self.hours_per_day):
                out.append((d, utc + timedelta(hours=h)))
        return out


@dataclass(frozen=True)
class DirectionBin:
    """Equal-angle sky cell; directions within ``bound_deg`` of each other
    in azimuth and elevation can share one."""

    az_index: int
    el_index: int
    bound_deg: float

    def center(self) -> SunDirection:
        az = ((self.az_index + 0.5) * self.bound_deg) % 360.0
        el = min((self.el_index + 0.5) * self.bound_deg, 90.0)
        return SunDirection(az, el)


def bin_direction(d: SunDirection, bound_deg: float) -> DirectionBin:
    if d.elevation_deg <= 0:
        raise ValueError("cannot bin a below-horizon direction")
    if bound_deg <= 0:
        raise ValueError("bin bound must be positive")
    return DirectionBin(
        az_index=int(math.floor((d.azimuth_deg % 360.0) / bound_deg)),
        el_index=int(math.floor(d.elevation_deg / bound_deg)),
        bound_deg=bound_deg,
    )


@dataclass
class GraphEdge:
    edge_id: int
    start_bin: DirectionBin
    end_bin: DirectionBin
    interval: HourlyInterval  # representative swing between bin centers
    weight: int


@dataclass
class DirectionGraph:
    """Deduplicated hourly swings for a whole schedule.

    Every scheduled hour maps to an edge keyed by its (start bin, end bin)
    pair; hours from different days that land on the same edge share one
    representative interval and bump its weight. ``day_paths`` keeps each
    day's chronological edge sequence for run stitching.
    """

    bound_deg: float
    edges: list[GraphEdge]
    day_paths: list[list[int]]
    dropped: int
    schedule: Schedule

    @property
    def total_weight(self) -> int:
        return sum(e.weight for e in self.edges)


def build_direction_graph(schedule: Schedule, bound_deg: float, interval_fn) -> DirectionGraph:
    """Collapse a schedule's hours into the direction graph.

    ``interval_fn(start_utc)`` returns the hour's HourlyInterval or None for
    fully dark hours, which are dropped. The representative interval of an
    edge swings between the two bin centers and reuses the lit mask of the
    first hour that produced the edge.
    """
    edges: list[GraphEdge] = []
    by_key: dict[tuple[DirectionBin, DirectionBin], int] = {}
    day_paths: list[list[int]] = [[] for _ in range(schedule.days)]
    dropped = 0
    for day, start in schedule.interval_starts():
        iv = interval_fn(start)
        if iv is None:
            dropped += 1
            continue
        key = (bin_direction(iv.d_start, bound_deg), bin_direction(iv.d_end, bound_deg))
        eid = by_key.get(key)
        if eid is None:
            eid = len(edges)
            rep = HourlyInterval(
                d_start=key[0].center(),
                d_end=key[1].center(),
                n=iv.n,
                lit=iv.lit,
                start_utc=None,
            )
            edges.append(GraphEdge(eid, key[0], key[1], rep, 0))
            by_key[key] = eid
        edges[eid].weight += 1
        day_paths[day].append(eid)
    return DirectionGraph(bound_deg, edges, day_paths, dropped, schedule)


@dataclass(frozen=True)
class LinearityStats:
    mean: float
    std: float
    median: float
    samples: int


def linearity_check(
    lat_deg: float,
    lon_deg: float,
    interval_minutes: int,
    samples: int = 1000,
    seed: int = 7,
    year: int = 2017,
) -> LinearityStats:
    """How well one swing approximates true sun motion over an interval.

    Draws random fully-lit intervals of the given length across a year and
    reports statistics of the per-interval mean cosine between the true
    minute directions and the endpoint interpolation. Values near 1 justify
    replacing per-minute sun positions with interpolated swings.
    """
    rng = np.random.default_rng(seed)
    year0 = minutes_since_epoch(datetime(year, 1, 1))
    ndays = (date(year + 1, 1, 1) - date(year, 1, 1)).days
    means = []
    attempts = 0
    while len(means) < samples:
        attempts += 1
        if attempts > samples * 200:
            raise RuntimeError("site too dark to collect linearity samples")
        start = year0 + float(rng.integers(0, ndays)) * 1440.0 + float(rng.integers(0, 1440 - interval_minutes))
        tt = start + np.arange(interval_minutes)
        az, el = solar_angles(lat_deg, lon_deg, tt)
        if el.min() <= 0:
            continue
        v = light_vector(az, el)
        f = np.arange(interval_minutes) / (interval_minutes - 1)
        interp = slerp(v[0], v[-1], f)
        cos = np.clip(np.sum(interp * v, axis=-1), -1.0, 1.0)
        means.append(float(cos.mean()))
    arr = np.asarray(means)
    return LinearityStats(float(arr.mean()), float(arr.std()), float(np.median(arr)), samples)
