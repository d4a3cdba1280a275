"""Request and response bodies of the HTTP API."""

from __future__ import annotations

from datetime import date, time
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from ..accumulate import MONTHLY_WEIGHTS_SEASONAL


class BuildingInfo(BaseModel):
    building_id: int
    name: str | None = None
    height: float
    footprint: list[list[list[float]]]  # rings of [x, y] in local meters


class SceneInfo(BaseModel):
    anchor: list[float] | None  # [lat, lon]
    bbox: list[float]  # [x0, y0, x1, y1]
    building_count: int
    buildings: list[BuildingInfo]


class AddedBuilding(BaseModel):
    footprint: list[list[float]] = Field(min_length=3)  # outer ring, local meters
    height: float = Field(gt=0)
    name: str | None = None


class ScenarioCreate(BaseModel):
    removed: list[int] = []
    added: list[AddedBuilding] = []


class ScenarioInfo(BaseModel):
    scenario_id: str
    removed: list[int]
    added_count: int


class ScheduleSpec(BaseModel):
    start_date: date
    start_time: time = time(8, 0)
    days: int = Field(default=1, ge=1, le=366)
    hours_per_day: int = Field(default=6, ge=1, le=16)

    @property
    def start_minute(self) -> int:
        return self.start_time.hour * 60 + self.start_time.minute


class JobCreate(BaseModel):
    schedule: ScheduleSpec
    method: Literal["accrual", "inverse", "brute_map", "brute_ray"] = "accrual"
    type: Literal["gross", "continuous"] = "gross"
    bbox: list[float] | None = Field(default=None, min_length=4, max_length=4)
    resolution: int | None = Field(default=None, ge=16, le=2048)
    scenario_id: str | None = None


class JobCreated(BaseModel):
    job_id: str


class RasterPayload(BaseModel):
    png_base64: str
    width: int
    height: int
    bbox: list[float]  # [x0, y0, x1, y1] local meters
    cell: float
    value_range: list[float]  # [vmin, vmax] of the colormap domain
    units: str
    preliminary: bool = False


class JobStatus(BaseModel):
    job_id: str
    state: Literal["queued", "running", "done", "failed"]
    progress: float
    error: str | None = None
    raster: RasterPayload | None = None
    stats: dict[str, float] | None = None


class ImpactRequest(BaseModel):
    base_job: str
    scenario_job: str


class ImpactResult(BaseModel):
    raster: RasterPayload  # signed minutes/day, scenario minus base
    stats: dict[str, float]


class ScoreRequest(BaseModel):
    year: int = Field(ge=1950, le=2099)
    monthly_weights: list[float] = Field(default=list(MONTHLY_WEIGHTS_SEASONAL), min_length=12, max_length=12)
    start_time: time = time(8, 0)
    hours_per_day: int = Field(default=8, ge=1, le=16)
    bbox: list[float] | None = Field(default=None, min_length=4, max_length=4)
    resolution: int | None = Field(default=None, ge=16, le=1024)
    method: Literal["accrual", "inverse"] = "accrual"
    scenario_id: str | None = None


class ScoreResult(BaseModel):
    score: float
    monthly_hours: list[float]
    raster: RasterPayload


class ContributionRequest(BaseModel):
    region: list[list[float]] = Field(min_length=3)  # polygon ring, local meters
    schedule: ScheduleSpec
    scenario_id: str | None = None
    source_levels: int = Field(default=3, ge=1, le=8)
    resolution: int = Field(default=192, ge=16, le=1024)

    @field_validator("region")
    @classmethod
    def _points_2d(cls, v):
        if any(len(p) != 2 for p in v):
            raise ValueError("region points must be [x, y] pairs")
        return v


class ContributionEntryOut(BaseModel):
    building_id: int
    name: str | None
    area_hours: float


class ContributionResult(BaseModel):
    entries: list[ContributionEntryOut]
    region_area_m2: float
