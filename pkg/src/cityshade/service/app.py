"""FastAPI application wiring the engine to the HTTP contract."""

from __future__ import annotations

import base64
import hashlib
import json
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from ..accumulate import (
    AccumulationResult,
    accumulate,
    contribution,
    impact_diff,
    shadow_area,
    shadow_score,
)
from ..formats import EngineConfig, load_config, load_scene, render_png_bytes
from ..raster import GroundRaster
from ..scene import Building, CityScene, ScenarioOverlay, SceneView
from ..solar import Schedule
from . import schemas
from .jobs import JobStore


def _raster_payload(raster, values, vmin, vmax, units, colormap, preliminary=False) -> schemas.RasterPayload:
    png = render_png_bytes(np.asarray(values, dtype=np.float64), vmin, vmax, colormap)
    return schemas.RasterPayload(
        png_base64=base64.b64encode(png).decode("ascii"),
        width=raster.width,
        height=raster.height,
        bbox=list(raster.extent),
        cell=raster.cell,
        value_range=[vmin, vmax],
        units=units,
        preliminary=preliminary,
    )


def _result_stats(res: AccumulationResult, values: np.ndarray) -> dict[str, float]:
    return {
        "mean": float(values.mean()) if values.size else 0.0,
        "max": float(values.max()) if values.size else 0.0,
        "shadow_area_m2": shadow_area(res),
        "graph_edges": float(res.graph_edges or 0),
        "dropped_intervals": float(res.dropped_intervals),
        "degenerate_rays": float(res.degenerate_rays),
    }


def create_app(config: EngineConfig | None = None, scene: CityScene | None = None) -> FastAPI:
    config = config or load_config()
    if scene is None:
        if config.scene_path:
            scene = load_scene(config)
        else:
            from ..demo import demo_block

            scene = demo_block()
    app = FastAPI(title="cityshade", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    base_view = SceneView(scene)
    views: dict[str | None, SceneView] = {None: base_view}
    overlays: dict[str, ScenarioOverlay] = {}
    jobs = JobStore(workers=2)
    app.state.scene = scene
    app.state.config = config
    app.state.jobs = jobs

    lo, hi = scene.bbox
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1.0))

    def default_bbox() -> list[float]:
        # leave room around the footprints for shadows to land
        pad = 0.25 * span
        return [float(lo[0]) - pad, float(lo[1]) - pad, float(hi[0]) + pad, float(hi[1]) + pad]

    def raster_for(bbox, resolution) -> GroundRaster:
        bbox = bbox or default_bbox()
        res = resolution or config.default_resolution
        return GroundRaster.from_bbox(bbox[:2], bbox[2:], res)

    def view_for(scenario_id: str | None) -> SceneView:
        if scenario_id is None:
            return base_view
        view = views.get(scenario_id)
        if view is None:
            raise HTTPException(404, f"unknown scenario {scenario_id}")
        return view

    @app.get("/api/scene", response_model=schemas.SceneInfo)
    def get_scene():
        infos = [
            schemas.BuildingInfo(
                building_id=b.building_id,
                name=b.name,
                height=b.height,
                footprint=[np.asarray(r, dtype=float).tolist() for r in b.rings],
            )
            for b in scene.buildings
        ]
        return schemas.SceneInfo(
            anchor=list(scene.anchor) if scene.anchor else None,
            bbox=[float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])],
            building_count=len(infos),
            buildings=infos,
        )

    @app.post("/api/scenarios", response_model=schemas.ScenarioInfo)
    def post_scenario(req: schemas.ScenarioCreate):
        digest = hashlib.sha1(json.dumps(req.model_dump(), sort_keys=True).encode()).hexdigest()[:12]
        if digest not in overlays:
            taken = set(scene.by_id)
            next_id = max(taken, default=0) + 1
            added = []
            for ab in req.added:
                added.append(
                    Building(
                        building_id=next_id,
                        height=ab.height,
                        rings=[np.asarray(ab.footprint, dtype=np.float64)],
                        name=ab.name,
                    )
                )
                next_id += 1
            overlay = ScenarioOverlay(removed=tuple(req.removed), added=tuple(added))
            try:
                views[digest] = SceneView(scene, overlay)
            except (KeyError, ValueError) as exc:
                raise HTTPException(422, str(exc))
            overlays[digest] = overlay
        ov = overlays[digest]
        return schemas.ScenarioInfo(scenario_id=digest, removed=list(ov.removed), added_count=len(ov.added))

    def _schedule_of(spec: schemas.ScheduleSpec) -> Schedule:
        return Schedule(
            start_date=spec.start_date,
            start_minute=spec.start_minute,
            days=spec.days,
            hours_per_day=spec.hours_per_day,
            utc_offset_minutes=config.utc_offset_minutes,
        )

    @app.post("/api/jobs", response_model=schemas.JobCreated)
    def post_job(req: schemas.JobCreate):
        view = view_for(req.scenario_id)
        raster = raster_for(req.bbox, req.resolution)
        schedule = _schedule_of(req.schedule)
        vmax = 60.0 * schedule.hours_per_day
        units = "minutes_per_day" if req.type == "gross" else "minutes"

        def fn(publish):
            def on_progress(frac, partial):
                if partial is not None and req.type == "gross":
                    payload = schemas.JobStatus(
                        job_id="",  # filled by the poll handler
                        state="running",
                        progress=frac,
                        raster=_raster_payload(
                            raster, partial / schedule.days, 0.0, vmax, units, "shade", preliminary=True
                        ),
                    )
                    publish(frac, payload)
                else:
                    publish(frac)

            res = accumulate(
                view,
                schedule,
                raster,
                method=req.method,
                resolution=max(raster.width, raster.height),
                bias=config.bias_m,
                source_levels=config.source_levels,
                bound_deg=config.bin_bound_degrees,
                slices_per_hour=config.slices_per_hour,
                progress=on_progress,
                continuous=req.type == "continuous",
            )
            values = res.gross_per_day if req.type == "gross" else res.continuous.astype(np.float64)
            payload = schemas.JobStatus(
                job_id="",
                state="done",
                progress=1.0,
                raster=_raster_payload(raster, values, 0.0, vmax, units, "shade"),
                stats=_result_stats(res, values),
            )
            return payload, res

        return schemas.JobCreated(job_id=jobs.submit(fn))

    @app.get("/api/jobs/{job_id}", response_model=schemas.JobStatus)
    def get_job(job_id: str):
        job = jobs.snapshot(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        if job.payload is not None:
            body: schemas.JobStatus = job.payload.model_copy()
            body.job_id = job.job_id
            body.state = job.state
            body.progress = job.progress
            body.error = job.error
            return body
        return schemas.JobStatus(job_id=job.job_id, state=job.state, progress=job.progress, error=job.error)

    def _finished_result(job_id: str) -> AccumulationResult:
        job = jobs.snapshot(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        if job.state != "done":
            raise HTTPException(409, f"job {job_id} is {job.state}, not done")
        return job.internal

    @app.post("/api/impact", response_model=schemas.ImpactResult)
    def post_impact(req: schemas.ImpactRequest):
        base = _finished_result(req.base_job)
        scen = _finished_result(req.scenario_job)
        try:
            diff = impact_diff(base, scen)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        vmax = max(float(np.abs(diff).max()), 1e-6)
        payload = _raster_payload(base.raster, diff, -vmax, vmax, "minutes_per_day", "impact")
        pos = float(diff[diff > 0].sum()) if (diff > 0).any() else 0.0
        neg = float(diff[diff < 0].sum()) if (diff < 0).any() else 0.0
        stats = {
            "max_increase": float(diff.max()),
            "max_decrease": float(diff.min()),
            "added_minute_m2_per_day": pos * base.raster.pixel_area,
            "removed_minute_m2_per_day": -neg * base.raster.pixel_area,
        }
        return schemas.ImpactResult(raster=payload, stats=stats)

    @app.post("/api/score", response_model=schemas.ScoreResult)
    def post_score(req: schemas.ScoreRequest):
        view = view_for(req.scenario_id)
        raster = raster_for(req.bbox, req.resolution or min(config.default_resolution, 256))
        sc = shadow_score(
            view,
            raster,
            req.year,
            weights=req.monthly_weights,
            start_minute=req.start_time.hour * 60 + req.start_time.minute,
            hours_per_day=req.hours_per_day,
            utc_offset_minutes=config.utc_offset_minutes,
            method=req.method,
            resolution=max(raster.width, raster.height),
            bias=config.bias_m,
            source_levels=config.source_levels,
            bound_deg=config.bin_bound_degrees,
        )
        vmax = max(float(np.abs(sc.per_pixel).max()), 1e-6)
        return schemas.ScoreResult(
            score=sc.score,
            monthly_hours=sc.monthly_hours,
            raster=_raster_payload(raster, sc.per_pixel, -vmax, vmax, "weighted_hours_per_day", "impact"),
        )

    @app.post("/api/contribution", response_model=schemas.ContributionResult)
    def post_contribution(req: schemas.ContributionRequest):
        import shapely

        view = view_for(req.scenario_id)
        poly = shapely.Polygon(np.asarray(req.region, dtype=np.float64))
        if not poly.is_valid or poly.area <= 0:
            raise HTTPException(422, "region polygon is degenerate or self-intersecting")
        schedule = _schedule_of(req.schedule)
        entries = contribution(
            view,
            schedule,
            poly,
            source_levels=req.source_levels,
            resolution=req.resolution,
            bound_deg=config.bin_bound_degrees,
        )
        return schemas.ContributionResult(
            entries=[
                schemas.ContributionEntryOut(building_id=e.building_id, name=e.name, area_hours=e.area_hours)
                for e in entries
            ],
            region_area_m2=float(poly.area),
        )

    ui_dir = os.environ.get("CITYSHADE_UI_DIST")
    for candidate in ([ui_dir] if ui_dir else []) + ["frontend/dist"]:
        if candidate and Path(candidate).is_dir():
            app.mount("/", StaticFiles(directory=candidate, html=True), name="ui")
            break

    return app
