"""FastAPI application wrapping the core package.

Every endpoint is a pure computation over its JSON payload: no filesystem
state, deterministic for a given request. Divergence-class failures map to
HTTP 409, malformed domain inputs to 400 (pydantic handles 422s).
"""

from __future__ import annotations

import base64
import struct
import tempfile
from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..agents.envs import SoloRaceEnv
from ..agents.lqr import LqrConfig, LqrTracker
from ..agents.policy import PolicyNet
from ..agents.ppo import PpoConfig, TrainDiverged, train
from ..agents.scripted import ScriptedDriver
from ..curriculum import CurriculumSchedule
from ..dynamics import DivergedError, VehicleParams
from ..race import (
    LqrAgent,
    PolicyAgent,
    RaceConfig,
    ScriptedAgent,
    run_match,
)
from ..track import (
    GenerationError,
    Raceline,
    TrackModel,
    compute_raceline,
    generate_training_tracks,
    make_ring_track,
)
from . import schemas as S

VERSION = "0.1.0"


def track_from_payload(p: S.TrackPayload) -> TrackModel:
    try:
        return TrackModel.from_dict(p.model_dump())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


def raceline_from_payload(p: S.RacelinePayload) -> Raceline:
    try:
        return Raceline.from_dict(p.model_dump())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


def _vehicle(p: S.VehicleParamsPayload) -> VehicleParams:
    try:
        return VehicleParams(**p.model_dump())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


def _policy_from_b64(b64: str | None) -> PolicyNet:
    if not b64:
        raise HTTPException(status_code=400,
                            detail="policy agent needs checkpoint_b64")
    try:
        raw = base64.b64decode(b64)
        with tempfile.NamedTemporaryFile(suffix=".bin") as f:
            f.write(raw)
            f.flush()
            return PolicyNet.load(f.name)
    except (ValueError, struct.error) as e:
        raise HTTPException(status_code=400, detail=f"bad checkpoint: {e}")


def agent_factory(spec: S.AgentSpec, params: VehicleParams):
    if spec.kind == "lqr":
        def make(seed):
            return LqrAgent(
                LqrTracker(params, LqrConfig(target_speed=spec.target_speed)),
                use_planner=True,
            )
        return make
    if spec.kind == "scripted":
        def make(seed):
            return ScriptedAgent(
                ScriptedDriver(params, target_speed=spec.target_speed,
                               noise_std=spec.noise_std, seed=seed)
            )
        return make
    net = _policy_from_b64(spec.checkpoint_b64)
    hierarchical = spec.kind == "policy"

    def make(seed):
        return PolicyAgent(net, params, use_planner=hierarchical)
    return make


def create_app() -> FastAPI:
    app = FastAPI(title="raceduel", version=VERSION)

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=VERSION)

    @app.post("/tracks/generate", response_model=S.GenerateTracksResponse)
    def tracks_generate(req: S.GenerateTracksRequest):
        try:
            tracks = generate_training_tracks(
                req.seed, half_width=req.half_width, n_lanes=req.n_lanes,
                checkpoint_spacing=req.checkpoint_spacing,
            )
        except GenerationError as e:
            raise HTTPException(status_code=409, detail=str(e))
        return S.GenerateTracksResponse(
            tracks=[S.TrackPayload(**t.to_dict()) for t in tracks]
        )

    @app.post("/raceline/compute", response_model=S.RacelineResponse)
    def raceline_compute(req: S.RacelineRequest):
        track = track_from_payload(req.track)
        try:
            rl = compute_raceline(track, iterations=req.iterations,
                                  step=req.step, margin=req.margin)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return S.RacelineResponse(raceline=S.RacelinePayload(**rl.to_dict()))

    @app.post("/race/run", response_model=S.RaceResponse)
    def race_run(req: S.RaceRequest):
        track = track_from_payload(req.track)
        params = _vehicle(req.vehicle)
        if req.raceline is not None:
            raceline = raceline_from_payload(req.raceline)
        else:
            raceline = compute_raceline(track)
        config = RaceConfig(
            laps=req.laps, planner_budget=req.planner_budget,
            max_sim_time=req.max_sim_time,
        )
        traces = [] if req.collect_traces else None
        try:
            report = run_match(
                agent_factory(req.agent_a, params),
                agent_factory(req.agent_b, params),
                track, raceline, params, n_races=req.races, seed=req.seed,
                config=config, traces=traces,
            )
        except DivergedError as e:
            raise HTTPException(status_code=409, detail=str(e))
        body = report.to_dict()
        payload = S.RaceReportPayload(
            label_a=req.agent_a.kind, label_b=req.agent_b.kind,
            n_races=body["n_races"], wins_a=body["wins_a"],
            wins_b=body["wins_b"], no_winner=body["no_winner"],
            avg_lap_time=body["avg_lap_time"],
            avg_lateral_error=body["avg_lateral_error"],
            wall_collisions=body["wall_collisions"],
            from_behind_collisions=body["from_behind_collisions"],
            races=body["races"],
        )
        return S.RaceResponse(report=payload, traces=traces)

    @app.post("/train/run", response_model=S.TrainResponse)
    def train_run(req: S.TrainRequest):
        if req.track is not None:
            track = track_from_payload(req.track)
        else:
            track = make_ring_track(radius=8.0)
        params = _vehicle(req.vehicle)
        raceline = compute_raceline(track)
        schedule = CurriculumSchedule(
            t_start=req.schedule.t_start, t_end=req.schedule.t_end,
            base_front=params.front_tire(), base_rear=params.rear_tire(),
            lambda1_0=req.schedule.lambda1_0, lambda2_0=req.schedule.lambda2_0,
        )
        ppo_cfg = PpoConfig(**req.ppo.model_dump())
        net = PolicyNet([SoloRaceEnv.obs_size] + list(req.hidden_sizes),
                        delta_max=params.delta_max, seed=req.seed)

        def factory():
            return SoloRaceEnv(track, raceline, params, RaceConfig(),
                               episode_len=req.episode_len)

        try:
            net, trace = train(factory, net, ppo_cfg, seed=req.seed,
                               schedule=schedule,
                               use_curriculum=req.use_curriculum,
                               use_cbf=req.use_cbf)
        except (TrainDiverged, DivergedError) as e:
            raise HTTPException(status_code=409, detail=str(e))
        with tempfile.NamedTemporaryFile(suffix=".bin") as f:
            net.save(f.name)
            raw = Path(f.name).read_bytes()
        return S.TrainResponse(
            trace=trace, checkpoint_b64=base64.b64encode(raw).decode("ascii"),
            n_params=net.n_params,
        )

    @app.post("/evaluate", response_model=S.EvaluateResponse)
    def evaluate(req: S.EvaluateRequest):
        if not req.reports:
            raise HTTPException(status_code=400, detail="no reports to merge")
        groups: dict[tuple, list[S.RaceReportPayload]] = {}
        for r in req.reports:
            groups.setdefault((r.label_a, r.label_b), []).append(r)
        rows = []
        for (la, lb), rs in groups.items():
            races = sum(r.n_races for r in rs)

            def wmean(values_races):
                num = den = 0.0
                for v, n in values_races:
                    if v is None:
                        continue
                    num += v * n
                    den += n
                return num / den if den else None

            rows.append(
                S.EvaluateRow(
                    pair=f"{la} vs {lb}",
                    races=races,
                    wins_a=sum(r.wins_a for r in rs),
                    wins_b=sum(r.wins_b for r in rs),
                    no_winner=sum(r.no_winner for r in rs),
                    avg_lap_time_a=wmean(
                        [(r.avg_lap_time[0], r.n_races) for r in rs]
                    ),
                    avg_lap_time_b=wmean(
                        [(r.avg_lap_time[1], r.n_races) for r in rs]
                    ),
                    avg_lateral_a=wmean(
                        [(r.avg_lateral_error[0], r.n_races) for r in rs]
                    ) or 0.0,
                    avg_lateral_b=wmean(
                        [(r.avg_lateral_error[1], r.n_races) for r in rs]
                    ) or 0.0,
                    wall_collisions_a=sum(r.wall_collisions[0] for r in rs),
                    wall_collisions_b=sum(r.wall_collisions[1] for r in rs),
                    from_behind_a=sum(
                        r.from_behind_collisions[0] for r in rs
                    ),
                    from_behind_b=sum(
                        r.from_behind_collisions[1] for r in rs
                    ),
                )
            )
        return S.EvaluateResponse(summary=rows)

    return app


app = create_app()
