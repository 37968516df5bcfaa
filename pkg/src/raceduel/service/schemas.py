"""Pydantic request/response models for the service API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class TrackPayload(BaseModel):
    schema_version: int = 1
    centerline: list[list[float]]
    half_width: float
    n_lanes: int
    checkpoint_spacing: float
    direction: Optional[str] = None
    meta: dict = Field(default_factory=dict)


class RacelinePayload(BaseModel):
    schema_version: int = 1
    points: list[list[float]]
    curvature: list[float]
    optimal_lanes: list[int]
    offsets: list[float] = Field(default_factory=list)
    converged: bool = True


class GenerateTracksRequest(BaseModel):
    seed: int = 0
    half_width: float = 0.8
    n_lanes: int = 3
    checkpoint_spacing: float = 1.6


class GenerateTracksResponse(BaseModel):
    tracks: list[TrackPayload]


class RacelineRequest(BaseModel):
    track: TrackPayload
    iterations: int = 60
    step: float = 1.0
    margin: float = 0.15


class RacelineResponse(BaseModel):
    raceline: RacelinePayload


class AgentSpec(BaseModel):
    kind: Literal["lqr", "scripted", "policy", "policy-e2e"]
    target_speed: float = 4.0
    noise_std: float = 0.0
    checkpoint_b64: Optional[str] = None  # policy kinds


class VehicleParamsPayload(BaseModel):
    m: float = 1.0
    Iz: float = 0.03
    lf: float = 0.15
    lr: float = 0.15
    Bf: float = 6.0
    Cf: float = 1.4
    Df: float = 5.0
    Br: float = 6.5
    Cr: float = 1.45
    Dr: float = 5.2
    Cm1: float = 8.0
    Cm2: float = 0.3
    Croll: float = 0.3
    Cd: float = 0.03
    delta_max: float = 0.4
    length: float = 0.4
    width: float = 0.2


class RaceRequest(BaseModel):
    track: TrackPayload
    raceline: Optional[RacelinePayload] = None
    agent_a: AgentSpec
    agent_b: AgentSpec
    races: int = 20
    laps: int = 3
    seed: int = 0
    vehicle: VehicleParamsPayload = Field(default_factory=VehicleParamsPayload)
    planner_budget: int = 128
    max_sim_time: float = 240.0
    collect_traces: bool = False


class RaceReportPayload(BaseModel):
    schema_version: int = 1
    label_a: str
    label_b: str
    n_races: int
    wins_a: int
    wins_b: int
    no_winner: int
    avg_lap_time: list[Optional[float]]
    avg_lateral_error: list[float]
    wall_collisions: list[int]
    from_behind_collisions: list[int]
    races: list[dict]


class RaceResponse(BaseModel):
    report: RaceReportPayload
    traces: Optional[list[list[dict]]] = None


class ScheduleBlock(BaseModel):
    t_start: int = 500_000
    t_end: int = 1_500_000
    lambda1_0: float = 0.3
    lambda2_0: float = 0.3


class PpoBlock(BaseModel):
    iterations: int = 20
    horizon: int = 128
    lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    sigma: float = 0.1
    sigma_final: Optional[float] = None
    epochs: int = 4
    minibatch: int = 64
    value_coef: float = 0.5


class TrainRequest(BaseModel):
    track: Optional[TrackPayload] = None  # default: an 8 m ring
    vehicle: VehicleParamsPayload = Field(default_factory=VehicleParamsPayload)
    schedule: ScheduleBlock = Field(default_factory=ScheduleBlock)
    ppo: PpoBlock = Field(default_factory=PpoBlock)
    hidden_sizes: list[int] = Field(default_factory=lambda: [32, 32])
    episode_len: int = 256
    seed: int = 0
    use_curriculum: bool = True
    use_cbf: bool = True


class TrainResponse(BaseModel):
    trace: list[dict]
    checkpoint_b64: str
    n_params: int


class EvaluateRequest(BaseModel):
    reports: list[RaceReportPayload]


class EvaluateRow(BaseModel):
    pair: str
    races: int
    wins_a: int
    wins_b: int
    no_winner: int
    avg_lap_time_a: Optional[float]
    avg_lap_time_b: Optional[float]
    avg_lateral_a: float
    avg_lateral_b: float
    wall_collisions_a: int
    wall_collisions_b: int
    from_behind_a: int
    from_behind_b: int


class EvaluateResponse(BaseModel):
    summary: list[EvaluateRow]


class HealthResponse(BaseModel):
    status: str
    version: str
