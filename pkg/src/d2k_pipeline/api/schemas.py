"""Pydantic request/response models for the HTTP service.

These mirror the store record / query / view schemas and the sweep verbs;
conversion to the core dataclasses happens in the route handlers.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class SampleModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: list[float]
    qd: list[float]
    qdd: list[float]
    tau: list[float]


class RecordModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record_id: str | None = None
    robot_type: str
    instance_id: str
    site: str
    purpose: str
    velocity_scaling: float
    acceleration_scaling: float
    software_commit: str
    created_utc: str | None = None
    dt: float
    samples: list[SampleModel]


class QueryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    robot_type: str | None = None
    instance_ids: list[str] | None = None
    sites: list[str] | None = None
    purpose: str | None = None
    velocity_scaling_range: tuple[float, float] | None = None
    acceleration_scaling_range: tuple[float, float] | None = None
    created_range: tuple[str, str] | None = None
    limit: int | None = None


class ViewModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    view_id: str | None = None
    query: QueryModel = Field(default_factory=QueryModel)
    projection: list[str]
    description: str = ""
    created_utc: str | None = None


class IngestRequest(BaseModel):
    record: RecordModel


class IngestResponse(BaseModel):
    record_id: str


class QueryRequest(BaseModel):
    query: QueryModel = Field(default_factory=QueryModel)


class StatsResponse(BaseModel):
    stats: dict


class HistogramRequest(BaseModel):
    query: QueryModel = Field(default_factory=QueryModel)
    joint_index: int
    n_bins: int


class HistogramResponse(BaseModel):
    bin_edges: list[float]
    counts: list[int]


class CreateViewRequest(BaseModel):
    view: ViewModel


class CreateViewResponse(BaseModel):
    view_id: str


class RobotLimitsRequest(BaseModel):
    robot_type: str
    q_min: list[float]
    q_max: list[float]


class OpenRoundRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    target: str
    setup: str
    search_space: dict
    configs_per_round: int = 10
    seed: int = 0
    expire_after_s: float | None = None


class OpenRoundResponse(BaseModel):
    round_id: str


class RequestConfigRequest(BaseModel):
    agent_id: str = "anonymous"


class ReportResultRequest(BaseModel):
    config_id: str
    cross_validation_loss: float
    checkpoint: dict = Field(default_factory=dict)


class ReportResultResponse(BaseModel):
    accepted: bool


class BestResponse(BaseModel):
    checkpoint_id: str
    loss: float
