"""Trajectory record schema, queries, views, and dataset statistics.

The JSONL line format is a bit-exact contract: field order, separators,
and float formatting are all fixed by ``canonical_line`` so that
ingest -> query -> re-serialize round-trips byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

PURPOSES = ("train", "validation", "evaluation")
RECORD_FIELDS = (
    "record_id", "robot_type", "instance_id", "site", "purpose",
    "velocity_scaling", "acceleration_scaling", "software_commit",
    "created_utc", "dt", "samples",
)
SAMPLE_CHANNELS = ("q", "qd", "qdd", "tau")
METADATA_FIELDS = tuple(f for f in RECORD_FIELDS if f != "samples")

_TIME_FORMAT = "%Y-%m-%dT%H:%M:%S.%f"


class SchemaError(ValueError):
    """A record, query, or view violates the schema; names the field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"field {field_name!r}: {message}")


def utc_now_iso() -> str:
    """UTC timestamp, ISO-8601 with millisecond precision."""
    now = datetime.now(timezone.utc)
    return now.strftime(_TIME_FORMAT)[:-3] + "Z"


def _check_timestamp(value: str, field_name: str) -> None:
    if not isinstance(value, str) or not value.endswith("Z"):
        raise SchemaError(field_name, "must be an ISO-8601 UTC string ending in Z")
    try:
        datetime.strptime(value[:-1], _TIME_FORMAT)
    except ValueError as exc:
        raise SchemaError(field_name, f"bad timestamp: {exc}") from exc


@dataclass
class TrajectoryRecord:
    """One annotated trajectory; channel arrays are (n_samples, n_joints)."""

    robot_type: str
    instance_id: str
    site: str
    purpose: str
    velocity_scaling: float
    acceleration_scaling: float
    software_commit: str
    dt: float
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    record_id: str | None = None
    created_utc: str | None = None

    def __post_init__(self):
        for name in ("robot_type", "instance_id", "site", "software_commit"):
            if not isinstance(getattr(self, name), str):
                raise SchemaError(name, "must be a string")
        if self.purpose not in PURPOSES:
            raise SchemaError("purpose", f"must be one of {list(PURPOSES)}")
        for name in ("velocity_scaling", "acceleration_scaling", "dt"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not np.isfinite(value):
                raise SchemaError(name, "must be a finite number")
            setattr(self, name, float(value))
        if self.dt <= 0:
            raise SchemaError("dt", "must be > 0")
        shape = None
        for name in SAMPLE_CHANNELS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise SchemaError("samples", f"channel {name} must be 2-d")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise SchemaError(
                    "samples", f"channel {name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        if shape[0] < 1:
            raise SchemaError("samples", "must be non-empty")
        if self.record_id is not None and not isinstance(self.record_id, str):
            raise SchemaError("record_id", "must be a string")
        if self.created_utc is not None:
            _check_timestamp(self.created_utc, "created_utc")

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    def assign_identity(self) -> None:
        """Server-side: fill in record_id / created_utc when absent."""
        if self.record_id is None:
            self.record_id = str(uuid.uuid4())
        if self.created_utc is None:
            self.created_utc = utc_now_iso()

    def to_json_dict(self, allow_missing_identity: bool = False) -> dict:
        if not allow_missing_identity and (self.record_id is None or self.created_utc is None):
            raise SchemaError("record_id", "record has no identity yet")
        samples = []
        q, qd, qdd, tau = (arr.tolist() for arr in (self.q, self.qd, self.qdd, self.tau))
        for k in range(self.n_samples):
            samples.append({"q": q[k], "qd": qd[k], "qdd": qdd[k], "tau": tau[k]})
        return {
            "record_id": self.record_id,
            "robot_type": self.robot_type,
            "instance_id": self.instance_id,
            "site": self.site,
            "purpose": self.purpose,
            "velocity_scaling": self.velocity_scaling,
            "acceleration_scaling": self.acceleration_scaling,
            "software_commit": self.software_commit,
            "created_utc": self.created_utc,
            "dt": self.dt,
            "samples": samples,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrajectoryRecord":
        if not isinstance(doc, dict):
            raise SchemaError("record", "must be a JSON object")
        for name in RECORD_FIELDS:
            # identity fields may be null/absent: the store assigns them
            if name not in doc and name not in ("record_id", "created_utc"):
                raise SchemaError(name, "missing")
        extra = set(doc) - set(RECORD_FIELDS)
        if extra:
            raise SchemaError(sorted(extra)[0], "unknown field")
        samples = doc["samples"]
        if not isinstance(samples, list) or not samples:
            raise SchemaError("samples", "must be a non-empty array")
        channels = {}
        for name in SAMPLE_CHANNELS:
            try:
                channels[name] = np.array([s[name] for s in samples], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError("samples", f"bad channel {name}: {exc}") from exc
        return cls(
            robot_type=doc["robot_type"],
            instance_id=doc["instance_id"],
            site=doc["site"],
            purpose=doc["purpose"],
            velocity_scaling=doc["velocity_scaling"],
            acceleration_scaling=doc["acceleration_scaling"],
            software_commit=doc["software_commit"],
            dt=doc["dt"],
            record_id=doc.get("record_id"),
            created_utc=doc.get("created_utc"),
            **channels,
        )


def canonical_line(record: TrajectoryRecord) -> str:
    """The record's one-line JSONL form (no trailing newline)."""
    return json.dumps(record.to_json_dict(), separators=(",", ":"))


def record_content_hash(record: TrajectoryRecord) -> str:
    return hashlib.sha256(canonical_line(record).encode("utf-8")).hexdigest()


def make_record(robot_type, instance_id, site, purpose, velocity_scaling,
                acceleration_scaling, software_commit, traj, tau) -> TrajectoryRecord:
    """Build a record from a generated trajectory plus its torque labels."""
    return TrajectoryRecord(
        robot_type=robot_type,
        instance_id=instance_id,
        site=site,
        purpose=purpose,
        velocity_scaling=velocity_scaling,
        acceleration_scaling=acceleration_scaling,
        software_commit=software_commit,
        dt=traj.dt,
        q=traj.q, qd=traj.qd, qdd=traj.qdd, tau=np.asarray(tau, dtype=float),
    )


# --- queries ------------------------------------------------------------------


def _check_range(value, field_name):
    if value is None:
        return None
    try:
        lo, hi = value
    except (TypeError, ValueError) as exc:
        raise SchemaError(field_name, "must be a [lo, hi] pair") from exc
    if lo > hi:
        raise SchemaError(field_name, f"range is not well-ordered: {lo!r} > {hi!r}")
    return (lo, hi)


@dataclass(frozen=True)
class DatasetQuery:
    """Conjunctive record filter; every field None means match-all."""

    robot_type: str | None = None
    instance_ids: frozenset | None = None
    sites: frozenset | None = None
    purpose: str | None = None
    velocity_scaling_range: tuple | None = None
    acceleration_scaling_range: tuple | None = None
    created_range: tuple | None = None
    limit: int | None = None

    def __post_init__(self):
        if self.purpose is not None and self.purpose not in PURPOSES:
            raise SchemaError("purpose", f"must be one of {list(PURPOSES)}")
        for name in ("velocity_scaling_range", "acceleration_scaling_range",
                     "created_range"):
            object.__setattr__(self, name, _check_range(getattr(self, name), name))
        for name in ("instance_ids", "sites"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, frozenset(value))
        if self.limit is not None and (not isinstance(self.limit, int) or self.limit < 0):
            raise SchemaError("limit", "must be a non-negative integer")

    def matches(self, record: TrajectoryRecord) -> bool:
        if self.robot_type is not None and record.robot_type != self.robot_type:
            return False
        if self.instance_ids is not None and record.instance_id not in self.instance_ids:
            return False
        if self.sites is not None and record.site not in self.sites:
            return False
        if self.purpose is not None and record.purpose != self.purpose:
            return False
        for rng, value in (
            (self.velocity_scaling_range, record.velocity_scaling),
            (self.acceleration_scaling_range, record.acceleration_scaling),
            (self.created_range, record.created_utc),
        ):
            if rng is not None and not rng[0] <= value <= rng[1]:
                return False
        return True

    def to_json_dict(self) -> dict:
        doc = {}
        for name in ("robot_type", "purpose", "limit"):
            if getattr(self, name) is not None:
                doc[name] = getattr(self, name)
        for name in ("instance_ids", "sites"):
            if getattr(self, name) is not None:
                doc[name] = sorted(getattr(self, name))
        for name in ("velocity_scaling_range", "acceleration_scaling_range",
                     "created_range"):
            if getattr(self, name) is not None:
                doc[name] = list(getattr(self, name))
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DatasetQuery":
        if not isinstance(doc, dict):
            raise SchemaError("query", "must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise SchemaError(sorted(extra)[0], "unknown query field")
        kwargs = dict(doc)
        for name in ("velocity_scaling_range", "acceleration_scaling_range",
                     "created_range"):
            if name in kwargs and kwargs[name] is not None:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


# --- views --------------------------------------------------------------------

PROJECTABLE_FIELDS = METADATA_FIELDS + SAMPLE_CHANNELS


@dataclass
class ShadowView:
    """A named, persisted query plus field projection."""

    query: DatasetQuery
    projection: tuple
    description: str = ""
    view_id: str | None = None
    created_utc: str | None = None

    def __post_init__(self):
        proj = tuple(self.projection)
        if not proj:
            raise SchemaError("projection", "must be non-empty")
        for name in proj:
            if name not in PROJECTABLE_FIELDS:
                raise SchemaError("projection", f"unknown field {name!r}")
        self.projection = proj
        if self.created_utc is not None:
            _check_timestamp(self.created_utc, "created_utc")

    def assign_identity(self) -> None:
        if self.view_id is None:
            self.view_id = str(uuid.uuid4())
        if self.created_utc is None:
            self.created_utc = utc_now_iso()

    def to_json_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "query": self.query.to_json_dict(),
            "projection": list(self.projection),
            "created_utc": self.created_utc,
            "description": self.description,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ShadowView":
        return cls(
            query=DatasetQuery.from_json_dict(doc.get("query", {})),
            projection=tuple(doc.get("projection", ())),
            description=doc.get("description", ""),
            view_id=doc.get("view_id"),
            created_utc=doc.get("created_utc"),
        )

    def project(self, record: TrajectoryRecord) -> dict:
        out = {}
        for name in METADATA_FIELDS:
            if name in self.projection:
                out[name] = getattr(record, name)
        channels = [c for c in SAMPLE_CHANNELS if c in self.projection]
        if channels:
            arrays = {c: getattr(record, c).tolist() for c in channels}
            out["samples"] = [
                {c: arrays[c][k] for c in channels} for k in range(record.n_samples)
            ]
        return out


# --- statistics ---------------------------------------------------------------


@dataclass
class DatasetStats:
    per_site: dict                 # site -> {trajectories, measurements_per_axis}
    total_trajectories: int
    total_measurements_per_axis: int
    per_joint: dict                # channel -> {min, max, mean, std} (lists per joint)

    def to_json_dict(self) -> dict:
        return {
            "per_site": self.per_site,
            "total_trajectories": self.total_trajectories,
            "total_measurements_per_axis": self.total_measurements_per_axis,
            "per_joint": self.per_joint,
        }


def compute_stats(records) -> DatasetStats:
    per_site: dict = {}
    total_traj = 0
    total_meas = 0
    acc = None
    n_joints = None
    for record in records:
        site = per_site.setdefault(record.site,
                                   {"trajectories": 0, "measurements_per_axis": 0})
        site["trajectories"] += 1
        site["measurements_per_axis"] += record.n_samples
        total_traj += 1
        total_meas += record.n_samples
        if n_joints is None:
            n_joints = record.n_joints
            acc = {c: {"count": 0,
                       "sum": np.zeros(n_joints), "sumsq": np.zeros(n_joints),
                       "min": np.full(n_joints, np.inf),
                       "max": np.full(n_joints, -np.inf)}
                   for c in SAMPLE_CHANNELS}
        elif record.n_joints != n_joints:
            raise SchemaError(
                "samples", f"mixed joint counts in match: {record.n_joints} vs {n_joints}")
        for channel in SAMPLE_CHANNELS:
            arr = getattr(record, channel)
            slot = acc[channel]
            slot["count"] += arr.shape[0]
            slot["sum"] += arr.sum(axis=0)
            slot["sumsq"] += (arr * arr).sum(axis=0)
            slot["min"] = np.minimum(slot["min"], arr.min(axis=0))
            slot["max"] = np.maximum(slot["max"], arr.max(axis=0))
    per_joint = {}
    if acc is not None:
        for channel, slot in acc.items():
            mean = slot["sum"] / slot["count"]
            var = np.maximum(slot["sumsq"] / slot["count"] - mean**2, 0.0)
            per_joint[channel] = {
                "min": slot["min"].tolist(), "max": slot["max"].tolist(),
                "mean": mean.tolist(), "std": np.sqrt(var).tolist(),
            }
    return DatasetStats(per_site, total_traj, total_meas, per_joint)


def dataset_content_hash(records) -> str:
    """Order-independent content hash over a set of records."""
    digests = sorted(record_content_hash(r) for r in records)
    return hashlib.sha256("".join(digests).encode("ascii")).hexdigest()
