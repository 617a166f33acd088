"""Append-only JSONL trajectory store with named persisted views.

Layout under the store directory:

    segments/<site>__<purpose>.jsonl   one canonical record per line
    index.jsonl                        record_id -> segment (rebuildable cache)
    views.json                         persisted ShadowView definitions
    meta.json                          robot type + joint limits for histograms

The JSONL segments are the source of truth; everything else is derived.
Ingest appends one line and fsyncs before the record becomes visible, so a
record is either fully present or absent.  Many readers may query
concurrently; ingest is serialized by an in-process lock (single-writer
per store directory).
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

import numpy as np

from .records import (
    DatasetQuery,
    DatasetStats,
    SchemaError,
    ShadowView,
    TrajectoryRecord,
    canonical_line,
    compute_stats,
)


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class ShadowStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "segments").mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._records: list[TrajectoryRecord] = []
        self._ids: set[str] = set()
        self._views: dict[str, ShadowView] = {}
        self._meta: dict = {}
        self._load()

    # --- persistence ---

    def _load(self) -> None:
        meta_path = self.root / "meta.json"
        if meta_path.exists():
            self._meta = json.loads(meta_path.read_text())
        views_path = self.root / "views.json"
        if views_path.exists():
            for doc in json.loads(views_path.read_text()):
                view = ShadowView.from_json_dict(doc)
                self._views[view.view_id] = view
        for segment in sorted((self.root / "segments").glob("*.jsonl")):
            with open(segment, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = TrajectoryRecord.from_json_dict(json.loads(line))
                    except (json.JSONDecodeError, SchemaError) as exc:
                        raise StoreError(
                            "corrupt",
                            f"{segment}:{line_no}: bad record: {exc}") from exc
                    self._records.append(record)
                    self._ids.add(record.record_id)
        self._rewrite_index()

    def _segment_path(self, record: TrajectoryRecord) -> Path:
        safe_site = record.site.replace(os.sep, "_")
        return self.root / "segments" / f"{safe_site}__{record.purpose}.jsonl"

    def _index_path(self) -> Path:
        return self.root / "index.jsonl"

    def _rewrite_index(self) -> None:
        tmp = self.root / "index.jsonl.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for record in self._records:
                fh.write(json.dumps({"record_id": record.record_id,
                                     "segment": self._segment_path(record).name})
                         + "\n")
        os.replace(tmp, self._index_path())

    def _append_index(self, record: TrajectoryRecord) -> None:
        with open(self._index_path(), "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"record_id": record.record_id,
                                 "segment": self._segment_path(record).name})
                     + "\n")

    def _write_views(self) -> None:
        tmp = self.root / "views.json.tmp"
        tmp.write_text(json.dumps([v.to_json_dict() for v in self._views.values()]))
        os.replace(tmp, self.root / "views.json")

    # --- configuration ---

    def set_robot_limits(self, robot_type: str, q_min, q_max) -> None:
        q_min = list(np.asarray(q_min, dtype=float))
        q_max = list(np.asarray(q_max, dtype=float))
        with self._lock:
            self._meta = {"robot_type": robot_type, "q_min": q_min, "q_max": q_max}
            tmp = self.root / "meta.json.tmp"
            tmp.write_text(json.dumps(self._meta))
            os.replace(tmp, self.root / "meta.json")

    @property
    def robot_limits(self) -> dict | None:
        return self._meta or None

    # --- verbs ---

    def ingest(self, record: TrajectoryRecord) -> str:
        with self._lock:
            if record.record_id is not None and record.record_id in self._ids:
                raise StoreError("duplicate",
                                 f"record_id {record.record_id!r} already present")
            record.assign_identity()
            line = canonical_line(record)
            path = self._segment_path(record)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._records.append(record)
            self._ids.add(record.record_id)
            self._append_index(record)
            return record.record_id

    def ingest_json(self, doc: dict) -> str:
        return self.ingest(TrajectoryRecord.from_json_dict(doc))

    def query(self, q: DatasetQuery) -> list[TrajectoryRecord]:
        with self._lock:
            snapshot = list(self._records)
        matched = [r for r in snapshot if q.matches(r)]
        matched.sort(key=lambda r: (r.created_utc, r.record_id))
        if q.limit is not None:
            matched = matched[: q.limit]
        return matched

    def get(self, record_id: str) -> TrajectoryRecord:
        with self._lock:
            for record in self._records:
                if record.record_id == record_id:
                    return record
        raise StoreError("not_found", f"record {record_id!r} not found")

    def stats(self, q: DatasetQuery) -> DatasetStats:
        return compute_stats(self.query(q))

    def histogram(self, q: DatasetQuery, joint_index: int, n_bins: int):
        """(bin_edges, counts) for joint positions over the matching records.

        Bins span the configured robot's [q_min, q_max] for that joint;
        values outside (shouldn't occur for in-limit data) are clamped into
        the edge bins so the total count is conserved.
        """
        if n_bins < 1:
            raise StoreError("bad_request", "n_bins must be >= 1")
        limits = self.robot_limits
        if limits is None:
            raise StoreError("bad_request",
                             "store has no robot limits configured; histogram "
                             "bins are undefined")
        if not 0 <= joint_index < len(limits["q_min"]):
            raise StoreError("bad_request",
                             f"joint_index {joint_index} out of range "
                             f"[0, {len(limits['q_min'])})")
        lo = limits["q_min"][joint_index]
        hi = limits["q_max"][joint_index]
        edges = np.linspace(lo, hi, n_bins + 1)
        counts = np.zeros(n_bins, dtype=int)
        width = (hi - lo) / n_bins
        for record in self.query(q):
            if joint_index >= record.n_joints:
                raise StoreError("bad_request",
                                 f"record {record.record_id} has only "
                                 f"{record.n_joints} joints")
            values = record.q[:, joint_index]
            idx = np.clip(((values - lo) / width).astype(int), 0, n_bins - 1)
            counts += np.bincount(idx, minlength=n_bins)
        return edges, counts

    def create_view(self, view: ShadowView) -> str:
        with self._lock:
            if view.view_id is not None and view.view_id in self._views:
                raise StoreError("duplicate", f"view {view.view_id!r} already exists")
            view.assign_identity()
            self._views[view.view_id] = view
            self._write_views()
            return view.view_id

    def resolve_view(self, view_id: str) -> list[dict]:
        with self._lock:
            view = self._views.get(view_id)
        if view is None:
            raise StoreError("not_found", f"view {view_id!r} not found")
        return [view.project(r) for r in self.query(view.query)]

    def get_view(self, view_id: str) -> ShadowView:
        with self._lock:
            view = self._views.get(view_id)
        if view is None:
            raise StoreError("not_found", f"view {view_id!r} not found")
        return view

    def list_views(self) -> list[ShadowView]:
        with self._lock:
            return list(self._views.values())
