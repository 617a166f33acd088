"""HTTP service wrapping the trajectory store and the sweep coordinator.

The CLI and orchestrator can run against this service through ``http://``
endpoints; it shares the exact same core objects the in-process and socket
transports use.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..store import DatasetQuery, SchemaError, ShadowStore, ShadowView, StoreError
from ..store.records import TrajectoryRecord
from ..sweep import SweepCoordinator, SweepError
from . import schemas

_ERROR_STATUS = {
    "schema": 422, "bad_request": 400, "bad_space": 400, "duplicate": 409,
    "not_found": 404, "no_model": 404, "round_open": 409, "expired": 409,
    "corrupt": 500,
}


def _http_error(code: str, message: str) -> HTTPException:
    return HTTPException(status_code=_ERROR_STATUS.get(code, 400),
                         detail={"code": code, "message": message})


def create_app(store_dir: str | None = None, repo_dir: str | None = None,
               store: ShadowStore | None = None,
               coordinator: SweepCoordinator | None = None) -> FastAPI:
    if store is None and store_dir is not None:
        store = ShadowStore(store_dir)
    if coordinator is None and repo_dir is not None:
        coordinator = SweepCoordinator(repo_dir)
    app = FastAPI(title="d2k pipeline service", version="0.1.0")

    def need_store() -> ShadowStore:
        if store is None:
            raise _http_error("bad_request", "service started without a store")
        return store

    def need_sweep() -> SweepCoordinator:
        if coordinator is None:
            raise _http_error("bad_request", "service started without a sweep "
                                             "repository")
        return coordinator

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True, "store": store is not None,
                "sweep": coordinator is not None}

    # --- store ---

    @app.post("/store/ingest", response_model=schemas.IngestResponse)
    def ingest(request: schemas.IngestRequest):
        try:
            record = TrajectoryRecord.from_json_dict(
                request.record.model_dump())
            return {"record_id": need_store().ingest(record)}
        except (SchemaError, StoreError) as exc:
            raise _http_error(getattr(exc, "code", "schema"), str(exc))

    @app.post("/store/query")
    def query(request: schemas.QueryRequest):
        try:
            q = DatasetQuery.from_json_dict(
                request.query.model_dump(exclude_none=True))
            records = need_store().query(q)
            return {"records": [r.to_json_dict() for r in records]}
        except (SchemaError, StoreError) as exc:
            raise _http_error(getattr(exc, "code", "schema"), str(exc))

    @app.post("/store/stats", response_model=schemas.StatsResponse)
    def stats(request: schemas.QueryRequest):
        try:
            q = DatasetQuery.from_json_dict(
                request.query.model_dump(exclude_none=True))
            return {"stats": need_store().stats(q).to_json_dict()}
        except (SchemaError, StoreError) as exc:
            raise _http_error(getattr(exc, "code", "schema"), str(exc))

    @app.post("/store/histogram", response_model=schemas.HistogramResponse)
    def histogram(request: schemas.HistogramRequest):
        try:
            q = DatasetQuery.from_json_dict(
                request.query.model_dump(exclude_none=True))
            edges, counts = need_store().histogram(q, request.joint_index,
                                                   request.n_bins)
            return {"bin_edges": edges.tolist(), "counts": counts.tolist()}
        except (SchemaError, StoreError) as exc:
            raise _http_error(getattr(exc, "code", "schema"), str(exc))

    @app.post("/store/views", response_model=schemas.CreateViewResponse)
    def create_view(request: schemas.CreateViewRequest):
        try:
            view = ShadowView.from_json_dict(request.view.model_dump())
            return {"view_id": need_store().create_view(view)}
        except (SchemaError, StoreError) as exc:
            raise _http_error(getattr(exc, "code", "schema"), str(exc))

    @app.get("/store/views/{view_id}/rows")
    def resolve_view(view_id: str):
        try:
            return {"rows": need_store().resolve_view(view_id)}
        except StoreError as exc:
            raise _http_error(exc.code, str(exc))

    @app.post("/store/robot-limits")
    def robot_limits(request: schemas.RobotLimitsRequest):
        need_store().set_robot_limits(request.robot_type, request.q_min,
                                      request.q_max)
        return {"ok": True}

    # --- sweep ---

    @app.post("/sweep/rounds", response_model=schemas.OpenRoundResponse)
    def open_round(request: schemas.OpenRoundRequest):
        try:
            round_id = need_sweep().open_round(**request.model_dump())
            return {"round_id": round_id}
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))

    @app.post("/sweep/rounds/{round_id}/request")
    def request_config(round_id: str, request: schemas.RequestConfigRequest):
        try:
            issued = need_sweep().request_config(round_id, request.agent_id)
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))
        if issued is None:
            return {"round_done": True}
        config_id, params = issued
        return {"config_id": config_id, "params": params.to_json_dict()}

    @app.post("/sweep/rounds/{round_id}/report",
              response_model=schemas.ReportResultResponse)
    def report_result(round_id: str, request: schemas.ReportResultRequest):
        try:
            accepted = need_sweep().report_result(
                round_id, request.config_id, request.checkpoint,
                request.cross_validation_loss)
            return {"accepted": accepted}
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))

    @app.post("/sweep/rounds/{round_id}/close")
    def close_round(round_id: str):
        try:
            return need_sweep().close_round(round_id)
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))

    @app.get("/sweep/best/{target}/checkpoint")
    def best_checkpoint(target: str):
        try:
            return need_sweep().best_checkpoint_doc(target)
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))

    @app.get("/sweep/best/{target}", response_model=schemas.BestResponse)
    def best(target: str):
        try:
            checkpoint_id, loss = need_sweep().best(target)
            return {"checkpoint_id": checkpoint_id, "loss": loss}
        except SweepError as exc:
            raise _http_error(exc.code, str(exc))

    @app.get("/sweep/status")
    def status():
        return need_sweep().status()

    return app
