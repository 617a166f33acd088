"""Endpoint dispatch: one store/sweep client interface over three transports.

``dir:<path>`` runs against the stores in-process (the tested default),
``tcp:<host>:<port>`` uses the socket protocols, and ``http(s)://...``
talks to the HTTP service.  The socket sweep protocol only carries the
agent verbs, so round administration requires a ``dir:`` or ``http:``
sweep endpoint.
"""

from __future__ import annotations

from ..learner import HyperParams
from ..store import (
    DatasetQuery,
    ShadowStore,
    ShadowView,
    StoreClient,
    StoreError,
    TrajectoryRecord,
)
from ..sweep import SweepCoordinator, SweepError


class EndpointError(ValueError):
    pass


def _split_endpoint(endpoint: str):
    if endpoint.startswith("dir:"):
        return "dir", endpoint[4:]
    if endpoint.startswith("tcp:"):
        host, _, port = endpoint[4:].rpartition(":")
        if not host or not port.isdigit():
            raise EndpointError(f"bad tcp endpoint {endpoint!r}")
        return "tcp", (host, int(port))
    if endpoint.startswith(("http://", "https://")):
        return "http", endpoint.rstrip("/")
    raise EndpointError(f"unrecognized endpoint {endpoint!r} "
                        "(expected dir:, tcp:, or http(s)://)")


# --- store ----------------------------------------------------------------------


class LocalStoreClient:
    def __init__(self, root):
        self.store = ShadowStore(root)

    def ingest(self, record: TrajectoryRecord) -> str:
        return self.store.ingest(record)

    def query(self, q: DatasetQuery) -> list[TrajectoryRecord]:
        return self.store.query(q)

    def stats(self, q: DatasetQuery) -> dict:
        return self.store.stats(q).to_json_dict()

    def histogram(self, q: DatasetQuery, joint_index: int, n_bins: int):
        edges, counts = self.store.histogram(q, joint_index, n_bins)
        return edges.tolist(), counts.tolist()

    def create_view(self, view: ShadowView) -> str:
        return self.store.create_view(view)

    def resolve_view(self, view_id: str) -> list[dict]:
        return self.store.resolve_view(view_id)

    def ensure_robot_limits(self, robot_type, q_min, q_max) -> None:
        self.store.set_robot_limits(robot_type, q_min, q_max)

    def close(self) -> None:
        pass


class HttpStoreClient:
    def __init__(self, base_url: str):
        import httpx

        self._http = httpx.Client(base_url=base_url, timeout=60.0)

    def _post(self, path: str, payload: dict) -> dict:
        response = self._http.post(path, json=payload)
        if response.status_code >= 400:
            detail = response.json().get("detail", {})
            raise StoreError(detail.get("code", "http_error"),
                             detail.get("message", response.text))
        return response.json()

    def ingest(self, record: TrajectoryRecord) -> str:
        doc = record.to_json_dict(allow_missing_identity=True)
        return self._post("/store/ingest", {"record": doc})["record_id"]

    def query(self, q: DatasetQuery) -> list[TrajectoryRecord]:
        docs = self._post("/store/query", {"query": q.to_json_dict()})["records"]
        return [TrajectoryRecord.from_json_dict(d) for d in docs]

    def stats(self, q: DatasetQuery) -> dict:
        return self._post("/store/stats", {"query": q.to_json_dict()})["stats"]

    def histogram(self, q: DatasetQuery, joint_index: int, n_bins: int):
        doc = self._post("/store/histogram", {
            "query": q.to_json_dict(), "joint_index": joint_index, "n_bins": n_bins})
        return doc["bin_edges"], doc["counts"]

    def create_view(self, view: ShadowView) -> str:
        return self._post("/store/views", {"view": view.to_json_dict()})["view_id"]

    def resolve_view(self, view_id: str) -> list[dict]:
        response = self._http.get(f"/store/views/{view_id}/rows")
        if response.status_code >= 400:
            detail = response.json().get("detail", {})
            raise StoreError(detail.get("code", "http_error"),
                             detail.get("message", response.text))
        return response.json()["rows"]

    def ensure_robot_limits(self, robot_type, q_min, q_max) -> None:
        self._post("/store/robot-limits", {
            "robot_type": robot_type,
            "q_min": list(map(float, q_min)), "q_max": list(map(float, q_max))})

    def close(self) -> None:
        self._http.close()


class SocketStoreClient:
    def __init__(self, host: str, port: int):
        self._client = StoreClient(host, port)

    def __getattr__(self, name):
        return getattr(self._client, name)

    def ensure_robot_limits(self, robot_type, q_min, q_max) -> None:
        raise EndpointError("robot-limit configuration needs a dir: or http: "
                            "store endpoint")


def open_store_client(endpoint: str):
    kind, where = _split_endpoint(endpoint)
    if kind == "dir":
        return LocalStoreClient(where)
    if kind == "tcp":
        return SocketStoreClient(*where)
    return HttpStoreClient(where)


# --- sweep ----------------------------------------------------------------------


class LocalSweepClient:
    def __init__(self, root):
        self.coordinator = SweepCoordinator(root)

    def open_round(self, **kwargs) -> str:
        return self.coordinator.open_round(**kwargs)

    def request_config(self, round_id: str, agent_id: str):
        return self.coordinator.request_config(round_id, agent_id)

    def report_result(self, round_id, config_id, checkpoint_doc, loss,
                      post_accept=None) -> bool:
        return self.coordinator.report_result(round_id, config_id, checkpoint_doc,
                                              loss, post_accept=post_accept)

    def close_round(self, round_id: str) -> dict:
        return self.coordinator.close_round(round_id)

    def best(self, target: str):
        return self.coordinator.best(target)

    def best_checkpoint_doc(self, target: str) -> dict:
        return self.coordinator.best_checkpoint_doc(target)

    def status(self) -> dict:
        return self.coordinator.status()

    def close(self) -> None:
        pass


class HttpSweepClient:
    def __init__(self, base_url: str):
        import httpx

        self._http = httpx.Client(base_url=base_url, timeout=60.0)

    def _check(self, response):
        if response.status_code >= 400:
            detail = response.json().get("detail", {})
            raise SweepError(detail.get("code", "http_error"),
                             detail.get("message", response.text))
        return response.json()

    def open_round(self, **kwargs) -> str:
        return self._check(self._http.post("/sweep/rounds", json=kwargs))["round_id"]

    def request_config(self, round_id: str, agent_id: str):
        doc = self._check(self._http.post(f"/sweep/rounds/{round_id}/request",
                                          json={"agent_id": agent_id}))
        if doc.get("round_done"):
            return None
        return doc["config_id"], HyperParams.from_json_dict(doc["params"])

    def report_result(self, round_id, config_id, checkpoint_doc, loss,
                      post_accept=None) -> bool:
        if post_accept is not None:
            raise EndpointError("post-accept hooks run where the repository "
                                "lives; use a dir: sweep endpoint")
        doc = self._check(self._http.post(f"/sweep/rounds/{round_id}/report", json={
            "config_id": config_id, "cross_validation_loss": loss,
            "checkpoint": checkpoint_doc}))
        return bool(doc["accepted"])

    def close_round(self, round_id: str) -> dict:
        return self._check(self._http.post(f"/sweep/rounds/{round_id}/close"))

    def best(self, target: str):
        doc = self._check(self._http.get(f"/sweep/best/{target}"))
        return doc["checkpoint_id"], doc["loss"]

    def best_checkpoint_doc(self, target: str) -> dict:
        return self._check(self._http.get(f"/sweep/best/{target}/checkpoint"))

    def status(self) -> dict:
        return self._check(self._http.get("/sweep/status"))

    def close(self) -> None:
        self._http.close()


def open_sweep_client(endpoint: str):
    kind, where = _split_endpoint(endpoint)
    if kind == "dir":
        return LocalSweepClient(where)
    if kind == "http":
        return HttpSweepClient(where)
    raise EndpointError("the tcp sweep endpoint only speaks the agent protocol; "
                        "round administration needs dir: or http:")
