"""Socket service for the trajectory store.

Requests are length-delimited JSON frames ``{"verb": ..., ...args}``; every
response carries ``ok`` plus either the payload or ``error: {code, message}``.
Unknown verbs get an error reply and the connection stays open.
"""

from __future__ import annotations

import socket
import socketserver
import threading

from ..wire import WireError, recv_frame, send_frame
from .records import DatasetQuery, SchemaError, ShadowView, TrajectoryRecord
from .store import ShadowStore, StoreError

STORE_VERBS = ("ingest", "query", "stats", "histogram", "create_view", "resolve_view")


def handle_store_request(store: ShadowStore, request: dict) -> dict:
    """Dispatch one decoded request; always returns a response dict."""
    try:
        if not isinstance(request, dict):
            raise StoreError("bad_request", "request must be a JSON object")
        verb = request.get("verb")
        if verb == "ingest":
            record = TrajectoryRecord.from_json_dict(request.get("record"))
            return {"ok": True, "record_id": store.ingest(record)}
        if verb == "query":
            q = DatasetQuery.from_json_dict(request.get("query") or {})
            return {"ok": True,
                    "records": [r.to_json_dict() for r in store.query(q)]}
        if verb == "stats":
            q = DatasetQuery.from_json_dict(request.get("query") or {})
            return {"ok": True, "stats": store.stats(q).to_json_dict()}
        if verb == "histogram":
            q = DatasetQuery.from_json_dict(request.get("query") or {})
            edges, counts = store.histogram(
                q, int(request.get("joint_index", -1)), int(request.get("n_bins", 0)))
            return {"ok": True, "bin_edges": edges.tolist(),
                    "counts": counts.tolist()}
        if verb == "create_view":
            view = ShadowView.from_json_dict(request.get("view") or {})
            return {"ok": True, "view_id": store.create_view(view)}
        if verb == "resolve_view":
            rows = store.resolve_view(request.get("view_id"))
            return {"ok": True, "rows": rows}
        return {"ok": False,
                "error": {"code": "unknown_verb", "message": f"unknown verb {verb!r}"}}
    except SchemaError as exc:
        return {"ok": False, "error": {"code": "schema", "message": str(exc)}}
    except StoreError as exc:
        return {"ok": False, "error": {"code": exc.code, "message": str(exc)}}


class _StoreHandler(socketserver.BaseRequestHandler):
    def handle(self):
        while True:
            try:
                request = recv_frame(self.request)
            except WireError:
                return
            if request is None:
                return
            send_frame(self.request, handle_store_request(self.server.store, request))


class StoreServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, store: ShadowStore, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _StoreHandler)
        self.store = store

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class StoreClient:
    """Thin synchronous client for the socket protocol."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def call(self, verb: str, **args) -> dict:
        send_frame(self._sock, {"verb": verb, **args})
        reply = recv_frame(self._sock)
        if reply is None:
            raise WireError("server closed connection")
        return reply

    def _unwrap(self, reply: dict):
        if not reply.get("ok"):
            error = reply.get("error") or {}
            raise StoreError(error.get("code", "error"),
                             error.get("message", "request failed"))
        return reply

    def ingest(self, record: TrajectoryRecord) -> str:
        doc = record.to_json_dict(allow_missing_identity=True)
        return self._unwrap(self.call("ingest", record=doc))["record_id"]

    def query(self, q: DatasetQuery) -> list[TrajectoryRecord]:
        reply = self._unwrap(self.call("query", query=q.to_json_dict()))
        return [TrajectoryRecord.from_json_dict(doc) for doc in reply["records"]]

    def stats(self, q: DatasetQuery) -> dict:
        return self._unwrap(self.call("stats", query=q.to_json_dict()))["stats"]

    def histogram(self, q: DatasetQuery, joint_index: int, n_bins: int):
        reply = self._unwrap(self.call("histogram", query=q.to_json_dict(),
                                       joint_index=joint_index, n_bins=n_bins))
        return reply["bin_edges"], reply["counts"]

    def create_view(self, view: ShadowView) -> str:
        return self._unwrap(self.call("create_view", view=view.to_json_dict()))["view_id"]

    def resolve_view(self, view_id: str) -> list[dict]:
        return self._unwrap(self.call("resolve_view", view_id=view_id))["rows"]
