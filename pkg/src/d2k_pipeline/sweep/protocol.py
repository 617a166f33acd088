"""Agent-facing wire protocol for the sweep coordinator.

One length-delimited JSON message per frame.  Message ``type`` is one of
``request_config``, ``config``, ``report``, ``ack``, ``round_done``; the
other fields are ``agent_id``, ``config_id``, ``params``,
``cross_validation_loss``, ``accepted``.  A ``report`` may additionally
carry a ``checkpoint`` document (the message schema has no slot for the
gated artifact itself).  Unknown types get an ``error`` reply and the
connection stays open.

Round addressing: ``request_config`` draws from the oldest open round, and
a ``config_id`` embeds its round (``<round_id>#<index>``) so reports route
unambiguously.
"""

from __future__ import annotations

import socket
import socketserver
import threading

from ..learner import HyperParams
from ..wire import WireError, recv_frame, send_frame
from .coordinator import SweepCoordinator, SweepError

MESSAGE_TYPES = ("request_config", "config", "report", "ack", "round_done")


def _error_reply(code: str, message: str) -> dict:
    return {"type": "error", "error": {"code": code, "message": message}}


def handle_sweep_message(coordinator: SweepCoordinator, message: dict,
                         post_accept=None) -> dict:
    if not isinstance(message, dict):
        return _error_reply("bad_request", "message must be a JSON object")
    mtype = message.get("type")
    try:
        if mtype == "request_config":
            open_rounds = coordinator.open_rounds()
            for round_id in open_rounds:
                issued = coordinator.request_config(
                    round_id, message.get("agent_id", "anonymous"))
                if issued is not None:
                    config_id, params = issued
                    return {"type": "config", "config_id": config_id,
                            "params": params.to_json_dict()}
            return {"type": "round_done"}
        if mtype == "report":
            config_id = message.get("config_id") or ""
            round_id = config_id.split("#")[0]
            accepted = coordinator.report_result(
                round_id, config_id,
                checkpoint_doc=message.get("checkpoint") or {},
                loss=message.get("cross_validation_loss"),
                post_accept=post_accept)
            return {"type": "ack", "config_id": config_id, "accepted": accepted}
        return _error_reply("unknown_type", f"unknown message type {mtype!r}")
    except SweepError as exc:
        return _error_reply(exc.code, str(exc))


class _SweepHandler(socketserver.BaseRequestHandler):
    def handle(self):
        while True:
            try:
                message = recv_frame(self.request)
            except WireError:
                return
            if message is None:
                return
            reply = handle_sweep_message(self.server.coordinator, message,
                                         self.server.post_accept)
            send_frame(self.request, reply)


class SweepServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, coordinator: SweepCoordinator, host: str = "127.0.0.1",
                 port: int = 0, post_accept=None):
        super().__init__((host, port), _SweepHandler)
        self.coordinator = coordinator
        self.post_accept = post_accept

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class SweepAgentClient:
    """Socket client implementing the agent side of the protocol."""

    def __init__(self, host: str, port: int, agent_id: str, timeout: float = 60.0):
        self.agent_id = agent_id
        self._sock = socket.create_connection((host, port), timeout=timeout)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, message: dict) -> dict:
        send_frame(self._sock, message)
        reply = recv_frame(self._sock)
        if reply is None:
            raise WireError("server closed connection")
        if reply.get("type") == "error":
            error = reply.get("error") or {}
            raise SweepError(error.get("code", "error"),
                             error.get("message", "request failed"))
        return reply

    def request_config(self):
        """(config_id, HyperParams) or None when the round is exhausted."""
        reply = self._roundtrip({"type": "request_config", "agent_id": self.agent_id})
        if reply.get("type") == "round_done":
            return None
        return reply["config_id"], HyperParams.from_json_dict(reply["params"])

    def report(self, config_id: str, loss: float, checkpoint_doc: dict | None = None) -> bool:
        reply = self._roundtrip({
            "type": "report", "agent_id": self.agent_id, "config_id": config_id,
            "cross_validation_loss": loss, "checkpoint": checkpoint_doc or {},
        })
        return bool(reply.get("accepted"))
