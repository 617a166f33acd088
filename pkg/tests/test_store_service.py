import socket

import pytest

from d2k_pipeline.store import (
    DatasetQuery,
    ShadowStore,
    ShadowView,
    StoreClient,
    StoreError,
    StoreServer,
)
from d2k_pipeline.wire import recv_frame, send_frame

from test_store import mini_record


@pytest.fixture()
def server(tmp_path):
    store = ShadowStore(tmp_path / "store")
    store.set_robot_limits("lightweight7", [-1.0, -1.0], [1.0, 1.0])
    srv = StoreServer(store, port=0)
    srv.serve_in_background()
    yield srv
    srv.shutdown()
    srv.server_close()


def test_ingest_query_stats_over_socket(server):
    host, port = server.address
    with StoreClient(host, port) as client:
        rid = client.ingest(mini_record(n_samples=25))
        assert isinstance(rid, str)
        records = client.query(DatasetQuery())
        assert [r.record_id for r in records] == [rid]
        stats = client.stats(DatasetQuery())
        assert stats["total_trajectories"] == 1
        assert stats["total_measurements_per_axis"] == 25
        edges, counts = client.histogram(DatasetQuery(), 0, 5)
        assert len(edges) == 6
        assert sum(counts) == 25


def test_views_over_socket(server):
    host, port = server.address
    with StoreClient(host, port) as client:
        client.ingest(mini_record(purpose="train"))
        view_id = client.create_view(
            ShadowView(query=DatasetQuery(purpose="train"), projection=("record_id",)))
        rows = client.resolve_view(view_id)
        assert len(rows) == 1
        with pytest.raises(StoreError) as err:
            client.resolve_view("nope")
        assert err.value.code == "not_found"


def test_schema_error_carries_field_name(server):
    host, port = server.address
    with StoreClient(host, port) as client:
        record = mini_record()
        record.assign_identity()
        doc = record.to_json_dict()
        doc["purpose"] = "test"
        reply = client.call("ingest", record=doc)
        assert reply["ok"] is False
        assert reply["error"]["code"] == "schema"
        assert "purpose" in reply["error"]["message"]


def test_unknown_verb_keeps_connection_open(server):
    host, port = server.address
    sock = socket.create_connection((host, port), timeout=10)
    try:
        send_frame(sock, {"verb": "frobnicate"})
        reply = recv_frame(sock)
        assert reply["ok"] is False
        assert reply["error"]["code"] == "unknown_verb"
        # connection must still be usable
        send_frame(sock, {"verb": "stats", "query": {}})
        reply = recv_frame(sock)
        assert reply["ok"] is True
    finally:
        sock.close()


def test_concurrent_ingest_is_atomic(server):
    import threading

    host, port = server.address
    errors = []

    def worker(worker_id):
        try:
            with StoreClient(host, port) as client:
                for i in range(10):
                    client.ingest(mini_record(seed=worker_id * 100 + i))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    with StoreClient(host, port) as client:
        stats = client.stats(DatasetQuery())
        assert stats["total_trajectories"] == 40
