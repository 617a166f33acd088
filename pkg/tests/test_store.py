import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2k_pipeline.store import (
    DatasetQuery,
    SchemaError,
    ShadowStore,
    ShadowView,
    StoreError,
    TrajectoryRecord,
    canonical_line,
    compute_stats,
    utc_now_iso,
)


def mini_record(site="llt", purpose="train", n_samples=10, n_joints=2,
                created=None, record_id=None, seed=0, **overrides):
    rng = np.random.default_rng(seed)
    fields = dict(
        robot_type="lightweight7",
        instance_id=f"{site}-arm",
        site=site,
        purpose=purpose,
        velocity_scaling=0.5,
        acceleration_scaling=0.5,
        software_commit="deadbeef",
        dt=0.01,
        q=rng.uniform(-1, 1, (n_samples, n_joints)),
        qd=rng.uniform(-1, 1, (n_samples, n_joints)),
        qdd=rng.uniform(-1, 1, (n_samples, n_joints)),
        tau=rng.uniform(-1, 1, (n_samples, n_joints)),
        record_id=record_id,
        created_utc=created,
    )
    fields.update(overrides)
    return TrajectoryRecord(**fields)


@pytest.fixture()
def store(tmp_path):
    return ShadowStore(tmp_path / "store")


def test_ingest_then_stats(store):
    store.ingest(mini_record(n_samples=100))
    stats = store.stats(DatasetQuery())
    assert stats.total_trajectories == 1
    assert stats.total_measurements_per_axis == 100
    assert stats.per_site == {"llt": {"trajectories": 1, "measurements_per_axis": 100}}


def test_bad_purpose_names_field():
    with pytest.raises(SchemaError) as err:
        mini_record(purpose="test")
    assert err.value.field == "purpose"


def test_duplicate_record_id_rejected(store):
    store.ingest(mini_record(record_id="r1", created=utc_now_iso()))
    with pytest.raises(StoreError) as err:
        store.ingest(mini_record(record_id="r1", created=utc_now_iso()))
    assert err.value.code == "duplicate"
    assert store.stats(DatasetQuery()).total_trajectories == 1


def test_query_filters_purpose_and_instance(store):
    store.ingest(mini_record(purpose="train", seed=1))
    store.ingest(mini_record(purpose="evaluation", seed=2))
    store.ingest(mini_record(site="ita", purpose="train", seed=3))
    out = store.query(DatasetQuery(purpose="evaluation"))
    assert [r.purpose for r in out] == ["evaluation"]
    out = store.query(DatasetQuery(instance_ids={"ita-arm"}))
    assert [r.instance_id for r in out] == ["ita-arm"]


def test_query_ordering_and_tiebreak(store):
    t0 = "2025-01-01T00:00:00.000Z"
    t1 = "2025-01-02T00:00:00.000Z"
    store.ingest(mini_record(record_id="b", created=t1, seed=1))
    store.ingest(mini_record(record_id="z", created=t0, seed=2))
    store.ingest(mini_record(record_id="a", created=t1, seed=3))
    out = store.query(DatasetQuery())
    assert [r.record_id for r in out] == ["z", "a", "b"]


def test_stats_additive_over_sites(store):
    for site, count in (("llt", 3), ("ita", 2), ("wzl", 4)):
        for i in range(count):
            store.ingest(mini_record(site=site, n_samples=7 + i, seed=i))
    total = store.stats(DatasetQuery())
    by_site = [store.stats(DatasetQuery(sites={s})) for s in ("llt", "ita", "wzl")]
    assert total.total_trajectories == sum(s.total_trajectories for s in by_site)
    assert total.total_measurements_per_axis == sum(
        s.total_measurements_per_axis for s in by_site)


def test_stats_single_constant_record(store):
    rec = mini_record(n_samples=5)
    rec.tau = np.full_like(rec.tau, 1.25)
    store.ingest(rec)
    stats = store.stats(DatasetQuery())
    assert stats.per_joint["tau"]["std"] == [0.0, 0.0]
    assert stats.per_joint["tau"]["mean"] == [1.25, 1.25]


def test_stats_empty_store(store):
    stats = store.stats(DatasetQuery())
    assert stats.total_trajectories == 0
    assert stats.total_measurements_per_axis == 0
    assert stats.per_joint == {}


# --- histograms ---------------------------------------------------------------


def test_histogram_requires_limits(store):
    store.ingest(mini_record())
    with pytest.raises(StoreError) as err:
        store.histogram(DatasetQuery(), 0, 10)
    assert err.value.code == "bad_request"


def test_histogram_conserves_counts(store):
    store.set_robot_limits("lightweight7", [-1.0, -1.0], [1.0, 1.0])
    store.ingest(mini_record(n_samples=50, seed=4))
    store.ingest(mini_record(n_samples=30, seed=5))
    _, counts = store.histogram(DatasetQuery(), 0, 13)
    assert sum(counts) == store.stats(DatasetQuery()).total_measurements_per_axis


def test_histogram_single_value(store):
    store.set_robot_limits("lightweight7", [-1.0], [1.0])
    rec = mini_record(n_samples=20, n_joints=1)
    rec.q = np.full_like(rec.q, 0.37)
    store.ingest(rec)
    _, counts = store.histogram(DatasetQuery(), 0, 10)
    assert sorted(counts)[-1] == 20
    assert sum(1 for c in counts if c > 0) == 1


def test_histogram_uniform_corpus_is_flat(store):
    store.set_robot_limits("lightweight7", [-1.0], [1.0])
    rng = np.random.default_rng(42)
    for i in range(10):
        rec = mini_record(n_samples=10_000, n_joints=1, seed=i)
        rec.q = rng.uniform(-1, 1, (10_000, 1))
        store.ingest(rec)
    _, counts = store.histogram(DatasetQuery(), 0, 50)
    assert sum(counts) == 100_000
    assert max(counts) / min(counts) < 1.5


def test_histogram_joint_index_out_of_range(store):
    store.set_robot_limits("lightweight7", [-1.0], [1.0])
    with pytest.raises(StoreError):
        store.histogram(DatasetQuery(), 5, 10)


# --- views --------------------------------------------------------------------


def test_view_projection_fields(store):
    store.ingest(mini_record(purpose="train"))
    view = ShadowView(query=DatasetQuery(purpose="train"),
                      projection=("record_id", "q", "tau"))
    view_id = store.create_view(view)
    rows = store.resolve_view(view_id)
    assert len(rows) == 1
    assert set(rows[0]) == {"record_id", "samples"}
    assert set(rows[0]["samples"][0]) == {"q", "tau"}


def test_view_resolution_deterministic_and_consistent(store):
    for i in range(4):
        store.ingest(mini_record(purpose="train", seed=i))
    store.ingest(mini_record(purpose="evaluation", seed=9))
    view_id = store.create_view(
        ShadowView(query=DatasetQuery(purpose="train"), projection=("record_id",)))
    first = store.resolve_view(view_id)
    second = store.resolve_view(view_id)
    assert first == second
    assert len(first) == len(store.query(DatasetQuery(purpose="train")))


def test_view_requires_projection():
    with pytest.raises(SchemaError):
        ShadowView(query=DatasetQuery(), projection=())
    with pytest.raises(SchemaError):
        ShadowView(query=DatasetQuery(), projection=("nope",))


def test_resolve_unknown_view(store):
    with pytest.raises(StoreError) as err:
        store.resolve_view("missing")
    assert err.value.code == "not_found"


# --- durability and byte-exactness --------------------------------------------


def test_restart_preserves_query_results(tmp_path):
    root = tmp_path / "store"
    store = ShadowStore(root)
    for i in range(5):
        store.ingest(mini_record(site="llt" if i % 2 else "wzl",
                                 purpose="train", seed=i))
    before = [canonical_line(r) for r in store.query(DatasetQuery())]
    view_id = store.create_view(
        ShadowView(query=DatasetQuery(sites={"llt"}), projection=("record_id",)))

    reopened = ShadowStore(root)
    after = [canonical_line(r) for r in reopened.query(DatasetQuery())]
    assert before == after
    assert reopened.resolve_view(view_id) == store.resolve_view(view_id)


def test_jsonl_round_trip_is_byte_identical(store):
    original = mini_record(seed=123)
    original.assign_identity()
    line = canonical_line(original)
    store.ingest(TrajectoryRecord.from_json_dict(json.loads(line)))
    (fetched,) = store.query(DatasetQuery())
    assert canonical_line(fetched).encode() == line.encode()


# --- query oracle property -----------------------------------------------------


@pytest.fixture(scope="module")
def seeded_corpus(tmp_path_factory):
    store = ShadowStore(tmp_path_factory.mktemp("corpus") / "store")
    rng = np.random.default_rng(0)
    sites = ("llt", "ita", "wzl")
    purposes = ("train", "validation", "evaluation")
    for i in range(40):
        store.ingest(mini_record(
            site=sites[i % 3],
            purpose=purposes[int(rng.integers(3))],
            n_samples=int(rng.integers(2, 10)),
            seed=i,
            velocity_scaling=float(np.round(rng.uniform(0.1, 1.0), 3)),
        ))
    return store


@settings(deadline=None, max_examples=60)
@given(
    purpose=st.sampled_from([None, "train", "validation", "evaluation"]),
    sites=st.one_of(st.none(), st.sets(st.sampled_from(["llt", "ita", "wzl"]))),
    vel_lo=st.floats(0.0, 1.0),
    vel_width=st.floats(0.0, 1.0),
    limit=st.one_of(st.none(), st.integers(0, 10)),
)
def test_query_equals_linear_scan(seeded_corpus, purpose, sites, vel_lo, vel_width, limit):
    query = DatasetQuery(purpose=purpose,
                         sites=sites if sites else None,
                         velocity_scaling_range=(vel_lo, vel_lo + vel_width),
                         limit=limit)
    everything = seeded_corpus.query(DatasetQuery())

    def keep(r):  # independent restatement of the filter semantics
        if purpose is not None and r.purpose != purpose:
            return False
        if sites and r.site not in sites:
            return False
        return vel_lo <= r.velocity_scaling <= vel_lo + vel_width

    expected = [r.record_id for r in everything if keep(r)]
    if limit is not None:
        expected = expected[:limit]
    got = [r.record_id for r in seeded_corpus.query(query)]
    assert got == expected


def test_malformed_range_rejected():
    with pytest.raises(SchemaError):
        DatasetQuery(velocity_scaling_range=(0.9, 0.1))


# --- paper-style seeded counts --------------------------------------------------


def test_site_count_totals(tmp_path):
    store = ShadowStore(tmp_path / "store")
    plan = {"llt": (12, 230), "ita": (3, 87), "wzl": (9, 236)}
    for site, (n_traj, n_meas) in plan.items():
        base = n_meas // n_traj
        extra = n_meas - base * n_traj
        for i in range(n_traj):
            store.ingest(mini_record(site=site, n_samples=base + (1 if i < extra else 0),
                                     n_joints=1, seed=i))
    stats = store.stats(DatasetQuery())
    assert stats.total_trajectories == 24
    assert stats.total_measurements_per_axis == 553
    assert stats.per_site["llt"]["measurements_per_axis"] == 230
