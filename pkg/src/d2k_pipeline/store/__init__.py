from .records import (
    DatasetQuery,
    DatasetStats,
    SchemaError,
    ShadowView,
    TrajectoryRecord,
    canonical_line,
    compute_stats,
    dataset_content_hash,
    make_record,
    record_content_hash,
    utc_now_iso,
)
from .service import StoreClient, StoreServer, handle_store_request
from .store import ShadowStore, StoreError

__all__ = [
    "DatasetQuery", "DatasetStats", "SchemaError", "ShadowView",
    "TrajectoryRecord", "canonical_line", "compute_stats",
    "dataset_content_hash", "make_record", "record_content_hash",
    "utc_now_iso", "StoreClient", "StoreServer", "handle_store_request",
    "ShadowStore", "StoreError",
]
