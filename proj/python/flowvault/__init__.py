from ._core import (
    DataUnavailable,
    Error,
    FormatError,
    IntegrityError,
    StorageError,
    UsageError,
    evict,
    generate_trace,
    query,
    record,
    round_cents,
    stats,
    storage_cost,
)

__all__ = [
    "DataUnavailable",
    "Error",
    "FormatError",
    "IntegrityError",
    "StorageError",
    "UsageError",
    "evict",
    "generate_trace",
    "query",
    "record",
    "round_cents",
    "stats",
    "storage_cost",
]
