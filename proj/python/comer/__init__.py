"""Hierarchical dialogue state tracking with a shared conditional decoder."""

from ._comer import (
    ChecksumError,
    ConfigError,
    DataError,
    Model,
    NumericError,
    corpus_stats,
    flatten_state,
    gen_synthetic,
    itm,
    load_embedding_file,
    metrics,
    parse_state,
    run_cli,
    save_embedding_file,
    tokenize,
)

__all__ = [
    "ChecksumError",
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "corpus_stats",
    "flatten_state",
    "gen_synthetic",
    "itm",
    "load_embedding_file",
    "metrics",
    "parse_state",
    "run_cli",
    "save_embedding_file",
    "tokenize",
]
