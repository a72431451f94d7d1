"""Python access to the suprim planner core."""

from ._core import (
    Dataset,
    Model,
    SuprimError,
    combine_score,
    default_config,
    parse_config,
    vocabulary_entry,
    vocabulary_size,
)

__all__ = [
    "Dataset",
    "Model",
    "SuprimError",
    "combine_score",
    "default_config",
    "parse_config",
    "vocabulary_entry",
    "vocabulary_size",
]
