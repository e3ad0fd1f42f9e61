"""Personalized GAM selection over a Rashomon set of bike-demand models."""

from ._core import (
    Dataset,
    ModelZoo,
    PgamError,
    Service,
    Session,
    analyze,
    build_zoo,
    canonical_config_ids,
    describe_config,
    encode_context,
    grid_report,
    information_gain,
    load_dataset,
    load_zoo,
    normalized_determinant,
    rating_to_reward,
    shannon_entropy,
    simulate,
)

__all__ = [
    "Dataset",
    "ModelZoo",
    "PgamError",
    "Service",
    "Session",
    "analyze",
    "build_zoo",
    "canonical_config_ids",
    "describe_config",
    "encode_context",
    "grid_report",
    "information_gain",
    "load_dataset",
    "load_zoo",
    "normalized_determinant",
    "rating_to_reward",
    "shannon_entropy",
    "simulate",
]
