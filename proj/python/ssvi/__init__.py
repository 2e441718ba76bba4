"""Python bindings for the ssvi C++ core."""

from ._ssvi import (
    SsviError,
    criteria_table,
    criterion,
    criterion_names,
    ece,
    kl_to_prior,
    run_cli,
    std_normal_cdf,
    train,
    two_moons,
)

__all__ = [
    "SsviError",
    "criteria_table",
    "criterion",
    "criterion_names",
    "ece",
    "kl_to_prior",
    "run_cli",
    "std_normal_cdf",
    "train",
    "two_moons",
]
