"""Python access to the mmcast toy atmosphere, metrics, loss and forecasts."""

from ._core import (
    ConfigError,
    Forecaster,
    IntegrityError,
    NumericError,
    ValidationError,
    config_keys,
    derive_seed,
    field_acc,
    field_rmse,
    latitude_weights,
    nll_gradients,
    read_archive,
    regular_latitudes,
    simulate,
    skillful_lead_time,
    uncertainty_nll,
)

__all__ = [
    "ConfigError",
    "Forecaster",
    "IntegrityError",
    "NumericError",
    "ValidationError",
    "config_keys",
    "derive_seed",
    "field_acc",
    "field_rmse",
    "latitude_weights",
    "nll_gradients",
    "read_archive",
    "regular_latitudes",
    "simulate",
    "skillful_lead_time",
    "uncertainty_nll",
]
