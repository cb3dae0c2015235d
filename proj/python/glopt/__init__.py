"""Learned global optimizer for noisy 1D functions."""

from ._core import (
    CheckpointError,
    GenerationFailedError,
    Model,
    NumericError,
    Spline,
    __version__,
    case_seed,
    evaluate,
    fit_spline,
    gradcheck,
    make_case,
    preset,
    published_counts,
    spline_baseline,
    train,
)

__all__ = [
    "CheckpointError",
    "GenerationFailedError",
    "Model",
    "NumericError",
    "Spline",
    "case_seed",
    "evaluate",
    "fit_spline",
    "gradcheck",
    "make_case",
    "optimize",
    "preset",
    "published_counts",
    "spline_baseline",
    "train",
]


def optimize(model, xs, ys):
    """Final position of the learned optimizer started from the spline argmin."""
    return model.run(list(xs), list(ys))["x_final"]
