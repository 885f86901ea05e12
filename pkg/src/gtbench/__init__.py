"""Ground-truth benchmark for regression error measures.

Mean Fit to Median scores a trained regressor by how closely its learnt
input-output curves follow the per-bin conditional medians of the data.
This package provides the measure, a family of synthetic datasets whose
ground truth is known exactly, a small MLP trainer, and the sweep and
analysis tooling that compares measures across populations of networks.
"""

from .measures import (
    evaluate,
    fit_to_mean,
    mae,
    mean_fit_to_ground_truth,
    mean_fit_to_median,
    minkowski_error,
    mse,
    partition,
    probe,
    proxy_curves,
)
from .synthdata import Dataset, DatasetSpec, generate, ground_truth, make_spec

__all__ = [
    "Dataset", "DatasetSpec", "make_spec", "generate", "ground_truth",
    "minkowski_error", "mae", "mse", "partition", "proxy_curves", "probe",
    "mean_fit_to_median", "fit_to_mean", "mean_fit_to_ground_truth", "evaluate",
]

__version__ = "0.1.0"
