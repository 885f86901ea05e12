"""Error measures: point-wise Minkowski-r errors and curve-based fits.

The curve-based measures compare a model's *learnt input-output curves* with
reference curves built from the data.  Each input's observed range is cut into
equal-width bins.  Within a bin, the median (or mean) of the observed outputs
is a proxy for the isolated relationship between that input and the output.
The model is probed at every bin midpoint with all other inputs held at their
medians.

* Mean Fit to Median: mean over inputs of the mean over occupied bins of
  ``|median(Y_ij) - p_ij|``.
* Fit to Mean: the same with bin means as the proxy.
* Mean Fit to Ground Truth: the same against the noiseless generating function
  evaluated on the probe grid (synthetic data only).

Bins holding fewer than ``min_occupancy`` observations are excluded and the
inner mean is taken over the remaining (occupied) bins.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .synthdata import Dataset, DatasetSpec, ground_truth

logger = logging.getLogger(__name__)

__all__ = [
    "MeasureUndefinedError",
    "ProbeError",
    "BinPartition",
    "ProxyCurve",
    "LearntCurve",
    "MeasureReport",
    "minkowski_error",
    "mae",
    "mse",
    "partition",
    "proxy_curves",
    "probe",
    "ground_truth_curve",
    "mean_fit_to_median",
    "fit_to_mean",
    "mean_fit_to_ground_truth",
    "holdout_split",
    "evaluate",
    "export_curves",
    "CURVE_COLUMNS",
]

DEFAULT_BINS = 100
DEFAULT_MIN_OCCUPANCY = 5
HOLDOUT_FRACTION = 0.1

CURVE_COLUMNS = ("input_index", "bin_index", "midpoint", "median_y", "mean_y", "learnt_y", "occupancy")


class MeasureUndefinedError(ValueError):
    """No input has an occupied bin, so a curve measure cannot be formed."""


class ProbeError(RuntimeError):
    def __init__(self, input_index: int, bin_index: int, cause: str):
        self.input_index, self.bin_index = input_index, bin_index
        super().__init__(f"model evaluation failed at input {input_index}, bin {bin_index}: {cause}")


# ---------------------------------------------------------------------------
# point-wise measures


def minkowski_error(y, yhat, r: float = 1.0) -> float:
    """Mean of ``|y - yhat| ** r``; ``r=1`` is MAE and ``r=2`` is MSE."""
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("empty input")
    if not r >= 1:
        raise ValueError(f"r must be >= 1, got {r}")
    d = np.abs(y - yhat)
    if r == 1:
        return float(d.mean())
    if r == 2:
        return float((d * d).mean())
    return float((d**r).mean())


def mae(y, yhat) -> float:
    return minkowski_error(y, yhat, 1)


def mse(y, yhat) -> float:
    return minkowski_error(y, yhat, 2)


# ---------------------------------------------------------------------------
# binning and proxies


@dataclass(frozen=True, eq=False)
class BinPartition:
    """Equal-width bins over the observed range of every input.

    Attributes
    ----------
    edges : (m, n_bins + 1) array
    midpoints : (m, n_bins) array
    assignment : (n_obs, m) int array
        Bin index of every observation for every input.  The last bin is
        closed on the right.
    counts : (m, n_bins) int array
    occupied : (m, n_bins) bool array
        ``counts >= min_occupancy`` on usable inputs.
    usable : (m,) bool array
        False for inputs whose observed range is degenerate.
    """

    edges: np.ndarray
    midpoints: np.ndarray
    assignment: np.ndarray
    counts: np.ndarray
    occupied: np.ndarray
    usable: np.ndarray
    min_occupancy: int

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def n_bins(self) -> int:
        return self.midpoints.shape[1]

    def members(self, j: int, i: int) -> np.ndarray:
        """Row indices of the observations in bin ``i`` of input ``j``."""
        return np.flatnonzero(self.assignment[:, j] == i)


def partition(data, n_bins: int = DEFAULT_BINS, min_occupancy: int = DEFAULT_MIN_OCCUPANCY) -> BinPartition:
    """Bin every input column of ``data`` (a Dataset or an ``(n_obs, m)`` array)."""
    X = data.inputs if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    n, m = X.shape
    edges = np.empty((m, n_bins + 1))
    assignment = np.zeros((n, m), dtype=np.intp)
    counts = np.zeros((m, n_bins), dtype=np.intp)
    usable = np.ones(m, dtype=bool)
    for j in range(m):
        lo, hi = X[:, j].min(), X[:, j].max()
        if not hi > lo:
            usable[j] = False
            logger.warning("input %d has a degenerate range and is unusable", j)
            edges[j] = lo
            continue
        edges[j] = np.linspace(lo, hi, n_bins + 1)
        idx = np.searchsorted(edges[j], X[:, j], side="right") - 1
        np.clip(idx, 0, n_bins - 1, out=idx)
        assignment[:, j] = idx
        counts[j] = np.bincount(idx, minlength=n_bins)
    midpoints = 0.5 * (edges[:, :-1] + edges[:, 1:])
    occupied = (counts >= min_occupancy) & usable[:, None]
    return BinPartition(edges, midpoints, assignment, counts, occupied, usable, min_occupancy)


@dataclass(frozen=True, eq=False)
class ProxyCurve:
    """Per-bin median and mean of the outputs; NaN where a bin is excluded."""

    midpoints: np.ndarray
    medians: np.ndarray
    means: np.ndarray
    mask: np.ndarray


def _grouped_stats(bins: np.ndarray, y: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((y, bins))
    ys = y[order]
    bounds = np.searchsorted(bins[order], np.arange(n_bins + 1))
    medians = np.full(n_bins, np.nan)
    means = np.full(n_bins, np.nan)
    for i in range(n_bins):
        lo, hi = bounds[i], bounds[i + 1]
        k = hi - lo
        if k == 0:
            continue
        mid = lo + k // 2
        medians[i] = ys[mid] if k % 2 else 0.5 * (ys[mid - 1] + ys[mid])
        means[i] = ys[lo:hi].mean()
    return medians, means


def proxy_curves(data, part: BinPartition) -> ProxyCurve:
    """Exact bin medians (even counts average the two central values) and means."""
    y = data.outputs if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if y.shape[0] != part.assignment.shape[0]:
        raise ValueError("partition was built from a different dataset")
    m, n_bins = part.m, part.n_bins
    medians = np.full((m, n_bins), np.nan)
    means = np.full((m, n_bins), np.nan)
    for j in range(m):
        if part.usable[j]:
            medians[j], means[j] = _grouped_stats(part.assignment[:, j], y, n_bins)
    medians[~part.occupied] = np.nan
    means[~part.occupied] = np.nan
    return ProxyCurve(part.midpoints, medians, means, part.occupied.copy())


# ---------------------------------------------------------------------------
# probing


@dataclass(frozen=True, eq=False)
class LearntCurve:
    """Model outputs on the probe grid, aligned with the partition midpoints."""

    values: np.ndarray
    mask: np.ndarray


def _probe_grid(part: BinPartition, input_medians) -> tuple[np.ndarray, np.ndarray]:
    med = np.asarray(input_medians, dtype=np.float64)
    if med.shape != (part.m,):
        raise ValueError(f"expected {part.m} input medians, got shape {med.shape}")
    coords = np.argwhere(part.occupied)  # (k, 2) rows of (j, i)
    grid = np.tile(med, (len(coords), 1))
    grid[np.arange(len(coords)), coords[:, 0]] = part.midpoints[coords[:, 0], coords[:, 1]]
    return coords, grid


def probe(model: Callable[[np.ndarray], np.ndarray], part: BinPartition, input_medians) -> LearntCurve:
    """Evaluate ``model`` at every occupied bin midpoint of every input.

    ``model`` maps an ``(k, m)`` array to ``k`` predictions.  Off-axis inputs
    are held at ``input_medians``.
    """
    coords, grid = _probe_grid(part, input_medians)
    try:
        out = np.asarray(model(grid), dtype=np.float64).reshape(-1)
    except Exception as exc:
        # Re-run point by point to locate the failing coordinate.
        for (j, i), row in zip(coords, grid):
            try:
                model(row[None, :])
            except Exception as inner:
                raise ProbeError(int(j), int(i), repr(inner)) from inner
        raise ProbeError(-1, -1, repr(exc)) from exc
    if out.shape[0] != len(coords):
        raise ValueError(f"model returned {out.shape[0]} values for {len(coords)} probe points")
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        j, i = coords[bad[0]]
        raise ProbeError(int(j), int(i), "non-finite prediction")
    values = np.full(part.occupied.shape, np.nan)
    values[coords[:, 0], coords[:, 1]] = out
    return LearntCurve(values, part.occupied.copy())


def ground_truth_curve(spec: DatasetSpec, part: BinPartition, input_medians) -> LearntCurve:
    """The generating function evaluated on the probe grid."""
    return probe(lambda X: ground_truth(spec, X), part, input_medians)


# ---------------------------------------------------------------------------
# curve measures


def _curve_gap(reference: np.ndarray, learnt: LearntCurve, mask: np.ndarray) -> float:
    if reference.shape != learnt.values.shape or not np.array_equal(mask, learnt.mask):
        raise ValueError("curves are not aligned on the same partition")
    per_input = []
    for j in range(mask.shape[0]):
        sel = mask[j]
        if not sel.any():
            logger.info("input %d has no occupied bins and is excluded", j)
            continue
        per_input.append(np.abs(reference[j, sel] - learnt.values[j, sel]).mean())
    if not per_input:
        raise MeasureUndefinedError("no input has an occupied bin")
    return float(np.mean(per_input))


def mean_fit_to_median(proxy: ProxyCurve, learnt: LearntCurve) -> float:
    return _curve_gap(proxy.medians, learnt, proxy.mask)


def fit_to_mean(proxy: ProxyCurve, learnt: LearntCurve) -> float:
    return _curve_gap(proxy.means, learnt, proxy.mask)


def mean_fit_to_ground_truth(spec: DatasetSpec, part: BinPartition, learnt: LearntCurve, input_medians) -> float:
    truth = ground_truth_curve(spec, part, input_medians)
    return _curve_gap(truth.values, learnt, part.occupied)


# ---------------------------------------------------------------------------
# evaluation


def holdout_split(n_obs: int, seed: int, fraction: float = HOLDOUT_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    """Fixed ``(fit_rows, eval_rows)`` split of ``range(n_obs)``, both sorted."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(7,))))
    perm = rng.permutation(n_obs)
    n_eval = max(1, int(round(n_obs * fraction)))
    return np.sort(perm[n_eval:]), np.sort(perm[:n_eval])


@dataclass
class MeasureReport:
    mae: Optional[float]
    mse: Optional[float]
    mftm: Optional[float]
    fit_to_mean: Optional[float]
    mfgt: Optional[float]
    complexity: Optional[int]
    diverged: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate(
    model,
    data: Dataset,
    spec: DatasetSpec | None = None,
    *,
    eval_rows: np.ndarray | None = None,
    part: BinPartition | None = None,
    proxy: ProxyCurve | None = None,
    input_medians=None,
    complexity: int | None = None,
    diverged: bool = False,
) -> MeasureReport:
    """All measures for one model on one dataset.

    MAE and MSE use ``eval_rows`` (by default the standard 10% holdout of the
    dataset seed).  Curve measures share one partition and proxy, which may
    be passed in to avoid recomputation.  Pass ``spec`` to get MFGT.
    """
    if diverged:
        return MeasureReport(None, None, None, None, None, complexity, True)
    if eval_rows is None:
        eval_rows = holdout_split(data.n_obs, data.spec.seed)[1]
    if part is None:
        part = partition(data)
    if proxy is None:
        proxy = proxy_curves(data, part)
    if input_medians is None:
        input_medians = data.input_medians()
    if complexity is None and hasattr(model, "shape"):
        from .mlp import complexity as _complexity

        complexity = _complexity(model)

    y = data.outputs[eval_rows]
    yhat = np.asarray(model(data.inputs[eval_rows]), dtype=np.float64).reshape(-1)
    learnt = probe(model, part, input_medians)
    mfgt = mean_fit_to_ground_truth(spec, part, learnt, input_medians) if spec is not None else None
    report = MeasureReport(
        mae=mae(y, yhat),
        mse=mse(y, yhat),
        mftm=mean_fit_to_median(proxy, learnt),
        fit_to_mean=fit_to_mean(proxy, learnt),
        mfgt=mfgt,
        complexity=complexity,
    )
    if not all(math.isfinite(v) for v in (report.mae, report.mse, report.mftm, report.fit_to_mean)):
        raise FloatingPointError("non-finite measure")
    return report


def export_curves(path, part: BinPartition, proxy: ProxyCurve, learnt: LearntCurve | None = None) -> None:
    """Write one CSV row per (input, bin); excluded bins carry empty statistics."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for j in range(part.m):
            for i in range(part.n_bins):
                occ = bool(proxy.mask[j, i])

                def fmt(v):
                    return repr(float(v)) if occ and np.isfinite(v) else ""

                w.writerow([
                    j, i, repr(float(part.midpoints[j, i])),
                    fmt(proxy.medians[j, i]), fmt(proxy.means[j, i]),
                    fmt(learnt.values[j, i]) if learnt is not None else "",
                    int(part.counts[j, i]),
                ])
