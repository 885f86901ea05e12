"""Population-level comparison of error measures against ground-truth fit.

Each measure and the Mean Fit to Ground Truth are min-max normalized
independently over the non-diverged runs of a dataset, then compared with an
ordinary least squares fit.  R^2 is the squared Pearson correlation, so it
does not depend on the normalization or on which column is the regressor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .synthdata import ARCHETYPES, archetype_params

__all__ = [
    "TableParseError",
    "InsufficientDataError",
    "RunRecord",
    "SweepTable",
    "RegressionSummary",
    "normalize",
    "regress",
    "compare_measures",
    "compare_by_dataset",
    "grid_heatmap",
    "BifurcationReport",
    "bifurcation_report",
    "select_best",
    "rank_agreement",
    "co_movement_fraction",
    "write_heatmap_csv",
    "write_scatter_csv",
    "MEASURES",
    "HEATMAP_COLUMNS",
    "SCATTER_COLUMNS",
]

MEASURES = ("mae", "mse", "mftm", "fit_to_mean")
HEATMAP_COLUMNS = ("archetype", "sigma", "degree_range", "measure", "mean_r2", "n_replicates")
SCATTER_COLUMNS = ("run_id", "measure", "value_normalized", "mfgt_normalized", "complexity", "mftm_minus_fitmean")


class TableParseError(ValueError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    archetype: str
    dataset_seed: int
    net_seed: int
    shape: str
    complexity: int
    epochs_run: int
    diverged: bool
    mae: Optional[float] = None
    mse: Optional[float] = None
    mftm: Optional[float] = None
    fit_to_mean: Optional[float] = None
    mfgt: Optional[float] = None


COLUMNS = tuple(f.name for f in fields(RunRecord))
_INT_COLUMNS = ("dataset_seed", "net_seed", "complexity", "epochs_run")
_FLOAT_COLUMNS = ("mae", "mse", "mftm", "fit_to_mean", "mfgt")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _parse_row(row: dict, lineno: int) -> RunRecord:
    try:
        kw = {"run_id": row["run_id"], "archetype": row["archetype"], "shape": row["shape"]}
        for c in _INT_COLUMNS:
            kw[c] = int(row[c])
        if row["diverged"] not in ("0", "1"):
            raise ValueError(f"diverged must be 0 or 1, got {row['diverged']!r}")
        kw["diverged"] = row["diverged"] == "1"
        for c in _FLOAT_COLUMNS:
            kw[c] = float(row[c]) if row[c] != "" else None
    except (KeyError, TypeError, ValueError) as exc:
        raise TableParseError(lineno, str(exc)) from exc
    if not kw["run_id"]:
        raise TableParseError(lineno, "empty run_id")
    if kw["diverged"] and any(kw[c] is not None for c in _FLOAT_COLUMNS):
        raise TableParseError(lineno, "diverged run carries measure values")
    return RunRecord(**kw)


class SweepTable:
    """Per-run records of a sweep, kept sorted by ``run_id``."""

    columns = COLUMNS

    def __init__(self, rows: Iterable[RunRecord] = ()):
        self.rows = sorted(rows, key=lambda r: r.run_id)
        ids = [r.run_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate run_id in sweep table")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, SweepTable) and self.rows == other.rows

    def column(self, name: str) -> np.ndarray:
        if name in _FLOAT_COLUMNS:
            return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows])

    def where(self, **match) -> "SweepTable":
        return SweepTable(r for r in self.rows if all(getattr(r, k) == v for k, v in match.items()))

    def usable(self) -> "SweepTable":
        """Non-diverged rows with every measure present."""
        return SweepTable(
            r for r in self.rows if not r.diverged and all(getattr(r, c) is not None for c in _FLOAT_COLUMNS)
        )

    def datasets(self) -> list[tuple[str, int]]:
        """Distinct ``(archetype, dataset_seed)`` pairs in first-seen order of run_id."""
        seen = {}
        for r in self.rows:
            seen.setdefault((r.archetype, r.dataset_seed), None)
        return list(seen)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])

    @staticmethod
    def format_row(r: RunRecord) -> list[str]:
        return [_fmt(getattr(r, c)) for c in COLUMNS]

    @classmethod
    def from_csv(cls, path) -> "SweepTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TableParseError(1, "missing header") from None
            if tuple(header) != COLUMNS:
                raise TableParseError(1, f"unexpected header {header}")
            rows = []
            for lineno, values in enumerate(reader, start=2):
                if len(values) != len(COLUMNS):
                    raise TableParseError(lineno, f"expected {len(COLUMNS)} fields, got {len(values)}")
                rows.append(_parse_row(dict(zip(COLUMNS, values)), lineno))
        try:
            return cls(rows)
        except ValueError as exc:
            raise TableParseError(0, str(exc)) from exc


def normalize(column) -> np.ndarray:
    """Min-max scale to ``[0, 1]``."""
    x = np.asarray(column, dtype=np.float64)
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise ValueError("normalize needs at least two finite values")
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise ValueError("cannot normalize a constant column")
    return (x - lo) / (hi - lo)


@dataclass(frozen=True)
class RegressionSummary:
    measure_name: str
    slope: float
    intercept: float
    r_squared: float
    n_used: int
    n_excluded: int = 0


def regress(x, y, measure_name: str = "", n_excluded: int = 0) -> RegressionSummary:
    """OLS fit ``y = intercept + slope * x``; R^2 is the squared Pearson correlation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    if x.size < 3:
        raise InsufficientDataError("regression needs at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy, sxy = dx @ dx, dy @ dy, dx @ dy
    if not sxx > 0:
        raise ValueError("zero variance in x")
    slope = sxy / sxx
    r2 = 0.0 if syy == 0 else min(1.0, sxy * sxy / (sxx * syy))
    return RegressionSummary(measure_name, float(slope), float(y.mean() - slope * x.mean()), float(r2), int(x.size), n_excluded)


def compare_measures(table: SweepTable, measures: Sequence[str] = MEASURES, min_rows: int = 30) -> dict[str, RegressionSummary]:
    """Regress MFGT on each normalized measure over the usable runs."""
    usable = table.usable()
    n_excluded = len(table) - len(usable)
    if len(usable) < min_rows:
        raise InsufficientDataError(f"{len(usable)} usable rows, need at least {min_rows}")
    target = normalize(usable.column("mfgt"))
    return {
        name: regress(normalize(usable.column(name)), target, name, n_excluded)
        for name in measures
    }


def compare_by_dataset(table: SweepTable, measures: Sequence[str] = MEASURES, min_rows: int = 30):
    """``{(archetype, dataset_seed): {measure: RegressionSummary}}``."""
    return {
        (a, s): compare_measures(table.where(archetype=a, dataset_seed=s), measures, min_rows)
        for a, s in table.datasets()
    }


def grid_heatmap(summaries: Mapping[str, Sequence[Mapping[str, RegressionSummary]]], measures: Sequence[str] = MEASURES):
    """Mean R^2 per archetype laid out as the 4 x 3 noise-by-degree grid.

    ``summaries`` maps an archetype letter to its replicate summaries.
    Returns ``{measure: (mean_r2, n_replicates)}`` with ``(4, 3)`` arrays;
    absent archetypes are NaN with a count of 0.
    """
    out = {}
    for name in measures:
        grid = np.full((4, 3), np.nan)
        counts = np.zeros((4, 3), dtype=int)
        for k, letter in enumerate(ARCHETYPES):
            reps = summaries.get(letter, ())
            values = [rep[name].r_squared for rep in reps if name in rep]
            if values:
                grid[divmod(k, 3)] = float(np.mean(values))
                counts[divmod(k, 3)] = len(values)
        out[name] = (grid, counts)
    return out


@dataclass
class BifurcationReport:
    run_ids: list
    mae: np.ndarray
    mfgt: np.ndarray
    complexity: np.ndarray
    mftm_minus_fit_to_mean: np.ndarray
    complexity_correlation: dict
    fraction_positive: float


def _pearson(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def bifurcation_report(table: SweepTable) -> BifurcationReport:
    """Per-run MAE, MFGT, complexity and MFTM minus Fit to Mean, with summaries."""
    u = table.usable()
    diff = u.column("mftm") - u.column("fit_to_mean")
    cx = u.column("complexity").astype(float)
    corr = {name: _pearson(cx, u.column(name)) for name in (*MEASURES, "mfgt")}
    return BifurcationReport(
        run_ids=[r.run_id for r in u],
        mae=u.column("mae"),
        mfgt=u.column("mfgt"),
        complexity=cx,
        mftm_minus_fit_to_mean=diff,
        complexity_correlation=corr,
        fraction_positive=float(np.mean(diff > 0)) if diff.size else float("nan"),
    )


def select_best(table: SweepTable, criterion: str = "mftm") -> str:
    """``run_id`` minimizing ``criterion``; ties go to lower complexity, then lower run_id."""
    rows = [r for r in table if not r.diverged and getattr(r, criterion) is not None]
    if not rows:
        raise InsufficientDataError("no eligible runs")
    return min(rows, key=lambda r: (getattr(r, criterion), r.complexity, r.run_id)).run_id


def rank_agreement(table: SweepTable, measure: str, target: str = "mfgt") -> float:
    """Spearman rank correlation between a measure and the target over usable runs."""
    u = table.usable()
    return float(stats.spearmanr(u.column(measure), u.column(target)).statistic)


def co_movement_fraction(table: SweepTable, min_rows: int = 3) -> tuple[float, int]:
    """Fraction of datasets where the OLS slope of MAE on MFTM is positive."""
    slopes = []
    for a, s in table.datasets():
        u = table.where(archetype=a, dataset_seed=s).usable()
        if len(u) >= min_rows:
            slopes.append(regress(u.column("mftm"), u.column("mae")).slope)
    if not slopes:
        return float("nan"), 0
    return float(np.mean(np.array(slopes) > 0)), len(slopes)


def write_heatmap_csv(path, heatmaps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_COLUMNS)
        for k, letter in enumerate(ARCHETYPES):
            sigma, (lo, hi) = archetype_params(letter)
            cell = divmod(k, 3)
            for name, (grid, counts) in heatmaps.items():
                if counts[cell] == 0:
                    continue
                w.writerow([letter, repr(sigma), f"{lo}-{hi}", name, repr(float(grid[cell])), int(counts[cell])])


def write_scatter_csv(path, table: SweepTable, measures: Sequence[str] = MEASURES) -> None:
    """Normalized scatter data, normalized per dataset like the regressions."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCATTER_COLUMNS)
        for a, s in table.datasets():
            u = table.where(archetype=a, dataset_seed=s).usable()
            if len(u) < 2:
                continue
            target = normalize(u.column("mfgt"))
            diff = u.column("mftm") - u.column("fit_to_mean")
            for name in measures:
                values = normalize(u.column(name))
                for r, v, t, d in zip(u, values, target, diff):
                    w.writerow([r.run_id, name, repr(float(v)), repr(float(t)), r.complexity, repr(float(d))])
