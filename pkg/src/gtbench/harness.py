"""Experiment orchestration: config, parallel sweeps and reports.

A sweep trains ``networks_per_dataset`` randomly shaped networks on each of
``replicates_per_archetype`` datasets per archetype and evaluates every one.
Every seed is a stable hash of ``(master_seed, archetype, replicate,
net_index)``.  Results therefore do not depend on scheduling or on the
number of workers.

Completed runs are appended to ``runs.csv`` in the output directory as they
finish.  Restarting a sweep skips run_ids already present.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import _svg
from .analysis import (
    MEASURES,
    InsufficientDataError,
    RunRecord,
    SweepTable,
    compare_measures,
    co_movement_fraction,
    grid_heatmap,
    normalize,
    rank_agreement,
    regress,
    select_best,
    write_heatmap_csv,
    write_scatter_csv,
)
from .measures import evaluate, holdout_split, partition, proxy_curves, ProbeError
from .mlp import MAX_LAYERS, MAX_WIDTH, TrainConfig, complexity, init_network, random_shape, train
from .synthdata import ARCHETYPES, NOISE_LEVELS, DEGREE_RANGES, generate, make_spec

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "derive_seed",
    "run_one",
    "run_sweep",
    "load_table",
    "summarize",
    "DatasetSummary",
    "SweepSummary",
    "report",
    "ReportError",
    "THREADS_ENV",
]

THREADS_ENV = "GT_BENCH_THREADS"
JOURNAL = "runs.csv"
CONFIG_SNAPSHOT = "config.json"

# Fields that may differ between an interrupted sweep and its resumption.
_RUNTIME_FIELDS = ("worker_count", "output_directory")


class ReportError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    archetypes: list = field(default_factory=lambda: list(ARCHETYPES))
    replicates_per_archetype: int = 3
    n_obs: int = 100_000
    networks_per_dataset: int = 150
    max_layers: int = MAX_LAYERS
    max_width: int = 128
    n_bins: int = 100
    min_occupancy: int = 5
    master_seed: int = 0
    worker_count: int = 1
    output_directory: str = "sweep"

    def __post_init__(self):
        self.archetypes = list(self.archetypes)
        bad = [a for a in self.archetypes if a not in ARCHETYPES or len(a) != 1]
        if bad or not self.archetypes:
            raise ValueError(f"archetypes must be a non-empty subset of {ARCHETYPES!r}, got {bad or '[]'}")
        if len(set(self.archetypes)) != len(self.archetypes):
            raise ValueError("archetypes must be distinct")
        for name in ("replicates_per_archetype", "networks_per_dataset", "worker_count", "min_occupancy"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.max_layers <= MAX_LAYERS:
            raise ValueError(f"max_layers must lie in [1, {MAX_LAYERS}]")
        if not 1 <= self.max_width <= MAX_WIDTH:
            raise ValueError(f"max_width must lie in [1, {MAX_WIDTH}]")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.n_obs < 100:
            raise ValueError("n_obs must be >= 100")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def experiment_key(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in _RUNTIME_FIELDS}


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from a master seed and a tuple of labels."""
    h = hashlib.blake2b(repr((int(master_seed), *parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def run_id(archetype: str, replicate: int, net_index: int) -> str:
    return f"{archetype}{replicate:02d}-{net_index:05d}"


@dataclass(frozen=True, eq=False)
class _DatasetContext:
    spec: object
    data: object
    fit_rows: np.ndarray
    eval_rows: np.ndarray
    part: object
    proxy: object
    medians: np.ndarray


@lru_cache(maxsize=2)
def _dataset_context(archetype: str, dataset_seed: int, n_obs: int, n_bins: int, min_occupancy: int) -> _DatasetContext:
    spec = make_spec(archetype, dataset_seed, n_obs)
    data = generate(spec)
    fit_rows, eval_rows = holdout_split(n_obs, dataset_seed)
    part = partition(data, n_bins, min_occupancy)
    return _DatasetContext(spec, data, fit_rows, eval_rows, part, proxy_curves(data, part), data.input_medians())


def run_one(cfg: ExperimentConfig, archetype: str, replicate: int, net_index: int) -> RunRecord:
    """Train and evaluate a single network of the sweep."""
    dataset_seed = derive_seed(cfg.master_seed, "dataset", archetype, replicate)
    net_seed = derive_seed(cfg.master_seed, "net", archetype, replicate, net_index)
    ctx = _dataset_context(archetype, dataset_seed, cfg.n_obs, cfg.n_bins, cfg.min_occupancy)

    shape_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(net_seed, spawn_key=(1,))))
    shape = random_shape(shape_rng, cfg.max_layers, cfg.max_width)
    tcfg = TrainConfig(seed=derive_seed(net_seed, "train"))
    net = init_network(shape, ctx.data.m, net_seed, tcfg.init_std)
    data = ctx.data
    with threadpool_limits(1):
        net, rep = train(net, (data.inputs[ctx.fit_rows], data.outputs[ctx.fit_rows]), tcfg)
        base = dict(
            run_id=run_id(archetype, replicate, net_index), archetype=archetype, dataset_seed=dataset_seed,
            net_seed=net_seed, shape=str(shape), complexity=complexity(net), epochs_run=rep.epochs_run,
        )
        if rep.diverged:
            return RunRecord(diverged=True, **base)
        try:
            m = evaluate(net, data, ctx.spec, eval_rows=ctx.eval_rows, part=ctx.part, proxy=ctx.proxy,
                         input_medians=ctx.medians)
        except (FloatingPointError, ProbeError) as exc:
            logger.warning("run %s produced non-finite predictions: %s", base["run_id"], exc)
            return RunRecord(diverged=True, **base)
    return RunRecord(diverged=False, mae=m.mae, mse=m.mse, mftm=m.mftm, fit_to_mean=m.fit_to_mean, mfgt=m.mfgt, **base)


def _tasks(cfg: ExperimentConfig) -> Iterator[tuple[str, int, int]]:
    for a in cfg.archetypes:
        for rep in range(cfg.replicates_per_archetype):
            for k in range(cfg.networks_per_dataset):
                yield a, rep, k


def _worker(args):
    cfg, a, rep, k = args
    return run_one(cfg, a, rep, k)


def _read_journal(path: Path) -> list[RunRecord]:
    """Completed rows of the journal; a torn final line is cut off the file."""
    text = path.read_text()
    if text and not text.endswith("\n"):
        keep = text.rfind("\n") + 1
        logger.warning("discarding incomplete trailing row in %s", path)
        with open(path, "r+") as fh:
            fh.truncate(keep)
    return SweepTable.from_csv(path).rows


def effective_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return n
    return cfg.worker_count


def run_sweep(cfg: ExperimentConfig, max_new_runs: Optional[int] = None) -> SweepTable:
    """Run (or resume) a sweep and return the full table.

    ``max_new_runs`` stops after that many newly completed runs, leaving the
    journal in the same state as an interrupted sweep.
    """
    out = Path(cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = out / CONFIG_SNAPSHOT
    if snapshot.exists():
        previous = ExperimentConfig.from_json(snapshot)
        if previous.experiment_key() != cfg.experiment_key():
            raise ValueError(f"{out} holds a sweep with a different configuration")
    else:
        cfg.to_json(snapshot)

    journal = out / JOURNAL
    if not journal.exists():
        journal.write_text(",".join(SweepTable.columns) + "\n")
    done = {r.run_id for r in _read_journal(journal)}
    todo = [t for t in _tasks(cfg) if run_id(*t) not in done]
    if max_new_runs is not None:
        todo = todo[:max_new_runs]
    workers = effective_workers(cfg)
    logger.info("sweep %s: %d done, %d to run on %d worker(s)", out, len(done), len(todo), workers)

    with open(journal, "a", newline="") as fh:

        def record(row: RunRecord):
            fh.write(",".join(SweepTable.format_row(row)) + "\n")
            fh.flush()

        if workers == 1 or len(todo) <= 1:
            for i, t in enumerate(todo, 1):
                record(run_one(cfg, *t))
                if i % 50 == 0:
                    logger.info("%d/%d runs complete", i, len(todo))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_worker, (cfg, *t)) for t in todo]
                for i, fut in enumerate(as_completed(futures), 1):
                    record(fut.result())
                    if i % 50 == 0:
                        logger.info("%d/%d runs complete", i, len(todo))
    return SweepTable(_read_journal(journal))


def load_table(path) -> SweepTable:
    path = Path(path)
    return SweepTable.from_csv(path / JOURNAL if path.is_dir() else path)


# ---------------------------------------------------------------------------
# reporting


@dataclass
class DatasetSummary:
    archetype: str
    dataset_seed: int
    n_used: int
    n_excluded: int
    regressions: dict
    spearman: dict
    best_by_mftm: str
    best_by_mftm_mfgt_quantile: float
    complexity_mfgt_corr: float

    @property
    def r2(self) -> dict:
        return {k: v.r_squared for k, v in self.regressions.items()}

    @property
    def improvement(self) -> float:
        return self.r2["mftm"] - self.r2["mae"]


@dataclass
class SweepSummary:
    datasets: list
    heatmaps: dict
    co_movement: float
    co_movement_n: int

    def by_archetype(self) -> dict:
        out = {}
        for d in self.datasets:
            out.setdefault(d.archetype, []).append(d)
        return out

    def archetype_r2(self, measure: str) -> dict:
        return {a: float(np.mean([d.r2[measure] for d in ds])) for a, ds in self.by_archetype().items()}

    @property
    def mean_improvement_datasets(self) -> float:
        return float(np.mean([d.improvement for d in self.datasets]))

    @property
    def mean_improvement_archetypes(self) -> float:
        mf, ma = self.archetype_r2("mftm"), self.archetype_r2("mae")
        return float(np.mean([mf[a] - ma[a] for a in mf]))

    def archetypes_mftm_beats_mae(self) -> int:
        mf, ma = self.archetype_r2("mftm"), self.archetype_r2("mae")
        return sum(mf[a] > ma[a] for a in mf)


def summarize(table: SweepTable, min_rows: int = 30) -> SweepSummary:
    """Per-dataset regression, rank and selection statistics for a sweep."""
    datasets = []
    for a, s in table.datasets():
        sub = table.where(archetype=a, dataset_seed=s)
        summaries = compare_measures(sub, MEASURES, min_rows)
        u = sub.usable()
        best = select_best(u, "mftm")
        mfgt = u.column("mfgt")
        best_mfgt = mfgt[[r.run_id for r in u].index(best)]
        cx = u.column("complexity").astype(float)
        datasets.append(DatasetSummary(
            archetype=a,
            dataset_seed=s,
            n_used=len(u),
            n_excluded=len(sub) - len(u),
            regressions=summaries,
            spearman={k: rank_agreement(u, k) for k in MEASURES},
            best_by_mftm=best,
            best_by_mftm_mfgt_quantile=float(np.mean(mfgt <= best_mfgt)),
            complexity_mfgt_corr=float(np.corrcoef(cx, mfgt)[0, 1]) if cx.std() > 0 else float("nan"),
        ))
    if not datasets:
        raise InsufficientDataError("table holds no datasets")
    by_arch = {}
    for d in datasets:
        by_arch.setdefault(d.archetype, []).append(d.regressions)
    heatmaps = grid_heatmap(by_arch, MEASURES)
    frac, n = co_movement_fraction(table)
    return SweepSummary(datasets, heatmaps, frac, n)


def _summary_text(summary: SweepSummary, table: SweepTable) -> str:
    lines = ["Measure comparison against Mean Fit to Ground Truth (R^2 of OLS on min-max normalized values)", ""]
    head = f"{'dataset':<24}{'used':>6}{'excl':>6}{'R2 MAE':>9}{'R2 MSE':>9}{'R2 MFTM':>9}{'R2 FtM':>9}{'delta':>9}{'rho MAE':>9}{'rho MFTM':>9}{'best q':>8}"
    lines.append(head)
    for d in summary.datasets:
        lines.append(
            f"{d.archetype + ':' + str(d.dataset_seed)[:20]:<24}{d.n_used:>6}{d.n_excluded:>6}"
            f"{d.r2['mae']:>9.4f}{d.r2['mse']:>9.4f}{d.r2['mftm']:>9.4f}{d.r2['fit_to_mean']:>9.4f}"
            f"{d.improvement:>9.4f}{d.spearman['mae']:>9.4f}{d.spearman['mftm']:>9.4f}"
            f"{d.best_by_mftm_mfgt_quantile:>8.3f}"
        )
    mf, ma = summary.archetype_r2("mftm"), summary.archetype_r2("mae")
    lines += ["", "Per archetype (mean over replicates):", f"{'arch':<6}{'R2 MAE':>9}{'R2 MFTM':>9}{'delta':>9}"]
    for a in sorted(mf):
        lines.append(f"{a:<6}{ma[a]:>9.4f}{mf[a]:>9.4f}{mf[a] - ma[a]:>9.4f}")
    n_div = sum(r.diverged for r in table)
    corr = [d.complexity_mfgt_corr for d in summary.datasets]
    lines += [
        "",
        f"archetypes with R2(MFTM) > R2(MAE): {summary.archetypes_mftm_beats_mae()} of {len(mf)}",
        f"datasets with R2(MFTM) > R2(MAE): {sum(d.improvement > 0 for d in summary.datasets)} of {len(summary.datasets)}",
        f"mean R2 improvement over datasets: {summary.mean_improvement_datasets:.4f}",
        f"mean R2 improvement over archetypes: {summary.mean_improvement_archetypes:.4f}",
        f"datasets where MAE falls as MFTM falls: {summary.co_movement:.3f} of {summary.co_movement_n}",
        f"mean |corr(complexity, MFGT)|: {np.nanmean(np.abs(corr)):.4f} (max {np.nanmax(np.abs(corr)):.4f})",
        f"runs: {len(table)} total, {n_div} diverged and excluded",
        "",
    ]
    return "\n".join(lines)


def report(table_path, out_dir, min_rows: int = 30) -> SweepSummary:
    """Write heatmap/scatter CSVs, SVG plots and ``summary.txt`` for a sweep table.

    Everything is computed before the first file is written, so a table that
    cannot be analysed leaves ``out_dir`` untouched.  ``min_rows`` is the
    number of usable runs each dataset needs for its regressions.
    """
    table = load_table(table_path)
    try:
        summary = summarize(table, min_rows)
    except (InsufficientDataError, ValueError) as exc:
        raise ReportError(f"cannot analyse {table_path}: {exc}") from exc

    files: dict[str, str] = {"summary.txt": _summary_text(summary, table)}
    rows = [f"{s:g}" for s in NOISE_LEVELS]
    cols = [f"P{lo}-{hi}" for lo, hi in DEGREE_RANGES]
    for name in ("mae", "mftm"):
        grid, _ = summary.heatmaps[name]
        files[f"heatmap_{name}.svg"] = _svg.heatmap(grid, rows, cols, f"mean R^2 of {name.upper()} vs MFGT")
    for a, s in table.datasets():
        u = table.where(archetype=a, dataset_seed=s).usable()
        target = normalize(u.column("mfgt"))
        for name in ("mae", "mftm"):
            x = normalize(u.column(name))
            fit = regress(x, target)
            files[f"scatter_{a}_{s}_{name}.svg"] = _svg.scatter(
                x, target, f"archetype {a}: {name.upper()} vs MFGT", f"{name.upper()} (normalized)",
                "MFGT (normalized)", (fit.intercept, fit.slope),
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        tmp = Path(tmp)
        write_heatmap_csv(tmp / "heatmap.csv", summary.heatmaps)
        write_scatter_csv(tmp / "scatter.csv", table)
        for name, text in files.items():
            (tmp / name).write_text(text)
        for f in sorted(tmp.iterdir()):
            os.replace(f, out / f.name)
    return summary
