"""
A small sweep and its report
============================

A sweep trains many randomly shaped networks per dataset and records every
measure.  The report regresses each normalized measure on the normalized
Mean Fit to Ground Truth.  This one is tiny, so expect noisy numbers; the
desk-scale configuration is ``ExperimentConfig()`` with one replicate.
"""

from pathlib import Path
import tempfile

from gtbench import harness

root = Path(tempfile.mkdtemp())
cfg = harness.ExperimentConfig(
    archetypes=["d", "e"], replicates_per_archetype=1, n_obs=5_000,
    networks_per_dataset=12, max_layers=2, max_width=32, n_bins=40,
    output_directory=str(root / "sweep"),
)
table = harness.run_sweep(cfg)
print(f"{len(table)} runs, {sum(r.diverged for r in table)} diverged")

# Re-running skips every completed run_id, so this returns at once.
assert harness.run_sweep(cfg) == table

summary = harness.report(root / "sweep", root / "report", min_rows=10)
print((root / "report" / "summary.txt").read_text())
for d in summary.datasets:
    print(d.archetype, "best by MFTM:", d.best_by_mftm, f"(MFGT quantile {d.best_by_mftm_mfgt_quantile:.2f})")
