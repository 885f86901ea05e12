"""
Scoring one trained network
===========================

Train a small MLP on an archetype-d dataset, then compare the point-wise
errors with the curve-based measures.  Mean Fit to Ground Truth is only
available because the data are synthetic.
"""

from pathlib import Path
import tempfile

from gtbench import measures as ms
from gtbench import mlp
from gtbench import synthdata as sd

spec = sd.make_spec("d", seed=7, n_obs=20_000)
data = sd.generate(spec)
fit_rows, eval_rows = ms.holdout_split(data.n_obs, spec.seed)

net = mlp.init_network(mlp.NetworkShape.of(32, 16), data.m, seed=1)
net, report = mlp.train(net, (data.inputs[fit_rows], data.outputs[fit_rows]), mlp.TrainConfig(seed=1))
print(f"trained {net.shape} for {report.epochs_run} epochs, best validation MAE {report.best_validation_loss:.4f}")

# The partition and proxies depend only on the data and can be shared by
# every network scored on it.
part = ms.partition(data, n_bins=100, min_occupancy=5)
proxy = ms.proxy_curves(data, part)
result = ms.evaluate(net, data, spec, eval_rows=eval_rows, part=part, proxy=proxy)
for name, value in result.to_dict().items():
    print(f"{name:>12}: {value}")

# The learnt curves and both proxies can be exported for plotting.
learnt = ms.probe(net, part, data.input_medians())
out = Path(tempfile.mkdtemp()) / "curves.csv"
ms.export_curves(out, part, proxy, learnt)
print("curves written to", out)
print(out.read_text().splitlines()[50])
