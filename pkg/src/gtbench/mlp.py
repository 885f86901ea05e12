"""Small feedforward ReLU regression networks trained with MAE and AdaMax.

Parameters live in one flat float64 vector; per-layer weight matrices
(``fan_in x fan_out``, applied as ``a @ W + b``) and bias vectors are views
into it.  Keeping them contiguous lets the optimizer update every parameter
with a handful of vector operations, and gives finite-difference checks a
single array to perturb.

Inputs and the target are z-scored inside the model.  Scalers are fitted on
the training split, and predictions and losses are always reported in the
original output units.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "NetworkShape",
    "Network",
    "NetworkEvaluationError",
    "TrainConfig",
    "TrainReport",
    "AdaMax",
    "EarlyStopping",
    "random_shape",
    "init_network",
    "forward",
    "gradient",
    "train",
    "complexity",
    "save_network",
    "load_network",
]

MAX_WIDTH = 1000
MAX_LAYERS = 3


class NetworkEvaluationError(FloatingPointError):
    """A forward pass produced a non-finite value."""

    def __init__(self, layer: int, message: str | None = None):
        self.layer = layer
        super().__init__(message or f"non-finite activation in layer {layer}")


@dataclass(frozen=True)
class NetworkShape:
    hidden_layers: int
    neurons_per_layer: tuple[int, ...]
    max_neurons: int = MAX_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "neurons_per_layer", tuple(int(n) for n in self.neurons_per_layer))
        if not 1 <= self.hidden_layers <= MAX_LAYERS:
            raise ValueError(f"hidden_layers must lie in [1, {MAX_LAYERS}], got {self.hidden_layers}")
        if len(self.neurons_per_layer) != self.hidden_layers:
            raise ValueError("need one width per hidden layer")
        if any(not 1 <= n <= self.max_neurons for n in self.neurons_per_layer):
            raise ValueError(f"layer widths must lie in [1, {self.max_neurons}]")

    @classmethod
    def of(cls, *widths: int, max_neurons: int = MAX_WIDTH) -> "NetworkShape":
        return cls(len(widths), widths, max_neurons)

    def layer_dims(self, m: int) -> list[tuple[int, int]]:
        sizes = [m, *self.neurons_per_layer, 1]
        return list(zip(sizes[:-1], sizes[1:]))

    def __str__(self):
        return "x".join(str(n) for n in self.neurons_per_layer)


def random_shape(rng: np.random.Generator, max_layers: int = MAX_LAYERS, max_width: int = 128) -> NetworkShape:
    """Uniform number of layers in ``[1, max_layers]``, then uniform widths in ``[1, max_width]``."""
    layers = int(rng.integers(1, max_layers, endpoint=True))
    widths = rng.integers(1, max_width, size=layers, endpoint=True)
    return NetworkShape(layers, tuple(int(w) for w in widths), max(max_width, 1))


def _layer_views(flat: np.ndarray, dims) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in dims:
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    return weights, biases


@dataclass(eq=False)
class Network:
    """A ReLU MLP with one linear output and built-in affine scalers."""

    shape: NetworkShape
    m: int
    params: np.ndarray
    input_mean: np.ndarray = None
    input_std: np.ndarray = None
    output_mean: float = 0.0
    output_std: float = 1.0
    weights: list = field(init=False, repr=False)
    biases: list = field(init=False, repr=False)

    def __post_init__(self):
        dims = self.shape.layer_dims(self.m)
        n_params = sum(i * o + o for i, o in dims)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (n_params,):
            raise ValueError(f"shape {self.shape} with m={self.m} needs {n_params} parameters")
        self.input_mean = np.zeros(self.m) if self.input_mean is None else np.asarray(self.input_mean, float)
        self.input_std = np.ones(self.m) if self.input_std is None else np.asarray(self.input_std, float)
        self.output_mean = float(self.output_mean)
        self.output_std = float(self.output_std)
        if np.any(self.input_std <= 0) or self.output_std <= 0:
            raise ValueError("scaler standard deviations must be positive")
        self.weights, self.biases = _layer_views(self.params, dims)

    @property
    def n_params(self) -> int:
        return self.params.size

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_mean) / self.input_std

    def destandardize_inputs(self, xs: np.ndarray) -> np.ndarray:
        return xs * self.input_std + self.input_mean

    def destandardize(self, z):
        return z * self.output_std + self.output_mean

    def standardize_output(self, y):
        return (y - self.output_mean) / self.output_std

    def fit_scalers(self, X: np.ndarray, y: np.ndarray) -> None:
        self.input_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.input_std = np.where(std > 0, std, 1.0)
        self.output_mean = float(y.mean())
        ystd = float(y.std())
        self.output_std = ystd if ystd > 0 else 1.0

    def copy(self) -> "Network":
        return Network(
            self.shape, self.m, self.params.copy(), self.input_mean.copy(), self.input_std.copy(),
            self.output_mean, self.output_std,
        )

    def __call__(self, X):
        return forward(self, X)

    def to_dict(self) -> dict:
        return {
            "shape": {"hidden_layers": self.shape.hidden_layers,
                      "neurons_per_layer": list(self.shape.neurons_per_layer),
                      "max_neurons": self.shape.max_neurons},
            "m": self.m,
            "input_scaler": {"mean": self.input_mean.tolist(), "std": self.input_std.tolist()},
            "output_scaler": {"mean": self.output_mean, "std": self.output_std},
            "layers": [{"weights": W.tolist(), "biases": b.tolist()} for W, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        shape = NetworkShape(**d["shape"])
        flat = np.concatenate(
            [np.concatenate([np.asarray(L["weights"], float).ravel(), np.asarray(L["biases"], float)])
             for L in d["layers"]]
        )
        return cls(shape, d["m"], flat, d["input_scaler"]["mean"], d["input_scaler"]["std"],
                   d["output_scaler"]["mean"], d["output_scaler"]["std"])


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict()))


def load_network(path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text()))


def init_network(shape: NetworkShape, m: int, seed: int, init_std: float = 0.1) -> Network:
    """All weights and biases drawn from ``N(0, init_std**2)``; identity scalers."""
    dims = shape.layer_dims(m)
    n_params = sum(i * o + o for i, o in dims)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return Network(shape, m, rng.normal(0.0, init_std, size=n_params))


def complexity(net: Network) -> int:
    """Number of weight connections (biases excluded)."""
    return sum(i * o for i, o in net.shape.layer_dims(net.m))


def _predict_standardized(net: Network, xs: np.ndarray) -> np.ndarray:
    a = xs
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ W + b
        if k < last:
            np.maximum(a, 0.0, out=a)
    return a[:, 0]


def forward(net: Network, x):
    """Predict in original output units.

    ``x`` may be one input vector (returns a float) or an ``(k, m)`` batch.
    Raises :class:`NetworkEvaluationError` naming the first layer (1-based;
    0 is the input scaler) whose output is not finite.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = net.standardize(np.atleast_2d(x))
    if not np.all(np.isfinite(a)):
        raise NetworkEvaluationError(0)
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ W + b
        if k < last:
            np.maximum(a, 0.0, out=a)
        if not np.all(np.isfinite(a)):
            raise NetworkEvaluationError(k + 1)
    out = net.destandardize(a[:, 0])
    return float(out[0]) if single else out


class _Backprop:
    """Reusable MAE loss/gradient evaluation bound to one network."""

    def __init__(self, net: Network):
        self.net = net
        self.grad = np.zeros_like(net.params)
        self.gW, self.gb = _layer_views(self.grad, net.shape.layer_dims(net.m))

    def __call__(self, xs: np.ndarray, y: np.ndarray) -> float:
        """MAE of the batch in output units; fills ``self.grad``."""
        net = self.net
        acts = [xs]
        a = xs
        last = len(net.weights) - 1
        for k, (W, b) in enumerate(zip(net.weights, net.biases)):
            a = a @ W + b
            if k < last:
                np.maximum(a, 0.0, out=a)
            acts.append(a)
        resid = net.destandardize(a[:, 0]) - y
        loss = float(np.abs(resid).mean())
        # d|r|/dr = sign(r), with 0 at r == 0; output scaler slope folded in.
        delta = (np.sign(resid) * (net.output_std / y.shape[0]))[:, None]
        for k in range(last, -1, -1):
            np.dot(acts[k].T, delta, out=self.gW[k])
            delta.sum(axis=0, out=self.gb[k])
            if k:
                delta = delta @ net.weights[k].T
                delta *= acts[k] > 0.0
        return loss


def gradient(net: Network, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """MAE of ``net`` on ``(X, y)`` and its gradient w.r.t. ``net.params``.

    The ReLU and absolute-value subgradients at zero are taken as 0.
    Raises ``FloatingPointError`` if the gradient is not finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.size == 0:
        raise ValueError("empty batch")
    bp = _Backprop(net)
    loss = bp(net.standardize(X), y)
    if not np.all(np.isfinite(bp.grad)):
        raise FloatingPointError("non-finite gradient")
    return loss, bp.grad


class AdaMax:
    """AdaMax (infinity-norm Adam) over a flat parameter vector.

    ``m <- b1 m + (1 - b1) g``, ``u <- max(b2 u, |g|)`` and
    ``theta <- theta - lr / (1 - b1**t) * m / u``.
    """

    def __init__(self, n_params: int, lr: float = 0.002, beta1: float = 0.9, beta2: float = 0.999):
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.m = np.zeros(n_params)
        self.u = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.u *= b2
        np.maximum(self.u, np.abs(grad), out=self.u)
        step = self.lr / (1.0 - b1**self.t)
        params -= step * self.m / np.maximum(self.u, 1e-12)
        return params


class EarlyStopping:
    """Patience counter on a validation loss (lower is better, strict improvement).

    ``update`` returns True once ``patience`` consecutive epochs have failed to
    improve on the best loss.  ``best_epoch`` is 0-based.
    """

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.counter = 0
        self.epoch = -1

    def update(self, loss: float) -> bool:
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            self.counter = 0
        else:
            self.counter += 1
        return self.counter >= self.patience


@dataclass
class TrainConfig:
    max_epochs: int = 20
    batch_size: int = 50
    patience: int = 5
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    init_std: float = 0.1
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs, batch_size and patience must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    epochs_run: int
    best_validation_loss: float
    stopped_early: bool
    diverged: bool
    best_epoch: int = -1


def _mae(net: Network, xs: np.ndarray, y: np.ndarray) -> float:
    return float(np.abs(net.destandardize(_predict_standardized(net, xs)) - y).mean())


def train(net: Network, data, cfg: TrainConfig | None = None) -> tuple[Network, TrainReport]:
    """Fit ``net`` in place on ``data`` (a Dataset or an ``(X, y)`` pair).

    A validation split of ``cfg.validation_fraction`` is held out using
    ``cfg.seed``; scalers are fitted on the remaining rows.  Minibatches are
    reshuffled every epoch.  Training stops after ``cfg.patience`` epochs
    without a strict improvement of validation MAE and the best parameters
    are restored.  A non-finite loss sets ``diverged`` and aborts.
    """
    cfg = cfg or TrainConfig()
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.inputs, data.outputs
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} rows, got {n}")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * cfg.validation_fraction)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    X_tr, y_tr = X[tr_idx], y[tr_idx]
    net.fit_scalers(X_tr, y_tr)
    xs_tr = net.standardize(X_tr)
    xs_val, y_val = net.standardize(X[val_idx]), y[val_idx]

    bp = _Backprop(net)
    opt = AdaMax(net.n_params, cfg.lr, cfg.beta1, cfg.beta2)
    stopper = EarlyStopping(cfg.patience)
    best_params = net.params.copy()
    bs = cfg.batch_size
    n_tr = y_tr.shape[0]
    diverged = stopped = False
    epochs = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.max_epochs):
            order = rng.permutation(n_tr)
            xe, ye = xs_tr[order], y_tr[order]
            for start in range(0, n_tr, bs):
                loss = bp(xe[start : start + bs], ye[start : start + bs])
                if not math.isfinite(loss):
                    diverged = True
                    break
                opt.step(net.params, bp.grad)
            epochs += 1
            if diverged:
                break
            val = _mae(net, xs_val, y_val)
            if not math.isfinite(val):
                diverged = True
                break
            stop = stopper.update(val)
            if stopper.best_epoch == stopper.epoch:
                best_params[:] = net.params
            if stop:
                stopped = True
                break

    if stopper.best_epoch >= 0:
        net.params[:] = best_params
    report = TrainReport(
        epochs_run=epochs,
        best_validation_loss=stopper.best,
        stopped_early=stopped,
        diverged=diverged,
        best_epoch=stopper.best_epoch,
    )
    return net, report
