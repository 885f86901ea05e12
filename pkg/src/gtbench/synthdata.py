"""Synthetic regression datasets with a fully known ground truth.

Each dataset has ``m`` independent Gaussian inputs, one random polynomial per
input and an output formed as the weighted sum of the noisy polynomials::

    y = sum_j w_j * (f_j(x_j) + eps_j),    eps_j ~ N(0, sigma^2)

Twelve archetypes (``a`` to ``l``) cross four noise levels with three ranges
of polynomial degree.  All randomness is drawn from :class:`numpy.random.PCG64`
streams keyed off the dataset seed through :class:`numpy.random.SeedSequence`,
so a spec regenerates the same data bit for bit on any platform.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ARCHETYPES",
    "GenerationError",
    "PolynomialSpec",
    "DatasetSpec",
    "Dataset",
    "archetype_params",
    "make_spec",
    "eval_polynomial",
    "ground_truth",
    "generate",
    "save_dataset",
    "load_dataset",
    "to_csv",
]

NOISE_LEVELS = (0.1, 1.0, 10.0, 100.0)
DEGREE_RANGES = ((0, 1), (2, 3), (4, 5))

# Archetype letters laid out row-major: noise level by row, degree range by column.
ARCHETYPES = "abcdefghijkl"

COEF_BOUND = 10.0
MEAN_RANGE = (0.0, 10.0)

# Substream tags under the dataset seed.
_SPEC_STREAM = 0
_INPUT_STREAM = 1
_NOISE_STREAM = 2


class GenerationError(RuntimeError):
    """Raised when a generated dataset contains a non-finite value."""


def archetype_params(archetype: str) -> tuple[float, tuple[int, int]]:
    """Return ``(noise_std, (lo_degree, hi_degree))`` for an archetype letter."""
    if not isinstance(archetype, str) or len(archetype) != 1 or archetype not in ARCHETYPES:
        raise ValueError(f"unknown archetype {archetype!r}; expected one of {ARCHETYPES!r}")
    row, col = divmod(ARCHETYPES.index(archetype), len(DEGREE_RANGES))
    return NOISE_LEVELS[row], DEGREE_RANGES[col]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class PolynomialSpec:
    """Polynomial ``sum_i coefficients[i] * x**i`` with a nonzero leading term."""

    degree: int
    coefficients: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not 0 <= self.degree <= 5:
            raise ValueError(f"degree must lie in [0, 5], got {self.degree}")
        if len(self.coefficients) != self.degree + 1:
            raise ValueError(
                f"degree {self.degree} needs {self.degree + 1} coefficients, "
                f"got {len(self.coefficients)}"
            )
        if any(not -COEF_BOUND < c < COEF_BOUND for c in self.coefficients):
            raise ValueError("coefficients must lie in the open interval (-10, 10)")
        if self.coefficients[-1] == 0.0:
            raise ValueError("leading coefficient must be nonzero")

    def __call__(self, x):
        return eval_polynomial(self, x)


@dataclass(frozen=True)
class DatasetSpec:
    """Generative parameters of one synthetic dataset.

    ``noise_std`` and ``degree_range`` must agree with the archetype letter.
    The only sanctioned departure is ``noise_std=0``, a noiseless limit used
    in tests.
    """

    archetype: str
    n_obs: int
    input_means: tuple[float, ...]
    weights: tuple[float, ...]
    polynomials: tuple[PolynomialSpec, ...]
    noise_std: float
    degree_range: tuple[int, int]
    seed: int
    input_std: float = 1.0
    m: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "input_means", tuple(float(v) for v in self.input_means))
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        object.__setattr__(self, "degree_range", tuple(int(v) for v in self.degree_range))
        object.__setattr__(
            self,
            "polynomials",
            tuple(p if isinstance(p, PolynomialSpec) else PolynomialSpec(**p) for p in self.polynomials),
        )
        m = len(self.input_means)
        object.__setattr__(self, "m", m)

        sigma, degrees = archetype_params(self.archetype)
        if self.noise_std != 0.0 and self.noise_std != sigma:
            raise ValueError(f"archetype {self.archetype!r} requires noise_std={sigma}, got {self.noise_std}")
        if self.degree_range != degrees:
            raise ValueError(f"archetype {self.archetype!r} requires degree_range={degrees}")
        if self.n_obs < 1:
            raise ValueError("n_obs must be >= 1")
        if m < 1 or len(self.weights) != m or len(self.polynomials) != m:
            raise ValueError("input_means, weights and polynomials must share one length m >= 1")
        lo, hi = self.degree_range
        if any(not lo <= p.degree <= hi for p in self.polynomials):
            raise ValueError(f"polynomial degrees must lie in {self.degree_range}")
        w = np.asarray(self.weights)
        if np.any(w < 0.0) or np.any(w > 1.0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie in [0, 1] and sum to 1")
        if not self.input_std > 0.0:
            raise ValueError("input_std must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("m")
        d["polynomials"] = [
            {"degree": p.degree, "coefficients": list(p.coefficients)} for p in self.polynomials
        ]
        for key in ("input_means", "weights", "degree_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        d.pop("m", None)
        d["polynomials"] = tuple(PolynomialSpec(p["degree"], tuple(p["coefficients"])) for p in d["polynomials"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Dataset:
    """A realized sample: ``inputs`` is ``(n_obs, m)``, ``outputs`` is ``(n_obs,)``."""

    spec: DatasetSpec
    inputs: np.ndarray
    outputs: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.outputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def input_medians(self) -> np.ndarray:
        return np.median(self.inputs, axis=0)


def make_spec(archetype: str, seed: int, n_obs: int = 100_000, m: int = 6, input_std: float = 1.0) -> DatasetSpec:
    """Draw a random dataset spec of the given archetype.

    Means are ``unif(0, 10)``, each degree is uniform over the archetype's
    integer range, coefficients are ``unif(-10, 10)`` (the leading one redrawn
    on an exact zero) and weights are ``unif(0, 1)`` normalized to sum to one.
    """
    sigma, (lo, hi) = archetype_params(archetype)
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    rng = _rng(seed, _SPEC_STREAM)
    means = rng.uniform(*MEAN_RANGE, size=m)
    polys = []
    for _ in range(m):
        degree = int(rng.integers(lo, hi, endpoint=True))
        coefs = rng.uniform(-COEF_BOUND, COEF_BOUND, size=degree + 1)
        while coefs[-1] == 0.0:
            coefs[-1] = rng.uniform(-COEF_BOUND, COEF_BOUND)
        polys.append(PolynomialSpec(degree, tuple(coefs)))
    raw = rng.uniform(0.0, 1.0, size=m)
    weights = raw / raw.sum()
    return DatasetSpec(
        archetype=archetype,
        n_obs=n_obs,
        input_means=tuple(means),
        weights=tuple(weights),
        polynomials=tuple(polys),
        noise_std=sigma,
        degree_range=(lo, hi),
        seed=seed,
        input_std=input_std,
    )


def eval_polynomial(p: PolynomialSpec, x):
    """Evaluate ``p`` at ``x`` (scalar or array) with Horner's scheme."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.full_like(x, p.coefficients[-1])
    for c in reversed(p.coefficients[:-1]):
        acc = acc * x + c
    return float(acc) if acc.ndim == 0 else acc


def ground_truth(spec: DatasetSpec, x):
    """Noiseless response ``sum_j w_j f_j(x_j)``.

    ``x`` is a length-``m`` vector (returns a float) or an ``(k, m)`` array
    (returns a length-``k`` array).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.m or x.ndim not in (1, 2):
        raise ValueError(f"expected inputs with trailing dimension {spec.m}, got shape {x.shape}")
    total = np.zeros(x.shape[:-1])
    for j, (w, p) in enumerate(zip(spec.weights, spec.polynomials)):
        total = total + w * eval_polynomial(p, x[..., j])
    return float(total) if total.ndim == 0 else total


def generate(spec: DatasetSpec) -> Dataset:
    """Realize ``spec`` into a :class:`Dataset`.

    Column ``j`` of the inputs and its noise come from their own substreams,
    so changing one column's parameters never perturbs another column.
    """
    n, m = spec.n_obs, spec.m
    inputs = np.empty((n, m))
    outputs = np.zeros(n)
    for j in range(m):
        inputs[:, j] = _rng(spec.seed, _INPUT_STREAM, j).normal(spec.input_means[j], spec.input_std, size=n)
        noise = _rng(spec.seed, _NOISE_STREAM, j).normal(0.0, 1.0, size=n) * spec.noise_std
        outputs += spec.weights[j] * (eval_polynomial(spec.polynomials[j], inputs[:, j]) + noise)

    bad = np.flatnonzero(~np.isfinite(outputs))
    if bad.size:
        raise GenerationError(f"non-finite output at observation {int(bad[0])}")
    inputs.flags.writeable = False
    outputs.flags.writeable = False
    return Dataset(spec, inputs, outputs)


def save_dataset(data: Dataset, path) -> tuple[Path, Path]:
    """Write ``<path>.npz`` (columns) and ``<path>.json`` (the full spec)."""
    path = Path(path)
    npz, sidecar = path.with_suffix(".npz"), path.with_suffix(".json")
    np.savez(npz, inputs=data.inputs, outputs=data.outputs)
    sidecar.write_text(json.dumps(data.spec.to_dict(), indent=2))
    return npz, sidecar


def load_dataset(path) -> Dataset:
    path = Path(path)
    spec = DatasetSpec.from_dict(json.loads(path.with_suffix(".json").read_text()))
    with np.load(path.with_suffix(".npz")) as f:
        inputs, outputs = f["inputs"], f["outputs"]
    if inputs.shape != (spec.n_obs, spec.m) or outputs.shape != (spec.n_obs,):
        raise ValueError(f"{path}: array shapes do not match the spec sidecar")
    inputs.flags.writeable = False
    outputs.flags.writeable = False
    return Dataset(spec, inputs, outputs)


def to_csv(data: Dataset, path) -> None:
    """CSV export with header ``x0,...,x{m-1},y`` at 17 significant digits."""
    header = ",".join([f"x{j}" for j in range(data.m)] + ["y"])
    table = np.column_stack([data.inputs, data.outputs])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
