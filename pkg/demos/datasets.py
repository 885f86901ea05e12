"""
Synthetic datasets with a known ground truth
============================================

Each archetype fixes a noise level and a range of polynomial degrees.  The
output is a weighted sum of one polynomial per input plus Gaussian noise, so
the noiseless function is available for scoring.
"""

import numpy as np

from gtbench import synthdata as sd

# The twelve archetypes form a grid: noise level by row, degree range by column.
for letter in sd.ARCHETYPES:
    sigma, (lo, hi) = sd.archetype_params(letter)
    print(f"{letter}: sigma={sigma:<6g} degrees {lo}-{hi}")

# A spec is drawn from a seed; generating it is deterministic.
spec = sd.make_spec("h", seed=3, n_obs=50_000)
data = sd.generate(spec)
print("\nweights:", np.round(spec.weights, 3))
print("degrees:", [p.degree for p in spec.polynomials])

# Residuals around the ground truth have the spread of the weighted noise.
resid = data.outputs - sd.ground_truth(spec, data.inputs)
print(f"residual std {resid.std():.3f}, expected {spec.noise_std * np.linalg.norm(spec.weights):.3f}")

# Conditioning on one input leaves the sum of the others, which is skewed
# whenever their polynomials curve.  The bin mean and median then disagree.
x0 = data.inputs[:, 0]
edges = np.quantile(x0, [0.2, 0.4, 0.6, 0.8])
for a, b in zip(edges[:-1], edges[1:]):
    y = data.outputs[(x0 >= a) & (x0 < b)]
    print(f"x0 in [{a:5.2f}, {b:5.2f}): mean {y.mean():9.2f}  median {np.median(y):9.2f}")
