import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtbench import synthdata as sd


def single_f_spec(coefs, archetype="b", mean=5.0, noise=None, n_obs=10_000, seed=0):
    sigma, drange = sd.archetype_params(archetype)
    poly = sd.PolynomialSpec(len(coefs) - 1, tuple(coefs))
    return sd.DatasetSpec(
        archetype=archetype, n_obs=n_obs, input_means=(mean,), weights=(1.0,), polynomials=(poly,),
        noise_std=sigma if noise is None else noise, degree_range=drange, seed=seed,
    )


class TestArchetypes:
    def test_table_corners(self):
        assert sd.archetype_params("a") == (0.1, (0, 1))
        assert sd.archetype_params("c") == (0.1, (4, 5))
        assert sd.archetype_params("d") == (1.0, (0, 1))
        assert sd.archetype_params("h") == (10.0, (2, 3))
        assert sd.archetype_params("l") == (100.0, (4, 5))

    @pytest.mark.parametrize("bad", ["m", "A", "", "ab", None])
    def test_unknown_letter(self, bad):
        with pytest.raises(ValueError):
            sd.make_spec(bad, 0, 10)


class TestMakeSpec:
    @pytest.mark.parametrize("seed", range(5))
    def test_archetype_a(self, seed):
        spec = sd.make_spec("a", seed, 100)
        assert spec.noise_std == 0.1
        assert all(p.degree in (0, 1) for p in spec.polynomials)

    @pytest.mark.parametrize("seed", range(5))
    def test_archetype_l(self, seed):
        spec = sd.make_spec("l", seed, 100)
        assert spec.noise_std == 100
        assert all(p.degree in (4, 5) for p in spec.polynomials)

    def test_deterministic(self):
        assert sd.make_spec("e", 123, 500) == sd.make_spec("e", 123, 500)
        assert sd.make_spec("e", 123, 500) != sd.make_spec("e", 124, 500)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(list(sd.ARCHETYPES)), st.integers(0, 2**63 - 1))
    def test_invariants(self, archetype, seed):
        spec = sd.make_spec(archetype, seed, 10)
        w = np.array(spec.weights)
        assert abs(w.sum() - 1) <= 1e-12
        assert np.all((w >= 0) & (w <= 1))
        assert all(0 <= mu <= 10 for mu in spec.input_means)
        lo, hi = spec.degree_range
        for p in spec.polynomials:
            assert lo <= p.degree <= hi
            assert len(p.coefficients) == p.degree + 1
            assert all(-10 < c < 10 for c in p.coefficients)
            assert p.coefficients[-1] != 0

    def test_degrees_cover_range(self):
        degrees = {p.degree for s in range(20) for p in sd.make_spec("l", s, 10).polynomials}
        assert degrees == {4, 5}

    def test_spec_validation(self):
        spec = sd.make_spec("d", 0, 10)
        d = spec.to_dict()
        with pytest.raises(ValueError):
            sd.DatasetSpec.from_dict({**d, "noise_std": 10.0})
        with pytest.raises(ValueError):
            sd.DatasetSpec.from_dict({**d, "weights": [0.5] * 6})
        with pytest.raises(ValueError):
            sd.PolynomialSpec(1, (1.0, 0.0))
        with pytest.raises(ValueError):
            sd.PolynomialSpec(1, (1.0, 10.0))

    def test_dict_round_trip(self):
        spec = sd.make_spec("i", 9, 77)
        assert sd.DatasetSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


class TestPolynomial:
    def test_constant(self):
        assert sd.eval_polynomial(sd.PolynomialSpec(0, (3.5,)), 7) == 3.5

    def test_quadratic(self):
        assert sd.eval_polynomial(sd.PolynomialSpec(2, (1, 0, 2)), 3) == 19

    def test_degree_five_against_power_sum(self):
        coefs = np.random.default_rng(42).uniform(-10, 10, 6)
        p = sd.PolynomialSpec(5, tuple(coefs))
        x = 9.25
        oracle = math.fsum(c * x**i for i, c in enumerate(coefs))
        assert sd.eval_polynomial(p, x) == pytest.approx(oracle, rel=1e-12)

    def test_vectorized(self):
        p = sd.PolynomialSpec(3, (1.0, -2.0, 0.5, 0.25))
        xs = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(sd.eval_polynomial(p, xs), [p(x) for x in xs], rtol=0, atol=0)


class TestGroundTruth:
    def test_degenerate_weights(self):
        spec = sd.make_spec("e", 3, 10)
        d = spec.to_dict()
        d["weights"] = [1.0, 0, 0, 0, 0, 0]
        spec = sd.DatasetSpec.from_dict(d)
        x = np.array([1.5, 2, 3, 4, 5, 6])
        assert sd.ground_truth(spec, x) == spec.polynomials[0](1.5)

    def test_at_means(self):
        spec = sd.make_spec("h", 4, 10)
        mu = np.array(spec.input_means)
        oracle = math.fsum(w * math.fsum(c * m**i for i, c in enumerate(p.coefficients))
                           for w, p, m in zip(spec.weights, spec.polynomials, mu))
        assert sd.ground_truth(spec, mu) == pytest.approx(oracle, rel=1e-12)

    def test_constant_when_degree_zero(self):
        for seed in range(50):
            spec = sd.make_spec("a", seed, 10)
            if all(p.degree == 0 for p in spec.polynomials):
                break
        else:
            d = sd.make_spec("a", 0, 10).to_dict()
            d["polynomials"] = [{"degree": 0, "coefficients": [float(k + 1)]} for k in range(6)]
            spec = sd.DatasetSpec.from_dict(d)
        xs = np.random.default_rng(0).normal(5, 3, size=(20, 6))
        vals = sd.ground_truth(spec, xs)
        assert np.all(vals == vals[0])

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            sd.ground_truth(sd.make_spec("a", 0, 10), [1.0, 2.0])


class TestGenerate:
    def test_noiseless_limit(self):
        spec = sd.make_spec("f", 11, 2000)
        spec = sd.DatasetSpec.from_dict({**spec.to_dict(), "noise_std": 0.0})
        data = sd.generate(spec)
        np.testing.assert_array_equal(data.outputs, sd.ground_truth(spec, data.inputs))

    def test_bit_reproducible(self):
        spec = sd.make_spec("k", 5, 5000)
        a, b = sd.generate(spec), sd.generate(spec)
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert a.outputs.tobytes() == b.outputs.tobytes()

    def test_immutable(self):
        data = sd.generate(sd.make_spec("a", 0, 10))
        with pytest.raises(ValueError):
            data.inputs[0, 0] = 1.0

    def test_columns_independent_of_other_columns(self):
        spec = sd.make_spec("g", 8, 1000)
        d = spec.to_dict()
        d["input_means"] = [spec.input_means[0], 9.9, 0.1, *spec.input_means[3:]]
        other = sd.DatasetSpec.from_dict(d)
        a, b = sd.generate(spec), sd.generate(other)
        np.testing.assert_array_equal(a.inputs[:, 0], b.inputs[:, 0])
        np.testing.assert_array_equal(a.inputs[:, 3:], b.inputs[:, 3:])

    def test_sampling_statistics(self):
        spec = sd.make_spec("g", 21, 200_000)
        data = sd.generate(spec)
        # 3 standard errors: std err of the mean is 1/sqrt(n) = 0.0022, of the std ~0.0016.
        np.testing.assert_allclose(data.inputs.mean(axis=0), spec.input_means, atol=0.02)
        np.testing.assert_allclose(data.inputs.std(axis=0), 1.0, atol=0.02)

    def test_outputs_follow_generating_sum(self):
        spec = sd.make_spec("e", 2, 3000)
        data = sd.generate(spec)
        resid = data.outputs - sd.ground_truth(spec, data.inputs)
        # Noise of the weighted sum has std sigma * ||w||.
        expected = spec.noise_std * np.linalg.norm(spec.weights)
        assert resid.std() == pytest.approx(expected, rel=0.06)
        assert abs(resid.mean()) < 4 * expected / math.sqrt(3000)

    def test_skew_direction_in_curved_bins(self):
        """Bin means sit on the side of the median the curvature pushes them to.

        With the other inputs at fixed slices, y - w_j f_j(x_j) is a sum of
        w_k f_k(X_k): convex summands skew it right (mean > median), concave
        summands left.  The sign of mean - median in the central bins of any
        input must agree with the sign of the dominant curvature of the rest.
        """
        spec = sd.make_spec("h", 3, 200_000)
        data = sd.generate(spec)
        rest = np.zeros(data.n_obs)
        for k, (w, p) in enumerate(zip(spec.weights, spec.polynomials)):
            rest += w * p(data.inputs[:, k])
        # Population skew of the remaining sum under the sampling distribution.
        centred = rest - rest.mean()
        skew = np.mean(centred**3)
        x0 = data.inputs[:, 0]
        edges = np.quantile(x0, np.linspace(0.1, 0.9, 9))
        agree = 0
        for lo, hi in zip(edges[:-1], edges[1:]):
            y = data.outputs[(x0 >= lo) & (x0 < hi)]
            agree += np.sign(y.mean() - np.median(y)) == np.sign(skew)
        assert agree >= 7

    def test_heteroscedastic_for_curved_archetypes(self):
        # Spread within an x0 bin grows with |w0 f0'(x0)|, so the witness needs a
        # seed where x0 carries real weight; seed 0 does for every curved family.
        ratios = []
        for arch in "efhikl":
            data = sd.generate(sd.make_spec(arch, 0, 100_000))
            x0 = data.inputs[:, 0]
            edges = np.quantile(x0, np.linspace(0.02, 0.98, 11))
            var = [data.outputs[(x0 >= lo) & (x0 < hi)].var() for lo, hi in zip(edges[:-1], edges[1:])]
            ratios.append(max(var) / min(var))
        assert min(ratios) > 1.5, ratios


class TestJensen:
    @pytest.mark.parametrize("seed", range(10))
    def test_mean_gap(self, seed):
        spec = single_f_spec((0.0, 0.0, 1.0), noise=0.0, seed=seed)
        x = sd.generate(spec).inputs[:, 0]
        f = spec.polynomials[0]
        assert f(x).mean() > f(x.mean())

    @pytest.mark.parametrize("seed", range(10))
    def test_median_gap(self, seed):
        spec = single_f_spec((0.0, 0.0, 1.0), noise=0.0, seed=seed)
        x = sd.generate(spec).inputs[:, 0]
        fx = spec.polynomials[0](x)
        # Standard error of a sample median: 1.2533 * std / sqrt(n).
        tol = 3 * 1.2533 * fx.std() / math.sqrt(x.size)
        assert np.median(fx) >= spec.polynomials[0](np.median(x)) - tol


class TestPersistence:
    def test_round_trip(self, tmp_path):
        data = sd.generate(sd.make_spec("j", 17, 300))
        sd.save_dataset(data, tmp_path / "ds")
        back = sd.load_dataset(tmp_path / "ds")
        assert back.spec == data.spec
        np.testing.assert_array_equal(back.inputs, data.inputs)
        np.testing.assert_array_equal(back.outputs, data.outputs)
        np.testing.assert_array_equal(sd.generate(back.spec).outputs, data.outputs)

    def test_csv(self, tmp_path):
        data = sd.generate(sd.make_spec("c", 2, 40))
        sd.to_csv(data, tmp_path / "ds.csv")
        lines = (tmp_path / "ds.csv").read_text().splitlines()
        assert lines[0] == "x0,x1,x2,x3,x4,x5,y"
        assert len(lines) == 41
        table = np.loadtxt(tmp_path / "ds.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(table[:, :6], data.inputs)
        np.testing.assert_array_equal(table[:, 6], data.outputs)
