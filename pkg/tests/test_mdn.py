import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from stochparam import mdn
from stochparam.mdn import (
    DeterministicModel,
    MixtureParams,
    PolyAr1Model,
    TrainConfig,
    TrainingDivergedError,
    fit_poly_ar1,
    forward,
    gradient_check,
    head_size,
    log_likelihood,
    mixture_mean,
    sample_mixture,
    train_deterministic,
    train_mdn,
)

TINY = TrainConfig(hidden=(8,), n_components=2, seed=0)


def small_model(mode="nonlocal", input_dim=2, target_dim=2, seed=0, cfg=TINY):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((64, input_dim))
    m = rng.standard_normal((64, target_dim))
    stats = (x.mean(0), x.std(0), m.mean(0), m.std(0))
    d_in = 1 if mode == "strongly-local" else input_dim
    d_out = 1 if mode == "strongly-local" else target_dim
    return mdn._new_model(mode, d_in, d_out, cfg, stats if mode != "strongly-local" else (
        np.zeros(1), np.ones(1), np.zeros(1), np.ones(1)))


class TestHeadSize:
    def test_exact_sizes_for_eight_sites(self):
        assert head_size("nonlocal", 8, 32) == 32 * (1 + 8 + 36) == 1440
        assert head_size("weakly-local", 8, 32) == 32 * 17 == 544
        assert head_size("strongly-local", 8, 32) == 96

    def test_scaling_with_dimension(self):
        # quadratic / linear / constant growth in the error dimension
        quad = [head_size("nonlocal", d, 4) for d in (4, 8, 16)]
        lin = [head_size("weakly-local", d, 4) for d in (4, 8, 16)]
        const = [head_size("strongly-local", d, 4) for d in (4, 8, 16)]
        assert quad[2] - quad[1] > quad[1] - quad[0]
        assert lin[2] - lin[1] == 2 * (lin[1] - lin[0])
        assert const[0] == const[1] == const[2]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            head_size("global", 8, 32)


class TestForward:
    def test_weights_sum_to_one(self):
        model = small_model()
        rng = np.random.default_rng(1)
        params = forward(model, rng.standard_normal((10, 2)))
        np.testing.assert_allclose(params.weights.sum(axis=-1), 1.0, atol=1e-12)
        params.validate()

    def test_zero_weight_network_head_biases_determine_output(self):
        model = small_model()
        for i in range(0, len(model.weights), 2):
            model.weights[i] = np.zeros_like(model.weights[i])
        a = forward(model, np.array([5.0, -3.0]))
        b = forward(model, np.array([-2.0, 7.0]))
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.scale_tril, b.scale_tril)

    def test_determinism(self):
        model = small_model()
        x = np.array([0.3, -1.2])
        a, b = forward(model, x), forward(model, x)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_input_dimension_checked(self):
        with pytest.raises(ValueError, match="dimension"):
            forward(small_model(), np.zeros(5))

    def test_weakly_local_has_diagonal_parameterisation(self):
        model = small_model(mode="weakly-local")
        params = forward(model, np.zeros(2))
        assert params.scale_tril is None
        assert params.scales.shape == (2, 2)
        assert np.all(params.scales > 0)

    def test_strongly_local_accepts_scalar_site_batches(self):
        model = small_model(mode="strongly-local")
        params = forward(model, np.array([0.1, 0.2, 0.3]))
        assert params.means.shape == (3, 2, 1)


class TestLogLikelihood:
    def test_standard_normal_at_mode(self):
        params = MixtureParams(
            weights=np.array([1.0]),
            means=np.zeros((1, 3)),
            scale_tril=np.eye(3)[None],
        )
        expected = -1.5 * math.log(2.0 * math.pi)
        assert log_likelihood(params, np.zeros(3)) == pytest.approx(expected, abs=1e-12)

    def test_duplicated_component_degeneracy(self):
        single = MixtureParams(
            weights=np.array([1.0]), means=np.array([[0.5, -0.2]]),
            scale_tril=np.array([[[1.2, 0.0], [0.3, 0.8]]]),
        )
        double = MixtureParams(
            weights=np.array([0.5, 0.5]),
            means=np.repeat(single.means, 2, axis=0),
            scale_tril=np.repeat(single.scale_tril, 2, axis=0),
        )
        m = np.array([0.1, 0.7])
        assert log_likelihood(double, m) == pytest.approx(log_likelihood(single, m), abs=1e-12)

    def test_matches_naive_summation_oracle(self):
        rng = np.random.default_rng(2)
        k, d = 4, 3
        tril = np.zeros((k, d, d))
        rows, cols = np.tril_indices(d, -1)
        tril[:, rows, cols] = 0.3 * rng.standard_normal((k, rows.size))
        idx = np.arange(d)
        tril[:, idx, idx] = np.exp(0.2 * rng.standard_normal((k, d)))
        w = rng.dirichlet(np.ones(k))
        means = rng.standard_normal((k, d))
        params = MixtureParams(weights=w, means=means, scale_tril=tril)
        m = rng.standard_normal(d)
        naive = sum(
            w[i] * multivariate_normal(means[i], tril[i] @ tril[i].T).pdf(m)
            for i in range(k)
        )
        assert log_likelihood(params, m) == pytest.approx(math.log(naive), rel=1e-10)

    def test_diag_matches_full_with_diagonal_tril(self):
        rng = np.random.default_rng(3)
        scales = np.exp(0.3 * rng.standard_normal((2, 3)))
        means = rng.standard_normal((2, 3))
        w = np.array([0.4, 0.6])
        as_diag = MixtureParams(weights=w, means=means, scales=scales)
        tril = np.zeros((2, 3, 3))
        idx = np.arange(3)
        tril[:, idx, idx] = scales
        as_full = MixtureParams(weights=w, means=means, scale_tril=tril)
        m = rng.standard_normal(3)
        assert log_likelihood(as_diag, m) == pytest.approx(log_likelihood(as_full, m), rel=1e-12)

    def test_dimension_mismatch(self):
        params = MixtureParams(
            weights=np.array([1.0]), means=np.zeros((1, 3)), scale_tril=np.eye(3)[None]
        )
        with pytest.raises(ValueError):
            log_likelihood(params, np.zeros(2))


class TestGradientCheck:
    def test_full_covariance_model(self):
        model = small_model("nonlocal")
        rng = np.random.default_rng(4)
        batch = (rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
        assert gradient_check(model, batch) < 1e-4

    def test_diagonal_model(self):
        model = small_model("weakly-local")
        rng = np.random.default_rng(5)
        batch = (rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
        assert gradient_check(model, batch) < 1e-4

    def test_deterministic_model(self):
        cfg = TrainConfig(hidden=(8,), epochs=1, batch_size=16, seed=0)
        rng = np.random.default_rng(6)
        det = train_deterministic((rng.standard_normal((64, 2)), rng.standard_normal((64, 2))), cfg)
        batch = (rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
        assert gradient_check(det, batch) < 1e-4

    def test_zero_gradient_direction(self):
        """An input coordinate that is identically zero gives exactly zero
        gradient for its first-layer weights, analytically and by FD."""
        model = small_model("nonlocal")
        model.x_mean = np.zeros(2)
        model.x_std = np.ones(2)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((8, 2))
        x[:, 1] = 0.0
        m = rng.standard_normal((8, 2))
        _, grads = mdn._nll_and_grads(model.weights, x, m, 2, 2, "full")
        np.testing.assert_array_equal(grads[0][1, :], np.zeros(model.weights[0].shape[1]))
        assert gradient_check(model, (x, m)) < 1e-4

    def test_gradient_linearity_over_batches(self):
        """The batch-mean loss gradient is the mean of the half-batch
        gradients (doubling the loss doubles every gradient)."""
        model = small_model("nonlocal")
        rng = np.random.default_rng(8)
        x = rng.standard_normal((8, 2))
        m = rng.standard_normal((8, 2))
        _, g_all = mdn._nll_and_grads(model.weights, x, m, 2, 2, "full")
        _, g_a = mdn._nll_and_grads(model.weights, x[:4], m[:4], 2, 2, "full")
        _, g_b = mdn._nll_and_grads(model.weights, x[4:], m[4:], 2, 2, "full")
        for ga, gb, gc in zip(g_a, g_b, g_all):
            np.testing.assert_allclose(0.5 * (ga + gb), gc, rtol=1e-12, atol=1e-15)


class TestSampling:
    def test_tiny_covariance_concentrates_at_mean(self):
        params = MixtureParams(
            weights=np.array([1.0]),
            means=np.zeros((1, 2)),
            scale_tril=1e-12 * np.eye(2)[None],
        )
        draws = np.array([sample_mixture(params, np.random.default_rng(i)) for i in range(50)])
        assert np.max(np.abs(draws)) < 1e-10

    def test_monte_carlo_mean_matches_mixture_mean(self):
        rng = np.random.default_rng(9)
        params = MixtureParams(
            weights=np.array([0.3, 0.7]),
            means=np.array([[1.0, 0.0], [-1.0, 2.0]]),
            scales=np.array([[0.5, 0.5], [0.2, 0.3]]),
        )
        n = 100_000
        batched = MixtureParams(
            weights=np.broadcast_to(params.weights, (n, 2)).copy(),
            means=np.broadcast_to(params.means, (n, 2, 2)).copy(),
            scales=np.broadcast_to(params.scales, (n, 2, 2)).copy(),
        )
        draws = sample_mixture(batched, rng)
        expected = mixture_mean(params)
        comp_var = (params.weights[:, None] * (params.scales**2 + params.means**2)).sum(0)
        sigma = np.sqrt(comp_var - expected**2)
        np.testing.assert_allclose(draws.mean(axis=0), expected, atol=4.0 * sigma.max() / math.sqrt(n))

    def test_component_frequencies_match_weights(self):
        rng = np.random.default_rng(10)
        w = np.array([0.2, 0.5, 0.3])
        n = 50_000
        params = MixtureParams(
            weights=np.broadcast_to(w, (n, 3)).copy(),
            means=np.stack([np.full((n, 1), 0.0), np.full((n, 1), 100.0), np.full((n, 1), 200.0)], axis=1),
            scales=np.full((n, 3, 1), 1e-3),
        )
        draws = sample_mixture(params, rng).ravel()
        counts = np.array([(np.abs(draws - c) < 50).sum() for c in (0.0, 100.0, 200.0)])
        # 99% multinomial bounds: ~2.58 sigma per cell
        for c, p in zip(counts, w):
            assert abs(c - n * p) < 2.58 * math.sqrt(n * p * (1 - p)) + 1

    def test_full_covariance_sampling_covariance(self):
        rng = np.random.default_rng(11)
        tril = np.array([[1.0, 0.0], [0.8, 0.6]])
        n = 100_000
        params = MixtureParams(
            weights=np.ones((n, 1)),
            means=np.zeros((n, 1, 2)),
            scale_tril=np.broadcast_to(tril, (n, 1, 2, 2)).copy(),
        )
        draws = sample_mixture(params, rng)
        np.testing.assert_allclose(np.cov(draws.T), tril @ tril.T, atol=0.02)

    def test_sampling_loglik_consistency(self):
        """Empirical NLL of mixture draws matches an independent high-sample
        entropy estimate within 2%."""
        params = MixtureParams(
            weights=np.array([0.4, 0.6]),
            means=np.array([[0.0, 0.0], [2.0, -1.0]]),
            scale_tril=np.array([[[1.0, 0.0], [0.2, 0.7]], [[0.5, 0.0], [-0.1, 0.9]]]),
        )

        def empirical_nll(seed, n):
            rng = np.random.default_rng(seed)
            batched = MixtureParams(
                weights=np.broadcast_to(params.weights, (n, 2)).copy(),
                means=np.broadcast_to(params.means, (n, 2, 2)).copy(),
                scale_tril=np.broadcast_to(params.scale_tril, (n, 2, 2, 2)).copy(),
            )
            draws = sample_mixture(batched, rng)
            return -log_likelihood(params, draws).mean()

        est = empirical_nll(0, 20_000)
        oracle = empirical_nll(1, 200_000)
        assert abs(est - oracle) / abs(oracle) < 0.02


class TestTrainMdn:
    def test_sine_conditional_mean(self):
        rng = np.random.default_rng(12)
        n = 30_000
        x = rng.uniform(-np.pi, np.pi, size=(n, 1))
        m = np.sin(x) + 0.1 * rng.standard_normal((n, 1))
        cfg = TrainConfig(hidden=(32, 32), n_components=4, epochs=30, batch_size=512, seed=0)
        model = train_mdn((x, m), cfg, mode="nonlocal")
        grid = np.linspace(-np.pi, np.pi, 200)[:, None]
        cond_mean = mixture_mean(forward(model, grid))
        rms = np.sqrt(np.mean((cond_mean[:, 0] - np.sin(grid[:, 0])) ** 2))
        assert rms < 0.05

    def test_constant_target(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((5_000, 1))
        m = np.full((5_000, 1), 2.5)
        cfg = TrainConfig(hidden=(16,), n_components=2, epochs=40, batch_size=256,
                          learning_rate=1e-2, patience=40, seed=0)
        model = train_mdn((x, m), cfg, mode="nonlocal")
        params = forward(model, np.zeros((1, 1)))
        assert mixture_mean(params)[0, 0] == pytest.approx(2.5, abs=1e-2)
        # predictive spread collapses toward the floor for noiseless targets
        assert float(params.scale_tril[0, :, 0, 0].min()) < 0.05

    def test_validation_nll_improves_from_initialisation(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((8_000, 2))
        m = x @ np.array([[1.0, 0.0], [0.5, -1.0]]) + 0.3 * rng.standard_normal((8_000, 2))
        cfg = TrainConfig(hidden=(16,), n_components=2, epochs=6, batch_size=512, seed=0)
        model = train_mdn((x, m), cfg, mode="weakly-local")
        assert model.loss_history["val"][-1] <= model.loss_history["val"][0]
        assert min(model.loss_history["val"]) < model.loss_history["val"][0]

    def test_locality_nesting_on_diagonal_data(self):
        """When the generative covariance is diagonal, the weakly-local
        (constrained) optimum cannot beat the nonlocal one by more than
        optimisation noise, across seeds."""
        gaps = []
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            x = rng.standard_normal((12_000, 2))
            m = np.tanh(x) + 0.2 * rng.standard_normal((12_000, 2))
            cfg_args = dict(hidden=(16,), n_components=2, epochs=8, batch_size=512, seed=seed)
            non = train_mdn((x, m), TrainConfig(**cfg_args), mode="nonlocal")
            weak = train_mdn((x, m), TrainConfig(**cfg_args), mode="weakly-local")
            gaps.append(min(weak.loss_history["val"]) - min(non.loss_history["val"]))
        assert np.mean(gaps) > -0.05

    def test_standardisation_round_trip_moments(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((20_000, 1))
        m = 3.0 + 2.0 * rng.standard_normal((20_000, 1))  # independent of x
        cfg = TrainConfig(hidden=(16,), n_components=4, epochs=10, batch_size=512, seed=0)
        model = train_mdn((x, m), cfg, mode="nonlocal")
        n = 50_000
        params = forward(model, rng.standard_normal((n, 1)))
        draws = sample_mixture(params, rng)
        assert draws.mean() == pytest.approx(3.0, abs=0.1)
        assert draws.std() == pytest.approx(2.0, rel=0.1)

    def test_strongly_local_pools_sites(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((2_000, 4))
        m = 0.5 * x + 0.1 * rng.standard_normal((2_000, 4))
        cfg = TrainConfig(hidden=(16,), n_components=2, epochs=25, batch_size=256, seed=0)
        model = train_mdn((x, m), cfg, mode="strongly-local")
        assert model.input_dim == 1
        assert model.target_dim == 1
        cond = mixture_mean(forward(model, np.array([[1.0]])))
        assert cond[0, 0] == pytest.approx(0.5, abs=0.1)

    def test_divergence_reported_with_epoch(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((2_000, 1))
        m = rng.standard_normal((2_000, 1))
        cfg = TrainConfig(hidden=(8,), n_components=2, epochs=3, batch_size=64,
                          learning_rate=1e6, seed=0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError) as excinfo:
                train_mdn((x, m), cfg, mode="nonlocal")
        assert excinfo.value.epoch >= 1

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            train_mdn((np.zeros((200, 1)), np.zeros((200, 1))), TINY, mode="local")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(val_fraction=0.9)


class TestDeterministic:
    def test_linear_data(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((20_000, 1))
        m = 2.0 * x
        cfg = TrainConfig(hidden=(32,), epochs=60, batch_size=256, learning_rate=3e-3,
                          patience=60, seed=0)
        model = train_deterministic((x, m), cfg)
        grid = np.linspace(-2, 2, 100)[:, None]
        pred = model.predict(grid)
        rms = np.sqrt(np.mean((pred - 2.0 * grid) ** 2))
        assert rms / np.sqrt(np.mean((2.0 * grid) ** 2)) < 0.01

    def test_constant_data(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal((5_000, 2))
        m = np.full((5_000, 1), -1.5)
        cfg = TrainConfig(hidden=(8,), epochs=5, batch_size=512, seed=0)
        model = train_deterministic((x, m), cfg)
        np.testing.assert_allclose(model.predict(x[:50]), -1.5, atol=1e-2)

    def test_validation_mse_decreases(self):
        rng = np.random.default_rng(20)
        x = rng.standard_normal((10_000, 2))
        m = np.sin(x)
        cfg = TrainConfig(hidden=(16,), epochs=8, batch_size=512, seed=0)
        model = train_deterministic((x, m), cfg)
        assert model.loss_history["val"][-1] < model.loss_history["val"][0]


class TestPolyAr1:
    def test_recovers_known_cubic_and_residual_process(self):
        rng = np.random.default_rng(21)
        n = 1_000_000
        x = rng.uniform(-2.0, 2.0, size=(n, 1))
        coeffs = np.array([0.5, -1.0, 0.25, 0.3])
        mean = np.polynomial.polynomial.polyval(x, coeffs)
        eps = rng.normal(0.0, math.sqrt(1.0 - 0.95**2), size=(n, 1))
        resid = np.empty((n, 1))
        prev = 0.0
        phi = 0.95
        # AR(1) residuals in time
        from scipy.signal import lfilter

        resid = lfilter([1.0], [1.0, -phi], eps, axis=0)
        m = mean + 0.05 * resid
        model = fit_poly_ar1((x, m), degree=3)
        np.testing.assert_allclose(model.coeffs, coeffs, rtol=0.02)
        assert model.phi_r == pytest.approx(phi, abs=0.01)

    def test_zero_residuals(self):
        rng = np.random.default_rng(22)
        x = rng.standard_normal((5_000, 2))
        m = 1.0 + 2.0 * x
        model = fit_poly_ar1((x, m), degree=1)
        assert model.phi_r == pytest.approx(0.0, abs=1e-8)
        assert model.innovation_var == pytest.approx(0.0, abs=1e-12)

    def test_degree_zero_is_sample_mean(self):
        rng = np.random.default_rng(23)
        x = rng.standard_normal((1_000, 3))
        m = rng.standard_normal((1_000, 3)) + 0.7
        model = fit_poly_ar1((x, m), degree=0)
        assert model.coeffs[0] == pytest.approx(m.mean(), rel=1e-10)

    def test_stationarity_validation(self):
        with pytest.raises(ValueError):
            PolyAr1Model(coeffs=np.array([0.0]), phi_r=1.2, innovation_var=0.1)

    def test_residual_variance_relation(self):
        model = PolyAr1Model(coeffs=np.array([0.0]), phi_r=0.8, innovation_var=0.36)
        assert model.residual_var == pytest.approx(1.0)
