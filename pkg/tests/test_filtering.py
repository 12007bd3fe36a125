import math
from dataclasses import replace

import numpy as np
import pytest

from slowfast_filter.errors import DegeneracyError, DomainError, StructuralError
from slowfast_filter.filtering.experiments import (
    epsilon_scaling_experiment,
    inverse_moment_bound,
    moment_envelope,
    self_distance_ratio,
    verify_martingale_bounds,
)
from slowfast_filter.filtering.kalman import KalmanBucyFilter
from slowfast_filter.filtering.metrics import (
    TestDictionary,
    TestFunction,
    build_coordinate_dictionary,
    build_default_dictionary,
    distance_d,
)
from slowfast_filter.filtering.observation import ObservationPath, build_observation, generate_observation, ks_log_weight_step
from slowfast_filter.filtering.particles import WeightedEnsemble, accumulate_log_weights, chunk_bounds, run_filter
from slowfast_filter.simulation.integrator import integrate_full

from conftest import make_path, make_system


def observed(model, obs, t_end, coarsen=1, seed=7):
    path = make_path(model, t_end, dim3=obs.dim3, seed=seed)
    z0 = (np.array([1.0, 0.5, 0.33, 0.25, 0.0, 0.0])[: model.slow_dim], np.zeros(model.fast_dim))
    truth = integrate_full(model, z0, path, 0.0, t_end)
    return path, truth, generate_observation(truth, obs, path, coarsen)


def sine_observation(model, dim3=2):
    return build_observation("sine-of-slow", model.a.space, model.b.space, dim3)


class TestObservation:
    def test_log_weight_step(self):
        assert ks_log_weight_step(np.array([1.0, 0.0]), np.array([0.5, 0.1]), 0.5) == pytest.approx(0.25)

    def test_zero_observation_is_pure_noise(self, thermo_model):
        obs = build_observation("zero", thermo_model.a.space, thermo_model.b.space, 2)
        path, _, r = observed(thermo_model, obs, 0.3)
        assert np.array_equal(r.increments, path.increments("w3", 0.0, 0.3))

    def test_constant_observation(self, thermo_model):
        obs = build_observation("user-table", thermo_model.a.space, thermo_model.b.space, 2, {"knots": [-1.0, 1.0], "values": [0.4, 0.4]})
        path, _, r = observed(thermo_model, obs, 0.3)
        assert np.allclose(r.value(0.3) - path.wiener_value("w3", 0.3), 0.4 * 0.3, atol=1e-12)

    def test_coarsened_path_sums_fine_increments(self, thermo_model):
        obs = sine_observation(thermo_model)
        _, _, fine = observed(thermo_model, obs, 0.3)
        _, _, coarse = observed(thermo_model, obs, 0.3, coarsen=5)
        assert coarse.step == pytest.approx(0.05)
        assert len(coarse.increments) == 6
        assert np.allclose(coarse.value(0.3), fine.value(0.3), atol=1e-13)

    def test_coarsen_must_divide(self, thermo_model):
        with pytest.raises(StructuralError):
            observed(thermo_model, sine_observation(thermo_model), 0.3, coarsen=7)

    def test_observation_bounds(self, thermo_model):
        obs = sine_observation(thermo_model, dim3=4)
        assert obs.c_h == pytest.approx(2.0)
        assert obs.h_lip == 1.0
        with pytest.raises(DomainError):
            build_observation("sine-of-slow", thermo_model.a.space, thermo_model.b.space, 4, c_h=1.0)


class TestDistance:
    def test_dictionary_weights(self, thermo_model):
        dictionary = build_default_dictionary(thermo_model.a.space, size=8)
        assert dictionary.size == 8
        assert np.allclose(dictionary.weights[:3], [0.5, 0.25, 0.125])
        assert dictionary.distance_bound() == pytest.approx(2 * (1 - 2.0**-8))
        with pytest.raises(StructuralError):
            TestDictionary("tiny", dictionary.functions[:3])

    def test_distance_of_single_coordinate_shift(self, thermo_model):
        dictionary = build_default_dictionary(thermo_model.a.space, size=8)
        x = np.random.default_rng(0).standard_normal((50, 6))
        a = WeightedEnsemble(x, np.zeros((50, 3)), np.zeros(50), 0.1).estimate(dictionary, "full")
        delta = 0.1
        b = replace(a, pi=a.pi + np.eye(8)[0] * delta)
        assert distance_d(a, b, dictionary) == pytest.approx(delta / 2)
        assert distance_d(a, a, dictionary) == 0.0

    def test_distance_needs_matching_dictionary(self, thermo_model):
        x = np.zeros((4, 6))
        ensemble = WeightedEnsemble(x, np.zeros((4, 3)), np.zeros(4), 0.1)
        est = ensemble.estimate(build_default_dictionary(thermo_model.a.space, size=8), "full")
        other = build_default_dictionary(thermo_model.a.space, size=9)
        with pytest.raises(StructuralError):
            distance_d(est, est, other)

    def test_constant_function_is_normalized(self):
        ones = TestDictionary("ones", [TestFunction(f"one{i}", lambda x: np.ones(x.shape[:-1]), 1.0, 0.0) for i in range(8)])
        rng = np.random.default_rng(1)
        ensemble = WeightedEnsemble(rng.standard_normal((100, 2)), np.zeros((100, 1)), rng.standard_normal(100), 0.1)
        est = ensemble.estimate(ones, "full")
        assert np.allclose(est.pi, 1.0)
        assert np.allclose(est.se, 0.0)

    def test_ess(self):
        flat = WeightedEnsemble(np.zeros((10, 1)), np.zeros((10, 1)), np.zeros(10), 0.0)
        assert flat.ess == pytest.approx(10.0)
        peaked = WeightedEnsemble(np.zeros((10, 1)), np.zeros((10, 1)), np.array([0.0] + [-800.0] * 9), 0.0)
        assert peaked.ess == pytest.approx(1.0)
        assert peaked.log_normalizer == pytest.approx(0.0)

    def test_coordinate_dictionary_is_unbounded(self):
        space = make_system(modes=4).a.space
        dictionary = build_coordinate_dictionary(space)
        assert not dictionary.bounded
        with pytest.raises(StructuralError):
            build_coordinate_dictionary(space, size=9)


class TestParticleFilter:
    def test_chunk_bounds(self):
        assert chunk_bounds(10, 4) == [(0, 4), (4, 4), (8, 2)]

    def test_zero_observation_leaves_weights_flat(self, thermo_model):
        obs = build_observation("zero", thermo_model.a.space, thermo_model.b.space, 2)
        _, truth, r = observed(thermo_model, obs, 0.2)
        assert np.all(accumulate_log_weights(obs, truth, r) == 0)

    def test_thread_count_does_not_change_result(self, thermo_model):
        obs = sine_observation(thermo_model)
        _, _, r = observed(thermo_model, obs, 0.2)
        dictionary = build_default_dictionary(thermo_model.a.space, size=8)
        z0 = (np.ones(6) * 0.5, np.zeros(3))
        one = run_filter(thermo_model, obs, r, "full", 48, 5, z0, dictionary, [0.1, 0.2], chunk_size=16, threads=1)
        many = run_filter(thermo_model, obs, r, "full", 48, 5, z0, dictionary, [0.1, 0.2], chunk_size=16, threads=3)
        for t in (0.1, 0.2):
            assert np.array_equal(one.at(t).pi, many.at(t).pi)
            assert one.at(t).ess == many.at(t).ess
        assert list(one.to_frame()["t"]) == [0.1, 0.2]

    def test_filter_times_must_sit_on_the_grid(self, thermo_model):
        obs = sine_observation(thermo_model)
        _, _, r = observed(thermo_model, obs, 0.2, coarsen=5)
        dictionary = build_default_dictionary(thermo_model.a.space, size=8)
        with pytest.raises(DomainError):
            run_filter(thermo_model, obs, r, "full", 8, 0, (np.zeros(6), np.zeros(3)), dictionary, [0.07])

    def test_collapsed_weights_raise(self, thermo_model):
        obs = build_observation("bounded-linear", thermo_model.a.space, thermo_model.b.space, 2, {"gain": 1.0, "bound": 1e6})
        n = 10
        r = ObservationPath(thermo_model.dt * np.arange(n + 1), np.full((n, 2), 200.0), thermo_model.dt, 1, "synthetic")
        dictionary = build_default_dictionary(thermo_model.a.space, size=8)
        with pytest.raises(DegeneracyError) as info:
            run_filter(thermo_model, obs, r, "full", 200, 0, (np.zeros(6), np.zeros(3)), dictionary)
        assert info.value.ess < 2.0


class TestMoments:
    def test_inverse_moment_bound(self):
        assert inverse_moment_bound(2, 1, 1) == pytest.approx(math.exp(3))
        assert inverse_moment_bound(3, 0.0, 5) == 1.0

    def test_moment_envelope(self):
        eps = np.array([0.1])
        assert moment_envelope(eps, 1.0, 1.0, 1.0)[0] == pytest.approx((math.exp(-40) + 0.1 / 4) ** 0.25)

    def test_martingale_without_observation_signal(self, decoupled_model):
        obs = build_observation("zero", decoupled_model.a.space, decoupled_model.b.space, 1)
        report = verify_martingale_bounds(decoupled_model, obs, (np.ones(4), np.zeros(1)), 0.1, p=2, n_mc=20, mc_inner=10)
        assert report.gamma_mean == pytest.approx(1.0)
        assert report.gamma_se == pytest.approx(0.0, abs=1e-12)
        assert report.inverse_moment == pytest.approx(1.0)
        assert report.inverse_moment_bound == 1.0
        assert report.samples == 20

    def test_martingale_needs_two_groups(self, decoupled_model):
        obs = build_observation("zero", decoupled_model.a.space, decoupled_model.b.space, 1)
        with pytest.raises(DomainError):
            verify_martingale_bounds(decoupled_model, obs, (np.ones(4), np.zeros(1)), 0.1, n_mc=10, mc_inner=10)

    @pytest.mark.slow
    def test_martingale_and_inverse_moment(self, thermo_model):
        obs = sine_observation(thermo_model)
        report = verify_martingale_bounds(thermo_model, obs, (np.ones(6) * 0.5, np.zeros(3)), 0.5, p=3, n_mc=2000, mc_inner=50, seed=3)
        assert report.passed
        assert report.inverse_moment <= report.inverse_moment_bound


@pytest.mark.slow
def test_particle_filter_matches_kalman_bucy():
    # linear slow drift (A + 0.3 I), h(x) = x on both coordinates, clip far away
    model = make_system(
        slow="diagonal",
        slow_entries=(-1.0, -2.0),
        fast_entries=(-2.0,),
        f_kind="linear-coupling",
        f_params={"source": "x", "gain": 0.3},
        epsilon=0.05,
    )
    obs = build_observation("bounded-linear", model.a.space, model.b.space, 2, {"gain": 1.0, "bound": 1e6})
    x0 = np.array([1.0, -0.5])
    path = make_path(model, 0.5, dim3=2, seed=21)
    truth = integrate_full(model, (x0, np.zeros(1)), path, 0.0, 0.5)
    r = generate_observation(truth, obs, path)

    means = [TestFunction(f"x{j}", lambda x, j=j: x[..., j], math.inf, 1.0) for j in range(2)]
    dictionary = TestDictionary("coordinates", means, min_size=2)
    run = run_filter(model, obs, r, "full", 10_000, 4, (x0, np.zeros(1)), dictionary, [0.25, 0.5], chunk_size=1000)
    reference = KalmanBucyFilter.from_model(model, obs, x0).run(r, [0.25, 0.5])
    for ref in reference:
        est = run.at(ref["t"])
        assert np.all(np.abs(est.pi - ref["mean"]) <= 3 * est.se + 0.01)


@pytest.mark.slow
def test_epsilon_scaling_table(thermo_model):
    obs = sine_observation(thermo_model)
    dictionary = build_default_dictionary(thermo_model.a.space, size=8)
    result = epsilon_scaling_experiment(
        thermo_model,
        obs,
        (np.ones(6) * 0.5, np.zeros(3)),
        [0.1, 0.05],
        [0.2],
        dictionary,
        n_particles=64,
        replications=2,
        coarsen=2,
        chunk_size=32,
    )
    assert list(result.table["epsilon"]) == [0.05, 0.1]
    assert list(result.table["runs"]) == [2, 2]
    assert result.excluded == 0
    assert len(result.runs) == 4
    assert (result.runs["d"] >= 0).all()
    assert result.exponent is not None and math.isfinite(result.exponent)
    assert result.summary()["rows"][0]["p"] == 3.0
    assert set(result.series) == {(0.1, "full"), (0.1, "reduced"), (0.05, "full"), (0.05, "reduced")}
    assert list(result.series[(0.05, "reduced")].columns[-2:]) == ["rho_1", "ess"]


@pytest.mark.slow
def test_self_distance_shrinks_with_particles(thermo_model):
    obs = sine_observation(thermo_model)
    _, _, r = observed(thermo_model, obs, 0.2)
    dictionary = build_default_dictionary(thermo_model.a.space, size=8)
    z0 = (np.ones(6) * 0.5, np.zeros(3))
    result = self_distance_ratio(thermo_model, obs, r, z0, 100, 0.2, dictionary, pairs=32, seed=11)
    assert result["d_large"] > 0
    # Monte-Carlo error halves when the particle count is quadrupled
    assert result["passed"], result


def test_scaling_without_coupling_gives_zero_gap(decoupled_model):
    # F = 0: slow particles ignore the fast process, so both filters see identical signals
    obs = sine_observation(decoupled_model)
    dictionary = build_default_dictionary(decoupled_model.a.space, size=8)
    z0 = (np.array([1.0, 0.5, 0.0, 0.2]), np.zeros(1))
    result = epsilon_scaling_experiment(
        decoupled_model, obs, z0, [0.05], [0.1], dictionary, n_particles=16, replications=1, coarsen=2, chunk_size=16
    )
    assert result.table["mean_d"].max() <= 1e-10
    assert result.table["moment_1"].max() <= 1e-30
    assert result.exponent is None
