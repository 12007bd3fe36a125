import numpy as np
import pytest

from slowfast_filter.errors import DomainError, StructuralError, WindowExhaustedError
from slowfast_filter.noise.convolutions import fast_noise_increments, ou_convolution, slow_convolution
from slowfast_filter.noise.paths import CovarianceSpec, NoisePath, TimeGrid, cells_covering, cells_in, sample_path, shift, stream_key
from slowfast_filter.spectral.operators import SpaceSpec, SpectralOperator

COV1 = CovarianceSpec(np.array([1.0, 0.25]))
COV2 = CovarianceSpec(np.array([1.0]))


def path(n_back=20, n_fwd=40, dt=0.01, dim3=2, seed=3, stream_id=0, particles=None, particle_offset=0):
    return sample_path(COV1, COV2, dim3, TimeGrid(dt, n_back, n_fwd), seed, stream_id, particles, particle_offset)


def test_covariance_must_be_positive():
    with pytest.raises(DomainError):
        CovarianceSpec(np.array([1.0, 0.0]))


def test_power_law_pairs_share_variance():
    cov = CovarianceSpec.power_law(SpaceSpec.paired("slow", 3))
    assert np.allclose(cov.per_mode_variance, [1.0, 1.0, 0.25, 0.25, 1 / 9, 1 / 9])


def test_same_seed_same_draws():
    a, b = path(), path()
    for name in ("w1", "w2", "w3"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.w1, path(seed=4).w1)
    assert not np.array_equal(a.w1, path(stream_id=stream_key(1, 0)).w1)


def test_particle_draws_do_not_depend_on_batching():
    batch = path(particles=4)
    single = path(particle_offset=2)
    assert np.array_equal(batch.w1[:, 2], single.w1)
    assert np.array_equal(batch.w3[:, 2], single.w3)
    part = batch.select(slice(1, 3))
    assert part.particle_offset == 1
    assert np.array_equal(part.w2[:, 1], single.w2)


def test_longer_window_extends_outward():
    short, long = path(n_back=10, n_fwd=20), path(n_back=30, n_fwd=40)
    assert np.array_equal(short.increments("w1", -0.1, 0.2), long.increments("w1", -0.1, 0.2))
    assert np.array_equal(short.increments("w3", 0.0, 0.2), long.increments("w3", 0.0, 0.2))


def test_wiener_value_starts_at_zero():
    p = path()
    assert np.all(p.wiener_value("w1", 0.0) == 0)
    assert np.allclose(p.wiener_value("w1", 0.1) - p.wiener_value("w1", -0.1), p.increments("w1", -0.1, 0.1).sum(axis=0))


def test_shift_flow_property():
    p = path()
    once = shift(shift(p, 0.05), 0.07)
    direct = shift(p, 0.12)
    assert np.array_equal(once.increments("w2", -0.2, 0.1), direct.increments("w2", -0.2, 0.1))
    assert np.array_equal(shift(p, 0.0).increments("w1", -0.2, 0.4), p.increments("w1", -0.2, 0.4))


def test_shifted_wiener_value():
    p = path()
    s, t = 0.1, 0.15
    view = shift(p, s)
    assert np.allclose(view.wiener_value("w1", t), p.wiener_value("w1", t + s) - p.wiener_value("w1", s), atol=1e-14)


def test_reads_outside_window():
    p = path(n_back=20, n_fwd=40)
    with pytest.raises(WindowExhaustedError) as info:
        p.increments("w1", -0.3, 0.0)
    assert info.value.required_extension == pytest.approx(0.1)
    with pytest.raises(WindowExhaustedError):
        p.increments("w3", -0.01, 0.1)
    assert not shift(p, 0.35).covers("w1", 0.0, 0.1)


def test_misaligned_times():
    with pytest.raises(DomainError):
        cells_in(0.015, 0.01)
    assert cells_covering(0.015, 0.01) == 2
    with pytest.raises(StructuralError):
        path().increments("w4", 0.0, 0.1)


def test_zero_intensity_gives_zero_convolution():
    b = SpectralOperator.diagonal("fast", [-2.0])
    assert np.all(fast_noise_increments(b, 0.0, 0.05, path(), 0.0, 0.1) == 0)
    assert np.all(ou_convolution(b, 0.0, 0.05, path(), 0.2).coeffs == 0)


def test_trivial_generator_gives_scaled_wiener():
    a = SpectralOperator.diagonal("slow", [0.0, 0.0])
    p = path()
    value = slow_convolution(a, 0.7, p, 0.0, 0.3)
    assert np.allclose(value.coeffs, 0.7 * p.wiener_value("w1", 0.3), atol=1e-14)


@pytest.mark.slow
def test_fast_stationary_variance():
    # sigma2^2 k / (2 |b|), independent of eps
    eps, dt = 0.05, 0.005
    b = SpectralOperator.diagonal("fast", [-2.0])
    ensemble = sample_path(COV2, COV2, 0, TimeGrid(dt, 100, 0), 11, 0, particles=4000)
    values = ou_convolution(b, 0.5, eps, ensemble, 0.0).coeffs[:, 0]
    assert np.var(values) == pytest.approx(0.0625, abs=0.006)
    assert np.mean(values) == pytest.approx(0.0, abs=0.02)


def coarsened(fine, k):
    """The same Brownian path on a grid k times coarser"""

    def merge(w):
        return w.reshape((w.shape[0] // k, k) + w.shape[1:]).sum(axis=1)

    grid = TimeGrid(fine.dt * k, fine.grid.n_back // k, fine.grid.n_fwd // k)
    return NoisePath(grid, merge(fine.w1), merge(fine.w2), merge(fine.w3), fine.seed, fine.stream_id, label="coarse")


def test_ou_convolution_matches_fine_riemann_sum():
    # int_{-2}^0 e^{b (0 - r) / eps} (sigma2 / sqrt(eps)) dW2(r) by a midpoint sum on a 10x finer grid
    eps, sigma2, fine_dt = 1.0, 0.5, 0.001
    b = SpectralOperator.diagonal("fast", [-2.0])
    for seed in (1, 2, 3):
        fine = sample_path(COV1, COV2, 0, TimeGrid(fine_dt, 2000, 0), seed, 0)
        mid = -2.0 + fine_dt * (np.arange(2000) + 0.5)
        riemann = sigma2 / np.sqrt(eps) * np.sum(np.exp(2.0 * mid / eps) * fine.w2[:, 0])
        value = ou_convolution(b, sigma2, eps, coarsened(fine, 10), 0.0, t_back=2.0).coeffs[0]
        assert value == pytest.approx(riemann, abs=1e-2)


@pytest.mark.slow
def test_slow_convolution_variance():
    # Var = sigma1^2 k (1 - e^{-2 a t}) / (2 a) for a mode with eigenvalue -a and covariance k
    sigma1 = 0.7
    a = SpectralOperator.diagonal("slow", [-1.0, -3.0])
    ensemble = sample_path(COV1, COV2, 0, TimeGrid(0.01, 0, 100), 13, 0, particles=4000)
    values = slow_convolution(a, sigma1, ensemble, 0.0, 1.0).coeffs
    expected = sigma1**2 * COV1.per_mode_variance * (1 - np.exp(-2 * np.array([1.0, 3.0]))) / (2 * np.array([1.0, 3.0]))
    assert np.var(values, axis=0) == pytest.approx(expected, rel=0.08)
    assert np.allclose(np.mean(values, axis=0), 0.0, atol=0.03)
