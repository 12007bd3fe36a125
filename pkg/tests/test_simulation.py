from dataclasses import replace

import numpy as np
import pytest

from slowfast_filter.errors import AdmissibilityError, DomainError, StructuralError
from slowfast_filter.manifold.backward import BackwardSolver
from slowfast_filter.manifold.tracking import solve_tracking
from slowfast_filter.simulation.integrator import (
    apriori_bound,
    decay_slope,
    integrate_full,
    integrate_reduced,
    picard_diagnostic,
    verify_cocycle,
)

from conftest import make_path, make_system


def test_deterministic_linear_flow_is_the_semigroup():
    model = make_system(fast_entries=(-2.0,), sigma1=0.0, sigma2=0.0, epsilon=0.05)
    x0, y0 = np.array([1.0, 0.5, -0.3, 0.2]), np.array([1.0])
    traj = integrate_full(model, (x0, y0), make_path(model, 0.5), 0.0, 0.5)
    assert np.allclose(traj.x[-1], model.a.exp(0.5).apply(x0), atol=1e-12)
    assert traj.y[-1, 0] == pytest.approx(np.exp(-2.0 * 0.5 / 0.05), rel=1e-10)
    assert traj.times[-1] == pytest.approx(0.5)
    assert traj.path_ref.startswith("7:0:")


def test_cocycle(thermo_model):
    p = make_path(thermo_model, 0.7, dim3=0)
    report = verify_cocycle(thermo_model, (np.array([1.0, 0.5, 0.0, 0.3, 0.0, 0.0]), np.zeros(3)), p, 0.3, 0.4)
    assert report.passed
    assert report.discrepancy <= 1e-10


def test_cocycle_trivial_times(thermo_model):
    p = make_path(thermo_model, 0.2)
    z0 = (np.ones(6), np.zeros(3))
    assert verify_cocycle(thermo_model, z0, p, 0.0, 0.0).discrepancy == 0.0
    assert verify_cocycle(thermo_model, z0, p, 0.0, 0.2).passed


def test_apriori_bound_holds(thermo_model):
    p = make_path(thermo_model, 1.0)
    z0 = (np.array([1.0, 0.5, 0.33, 0.25, 0.0, 0.0]), np.zeros(3))
    traj = integrate_full(thermo_model, z0, p, 0.0, 1.0)
    assert np.max(traj.norms()) <= apriori_bound(thermo_model, z0, p, 0.0, 1.0)


def test_picard_iteration_matches_stepper(thermo_model):
    p = make_path(thermo_model, 0.2)
    report = picard_diagnostic(thermo_model, (np.ones(6), np.zeros(3)), p, 0.0, 0.2, iterations=40)
    assert report.bound < 1
    assert report.passed
    assert report.distance_to_stepper <= 1e-8


def test_picard_window_too_long(thermo_model):
    with pytest.raises(AdmissibilityError):
        picard_diagnostic(thermo_model, (np.ones(6), np.zeros(3)), make_path(thermo_model, 1.0), 0.0, 1.0)


def test_inadmissible_epsilon_is_refused(thermo_model):
    model = thermo_model.with_epsilon(0.5)
    with pytest.raises(AdmissibilityError):
        integrate_full(model, (np.zeros(6), np.zeros(3)), make_path(model, 0.5), 0.0, 0.5)


def test_grid_must_match_model(thermo_model):
    other = thermo_model.with_epsilon(0.05)
    with pytest.raises(StructuralError):
        integrate_full(thermo_model, (np.zeros(6), np.zeros(3)), make_path(other, 0.5), 0.0, 0.5)


def test_bad_initial_state(thermo_model):
    p = make_path(thermo_model, 0.1)
    with pytest.raises(StructuralError):
        integrate_full(thermo_model, (np.zeros(5), np.zeros(3)), p, 0.0, 0.1)
    with pytest.raises(DomainError):
        integrate_full(thermo_model, (np.full(6, np.nan), np.zeros(3)), p, 0.0, 0.1)


def test_batched_run_matches_single_runs(thermo_model):
    batch = make_path(thermo_model, 0.2, particles=3)
    single = make_path(thermo_model, 0.2).view()
    z0 = (np.ones(6), np.zeros(3))
    both = integrate_full(thermo_model, z0, batch, 0.0, 0.2)
    one = integrate_full(thermo_model, z0, single, 0.0, 0.2)
    assert both.batch_shape == (3,)
    assert np.allclose(both.x[:, 0], one.x, atol=1e-13)


def test_decay_slope_of_exponential():
    t = np.linspace(0.0, 1.0, 51)
    assert decay_slope(t, 3.0 * np.exp(-5.0 * t)) == pytest.approx(-5.0)
    assert decay_slope(t, np.zeros_like(t)) == float("-inf")


def test_reduced_gap_decays_at_fast_rate(decoupled_model):
    # F = G = 0: the gap is |y0 - H_0| e^{-gamma2 t / eps}
    model = decoupled_model
    n = model.back_cells(1e-8)
    p = make_path(model, 0.25, back_cells=2 * n)
    x0 = np.array([1.0, 0.5, 0.0, 0.2])
    full = integrate_full(model, (x0, np.zeros(1)), p, 0.0, 0.25)
    reduced = integrate_reduced(model, x0, BackwardSolver(model), p, 0.0, 0.25)
    assert np.allclose(full.x, reduced.x, atol=1e-12)
    assert reduced.iterations[0] == 1
    assert max(reduced.iterations) <= 2
    assert decay_slope(full.times, full.gap(reduced)) == pytest.approx(-40.0, rel=0.01)


def test_exponential_euler_is_first_order():
    # linear coupling both ways, no noise: halving dt roughly halves the error
    model = make_system(
        slow="diagonal",
        slow_entries=[-0.5, -1.0],
        fast_entries=(-2.0,),
        f_kind="linear-coupling",
        g_kind="linear-coupling",
        f_params={"gain": 0.5, "source": "y"},
        g_params={"gain": 0.5, "source": "x"},
        sigma1=0.0,
        sigma2=0.0,
        epsilon=0.1,
    )
    z0 = (np.array([1.0, -0.5]), np.array([0.8]))
    finals = []
    for k in (10, 20, 40):
        refined = replace(model, oversample_fast=k)
        traj = integrate_full(refined, z0, make_path(refined, 1.0), 0.0, 1.0)
        finals.append(np.concatenate([traj.x[-1], traj.y[-1]]))
    coarse, mid, fine = finals
    ratio = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert np.log2(ratio) >= 0.9


def test_reduced_trajectory_stays_on_the_manifold(thermo_model):
    model = thermo_model
    p = make_path(model, 0.3, back_cells=2 * model.back_cells(1e-8))
    x0 = np.array([1.0, 0.5, 0.33, 0.25, 0.0, 0.0])
    solver = BackwardSolver(model)
    y0 = solver.solve(x0, 0.0, p).fast_value
    full = integrate_full(model, (x0, y0), p, 0.0, 0.3)
    reduced = integrate_reduced(model, x0, solver, p, 0.0, 0.3)
    assert np.max(full.gap(reduced)) <= 1e-6
    k = 20
    later = solver.solve(reduced.x[k], reduced.times[k], p).fast_value
    assert np.allclose(later, full.y[k], atol=1e-6)


@pytest.mark.slow
def test_full_trajectory_is_attracted_to_reduced_from_tracking_point(thermo_model):
    model = thermo_model
    p = make_path(model, 1.6, back_cells=2 * model.back_cells(1e-8))
    x0, y0 = np.array([1.0, 0.5, 0.33, 0.25, 0.0, 0.0]), np.zeros(3)
    full = integrate_full(model, (x0, y0), p, 0.0, 1.0)
    track = solve_tracking(model, (x0, y0), p, tol=1e-8)
    attracted = integrate_reduced(model, track.tracking_point[0], BackwardSolver(model), p, 0.0, 1.0)
    rate = model.params.mu / model.params.epsilon
    gap = full.gap(attracted)
    assert decay_slope(full.times, gap, floor=1e-6) <= -0.8 * rate
    assert gap[-1] < gap[0]
