import math

import numpy as np
import pytest

from slowfast_filter.errors import AdmissibilityError, DomainError, StructuralError
from slowfast_filter.spectral.hypotheses import (
    SystemParams,
    auto_gamma1,
    backward_horizon,
    check_hypotheses,
    compute_contraction_constant,
    compute_epsilon0,
    manifold_lipschitz_bound,
)
from slowfast_filter.spectral.nonlinearities import build_nonlinearity, zero_anchor_holds
from slowfast_filter.spectral.operators import HVector, SpectralOperator, semigroup_apply

from conftest import make_system


def params(**overrides):
    values = dict(epsilon=0.1, sigma1=0.5, sigma2=0.5, gamma1=0.0, gamma2=2.0, lipschitz=0.5, mu=1.0)
    values.update(overrides)
    return SystemParams(**values)


class TestSemigroup:
    def test_zero_time_is_identity(self):
        op = SpectralOperator.wave("slow", [1.0, 4.0], 1.0)
        v = HVector(op.space, np.array([1.0, -2.0, 0.5, 3.0]))
        assert np.allclose(semigroup_apply(op, 0.0, v).coeffs, v.coeffs, atol=1e-15)

    def test_diagonal_entry(self):
        op = SpectralOperator.diagonal("fast", [-2.0])
        out = semigroup_apply(op, 1.0, HVector(op.space, np.array([1.0])))
        assert out.coeffs[0] == pytest.approx(0.1353352832366127, rel=1e-12)

    def test_rotation_block(self):
        op = SpectralOperator.wave("slow", [1.0], 0.0)
        out = semigroup_apply(op, math.pi / 2, HVector(op.space, np.array([1.0, 0.0])))
        assert np.allclose(out.coeffs, [0.0, -1.0], atol=1e-12)

    def test_composition_and_inverse(self):
        op = SpectralOperator.wave("slow", [1.0, 9.0], 1.0)
        composed = op.exp(0.3).compose(op.exp(0.2))
        assert np.allclose(composed.dense(), op.exp(0.5).dense(), atol=1e-13)
        assert np.allclose(op.exp(0.4).compose(op.exp(-0.4)).dense(), np.eye(4), atol=1e-12)

    def test_space_mismatch(self):
        op = SpectralOperator.diagonal("fast", [-1.0, -2.0])
        other = SpectralOperator.diagonal("other", [-1.0])
        with pytest.raises(StructuralError):
            semigroup_apply(op, 1.0, HVector(other.space, np.array([1.0])))

    def test_non_finite_time(self):
        with pytest.raises(DomainError):
            SpectralOperator.diagonal("fast", [-1.0]).exp(math.inf)

    def test_phi1_integrates_constant_forcing(self):
        op = SpectralOperator.diagonal("fast", [-2.0])
        dt = 0.1
        # dt * phi_1(a dt) = (e^{a dt} - 1) / a
        assert op.phi1(dt).scalars[0] * dt == pytest.approx((math.exp(-0.2) - 1) / -2.0, rel=1e-12)

    def test_auto_gamma1(self):
        assert auto_gamma1(SpectralOperator.wave("slow", [1.0, 4.0], 1.0)) == pytest.approx(1.0)
        assert auto_gamma1(SpectralOperator.wave("slow", [1.0, 4.0], 0.0)) == pytest.approx(0.0, abs=1e-12)
        assert auto_gamma1(SpectralOperator.diagonal("slow", [-1.0, -4.5])) == pytest.approx(4.5)

    def test_semigroup_law_and_linearity_on_random_draws(self):
        op = SpectralOperator.wave("slow", [1.0, 4.0, 9.0], 0.5)
        rng = np.random.default_rng(5)
        for _ in range(20):
            s, t = rng.uniform(0.0, 2.0, size=2)
            a, b = rng.standard_normal(2)
            u = HVector(op.space, rng.standard_normal(6))
            v = HVector(op.space, rng.standard_normal(6))
            stepped = semigroup_apply(op, t, semigroup_apply(op, s, u))
            assert np.allclose(semigroup_apply(op, s + t, u).coeffs, stepped.coeffs, atol=1e-12)
            combined = semigroup_apply(op, t, HVector(op.space, a * u.coeffs + b * v.coeffs))
            separate = a * semigroup_apply(op, t, u).coeffs + b * semigroup_apply(op, t, v).coeffs
            assert np.allclose(combined.coeffs, separate, atol=1e-12)

    def test_fast_semigroup_is_dissipative(self):
        # ||e^{(B/eps) t}|| <= e^{-gamma2 t / eps}
        eps, gamma2 = 0.05, 2.0
        fast = SpectralOperator.diagonal("fast", [-2.0, -8.0, -18.0]).scaled(1.0 / eps)
        v = HVector(fast.space, np.array([0.3, -1.0, 2.0]))
        for t in np.linspace(0.0, 0.5, 26):
            bound = math.exp(-gamma2 * t / eps)
            assert fast.exp(t).norm() <= bound * (1 + 1e-12)
            assert semigroup_apply(fast, t, v).norm() <= bound * v.norm() * (1 + 1e-12)


class TestScales:
    def test_contraction_constant(self):
        assert compute_contraction_constant(params()) == pytest.approx(0.55)

    def test_contraction_constant_without_coupling(self):
        assert compute_contraction_constant(params(lipschitz=0.0)) == 0.0

    def test_contraction_constant_at_one_is_rejected(self):
        p = params(gamma1=1.0, epsilon=0.5)
        assert compute_contraction_constant(p) == pytest.approx(1.0)
        with pytest.raises(AdmissibilityError):
            manifold_lipschitz_bound(p)

    def test_epsilon0(self):
        assert compute_epsilon0(params()) == pytest.approx(1.0)
        assert compute_epsilon0(params(gamma1=1.0)) == pytest.approx(0.5)
        assert math.isinf(compute_epsilon0(params(lipschitz=0.0)))

    def test_epsilon0_is_where_contraction_reaches_one(self):
        p = params(gamma1=1.0, lipschitz=0.7, gamma2=2.0, mu=0.65)
        eps0 = compute_epsilon0(p)
        assert compute_contraction_constant(p.with_epsilon(eps0 * (1 - 1e-6))) < 1
        assert compute_contraction_constant(p.with_epsilon(eps0)) == pytest.approx(1.0)

    def test_mu_outside_window(self):
        with pytest.raises(AdmissibilityError):
            compute_epsilon0(params(mu=1.6))

    def test_lipschitz_bound(self):
        assert manifold_lipschitz_bound(params()) == pytest.approx(1.0 / 0.9)

    def test_backward_horizon(self):
        assert backward_horizon(params(), 1e-8) == pytest.approx(0.1 * math.log(1e8))
        with pytest.raises(DomainError):
            backward_horizon(params(), 1.5)

    def test_params_reject_bad_values(self):
        with pytest.raises(DomainError):
            params(epsilon=0.0)
        with pytest.raises(DomainError):
            params(gamma2=math.nan)


class TestNonlinearities:
    def test_zero_anchor(self, thermo_model):
        assert zero_anchor_holds(thermo_model.f)
        assert zero_anchor_holds(thermo_model.g)

    def test_thermoelastic_constant(self, thermo_model):
        assert thermo_model.f.declared_lipschitz == pytest.approx(0.5 * math.sqrt(2))
        assert thermo_model.params.lipschitz == pytest.approx(0.5 * math.sqrt(2))

    def test_user_table_must_fix_zero(self):
        a = SpectralOperator.diagonal("slow", [-1.0])
        b = SpectralOperator.diagonal("fast", [-2.0])
        with pytest.raises(DomainError):
            build_nonlinearity("user-table", a.space, b.space, "slow", {"knots": [-1.0, 1.0], "values": [0.5, 1.0]})

    def test_unknown_kind(self):
        a = SpectralOperator.diagonal("slow", [-1.0])
        with pytest.raises(StructuralError):
            build_nonlinearity("cubic", a.space, a.space, "slow")


class TestHypotheses:
    def test_thermoelastic_passes(self, thermo_model):
        m = thermo_model
        report = check_hypotheses(m.a, m.b, m.f, m.g, m.params, probes=2000)
        assert report.passed
        assert report.norm_used == "euclidean"
        assert report.epsilon0 == pytest.approx(0.2606, abs=1e-3)

    def test_positive_fast_entry_fails_h2(self):
        m = make_system()
        bad = SpectralOperator.diagonal("fast", [1.0, -8.0])
        f = build_nonlinearity("zero", m.a.space, bad.space, "slow")
        g = build_nonlinearity("zero", m.a.space, bad.space, "fast")
        report = check_hypotheses(m.a, bad, f, g, m.params, probes=200)
        assert not report.passed
        assert not report.verdict("H2").passed
        assert report.verdict("H1").passed

    def test_understated_lipschitz_fails_h3(self):
        m = make_system()
        f = build_nonlinearity("sine-saturating", m.a.space, m.b.space, "slow", {"amplitude": 3.0}, declared_lipschitz=0.5)
        p = params(lipschitz=0.5, gamma1=m.params.gamma1, mu=0.75)
        report = check_hypotheses(m.a, m.b, f, m.g, p, probes=2000)
        assert not report.verdict("H3").passed
        assert "exceeds declared" in report.verdict("H3").message
        assert "F growth" in report.verdict("H3").message
        assert report.verdict("H3").details["F"]["max_growth"] > 0.5

    def test_gap_condition_fails_h4(self):
        m = make_system(fast_entries=(-0.4,), f_kind="thermoelastic-coupling", f_params={"amplitude": 0.5}, mu=0.1, lipschitz=0.3)
        p = params(gamma2=0.4, lipschitz=0.5 * math.sqrt(2), mu=0.1, gamma1=1.0)
        report = check_hypotheses(m.a, m.b, m.f, m.g, p, probes=200)
        assert not report.verdict("H4").passed
        assert report.contraction_constant is None
