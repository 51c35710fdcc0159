"""
Tests for the stealth attack construction.
"""

import numpy as np
import pytest

from stealth_grid.attack_engine import (
    AttackSpec,
    attack_objective_terms,
    mi_corollary,
    mismatched_attack,
    no_attack_mi,
    objective,
    optimal_attack,
    optimality_residual,
    stationarity_residual,
    stationary_attack,
)
from stealth_grid.gaussian_model import StateModel, measurement_pair, signal_covariance
from stealth_grid.grid_jacobian import MeasurementMatrix, OperatingPoint, ac_jacobian_at, dc_jacobian
from stealth_grid.utils.errors import DimensionError, NotPositiveDefiniteError, RegimeError
from stealth_grid.utils.linalg import logdet, psd_eigh


def random_psd(m, rng, scale):
    g = rng.standard_normal((m, m))
    return scale * (g @ g.T) / m


class TestOptimalAttack:
    """Closed-form attack covariance and what it achieves."""

    def test_toy_values(self, toy_h, toy_model):
        """Test MI and KL on the two-bus grid at lambda = 2."""
        attack = optimal_attack(toy_h, toy_model, 2.0)
        assert attack.mi_under_attack == pytest.approx(0.5 * np.log(1.0 + 4.0 / 2.1), abs=1e-10)
        assert attack.mi_under_attack == pytest.approx(0.5331, abs=1e-3)
        assert attack.kl_attack == pytest.approx(0.5 * (np.log(4.1 / 6.1) - 1.0 + 6.1 / 4.1), abs=1e-10)
        assert attack.kl_attack == pytest.approx(0.0453, abs=1e-3)

    def test_unit_weight_is_signal_covariance(self, case14_h, case14_model):
        """Test that lambda = 1 gives Sigma_AA = H Sigma_XX H^T exactly."""
        attack = optimal_attack(case14_h, case14_model, 1.0)
        np.testing.assert_array_equal(attack.sigma_aa, signal_covariance(case14_h, case14_model.sigma_xx))
        assert attack.construction == "closed_form"

    def test_scaling_in_lambda(self, case14_h, case14_model):
        """Test Sigma_AA(lambda) = Sigma_AA(1) / lambda."""
        base = optimal_attack(case14_h, case14_model, 1.0).sigma_aa
        np.testing.assert_array_equal(optimal_attack(case14_h, case14_model, 4.0).sigma_aa, base / 4.0)

    def test_rank_matches_signal(self, case14_h, case14_model):
        """Test that the attack has the rank of H Sigma_XX H^T."""
        assert optimal_attack(case14_h, case14_model, 2.0).rank == 13

    def test_rank_of_rounded_covariance(self):
        """Test that round-off asymmetry is symmetrised and gross asymmetry is rejected."""
        v = np.array([1.0, 2.0, 3.0])
        rounded = np.outer(v, v)
        rounded[0, 2] += 1e-13
        assert AttackSpec(2.0, rounded, 0.0, 0.0).rank == 1
        with pytest.raises(NotPositiveDefiniteError):
            AttackSpec(2.0, np.array([[1.0, 1.0], [0.0, 1.0]]), 0.0, 0.0).rank

    @pytest.mark.parametrize("lam", [0.5, 0.999, -1.0])
    def test_lambda_below_one(self, toy_h, toy_model, lam):
        """Test that lambda < 1 is outside the supported regime."""
        with pytest.raises(RegimeError) as exc:
            optimal_attack(toy_h, toy_model, lam)
        assert "regime" in exc.value.message

    def test_large_lambda_vanishes(self, toy_h, toy_model):
        """Test that lambda = 1e6 nearly removes the attack and restores the clean MI."""
        attack = optimal_attack(toy_h, toy_model, 1e6)
        signal = signal_covariance(toy_h, toy_model.sigma_xx)
        assert np.linalg.norm(attack.sigma_aa) <= 1.01e-6 * np.linalg.norm(signal)
        assert attack.mi_under_attack == pytest.approx(no_attack_mi(toy_h, toy_model), abs=1e-4)

    def test_mismatched_with_true_model_matches(self, case14_h, case14_model):
        """Test that a mismatched attack with the correct H equals the closed form."""
        matched = optimal_attack(case14_h, case14_model, 2.0)
        mismatched = mismatched_attack(case14_h, case14_h, case14_model, 2.0)
        assert mismatched.construction == "mismatched"
        assert mismatched.mi_under_attack == matched.mi_under_attack
        assert mismatched.kl_attack == matched.kl_attack

    def test_mismatched_under_ac_model(self, case14, case14_h, case14_model):
        """Test that a DC-designed attack scored on a perturbed AC model still has valid MI."""
        point = OperatingPoint(np.random.default_rng(2).normal(0.0, 0.2, case14_h.n))
        attack = mismatched_attack(ac_jacobian_at(case14, point), case14_h, case14_model, 2.0)
        assert attack.mi_under_attack > 0
        assert attack.kl_attack > 0

    def test_uniform_shrink_lowers_mi(self, case14_h, case14_model):
        """Test that scoring the DC-designed attack on a uniformly shrunk H lowers MI."""
        values = []
        for c in (1.0, 0.999, 0.99, 0.9):
            shrunk = MeasurementMatrix(c * case14_h.h, case14_h.row_labels, case14_h.state_labels)
            values.append(mismatched_attack(shrunk, case14_h, case14_model, 2.0).mi_under_attack)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_mismatched_dimensions(self, case14_h, case14_model, toy_h):
        """Test that H matrices of different shapes are rejected."""
        with pytest.raises(DimensionError):
            mismatched_attack(toy_h, case14_h, case14_model, 2.0)


class TestMutualInformation:
    """Closed-form MI induced by the attack."""

    def test_toy_values(self, toy_h, toy_model):
        """Test the closed form on the two-bus grid at lambda = 1 and 2."""
        assert mi_corollary(toy_h, toy_model, 2.0) == pytest.approx(0.533176, abs=1e-6)
        assert mi_corollary(toy_h, toy_model, 1.0) == pytest.approx(0.5 * np.log(1.0 + 4.0 / 4.1), abs=1e-12)
        assert no_attack_mi(toy_h, toy_model) == pytest.approx(0.5 * np.log(41.0), abs=1e-12)

    @pytest.mark.parametrize("lam", [1.0, 2.0, 10.0])
    def test_matches_joint_distribution(self, case14_h, case14_model, lam):
        """Test that the closed form equals MI of the induced joint distribution."""
        attack = optimal_attack(case14_h, case14_model, lam)
        assert mi_corollary(case14_h, case14_model, lam) == pytest.approx(attack.mi_under_attack, abs=1e-7)

    def test_increasing_in_lambda(self, case14_h, case14_model):
        """Test that MI increases in lambda toward the no-attack value."""
        values = [mi_corollary(case14_h, case14_model, 2.0**k) for k in range(11)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] < no_attack_mi(case14_h, case14_model)

    def test_gap_at_large_lambda(self, case30):
        """Test that MI at lambda = 1024 is within 2% of the no-attack MI on case30."""
        h = dc_jacobian(case30)
        model = StateModel.from_snr(h, 0.1, 10.0)
        full = no_attack_mi(h, model)
        assert (full - mi_corollary(h, model, 1024.0)) / full < 0.02

    @pytest.mark.parametrize("lam", [2.0, 1024.0])
    def test_gap_per_direction(self, case30, lam):
        """Test the MI gap against its per-eigendirection closed form on case30."""
        h = dc_jacobian(case30)
        model = StateModel.from_snr(h, 0.1, 10.0)
        w, _ = psd_eigh(signal_covariance(h, model.sigma_xx))
        s = w[w > 1e-9 * w[-1]] / model.noise_var
        gap = 0.5 * np.sum(np.log1p(s**2 / (s * lam + s + lam)))
        assert no_attack_mi(h, model) - mi_corollary(h, model, lam) == pytest.approx(gap, rel=1e-8)


class TestObjective:
    """The weighted objective, its convexity and stationarity."""

    def test_decomposition(self, case14_h, case14_model):
        """Test f = 2 MI + 2 lambda KL - lambda log|Sigma_YY| at an arbitrary attack."""
        lam = 3.0
        sigma = random_psd(case14_h.m, np.random.default_rng(1), 0.5)
        mi, kl = attack_objective_terms(sigma, case14_h, case14_model, lam)
        clean = measurement_pair(case14_h, case14_model).cov_clean
        expected = 2.0 * mi + 2.0 * lam * kl - lam * logdet(clean)
        assert objective(sigma, case14_h, case14_model, lam) == pytest.approx(expected, rel=1e-9)

    def test_rejects_indefinite(self, toy_h, toy_model):
        """Test that the objective is only defined on the PSD cone."""
        with pytest.raises(NotPositiveDefiniteError):
            objective(-np.eye(4), toy_h, toy_model, 2.0)

    @pytest.mark.parametrize("lam", [1.0, 2.0, 10.0])
    def test_closed_form_beats_perturbations(self, case14_h, case14_model, lam):
        """Test that random PSD perturbations of the closed form increase the objective."""
        rng = np.random.default_rng(int(lam * 100))
        star = optimal_attack(case14_h, case14_model, lam).sigma_aa
        f_star = objective(star, case14_h, case14_model, lam)
        size = np.linalg.norm(star)
        for _ in range(100):
            v = rng.standard_normal(case14_h.m)
            v /= np.linalg.norm(v)
            s = rng.uniform(0.01, 0.1) * size
            assert objective(star + s * np.outer(v, v), case14_h, case14_model, lam) > f_star

    @pytest.mark.parametrize("lam", [1.0, 2.0])
    def test_midpoint_convexity(self, case14_h, case14_model, lam):
        """Test f((A + B)/2) <= (f(A) + f(B))/2 on random PSD pairs."""
        rng = np.random.default_rng(int(lam))
        scale = float(np.trace(signal_covariance(case14_h, case14_model.sigma_xx))) / case14_h.m

        def f(s):
            return objective(s, case14_h, case14_model, lam)

        for _ in range(100):
            a = random_psd(case14_h.m, rng, scale * rng.uniform(0.1, 2.0))
            b = random_psd(case14_h.m, rng, scale * rng.uniform(0.1, 2.0))
            assert f(0.5 * (a + b)) <= 0.5 * (f(a) + f(b)) + 1e-8

    def test_stationary_at_unit_weight(self, case14_h, case14_model):
        """Test the finite-difference residual at the closed form for lambda = 1."""
        star = optimal_attack(case14_h, case14_model, 1.0).sigma_aa
        f_star = objective(star, case14_h, case14_model, 1.0)
        assert optimality_residual(case14_h, case14_model, 1.0) <= 1e-3 * abs(f_star)

    def test_scaled_point_is_not_stationary(self, toy_h, toy_model):
        """Test that scaling the optimum by 1.1 raises the residual by at least 10x."""
        star = optimal_attack(toy_h, toy_model, 1.0).sigma_aa
        at_star = stationarity_residual(star, toy_h, toy_model, 1.0)
        scaled = stationarity_residual(1.1 * star, toy_h, toy_model, 1.0)
        assert scaled >= 10.0 * at_star
        assert scaled > 1e-3

    def test_zero_attack_has_no_directions(self, toy_h, toy_model):
        """Test that the residual is undefined at the apex of the cone."""
        with pytest.raises(RegimeError):
            stationarity_residual(np.zeros((4, 4)), toy_h, toy_model, 1.0)

    def test_residual_is_seeded(self, case14_h, case14_model):
        """Test that the residual depends only on its seed."""
        a = optimality_residual(case14_h, case14_model, 2.0, seed=4)
        b = optimality_residual(case14_h, case14_model, 2.0, seed=4)
        assert a == b


class TestStationaryAttack:
    """Exact minimiser within the eigenbasis of H Sigma_XX H^T."""

    def test_equals_closed_form_at_unit_weight(self, case14_h, case14_model):
        """Test that both constructions agree at lambda = 1."""
        closed = optimal_attack(case14_h, case14_model, 1.0).sigma_aa
        exact = stationary_attack(case14_h, case14_model, 1.0).sigma_aa
        np.testing.assert_allclose(exact, closed, atol=1e-9 * np.abs(closed).max())

    @pytest.mark.parametrize("lam", [2.0, 10.0])
    def test_minimises_objective(self, case14_h, case14_model, lam):
        """Test that the stationary attack is stationary and no worse than the closed form."""
        exact = stationary_attack(case14_h, case14_model, lam)
        closed = optimal_attack(case14_h, case14_model, lam)
        f_exact = objective(exact.sigma_aa, case14_h, case14_model, lam)
        assert f_exact <= objective(closed.sigma_aa, case14_h, case14_model, lam) + 1e-9
        assert stationarity_residual(exact.sigma_aa, case14_h, case14_model, lam) <= 1e-3 * abs(f_exact)

    def test_toy_eigenvalue(self, toy_h, toy_model):
        """Test the attack eigenvalue solves lam a (a + sigma^2) = mu (mu + sigma^2)."""
        lam = 2.0
        a = stationary_attack(toy_h, toy_model, lam).trace
        assert lam * a * (a + 0.1) == pytest.approx(4.0 * 4.1, rel=1e-10)

    def test_rank_one_toy(self, toy_case):
        """Test the toy attack is rank one."""
        h = dc_jacobian(toy_case)
        model = StateModel.from_snr(h, 0.0, 10.0)
        assert stationary_attack(h, model, 3.0).rank == 1
