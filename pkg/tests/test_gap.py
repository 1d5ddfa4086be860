import numpy as np
import pytest

from aircomp_vfl.data import FeaturePartitionedDataset, synthetic_dataset
from aircomp_vfl.gap import (
    ConvergenceConstants,
    GapLedger,
    accumulate_gap,
    contraction_constants,
    effective_noise_moment,
    optimality_gap,
    phi_terms,
    sigmoid_link_G,
    theorem_bound,
    verify_lemma1,
)


def make_ledger(rng, rounds, devices):
    ledger = GapLedger()
    for _ in range(rounds):
        ledger.add_round(
            rng.uniform(0.1, 1.0),
            rng.uniform(0.1, 1.0, devices),
            rng.uniform(0.5, 2.0, devices),
            rng.uniform(0.5, 2.0, devices),
        )
    return ledger


class TestPhiTerms:
    def test_zero_features(self):
        ds = FeaturePartitionedDataset(
            (np.zeros((3, 2)), np.zeros((3, 2))), np.zeros(3, dtype=int)
        )
        phi1, phi2 = phi_terms(ds, np.full(3, 0.25))
        np.testing.assert_array_equal(phi1, np.zeros(2))
        np.testing.assert_array_equal(phi2, np.zeros(2))

    def test_single_sample_hand_values(self):
        # one sample, one device, squared norm 4, curvature 1/4
        ds = FeaturePartitionedDataset((np.array([[2.0, 0.0]]),), np.array([1]))
        phi1, phi2 = phi_terms(ds, np.array([0.25]))
        assert phi1[0] == pytest.approx(0.25)
        assert phi2[0] == pytest.approx(4.0)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        ds = synthetic_dataset(1, 20, 12, 3)
        gp = rng.uniform(0.0, 0.25, 20)
        phi1, phi2 = phi_terms(ds, gp)
        for k, block in enumerate(ds.blocks):
            acc1 = acc2 = 0.0
            for i in range(20):
                norm_sq = sum(v * v for v in block[i])
                acc1 += gp[i] ** 2 * norm_sq
                acc2 += norm_sq
            assert phi1[k] == pytest.approx(acc1, rel=1e-12)
            assert phi2[k] == pytest.approx(acc2, rel=1e-12)

    def test_multiclass_streams_sum_over_classes(self):
        ds = synthetic_dataset(2, 10, 8, 2)
        gp = np.random.default_rng(3).uniform(0.0, 0.3, (10, 4))
        phi1, phi2 = phi_terms(ds, gp)
        phi1_sum = sum(phi_terms(ds, gp[:, c])[0] for c in range(4))
        np.testing.assert_allclose(phi1, phi1_sum, rtol=1e-12)
        np.testing.assert_allclose(phi2, 4 * phi_terms(ds, gp[:, 0])[1], rtol=1e-12)


class TestContractionConstants:
    def test_zero_features_gives_pure_regularizer(self):
        ds = FeaturePartitionedDataset((np.zeros((4, 2)),), np.zeros(4, dtype=int))
        c = contraction_constants(ds, 0.3)
        assert c.alpha == pytest.approx(0.3)
        assert c.beta == pytest.approx(0.3)
        assert c.rho == pytest.approx(0.0)

    def test_orthonormal_rows(self):
        ds = FeaturePartitionedDataset.from_matrix(
            np.eye(4), np.array([0, 1, 0, 1]), num_devices=2
        )
        c = contraction_constants(ds, 0.1)
        assert c.beta == pytest.approx(1.0 / 16.0 + 0.1, rel=1e-12)
        assert c.learning_rate == pytest.approx(1.0 / (1.0 / 16.0 + 0.1), rel=1e-12)

    def test_rho_in_unit_interval(self):
        for seed in range(5):
            ds = synthetic_dataset(seed, 30, 8, 2)
            c = contraction_constants(ds, 0.05)
            assert 0.0 <= c.rho < 1.0

    def test_invalid_inputs(self):
        ds = synthetic_dataset(0, 10, 4, 2)
        with pytest.raises(ValueError):
            contraction_constants(ds, 0.0)
        with pytest.raises(ValueError):
            ConvergenceConstants(alpha=2.0, beta=1.0)


class TestOptimalityGap:
    def test_zero_variances_zero_gap(self):
        ledger = GapLedger()
        for _ in range(4):
            ledger.add_round(0.0, np.zeros(3), np.ones(3), np.ones(3))
        assert optimality_gap(ledger, 0.9, 4) == 0.0

    def test_single_round_no_discount(self):
        ledger = GapLedger()
        phi1, phi2 = np.array([2.0, 1.0]), np.array([0.5, 3.0])
        s_ul, s_dl = 0.3, np.array([0.2, 0.1])
        ledger.add_round(s_ul, s_dl, phi1, phi2)
        expected = np.sum(phi1 * s_ul + phi2 * s_dl)
        assert optimality_gap(ledger, 0.7, 1) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force_double_loop(self):
        rng = np.random.default_rng(4)
        ledger = make_ledger(rng, 5, 3)
        rho, T = 0.85, 5
        brute = 0.0
        for t in range(T):
            inner = 0.0
            for k in range(3):
                inner += (
                    ledger.phi1[t][k] * ledger.sigma2_ul[t]
                    + ledger.phi2[t][k] * ledger.sigma2_dl[t][k]
                )
            brute += rho ** (T - t - 1) * inner
        assert optimality_gap(ledger, rho, T) == pytest.approx(brute, rel=1e-12)

    def test_linearity_under_variance_scaling(self):
        rng = np.random.default_rng(5)
        ledger = make_ledger(rng, 6, 4)
        scaled = GapLedger()
        c = 3.7
        for t in range(6):
            scaled.add_round(
                c * ledger.sigma2_ul[t], c * ledger.sigma2_dl[t],
                ledger.phi1[t], ledger.phi2[t],
            )
        base = optimality_gap(ledger, 0.9, 6)
        assert optimality_gap(scaled, 0.9, 6) == pytest.approx(c * base, rel=1e-12)

    def test_recursion_matches_direct_sum(self):
        rng = np.random.default_rng(6)
        ledger = make_ledger(rng, 8, 2)
        rho = 0.8
        running = 0.0
        for t in range(8):
            running = accumulate_gap(running, rho, ledger.round_term(t))
        assert running == pytest.approx(optimality_gap(ledger, rho, 8), rel=1e-12)


class TestTheoremBound:
    def test_zero_gap_pure_decay(self):
        c = ConvergenceConstants(alpha=0.2, beta=1.0)
        main, tight = theorem_bound(2.0, c, 0.0, 100, 10)
        assert main == pytest.approx(0.8**10 * 2.0, rel=1e-12)
        assert tight == main

    def test_unit_contraction_leaves_only_noise(self):
        c = ConvergenceConstants(alpha=1.0, beta=1.0)  # rho = 0
        main, tight = theorem_bound(5.0, c, 4.0, 10, 3)
        assert main == pytest.approx(3.0 * 4.0 / (2 * 100 * 1.0), rel=1e-12)
        assert tight == pytest.approx(4.0 / (2 * 100 * 1.0), rel=1e-12)

    def test_formula_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            alpha, beta = sorted(rng.uniform(0.1, 2.0, 2))
            c = ConvergenceConstants(alpha=alpha, beta=beta)
            f0, b, L, T = rng.uniform(0, 3), rng.uniform(0, 5), 50, 7
            main, tight = theorem_bound(f0, c, b, L, T)
            rho = 1 - alpha / beta
            assert main == pytest.approx(
                rho**T * f0 + 3 * b / (2 * L**2 * beta), rel=1e-12
            )
            assert tight == pytest.approx(
                rho**T * f0 + b / (2 * L**2 * beta), rel=1e-12
            )


class TestLemma1Bias:
    def test_linear_link_exactly_unbiased(self):
        bias = verify_lemma1(lambda s: 2.0 * np.asarray(s) + 1.0, 0.5,
                             [0.1, 0.5, 1.0], 10**4, rng=0)
        np.testing.assert_allclose(bias, 0.0, atol=1e-12)

    def test_sigmoid_bias_shrinks_quadratically(self):
        g_fn = sigmoid_link_G(1.0)
        sigmas = np.array([0.8, 0.4, 0.2, 0.1])
        bias = np.abs(verify_lemma1(g_fn, 1.0, sigmas, 2 * 10**5, rng=1))
        assert bias[-1] < bias[0]
        assert np.all(bias / sigmas**2 < 0.5)

    def test_zero_noise_zero_bias(self):
        g_fn = sigmoid_link_G(0.0)
        bias = verify_lemma1(g_fn, 0.3, [0.0], 10**4, rng=2)
        assert abs(bias[0]) < 1e-15

    def test_too_few_draws_rejected(self):
        with pytest.raises(ValueError):
            verify_lemma1(lambda s: s, 0.0, [0.1], 100)


class TestEffectiveNoiseMoment:
    def test_zero_noise_zero_moment(self):
        ds = synthetic_dataset(8, 16, 8, 2)
        mc, closed = effective_noise_moment(
            ds, np.full(16, 0.2), 0.0, np.zeros(2), 10**4, rng=3
        )
        np.testing.assert_array_equal(mc, 0.0)
        np.testing.assert_array_equal(closed, 0.0)

    def test_monte_carlo_matches_closed_form(self):
        rng = np.random.default_rng(9)
        ds = synthetic_dataset(10, 24, 12, 3)
        gp = rng.uniform(0.05, 0.25, 24)
        mc, closed = effective_noise_moment(
            ds, gp, 0.4, rng.uniform(0.05, 0.3, 3), 10**5, rng=4
        )
        np.testing.assert_allclose(mc, closed, rtol=0.02)

    def test_uplink_scaling_isolates_first_term(self):
        ds = synthetic_dataset(11, 16, 8, 2)
        gp = np.full(16, 0.2)
        _, base = effective_noise_moment(ds, gp, 1.0, np.zeros(2) + 1e-12, 10**4, 5)
        _, quad = effective_noise_moment(ds, gp, 4.0, np.zeros(2) + 1e-12, 10**4, 5)
        phi1, _ = phi_terms(ds, gp)
        L = ds.num_samples
        np.testing.assert_allclose(quad - base, 3.0 * phi1 / L**2, rtol=1e-9)
