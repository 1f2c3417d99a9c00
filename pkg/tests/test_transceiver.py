import numpy as np
import pytest

from eeba.channel import ArrayConfig, ScattererScenario, generate_channel, svd_factors
from eeba.exceptions import DomainError
from eeba.quantization import DEFAULT_TABLE, uniform_distortion_table
from eeba.transceiver import (LinkModel, analytic_mse, crlb, crlb_matrix, design_combiner, ideal_combiner,
                              make_combiner, monte_carlo_moments, projection_step, pseudo_covariance_test,
                              run_signal_chain)


class TestCombinerDesign:
    def test_square_case_is_exact_after_digital_correction(self, rng):
        H = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        chan = svd_factors(H, 4)
        comb = design_combiner(chan)
        assert np.abs(np.abs(comb.W_A_tilde) - 0.5).max() < 1e-12
        np.testing.assert_allclose(comb.effective_H @ chan.U, np.eye(4), atol=1e-6)
        assert comb.identity_ok

    def test_residual_descends_monotonically(self, chan8):
        comb = design_combiner(chan8, max_iters=100)
        trace = np.array(comb.residual_trace)
        assert len(trace) > 2
        assert np.all(np.diff(trace) <= 1e-12 * trace[0])

    def test_first_projection_is_phase_of_u(self, chan4):
        W = projection_step(chan4.U, np.eye(4))
        np.testing.assert_allclose(W, np.exp(1j * np.angle(chan4.U)) / np.sqrt(chan4.U.shape[0]))

    def test_constant_modulus_and_scaling(self, chan8):
        comb = design_combiner(chan8, max_iters=30)
        np.testing.assert_allclose(np.abs(comb.W_A_tilde), 1 / np.sqrt(128))
        assert np.linalg.norm(comb.W_A_tilde @ comb.W_D_H) ** 2 == pytest.approx(8)

    def test_hybrid_at_full_size_flags_identity_failure(self, chan8):
        comb = design_combiner(chan8, max_iters=50)
        assert not comb.identity_ok
        assert comb.warnings

    def test_ideal(self, chan4):
        comb = ideal_combiner(chan4)
        assert comb.identity_error < 1e-12 and comb.is_ideal
        assert make_combiner(chan4, "ideal").identity_ok
        with pytest.raises(DomainError):
            make_combiner(chan4, "bogus")


class TestCrlb:
    def test_arithmetic(self):
        # sigma^2 = 4, sigma_n2 = 1 and g l = 1 give 0.5
        H = np.array([[2.0]])
        chan = svd_factors(H, 1)
        link = LinkModel(chan, ideal_combiner(chan))
        # l = 1 + sigma^2 = 5, so choose a table with g(1) = 1/5
        table_link = LinkModel(chan, ideal_combiner(chan), table=type(DEFAULT_TABLE)((1 / 6,), max_bits=1))
        assert table_link.crlb([1], 1.0).entries[0] == pytest.approx(0.5)
        assert link.l[0] == pytest.approx(5.0)

    def test_quantization_free_limit(self, chan4, ideal4):
        c = crlb(chan4, ideal4, [32] * 4, 0.3)
        np.testing.assert_allclose(c.entries, 0.3 / chan4.sigma2, rtol=1e-12)

    def test_matrix_forms_match_diagonal(self, chan4, ideal4, rng):
        for _ in range(5):
            b = rng.integers(1, 6, size=4)
            sn2 = float(rng.uniform(0.01, 10))
            d = crlb(chan4, ideal4, b, sn2).entries
            for form in ("literal", "fisher"):
                M = crlb_matrix(chan4, ideal4, b, sn2, form)
                np.testing.assert_allclose(M, np.diag(d), atol=1e-9 * d.max())

    def test_fisher_fallback_for_hybrid(self, chan4):
        comb = design_combiner(chan4, max_iters=20)
        assert not comb.identity_ok
        c = crlb(chan4, comb, [2, 2, 2, 2], 1.0)
        assert c.form == "fisher"
        link = LinkModel(chan4, comb)
        # Fisher information assembled without the digital combiner
        qm = link.quantizer(np.array([2, 2, 2, 2]))
        A = 1.0 * (qm.alpha[:, None] * link.C * qm.alpha[None, :]) + np.diag(qm.Dq2_diag)
        B = qm.alpha[:, None] * link.M * link.sigma[None, :]
        J = B.conj().T @ np.linalg.solve(A, B)
        np.testing.assert_allclose(c.entries, np.real(np.diag(np.linalg.inv(J))), rtol=1e-9)

    def test_bad_form(self, chan4, ideal4):
        with pytest.raises(DomainError):
            crlb_matrix(chan4, ideal4, [1] * 4, 1.0, form="nope")


class TestAnalyticMse:
    def test_quantization_free(self, chan4, ideal4):
        np.testing.assert_allclose(analytic_mse(chan4, ideal4, [32] * 4, 1.0, 0.5), 0.5 / chan4.sigma2, rtol=1e-12)

    def test_noise_free_single_stream(self):
        alpha = 1 - DEFAULT_TABLE.f(2)
        chan = svd_factors(np.array([[1 / alpha]]), 1)
        comb = ideal_combiner(chan)
        dq2 = alpha * (1 - alpha) * (chan.sigma2[0] + 1)
        # the equalizer is 1 when alpha * sigma = 1
        assert analytic_mse(chan, comb, [2], 1.0, 0.0)[0] == pytest.approx(dq2)

    def test_equals_crlb_for_ideal_combiner(self, chan4, ideal4):
        b = [1, 2, 3, 4]
        np.testing.assert_allclose(analytic_mse(chan4, ideal4, b, 1.0, 0.2), crlb(chan4, ideal4, b, 0.2).entries)

    def test_full_expression_for_hybrid(self, chan4):
        comb = design_combiner(chan4, max_iters=20)
        link = LinkModel(chan4, comb)
        b = np.array([2, 3, 2, 1])
        K, G, Phi, E, qm = link.matrices(b, 0.4)
        full = np.real(np.diag(1.0 * (K - np.eye(4)) @ (K - np.eye(4)).conj().T + Phi))
        np.testing.assert_allclose(analytic_mse(chan4, comb, b, 1.0, 0.4), full, rtol=1e-10)


class TestSignalChain:
    def test_shapes_and_chunking(self, chan4, ideal4):
        batches = list(run_signal_chain(chan4, ideal4, [2] * 4, 1.0, 0.1, 1000, seed=1, chunk_size=300))
        assert [b.x.shape for b in batches] == [(300, 4)] * 3 + [(100, 4)]
        assert batches[0].r.shape == (300, 128) and batches[0].x_tilde.shape == (300, 64)

    def test_deterministic(self, chan4, ideal4):
        a = next(run_signal_chain(chan4, ideal4, [2] * 4, 1.0, 0.1, 50, seed=3))
        b = next(run_signal_chain(chan4, ideal4, [2] * 4, 1.0, 0.1, 50, seed=3))
        assert a.y.tobytes() == b.y.tobytes()

    def test_noiseless_fine_quantization_recovers_symbols(self, chan4, ideal4):
        batch = next(run_signal_chain(chan4, ideal4, [32] * 4, 1.0, 0.0, 200, seed=0))
        np.testing.assert_allclose(batch.y, batch.x, atol=1e-8)
        np.testing.assert_allclose(batch.z, batch.x * chan4.singular_values, atol=1e-8)

    def test_output_covariance(self, chan4, ideal4):
        b = np.array([1, 2, 3, 2])
        p, sn2 = 2.0, 0.5
        _, cov = monte_carlo_moments(chan4, ideal4, b, p, sn2, 100_000, seed=4)
        K, G, Phi, E, qm = LinkModel(chan4, ideal4).matrices(b, sn2)
        expected = p * K @ K.conj().T + Phi
        assert np.linalg.norm(cov - expected) / np.linalg.norm(expected) < 0.03

    def test_mse_matches_analytic(self, chan4, ideal4):
        b = np.array([3, 1, 4, 2])
        mse, _ = monte_carlo_moments(chan4, ideal4, b, 1.0, 0.3, 100_000, seed=8)
        np.testing.assert_allclose(mse, analytic_mse(chan4, ideal4, b, 1.0, 0.3), rtol=0.03)

    def test_real_quantizer_three_bits(self, chan4, ideal4):
        table = uniform_distortion_table()
        b = np.full(4, 3)
        mse, _ = monte_carlo_moments(chan4, ideal4, b, 1.0, 1.0, 100_000, seed=2, mode="real-quantizer",
                                     table=table)
        np.testing.assert_allclose(mse, analytic_mse(chan4, ideal4, b, 1.0, 1.0, table), rtol=0.10)

    def test_bad_mode(self, chan4, ideal4):
        with pytest.raises(DomainError):
            next(run_signal_chain(chan4, ideal4, [1] * 4, 1.0, 1.0, 10, 0, mode="x"))


class TestPseudoCovariance:
    def test_circular_and_matches_phi(self, chan4, ideal4):
        rep = pseudo_covariance_test(chan4, ideal4, [1, 2, 3, 4], 0.5, 200_000, seed=1)
        assert rep.pseudo_ok and rep.mean_ok
        assert rep.cov_rel_error < 0.03

    def test_quantization_free_phi(self, chan4, ideal4):
        K, G, Phi, E, qm = LinkModel(chan4, ideal4).matrices(np.full(4, 32), 0.7)
        np.testing.assert_allclose(Phi, 0.7 * G @ G.conj().T, rtol=1e-12, atol=1e-18)

    def test_hybrid_combiner(self):
        chan = generate_channel(ArrayConfig(num_tx_antennas=8, num_rx_antennas=16), ScattererScenario(), seed=3,
                                n_streams=3)
        comb = design_combiner(chan, max_iters=30)
        rep = pseudo_covariance_test(chan, comb, [1, 2, 3], 1.0, 100_000, seed=2)
        assert rep.passed
