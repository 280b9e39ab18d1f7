import math

import numpy as np
import pytest

from hncl.errors import EmptyBatchError, InsufficientNegativesError
from hncl.losses import (
    EmbeddingBatch,
    HnlParams,
    debiased_loss_bidirectional,
    hnl_delta,
    hnl_loss_bidirectional,
    info_nce_bidirectional,
    nt_xent_two_view,
)
from hncl.numcore import finite_diff_grad, make_rng, relative_error

from conftest import random_batch, random_unit_rows
from oracles import naive_debiased, naive_delta, naive_hnl, naive_info_nce, naive_nt_xent


def hnl_params(n, beta=1.0, tau_plus=0.1, t=0.5, two_view=False):
    return HnlParams(
        beta=beta,
        tau_plus=tau_plus,
        temperature=t,
        num_negatives=(2 * n - 2) if two_view else (n - 1),
    )


class TestHnlParams:
    def test_tau_minus_is_exact_complement(self):
        p = hnl_params(4, tau_plus=0.037)
        assert p.tau_minus == 1.0 - 0.037

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"beta": -0.1},
            {"tau_plus": 1.0},
            {"tau_plus": -0.01},
            {"t": 0.0},
            {"beta": 100.0, "t": 0.1},  # exponent scale overflow guard
        ],
    )
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ValueError):
            hnl_params(4, **kwargs)


class TestInfoNce:
    def test_single_pair_has_zero_loss(self):
        z = np.array([[1.0, 0.0]])
        out = info_nce_bidirectional(EmbeddingBatch(z, z), temperature=0.3)
        assert out.loss == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(out.grad_z_s, 0.0, atol=1e-12)

    def test_two_aligned_orthogonal_pairs(self):
        z = np.eye(2)
        out = info_nce_bidirectional(EmbeddingBatch(z, z), temperature=1.0)
        assert out.loss == pytest.approx(4.0 * math.log(1.0 + math.exp(-1.0)), abs=1e-9)

    def test_matches_double_loop_oracle(self, rng):
        z_s, z_i = random_batch(rng, 5, 7)
        out = info_nce_bidirectional(EmbeddingBatch(z_s, z_i), temperature=0.4)
        assert out.loss == pytest.approx(naive_info_nce(z_s, z_i, 0.4), abs=1e-10)

    def test_empty_batch_raises(self):
        z = np.zeros((0, 3))
        with pytest.raises(EmptyBatchError):
            info_nce_bidirectional(EmbeddingBatch(z, z), temperature=1.0)

    def test_non_normalized_rows_rejected(self, rng):
        z = rng.normal(size=(3, 4))  # not normalized
        with pytest.raises(ValueError, match="unit-norm"):
            info_nce_bidirectional(EmbeddingBatch(z, z), temperature=1.0)

    def test_per_direction_term_bounded_when_positive_is_maximal(self, rng):
        # identical views make every positive the row maximum; each per-anchor
        # term is then at most log N (softmax of the max is at least 1/N)
        for trial in range(10):
            n = int(rng.integers(2, 7))
            z = random_unit_rows(rng, n, 6)
            out = info_nce_bidirectional(EmbeddingBatch(z, z), temperature=0.7)
            assert out.loss <= 2 * n * (math.log(n) + 1e-9)
            logits = (z @ z.T) / 0.7
            for k in range(n):
                term = math.log(sum(math.exp(v) for v in logits[k])) - logits[k, k]
                assert term <= math.log(n) + 1e-9

    def test_mean_reduction_scales_sum(self, rng):
        z_s, z_i = random_batch(rng, 4, 5)
        batch = EmbeddingBatch(z_s, z_i)
        total = info_nce_bidirectional(batch, 0.5)
        mean = info_nce_bidirectional(batch, 0.5, reduction="mean")
        assert mean.loss == pytest.approx(total.loss / 8.0, rel=1e-12)
        np.testing.assert_allclose(mean.grad_z_s, total.grad_z_s / 8.0, atol=1e-14)


class TestHnlDelta:
    def test_reduces_to_plain_sum(self):
        p = HnlParams(beta=0.0, tau_plus=0.0, temperature=1.0, num_negatives=2)
        assert hnl_delta(0.0, [0.0, 0.0], p) == pytest.approx(2.0, abs=1e-12)

    def test_clamp_returns_exact_floor(self):
        # a large positive prior pulls the inner term below the floor
        p = HnlParams(beta=0.0, tau_plus=0.5, temperature=0.2, num_negatives=2)
        value = hnl_delta(1.0, [-1.0, -1.0], p)
        assert value == 2.0 * math.exp(-1.0 / 0.2)

    def test_matches_scalar_transcription(self):
        p = HnlParams(beta=1.0, tau_plus=0.1, temperature=0.5, num_negatives=2)
        got = hnl_delta(0.9, [0.8, -0.2], p)
        assert got == pytest.approx(naive_delta(0.9, [0.8, -0.2], 1.0, 0.1, 0.5), rel=1e-12)

    def test_always_at_least_floor(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 9))
            p = HnlParams(
                beta=float(rng.uniform(0, 3)),
                tau_plus=float(rng.uniform(0, 0.5)),
                temperature=float(rng.uniform(0.1, 1.0)),
                num_negatives=n,
            )
            sims = rng.uniform(-1, 1, size=n)
            pos = float(rng.uniform(-1, 1))
            assert hnl_delta(pos, sims, p) >= n * math.exp(-1.0 / p.temperature) - 1e-15

    def test_empty_negatives_raise(self):
        p = hnl_params(2)
        with pytest.raises(ValueError):
            hnl_delta(0.5, [], p)

    def test_monotone_in_beta_with_a_hard_negative(self, rng):
        sims = np.array([0.9, -0.1, -0.3, 0.2])  # one clearly hardest negative
        values = []
        for beta in (0.0, 0.5, 1.0, 2.0, 4.0):
            p = HnlParams(beta=beta, tau_plus=0.05, temperature=0.5, num_negatives=4)
            values.append(hnl_delta(0.7, sims, p))
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


class TestHnlLoss:
    def test_all_zero_similarities_give_analytic_value(self):
        # three orthogonal pairs across modalities: every similarity is 0
        z_s = np.eye(6)[:3]
        z_i = np.eye(6)[3:]
        p = HnlParams(beta=0.0, tau_plus=0.0, temperature=1.0, num_negatives=2)
        out = hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), p)
        assert out.loss == pytest.approx(6.0 * math.log(3.0), abs=1e-9)

    def test_reduces_to_info_nce(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 8))
            z_s, z_i = random_batch(rng, n, 6)
            batch = EmbeddingBatch(z_s, z_i)
            t = float(rng.uniform(0.2, 1.0))
            p = HnlParams(beta=0.0, tau_plus=0.0, temperature=t, num_negatives=n - 1)
            plain = info_nce_bidirectional(batch, t)
            hard = hnl_loss_bidirectional(batch, p)
            assert hard.loss == pytest.approx(plain.loss, abs=1e-10)
            np.testing.assert_allclose(hard.grad_z_s, plain.grad_z_s, atol=1e-10)
            np.testing.assert_allclose(hard.grad_z_i, plain.grad_z_i, atol=1e-10)

    def test_matches_double_loop_oracle(self, rng):
        # beta 1.0, prior 0.037, temperature 0.1: the multimodal operating point
        z_s, z_i = random_batch(rng, 6, 8)
        p = HnlParams(beta=1.0, tau_plus=0.037, temperature=0.1, num_negatives=5)
        out = hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), p)
        assert out.loss == pytest.approx(naive_hnl(z_s, z_i, 1.0, 0.037, 0.1), abs=1e-9)
        _grad_check(
            lambda a, b: hnl_loss_bidirectional(EmbeddingBatch(a, b), p, validate=False),
            z_s, z_i,
        )

    def test_insufficient_negatives(self):
        z = np.array([[1.0, 0.0]])
        with pytest.raises(InsufficientNegativesError):
            hnl_loss_bidirectional(EmbeddingBatch(z, z), hnl_params(2))

    def test_num_negatives_must_match_batch(self, rng):
        z_s, z_i = random_batch(rng, 4, 5)
        with pytest.raises(ValueError, match="num_negatives"):
            hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), hnl_params(7))

    def test_loss_positive(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            z_s, z_i = random_batch(rng, n, 5)
            p = HnlParams(
                beta=float(rng.uniform(0, 2)),
                tau_plus=float(rng.uniform(0, 0.3)),
                temperature=float(rng.uniform(0.2, 1.0)),
                num_negatives=n - 1,
            )
            assert hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), p).loss > 0.0

    def test_permutation_equivariance(self, rng):
        n = 6
        z_s, z_i = random_batch(rng, n, 7)
        p = hnl_params(n)
        out = hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), p)
        perm = rng.permutation(n)
        out_p = hnl_loss_bidirectional(EmbeddingBatch(z_s[perm], z_i[perm]), p)
        assert out_p.loss == pytest.approx(out.loss, abs=1e-12)
        np.testing.assert_allclose(out_p.grad_z_s, out.grad_z_s[perm], atol=1e-12)
        np.testing.assert_allclose(out_p.grad_z_i, out.grad_z_i[perm], atol=1e-12)


class TestDebiased:
    def test_tau_zero_equals_info_nce(self, rng):
        z_s, z_i = random_batch(rng, 5, 6)
        batch = EmbeddingBatch(z_s, z_i)
        a = debiased_loss_bidirectional(batch, 0.0, 0.5)
        b = info_nce_bidirectional(batch, 0.5)
        assert a.loss == pytest.approx(b.loss, abs=1e-10)

    def test_bitwise_equal_to_hnl_beta_zero(self, rng):
        z_s, z_i = random_batch(rng, 4, 6)
        batch = EmbeddingBatch(z_s, z_i)
        p = HnlParams(beta=0.0, tau_plus=0.027, temperature=0.4, num_negatives=3)
        a = debiased_loss_bidirectional(batch, 0.027, 0.4)
        b = hnl_loss_bidirectional(batch, p)
        assert a.loss == b.loss
        np.testing.assert_array_equal(a.grad_z_s, b.grad_z_s)
        np.testing.assert_array_equal(a.grad_z_i, b.grad_z_i)

    def test_matches_independent_transcription(self, rng):
        z_s, z_i = random_batch(rng, 6, 5)
        out = debiased_loss_bidirectional(EmbeddingBatch(z_s, z_i), 0.1, 0.5)
        assert out.loss == pytest.approx(naive_debiased(z_s, z_i, 0.1, 0.5), abs=1e-10)


class TestNtXent:
    def test_orthogonal_instances_identical_views(self):
        z = np.eye(4)[:2]
        out = nt_xent_two_view(z, z, temperature=1.0)
        assert out.loss == pytest.approx(4.0 * math.log(1.0 + 2.0 * math.exp(-1.0)), abs=1e-9)

    def test_hnl_reduction_to_plain(self, rng):
        n = 5
        a = random_unit_rows(rng, n, 6)
        b = random_unit_rows(rng, n, 6)
        p = HnlParams(beta=0.0, tau_plus=0.0, temperature=0.5, num_negatives=2 * n - 2)
        plain = nt_xent_two_view(a, b, 0.5)
        hard = nt_xent_two_view(a, b, 0.5, p)
        assert hard.loss == pytest.approx(plain.loss, abs=1e-10)
        np.testing.assert_allclose(hard.grad_z_s, plain.grad_z_s, atol=1e-10)

    def test_matches_double_loop_oracle(self, rng):
        a = random_unit_rows(rng, 5, 7)
        b = random_unit_rows(rng, 5, 7)
        out = nt_xent_two_view(a, b, 0.5)
        assert out.loss == pytest.approx(naive_nt_xent(a, b, 0.5), abs=1e-10)

    def test_hnl_matches_double_loop_oracle(self, rng):
        a = random_unit_rows(rng, 4, 6)
        b = random_unit_rows(rng, 4, 6)
        p = HnlParams(beta=0.5, tau_plus=0.037, temperature=0.5, num_negatives=6)
        out = nt_xent_two_view(a, b, 0.5, p)
        assert out.loss == pytest.approx(
            naive_nt_xent(a, b, 0.5, beta=0.5, tau_plus=0.037), abs=1e-10
        )

    def test_single_instance_raises(self):
        z = np.array([[1.0, 0.0]])
        with pytest.raises(InsufficientNegativesError):
            nt_xent_two_view(z, z, 1.0)

    def test_temperature_mismatch_rejected(self, rng):
        a = random_unit_rows(rng, 3, 4)
        p = HnlParams(beta=1.0, tau_plus=0.1, temperature=0.2, num_negatives=4)
        with pytest.raises(ValueError, match="temperature"):
            nt_xent_two_view(a, a, 0.5, p)


def _grad_check(loss_fn, z_s, z_i, rtol=1e-4, atol=1e-8):
    """Compare analytic gradients against central finite differences.

    The absolute fallback only matters when the loss sits at its floor
    (all anchors clamped) and gradients are ~1e-6: there the difference
    quotient itself loses precision to cancellation, so a relative test
    of two near-zero quantities would measure oracle noise.
    """
    out = loss_fn(z_s, z_i)
    fd = finite_diff_grad(
        lambda p: loss_fn(p["z_s"], p["z_i"]).loss, {"z_s": z_s.copy(), "z_i": z_i.copy()}
    )
    for got, ref, name in ((out.grad_z_s, fd["z_s"], "grad_z_s"), (out.grad_z_i, fd["z_i"], "grad_z_i")):
        rel = relative_error(got, ref)
        abs_err = float(np.linalg.norm(got - ref))
        assert rel < rtol or abs_err < atol, f"{name}: rel {rel}, abs {abs_err}"


class TestGradients:
    """Analytic vs central finite differences (h = 1e-5), 20+ random instances
    per loss over N in 2..8 and d in 2..16. The perturbed points are slightly
    off the unit sphere, so validation is disabled inside the probe."""

    def _instances(self, seed):
        rng = make_rng(seed)
        for trial in range(20):
            n = int(rng.integers(2, 9))
            d = int(rng.integers(2, 17))
            yield rng, random_batch(rng, n, d)

    def test_info_nce(self):
        for rng, (z_s, z_i) in self._instances(11):
            t = float(rng.uniform(0.1, 1.0))
            _grad_check(
                lambda a, b: info_nce_bidirectional(EmbeddingBatch(a, b), t, validate=False),
                z_s, z_i,
            )

    def test_hnl(self):
        for rng, (z_s, z_i) in self._instances(12):
            p = HnlParams(
                beta=float(rng.uniform(0, 2)),
                tau_plus=float(rng.uniform(0, 0.3)),
                temperature=float(rng.uniform(0.1, 1.0)),
                num_negatives=z_s.shape[0] - 1,
            )
            _grad_check(
                lambda a, b: hnl_loss_bidirectional(EmbeddingBatch(a, b), p, validate=False),
                z_s, z_i,
            )

    def test_debiased(self):
        for rng, (z_s, z_i) in self._instances(13):
            tau = float(rng.uniform(0, 0.3))
            t = float(rng.uniform(0.1, 1.0))
            _grad_check(
                lambda a, b: debiased_loss_bidirectional(
                    EmbeddingBatch(a, b), tau, t, validate=False
                ),
                z_s, z_i,
            )

    def test_nt_xent(self):
        for rng, (z_s, z_i) in self._instances(14):
            t = float(rng.uniform(0.2, 1.0))
            _grad_check(lambda a, b: nt_xent_two_view(a, b, t, validate=False), z_s, z_i)

    def test_nt_xent_hnl(self):
        for rng, (z_s, z_i) in self._instances(15):
            n = z_s.shape[0]
            p = HnlParams(
                beta=float(rng.uniform(0, 2)),
                tau_plus=float(rng.uniform(0, 0.2)),
                temperature=0.5,
                num_negatives=2 * n - 2,
            )
            _grad_check(
                lambda a, b: nt_xent_two_view(a, b, 0.5, p, validate=False), z_s, z_i
            )
