import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hncl.errors import DegenerateEmbeddingError, OracleError, ShapeError
from hncl.numcore import (
    AdamState,
    adam_step,
    cosine_similarity_matrix,
    finite_diff_grad,
    l2_normalize_rows,
    make_rng,
    stable_logsumexp,
)
from oracles import naive_logsumexp


class TestStableLogsumexp:
    def test_two_zeros(self):
        assert stable_logsumexp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_large_values_do_not_overflow(self):
        assert stable_logsumexp([1000.0, 1000.0]) == pytest.approx(
            1000.0 + math.log(2.0), abs=1e-9
        )

    def test_matches_naive_at_small_magnitudes(self):
        v = [0.3, -1.2, 2.5]
        assert stable_logsumexp(v) == pytest.approx(naive_logsumexp(v), rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            stable_logsumexp([])

    def test_non_finite_raises(self):
        with pytest.raises(ValueError):
            stable_logsumexp([0.0, np.nan])

    @given(st.lists(st.floats(-700, 700), min_size=1, max_size=20))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, values):
        out = stable_logsumexp(values)
        assert out >= max(values) - 1e-12
        assert out <= max(values) + math.log(len(values)) + 1e-12


class TestL2NormalizeRows:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize_rows(np.array([[3.0, 4.0]])), [[0.6, 0.8]])

    def test_axis_aligned(self):
        out = l2_normalize_rows(np.array([[1.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_allclose(out, [[1.0, 0.0], [0.0, 1.0]])

    def test_random_rows_have_unit_norm(self, rng):
        out = l2_normalize_rows(rng.normal(size=(4, 8)))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-10)

    def test_idempotent(self, rng):
        once = l2_normalize_rows(rng.normal(size=(6, 5)))
        np.testing.assert_allclose(l2_normalize_rows(once), once, atol=1e-12)

    def test_degenerate_row_is_named(self):
        m = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateEmbeddingError) as exc:
            l2_normalize_rows(m)
        assert exc.value.row == 1


class TestCosineSimilarityMatrix:
    def test_orthonormal_rows_give_identity(self):
        e = np.eye(3)
        np.testing.assert_allclose(cosine_similarity_matrix(e, e), np.eye(3))

    def test_self_similarity_diagonal(self, rng):
        a = l2_normalize_rows(rng.normal(size=(5, 7)))
        np.testing.assert_allclose(np.diag(cosine_similarity_matrix(a, a)), 1.0, atol=1e-12)

    def test_forty_five_degrees(self):
        a = np.eye(2)
        b = np.full((2, 2), 1.0 / math.sqrt(2.0))
        np.testing.assert_allclose(
            cosine_similarity_matrix(a, b), np.full((2, 2), 0.7071067811865476), atol=1e-12
        )

    def test_transpose_symmetry(self, rng):
        a = l2_normalize_rows(rng.normal(size=(4, 6)))
        b = l2_normalize_rows(rng.normal(size=(4, 6)))
        np.testing.assert_array_equal(
            cosine_similarity_matrix(a, b).T, cosine_similarity_matrix(b, a)
        )

    def test_entries_bounded_for_unit_rows(self, rng):
        a = l2_normalize_rows(rng.normal(size=(8, 5)))
        b = l2_normalize_rows(rng.normal(size=(8, 5)))
        s = cosine_similarity_matrix(a, b)
        assert np.all(s >= -1.0 - 1e-9)
        assert np.all(s <= 1.0 + 1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestAdamStep:
    def test_first_step_moves_by_lr_against_gradient_sign(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([0.5])}
        new, state = adam_step(params, grads, AdamState(learning_rate=0.001))
        assert new["w"][0] == pytest.approx(-0.001, rel=1e-4)
        assert state.step == 1

    def test_zero_gradient_leaves_params_unchanged(self, rng):
        params = {"w": rng.normal(size=(3, 2))}
        grads = {"w": np.zeros((3, 2))}
        new, _ = adam_step(params, grads, AdamState(learning_rate=0.01))
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_constant_gradient_moves_monotonically(self):
        params = {"w": np.array([1.0])}
        grads = {"w": np.array([2.0])}
        state = AdamState(learning_rate=0.01)
        values = [params["w"][0]]
        for _ in range(5):
            params, state = adam_step(params, grads, state)
            values.append(params["w"][0])
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_bit_reproducible(self, rng):
        params = {"a": rng.normal(size=4), "b": rng.normal(size=(2, 2))}
        grads = {"a": rng.normal(size=4), "b": rng.normal(size=(2, 2))}

        def run():
            p, s = dict(params), AdamState(learning_rate=0.003)
            for _ in range(7):
                p, s = adam_step(p, grads, s)
            return p

        p1, p2 = run(), run()
        for k in p1:
            np.testing.assert_array_equal(p1[k], p2[k])

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(learning_rate=0.01))


class TestMakeRng:
    def test_same_seed_same_stream(self):
        a = make_rng(42, 1, 2).normal(size=10)
        b = make_rng(42, 1, 2).normal(size=10)
        np.testing.assert_array_equal(a, b)

    def test_substreams_differ(self):
        a = make_rng(42, 1).normal(size=10)
        b = make_rng(42, 2).normal(size=10)
        assert not np.array_equal(a, b)


class TestFiniteDiffGrad:
    def test_sum_of_squares(self):
        params = {"x": np.array([1.0, 2.0])}
        grad = finite_diff_grad(lambda p: float(np.sum(p["x"] ** 2)), params)
        np.testing.assert_allclose(grad["x"], [2.0, 4.0], atol=1e-6)

    def test_constant_function(self):
        params = {"x": np.array([1.0, -3.0])}
        grad = finite_diff_grad(lambda p: 7.0, params)
        np.testing.assert_array_equal(grad["x"], [0.0, 0.0])

    def test_non_finite_raises(self):
        params = {"x": np.array([0.0])}
        with pytest.raises(OracleError):
            finite_diff_grad(lambda p: float(np.log(p["x"][0])), params)

    def test_does_not_mutate_params(self):
        params = {"x": np.array([1.0, 2.0])}
        before = params["x"].copy()
        finite_diff_grad(lambda p: float(np.sum(p["x"] ** 3)), params)
        np.testing.assert_array_equal(params["x"], before)
