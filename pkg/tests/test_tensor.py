"""Autodiff core: forward values, tape semantics, and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giplab import tensor as T
from giplab.errors import NonFiniteError, ShapeError
from giplab.graphs import disjoint_union, normalized_adjacency

from fdcheck import check_gradients, signed_uniform

RNG = np.random.default_rng(2024)


def weighted_sum(y: T.Tensor, w: np.ndarray) -> T.Tensor:
    """Reduce to a scalar with distinct per-entry sensitivities."""
    return T.sum_all(T.mul_const(y, w))


class TestForwardValues:
    def test_matmul(self):
        a, b = RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2))
        out = T.matmul(T.tensor(a), T.tensor(b))
        np.testing.assert_allclose(out.data, a @ b)

    def test_elementwise(self):
        a, b = RNG.normal(size=(2, 3)), RNG.normal(size=(2, 3))
        np.testing.assert_allclose(T.add(T.tensor(a), T.tensor(b)).data, a + b)
        np.testing.assert_allclose(T.sub(T.tensor(a), T.tensor(b)).data, a - b)
        np.testing.assert_allclose(T.mul(T.tensor(a), T.tensor(b)).data, a * b)
        np.testing.assert_allclose(T.scale(T.tensor(a), 2.5).data, 2.5 * a)

    def test_relu(self):
        x = np.array([[-1.0, 0.0, 2.0]])
        assert T.relu(T.tensor(x)).data.tolist() == [[0.0, 0.0, 2.0]]

    def test_softplus_matches_reference(self):
        x = np.array([[-700.0, -1.0, 0.0, 1.0, 700.0]])
        out = T.softplus(T.tensor(x)).data
        assert 0.0 <= out[0, 0] < 1e-300  # saturates cleanly, no overflow
        np.testing.assert_allclose(out[0, 1:4], np.log1p(np.exp(x[0, 1:4])))
        assert out[0, 4] == pytest.approx(700.0)

    def test_sum_all_and_bias(self):
        x = np.arange(6, dtype=float).reshape(2, 3)
        assert T.sum_all(T.tensor(x)).item() == 15.0
        out = T.add_bias_row(T.tensor(x), T.tensor([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.data, x + np.array([1.0, 2.0, 3.0]))

    def test_transpose(self):
        x = RNG.normal(size=(2, 5))
        np.testing.assert_allclose(T.transpose(T.tensor(x)).data, x.T)

    def test_segment_sum(self):
        x = np.arange(10, dtype=float).reshape(5, 2)
        out = T.segment_sum(T.tensor(x), np.array([0, 0, 1, 2, 2]), 3)
        np.testing.assert_allclose(out.data, [[2, 4], [4, 5], [14, 16]])

    def test_segment_sum_empty_segment(self):
        x = np.ones((2, 1))
        out = T.segment_sum(T.tensor(x), np.array([0, 2]), 4)
        np.testing.assert_allclose(out.data, [[1.0], [0.0], [1.0], [0.0]])

    def test_segment_sum_rejects_unsorted(self):
        with pytest.raises(ShapeError):
            T.segment_sum(T.tensor(np.ones((2, 1))), np.array([1, 0]), 2)

    def test_logsumexp_rows_stable(self):
        x = np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]])
        out = T.logsumexp_rows(T.tensor(x)).data
        assert out[0, 0] == pytest.approx(1000.0 + np.log(2.0))
        assert out[1, 0] == pytest.approx(np.log(4.0))

    def test_diag_as_col(self):
        x = np.arange(9, dtype=float).reshape(3, 3)
        assert T.diag_as_col(T.tensor(x)).data.ravel().tolist() == [0.0, 4.0, 8.0]

    def test_row_l2_normalize(self):
        x = np.array([[3.0, 4.0], [0.0, 0.0]])
        out = T.row_l2_normalize(T.tensor(x)).data
        np.testing.assert_allclose(out[0], [0.6, 0.8])
        np.testing.assert_allclose(out[1], [0.0, 0.0])  # zero row stays zero

    def test_batch_standardize_population_moments(self):
        x = RNG.normal(size=(50, 4)) * 3.0 + 1.0
        out = T.batch_standardize(T.tensor(x)).data
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-12)

    def test_spmm_matches_dense(self, medium_batch):
        batch = medium_batch.replace_edges(inter_edges=[[0, 8], [2, 12]])
        adj = normalized_adjacency(batch, use_inter=True)
        x = RNG.normal(size=(batch.num_nodes, 3))
        out = T.spmm(adj, T.tensor(x))
        np.testing.assert_allclose(out.data, adj.dense @ x, atol=1e-12)


class TestTapeSemantics:
    def test_no_tape_means_no_tracking(self):
        x = T.tensor(np.ones((2, 2)), requires_grad=True)
        y = T.relu(x)
        assert not y.requires_grad and y.tape is None

    def test_result_tracked_only_if_an_input_is(self):
        with T.Tape() as tape:
            a = T.tensor(np.ones((2, 2)), requires_grad=True)
            c = T.constant(np.ones((2, 2)))
            assert T.add(a, c).requires_grad
            assert len(tape) == 1
            assert not T.add(c, c).requires_grad
            assert len(tape) == 1

    def test_backward_returns_leaf_grads_and_clears_tape(self):
        x = T.tensor(np.array([[1.0, -2.0]]), requires_grad=True)
        with T.Tape() as tape:
            loss = T.sum_all(T.relu(x))
            grads = T.backward(loss)
        np.testing.assert_allclose(grads[x], [[1.0, 0.0]])
        assert len(tape) == 0

    def test_backward_twice_raises(self):
        x = T.tensor(np.ones((1, 1)), requires_grad=True)
        with T.Tape():
            loss = T.sum_all(x)
            T.backward(loss)
            with pytest.raises(ShapeError):
                T.backward(loss)

    def test_backward_needs_scalar(self):
        x = T.tensor(np.ones((2, 2)), requires_grad=True)
        with T.Tape():
            y = T.relu(x)
            with pytest.raises(ShapeError):
                T.backward(y)

    def test_backward_without_tape_raises(self):
        x = T.tensor(np.ones((1, 1)), requires_grad=True)
        loss = T.sum_all(x)  # no tape active: not attached
        with pytest.raises(ShapeError):
            T.backward(loss)

    def test_grad_accumulates_over_reuse(self):
        x = T.tensor(np.full((2, 2), 3.0), requires_grad=True)
        with T.Tape():
            loss = T.sum_all(T.add(x, x))
            grads = T.backward(loss)
        np.testing.assert_allclose(grads[x], np.full((2, 2), 2.0))

    def test_constant_inputs_get_no_grad(self):
        a = T.tensor(RNG.normal(size=(2, 3)), requires_grad=True)
        c = T.constant(RNG.normal(size=(3, 2)))
        with T.Tape():
            grads = T.backward(T.sum_all(T.matmul(a, c)))
        assert a in grads and len(grads) == 1

    def test_inference_matches_tracked_forward(self):
        x = RNG.normal(size=(4, 3))
        xt = T.tensor(x, requires_grad=True)
        with T.Tape():
            tracked = T.row_l2_normalize(T.relu(xt)).data.copy()
        plain = T.row_l2_normalize(T.relu(T.tensor(x))).data
        assert np.array_equal(tracked, plain)

    def test_non_finite_raises_at_source(self):
        big = T.tensor(np.array([[1e308]]), requires_grad=True)
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
            T.add(big, big)

    def test_shape_mismatches_raise(self):
        a, b = T.tensor(np.ones((2, 2))), T.tensor(np.ones((2, 3)))
        for op in (T.add, T.sub, T.mul):
            with pytest.raises(ShapeError):
                op(a, b)
        with pytest.raises(ShapeError):
            T.matmul(a, T.tensor(np.ones((3, 2))))
        with pytest.raises(ShapeError):
            T.diag_as_col(b)
        with pytest.raises(ShapeError):
            T.add_bias_row(a, T.tensor(np.ones((1, 3))))


class TestGradients:
    """Finite-difference checks, one op at a time."""

    def test_matmul(self):
        w = RNG.normal(size=(3, 2))
        check_gradients(
            lambda ls: weighted_sum(T.matmul(ls[0], ls[1]), w),
            [RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2))],
        )

    def test_add_sub_mul(self):
        w = RNG.normal(size=(2, 3))
        a, b = RNG.normal(size=(2, 3)), RNG.normal(size=(2, 3))
        check_gradients(lambda ls: weighted_sum(T.add(ls[0], ls[1]), w), [a, b])
        check_gradients(lambda ls: weighted_sum(T.sub(ls[0], ls[1]), w), [a, b])
        check_gradients(lambda ls: weighted_sum(T.mul(ls[0], ls[1]), w), [a, b])

    def test_add_bias_row(self):
        w = RNG.normal(size=(4, 3))
        check_gradients(
            lambda ls: weighted_sum(T.add_bias_row(ls[0], ls[1]), w),
            [RNG.normal(size=(4, 3)), RNG.normal(size=(1, 3))],
        )

    def test_scale_and_mul_const(self):
        w = RNG.normal(size=(2, 2))
        m = RNG.normal(size=(2, 2))
        check_gradients(lambda ls: weighted_sum(T.scale(ls[0], -1.7), w), [RNG.normal(size=(2, 2))])
        check_gradients(lambda ls: weighted_sum(T.mul_const(ls[0], m), w), [RNG.normal(size=(2, 2))])

    def test_transpose(self):
        w = RNG.normal(size=(3, 2))
        check_gradients(lambda ls: weighted_sum(T.transpose(ls[0]), w), [RNG.normal(size=(2, 3))])

    def test_relu(self):
        w = RNG.normal(size=(3, 4))
        check_gradients(
            lambda ls: weighted_sum(T.relu(ls[0]), w), [signed_uniform(RNG, (3, 4))]
        )

    def test_softplus(self):
        w = RNG.normal(size=(2, 4))
        check_gradients(lambda ls: weighted_sum(T.softplus(ls[0]), w), [RNG.normal(size=(2, 4))])

    def test_sum_all(self):
        check_gradients(lambda ls: T.sum_all(ls[0]), [RNG.normal(size=(3, 3))])

    def test_segment_sum(self):
        w = RNG.normal(size=(3, 2))
        m = np.array([0, 0, 1, 2, 2])
        check_gradients(
            lambda ls: weighted_sum(T.segment_sum(ls[0], m, 3), w), [RNG.normal(size=(5, 2))]
        )

    def test_logsumexp_rows(self):
        w = RNG.normal(size=(3, 1))
        check_gradients(
            lambda ls: weighted_sum(T.logsumexp_rows(ls[0]), w), [RNG.normal(size=(3, 4))]
        )

    def test_diag_as_col(self):
        w = RNG.normal(size=(3, 1))
        check_gradients(
            lambda ls: weighted_sum(T.diag_as_col(ls[0]), w), [RNG.normal(size=(3, 3))]
        )

    def test_row_l2_normalize(self):
        w = RNG.normal(size=(4, 3))
        x = signed_uniform(RNG, (4, 3), low=0.3)  # rows well above the norm clamp
        check_gradients(lambda ls: weighted_sum(T.row_l2_normalize(ls[0]), w), [x])

    def test_batch_standardize(self):
        w = RNG.normal(size=(6, 3))
        x = RNG.normal(size=(6, 3)) * 2.0  # columns well above the std clamp
        check_gradients(lambda ls: weighted_sum(T.batch_standardize(ls[0]), w), [x])

    def test_spmm(self, medium_batch):
        batch = medium_batch.replace_edges(inter_edges=[[0, 8], [2, 12]])
        adj = normalized_adjacency(batch, use_inter=True)
        w = RNG.normal(size=(batch.num_nodes, 2))
        check_gradients(
            lambda ls: weighted_sum(T.spmm(adj, ls[0]), w),
            [RNG.normal(size=(batch.num_nodes, 2))],
            max_coords=30,
        )

    def test_deep_composition(self):
        w1, w2 = RNG.normal(size=(3, 5)), RNG.normal(size=(5, 2))
        wt = RNG.normal(size=(4, 2))

        def loss(ls):
            h = T.relu(T.matmul(ls[0], ls[1]))
            h = T.row_l2_normalize(T.matmul(h, ls[2]))
            return weighted_sum(h, wt)

        check_gradients(loss, [signed_uniform(RNG, (4, 3)), w1, w2])


@settings(max_examples=25, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=6),
    cols=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_linearity_of_sum(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(rows, cols)), rng.normal(size=(rows, cols))
    total = T.sum_all(T.add(T.tensor(a), T.tensor(b))).item()
    assert total == pytest.approx(a.sum() + b.sum(), rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_segment_sum_total_preserved(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    m = np.sort(rng.integers(0, 4, size=n))
    x = rng.normal(size=(n, 3))
    out = T.segment_sum(T.tensor(x), m, 4)
    np.testing.assert_allclose(out.data.sum(axis=0), x.sum(axis=0), atol=1e-12)
