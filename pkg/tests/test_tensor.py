import math

import numpy as np
import pytest

from saep import tensor as tz
from saep.gradcheck import gradient_check
from saep.tensor import DimensionError, NonFiniteError, Tensor


def randt(rng, *shape):
    return Tensor(rng.standard_normal(shape).astype(np.float32),
                  requires_grad=True)


class TestMatmul:
    def test_identity(self):
        out = tz.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[3], [4]])

    def test_hand_expansion(self):
        out = tz.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[11]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            tz.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        a, b = randt(rng, 3, 4), randt(rng, 4, 2)
        rep = gradient_check(lambda: tz.tsum(tz.matmul(a, b)), [a, b],
                             tol=1e-3)
        assert rep.passed, str(rep)

    def test_batched_matches_per_slice(self):
        rng = np.random.default_rng(1)
        a = randt(rng, 5, 3, 4)
        b = randt(rng, 4, 2)
        out = tz.matmul(a, b)
        for i in range(5):
            np.testing.assert_allclose(out.data[i], a.data[i] @ b.data,
                                       rtol=1e-6)


class TestSoftmax:
    def test_uniform_by_symmetry(self):
        out = tz.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3] * 3], rtol=1e-6)

    def test_no_overflow_on_large_inputs(self):
        out = tz.softmax_rows(Tensor([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], rtol=1e-6)

    def test_scalar_oracle(self):
        # Independent scalar evaluation of e^{x_i - max} / sum.
        exps = [math.exp(x - 3.0) for x in (1.0, 2.0, 3.0)]
        expected = [e / sum(exps) for e in exps]
        out = tz.softmax_rows(Tensor([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.data[0], expected, rtol=1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((4, 6)).astype(np.float32) * 10.0
        out = tz.softmax_rows(Tensor(x)).data
        assert np.all(out >= 0.0) and np.all(out <= 1.0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


class TestLayerNorm:
    def test_constant_row_collapses_to_bias(self):
        out = tz.layer_norm(Tensor([[5.0, 5.0, 5.0]]),
                            Tensor([1.0, 1.0, 1.0]),
                            Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-3)

    def test_two_point_symmetry(self):
        out = tz.layer_norm(Tensor([[1.0, 3.0]]), Tensor([1.0, 1.0]),
                            Tensor([0.0, 0.0]), eps=0.0)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], rtol=1e-5)

    def test_row_statistics(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 8)).astype(np.float32) * 3.0
        out = tz.layer_norm(Tensor(x), Tensor(np.ones(8)),
                            Tensor(np.zeros(8))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


class TestCrossEntropy:
    def test_uniform_logits(self):
        out = tz.cross_entropy(Tensor(np.zeros((2, 4))), [0, 3])
        np.testing.assert_allclose(out.item(), math.log(4.0), rtol=1e-6)

    def test_saturated_logits(self):
        logits = np.full((1, 3), -50.0, dtype=np.float32)
        logits[0, 1] = 50.0
        assert tz.cross_entropy(Tensor(logits), [1]).item() < 1e-3

    def test_scalar_oracle(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((2, 3))
        labels = [2, 0]
        expected = -sum(
            math.log(math.exp(logits[i, y])
                     / sum(math.exp(v) for v in logits[i]))
            for i, y in enumerate(labels)) / 2.0
        out = tz.cross_entropy(Tensor(logits), labels)
        np.testing.assert_allclose(out.item(), expected, rtol=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            tz.cross_entropy(Tensor(np.zeros((1, 3))), [3])


class TestFiniteness:
    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, float("nan")])

    def test_inf_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([float("inf")])


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.arange(12.0).reshape(3, 4))
        out = tz.dropout(x, 0.5, np.random.default_rng(0), train=False)
        np.testing.assert_array_equal(out.data, x.data)

    def test_train_mode_preserves_expectation(self):
        rng = np.random.default_rng(4)
        x = Tensor(np.ones((200, 200), dtype=np.float32))
        out = tz.dropout(x, 0.3, rng, train=True)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_mask_values(self):
        rng = np.random.default_rng(5)
        out = tz.dropout(Tensor(np.ones(1000, dtype=np.float32)), 0.4, rng,
                         train=True)
        values = np.unique(out.data)
        assert len(values) == 2
        assert values[0] == 0.0
        np.testing.assert_allclose(values[1], 1.0 / 0.6, rtol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_primitive_gradients(seed):
    """Every differentiable primitive agrees with finite differences on
    random small inputs."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 8))
    rows = int(rng.integers(1, 8))
    w = Tensor(rng.standard_normal((rows, d)).astype(np.float32))
    w2 = Tensor(rng.standard_normal((d, rows)).astype(np.float32))

    x = randt(rng, rows, d)
    randb = randt(rng, d)

    checks = [
        ("matmul", [x], lambda: tz.tsum(tz.matmul(x, w2))),
        ("add_bias", [x, randb], lambda: tz.tsum(tz.mul(tz.add(x, randb), w))),
        ("relu", [x], lambda: tz.tsum(tz.mul(tz.relu(x), w))),
        ("softmax", [x], lambda: tz.tsum(tz.mul(tz.softmax_rows(x), w))),
        ("transpose", [x], lambda: tz.tsum(tz.mul(tz.transpose(x),
                                                  tz.transpose(Tensor(w.data))))),
        ("scale", [x], lambda: tz.tsum(tz.mul(x, 0.37))),
        ("mean", [x], lambda: tz.tmean(x)),
        ("l2norm", [x], lambda: tz.tsum(tz.mul(tz.l2_normalize(x), w))),
    ]
    gain, bias = randt(rng, d), randt(rng, d)
    checks.append(("layer_norm", [x, gain, bias],
                   lambda: tz.tsum(tz.mul(tz.layer_norm(x, gain, bias), w))))
    labels_v = rng.integers(0, d, size=rows)
    checks.append(("cross_entropy", [x],
                   lambda: tz.cross_entropy(x, labels_v)))

    for name, tensors, fn in checks:
        rep = gradient_check(fn, tensors, tol=1e-2)
        assert rep.passed, "%s: %s" % (name, rep)


def test_dropout_eval_gradient_is_identity():
    rng = np.random.default_rng(0)
    x = randt(rng, 3, 4)
    w = Tensor(rng.standard_normal((3, 4)).astype(np.float32))
    rep = gradient_check(
        lambda: tz.tsum(tz.mul(tz.dropout(x, 0.5, None, train=False), w)),
        [x], tol=1e-3)
    assert rep.passed, str(rep)


def test_backward_requires_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(DimensionError):
        tz.add(x, x).backward()
