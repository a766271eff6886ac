import numpy as np
import pytest

from oracles import triple_loop_matmul

from ditok import numerics as nm
from ditok.errors import ConfigurationError, DeterminismError, DimensionError, NumericError


class TestAffine:
    def test_identity_weights(self):
        x = nm.Tensor([[1.0, 2.0]])
        w = nm.Parameter(np.eye(2), "w")
        b = nm.Parameter(np.zeros(2), "b")
        out = nm.affine(x, w, b)
        assert np.array_equal(out.data, [[1.0, 2.0]])

    def test_hand_sum(self):
        x = nm.Tensor([[1.0, 1.0]])
        w = nm.Parameter([[2.0], [3.0]], "w")
        b = nm.Parameter([1.0], "b")
        assert np.allclose(nm.affine(x, w, b).data, [[6.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        out = nm.affine(nm.Tensor(x), nm.Parameter(w, "w"), nm.Parameter(b, "b"))
        assert np.abs(out.data - triple_loop_matmul(x, w, b)).max() < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        x = nm.Tensor(np.zeros((2, 3)))
        w = nm.Parameter(np.zeros((4, 2)), "w")
        b = nm.Parameter(np.zeros(2), "b")
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            nm.affine(x, w, b)

    def test_backward_exact_for_linear(self):
        rng = np.random.default_rng(1)
        w = nm.Parameter(rng.normal(size=(4, 3)), "w")
        b = nm.Parameter(rng.normal(size=3), "b")
        x_data = rng.normal(size=(5, 4))

        def f():
            return nm.sum_all(nm.affine(nm.Tensor(x_data), w, b))

        assert nm.check_gradients(f, [w, b]) < 1e-9


class TestLogSoftmax:
    def test_symmetry(self):
        out = nm.log_softmax(nm.Tensor([0.0, 0.0]))
        assert out.data == pytest.approx([-np.log(2), -np.log(2)])

    def test_max_shift_stability(self):
        out = nm.log_softmax(nm.Tensor([1000.0, 0.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(0.0, abs=1e-9)
        assert out.data[1] == pytest.approx(-1000.0, abs=1e-6)

    def test_exp_sums_to_one(self):
        rng = np.random.default_rng(3)
        for scale in (1.0, 1e3):
            v = rng.normal(size=7) * scale
            out = nm.log_softmax(nm.Tensor(v))
            assert abs(np.exp(out.data).sum() - 1.0) < 1e-9

    def test_nonfinite_input_raises(self):
        with pytest.raises(NumericError):
            nm.log_softmax(nm.Tensor([np.inf, 0.0]))

    def test_gradient(self):
        rng = np.random.default_rng(4)
        w = nm.Parameter(rng.normal(size=(2, 5)), "w")
        weights = rng.normal(size=(2, 5))

        def f():
            return nm.sum_all(nm.mul_const(nm.log_softmax(w), weights))

        assert nm.check_gradients(f, [w]) < 1e-7


class TestLayerNorm:
    def test_constant_vector_is_zeroed(self):
        gamma = nm.Parameter(np.ones(4), "g")
        beta = nm.Parameter(np.zeros(4), "b")
        out = nm.layer_norm(nm.Tensor([[3.0, 3.0, 3.0, 3.0]]), gamma, beta)
        assert np.abs(out.data).max() < 1e-9

    def test_already_normalized(self):
        gamma = nm.Parameter(np.ones(2), "g")
        beta = nm.Parameter(np.zeros(2), "b")
        out = nm.layer_norm(nm.Tensor([[1.0, -1.0]]), gamma, beta)
        assert np.abs(out.data - [[1.0, -1.0]]).max() < 1e-4

    def test_output_statistics(self):
        rng = np.random.default_rng(5)
        gamma = nm.Parameter(np.ones(5), "g")
        beta = nm.Parameter(np.zeros(5), "b")
        out = nm.layer_norm(nm.Tensor(rng.normal(size=(1, 5)) * 4), gamma, beta).data
        assert abs(out.mean()) < 1e-9
        assert abs(out.var() - 1.0) < 1e-3

    def test_gradient(self):
        rng = np.random.default_rng(6)
        gamma = nm.Parameter(rng.normal(size=6) + 1.0, "g")
        beta = nm.Parameter(rng.normal(size=6), "b")
        x = nm.Parameter(rng.normal(size=(4, 6)), "x")
        weights = rng.normal(size=(4, 6))

        def f():
            return nm.sum_all(nm.mul_const(nm.layer_norm(x, gamma, beta), weights))

        assert nm.check_gradients(f, [x, gamma, beta]) < 1e-4


class TestAdam:
    def test_zero_grad_is_identity(self):
        p = nm.Parameter([1.0, 2.0], "p")
        p.tensor.grad = np.zeros(2)
        nm.adam_step(p, lr=0.1)
        assert np.array_equal(p.data, [1.0, 2.0])
        assert p.step_count == 1
        assert p.grad is None

    def test_first_step_moves_by_lr(self):
        # Hand-executed recurrences: m_hat = g, v_hat = g^2 on step 1,
        # so the update is lr * g / (|g| + eps) = lr for g = 1.
        p = nm.Parameter([1.0], "p")
        p.tensor.grad = np.ones(1)
        nm.adam_step(p, lr=0.1)
        assert p.data[0] == pytest.approx(0.9, abs=1e-8)

    def test_constant_grad_monotone(self):
        p = nm.Parameter([1.0], "p")
        values = [1.0]
        for _ in range(2):
            p.tensor.grad = np.ones(1)
            nm.adam_step(p, lr=0.1)
            values.append(float(p.data[0]))
        assert values[0] > values[1] > values[2]

    def test_bad_lr(self):
        p = nm.Parameter([1.0], "p")
        p.tensor.grad = np.ones(1)
        with pytest.raises(ConfigurationError):
            nm.adam_step(p, lr=0.0)


class TestCheckGradients:
    def test_detects_nondeterminism(self):
        p = nm.Parameter([1.0], "p")
        state = {"n": 0}

        def f():
            state["n"] += 1
            return nm.sum_all(nm.mul_const(p, np.array([float(state["n"])])))

        with pytest.raises(DeterminismError):
            nm.check_gradients(f, [p])

    def test_linear_exact(self):
        rng = np.random.default_rng(8)
        w = nm.Parameter(rng.normal(size=(3, 3)), "w")
        x = rng.normal(size=(2, 3))

        def f():
            return nm.sum_all(nm.matmul(nm.Tensor(x), w))

        assert nm.check_gradients(f, [w]) < 1e-9


class TestSequenceOps:
    def test_mean_pool_lengths(self):
        x = nm.Tensor(np.arange(14.0).reshape(7, 2))
        assert nm.mean_pool(x, 2).shape == (4, 2)
        assert nm.mean_pool(x, 3).shape == (3, 2)
        assert nm.mean_pool(x, 1).shape == (7, 2)

    def test_mean_pool_partial_tail(self):
        x = nm.Tensor(np.array([[0.0], [2.0], [4.0]]))
        out = nm.mean_pool(x, 2)
        assert np.allclose(out.data, [[1.0], [4.0]])

    def test_repeat_upsample(self):
        x = nm.Tensor(np.array([[1.0], [2.0]]))
        out = nm.repeat_upsample(x, 2, 3)
        assert np.allclose(out.data, [[1.0], [1.0], [2.0]])

    def test_pool_upsample_gradients(self):
        rng = np.random.default_rng(9)
        x = nm.Parameter(rng.normal(size=(7, 3)), "x")
        weights = rng.normal(size=(7, 3))

        def f():
            pooled = nm.mean_pool(x, 2)
            up = nm.repeat_upsample(pooled, 2, 7)
            return nm.sum_all(nm.mul_const(up, weights))

        assert nm.check_gradients(f, [x]) < 1e-7

    def test_attention_gradient(self):
        rng = np.random.default_rng(10)
        D = 8
        x = nm.Parameter(rng.normal(size=(5, D)), "x")
        ws = [nm.Parameter(rng.normal(size=(D, D)) / np.sqrt(D), n) for n in "qkvo"]
        weights = rng.normal(size=(5, D))

        def f():
            att = nm.self_attention(x, *ws, n_heads=2)
            return nm.sum_all(nm.mul_const(att, weights))

        assert nm.check_gradients(f, [x] + ws) < 1e-5

    def test_depthwise_conv_gradient(self):
        rng = np.random.default_rng(11)
        x = nm.Parameter(rng.normal(size=(9, 4)), "x")
        k = nm.Parameter(rng.normal(size=(5, 4)), "k")
        weights = rng.normal(size=(9, 4))

        def f():
            return nm.sum_all(nm.mul_const(nm.depthwise_conv1d(x, k), weights))

        assert nm.check_gradients(f, [x, k]) < 1e-6

    def test_depthwise_conv_matches_direct_sum(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(6, 2))
        k = rng.normal(size=(3, 2))
        out = nm.depthwise_conv1d(nm.Tensor(x), nm.Parameter(k, "k")).data
        padded = np.zeros((8, 2))
        padded[1:7] = x
        expected = np.zeros((6, 2))
        for t in range(6):
            for d in range(2):
                for j in range(3):
                    expected[t, d] += padded[t + j, d] * k[j, d]
        assert np.abs(out - expected).max() < 1e-12

    def test_embedding_gradient_sparsity(self):
        table = nm.Parameter(np.random.default_rng(13).normal(size=(6, 3)), "emb")
        out = nm.sum_all(nm.embedding(table, np.array([1, 4, 1])))
        out.backward()
        used = {1, 4}
        for row in range(6):
            if row in used:
                assert np.any(table.grad[row] != 0)
            else:
                assert np.all(table.grad[row] == 0)

    def test_joint_broadcast_add_gradient(self):
        rng = np.random.default_rng(14)
        h = nm.Parameter(rng.normal(size=(3, 4)), "h")
        f_ = nm.Parameter(rng.normal(size=(2, 4)), "f")
        weights = rng.normal(size=(3, 2, 4))

        def f():
            return nm.sum_all(nm.mul_const(nm.joint_broadcast_add(h, f_), weights))

        assert nm.check_gradients(f, [h, f_]) < 1e-8

    def test_linear_resample_gradient(self):
        rng = np.random.default_rng(15)
        x = nm.Parameter(rng.normal(size=(6, 2)), "x")
        pos = np.array([0.0, 0.5, 1.25, 4.9, 5.0])
        weights = rng.normal(size=(5, 2))

        def f():
            return nm.sum_all(nm.mul_const(nm.linear_resample(x, pos), weights))

        assert nm.check_gradients(f, [x]) < 1e-7


class TestGradAccumulation:
    def test_shared_parameter_accumulates(self):
        w = nm.Parameter(np.array([[2.0]]), "w")
        x = nm.Tensor(np.array([[3.0]]))
        out = nm.add(nm.matmul(x, w), nm.matmul(x, w))
        nm.sum_all(out).backward()
        # d/dw of (x*w + x*w) = 2x
        assert np.allclose(w.grad, [[6.0]])

    def test_forward_ops_are_pure(self):
        x_data = np.array([[1.0, -2.0]])
        x = nm.Tensor(x_data.copy())
        nm.relu(x)
        nm.scale(x, 3.0)
        nm.log_softmax(x)
        assert np.array_equal(x.data, x_data)
