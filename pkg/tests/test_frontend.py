import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ditok import frontend, numerics as nm
from ditok.corpus_io import TokenSequence
from ditok.errors import LengthError, ValidationError


def toks(groups, sizes, rate=50.0):
    return TokenSequence(np.asarray(groups), sizes, rate)


class TestEmbedTokens:
    def test_single_group_is_row_lookup(self):
        params = frontend.FrontendParams([16], seed=1)
        out = frontend.embed_tokens(toks([[3, 3, 5]], [16]), params)
        assert np.array_equal(out.data[0], params.tables[0].data[3])
        assert np.array_equal(out.data[2], params.tables[0].data[5])

    def test_eight_group_shape_contract(self):
        # EnCodec shape: 8 codebooks of 1024
        params = frontend.FrontendParams([1024] * 8, seed=2)
        out = frontend.embed_tokens(toks(np.zeros((8, 2), dtype=int), [1024] * 8), params)
        assert out.shape == (2, 80)

    def test_multi_group_matches_manual_concat_project(self):
        params = frontend.FrontendParams([4, 4], seed=3)
        t = toks([[1, 2], [3, 0]], [4, 4])
        out = frontend.embed_tokens(t, params)
        concat = np.concatenate(
            [params.tables[0].data[[1, 2]], params.tables[1].data[[3, 0]]], axis=1
        )
        assert np.allclose(out.data, concat @ params.w_fuse.data)

    def test_group_count_mismatch(self):
        params = frontend.FrontendParams([8], seed=0)
        with pytest.raises(ValidationError):
            frontend.embed_tokens(toks(np.zeros((2, 3), dtype=int), [8, 8]), params)

    def test_gradient_sparsity_over_table_rows(self):
        params = frontend.FrontendParams([6], seed=4)
        t = toks([[2, 4, 2]], [6])
        out = frontend.embed_tokens(t, params)
        nm.sum_all(out).backward()
        g = params.tables[0].grad
        for row in range(6):
            if row in (2, 4):
                assert np.any(g[row] != 0)
            else:
                assert np.all(g[row] == 0)

    def test_gradient_matches_finite_differences(self):
        params = frontend.FrontendParams([5, 5], seed=5)
        t = toks([[0, 3, 1], [2, 2, 4]], [5, 5])
        rng = np.random.default_rng(6)
        weights = rng.normal(size=(3, 80))

        def f():
            return nm.sum_all(nm.mul_const(frontend.embed_tokens(t, params), weights))

        assert nm.check_gradients(f, params.parameters()) < 1e-4


class TestInterpolateRate:
    def test_length_formula(self):
        x = nm.Tensor(np.zeros((7, 3)))
        out = frontend.interpolate_rate(x, 50.0)
        assert out.shape == (14, 3)

    def test_identity_at_target_rate(self):
        x = nm.Tensor(np.random.default_rng(7).normal(size=(5, 4)))
        out = frontend.interpolate_rate(x, 100.0)
        assert out is x

    def test_ramp_closed_form(self):
        T = 7
        x = nm.Tensor(np.arange(T, dtype=np.float64)[:, None])
        out = frontend.interpolate_rate(x, 50.0).data[:, 0]
        expected = np.minimum(np.arange(14) * 0.5, T - 1)
        assert np.abs(out - expected).max() < 1e-9

    def test_empty_input(self):
        x = nm.Tensor(np.zeros((0, 3)))
        with pytest.raises(LengthError):
            frontend.interpolate_rate(x, 50.0)

    def test_constants_preserved_exactly(self):
        x = nm.Tensor(np.full((9, 2), 0.1))
        out = frontend.interpolate_rate(x, 75.0)
        assert np.all(out.data == 0.1)

    @settings(max_examples=50, deadline=None)
    @given(
        t=st.integers(1, 40),
        rate=st.sampled_from([25.0, 40.0, 50.0, 75.0, 80.0, 150.0]),
        seed=st.integers(0, 2**31),
    )
    def test_bounds_and_shape_property(self, t, rate, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(size=(t, 3))
        x = nm.Tensor(data)
        expected_T = int(round(t * 100.0 / rate))
        if expected_T < 1:
            return
        out = frontend.interpolate_rate(x, rate)
        assert out.shape == (expected_T, 3)
        # convex combinations stay within per-channel bounds
        assert np.all(out.data.min(axis=0) >= data.min(axis=0) - 1e-12)
        assert np.all(out.data.max(axis=0) <= data.max(axis=0) + 1e-12)

    def test_gradient_flows(self):
        x = nm.Parameter(np.random.default_rng(8).normal(size=(6, 2)), "x")
        weights = np.random.default_rng(9).normal(size=(12, 2))

        def f():
            return nm.sum_all(nm.mul_const(frontend.interpolate_rate(x.tensor, 50.0), weights))

        assert nm.check_gradients(f, [x]) < 1e-7


class TestComposition:
    def test_embed_then_interpolate_shape(self):
        params = frontend.FrontendParams([10], seed=10)
        t = toks([[1, 2, 3, 4, 5]], [10], rate=50.0)
        emb = frontend.embed_tokens(t, params)
        out = frontend.interpolate_rate(emb, t.frame_rate_hz)
        assert out.shape == (10, 80)
