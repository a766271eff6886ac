import numpy as np
import pytest

from ditok import augment, numerics as nm


def tensor(T=50, D=16, seed=0):
    return nm.Tensor(np.random.default_rng(seed).normal(size=(T, D)))


class TestTimeWarp:
    def test_short_input_identity(self):
        x = tensor(T=20)
        assert augment.time_warp(x, W=10, seed=0) is x

    def test_zero_displacement_identity(self):
        x = tensor(T=100)
        # find a seed whose displacement draw is 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            c = int(rng.integers(10, 90))
            d = int(rng.integers(-10, 11))
            if d == 0:
                out = augment.time_warp(x, W=10, seed=seed)
                assert np.abs(out.data - x.data).max() < 1e-9
                return
        pytest.fail("no zero-displacement seed found")

    def test_constant_input_constant_output(self):
        x = nm.Tensor(np.full((80, 4), 2.5))
        for seed in range(5):
            out = augment.time_warp(x, W=20, seed=seed)
            assert np.abs(out.data - 2.5).max() < 1e-12

    def test_endpoints_anchored(self):
        x = tensor(T=90, seed=3)
        for seed in range(10):
            out = augment.time_warp(x, W=25, seed=seed)
            assert np.abs(out.data[0] - x.data[0]).max() < 1e-9
            assert np.abs(out.data[-1] - x.data[-1]).max() < 1e-9

    def test_shape_preserved(self):
        x = tensor(T=61, seed=4)
        for seed in range(10):
            assert augment.time_warp(x, W=15, seed=seed).shape == (61, 16)


class TestTimeMask:
    def test_zero_width_identity(self):
        x = tensor()
        out = augment.time_mask(x, n_masks=2, max_width=0, seed=1)
        assert np.array_equal(out.data, x.data)

    def test_full_mask_possible_shape_kept(self):
        x = tensor(T=6)
        out = augment.time_mask(x, n_masks=3, max_width=1000, seed=2)
        assert out.shape == x.shape

    def test_unmasked_frames_bit_identical_and_fill_is_mean(self):
        x = tensor(T=40, seed=5)
        seed = 7
        out = augment.time_mask(x, n_masks=2, max_width=8, seed=seed)
        # recover the mask spans exactly as the op drew them
        rng = np.random.default_rng(seed)
        keep = np.ones(40, dtype=bool)
        for _ in range(2):
            width = int(rng.integers(0, 8 + 1))
            start = int(rng.integers(0, 40 - width + 1))
            keep[start : start + width] = False
        assert np.array_equal(out.data[keep], x.data[keep])
        mean_vec = x.data.mean(axis=0)
        for t in np.nonzero(~keep)[0]:
            assert np.allclose(out.data[t], mean_vec)


class TestEmbeddingMask:
    def test_zero_width_identity(self):
        x = tensor()
        out = augment.embedding_mask(x, max_width=0, seed=1)
        assert np.array_equal(out.data, x.data)

    def test_untouched_channels_bit_identical(self):
        x = tensor(T=20, D=30, seed=8)
        seed = 11
        out = augment.embedding_mask(x, max_width=6, seed=seed)
        rng = np.random.default_rng(seed)
        keep = np.ones(30, dtype=bool)
        for _ in range(2):
            width = int(rng.integers(0, 6 + 1))
            start = int(rng.integers(0, 30 - width + 1))
            keep[start : start + width] = False
        assert np.array_equal(out.data[:, keep], x.data[:, keep])
        assert np.all(out.data[:, ~keep] == 0.0)

    def test_overlapping_bands_legal(self):
        x = tensor(T=5, D=4, seed=9)
        out = augment.embedding_mask(x, max_width=4, seed=13)
        assert out.shape == (5, 4)


class TestGaussianNoise:
    def test_prob_zero_identity(self):
        x = tensor()
        assert augment.add_gaussian_noise(x, prob=0.0, std=1.0, seed=1) is x

    def test_std_zero_identity(self):
        x = tensor()
        assert augment.add_gaussian_noise(x, prob=1.0, std=0.0, seed=1) is x

    def test_moments(self):
        x = nm.Tensor(np.zeros((1000, 100)))
        std = 0.7
        out = augment.add_gaussian_noise(x, prob=1.0, std=std, seed=3)
        delta = out.data - x.data
        n = delta.size
        assert abs(delta.mean()) < 3 * std / np.sqrt(n)
        assert abs(delta.std() - std) / std < 0.02


class TestPipeline:
    def _cfg(self, **kw):
        return augment.AugmentConfig(**kw)

    def test_disabled_is_bit_identity(self):
        x = tensor(T=70, seed=20)
        out = augment.apply_pipeline(x, self._cfg(enabled=False), "utt1")
        assert out is x

    def test_deterministic_per_seed_and_utt(self):
        x = tensor(T=70, seed=21)
        cfg = self._cfg(rng_seed=5)
        a = augment.apply_pipeline(x, cfg, "utt1")
        b = augment.apply_pipeline(x, cfg, "utt1")
        assert np.array_equal(a.data, b.data)
        c = augment.apply_pipeline(x, cfg, "utt2")
        assert not np.array_equal(a.data, c.data)

    def test_shape_preserved_on_random_shapes(self):
        rng = np.random.default_rng(22)
        cfg = self._cfg(rng_seed=1)
        for _ in range(25):
            T = int(rng.integers(1, 120))
            D = int(rng.integers(1, 90))
            x = nm.Tensor(rng.normal(size=(T, D)))
            out = augment.apply_pipeline(x, cfg, f"u{T}x{D}")
            assert out.shape == (T, D)

    def test_gradient_flows_through_pipeline(self):
        cfg = self._cfg(rng_seed=9, noise_prob=1.0)
        p = nm.Parameter(np.random.default_rng(23).normal(size=(50, 8)), "x")
        weights = np.random.default_rng(24).normal(size=(50, 8))

        def f():
            return nm.sum_all(nm.mul_const(augment.apply_pipeline(p.tensor, cfg, "u"), weights))

        assert nm.check_gradients(f, [p]) < 1e-6

    def test_derived_seed_stable(self):
        assert augment.derive_seed(1, "a") == augment.derive_seed(1, "a")
        assert augment.derive_seed(1, "a") != augment.derive_seed(2, "a")
