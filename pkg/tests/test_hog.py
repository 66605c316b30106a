import numpy as np
import pytest
import torch

from scalebranch.hog import HogError, HogSpec, dominant_bin, hog, hog_descriptor

SMALL = HogSpec(cell_size=4, block_size=2)


class TestHogSpec:
    def test_descriptor_length(self):
        # 32x32 with 8px cells -> 4x4 cells -> 3x3 blocks of 2x2 cells x 9 bins.
        assert HogSpec().descriptor_length((32, 32)) == 3 * 3 * 4 * 9

    def test_too_small_image(self):
        with pytest.raises(HogError, match="too small"):
            HogSpec().descriptor_length((8, 8))

    def test_angular_power_must_be_even(self):
        with pytest.raises(HogError, match="even"):
            HogSpec(angular_power=7)

    def test_epsilons_positive(self):
        with pytest.raises(HogError, match="positive"):
            HogSpec(block_epsilon=0.0)


class TestDescriptorValues:
    def test_constant_image_is_exactly_zero(self):
        desc = hog_descriptor(np.full((16, 16), 0.37), SMALL)
        assert desc.shape == (3 * 3 * 4 * 9,)
        assert np.all(desc == 0.0)

    def test_finite_and_bounded(self):
        rng = np.random.default_rng(0)
        desc = hog_descriptor(rng.uniform(size=(16, 16)), SMALL)
        assert np.all(np.isfinite(desc))
        # Block L2 normalization bounds every entry by 1.
        assert np.abs(desc).max() <= 1.0

    def test_multichannel_averaged(self):
        rng = np.random.default_rng(1)
        image = rng.uniform(size=(16, 16, 3))
        a = hog_descriptor(image, SMALL)
        b = hog_descriptor(image.mean(axis=-1), SMALL)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_gradient_along_x_hits_bin_zero(self):
        x = np.arange(16, dtype=np.float64)
        image = np.tile(np.sin(2 * np.pi * x / 16), (16, 1))
        assert dominant_bin(hog_descriptor(image, SMALL), SMALL) == 0

    def test_gradient_along_y_hits_middle_bin(self):
        y = np.arange(16, dtype=np.float64)
        image = np.tile(np.sin(2 * np.pi * y / 16)[:, None], (1, 16))
        assert dominant_bin(hog_descriptor(image, SMALL), SMALL) == 4

    def test_diagonal_gradient_hits_oblique_bin(self):
        i = np.arange(16, dtype=np.float64)
        image = i[:, None] - i[None, :]  # gradient direction at 135 degrees
        assert dominant_bin(hog_descriptor(image, SMALL), SMALL) == 7

    def test_rotation_moves_mass_between_bins(self):
        i = np.arange(16, dtype=np.float64)
        along_x = np.tile(i, (16, 1))
        along_y = np.tile(i[:, None], (1, 16))
        assert dominant_bin(hog_descriptor(along_x, SMALL), SMALL) != dominant_bin(
            hog_descriptor(along_y, SMALL), SMALL
        )

    def test_brightness_offset_invariance(self):
        rng = np.random.default_rng(2)
        image = rng.uniform(size=(16, 16))
        a = hog_descriptor(image, SMALL)
        b = hog_descriptor(image + 5.0, SMALL)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_block_normalization_tames_contrast(self):
        rng = np.random.default_rng(3)
        image = rng.uniform(size=(16, 16))
        a = hog_descriptor(image, SMALL)
        b = hog_descriptor(image * 50.0, SMALL)
        # Far from the epsilon regime the descriptor is contrast-invariant.
        np.testing.assert_allclose(a, b, rtol=1e-3, atol=1e-6)

    def test_non_2d_rejected(self):
        with pytest.raises(HogError, match="2-D"):
            hog(torch.zeros(4, 4, 4, 4), SMALL)


class TestAnalyticGradient:
    def _max_rel_err(self, image: np.ndarray, n_probe: int, seed: int) -> float:
        """Compare autograd d(loss)/d(pixel) against central differences."""
        spec = SMALL
        rng = np.random.default_rng(seed)
        weights = rng.normal(size=spec.descriptor_length(image.shape))
        w_t = torch.from_numpy(weights)

        img_t = torch.from_numpy(image.copy()).requires_grad_(True)
        loss = (hog(img_t, spec) * w_t).sum()
        loss.backward()
        analytic = img_t.grad.numpy()

        h = 1e-5
        worst = 0.0
        flat = rng.choice(image.size, size=n_probe, replace=False)
        for f in flat:
            i, j = np.unravel_index(f, image.shape)
            plus, minus = image.copy(), image.copy()
            plus[i, j] += h
            minus[i, j] -= h
            fd = (
                float(np.dot(hog_descriptor(plus, spec), weights))
                - float(np.dot(hog_descriptor(minus, spec), weights))
            ) / (2 * h)
            scale = max(abs(fd), abs(analytic[i, j]), 1e-6)
            worst = max(worst, abs(analytic[i, j] - fd) / scale)
        return worst

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for seed in range(3):
            image = rng.uniform(size=(16, 16))
            assert self._max_rel_err(image, n_probe=8, seed=seed) < 1e-3

    def test_gradient_flows_everywhere(self):
        # Smoothness claim: even a flat region (zero gradients, epsilon
        # regime) produces finite analytic derivatives.
        image = torch.zeros(16, 16, dtype=torch.float64, requires_grad=True)
        loss = hog(image, SMALL).sum()
        loss.backward()
        assert torch.all(torch.isfinite(image.grad))
