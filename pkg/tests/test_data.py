import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from scalebranch.data import (
    DataError,
    DatasetSpec,
    Pyramid,
    SyntheticRecipe,
    area_downsample,
    epoch_order,
    generate_synthetic,
    load_dataset,
    make_pyramid,
    save_images,
    synthesize_sample,
)
from scalebranch.spectral import band_energies


class TestAreaDownsample:
    def test_identity_size_returns_copy(self):
        image = np.random.default_rng(0).uniform(size=(8, 8, 3)).astype(np.float32)
        out = area_downsample(image, (8, 8))
        np.testing.assert_array_equal(out, image)
        assert out is not image

    def test_integer_ratio_is_block_mean(self):
        image = np.arange(16, dtype=np.float32).reshape(4, 4)
        out = area_downsample(image, (2, 2))
        expected = np.array([[2.5, 4.5], [10.5, 12.5]], np.float32)
        np.testing.assert_allclose(out, expected)

    def test_fractional_ratio_weights(self):
        # 3 -> 2: destination boxes cover [0, 1.5) and [1.5, 3), so the first
        # output is (p0 + 0.5 * p1) / 1.5.
        image = np.array([[0.0, 3.0, 6.0]], np.float32)
        out = area_downsample(image, (1, 2))
        np.testing.assert_allclose(out, [[1.0, 5.0]], atol=1e-6)

    @given(
        st.integers(2, 40),
        st.integers(2, 40),
        st.integers(1, 40),
        st.integers(1, 40),
        st.integers(0, 2**16),
    )
    @settings(max_examples=40, deadline=None)
    def test_mean_preserved_exactly(self, h, w, th, tw, seed):
        th, tw = min(th, h), min(tw, w)
        image = np.random.default_rng(seed).uniform(size=(h, w)).astype(np.float32)
        out = area_downsample(image, (th, tw))
        assert out.shape == (th, tw)
        assert abs(float(out.mean()) - float(image.astype(np.float64).mean())) < 1e-6

    def test_upsampling_rejected(self):
        with pytest.raises(DataError, match="reduces"):
            area_downsample(np.zeros((4, 4)), (8, 4))

    def test_nineteen_to_ten(self):
        # Irregular fractional ladder step used by non-square profiles.
        image = np.random.default_rng(1).uniform(size=(19, 25, 3))
        out = area_downsample(image, (10, 13))
        assert out.shape == (10, 13, 3)
        assert abs(float(out.mean()) - float(image.mean())) < 1e-7

    def test_make_pyramid_levels(self):
        image = np.random.default_rng(2).uniform(size=(16, 16, 3))
        levels = make_pyramid(image, [(4, 4), (8, 8), (16, 16)])
        assert [lv.shape[:2] for lv in levels] == [(4, 4), (8, 8), (16, 16)]


class TestSyntheticRecipe:
    def test_defaults_valid(self):
        recipe = SyntheticRecipe()
        assert recipe.size == (32, 32)

    def test_clipping_guard(self):
        with pytest.raises(DataError, match="clip"):
            SyntheticRecipe(palette_low=0.1, mid_weight=0.2, fine_weight=0.1)

    def test_palette_order(self):
        with pytest.raises(DataError, match="palette"):
            SyntheticRecipe(palette_low=0.7, palette_high=0.3)

    def test_json_round_trip(self):
        recipe = SyntheticRecipe(n_samples=7, size=(16, 24), mid_weight=0.11)
        again = SyntheticRecipe.from_json(recipe.to_json())
        assert again == recipe


class TestSyntheticLayers:
    """The corpus layers must live in their nominal frequency bands — that
    ground truth is what scale-attribution experiments lean on."""

    RECIPE = SyntheticRecipe(n_samples=4, size=(32, 32))

    def _band_fractions(self, layer):
        energies = band_energies(layer)
        return energies / energies.sum()

    def test_coarse_layer_is_first_band(self):
        for seed in range(5):
            _, layers = synthesize_sample(self.RECIPE, seed)
            frac = self._band_fractions(layers["coarse"])
            assert frac[0] > 1.0 - 1e-9

    def test_mid_layer_confined_to_declared_band(self):
        # The mid band (1/16, 1/4] spans report bands 1 and 2 exactly.
        for seed in range(5):
            _, layers = synthesize_sample(self.RECIPE, seed)
            frac = self._band_fractions(layers["mid"])
            assert frac[1] + frac[2] > 1.0 - 1e-9

    def test_fine_layer_is_last_band(self):
        for seed in range(5):
            _, layers = synthesize_sample(self.RECIPE, seed)
            frac = self._band_fractions(layers["fine"])
            assert frac[4] > 1.0 - 1e-9

    def test_composite_range_and_dtype(self):
        images = generate_synthetic(self.RECIPE, seed=3)
        assert images.shape == (4, 32, 32, 3)
        assert images.dtype == np.float32
        assert images.min() >= 0.0 and images.max() <= 1.0

    def test_deterministic_in_seed(self):
        a = generate_synthetic(self.RECIPE, seed=5)
        b = generate_synthetic(self.RECIPE, seed=5)
        c = generate_synthetic(self.RECIPE, seed=6)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_samples_differ_within_corpus(self):
        images = generate_synthetic(self.RECIPE, seed=0)
        assert not np.array_equal(images[0], images[1])


class TestDatasetSpec:
    def test_exactly_one_source(self):
        with pytest.raises(DataError, match="exactly one"):
            DatasetSpec()
        with pytest.raises(DataError, match="exactly one"):
            DatasetSpec(directory="x", recipe=SyntheticRecipe())

    def test_json_round_trip(self):
        spec = DatasetSpec(recipe=SyntheticRecipe(n_samples=3), synthetic_seed=9)
        again = DatasetSpec.from_json_obj(spec.to_json_obj())
        assert again == spec

    def test_load_synthetic(self):
        spec = DatasetSpec(recipe=SyntheticRecipe(n_samples=2, size=(16, 16)))
        images = load_dataset(spec)
        assert images.shape == (2, 16, 16, 3)


class TestDirectoryLoading:
    def test_round_trip_through_png(self, tmp_path):
        images = generate_synthetic(SyntheticRecipe(n_samples=3, size=(16, 16)), seed=1)
        save_images(images, str(tmp_path))
        loaded = load_dataset(DatasetSpec(directory=str(tmp_path)))
        assert loaded.shape == images.shape
        # 8-bit quantization bounds the round-trip error.
        assert np.abs(loaded - images).max() <= 0.5 / 255.0 + 1e-6

    def test_sorted_order(self, tmp_path):
        for name, value in [("b.png", 200), ("a.png", 10)]:
            Image.fromarray(np.full((4, 4, 3), value, np.uint8)).save(tmp_path / name)
        loaded = load_dataset(DatasetSpec(directory=str(tmp_path)))
        assert loaded[0].mean() < loaded[1].mean()

    def test_missing_directory(self):
        with pytest.raises(DataError, match="does not exist"):
            load_dataset(DatasetSpec(directory="/nonexistent/path"))

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataError, match="no PNG/JPEG"):
            load_dataset(DatasetSpec(directory=str(tmp_path)))

    def test_mixed_resolutions(self, tmp_path):
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "a.png")
        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "b.png")
        with pytest.raises(DataError, match="mixed resolutions"):
            load_dataset(DatasetSpec(directory=str(tmp_path)))

    def test_corrupt_file(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not a png")
        with pytest.raises(DataError, match="cannot read"):
            load_dataset(DatasetSpec(directory=str(tmp_path)))


class TestPyramid:
    def test_levels_match_direct_downsampling(self):
        images = generate_synthetic(SyntheticRecipe(n_samples=2, size=(16, 16)), seed=2)
        pyr = Pyramid(images, [(4, 4), (8, 8), (16, 16)])
        level = pyr.at((8, 8))
        np.testing.assert_array_equal(level[1], area_downsample(images[1], (8, 8)))

    def test_unknown_resolution(self):
        images = np.zeros((1, 8, 8, 3), np.float32)
        pyr = Pyramid(images, [(8, 8)])
        with pytest.raises(DataError, match="not in pyramid"):
            pyr.at((4, 4))


class TestEpochOrder:
    def test_is_permutation(self):
        order = epoch_order(10, epoch=3, seed=0)
        assert sorted(order) == list(range(10))

    def test_pure_function(self):
        np.testing.assert_array_equal(epoch_order(20, 1, 5), epoch_order(20, 1, 5))

    def test_epochs_differ(self):
        assert not np.array_equal(epoch_order(20, 0, 5), epoch_order(20, 1, 5))

    def test_seeds_differ(self):
        assert not np.array_equal(epoch_order(20, 0, 5), epoch_order(20, 0, 6))
