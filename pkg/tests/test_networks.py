import numpy as np
import pytest
import torch

from scalebranch.config import NetConfig, get_profile
from scalebranch.latent import BranchedLatent, SamplePolicy, sample_latent
from scalebranch.networks import (
    Discriminator,
    Encoder,
    Generator,
    NetworkError,
    _conv_geometry,
    _deconv_geometry,
    discriminate,
    encode,
    generate,
    generate_batch,
    load_state_numpy,
    state_numpy,
)


class TestGeometry:
    @pytest.mark.parametrize("n_in,n_out", [(4, 8), (4, 7), (4, 9), (5, 10), (19, 37), (150, 300)])
    def test_deconv_solves_doubling_family(self, n_in, n_out):
        pad, opad = _deconv_geometry(n_in, n_out)
        assert (n_in - 1) * 2 - 2 * pad + 5 + opad == n_out

    @pytest.mark.parametrize("n_in,n_out", [(8, 4), (7, 4), (9, 4), (37, 19), (300, 150)])
    def test_conv_inverts_it(self, n_in, n_out):
        pad = _conv_geometry(n_in, n_out)
        assert (n_in + 2 * pad - 5) // 2 + 1 == n_out

    def test_unreachable_size_raises(self):
        with pytest.raises(NetworkError, match="no stride-2"):
            _deconv_geometry(4, 20)


def _flat(config, seed=0, n=2):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, size=(n, config.total_dims)).astype(np.float32)


class TestGeneratorShapes:
    def test_full_size_layer_dimensions(self):
        # Reference full-scale model: 5 thirty-dim sub-vectors into a
        # 512-channel 8x8 base map, heads at every power-of-two resolution.
        cfg = get_profile("full256").net
        g = Generator(cfg, stage=1, seed=0)
        assert g.latent_in.in_features == 150
        assert g.latent_in.out_features == 512 * 8 * 8
        assert g(torch.zeros(1, 150)).shape == (1, 3, 16, 16)
        g.grow()
        assert g.blocks[0].deconv.weight.shape == (512, 256, 5, 5)
        assert g(torch.zeros(1, 150)).shape == (1, 3, 32, 32)

    def test_stage_resolutions(self, desk_config):
        for stage in range(1, desk_config.stages + 1):
            g = Generator(desk_config, stage=stage, seed=1)
            assert g.resolution == desk_config.resolution(stage)
            out = g(torch.zeros(2, desk_config.total_dims))
            assert tuple(out.shape) == (2, 3, *g.resolution)

    def test_irregular_ladder_forward_backward(self):
        cfg = get_profile("full400x300").net
        g = Generator(cfg, stage=3, seed=0)
        out = g(torch.zeros(1, cfg.total_dims, requires_grad=True))
        assert tuple(out.shape[2:]) == (37, 50)
        out.sum().backward()

    def test_zero_latent_maps_to_mid_gray(self, tiny_config):
        # Fresh init has zero biases, so a zero latent propagates zeros into
        # the sigmoid: the output is exactly 0.5 everywhere.
        g = Generator(tiny_config, stage=2, seed=3)
        img = generate_batch(g, np.zeros((1, tiny_config.total_dims), np.float32))
        assert np.all(img == 0.5)

    def test_output_in_unit_interval(self, tiny_config):
        g = Generator(tiny_config, stage=2, seed=4)
        img = generate_batch(g, _flat(tiny_config, n=8))
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert img.dtype == np.float32

    def test_bad_latent_width(self, tiny_config):
        g = Generator(tiny_config, stage=1)
        with pytest.raises(NetworkError, match="latent batch"):
            g(torch.zeros(1, 5))

    def test_stage_out_of_range(self, tiny_config):
        with pytest.raises(NetworkError, match="out of range"):
            Generator(tiny_config, stage=3)


class TestGrow:
    def test_existing_parameters_untouched(self, desk_config):
        g = Generator(desk_config, stage=1, seed=7)
        before = state_numpy(g)
        g.grow(seed=8)
        after = state_numpy(g)
        for name, value in before.items():
            np.testing.assert_array_equal(after[name], value, err_msg=name)
        assert set(before) < set(after)

    def test_trunk_function_preserved(self, desk_config):
        g = Generator(desk_config, stage=1, seed=7)
        z = torch.from_numpy(_flat(desk_config, seed=1, n=3))
        with torch.no_grad():
            before = g.features(z, n_blocks=0)
        g.grow(seed=8)
        with torch.no_grad():
            after = g.features(z, n_blocks=0)
        assert torch.equal(before, after)

    def test_old_head_still_usable(self, desk_config):
        g = Generator(desk_config, stage=1, seed=7)
        z = torch.from_numpy(_flat(desk_config, seed=2, n=2))
        with torch.no_grad():
            small_before = torch.sigmoid(g.heads[0](g.features(z, n_blocks=0)))
        g.grow(seed=9)
        with torch.no_grad():
            small_after = torch.sigmoid(g.heads[0](g.features(z, n_blocks=0)))
        assert torch.equal(small_before, small_after)

    def test_grow_past_final_stage(self, tiny_config):
        g = Generator(tiny_config, stage=2)
        with pytest.raises(NetworkError, match="final stage"):
            g.grow()

    def test_grown_net_matches_fresh_state_shape(self, desk_config):
        grown = Generator(desk_config, stage=1, seed=0)
        grown.grow()
        grown.grow()
        fresh = Generator(desk_config, stage=3, seed=0)
        a, b = state_numpy(grown), state_numpy(fresh)
        assert set(a) == set(b)
        for name in a:
            assert a[name].shape == b[name].shape, name

    def test_discriminator_grow_preserves_params(self, desk_config):
        d = Discriminator(desk_config, stage=1, seed=2)
        before = state_numpy(d)
        d.grow(seed=3)
        after = state_numpy(d)
        for name, value in before.items():
            np.testing.assert_array_equal(after[name], value, err_msg=name)
        assert d.stage == 2


class TestSeededInit:
    def test_same_seed_same_weights(self, tiny_config):
        a = state_numpy(Generator(tiny_config, stage=2, seed=11))
        b = state_numpy(Generator(tiny_config, stage=2, seed=11))
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed_different_weights(self, tiny_config):
        a = Generator(tiny_config, stage=2, seed=11)
        b = Generator(tiny_config, stage=2, seed=12)
        assert not np.array_equal(
            a.latent_in.weight.detach().numpy(), b.latent_in.weight.detach().numpy()
        )

    def test_biases_start_at_zero(self, tiny_config):
        g = Generator(tiny_config, stage=2, seed=5)
        assert np.all(g.latent_in.bias.detach().numpy() == 0.0)
        assert np.all(g.heads[1].bias.detach().numpy() == 0.0)

    def test_weight_scale(self, desk_config):
        g = Generator(desk_config, stage=1, seed=6)
        w = g.latent_in.weight.detach().numpy()
        assert abs(w.std() - desk_config.weight_init_stddev) < 0.002


class TestDiscriminatorEncoder:
    def test_logit_shape(self, tiny_config):
        d = Discriminator(tiny_config, stage=2, seed=0)
        images = np.random.default_rng(0).uniform(size=(4, 16, 16, 3)).astype(np.float32)
        logits = discriminate(d, images)
        assert logits.shape == (4,)

    def test_wrong_resolution_rejected(self, tiny_config):
        d = Discriminator(tiny_config, stage=2, seed=0)
        with pytest.raises(NetworkError, match="expected"):
            discriminate(d, np.zeros((1, 8, 8, 3), np.float32))

    def test_encoder_output_is_valid_latent(self, tiny_config):
        e = Encoder(tiny_config, stage=2, seed=1)
        image = np.random.default_rng(1).uniform(size=(16, 16, 3)).astype(np.float32)
        lat = encode(e, image)
        assert isinstance(lat, BranchedLatent)
        assert lat.dims == tiny_config.subvector_dims
        assert np.abs(lat.flat()).max() <= 1.0

    def test_full_size_discriminator_head_shape(self):
        cfg = get_profile("full256").net
        d = Discriminator(cfg, stage=2, seed=0)
        assert d.trunk.heads[1].weight.shape == (256, 3, 5, 5)
        assert d.out.in_features == 512 * 8 * 8


class TestNumpyBridge:
    def test_generate_single_matches_batch(self, tiny_config):
        g = Generator(tiny_config, stage=2, seed=9)
        policy = SamplePolicy.all_uniform(len(tiny_config.subvector_dims))
        lat = sample_latent(tiny_config, policy, seed=4)
        single = generate(g, lat)
        batch = generate_batch(g, lat.flat()[None])
        np.testing.assert_array_equal(single, batch[0])

    def test_latent_config_mismatch(self, tiny_config):
        g = Generator(tiny_config, stage=2, seed=9)
        wrong = BranchedLatent((np.zeros(3, np.float32),))
        with pytest.raises(Exception, match="match"):
            generate(g, wrong)

    def test_state_round_trip_bitwise(self, tiny_config):
        a = Generator(tiny_config, stage=2, seed=21)
        b = Generator(tiny_config, stage=2, seed=22)
        load_state_numpy(b, state_numpy(a))
        z = _flat(tiny_config, seed=5, n=2)
        np.testing.assert_array_equal(generate_batch(a, z), generate_batch(b, z))
