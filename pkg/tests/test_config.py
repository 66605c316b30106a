import pytest

from scalebranch.config import (
    ConfigError,
    NetConfig,
    OptimSpec,
    get_profile,
    PROFILES,
)


class TestProfiles:
    def test_profile_256(self):
        p = get_profile("full256")
        assert p.net.subvector_dims == (30,) * 5
        assert p.net.total_dims == 150
        assert p.net.base_resolution == (8, 8)
        assert p.net.channel_schedule == (512, 256, 128, 64, 64)
        assert p.net.ladder()[-1] == (256, 256)
        assert p.optim.batch_size == 20
        assert p.epochs_per_stage == 20

    def test_profile_512(self):
        p = get_profile("full512")
        assert p.net.branches == 6
        assert p.net.ladder()[-1] == (512, 512)
        assert p.optim.batch_size == 12
        assert p.epochs_per_stage == 12

    def test_profile_400x300(self):
        p = get_profile("full400x300")
        ladder = p.net.ladder()
        assert ladder[0] == (5, 7)
        assert ladder[1] == (10, 13)
        assert ladder[2] == (19, 25)
        assert ladder[-1] == (300, 400)

    def test_desk_profile_small(self):
        p = get_profile("desk")
        assert p.net.branches == 3
        assert p.net.ladder() == ((4, 4), (8, 8), (16, 16), (32, 32))

    def test_optimizer_defaults(self):
        for name in PROFILES:
            optim = get_profile(name).optim
            assert optim.learning_rate == pytest.approx(2e-4)
            assert optim.beta1 == pytest.approx(0.5)
            assert optim.beta2 == pytest.approx(0.999)

    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="unknown profile"):
            get_profile("gigantic")


class TestNetConfig:
    def test_doubling_ladder(self):
        cfg = NetConfig((4,), (3, 5), (8,), stages=1)
        assert cfg.ladder() == ((3, 5), (6, 10))

    def test_subvector_slices_partition(self):
        cfg = NetConfig((3, 5, 2), (4, 4), (8, 8, 8), stages=3)
        slices = [cfg.subvector_slice(t) for t in range(3)]
        assert slices[0] == slice(0, 3)
        assert slices[1] == slice(3, 8)
        assert slices[2] == slice(8, 10)
        assert cfg.total_dims == 10

    def test_one_subvector_per_stage_enforced(self):
        with pytest.raises(ConfigError, match="one sub-vector per stage"):
            NetConfig((4, 4), (4, 4), (8,), stages=1)

    def test_channel_schedule_length_enforced(self):
        with pytest.raises(ConfigError, match="channel_schedule"):
            NetConfig((4,), (4, 4), (8, 8), stages=1)

    def test_ladder_must_double(self):
        with pytest.raises(ConfigError, match="not a doubling"):
            NetConfig((4, 4), (4, 4), (8, 8), stages=2, size_ladder=((4, 4), (8, 8), (32, 32)))

    def test_ladder_must_start_at_base(self):
        with pytest.raises(ConfigError, match="start at the base"):
            NetConfig((4,), (4, 4), (8,), stages=1, size_ladder=((5, 5), (10, 10)))

    def test_resolution_range_checked(self):
        cfg = NetConfig((4,), (4, 4), (8,), stages=1)
        with pytest.raises(ConfigError):
            cfg.resolution(0)
        with pytest.raises(ConfigError):
            cfg.resolution(2)

    def test_json_round_trip(self):
        cfg = NetConfig((3, 5), (5, 7), (16, 8), stages=2,
                        size_ladder=((5, 7), (10, 13), (19, 25)))
        assert NetConfig.from_json_obj(cfg.to_json_obj()) == cfg

    def test_optim_validation(self):
        with pytest.raises(ConfigError):
            OptimSpec(learning_rate=0.0)
        with pytest.raises(ConfigError):
            OptimSpec(beta1=1.0)
        with pytest.raises(ConfigError):
            OptimSpec(batch_size=0)
