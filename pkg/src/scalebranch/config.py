"""Architecture and optimizer configuration, plus the built-in profiles."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


def _doubled(size: tuple[int, int]) -> tuple[int, int]:
    return (size[0] * 2, size[1] * 2)


@dataclass(frozen=True)
class NetConfig:
    """Static description of the growable generator/discriminator family.

    One latent sub-vector and one resolution stage exist per branch; stage s
    renders at ``size_ladder[s]``.  ``channel_schedule[0]`` is the channel
    count of the base spatial map, ``channel_schedule[i]`` the output of the
    i-th up block.
    """

    subvector_dims: tuple[int, ...]
    base_resolution: tuple[int, int]
    channel_schedule: tuple[int, ...]
    stages: int
    output_channels: int = 3
    norm_epsilon: float = 1e-5
    weight_init_stddev: float = 0.02
    lrelu_slope: float = 0.2
    # Explicit per-stage output sizes; None means exact doubling from the base.
    size_ladder: Optional[tuple[tuple[int, int], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "subvector_dims", tuple(int(d) for d in self.subvector_dims))
        object.__setattr__(self, "channel_schedule", tuple(int(c) for c in self.channel_schedule))
        object.__setattr__(self, "base_resolution", tuple(int(v) for v in self.base_resolution))
        if self.size_ladder is not None:
            object.__setattr__(
                self, "size_ladder", tuple((int(h), int(w)) for h, w in self.size_ladder)
            )
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1, got {self.stages}")
        if len(self.subvector_dims) != self.stages:
            raise ConfigError(
                f"one sub-vector per stage: got {len(self.subvector_dims)} dims "
                f"for {self.stages} stages"
            )
        if any(d < 1 for d in self.subvector_dims):
            raise ConfigError("sub-vector dims must be positive")
        if len(self.channel_schedule) != self.stages:
            raise ConfigError(
                f"channel_schedule needs one entry per stage, got {len(self.channel_schedule)}"
            )
        if any(c < 1 for c in self.channel_schedule):
            raise ConfigError("channels must be positive")
        if min(self.base_resolution) < 2:
            raise ConfigError("base resolution must be at least 2x2")
        if self.norm_epsilon <= 0:
            raise ConfigError("norm_epsilon must be positive")
        if self.weight_init_stddev <= 0:
            raise ConfigError("weight_init_stddev must be positive")
        ladder = self.ladder()
        if len(ladder) != self.stages + 1:
            raise ConfigError(
                f"size ladder needs base plus one entry per stage "
                f"({self.stages + 1}), got {len(ladder)}"
            )
        if ladder[0] != self.base_resolution:
            raise ConfigError("size ladder must start at the base resolution")
        for prev, cur in zip(ladder, ladder[1:]):
            for a, b in zip(prev, cur):
                # Each step roughly doubles; the 400x300 table rounds by +-1.
                if not (2 * a - 1 <= b <= 2 * a + 1):
                    raise ConfigError(f"ladder step {prev} -> {cur} is not a doubling")

    @property
    def branches(self) -> int:
        return len(self.subvector_dims)

    @property
    def total_dims(self) -> int:
        return sum(self.subvector_dims)

    def ladder(self) -> tuple[tuple[int, int], ...]:
        """Spatial sizes from the base map (index 0) to each stage's output."""
        if self.size_ladder is not None:
            return self.size_ladder
        sizes = [self.base_resolution]
        for _ in range(self.stages):
            sizes.append(_doubled(sizes[-1]))
        return tuple(sizes)

    def resolution(self, stage: int) -> tuple[int, int]:
        """Output (height, width) at a 1-based stage."""
        if not 1 <= stage <= self.stages:
            raise ConfigError(f"stage {stage} out of range 1..{self.stages}")
        return self.ladder()[stage]

    def subvector_slice(self, t: int) -> slice:
        """Slice of the concatenated latent occupied by sub-vector t."""
        if not 0 <= t < self.branches:
            raise ConfigError(f"sub-vector index {t} out of range 0..{self.branches - 1}")
        start = sum(self.subvector_dims[:t])
        return slice(start, start + self.subvector_dims[t])

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["subvector_dims"] = list(self.subvector_dims)
        obj["base_resolution"] = list(self.base_resolution)
        obj["channel_schedule"] = list(self.channel_schedule)
        if self.size_ladder is not None:
            obj["size_ladder"] = [list(s) for s in self.size_ladder]
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "NetConfig":
        ladder = obj.get("size_ladder")
        return cls(
            subvector_dims=tuple(obj["subvector_dims"]),
            base_resolution=tuple(obj["base_resolution"]),
            channel_schedule=tuple(obj["channel_schedule"]),
            stages=int(obj["stages"]),
            output_channels=int(obj.get("output_channels", 3)),
            norm_epsilon=float(obj.get("norm_epsilon", 1e-5)),
            weight_init_stddev=float(obj.get("weight_init_stddev", 0.02)),
            lrelu_slope=float(obj.get("lrelu_slope", 0.2)),
            size_ladder=tuple(tuple(s) for s in ladder) if ladder is not None else None,
        )


@dataclass(frozen=True)
class OptimSpec:
    """Adam hyperparameters and batch size for adversarial training."""

    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_json_obj(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "OptimSpec":
        return cls(**obj)


@dataclass(frozen=True)
class Profile:
    """A named bundle of architecture plus training defaults."""

    name: str
    net: NetConfig
    optim: OptimSpec
    epochs_per_stage: int


# 400x300 generator ladder; heights/widths round irregularly, taken verbatim
# from the layer-size table of that profile.
_LADDER_400x300 = (
    (5, 7),
    (10, 13),
    (19, 25),
    (37, 50),
    (75, 100),
    (150, 200),
    (300, 400),
)


def full256_profile() -> Profile:
    return Profile(
        name="full256",
        net=NetConfig(
            subvector_dims=(30,) * 5,
            base_resolution=(8, 8),
            channel_schedule=(512, 256, 128, 64, 64),
            stages=5,
        ),
        optim=OptimSpec(batch_size=20),
        epochs_per_stage=20,
    )


def full512_profile() -> Profile:
    return Profile(
        name="full512",
        net=NetConfig(
            subvector_dims=(30,) * 6,
            base_resolution=(8, 8),
            channel_schedule=(512, 256, 128, 64, 64, 64),
            stages=6,
        ),
        optim=OptimSpec(batch_size=12),
        epochs_per_stage=12,
    )


def full400x300_profile() -> Profile:
    return Profile(
        name="full400x300",
        net=NetConfig(
            subvector_dims=(30,) * 6,
            base_resolution=(5, 7),
            channel_schedule=(512, 256, 128, 64, 64, 64),
            stages=6,
            size_ladder=_LADDER_400x300,
        ),
        optim=OptimSpec(batch_size=12),
        epochs_per_stage=12,
    )


def desk_profile() -> Profile:
    """Small profile sized for CPU experiments: 3 branches, 8 -> 32 px."""
    return Profile(
        name="desk",
        net=NetConfig(
            subvector_dims=(8, 8, 8),
            base_resolution=(4, 4),
            channel_schedule=(48, 24, 12),
            stages=3,
        ),
        optim=OptimSpec(batch_size=16),
        epochs_per_stage=6,
    )


PROFILES = {
    "full256": full256_profile,
    "full512": full512_profile,
    "full400x300": full400x300_profile,
    "desk": desk_profile,
}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
