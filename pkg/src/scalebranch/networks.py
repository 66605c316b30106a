"""Growable generator, discriminator, and encoder.

The generator concatenates all latent sub-vectors into one fully-connected
layer, reshapes to a base spatial map, then applies one up block per grown
stage (stride-2 5x5 transposed conv + instance norm + leaky relu) and a
per-stage output head (transposed conv to RGB + sigmoid).  The
discriminator mirrors this with stride-2 convolutions, a per-stage input
head, and a final linear producing one logit; the encoder shares the
discriminator trunk but regresses the full latent through a tanh.

Growing appends one block and one head; every parameter that existed
before a grow keeps its name, shape, and values, so the function computed
through the old trunk is preserved exactly.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
import torch
from torch import nn

from .config import ConfigError, NetConfig
from .latent import BranchedLatent, check_matches


class NetworkError(RuntimeError):
    """Raised for shape mismatches and invalid grow operations."""


def _deconv_geometry(n_in: int, n_out: int) -> tuple[int, int]:
    """(padding, output_padding) so a stride-2 5x5 transposed conv maps a
    length-``n_in`` axis to exactly ``n_out`` (which must be 2*n_in +- 1 or
    2*n_in)."""
    # n_out = (n_in - 1)*2 - 2p + 5 + op  ->  2p = 2*n_in + 3 + op - n_out
    for op in (0, 1):
        num = 2 * n_in + 3 + op - n_out
        if num >= 0 and num % 2 == 0:
            return num // 2, op
    raise NetworkError(f"no stride-2 5x5 transposed conv maps {n_in} -> {n_out}")


def _conv_geometry(n_in: int, n_out: int) -> int:
    """Padding so a stride-2 5x5 conv maps a length-``n_in`` axis to
    ``n_out``; exact inverse of the transposed-conv geometry."""
    # n_out = floor((n_in + 2p - 5)/2) + 1  ->  n_in + 2p - 5 in {2*n_out-2, 2*n_out-1}
    for num in (2 * n_out + 3 - n_in, 2 * n_out + 4 - n_in):
        if num >= 0 and num % 2 == 0:
            return num // 2
    raise NetworkError(f"no stride-2 5x5 conv maps {n_in} -> {n_out}")


def _pair_deconv(size_in: tuple[int, int], size_out: tuple[int, int]):
    ph, oph = _deconv_geometry(size_in[0], size_out[0])
    pw, opw = _deconv_geometry(size_in[1], size_out[1])
    return (ph, pw), (oph, opw)


def _pair_conv(size_in: tuple[int, int], size_out: tuple[int, int]):
    return (_conv_geometry(size_in[0], size_out[0]), _conv_geometry(size_in[1], size_out[1]))


def _init_params(module: nn.Module, std: float, gen: torch.Generator) -> None:
    """Weights ~ N(0, std), biases 0, norm scales 1 / offsets 0.

    Visits submodules in registration order so the draw sequence is a pure
    function of (module structure, generator state).
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.InstanceNorm2d):
            if m.weight is not None:
                with torch.no_grad():
                    m.weight.fill_(1.0)
                    m.bias.zero_()


class _UpBlock(nn.Module):
    """Transposed conv (5x5, stride 2) + instance norm + leaky relu."""

    def __init__(self, c_in: int, c_out: int, size_in, size_out, cfg: NetConfig):
        super().__init__()
        pad, opad = _pair_deconv(size_in, size_out)
        self.deconv = nn.ConvTranspose2d(c_in, c_out, 5, stride=2, padding=pad, output_padding=opad)
        self.norm = nn.InstanceNorm2d(c_out, eps=cfg.norm_epsilon, affine=True)
        self.act = nn.LeakyReLU(cfg.lrelu_slope)

    def forward(self, x):
        return self.act(self.norm(self.deconv(x)))


class _DownBlock(nn.Module):
    """Conv (5x5, stride 2) + instance norm + leaky relu."""

    def __init__(self, c_in: int, c_out: int, size_in, size_out, cfg: NetConfig):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 5, stride=2, padding=_pair_conv(size_in, size_out))
        self.norm = nn.InstanceNorm2d(c_out, eps=cfg.norm_epsilon, affine=True)
        self.act = nn.LeakyReLU(cfg.lrelu_slope)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class Generator(nn.Module):
    """Stage-``stage`` generator; ``grow`` advances it one stage.

    Heads for earlier stages stay registered after a grow, so the parameter
    set only ever gains entries and checkpoints from any stage load into a
    freshly built net of the same stage.
    """

    def __init__(self, config: NetConfig, stage: int = 1, seed: int = 0):
        super().__init__()
        if not 1 <= stage <= config.stages:
            raise NetworkError(f"stage {stage} out of range 1..{config.stages}")
        self.config = config
        self.stage = stage
        ladder = config.ladder()
        c = config.channel_schedule
        bh, bw = config.base_resolution
        self.latent_in = nn.Linear(config.total_dims, c[0] * bh * bw)
        self.base_norm = nn.InstanceNorm2d(c[0], eps=config.norm_epsilon, affine=True)
        self.base_act = nn.LeakyReLU(config.lrelu_slope)
        self.blocks = nn.ModuleList(
            _UpBlock(c[j], c[j + 1], ladder[j], ladder[j + 1], config)
            for j in range(stage - 1)
        )
        self.heads = nn.ModuleList(self._make_head(s) for s in range(1, stage + 1))
        gen = torch.Generator().manual_seed(int(seed))
        _init_params(self, config.weight_init_stddev, gen)

    def _make_head(self, s: int) -> nn.Module:
        ladder = self.config.ladder()
        c_in = self.config.channel_schedule[s - 1]
        pad, opad = _pair_deconv(ladder[s - 1], ladder[s])
        return nn.ConvTranspose2d(
            c_in, self.config.output_channels, 5, stride=2, padding=pad, output_padding=opad
        )

    def grow(self, seed: int = 0) -> None:
        """Add the next up block and output head; existing weights untouched."""
        if self.stage >= self.config.stages:
            raise NetworkError(f"already at the final stage {self.config.stages}")
        s = self.stage
        ladder = self.config.ladder()
        c = self.config.channel_schedule
        new_block = _UpBlock(c[s - 1], c[s], ladder[s - 1], ladder[s], self.config)
        new_head = self._make_head(s + 1)
        gen = torch.Generator().manual_seed(int(seed))
        _init_params(new_block, self.config.weight_init_stddev, gen)
        _init_params(new_head, self.config.weight_init_stddev, gen)
        self.blocks.append(new_block)
        self.heads.append(new_head)
        self.stage = s + 1

    def features(self, z: torch.Tensor, n_blocks: Optional[int] = None) -> torch.Tensor:
        """Activation after ``n_blocks`` up blocks (default: all of them)."""
        if z.ndim != 2 or z.shape[1] != self.config.total_dims:
            raise NetworkError(
                f"latent batch must be (n, {self.config.total_dims}), got {tuple(z.shape)}"
            )
        n_blocks = self.stage - 1 if n_blocks is None else n_blocks
        bh, bw = self.config.base_resolution
        x = self.latent_in(z).view(z.shape[0], self.config.channel_schedule[0], bh, bw)
        x = self.base_act(self.base_norm(x))
        for block in self.blocks[:n_blocks]:
            x = block(x)
        return x

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.features(z)
        return torch.sigmoid(self.heads[self.stage - 1](x))

    @property
    def resolution(self) -> tuple[int, int]:
        return self.config.resolution(self.stage)


class _Trunk(nn.Module):
    """Shared down path: per-stage input head, down blocks, flatten."""

    def __init__(self, config: NetConfig, stage: int):
        super().__init__()
        if not 1 <= stage <= config.stages:
            raise NetworkError(f"stage {stage} out of range 1..{config.stages}")
        self.config = config
        self.stage = stage
        c = config.channel_schedule
        ladder = config.ladder()
        self.heads = nn.ModuleList(self._make_head(s) for s in range(1, stage + 1))
        # block j restores the map from ladder[j+1] to ladder[j]; at stage s
        # the forward pass runs blocks s-2 .. 0.
        self.blocks = nn.ModuleList(
            _DownBlock(c[j + 1], c[j], ladder[j + 1], ladder[j], config)
            for j in range(stage - 1)
        )
        self.act = nn.LeakyReLU(config.lrelu_slope)

    def _make_head(self, s: int) -> nn.Module:
        ladder = self.config.ladder()
        c_out = self.config.channel_schedule[s - 1]
        return nn.Conv2d(
            self.config.output_channels,
            c_out,
            5,
            stride=2,
            padding=_pair_conv(ladder[s], ladder[s - 1]),
        )

    def grow_modules(self) -> tuple[nn.Module, nn.Module]:
        s = self.stage
        ladder = self.config.ladder()
        c = self.config.channel_schedule
        new_head = self._make_head(s + 1)
        new_block = _DownBlock(c[s], c[s - 1], ladder[s], ladder[s - 1], self.config)
        return new_head, new_block

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        expected = self.config.resolution(self.stage)
        if images.ndim != 4 or tuple(images.shape[2:]) != expected:
            raise NetworkError(
                f"expected (n, {self.config.output_channels}, {expected[0]}, {expected[1]}) "
                f"images at stage {self.stage}, got {tuple(images.shape)}"
            )
        x = self.act(self.heads[self.stage - 1](images))
        for j in range(self.stage - 2, -1, -1):
            x = self.blocks[j](x)
        return x.flatten(1)

    @property
    def flat_dims(self) -> int:
        bh, bw = self.config.base_resolution
        return self.config.channel_schedule[0] * bh * bw


class Discriminator(nn.Module):
    """Stage-matched critic returning one logit per image."""

    def __init__(self, config: NetConfig, stage: int = 1, seed: int = 0):
        super().__init__()
        self.config = config
        self.trunk = _Trunk(config, stage)
        self.out = nn.Linear(self.trunk.flat_dims, 1)
        gen = torch.Generator().manual_seed(int(seed))
        _init_params(self, config.weight_init_stddev, gen)

    @property
    def stage(self) -> int:
        return self.trunk.stage

    def grow(self, seed: int = 0) -> None:
        new_head, new_block = self.trunk.grow_modules()
        gen = torch.Generator().manual_seed(int(seed))
        _init_params(new_head, self.config.weight_init_stddev, gen)
        _init_params(new_block, self.config.weight_init_stddev, gen)
        self.trunk.heads.append(new_head)
        self.trunk.blocks.append(new_block)
        self.trunk.stage += 1

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.out(self.trunk(images)).squeeze(1)


class Encoder(nn.Module):
    """Maps images back to the latent box via the discriminator trunk and a
    tanh-bounded regression head."""

    def __init__(self, config: NetConfig, stage: int, seed: int = 0):
        super().__init__()
        self.config = config
        self.trunk = _Trunk(config, stage)
        self.out = nn.Linear(self.trunk.flat_dims, config.total_dims)
        gen = torch.Generator().manual_seed(int(seed))
        _init_params(self, config.weight_init_stddev, gen)

    @property
    def stage(self) -> int:
        return self.trunk.stage

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.out(self.trunk(images)))


# --------------------------------------------------------------------------
# numpy-facing wrappers (images are channels-last float in [0, 1])


def _to_torch_images(images: np.ndarray) -> torch.Tensor:
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4:
        raise NetworkError(f"expected (n, H, W, C) images, got shape {images.shape}")
    return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))


def _to_numpy_images(batch: torch.Tensor) -> np.ndarray:
    return batch.detach().permute(0, 2, 3, 1).contiguous().numpy()


def generate_batch(g: Generator, flat_latents: np.ndarray) -> np.ndarray:
    """Flat (n, total_dims) latents -> (n, H, W, C) float32 images."""
    z = torch.from_numpy(np.ascontiguousarray(flat_latents, dtype=np.float32))
    with torch.no_grad():
        return _to_numpy_images(g(z))


def generate(g: Generator, latent: BranchedLatent) -> np.ndarray:
    """One latent -> one (H, W, C) image."""
    check_matches(latent, g.config)
    return generate_batch(g, latent.flat()[None])[0]


def discriminate(d: Discriminator, images: np.ndarray) -> np.ndarray:
    """Images -> raw logits, shape (n,)."""
    with torch.no_grad():
        return d(_to_torch_images(images)).numpy()


def encode_batch(e: Encoder, images: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return e(_to_torch_images(images)).numpy()


def encode(e: Encoder, image: np.ndarray) -> BranchedLatent:
    flat = encode_batch(e, image[None] if image.ndim == 3 else image)[0]
    return BranchedLatent.from_flat(flat, e.config.subvector_dims)


def state_numpy(module: nn.Module) -> dict[str, np.ndarray]:
    """All parameters and buffers as float32 numpy arrays keyed by name."""
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_state_numpy(module: nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in tensors.items()}
    module.load_state_dict(state, strict=True)
