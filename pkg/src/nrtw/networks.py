"""The two denoiser architectures.

* plain: a fixed-resolution stack of conv/instance-norm/relu layers.
* unet: stride-2 conv encoder, nearest-neighbor-upsample + conv decoder
  with channel-concatenated skip connections; channels double per level.

Both end in a bare 3x3 convolution to one channel: a per-instance
normalization on the output plane would pin its mean/variance regardless of
the input, which a denoiser cannot afford.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import (
    ParamSet,
    Tensor,
    concat_channels,
    conv2d,
    instance_norm,
    relu,
    upsample_nearest,
)


@dataclass(frozen=True)
class NetworkConfig:
    kind: str = "plain"  # "plain" | "unet"
    num_layers: int = 8  # plain: total conv layers including the output conv
    hidden_channels: int = 16
    depth: int = 5  # unet: number of downsampling levels
    base_channels: int = 32
    double_channels: bool = True
    max_channels: int = 512
    kernel_size: int = 3
    norm_eps: float = 1e-5

    def validate(self) -> None:
        if self.kind not in ("plain", "unet"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ValueError("kernel size must be odd and positive")
        if self.kind == "plain":
            if self.num_layers < 1:
                raise ValueError("plain network needs at least 1 layer")
            if self.hidden_channels < 1:
                raise ValueError("hidden channel count must be positive")
        else:
            if self.depth < 1:
                raise ValueError("unet depth must be >= 1")
            if self.base_channels < 1:
                raise ValueError("base channel count must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        cfg = cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg

    def level_channels(self, level: int) -> int:
        if not self.double_channels:
            return self.base_channels
        return min(self.base_channels * (2**level), self.max_channels)

    def check_input(self, height: int, width: int) -> None:
        if self.kind == "unet":
            step = 2**self.depth
            if height % step or width % step:
                raise ValueError(
                    f"unet depth {self.depth} needs input sides divisible by "
                    f"{step}, got {height}x{width}"
                )


def _he_kernel(rng: np.random.Generator, c_out: int, c_in: int, k: int) -> np.ndarray:
    fan_in = c_in * k * k
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal((c_out, c_in, k, k)) * std).astype(np.float32)


class _Builder:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.params = ParamSet()

    def conv(self, name: str, c_in: int, c_out: int, k: int) -> None:
        self.params.add(
            f"{name}.weight", Tensor(_he_kernel(self.rng, c_out, c_in, k))
        )
        self.params.add(f"{name}.bias", Tensor(np.zeros(c_out, dtype=np.float32)))

    def norm(self, name: str, channels: int) -> None:
        self.params.add(f"{name}.scale", Tensor(np.ones(channels, dtype=np.float32)))
        self.params.add(f"{name}.shift", Tensor(np.zeros(channels, dtype=np.float32)))


def build_network(config: NetworkConfig, seed: int) -> ParamSet:
    """He-initialized parameters for a config, deterministic per seed."""
    config.validate()
    b = _Builder(seed)
    k = config.kernel_size
    if config.kind == "plain":
        c = config.hidden_channels
        prev = 1
        for i in range(config.num_layers - 1):
            b.conv(f"layer{i}.conv", prev, c, k)
            b.norm(f"layer{i}.norm", c)
            prev = c
        b.conv("out.conv", prev, 1, k)
        return b.params

    # unet
    chans = [config.level_channels(i) for i in range(config.depth + 1)]
    b.conv("stem.conv", 1, chans[0], k)
    b.norm("stem.norm", chans[0])
    for i in range(config.depth):
        b.conv(f"down{i}.conv", chans[i], chans[i + 1], k)
        b.norm(f"down{i}.norm", chans[i + 1])
        b.conv(f"enc{i}.conv", chans[i + 1], chans[i + 1], k)
        b.norm(f"enc{i}.norm", chans[i + 1])
    for i in reversed(range(config.depth)):
        b.conv(f"up{i}.conv", chans[i + 1], chans[i], k)
        b.norm(f"up{i}.norm", chans[i])
        b.conv(f"dec{i}.conv", 2 * chans[i], chans[i], k)
        b.norm(f"dec{i}.norm", chans[i])
    b.conv("out.conv", chans[0], 1, k)
    return b.params


def _block(
    x: Tensor, params: ParamSet, name: str, config: NetworkConfig, stride: int = 1
) -> Tensor:
    pad = config.kernel_size // 2
    x = conv2d(
        x,
        params[f"{name}.conv.weight"],
        params[f"{name}.conv.bias"],
        stride=stride,
        padding=pad,
    )
    x = instance_norm(
        x, params[f"{name}.norm.scale"], params[f"{name}.norm.shift"],
        eps=config.norm_eps,
    )
    return relu(x)


def forward(config: NetworkConfig, params: ParamSet, x: Tensor) -> Tensor:
    """Apply the network to a (N, 1, H, W) tensor."""
    config.validate()
    config.check_input(x.shape[2], x.shape[3])
    pad = config.kernel_size // 2
    if config.kind == "plain":
        h = x
        for i in range(config.num_layers - 1):
            h = _block(h, params, f"layer{i}", config)
        return conv2d(
            h, params["out.conv.weight"], params["out.conv.bias"],
            stride=1, padding=pad,
        )

    h = _block(x, params, "stem", config)
    skips = []
    for i in range(config.depth):
        skips.append(h)
        h = _block(h, params, f"down{i}", config, stride=2)
        h = _block(h, params, f"enc{i}", config)
    for i in reversed(range(config.depth)):
        h = upsample_nearest(h, 2)
        h = _block(h, params, f"up{i}", config)
        h = concat_channels(h, skips[i])
        h = _block(h, params, f"dec{i}", config)
    return conv2d(
        h, params["out.conv.weight"], params["out.conv.bias"],
        stride=1, padding=pad,
    )
