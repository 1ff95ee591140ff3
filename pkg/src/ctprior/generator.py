"""Convolutional image generator with an optional multi-code composition layer.

The decoder is a stack of blocks ``upsample -> 3x3 conv -> norm -> activation``
(the last block has no norm and feeds a sigmoid).
It is split after block ``split_layer``: blocks before the split form ``g1``
(latent code to feature map), the rest form ``g2`` (feature map to image).
With ``N`` latent codes the features of all codes are weighted per channel
and summed before ``g2``::

    image = g2( sum_n g1(z_n) * alpha_n )
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .noise import rng

__all__ = [
    "BlockSpec",
    "GeneratorConfig",
    "GeneratorParams",
    "init_params",
    "sample_codes",
    "g1_forward",
    "g2_forward",
    "compose",
    "dip_forward",
    "mcdip_forward",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class BlockSpec:
    kernel: int = 3
    out_channels: int = 64
    upsample: int = 2
    activation: str = "leaky_relu"  # or "none"
    normalize: bool = True


@dataclass(frozen=True)
class GeneratorConfig:
    latent_shape: tuple[int, int, int] = (16, 4, 4)
    blocks: tuple[BlockSpec, ...] = (
        BlockSpec(3, 64),
        BlockSpec(3, 64),
        BlockSpec(3, 32),
        BlockSpec(3, 1, activation="none", normalize=False),
    )
    split_layer: int = 2
    output_activation: str = "sigmoid"
    leaky_slope: float = 0.2

    def __post_init__(self):
        if not 1 <= self.split_layer < len(self.blocks):
            raise ValueError("split_layer must satisfy 1 <= split_layer < number of blocks")
        if self.blocks[-1].out_channels != 1:
            raise ValueError("last block must produce a single channel")
        for b in self.blocks:
            if b.kernel % 2 == 0 or b.activation not in ("leaky_relu", "none"):
                raise ValueError(f"unsupported block {b}")
        if self.output_activation not in ("sigmoid", "none"):
            raise ValueError("output_activation must be 'sigmoid' or 'none'")

    @classmethod
    def for_image(cls, size: int, latent_channels: int = 16, **kw) -> "GeneratorConfig":
        """Default four-block decoder for a ``size x size`` image."""
        if size % 16:
            raise ValueError("default generator needs an image size divisible by 16")
        return cls(latent_shape=(latent_channels, size // 16, size // 16), **kw)

    @property
    def output_shape(self) -> tuple[int, int]:
        _, h, w = self.latent_shape
        f = math.prod(b.upsample for b in self.blocks)
        return (h * f, w * f)

    @property
    def split_channels(self) -> int:
        return self.blocks[self.split_layer - 1].out_channels


@dataclass
class GeneratorParams:
    """Trainable weights: conv parameters ``theta`` and channel weights ``alphas``."""

    theta: dict[str, Tensor]
    alphas: Tensor | None = None
    config: GeneratorConfig = field(default_factory=GeneratorConfig)

    def tensors(self, include_alphas: bool = True) -> dict[str, Tensor]:
        out = dict(self.theta)
        if include_alphas and self.alphas is not None:
            out["alphas"] = self.alphas
        return out

    def zero_grad(self) -> None:
        for t in self.tensors().values():
            t.zero_grad()

    def copy(self) -> "GeneratorParams":
        theta = {k: Tensor(v.value.copy(), requires_grad=True, name=k) for k, v in self.theta.items()}
        alphas = None
        if self.alphas is not None:
            alphas = Tensor(self.alphas.value.copy(), requires_grad=self.alphas.requires_grad, name="alphas")
        return GeneratorParams(theta, alphas, self.config)

    @property
    def size(self) -> int:
        return sum(t.value.size for t in self.tensors().values())


def init_params(config: GeneratorConfig, seed: int, num_codes: int | None = None) -> GeneratorParams:
    """He-uniform conv weights, zero biases, all-ones channel weights.

    ``theta`` depends only on ``(config, seed)``, not on ``num_codes``.
    """
    gen = rng(seed, stream=0)
    theta = {}
    cin = config.latent_shape[0]
    for i, b in enumerate(config.blocks):
        fan_in = cin * b.kernel * b.kernel
        bound = math.sqrt(6.0 / fan_in)
        w = gen.uniform(-bound, bound, size=(b.out_channels, cin, b.kernel, b.kernel))
        theta[f"block{i}.weight"] = Tensor(w, requires_grad=True, name=f"block{i}.weight")
        theta[f"block{i}.bias"] = Tensor(np.zeros(b.out_channels), requires_grad=True, name=f"block{i}.bias")
        cin = b.out_channels
    alphas = None
    if num_codes is not None:
        alphas = Tensor(np.ones((num_codes, config.split_channels)), requires_grad=True, name="alphas")
    return GeneratorParams(theta, alphas, config)


def sample_codes(config: GeneratorConfig, num_codes: int, seed: int) -> np.ndarray:
    """``num_codes`` standard-normal latent codes, shape ``(N, C0, h0, w0)``.

    The first ``k`` codes do not depend on ``num_codes``.
    """
    if num_codes < 1:
        raise ValueError("need at least one latent code")
    c, h, w = config.latent_shape
    flat = rng(seed, stream=1).standard_normal(num_codes * c * h * w)
    return flat.reshape(num_codes, c, h, w)


def _block(x: Tensor, params: GeneratorParams, i: int) -> Tensor:
    spec = params.config.blocks[i]
    x = ad.upsample_nearest(x, spec.upsample)
    x = ad.conv2d(x, params.theta[f"block{i}.weight"], params.theta[f"block{i}.bias"])
    if spec.normalize:
        x = ad.instance_norm(x)
    if spec.activation == "leaky_relu":
        x = ad.leaky_relu(x, params.config.leaky_slope)
    return x


def _as_codes(z, config: GeneratorConfig) -> Tensor:
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.value.ndim == 3:
        z = Tensor(z.value[None], requires_grad=False)
    if z.shape[1:] != tuple(config.latent_shape):
        raise ValueError(f"latent code shape {z.shape[1:]} != {config.latent_shape}")
    return z


def g1_forward(z, params: GeneratorParams) -> Tensor:
    """Feature maps at the split layer, shape ``(N, C, h, w)``."""
    x = _as_codes(z, params.config)
    for i in range(params.config.split_layer):
        x = _block(x, params, i)
    return x


def g2_forward(features: Tensor, params: GeneratorParams) -> Tensor:
    """Image tensor of shape ``(1, 1, H, W)`` from composed features."""
    x = features
    for i in range(params.config.split_layer, len(params.config.blocks)):
        x = _block(x, params, i)
    if params.config.output_activation == "sigmoid":
        x = ad.sigmoid(x)
    return x


def compose(features: Tensor, alphas: Tensor) -> Tensor:
    """``sum_n features[n] * alphas[n][:, None, None]``, shape ``(1, C, h, w)``."""
    if alphas.shape[0] != features.shape[0]:
        raise ValueError(f"{features.shape[0]} feature maps but {alphas.shape[0]} alpha vectors")
    return ad.sum_batch(ad.channel_mul(features, alphas))


def dip_forward(z, params: GeneratorParams) -> Tensor:
    """Single-code generator ``G(z; theta)`` without a composition layer."""
    x = _as_codes(z, params.config)
    if x.shape[0] != 1:
        raise ValueError("dip_forward takes exactly one latent code")
    return g2_forward(g1_forward(x, params), params)


def mcdip_forward(codes, params: GeneratorParams) -> Tensor:
    if params.alphas is None:
        raise ValueError("multi-code forward needs channel weights")
    return g2_forward(compose(g1_forward(codes, params), params.alphas), params)


def image_of(t: Tensor) -> np.ndarray:
    """Drop the batch and channel axes of a generator output."""
    return t.value[0, 0]


# ---------------------------------------------------------------- checkpoints
#
# Layout: one JSON line {"format": "ctprior-params", "version": 1,
# "arrays": [{"name", "shape"}, ...]} followed by the arrays' float64
# little-endian payloads in manifest order.

def save_params(path: str | Path, params: GeneratorParams) -> None:
    tensors = params.tensors()
    manifest = {
        "format": "ctprior-params",
        "version": 1,
        "arrays": [{"name": k, "shape": list(t.shape)} for k, t in tensors.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode() + b"\n")
        for t in tensors.values():
            fh.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())


def load_params(path: str | Path, config: GeneratorConfig) -> GeneratorParams:
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline())
        payload = fh.read()
    if manifest.get("format") != "ctprior-params":
        raise ValueError(f"{path}: not a parameter checkpoint")
    offset = 0
    theta, alphas = {}, None
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        n = math.prod(shape) * 8
        if offset + n > len(payload):
            raise ValueError(f"{path}: truncated payload")
        arr = np.frombuffer(payload[offset:offset + n], dtype="<f8").reshape(shape).astype(float)
        offset += n
        t = Tensor(arr, requires_grad=True, name=entry["name"])
        if entry["name"] == "alphas":
            alphas = t
        else:
            theta[entry["name"]] = t
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in payload")
    return GeneratorParams(theta, alphas, config)
