"""Seeded, untrained stand-ins for the hyper path and the image transforms.

They exist so the context machinery has something to condition on; nothing
here is meant to compress images well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import conv1x1, conv2d_strided, depth_to_space, depthwise_conv3x3, relu, space_to_depth
from .weights import WeightStore

HYPER_STRIDE = 4
INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1


def _pad_to(x: np.ndarray, hp: int, wp: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.zeros((c, hp, wp))
    out[:, :h, :w] = x
    return out


class HyperPath:
    """h_a: space-to-depth by 4 then two pointwise layers; h_s mirrors it."""

    def __init__(self, store: WeightStore, latent_ch: int, hyper_dim: int = 32):
        s2 = HYPER_STRIDE * HYPER_STRIDE
        self.latent_ch = latent_ch
        self.hyper_dim = hyper_dim
        self.a1_w = store.require("h_a.1.w", (hyper_dim, latent_ch * s2), fan_in=latent_ch * s2)
        self.a1_b = store.require("h_a.1.b", (hyper_dim,), init="const")
        self.a2_w = store.require("h_a.2.w", (hyper_dim, hyper_dim), fan_in=hyper_dim)
        self.a2_b = store.require("h_a.2.b", (hyper_dim,), init="const")
        self.s1_w = store.require("h_s.1.w", (hyper_dim, hyper_dim), fan_in=hyper_dim)
        self.s1_b = store.require("h_s.1.b", (hyper_dim,), init="const")
        self.s2_w = store.require("h_s.2.w", (hyper_dim * s2, hyper_dim), fan_in=hyper_dim)
        self.s2_b = store.require("h_s.2.b", (hyper_dim * s2,), init="const")

    def analyse(self, latent: np.ndarray, padded_hw: tuple[int, int]) -> np.ndarray:
        """Integer hyper latents ``z`` on the ``padded / 4`` grid."""
        x = _pad_to(np.asarray(latent, dtype=np.float64), *padded_hw)
        h = relu(conv1x1(space_to_depth(x, HYPER_STRIDE), self.a1_w, self.a1_b))
        z = conv1x1(h, self.a2_w, self.a2_b)
        return np.clip(np.round(z), INT16_MIN, INT16_MAX).astype(np.int64)

    def synthesise(self, z: np.ndarray) -> np.ndarray:
        """Hyper features on the padded latent grid, ``(hyper_dim, Hp, Wp)``."""
        h = relu(conv1x1(np.asarray(z, dtype=np.float64), self.s1_w, self.s1_b))
        return depth_to_space(conv1x1(h, self.s2_w, self.s2_b), HYPER_STRIDE)


class PartialConvBlock:
    """Depthwise 3x3 on the first quarter of the channels, then a pointwise MLP, plus skip."""

    def __init__(self, store: WeightStore, prefix: str, dim: int):
        self.part = max(dim // 4, 1)
        self.dw = store.require(f"{prefix}.dw.k", (self.part, 3, 3), fan_in=9)
        self.w1 = store.require(f"{prefix}.pw1.w", (2 * dim, dim), fan_in=dim)
        self.b1 = store.require(f"{prefix}.pw1.b", (2 * dim,), init="const")
        self.w2 = store.require(f"{prefix}.pw2.w", (dim, 2 * dim), fan_in=4 * dim)
        self.b2 = store.require(f"{prefix}.pw2.b", (dim,), init="const")

    def __call__(self, x):
        mixed = x.copy()
        mixed[:self.part] = depthwise_conv3x3(x[:self.part], self.dw)
        return x + conv1x1(relu(conv1x1(mixed, self.w1, self.b1)), self.w2, self.b2)


@dataclass(frozen=True)
class TransformConfig:
    image_ch: int = 3
    width: int = 32
    latent_ch: int = 16
    depths: tuple[int, int, int, int, int] = (1, 1, 1, 1, 1)
    latent_gain: float = 8.0


class ToyTransforms:
    """Analysis: k4 s2 p1 conv then three k2 s2 convs (total stride 16).

    Synthesis mirrors it with pointwise convs followed by pixel shuffle.
    ``depths`` gives the partial-conv block count after each stage; the
    fifth entry sits at the latent resolution.
    """

    STRIDE = 16

    def __init__(self, store: WeightStore, config: TransformConfig = TransformConfig()):
        if len(config.depths) != 5:
            raise ConfigError("transform depths need five entries")
        self.config = config
        c_img, w, c_lat = config.image_ch, config.width, config.latent_ch
        self.down = [
            (store.require("g_a.down0.w", (w, c_img, 4, 4), fan_in=16 * c_img),
             store.require("g_a.down0.b", (w,), init="const"), 2, 1),
        ]
        for k in (1, 2, 3):
            out = c_lat if k == 3 else w
            self.down.append((store.require(f"g_a.down{k}.w", (out, w, 2, 2), fan_in=4 * w),
                              store.require(f"g_a.down{k}.b", (out,), init="const"), 2, 0))
        self.a_blocks = [
            [PartialConvBlock(store, f"g_a.stage{s}.block{j}", c_lat if s >= 3 else w) for j in range(config.depths[s])]
            for s in range(4)
        ]
        self.a_final = [PartialConvBlock(store, f"g_a.latent.block{j}", c_lat) for j in range(config.depths[4])]

        self.s_first = [PartialConvBlock(store, f"g_s.latent.block{j}", c_lat) for j in range(config.depths[4])]
        self.up = []
        ins = (c_lat, w, w, w)
        outs = (w, w, w, c_img)
        for k in range(4):
            self.up.append((store.require(f"g_s.up{k}.w", (4 * outs[k], ins[k]), fan_in=ins[k]),
                            store.require(f"g_s.up{k}.b", (4 * outs[k],), init="const")))
        self.s_blocks = [
            [PartialConvBlock(store, f"g_s.stage{s}.block{j}", w) for j in range(config.depths[3 - s])]
            for s in range(3)
        ]

    def analysis(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.config.image_ch:
            raise ShapeError(f"image must be ({self.config.image_ch}, H, W), got {x.shape}")
        if x.shape[1] % self.STRIDE or x.shape[2] % self.STRIDE:
            raise ShapeError(f"image dims {x.shape[1:]} not divisible by {self.STRIDE}")
        for s, (wt, b, stride, pad) in enumerate(self.down):
            x = conv2d_strided(x, wt, b, stride, pad)
            if s < 3:
                x = relu(x)
            for blk in self.a_blocks[s]:
                x = blk(x)
        for blk in self.a_final:
            x = blk(x)
        return x * self.config.latent_gain

    def synthesis(self, latent: np.ndarray) -> np.ndarray:
        x = np.asarray(latent, dtype=np.float64) / self.config.latent_gain
        for blk in self.s_first:
            x = blk(x)
        for s, (wt, b) in enumerate(self.up):
            x = depth_to_space(conv1x1(x, wt, b), 2)
            if s < 3:
                x = relu(x)
                for blk in self.s_blocks[s]:
                    x = blk(x)
        return x


def quantize_latent(y: np.ndarray) -> np.ndarray:
    return np.clip(np.round(y), INT16_MIN, INT16_MAX).astype(np.int64)
