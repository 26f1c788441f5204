"""The hologram-generation network.

An encoder-decoder estimates depth from RGB; four fusion blocks combine
encoder and decoder features through 1x1 projections and elementwise
products with a residual add; two independent cascaded branches decode the
fused pyramid into amplitude and phase maps. Everything is driven by an
ArchConfig, so the 64-pixel toy preset and the full-width preset share all
code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from holoforge.autograd import ops
from holoforge.autograd.tensor import Tensor
from holoforge.layers import BatchNorm2d, Conv2d, ConvBNAct, Module, ModuleList, ProjBN

TOY_CHANNELS = (16, 32, 64, 128, 256, 368)
PAPER_CHANNELS = (96, 192, 384, 768, 1536, 2208)


@dataclass(frozen=True)
class ArchConfig:
    input_size: int
    encoder_channels: tuple
    fusion_levels: int = 4
    preset: str = "custom"

    def __post_init__(self):
        ch = tuple(self.encoder_channels)
        object.__setattr__(self, "encoder_channels", ch)
        if len(ch) != 6:
            raise ValueError(f"need 6 encoder channel counts, got {len(ch)}")
        if any(b <= a for a, b in zip(ch, ch[1:])):
            raise ValueError(f"encoder channels must be strictly increasing, got {ch}")
        if self.input_size % 16 != 0 or self.input_size <= 0:
            raise ValueError(f"input size must be a positive multiple of 16, got {self.input_size}")

    @classmethod
    def toy(cls) -> "ArchConfig":
        return cls(input_size=64, encoder_channels=TOY_CHANNELS, preset="toy")

    @classmethod
    def paper_scale(cls) -> "ArchConfig":
        return cls(input_size=384, encoder_channels=PAPER_CHANNELS, preset="paper")

    @classmethod
    def from_preset(cls, name: str) -> "ArchConfig":
        if name == "toy":
            return cls.toy()
        if name == "paper":
            return cls.paper_scale()
        raise ValueError(f"unknown preset '{name}' (expected 'toy' or 'paper')")


@dataclass
class ModelOutput:
    depth: Tensor
    amplitude: Tensor
    phase: Tensor


def phase_to_radians(p: np.ndarray) -> np.ndarray:
    """Map a normalized phase map in [0,1] onto (-pi, pi]."""
    return 2.0 * np.pi * p - np.pi


class EncoderStage(Module):
    """Two conv+BN+LeakyReLU pairs; the first conv may downsample."""

    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.conv1 = ConvBNAct(in_channels, out_channels, 3, stride=stride)
        self.conv2 = ConvBNAct(out_channels, out_channels, 3, stride=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(self.conv1(x))


class Encoder(Module):
    """Six stages; stages 2 through 5 halve the resolution."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        self.stages = ModuleList()
        in_ch = 3
        for i, out_ch in enumerate(config.encoder_channels):
            stride = 2 if 1 <= i <= 4 else 1
            self.stages.append(EncoderStage(in_ch, out_ch, stride))
            in_ch = out_ch

    def forward(self, rgb: Tensor) -> list:
        maps = []
        x = rgb
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps


class Decoder(Module):
    """Four upsample-skip-conv steps from the deepest encoder map, then a
    1x1 conv + sigmoid depth head at full resolution.

    Each step doubles the resolution first, concatenates the encoder map
    that lives at the new resolution, and convolves down to that map's
    channel count, so decoder map n mirrors encoder map n in shape.
    """

    def __init__(self, config: ArchConfig):
        super().__init__()
        ch = config.encoder_channels
        self.steps = ModuleList()
        in_prev = ch[5]
        for n in (4, 3, 2, 1):
            skip_ch = ch[n - 1]
            self.steps.append(ConvBNAct(in_prev + skip_ch, skip_ch, 3))
            in_prev = skip_ch
        self.depth_head = Conv2d(ch[0], 1, 1, pad=0)

    def forward(self, ef: list) -> tuple:
        if len(ef) != 6:
            raise ValueError(f"expected 6 encoder maps, got {len(ef)}")
        df = [None] * 4
        x = ef[5]
        for i, n in enumerate((4, 3, 2, 1)):
            up = ops.bilinear_upsample2x(x)
            x = self.steps[i](ops.concat_channels(up, ef[n - 1]))
            df[n - 1] = x
        depth = ops.sigmoid(self.depth_head(df[0]))
        return df, depth


class FusionBlock(Module):
    """Combine one encoder/decoder map pair through four 1x1 projections:
    the two decoder projections multiply, gate the encoder projection, and
    a final projection feeds a residual add back onto the encoder map.
    """

    def __init__(self, ef_channels: int, df_channels: int):
        super().__init__()
        self.c1 = ProjBN(ef_channels, ef_channels)
        self.c2 = ProjBN(df_channels, ef_channels)
        self.c3 = ProjBN(df_channels, ef_channels)
        self.c4 = ProjBN(ef_channels, ef_channels)

    def forward(self, ef_n: Tensor, df_n: Tensor) -> Tensor:
        if ef_n.shape[2:] != df_n.shape[2:]:
            raise ValueError(f"fusion inputs disagree spatially: {ef_n.shape} vs {df_n.shape}")
        gate = ops.elementwise_mul(self.c2(df_n), self.c3(df_n))
        core = ops.elementwise_mul(self.c1(ef_n), gate)
        return ops.add(ef_n, self.c4(core))


class CascadeBlock(Module):
    """conv3x3 + BN, upsample x2, concat the fused map at the new
    resolution, then conv1x1 + LeakyReLU."""

    def __init__(self, in_channels: int, cat_channels: int, out_channels: int):
        super().__init__()
        self.conv = Conv2d(in_channels, in_channels, 3)
        self.bn = BatchNorm2d(in_channels)
        self.proj = Conv2d(in_channels + cat_channels, out_channels, 1, pad=0)

    def forward(self, x: Tensor, fused: Tensor) -> Tensor:
        y = ops.bilinear_upsample2x(self.bn(self.conv(x)))
        y = ops.concat_channels(y, fused)
        return ops.leaky_relu(self.proj(y))


class CascadeBranch(Module):
    """Three cascade blocks walking the fused pyramid coarse to fine, then
    an RGB concat and a 1x1 sigmoid head emitting one [0,1] channel."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        ch = config.encoder_channels
        self.blocks = ModuleList([
            CascadeBlock(ch[3], ch[2], ch[2]),
            CascadeBlock(ch[2], ch[1], ch[1]),
            CascadeBlock(ch[1], ch[0], ch[0]),
        ])
        self.head = Conv2d(ch[0] + 3, 1, 1, pad=0)

    def forward(self, ff: list, rgb: Tensor) -> Tensor:
        x = ff[3]
        for i, block in enumerate(self.blocks):
            x = block(x, ff[2 - i])
        x = ops.concat_channels(x, rgb)
        return ops.sigmoid(self.head(x))


class HoloNet(Module):
    """Full pipeline: encode -> decode (depth) -> fuse -> amplitude/phase."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.decoder = Decoder(config)
        ch = config.encoder_channels
        self.fusion = ModuleList([FusionBlock(ch[n], ch[n]) for n in range(config.fusion_levels)])
        self.amp_branch = CascadeBranch(config)
        self.phase_branch = CascadeBranch(config)

    # -- component passes, exposed separately for the two training phases --

    def encode(self, rgb: Tensor) -> list:
        rgb = rgb if isinstance(rgb, Tensor) else Tensor(rgb)
        s = self.config.input_size
        if rgb.ndim != 4 or rgb.shape[1] != 3:
            raise ValueError(f"expected an (n,3,{s},{s}) RGB tensor, got shape {rgb.shape}")
        if rgb.shape[2] != s or rgb.shape[3] != s:
            raise ValueError(f"input is {rgb.shape[2]}x{rgb.shape[3]} but this config takes {s}x{s}")
        lo, hi = float(rgb.data.min()), float(rgb.data.max())
        if lo < -1e-6 or hi > 1.0 + 1e-6:
            raise ValueError(f"RGB values must lie in [0,1], found range [{lo:g}, {hi:g}]")
        return self.encoder(rgb)

    def decode(self, ef: list) -> tuple:
        return self.decoder(ef)

    def fuse(self, ef: list, df: list) -> list:
        return [self.fusion[n](ef[n], df[n]) for n in range(len(self.fusion))]

    def generate_cgh(self, ff: list, rgb: Tensor) -> tuple:
        rgb = rgb if isinstance(rgb, Tensor) else Tensor(rgb)
        if ff[0].shape[2:] != rgb.shape[2:]:
            raise ValueError(f"fused pyramid top {ff[0].shape} does not match RGB {rgb.shape}")
        return self.amp_branch(ff, rgb), self.phase_branch(ff, rgb)

    def forward(self, rgb: Tensor) -> ModelOutput:
        ef = self.encode(rgb)
        df, depth = self.decode(ef)
        ff = self.fuse(ef, df)
        amplitude, phase = self.generate_cgh(ff, rgb)
        return ModelOutput(depth=depth, amplitude=amplitude, phase=phase)

    # -- parameter groups for the two training phases ----------------------

    def depth_parameters(self):
        """Encoder, decoder, and depth head: what phase 1 trains."""
        for name, p in self.named_parameters():
            if name.startswith(("encoder.", "decoder.")):
                yield name, p

    def cgh_parameters(self):
        """Fusion blocks and both output branches: what phase 2 trains."""
        for name, p in self.named_parameters():
            if name.startswith(("fusion.", "amp_branch.", "phase_branch.")):
                yield name, p

    def depth_modules(self):
        return [self.encoder, self.decoder]

    def cgh_modules(self):
        return [self.fusion, self.amp_branch, self.phase_branch]


def init_weights(model: Module, seed: int):
    """He fan-in normal for conv kernels, ones for gamma, zeros elsewhere.

    Parameters are visited in registration order, so one seed pins every
    weight in the model.
    """
    rng = np.random.default_rng(seed)
    for name, p in model.named_parameters():
        if name.endswith(".weight") and p.data.ndim == 4:
            fan_in = p.data.shape[1] * p.data.shape[2] * p.data.shape[3]
            p.data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=p.data.shape).astype(p.data.dtype)
        elif name.endswith(".gamma"):
            p.data = np.ones_like(p.data)
        else:
            p.data = np.zeros_like(p.data)
        p.grad = None


def build_model(preset: str = "toy", seed: int = 42) -> HoloNet:
    model = HoloNet(ArchConfig.from_preset(preset))
    init_weights(model, seed)
    return model
