"""Parameterized builders for the candidate restoration architectures.

Every family maps an NHWC image to an image of the same shape (a global
residual ADD with the input closes each network). Defaults are sized so that
each family lands near 250 GMAC at 1280x720.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .builder import GraphBuilder
from .errors import InvalidSpec
from .ir import Graph, OpKind, check


class Family(str, Enum):
    UNET = "UNET"
    EDSR_LIKE = "EDSR_LIKE"
    RDN_LIKE = "RDN_LIKE"
    DBPN_LIKE = "DBPN_LIKE"
    FPN_LIKE = "FPN_LIKE"
    SGN_LIKE = "SGN_LIKE"


class Upsample(str, Enum):
    TRANSPOSE_CONV = "TRANSPOSE_CONV"
    DEPTH_TO_SPACE = "DEPTH_TO_SPACE"
    RESIZE_BILINEAR = "RESIZE_BILINEAR"


class Activation(str, Enum):
    RELU = "RELU"
    PRELU = "PRELU"


UPSAMPLE_ALIASES = {"tc": Upsample.TRANSPOSE_CONV, "d2s": Upsample.DEPTH_TO_SPACE,
                    "bilinear": Upsample.RESIZE_BILINEAR}

HD_720P = (1, 720, 1280, 3)

# depth: pooling levels (UNET, FPN), pyramid levels (SGN), dense blocks (RDN)
# blocks: bottleneck convs (UNET), residual blocks (EDSR), layers per dense
#         block (RDN), projection pairs (DBPN)
DEFAULTS = {
    Family.UNET: dict(base_channels=48, depth=2, blocks=3, growth=0),
    Family.EDSR_LIKE: dict(base_channels=48, depth=1, blocks=6, growth=0),
    Family.RDN_LIKE: dict(base_channels=32, depth=4, blocks=4, growth=24),
    Family.DBPN_LIKE: dict(base_channels=64, depth=1, blocks=1, growth=0),
    Family.FPN_LIKE: dict(base_channels=60, depth=3, blocks=1, growth=0),
    Family.SGN_LIKE: dict(base_channels=64, depth=2, blocks=1, growth=0),
}


@dataclass(frozen=True)
class ArchSpec:
    family: Family = Family.UNET
    upsample: Upsample = Upsample.TRANSPOSE_CONV
    activation: Activation = Activation.RELU
    base_channels: Optional[int] = None
    depth: Optional[int] = None
    blocks: Optional[int] = None
    growth: Optional[int] = None
    input_shape: tuple[int, int, int, int] = HD_720P
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "upsample", Upsample(self.upsample))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        for k, v in DEFAULTS[self.family].items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)

    def replace(self, **changes) -> "ArchSpec":
        return dataclasses.replace(self, **changes)

    @property
    def spatial_multiple(self) -> int:
        """Input height and width must be multiples of this."""
        if self.family in (Family.UNET, Family.FPN_LIKE, Family.SGN_LIKE):
            return 2 ** self.depth
        if self.family is Family.DBPN_LIKE:
            return 2
        return 1


def default_spec(family=Family.UNET, **overrides) -> ArchSpec:
    return ArchSpec(family=Family(family), **overrides)


def _validate(spec: ArchSpec) -> None:
    n, h, w, c = spec.input_shape
    if min(spec.input_shape) < 1:
        raise InvalidSpec(f"input shape {spec.input_shape} must be positive")
    if spec.base_channels < 1 or spec.depth < 1 or spec.blocks < 1:
        raise InvalidSpec("base_channels, depth and blocks must be >= 1")
    if spec.family is Family.UNET and spec.depth < 2:
        raise InvalidSpec("UNET depth must be >= 2")
    if spec.family is Family.RDN_LIKE and spec.growth < 1:
        raise InvalidSpec("RDN_LIKE growth must be >= 1")
    if spec.family is Family.SGN_LIKE and spec.base_channels % 2:
        raise InvalidSpec("SGN_LIKE base_channels must be even")
    uses_upsample = spec.family in (Family.UNET, Family.DBPN_LIKE)
    if uses_upsample and spec.upsample is Upsample.DEPTH_TO_SPACE and spec.base_channels % 4:
        raise InvalidSpec(f"base_channels={spec.base_channels} must be divisible by 4 "
                          "for a DEPTH_TO_SPACE decoder")
    m = spec.spatial_multiple
    if h % m or w % m:
        raise InvalidSpec(f"{spec.family.value} needs height/width divisible by {m}, got {h}x{w}")


class _Net:
    """Per-build helpers that apply the ArchSpec's activation and upsampling choices."""

    def __init__(self, spec: ArchSpec):
        self.spec = spec
        self.b = GraphBuilder(spec.seed)
        self.act_kind = OpKind.RELU if spec.activation is Activation.RELU else OpKind.PRELU

    def act(self, x):
        return self.b.act(x, self.act_kind)

    def conv_act(self, x, ch, k=3, stride=1):
        return self.act(self.b.conv(x, ch, k, stride))

    def upsample(self, x, ch, k=4):
        """x2 upsampling to ``ch`` channels with the ArchSpec's operator."""
        b = self.b
        if self.spec.upsample is Upsample.TRANSPOSE_CONV:
            return b.tconv(x, ch, k=k, stride=2)
        if self.spec.upsample is Upsample.DEPTH_TO_SPACE:
            return b.d2s(b.conv(x, 4 * ch, k=1), 2)
        return b.conv(b.resize(x, 2, bilinear=True), ch, k=3)


def _unet(net: _Net, x):
    s, b = net.spec, net.b
    c = s.base_channels
    skips, h = [], x
    for i in range(s.depth):
        h = net.conv_act(h, c << i)
        h = net.conv_act(h, c << i)
        skips.append(h)
        h = b.pool(h, 2, 2)
    for _ in range(s.blocks):
        h = net.conv_act(h, c << s.depth)
    for i in reversed(range(s.depth)):
        h = net.upsample(h, c << i)
        h = b.concat([h, skips[i]])
        h = net.conv_act(h, c << i)
        h = net.conv_act(h, c << i)
    return b.conv(h, s.input_shape[3])


def _edsr(net: _Net, x):
    s, b = net.spec, net.b
    c = s.base_channels
    head = b.conv(x, c)
    h = head
    for _ in range(s.blocks):
        r = b.conv(net.conv_act(h, c), c)
        h = b.add(h, r)
    h = b.add(b.conv(h, c), head)
    return b.conv(h, s.input_shape[3])


def _rdn(net: _Net, x):
    s, b = net.spec, net.b
    c, g = s.base_channels, s.growth
    f_minus = b.conv(x, c)
    h = b.conv(f_minus, c)
    block_outs = []
    for _ in range(s.depth):
        feats = [h]
        for _ in range(s.blocks):
            inp = feats[0] if len(feats) == 1 else b.concat(feats)
            feats.append(net.conv_act(inp, g))
        fused = b.conv(b.concat(feats), c, k=1)
        h = b.add(h, fused)
        block_outs.append(h)
    gff = b.conv(b.concat(block_outs) if len(block_outs) > 1 else block_outs[0], c, k=1)
    gff = b.conv(gff, c)
    h = b.add(gff, f_minus)
    return b.conv(h, s.input_shape[3])


def _dbpn(net: _Net, x):
    s, b = net.spec, net.b
    c = s.base_channels
    h = net.conv_act(x, c)
    h = net.conv_act(h, c)
    for _ in range(s.blocks):
        # down-projection unit: H -> L
        l0 = net.conv_act(h, c, k=6, stride=2)
        h0 = net.act(net.upsample(l0, c, k=6))
        l1 = net.conv_act(b.add(h0, h), c, k=6, stride=2)
        low = b.add(l0, l1)
        # up-projection unit: L -> H
        h0 = net.act(net.upsample(low, c, k=6))
        l0 = net.conv_act(h0, c, k=6, stride=2)
        h1 = net.act(net.upsample(b.add(l0, low), c, k=6))
        h = b.add(h0, h1)
    return b.conv(h, s.input_shape[3])


def _fpn(net: _Net, x):
    s, b = net.spec, net.b
    c = s.base_channels
    h = net.conv_act(x, c)
    h = net.conv_act(h, c)
    levels = [h]
    for i in range(1, s.depth + 1):
        h = b.pool(h, 2, 2)
        h = net.conv_act(h, c << i)
        h = net.conv_act(h, c << i)
        levels.append(h)
    laterals = [b.conv(f, c, k=1) for f in levels]
    p = laterals[-1]
    for i in reversed(range(s.depth)):
        merged = b.add(laterals[i], b.resize(p, 2, bilinear=False))
        gated = b.mul(merged, laterals[i])
        p = net.conv_act(gated, c)
    p = net.conv_act(p, c)
    return b.conv(p, s.input_shape[3])


def _sgn(net: _Net, x):
    s, b = net.spec, net.b
    c = s.base_channels
    shuffled = [x]
    for _ in range(s.depth):
        shuffled.append(b.s2d(shuffled[-1], 2))
    guide = None
    for i in reversed(range(s.depth + 1)):
        ch = c << i
        h = net.conv_act(shuffled[i], ch)
        if guide is not None:
            h = b.add(h, b.conv(b.d2s(guide, 2), ch))
        h = net.conv_act(h, ch)
        guide = net.conv_act(h, ch)
    return b.conv(guide, s.input_shape[3])


_BUILDERS = {
    Family.UNET: _unet,
    Family.EDSR_LIKE: _edsr,
    Family.RDN_LIKE: _rdn,
    Family.DBPN_LIKE: _dbpn,
    Family.FPN_LIKE: _fpn,
    Family.SGN_LIKE: _sgn,
}


def build(spec: ArchSpec) -> Graph:
    _validate(spec)
    net = _Net(spec)
    x = net.b.input("input", spec.input_shape)
    y = _BUILDERS[spec.family](net, x)
    out = net.b.add(y, x, name="output")
    g = net.b.build(out)
    check(g)
    return g
