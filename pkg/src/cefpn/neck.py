"""Channel-enhanced feature pyramid neck.

Takes backbone maps C2..C5 at strides {4, 8, 16, 32} with channels
{c, 2c, 4c, 8c} and produces four pyramid levels R2..R5, all ``c`` channels
wide. Three mechanisms are layered on the classic top-down pyramid:

* sub-pixel skip fusion (SSF): the channel-rich C4/C5 maps are folded into
  the next-lower lateral by pixel shuffle instead of channel reduction plus
  interpolation;
* sub-pixel context enhancement (SCE): three parallel pathways over C5
  (local 3x3 + 2x shuffle, pooled 1x1 + 4x shuffle, global pooled broadcast)
  summed into a context map at stride 16;
* channel attention guidance (CAG): one weight vector, computed from the
  integration map, rescales the channels of every output level.

F5/P5 are not built by default; the fifth output level is a parameter-free
stride-2 subsample of P4.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError, ShapeError
from .ops import ConvSpec, LinearSpec, conv2d, global_avg_pool, global_max_pool, \
    interpolate_nearest, linear, max_pool2d
from .tensor import Tensor, _record, add, broadcast_spatial, channel_slice, \
    mul_channelwise, relu, scale, sigmoid, squeeze_spatial

STRIDES = (4, 8, 16, 32)
SSF_SCHEMES = ("a", "b", "c")


# ---------------------------------------------------------------------------
# pixel shuffle
# ---------------------------------------------------------------------------

def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (n, C*r^2, h, w) to (n, C, r*h, r*w).

    Output position (y, x) of channel ch reads input position
    (y // r, x // r) at input channel C*r*(y mod r) + C*(x mod r) + ch.
    A pure permutation: the value multiset is preserved exactly.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"pixel_shuffle: input must be 4-d, got shape {x.shape}")
    if not isinstance(r, int) or r < 1:
        raise ConfigError(f"pixel_shuffle: upscale factor must be a positive integer, got {r}")
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ConfigError(f"pixel_shuffle: {c} channels not divisible by r^2 = {r * r} (r = {r})")
    cq = c // (r * r)

    def kernel():
        blocks = x.data.reshape(n, r, r, cq, h, w)
        return np.ascontiguousarray(blocks.transpose(0, 3, 4, 1, 5, 2)).reshape(n, cq, r * h, r * w)

    def grad_fn(g):
        return (_unshuffle_data(g, r),)

    return _record("pixel_shuffle", kernel(), (x,), grad_fn, kernel)


def _unshuffle_data(d: np.ndarray, r: int) -> np.ndarray:
    n, cq, rh, rw = d.shape
    h, w = rh // r, rw // r
    blocks = d.reshape(n, cq, h, r, w, r)
    return np.ascontiguousarray(blocks.transpose(0, 3, 5, 1, 2, 4)).reshape(n, cq * r * r, h, w)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of ``pixel_shuffle``: (n, C, r*h, r*w) -> (n, C*r^2, h, w)."""
    if x.data.ndim != 4:
        raise ShapeError(f"pixel_unshuffle: input must be 4-d, got shape {x.shape}")
    if not isinstance(r, int) or r < 1:
        raise ConfigError(f"pixel_unshuffle: upscale factor must be a positive integer, got {r}")
    n, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"pixel_unshuffle: extents {h}x{w} not divisible by r = {r}")

    def kernel():
        return _unshuffle_data(x.data, r)

    def grad_fn(g):
        blocks = g.reshape(n, r, r, c, h // r, w // r)
        return (np.ascontiguousarray(blocks.transpose(0, 3, 4, 1, 5, 2)).reshape(n, c, h, w),)

    return _record("pixel_unshuffle", kernel(), (x,), grad_fn, kernel)


# ---------------------------------------------------------------------------
# configuration and parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeckConfig:
    """Architecture hyperparameters of the neck.

    ``base_channel`` is the shared pyramid width c (256 at reference scale);
    ``upscale`` is the sub-pixel factor used by the skip fusion and is fixed
    at 2 to double the spatial scale.
    """

    base_channel: int = 256
    ssf_scheme: str = "c"
    attention_reduction: int = 32
    upscale: int = 2
    interpolation: str = "nearest"
    include_f5_p5: bool = False

    def __post_init__(self):
        c = self.base_channel
        if c < 4 or c % 4 != 0:
            raise ConfigError(f"base_channel must be a positive multiple of 4, got {c}")
        if self.ssf_scheme not in SSF_SCHEMES:
            raise ConfigError(f"ssf_scheme must be one of {SSF_SCHEMES}, got {self.ssf_scheme!r}")
        if self.attention_reduction < 1 or c % self.attention_reduction != 0:
            raise ConfigError(
                f"attention_reduction {self.attention_reduction} must divide base_channel {c}")
        if self.upscale != 2:
            raise ConfigError(f"upscale is fixed at 2, got {self.upscale}")
        if self.interpolation != "nearest":
            raise ConfigError(f"only nearest interpolation is supported, got {self.interpolation!r}")

    @property
    def levels(self) -> tuple[int, ...]:
        return (2, 3, 4, 5) if self.include_f5_p5 else (2, 3, 4)

    def backbone_channels(self) -> dict[int, int]:
        return {i: self.base_channel * (1 << (i - 2)) for i in (2, 3, 4, 5)}


@dataclass(frozen=True)
class BackbonePyramid:
    """Backbone outputs C2..C5 at strides {4, 8, 16, 32}, channels {c, 2c, 4c, 8c}."""

    c2: Tensor
    c3: Tensor
    c4: Tensor
    c5: Tensor

    def __post_init__(self):
        maps = [self.c2, self.c3, self.c4, self.c5]
        for i, t in zip((2, 3, 4, 5), maps):
            if t.data.ndim != 4:
                raise ShapeError(f"C{i} must be 4-d, got shape {t.shape}")
        c = self.c2.shape[1]
        for i, t in zip((2, 3, 4, 5), maps):
            want = c * (1 << (i - 2))
            if t.shape[1] != want:
                raise ConfigError(f"C{i} has {t.shape[1]} channels, expected {want} (c = {c})")
            if t.shape[0] != self.c2.shape[0]:
                raise ShapeError(f"C{i} batch {t.shape[0]} differs from C2 batch {self.c2.shape[0]}")
        for lo, hi in ((self.c2, self.c3), (self.c3, self.c4), (self.c4, self.c5)):
            if lo.shape[2] != 2 * hi.shape[2] or lo.shape[3] != 2 * hi.shape[3]:
                raise ShapeError(
                    f"adjacent levels must halve spatially, got {lo.shape[2:]} over {hi.shape[2:]}")

    @property
    def base_channel(self) -> int:
        return self.c2.shape[1]

    def level(self, i: int) -> Tensor:
        return {2: self.c2, 3: self.c3, 4: self.c4, 5: self.c5}[i]

    @property
    def strides(self) -> tuple[int, ...]:
        return STRIDES


@dataclass
class NeckParams:
    """All learnable layers of the neck, keyed the way the forward pass uses them."""

    laterals: dict[int, ConvSpec]
    post_convs: dict[int, ConvSpec]
    ssf_reduce: ConvSpec | None
    sce_local: ConvSpec
    sce_wide: ConvSpec
    sce_squeeze: ConvSpec
    cag_fc1_squeeze: LinearSpec
    cag_fc1_expand: LinearSpec
    cag_fc2_squeeze: LinearSpec
    cag_fc2_expand: LinearSpec

    def named_layers(self) -> Iterator[tuple[str, str, ConvSpec | LinearSpec]]:
        """(name, module, spec) triples in a fixed, documented order."""
        for i in sorted(self.laterals):
            yield f"lateral.C{i}", "lateral", self.laterals[i]
        for i in sorted(self.post_convs):
            yield f"post_merge.P{i}", "post_merge", self.post_convs[i]
        if self.ssf_reduce is not None:
            yield "ssf.reduce_C5", "ssf", self.ssf_reduce
        yield "sce.local_3x3", "sce", self.sce_local
        yield "sce.wide_1x1", "sce", self.sce_wide
        yield "sce.squeeze_1x1", "sce", self.sce_squeeze
        yield "cag.fc1_squeeze", "cag", self.cag_fc1_squeeze
        yield "cag.fc1_expand", "cag", self.cag_fc1_expand
        yield "cag.fc2_squeeze", "cag", self.cag_fc2_squeeze
        yield "cag.fc2_expand", "cag", self.cag_fc2_expand

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, _module, spec in self.named_layers():
            yield f"{name}.weight", spec.weight
            if spec.bias_enabled:
                yield f"{name}.bias", spec.bias

    def scalar_count(self) -> int:
        """Number of scalars actually allocated across all parameter tensors."""
        return sum(t.size for _name, t in self.named_parameters())


def init_neck_params(config: NeckConfig, seed: int, dtype=np.float64,
                     bias: bool = True) -> NeckParams:
    """Seeded uniform initialization; identical seeds give bit-identical params.

    Allocation order is fixed: laterals ascending, post-merge convs ascending,
    the scheme-a reduction (when present), the three SCE convs, then the four
    attention layers.
    """
    rng = np.random.default_rng(seed)
    c = config.base_channel
    back = config.backbone_channels()
    laterals = {i: ConvSpec.seeded(rng, back[i], c, 1, bias=bias, dtype=dtype)
                for i in config.levels}
    post = {i: ConvSpec.seeded(rng, c, c, 3, bias=bias, dtype=dtype)
            for i in config.levels}
    ssf_reduce = None
    if config.ssf_scheme == "a":
        ssf_reduce = ConvSpec.seeded(rng, 8 * c, 4 * c, 1, bias=bias, dtype=dtype)
    sce_local = ConvSpec.seeded(rng, 8 * c, 4 * c, 3, bias=bias, dtype=dtype)
    sce_wide = ConvSpec.seeded(rng, 8 * c, 16 * c, 1, bias=bias, dtype=dtype)
    sce_squeeze = ConvSpec.seeded(rng, 8 * c, c, 1, bias=bias, dtype=dtype)
    hidden = c // config.attention_reduction
    fc1_s = LinearSpec.seeded(rng, c, hidden, bias=bias, dtype=dtype)
    fc1_e = LinearSpec.seeded(rng, hidden, c, bias=bias, dtype=dtype)
    fc2_s = LinearSpec.seeded(rng, c, hidden, bias=bias, dtype=dtype)
    fc2_e = LinearSpec.seeded(rng, hidden, c, bias=bias, dtype=dtype)
    return NeckParams(laterals, post, ssf_reduce, sce_local, sce_wide, sce_squeeze,
                      fc1_s, fc1_e, fc2_s, fc2_e)


@dataclass(frozen=True)
class PyramidOutputs:
    """Final pyramid R2..R5: strides {4, 8, 16, 32}, all ``c`` channels wide."""

    r2: Tensor
    r3: Tensor
    r4: Tensor
    r5: Tensor

    def level(self, i: int) -> Tensor:
        return {2: self.r2, 3: self.r3, 4: self.r4, 5: self.r5}[i]

    def levels(self) -> dict[int, Tensor]:
        return {2: self.r2, 3: self.r3, 4: self.r4, 5: self.r5}

    @property
    def strides(self) -> tuple[int, ...]:
        return STRIDES


# ---------------------------------------------------------------------------
# neck mechanisms
# ---------------------------------------------------------------------------

def ssf_fuse(c_hi: Tensor, f_lo: Tensor, scheme: str, params: NeckParams) -> Tensor:
    """Fold a channel-rich higher level into the lateral below it.

    ``f_lo`` is the lateral at pyramid width c; ``c_hi`` is the backbone map
    one level up, carrying 4c or 8c channels at half the spatial extent.
    A 4c source shuffles directly (the scheme flag is ignored); an 8c source
    is first brought to 4c channels by the selected scheme:

    * ``a`` 1x1 convolution 8c -> 4c (adds parameters);
    * ``b`` first 4c channels only (parameter free, drops half the source);
    * ``c`` both 4c halves shuffled and summed (parameter free).
    """
    if scheme not in SSF_SCHEMES:
        raise ConfigError(f"ssf scheme must be one of {SSF_SCHEMES}, got {scheme!r}")
    c = f_lo.shape[1]
    src = c_hi.shape[1]
    if src not in (4 * c, 8 * c):
        raise ConfigError(
            f"ssf source has {src} channels; expected 4x or 8x the pyramid width {c}")
    if f_lo.shape[2] != 2 * c_hi.shape[2] or f_lo.shape[3] != 2 * c_hi.shape[3]:
        raise ShapeError(
            f"ssf target extent {f_lo.shape[2:]} must be exactly twice the source {c_hi.shape[2:]}")

    if src == 4 * c:
        return add(f_lo, pixel_shuffle(c_hi, 2))
    if scheme == "a":
        if params.ssf_reduce is None:
            raise ConfigError("ssf scheme a needs the 8c -> 4c reduction layer, none was built")
        return add(f_lo, pixel_shuffle(conv2d(c_hi, params.ssf_reduce), 2))
    first = pixel_shuffle(channel_slice(c_hi, 0, 4 * c), 2)
    if scheme == "b":
        return add(f_lo, first)
    second = pixel_shuffle(channel_slice(c_hi, 4 * c, 8 * c), 2)
    return add(add(f_lo, first), second)


def top_down_merge(features: dict[int, Tensor], params: NeckParams) -> dict[int, Tensor]:
    """Classic top-down pathway: accumulate by 2x nearest upsampling and
    elementwise sum, then a 3x3 convolution per level."""
    if not features:
        raise ShapeError("top_down_merge: no levels given")
    levels = sorted(features, reverse=True)
    width = features[levels[0]].shape[1]
    merged: dict[int, Tensor] = {}
    outputs: dict[int, Tensor] = {}
    prev: int | None = None
    for i in levels:
        f = features[i]
        if f.shape[1] != width:
            raise ShapeError(f"top_down_merge: level {i} width {f.shape[1]} != {width}")
        if prev is None:
            merged[i] = f
        else:
            up = interpolate_nearest(merged[prev], 2)
            if up.shape != f.shape:
                raise ShapeError(
                    f"top_down_merge: level {i} shape {f.shape} does not sit 2x below level {prev}")
            merged[i] = add(f, up)
        if i not in params.post_convs:
            raise ConfigError(f"top_down_merge: no 3x3 convolution for level {i}")
        outputs[i] = conv2d(merged[i], params.post_convs[i])
        prev = i
    return outputs


def sce_forward(c5: Tensor, params: NeckParams) -> Tensor:
    """Context map from C5: three pathways, each emitting (n, c, 2*h5, 2*w5).

    1. 3x3 convolution 8c -> 4c, then 2x pixel shuffle (large-field local);
    2. 3x3 max pool to half extent, 1x1 convolution 8c -> 16c, then 4x
       pixel shuffle (wider receptive field);
    3. global average pool, 1x1 squeeze 8c -> c, broadcast (global context).
    """
    c = params.sce_squeeze.out_channels
    if c5.shape[1] != 8 * c:
        raise ConfigError(f"sce: C5 has {c5.shape[1]} channels, expected 8c = {8 * c}")
    n, _, h5, w5 = c5.shape
    if h5 % 2 != 0 or w5 % 2 != 0:
        raise ShapeError(f"sce: C5 extent {h5}x{w5} must be even")
    local = pixel_shuffle(conv2d(c5, params.sce_local), 2)
    pooled = max_pool2d(c5, kernel=3, stride=2, padding=1)
    wide = pixel_shuffle(conv2d(pooled, params.sce_wide), 4)
    squeezed = conv2d(global_avg_pool(c5), params.sce_squeeze)
    ctx = broadcast_spatial(squeezed, 2 * h5, 2 * w5)
    return add(add(local, wide), ctx)


def build_integration_map(p2: Tensor, p3: Tensor, p4: Tensor, sce_out: Tensor) -> Tensor:
    """Average the pyramid at stride-16 resolution and add the context map.

    P2 and P3 are brought to P4's extent by 4x and 2x max pooling; coarser
    levels do not exist, so no interpolation branch is needed.
    """
    down2 = max_pool2d(p2, kernel=4, stride=4)
    down3 = max_pool2d(p3, kernel=2, stride=2)
    if down2.shape != p4.shape or down3.shape != p4.shape:
        raise ShapeError(
            f"integration: resized extents {down2.shape[2:]}, {down3.shape[2:]} "
            f"do not match P4 {p4.shape[2:]}")
    if sce_out.shape != p4.shape:
        raise ShapeError(
            f"integration: context map shape {sce_out.shape} does not match P4 {p4.shape}")
    mean = scale(add(add(down2, down3), p4), 1.0 / 3.0)
    return add(mean, sce_out)


def cag_weights(integration: Tensor, params: NeckParams) -> Tensor:
    """Per-channel attention weights from the integration map.

    sigmoid(fc1(avg pool) + fc2(max pool)) where fc1 and fc2 are independent
    two-layer bottlenecks c -> c/r -> c with a rectifier in between. Returns
    (n, c); every entry lies strictly inside (0, 1).
    """
    c = params.cag_fc1_squeeze.in_features
    if integration.shape[1] != c:
        raise ConfigError(
            f"cag: integration map has {integration.shape[1]} channels, "
            f"attention layers expect {c}")
    avg = squeeze_spatial(global_avg_pool(integration))
    mx = squeeze_spatial(global_max_pool(integration))
    v1 = linear(relu(linear(avg, params.cag_fc1_squeeze)), params.cag_fc1_expand)
    v2 = linear(relu(linear(mx, params.cag_fc2_squeeze)), params.cag_fc2_expand)
    return sigmoid(add(v1, v2))


def cag_apply(pyramid_level: Tensor, weights: Tensor) -> Tensor:
    """Scale every channel of one pyramid level by the shared weight vector."""
    return mul_channelwise(pyramid_level, weights)


@contextmanager
def _at(stage: str):
    try:
        yield
    except (ShapeError, ConfigError) as e:
        raise type(e)(f"{stage}: {e}") from e


def _check_params(backbone: BackbonePyramid, params: NeckParams, config: NeckConfig) -> None:
    c = config.base_channel
    if backbone.base_channel != c:
        raise ConfigError(
            f"backbone base channel {backbone.base_channel} != configured {c}")
    for i in config.levels:
        if i not in params.laterals:
            raise ConfigError(f"missing lateral convolution for level {i}")
        if i not in params.post_convs:
            raise ConfigError(f"missing post-merge convolution for level {i}")
    if config.ssf_scheme == "a" and params.ssf_reduce is None:
        raise ConfigError("ssf scheme a selected but no reduction layer allocated")


def cefpn_forward(backbone: BackbonePyramid, params: NeckParams,
                  config: NeckConfig) -> PyramidOutputs:
    """Full neck: laterals, skip fusion, top-down merge, context, attention.

    R5 comes from P5 when F5/P5 are kept, otherwise from a parameter-free
    stride-2 subsample of P4 (kernel-1 max pool).
    """
    _check_params(backbone, params, config)
    feats: dict[int, Tensor] = {}
    with _at("level F2"):
        feats[2] = conv2d(backbone.c2, params.laterals[2])
    with _at("level F3"):
        f3 = conv2d(backbone.c3, params.laterals[3])
        feats[3] = ssf_fuse(backbone.c4, f3, config.ssf_scheme, params)
    with _at("level F4"):
        f4 = conv2d(backbone.c4, params.laterals[4])
        feats[4] = ssf_fuse(backbone.c5, f4, config.ssf_scheme, params)
    if config.include_f5_p5:
        with _at("level F5"):
            feats[5] = conv2d(backbone.c5, params.laterals[5])
    with _at("top-down merge"):
        pyramid = top_down_merge(feats, params)
    with _at("context enhancement"):
        context = sce_forward(backbone.c5, params)
    with _at("integration map"):
        integration = build_integration_map(pyramid[2], pyramid[3], pyramid[4], context)
    with _at("attention weights"):
        weights = cag_weights(integration, params)
    with _at("level R5"):
        if config.include_f5_p5:
            top = pyramid[5]
        else:
            top = max_pool2d(pyramid[4], kernel=1, stride=2)
        r5 = cag_apply(top, weights)
    return PyramidOutputs(
        r2=cag_apply(pyramid[2], weights),
        r3=cag_apply(pyramid[3], weights),
        r4=cag_apply(pyramid[4], weights),
        r5=r5,
    )
