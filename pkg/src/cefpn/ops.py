"""Convolution, pooling, interpolation, and fully connected layers.

Output extents follow floor((extent + 2*padding - kernel) / stride) + 1.
All layers carry bias by default with a per-layer disable flag. Backward
passes route max-pool gradients to the first maximal element in row-major
window scan order on exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, _record

NEG_INF = -np.inf


def _out_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> Tensor:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameter tensor."""
    bound = 1.0 / np.sqrt(fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


@dataclass
class ConvSpec:
    """A 2-d convolution layer: weights (out, in, k, k) plus optional bias."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    weight: Tensor
    bias: Tensor | None
    bias_enabled: bool

    def __post_init__(self):
        if self.kernel not in (1, 3):
            raise ConfigError(f"conv kernel must be 1 or 3, got {self.kernel}")
        if self.stride < 1:
            raise ConfigError(f"conv stride must be >= 1, got {self.stride}")
        expect = (self.out_channels, self.in_channels, self.kernel, self.kernel)
        if self.weight.shape != expect:
            raise ConfigError(f"conv weight shape {self.weight.shape} != {expect}")
        if self.bias_enabled and (self.bias is None or self.bias.shape != (self.out_channels,)):
            raise ConfigError("conv bias must be a vector of length out_channels")

    @classmethod
    def seeded(cls, rng: np.random.Generator, in_channels: int, out_channels: int,
               kernel: int, stride: int = 1, padding: int | None = None,
               bias: bool = True, dtype=np.float64) -> "ConvSpec":
        if padding is None:
            padding = (kernel - 1) // 2
        fan_in = in_channels * kernel * kernel
        weight = uniform_init(rng, (out_channels, in_channels, kernel, kernel), fan_in, dtype)
        b = uniform_init(rng, (out_channels,), fan_in, dtype) if bias else None
        return cls(in_channels, out_channels, kernel, stride, padding, weight, b, bias)

    @property
    def param_count(self) -> int:
        n = self.out_channels * self.in_channels * self.kernel * self.kernel
        return n + (self.out_channels if self.bias_enabled else 0)

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias_enabled else [])


@dataclass
class LinearSpec:
    """A fully connected layer: weights (out, in) plus optional bias."""

    in_features: int
    out_features: int
    weight: Tensor
    bias: Tensor | None
    bias_enabled: bool

    def __post_init__(self):
        if self.weight.shape != (self.out_features, self.in_features):
            raise ConfigError(
                f"linear weight shape {self.weight.shape} != {(self.out_features, self.in_features)}")
        if self.bias_enabled and (self.bias is None or self.bias.shape != (self.out_features,)):
            raise ConfigError("linear bias must be a vector of length out_features")

    @classmethod
    def seeded(cls, rng: np.random.Generator, in_features: int, out_features: int,
               bias: bool = True, dtype=np.float64) -> "LinearSpec":
        weight = uniform_init(rng, (out_features, in_features), in_features, dtype)
        b = uniform_init(rng, (out_features,), in_features, dtype) if bias else None
        return cls(in_features, out_features, weight, b, bias)

    @property
    def param_count(self) -> int:
        n = self.out_features * self.in_features
        return n + (self.out_features if self.bias_enabled else 0)

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias_enabled else [])


def _gather_windows(padded: np.ndarray, kernel: int, stride: int,
                    oh: int, ow: int) -> np.ndarray:
    """(n, c, H, W) padded input -> (n, c, k, k, oh, ow) window stack."""
    n, c = padded.shape[0], padded.shape[1]
    cols = np.empty((n, c, kernel, kernel, oh, ow), dtype=padded.dtype)
    for ky in range(kernel):
        for kx in range(kernel):
            cols[:, :, ky, kx] = padded[:, :, ky:ky + stride * oh:stride,
                                        kx:kx + stride * ow:stride]
    return cols


def conv2d(x: Tensor, spec: ConvSpec) -> Tensor:
    """Zero-padded 2-d convolution of an (n, c, h, w) tensor."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ConfigError(
            f"conv2d: input has {c} channels but the layer expects {spec.in_channels}")
    if h < 1 or w < 1:
        raise ShapeError(f"conv2d: spatial extents must be >= 1, got {h}x{w}")
    k, s, p = spec.kernel, spec.stride, spec.padding
    oh, ow = _out_extent(h, k, s, p), _out_extent(w, k, s, p)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: window {k}x{k} does not fit {h}x{w} input with padding {p}")

    weight, bias = spec.weight, spec.bias
    parents = (x, weight) + ((bias,) if spec.bias_enabled else ())

    def forward(xd: np.ndarray, wd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        padded = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = _gather_windows(padded, k, s, oh, ow)
        out = np.tensordot(cols, wd, axes=([1, 2, 3], [1, 2, 3]))  # (n, oh, ow, out)
        out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
        if spec.bias_enabled:
            out = out + bias.data.reshape(1, -1, 1, 1)
        return out, cols

    out_data, cols = forward(x.data, weight.data)

    def grad_fn(g: np.ndarray):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))  # (out, in, k, k)
        gpad = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=g.dtype)
        for ky in range(k):
            for kx in range(k):
                contrib = np.tensordot(g, weight.data[:, :, ky, kx], axes=([1], [0]))
                gpad[:, :, ky:ky + s * oh:s, kx:kx + s * ow:s] += contrib.transpose(0, 3, 1, 2)
        gx = gpad[:, :, p:p + h, p:p + w] if p else gpad
        grads = [np.ascontiguousarray(gx), gw]
        if spec.bias_enabled:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _record("conv2d", out_data, parents, grad_fn,
                   lambda: forward(x.data, weight.data)[0])


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Per-window maximum; padding positions hold -inf and are never selected."""
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2d: input must be 4-d, got shape {x.shape}")
    if kernel < 1 or stride < 1:
        raise ConfigError(f"max_pool2d: kernel and stride must be >= 1, got {kernel}, {stride}")
    n, c, h, w = x.shape
    oh, ow = _out_extent(h, kernel, stride, padding), _out_extent(w, kernel, stride, padding)
    if h + 2 * padding < kernel or w + 2 * padding < kernel or oh < 1 or ow < 1:
        raise ShapeError(
            f"max_pool2d: window {kernel}x{kernel} larger than padded input {h + 2 * padding}x{w + 2 * padding}")

    def forward(xd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        padded = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                        constant_values=NEG_INF)
        cols = _gather_windows(padded, kernel, stride, oh, ow)
        flat = cols.reshape(n, c, kernel * kernel, oh, ow)
        idx = flat.argmax(axis=2)  # first max in (ky, kx) scan order
        return flat.max(axis=2), idx

    out_data, idx = forward(x.data)

    def grad_fn(g: np.ndarray):
        gpad = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
        ni, ci, oy, ox = np.indices(idx.shape)
        iy = idx // kernel + oy * stride
        ix = idx % kernel + ox * stride
        np.add.at(gpad, (ni, ci, iy, ix), g)
        if padding:
            gpad = gpad[:, :, padding:padding + h, padding:padding + w]
        return (np.ascontiguousarray(gpad),)

    return _record("max_pool2d", out_data, (x,), grad_fn, lambda: forward(x.data)[0])


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over all spatial positions: (n, c, h, w) -> (n, c, 1, 1)."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    if h * w < 1:
        raise ShapeError(f"global_avg_pool: empty spatial extent {h}x{w}")

    def kernel():
        return x.data.mean(axis=(2, 3), keepdims=True)

    def grad_fn(g):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return _record("global_avg_pool", kernel(), (x,), grad_fn, kernel)


def global_max_pool(x: Tensor) -> Tensor:
    """Maximum over all spatial positions: (n, c, h, w) -> (n, c, 1, 1)."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_max_pool: input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    if h * w < 1:
        raise ShapeError(f"global_max_pool: empty spatial extent {h}x{w}")

    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)

    def grad_fn(g):
        gx = np.zeros((n, c, h * w), dtype=g.dtype)
        ni, ci = np.indices(idx.shape)
        gx[ni, ci, idx] = g.reshape(n, c)
        return (gx.reshape(x.shape),)

    def kernel():
        return x.data.max(axis=(2, 3), keepdims=True)

    return _record("global_max_pool", kernel(), (x,), grad_fn, kernel)


def interpolate_nearest(x: Tensor, scale: int) -> Tensor:
    """Nearest-neighbour upsampling: output(y, x) = input(y // scale, x // scale)."""
    if x.data.ndim != 4:
        raise ShapeError(f"interpolate_nearest: input must be 4-d, got shape {x.shape}")
    if not isinstance(scale, int) or scale < 1:
        raise ConfigError(f"interpolate_nearest: scale must be a positive integer, got {scale}")
    n, c, h, w = x.shape

    def kernel():
        return np.repeat(np.repeat(x.data, scale, axis=2), scale, axis=3)

    def grad_fn(g):
        return (g.reshape(n, c, h, scale, w, scale).sum(axis=(3, 5)),)

    return _record("interpolate_nearest", kernel(), (x,), grad_fn, kernel)


def linear(x: Tensor, spec: LinearSpec) -> Tensor:
    """y = W x + b for a vector (in,) or a batch of vectors (n, in)."""
    if x.data.ndim not in (1, 2):
        raise ShapeError(f"linear: input must be a vector or batch of vectors, got shape {x.shape}")
    if x.shape[-1] != spec.in_features:
        raise ConfigError(
            f"linear: input length {x.shape[-1]} but the layer expects {spec.in_features}")

    weight, bias = spec.weight, spec.bias
    parents = (x, weight) + ((bias,) if spec.bias_enabled else ())

    def kernel():
        out = x.data @ weight.data.T
        if spec.bias_enabled:
            out = out + bias.data
        return out

    def grad_fn(g):
        gx = g @ weight.data
        if x.data.ndim == 1:
            gw = np.outer(g, x.data)
            gb = g.copy()
        else:
            gw = g.T @ x.data
            gb = g.sum(axis=0)
        grads = [gx, gw]
        if spec.bias_enabled:
            grads.append(gb)
        return tuple(grads)

    return _record("linear", kernel(), parents, grad_fn, kernel)
