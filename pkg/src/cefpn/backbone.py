"""Synthetic backbone pyramids for the harness and the test suites.

Stands in for a real feature extractor: given a notional image extent
divisible by 32, emits C2..C5 at strides {4, 8, 16, 32} with channels
{c, 2c, 4c, 8c}. Two generation rules:

* ``noise``  seeded uniform values in [-1, 1); same seed, same pyramid,
  bit for bit;
* ``ramp``   a fixed pattern independent of any seed, for regression
  fixtures: element at flat index k of level i holds (i - 2) + k / size.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .neck import BackbonePyramid
from .tensor import Tensor

PATTERNS = ("noise", "ramp")


def level_shapes(base_channel: int, height: int, width: int,
                 batch: int = 1) -> dict[int, tuple[int, int, int, int]]:
    """Backbone map shapes per level for a notional image extent."""
    if height % 32 != 0 or width % 32 != 0:
        raise ConfigError(f"image extent {height}x{width} must be divisible by 32")
    if height < 32 or width < 32 or batch < 1:
        raise ConfigError(f"image extent {height}x{width} (batch {batch}) too small")
    return {i: (batch, base_channel * (1 << (i - 2)), height >> i, width >> i)
            for i in (2, 3, 4, 5)}


def ramp_level(shape: tuple[int, int, int, int], level: int, dtype=np.float64) -> np.ndarray:
    """The deterministic ramp for one level, recomputable by any script."""
    size = int(np.prod(shape))
    return ((level - 2) + np.arange(size, dtype=dtype) / size).reshape(shape)


def synthetic_backbone(base_channel: int, height: int, width: int, batch: int = 1,
                       seed: int = 0, pattern: str = "noise",
                       dtype=np.float64) -> BackbonePyramid:
    """Generate a backbone pyramid; levels are drawn in C2..C5 order."""
    if pattern not in PATTERNS:
        raise ConfigError(f"backbone pattern must be one of {PATTERNS}, got {pattern!r}")
    shapes = level_shapes(base_channel, height, width, batch)
    rng = np.random.default_rng(seed)
    maps = {}
    for i in (2, 3, 4, 5):
        if pattern == "noise":
            data = rng.uniform(-1.0, 1.0, size=shapes[i]).astype(dtype)
        else:
            data = ramp_level(shapes[i], i, dtype)
        maps[i] = Tensor(data)
    return BackbonePyramid(c2=maps[2], c3=maps[3], c4=maps[4], c5=maps[5])
