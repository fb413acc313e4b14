"""Central finite-difference verification of every analytic gradient.

The numeric side never touches the backward implementations: it re-runs the
forward pass with one scalar nudged by +/-h and differences the losses.
Double precision is required; with h = 1e-6 the truncation and roundoff
floors sit far below the 1e-4 acceptance threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backbone import synthetic_backbone
from .errors import ConfigError
from .neck import NeckConfig, cefpn_forward, init_neck_params, pixel_shuffle, pixel_unshuffle
from .ops import ConvSpec, LinearSpec, conv2d, global_avg_pool, global_max_pool, \
    interpolate_nearest, linear, max_pool2d
from .tensor import GradTape, Tensor, add, backward, broadcast_spatial, channel_slice, \
    mul, mul_channelwise, relu, scale, sigmoid, squeeze_spatial, sum_all

DEFAULT_STEP = 1e-6
DEFAULT_THRESHOLD = 1e-4
_REL_FLOOR = 1e-6

# Central differences carry absolute roundoff of roughly ulp(loss) / step
# (~1e-10 * |loss| at the default step). Gradient components below that
# cannot be resolved relatively, so the error denominator is floored at
# 1e-4 * |loss|: two orders above the noise, while a missing or mis-scaled
# gradient of any component larger than ~1e-7 * |loss| still lands far
# beyond the 1e-4 threshold.
_NOISE_FLOOR_COEFF = 1e-4


def relative_error(analytic: float, numeric: float, floor: float = _REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def central_difference(loss_fn: Callable[[], float], leaf: Tensor,
                       flat_index: int, step: float = DEFAULT_STEP) -> float:
    """d loss / d leaf[flat_index] by re-running the forward twice.

    Temporarily unfreezes the leaf buffer; the perturbation is always undone.
    """
    buf = leaf.data
    buf.flags.writeable = True
    original = buf.flat[flat_index]
    try:
        buf.flat[flat_index] = original + step
        plus = loss_fn()
        buf.flat[flat_index] = original - step
        minus = loss_fn()
    finally:
        buf.flat[flat_index] = original
        buf.flags.writeable = False
    return (plus - minus) / (2.0 * step)


def check_loss_gradients(loss_fn: Callable[[], Tensor], leaves: list[Tensor],
                         samples: int | None = None, rng: np.random.Generator | None = None,
                         step: float = DEFAULT_STEP, analytic_scale: float = 1.0) -> float:
    """Max relative error between analytic and numeric gradients.

    ``loss_fn`` must rebuild the graph from the given leaf tensors on every
    call. When ``samples`` is given, that many scalar coordinates are drawn
    without replacement across all leaves; otherwise every coordinate is
    checked. ``analytic_scale`` exists for negative-control fixtures.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise ConfigError("gradient checking requires float64 tensors")
    loss = loss_fn()
    backward(loss)
    floor = max(_REL_FLOOR, _NOISE_FLOOR_COEFF * abs(loss.item()))
    sizes = [leaf.size for leaf in leaves]
    total = sum(sizes)
    if samples is None or samples >= total:
        picks = np.arange(total)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        picks = rng.choice(total, size=samples, replace=False)
        picks.sort()
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in picks:
        which = int(np.searchsorted(bounds, flat, side="right") - 1)
        leaf = leaves[which]
        idx = int(flat - bounds[which])
        analytic = 0.0 if leaf.grad is None else float(leaf.grad.flat[idx])
        analytic *= analytic_scale
        numeric = central_difference(lambda: loss_fn().item(), leaf, idx, step)
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst


def _distinct(rng: np.random.Generator, shape: tuple[int, ...],
              low: float = -1.0, high: float = 1.0) -> Tensor:
    """Random tensor whose values are pairwise separated and bounded away
    from zero, so max/relu gradients are well defined under perturbation."""
    size = int(np.prod(shape))
    grid = np.linspace(low, high, 2 * size + 1)[1::2]  # excludes 0 and endpoints
    vals = rng.permutation(grid)[:size]
    return Tensor(vals.reshape(shape), requires_grad=True)


def _probe(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.uniform(0.5, 1.5, size=shape))


def op_gradient_suite(seed: int = 0, step: float = DEFAULT_STEP,
                      corrupt_op: str | None = None) -> dict[str, float]:
    """Finite-difference check for each engine operation in isolation.

    Returns the worst relative error per op name. Losses project outputs
    against a fixed random probe so transposition mistakes cannot cancel.
    """
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    def run(name: str, leaves: list[Tensor], out_fn: Callable[[], Tensor]) -> None:
        probe = _probe(rng, out_fn().shape)
        loss_fn = lambda: sum_all(mul(out_fn(), probe))
        scale_factor = 1.5 if name == corrupt_op else 1.0
        results[name] = check_loss_gradients(loss_fn, leaves, step=step,
                                             analytic_scale=scale_factor)

    x = _distinct(rng, (1, 3, 5, 5))
    spec1 = ConvSpec.seeded(rng, 3, 4, 1)
    run("conv2d_1x1", [x, spec1.weight, spec1.bias], lambda: conv2d(x, spec1))

    x2 = _distinct(rng, (1, 3, 6, 6))
    spec3 = ConvSpec.seeded(rng, 3, 2, 3)
    run("conv2d_3x3", [x2, spec3.weight, spec3.bias], lambda: conv2d(x2, spec3))

    spec3s = ConvSpec.seeded(rng, 3, 2, 3, stride=2)
    run("conv2d_3x3_stride2", [x2, spec3s.weight, spec3s.bias], lambda: conv2d(x2, spec3s))

    xp = _distinct(rng, (1, 2, 6, 6))
    run("max_pool2d", [xp], lambda: max_pool2d(xp, 3, 2, 1))

    xg = _distinct(rng, (1, 4, 4, 4))
    run("global_avg_pool", [xg], lambda: global_avg_pool(xg))
    run("global_max_pool", [xg], lambda: global_max_pool(xg))

    xi = _distinct(rng, (1, 2, 3, 3))
    run("interpolate_nearest", [xi], lambda: interpolate_nearest(xi, 2))

    xv = _distinct(rng, (2, 6))
    lin = LinearSpec.seeded(rng, 6, 4)
    run("linear", [xv, lin.weight, lin.bias], lambda: linear(xv, lin))

    xs = _distinct(rng, (1, 2, 4, 4))
    run("sigmoid", [xs], lambda: sigmoid(xs))
    run("relu", [xs], lambda: relu(xs))

    xa = _distinct(rng, (1, 2, 3, 3))
    xb = _distinct(rng, (1, 2, 3, 3))
    run("add", [xa, xb], lambda: add(xa, xb))
    run("mul", [xa, xb], lambda: mul(xa, xb))

    w = _distinct(rng, (2,))
    run("mul_channelwise", [xa, w], lambda: mul_channelwise(xa, w))
    run("scale", [xa], lambda: scale(xa, 0.773))

    xps = _distinct(rng, (1, 8, 2, 2))
    run("pixel_shuffle", [xps], lambda: pixel_shuffle(xps, 2))
    xpu = _distinct(rng, (1, 2, 4, 4))
    run("pixel_unshuffle", [xpu], lambda: pixel_unshuffle(xpu, 2))

    xc = _distinct(rng, (1, 6, 3, 3))
    run("channel_slice", [xc], lambda: channel_slice(xc, 1, 4))
    xbr = _distinct(rng, (1, 3, 1, 1))
    run("broadcast_spatial", [xbr], lambda: broadcast_spatial(xbr, 3, 4))
    run("squeeze_spatial", [xbr], lambda: squeeze_spatial(xbr))

    xsum = _distinct(rng, (1, 2, 3, 3))
    results["sum_all"] = check_loss_gradients(lambda: sum_all(xsum), [xsum], step=step)
    return results


def linear_only_error(seed: int = 0, step: float = DEFAULT_STEP) -> float:
    """Worst error for a lone fully connected layer; the map is exactly
    linear, so central differences are exact up to roundoff."""
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-1, 1, size=(8,)), requires_grad=True)
    spec = LinearSpec.seeded(rng, 8, 5)
    probe = _probe(rng, (5,))
    loss_fn = lambda: sum_all(mul(linear(x, spec), probe))
    return check_loss_gradients(loss_fn, [x, spec.weight, spec.bias], step=step)


@dataclass(frozen=True)
class EndToEndResult:
    max_rel_error: float
    parameters_checked: int
    parameter_total: int


def end_to_end_gradcheck(config: NeckConfig, height: int = 64, width: int = 64,
                         batch: int = 1, seed: int = 0, samples: int = 200,
                         step: float = DEFAULT_STEP) -> EndToEndResult:
    """Check d(sum of all output levels)/d(theta) for sampled parameters.

    The forward pass is rebuilt from the same parameter tensors on every
    evaluation, so each perturbation flows through the whole neck.
    """
    params = init_neck_params(config, seed)
    pyramid = synthetic_backbone(config.base_channel, height, width, batch,
                                 seed=seed + 1, pattern="noise")
    leaves = [t for _name, t in params.named_parameters()]
    total = sum(t.size for t in leaves)

    def loss_fn() -> Tensor:
        outs = cefpn_forward(pyramid, params, config)
        loss = sum_all(outs.r2)
        for t in (outs.r3, outs.r4, outs.r5):
            loss = add(loss, sum_all(t))
        return loss

    rng = np.random.default_rng(seed + 2)
    err = check_loss_gradients(loss_fn, leaves, samples=samples, rng=rng, step=step)
    return EndToEndResult(err, min(samples, total), total)


def tape_replay_matches(loss_fn: Callable[[], Tensor]) -> bool:
    """Replaying a recorded tape on identical inputs must be bit-identical."""
    loss = loss_fn()
    tape = GradTape(loss)
    before = loss.data.copy()
    after = tape.replay()
    return np.array_equal(before, after)
