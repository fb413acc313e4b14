"""Suite runners behind the command-line harness.

Every suite consumes a ``RunConfig`` and emits one report as both a
machine-readable dict (rendered to JSON with sorted keys) and a plain-text
table. Reports carry the seed and a full config echo and contain nothing
time- or path-dependent, so identical configs give byte-identical output.
"""

from __future__ import annotations

import json

from dataclasses import asdict, dataclass, fields


from .backbone import PATTERNS, synthetic_backbone
from .cost import MAC_CONVENTIONS, cefpn_report, compare_to_baseline, fpn_baseline_report, \
    variant_report
from .errors import ConfigError
from .gradcheck import DEFAULT_THRESHOLD, end_to_end_gradcheck, linear_only_error, \
    op_gradient_suite
from .neck import NeckConfig, cefpn_forward, init_neck_params
from .tensor import DTYPES

SUITES = ("forward", "gradcheck", "cost", "all")

COST_VARIANTS = ("ssf_a", "ssf_b", "ssf_c", "sce", "cag")


@dataclass(frozen=True)
class RunConfig:
    """One harness run: seed, neck hyperparameters, geometry, suite choice.

    Defaults are the desk-scale setup (width 16, 64x64 input) that every
    check can afford; pass base_channel=256 and attention_reduction=32 for
    reference-scale cost accounting.
    """

    seed: int = 0
    base_channel: int = 16
    ssf_scheme: str = "c"
    attention_reduction: int = 4
    include_f5_p5: bool = False
    height: int = 64
    width: int = 64
    batch: int = 1
    suite: str = "all"
    mac_convention: int = 2
    precision: str = "float64"
    backbone_pattern: str = "noise"

    def __post_init__(self):
        if self.height % 32 != 0 or self.width % 32 != 0:
            raise ConfigError(f"geometry {self.height}x{self.width} must be divisible by 32")
        if self.height < 32 or self.width < 32:
            raise ConfigError(f"geometry {self.height}x{self.width} is smaller than one stride-32 cell")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.suite not in SUITES:
            raise ConfigError(f"suite must be one of {SUITES}, got {self.suite!r}")
        if self.mac_convention not in MAC_CONVENTIONS:
            raise ConfigError(f"mac convention must be 1 or 2, got {self.mac_convention}")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be one of {tuple(DTYPES)}, got {self.precision!r}")
        if self.backbone_pattern not in PATTERNS:
            raise ConfigError(f"backbone pattern must be one of {PATTERNS}, got {self.backbone_pattern!r}")
        self.neck_config()  # validates width/scheme/reduction combinations

    def neck_config(self) -> NeckConfig:
        return NeckConfig(
            base_channel=self.base_channel,
            ssf_scheme=self.ssf_scheme,
            attention_reduction=self.attention_reduction,
            include_f5_p5=self.include_f5_p5,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    passed: bool
    document: dict
    text: str

    def to_json(self) -> str:
        return json.dumps(self.document, sort_keys=True, indent=2) + "\n"


def _level_stats(t) -> dict:
    d = t.data
    return {
        "shape": list(d.shape),
        "min": float(d.min()),
        "max": float(d.max()),
        "mean": float(d.mean()),
    }


def run_forward(config: RunConfig) -> SuiteReport:
    """One forward pass over a synthetic pyramid; reports shapes and stats."""
    dtype = DTYPES[config.precision]
    neck = config.neck_config()
    params = init_neck_params(neck, config.seed, dtype=dtype)
    pyramid = synthetic_backbone(config.base_channel, config.height, config.width,
                                 config.batch, seed=config.seed + 1,
                                 pattern=config.backbone_pattern, dtype=dtype)
    outputs = cefpn_forward(pyramid, params, neck)
    levels = {f"R{i}": _level_stats(t) for i, t in sorted(outputs.levels().items())}
    document = {
        "suite": "forward",
        "seed": config.seed,
        "config": config.to_dict(),
        "strides": [4, 8, 16, 32],
        "levels": levels,
    }
    lines = [f"forward pass  (seed {config.seed}, width {config.base_channel}, "
             f"scheme {config.ssf_scheme}, {config.height}x{config.width})",
             f"{'level':<6} {'shape':<22} {'min':>14} {'max':>14} {'mean':>14}"]
    for name, st in levels.items():
        shape = "x".join(str(v) for v in st["shape"])
        lines.append(f"{name:<6} {shape:<22} {st['min']:>14.6g} {st['max']:>14.6g} {st['mean']:>14.6g}")
    return SuiteReport("forward", True, document, "\n".join(lines) + "\n")


def run_gradcheck(config: RunConfig, corrupt_op: str | None = None) -> SuiteReport:
    """Finite-difference suite: every engine op plus the end-to-end neck."""
    if config.precision != "float64":
        raise ConfigError("gradcheck requires float64 precision; rerun with precision=float64")
    per_op = op_gradient_suite(seed=config.seed, corrupt_op=corrupt_op)
    per_op["linear_exact"] = linear_only_error(seed=config.seed)
    e2e = end_to_end_gradcheck(config.neck_config(), config.height, config.width,
                               config.batch, seed=config.seed)
    worst_op = max(per_op.values())
    passed = worst_op < DEFAULT_THRESHOLD and e2e.max_rel_error < DEFAULT_THRESHOLD
    document = {
        "suite": "gradcheck",
        "seed": config.seed,
        "config": config.to_dict(),
        "threshold": DEFAULT_THRESHOLD,
        "ops": {k: per_op[k] for k in sorted(per_op)},
        "end_to_end": {
            "max_rel_error": e2e.max_rel_error,
            "parameters_checked": e2e.parameters_checked,
            "parameter_total": e2e.parameter_total,
        },
        "passed": passed,
    }
    lines = [f"gradient check  (seed {config.seed}, threshold {DEFAULT_THRESHOLD:g})",
             f"{'op':<24} {'max rel error':>14}"]
    for name in sorted(per_op):
        lines.append(f"{name:<24} {per_op[name]:>14.3e}")
    lines.append(f"{'end_to_end':<24} {e2e.max_rel_error:>14.3e}  "
                 f"({e2e.parameters_checked}/{e2e.parameter_total} parameters)")
    lines.append("result: " + ("PASS" if passed else "FAIL"))
    return SuiteReport("gradcheck", passed, document, "\n".join(lines) + "\n")


def run_cost(config: RunConfig) -> SuiteReport:
    """Cost reports for the baseline, each single-mechanism variant, and the
    full neck, plus deltas against the baseline."""
    neck = config.neck_config()
    geometry = (config.height, config.width)
    mac = config.mac_convention
    baseline = fpn_baseline_report(config.base_channel, geometry, mac)
    reports = [baseline]
    for variant in COST_VARIANTS:
        reports.append(variant_report(variant, config.base_channel, geometry, mac,
                                      attention_reduction=config.attention_reduction))
    reports.append(cefpn_report(neck, geometry, mac))
    deltas = [compare_to_baseline(r, baseline) for r in reports[1:]]
    document = {
        "suite": "cost",
        "seed": config.seed,
        "config": config.to_dict(),
        "reports": {r.name: r.to_dict() for r in reports},
        "deltas": {d.name: d.to_dict() for d in deltas},
    }
    text = "".join(r.to_text() + "\n" for r in reports) + "".join(d.to_text() for d in deltas)
    return SuiteReport("cost", True, document, text)


def run_suites(config: RunConfig, corrupt_op: str | None = None) -> list[SuiteReport]:
    """The suites selected by ``config.suite``, in a fixed order."""
    wanted = ("forward", "gradcheck", "cost") if config.suite == "all" else (config.suite,)
    out = []
    for name in wanted:
        if name == "forward":
            out.append(run_forward(config))
        elif name == "gradcheck":
            out.append(run_gradcheck(config, corrupt_op=corrupt_op))
        else:
            out.append(run_cost(config))
    return out
