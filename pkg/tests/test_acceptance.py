"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line with its measured margin and runtime.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np

from cefpn import NeckConfig, Tensor, add, cag_weights, cefpn_forward, cefpn_report, \
    compare_to_baseline, conv2d, fpn_baseline_report, global_avg_pool, global_max_pool, \
    init_neck_params, linear, max_pool2d, pixel_shuffle, pixel_unshuffle, sce_forward, \
    ssf_fuse, synthetic_backbone, variant_report
from cefpn.cli import main
from cefpn.cost import KIND_MAC
from cefpn.gradcheck import end_to_end_gradcheck, op_gradient_suite
from cefpn.neck import build_integration_map
from cefpn.tensor import broadcast_spatial, channel_slice, relu, scale, sigmoid, \
    squeeze_spatial
from oracles import pixel_shuffle_index_map

DESK = NeckConfig(base_channel=16, attention_reduction=4)
REFERENCE = NeckConfig(base_channel=256, attention_reduction=32)
GEOM = (64, 64)


class _Timer:
    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.start


def _report(criterion, ok, detail, elapsed):
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail} "
          f"[{elapsed:.2f}s]")
    assert ok, detail


def test_criterion_1_pixel_shuffle_index_map_oracle():
    """500 random tensors over (r, C) in {1,2,4}^2 equal the brute-force
    index-map oracle element for element."""
    rng = np.random.default_rng(101)
    combos = [(r, cq) for r in (1, 2, 4) for cq in (1, 2, 4)]
    with _Timer() as t:
        for case in range(500):
            r, cq = combos[case % len(combos)]
            n = int(rng.integers(1, 3))
            h = int(rng.integers(1, 5))
            w = int(rng.integers(1, 5))
            x = Tensor(rng.uniform(-1, 1, (n, cq * r * r, h, w)))
            got = pixel_shuffle(x, r).data
            expect = pixel_shuffle_index_map(x.data, r)
            assert np.array_equal(got, expect), (r, cq, n, h, w)
    _report(1, t.elapsed < 10.0, f"500/500 tensors exact, runtime {t.elapsed:.2f}s < 10s",
            t.elapsed)


def test_criterion_2_round_trip_bit_exact():
    """unshuffle(shuffle(x)) is the bit-exact identity on 500 random tensors."""
    rng = np.random.default_rng(202)
    with _Timer() as t:
        for case in range(500):
            r = int(rng.choice([1, 2, 3, 4]))
            cq = int(rng.integers(1, 5))
            n = int(rng.integers(1, 3))
            h = int(rng.integers(1, 5))
            w = int(rng.integers(1, 5))
            x = Tensor(rng.uniform(-1, 1, (n, cq * r * r, h, w)))
            back = pixel_unshuffle(pixel_shuffle(x, r), r)
            assert np.array_equal(back.data, x.data), (r, cq, n, h, w)
    _report(2, t.elapsed < 10.0, f"500/500 round trips bit-identical, "
            f"runtime {t.elapsed:.2f}s < 10s", t.elapsed)


def test_criterion_3_gradient_suite():
    """Every engine op and the end-to-end desk-scale neck pass central
    finite differences below 1e-4, with >= 200 parameters sampled."""
    with _Timer() as t:
        per_op = op_gradient_suite(seed=0)
        e2e = end_to_end_gradcheck(DESK, 64, 64, seed=0, samples=200)
    worst_op = max(per_op.values())
    ok = worst_op < 1e-4 and e2e.max_rel_error < 1e-4 \
        and e2e.parameters_checked >= 200 and t.elapsed < 300.0
    _report(3, ok, f"worst op error {worst_op:.2e}, end-to-end "
            f"{e2e.max_rel_error:.2e} over {e2e.parameters_checked} parameters, "
            f"runtime {t.elapsed:.1f}s < 300s", t.elapsed)


def test_criterion_4_reference_parameter_deltas():
    """Width-256 parameter deltas against the plain pyramid baseline:
    scheme c exactly 0; scheme a 2.10M +/- 0.01M; attention <= 0.02M and
    exactly its analytic sum; full neck within 5% of 27.28M."""
    with _Timer() as t:
        base = fpn_baseline_report(256, GEOM)
        d_c = compare_to_baseline(variant_report("ssf_c", 256, GEOM), base).params_delta
        d_a = compare_to_baseline(variant_report("ssf_a", 256, GEOM), base).params_delta
        d_cag = compare_to_baseline(variant_report("cag", 256, GEOM), base).params_delta
        d_full = compare_to_baseline(cefpn_report(REFERENCE, GEOM), base).params_delta
    analytic_cag = 2 * (256 * 8 + 8) + 2 * (8 * 256 + 256)
    full_rel = abs(d_full - 27.28e6) / 27.28e6
    ok = (d_c == 0 and abs(d_a - 2.10e6) <= 0.01e6
          and d_cag <= 0.02e6 and d_cag == analytic_cag
          and full_rel < 0.05 and t.elapsed < 5.0)
    _report(4, ok, f"scheme c {d_c:+d}; scheme a {d_a:+d} (|{d_a} - 2.10M| <= 0.01M); "
            f"attention {d_cag:+d} == {analytic_cag}; full {d_full:+d} "
            f"({100 * full_rel:.2f}% of 27.28M)", t.elapsed)


def test_criterion_5_flop_properties():
    """Scheme c adds zero FLOPs under either multiply-accumulate convention;
    switching the convention scales every MAC entry by exactly 2."""
    with _Timer() as t:
        zero_both = all(
            compare_to_baseline(
                variant_report("ssf_c", 256, GEOM, mac_convention=mac),
                fpn_baseline_report(256, GEOM, mac_convention=mac)).flops_delta == 0
            for mac in (1, 2))
        one = cefpn_report(REFERENCE, GEOM, mac_convention=1)
        two = cefpn_report(REFERENCE, GEOM, mac_convention=2)
        scaled = all(
            (e2.flops == 2 * e1.flops) if e1.kind == KIND_MAC else (e2.flops == e1.flops)
            for e1, e2 in zip(one.entries, two.entries))
    ok = zero_both and scaled and t.elapsed < 5.0
    _report(5, ok, f"scheme-c flop delta 0 under mac=1 and mac=2; "
            f"mac switch scales {sum(e.kind == KIND_MAC for e in one.entries)} "
            f"conv/fc entries by exactly 2", t.elapsed)


def test_criterion_6_shape_stride_contract():
    """50 random valid geometries x rotating schemes: four output levels at
    strides {4, 8, 16, 32}, uniform width, and the context map exactly twice
    the C5 extent per dimension."""
    rng = np.random.default_rng(606)
    schemes = ("a", "b", "c")
    with _Timer() as t:
        for case in range(50):
            scheme = schemes[case % 3]
            config = NeckConfig(base_channel=16, ssf_scheme=scheme, attention_reduction=4)
            params = init_neck_params(config, seed=case)
            # valid geometries keep the C5 extent even: multiples of 64
            h = 64 * int(rng.integers(1, 4))
            w = 64 * int(rng.integers(1, 4))
            pyramid = synthetic_backbone(16, h, w, seed=case, pattern="noise")
            out = cefpn_forward(pyramid, params, config)
            for i, stride in zip((2, 3, 4, 5), (4, 8, 16, 32)):
                assert out.level(i).shape == (1, 16, h // stride, w // stride), (case, i)
            ctx = sce_forward(pyramid.c5, params)
            assert ctx.shape == (1, 16, 2 * pyramid.c5.shape[2], 2 * pyramid.c5.shape[3])
    _report(6, t.elapsed < 60.0, f"50/50 geometries hold strides {{4,8,16,32}}, "
            f"width 16, and the 2x context extent; runtime {t.elapsed:.1f}s < 60s",
            t.elapsed)


def test_criterion_7_composite_oracle_equivalence():
    """ssf_fuse, sce_forward, build_integration_map, and cag_weights each
    match an oracle recomposed from verified primitives on 100 random cases,
    abs tol 1e-12."""
    c = 8
    config = NeckConfig(base_channel=c, attention_reduction=4)
    tol = 1e-12

    def rnd(rng, shape):
        return Tensor(rng.uniform(-1, 1, shape))

    with _Timer() as t:
        for case in range(100):
            rng = np.random.default_rng(10_000 + case)
            params = init_neck_params(config, seed=case)
            scheme = "abc"[case % 3]
            h = 2 * int(rng.integers(1, 4))
            w = 2 * int(rng.integers(1, 4))

            c5 = rnd(rng, (1, 8 * c, h, w))
            f4 = rnd(rng, (1, c, 2 * h, 2 * w))
            if scheme == "a":
                params_a = init_neck_params(
                    NeckConfig(base_channel=c, ssf_scheme="a", attention_reduction=4),
                    seed=case)
                got = ssf_fuse(c5, f4, "a", params_a)
                expect = add(f4, pixel_shuffle(conv2d(c5, params_a.ssf_reduce), 2))
            elif scheme == "b":
                got = ssf_fuse(c5, f4, "b", params)
                expect = add(f4, pixel_shuffle(channel_slice(c5, 0, 4 * c), 2))
            else:
                got = ssf_fuse(c5, f4, "c", params)
                expect = add(add(f4, pixel_shuffle(channel_slice(c5, 0, 4 * c), 2)),
                             pixel_shuffle(channel_slice(c5, 4 * c, 8 * c), 2))
            assert np.allclose(got.data, expect.data, atol=tol), ("ssf", case)

            got = sce_forward(c5, params)
            local = pixel_shuffle(conv2d(c5, params.sce_local), 2)
            wide = pixel_shuffle(conv2d(max_pool2d(c5, 3, 2, 1), params.sce_wide), 4)
            ctx = broadcast_spatial(conv2d(global_avg_pool(c5), params.sce_squeeze),
                                    2 * h, 2 * w)
            expect = add(add(local, wide), ctx)
            assert np.allclose(got.data, expect.data, atol=tol), ("sce", case)

            p2 = rnd(rng, (1, c, 4 * h, 4 * w))
            p3 = rnd(rng, (1, c, 2 * h, 2 * w))
            p4 = rnd(rng, (1, c, h, w))
            s = rnd(rng, (1, c, h, w))
            got = build_integration_map(p2, p3, p4, s)
            mean = scale(add(add(max_pool2d(p2, 4, 4), max_pool2d(p3, 2, 2)), p4), 1 / 3)
            assert np.allclose(got.data, add(mean, s).data, atol=tol), ("integration", case)

            integ = rnd(rng, (1, c, h, w))
            got = cag_weights(integ, params)
            avg = squeeze_spatial(global_avg_pool(integ))
            mx = squeeze_spatial(global_max_pool(integ))
            v1 = linear(relu(linear(avg, params.cag_fc1_squeeze)), params.cag_fc1_expand)
            v2 = linear(relu(linear(mx, params.cag_fc2_squeeze)), params.cag_fc2_expand)
            assert np.allclose(got.data, sigmoid(add(v1, v2)).data, atol=tol), ("cag", case)
    _report(7, t.elapsed < 120.0, f"4 composites x 100 cases within 1e-12, "
            f"runtime {t.elapsed:.1f}s < 120s", t.elapsed)


def test_criterion_8_harness_determinism(tmp_path):
    """Two full harness runs with the same seed write byte-identical report
    documents for every suite."""
    with _Timer() as t:
        for d in ("one", "two"):
            code = main(["--suite", "all", "--seed", "13", "--out", str(tmp_path / d)])
            assert code == 0
        names = ["config.json", "forward_report.json", "forward_report.txt",
                 "gradcheck_report.json", "gradcheck_report.txt",
                 "cost_report.json", "cost_report.txt"]
        same = all((tmp_path / "one" / n).read_bytes() == (tmp_path / "two" / n).read_bytes()
                   for n in names)
    _report(8, same and t.elapsed < 60.0, f"{len(names)} report documents byte-identical "
            f"across two runs, runtime {t.elapsed:.1f}s < 60s", t.elapsed)
