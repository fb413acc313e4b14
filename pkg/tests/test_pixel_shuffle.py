"""Sub-pixel rearrangement against the brute-force index-map oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cefpn import ConfigError, ShapeError, Tensor, pixel_shuffle, pixel_unshuffle
from oracles import pixel_shuffle_index_map, pixel_unshuffle_index_map


def rand(shape, seed):
    return Tensor(np.random.default_rng(seed).uniform(-1, 1, shape))


class TestPixelShuffle:
    def test_unit_factor_is_identity(self):
        x = rand((2, 3, 4, 5), 0)
        assert np.array_equal(pixel_shuffle(x, 1).data, x.data)

    def test_shape_contract(self):
        out = pixel_shuffle(rand((1, 8, 2, 2), 1), 2)
        assert out.shape == (1, 2, 4, 4)

    def test_four_channel_pixel_layout(self):
        # 1x4x1x1 with channel values [a, b, c, d]; the index map places
        # channel C*r*(y%r) + C*(x%r) with C=1, r=2: (0,0)->a, (0,1)->b,
        # (1,0)->c, (1,1)->d in (y, x) order.
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        x = Tensor(np.array([a, b, c, d]).reshape(1, 4, 1, 1))
        expect = pixel_shuffle_index_map(x.data, 2)
        assert expect[0, 0].tolist() == [[a, b], [c, d]]
        assert np.array_equal(pixel_shuffle(x, 2).data, expect)

    def test_multiset_preserved(self):
        x = rand((2, 16, 3, 3), 2)
        out = pixel_shuffle(x, 4)
        assert np.array_equal(np.sort(out.data.ravel()), np.sort(x.data.ravel()))

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ConfigError, match="6.*2|2.*6"):
            pixel_shuffle(rand((1, 6, 2, 2), 3), 2)

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 4]),
           st.sampled_from([1, 2, 4]), st.integers(1, 2),
           st.integers(1, 4), st.integers(1, 4))
    def test_property_matches_index_map(self, seed, r, cq, n, h, w):
        x = rand((n, cq * r * r, h, w), seed)
        assert np.array_equal(pixel_shuffle(x, r).data,
                              pixel_shuffle_index_map(x.data, r))


class TestPixelUnshuffle:
    def test_unit_factor_is_identity(self):
        x = rand((1, 3, 4, 4), 4)
        assert np.array_equal(pixel_unshuffle(x, 1).data, x.data)

    def test_shape_contract(self):
        out = pixel_unshuffle(rand((1, 2, 4, 4), 5), 2)
        assert out.shape == (1, 8, 2, 2)

    def test_indivisible_extent_rejected(self):
        with pytest.raises(ShapeError):
            pixel_unshuffle(rand((1, 2, 5, 4), 6), 2)

    def test_matches_inverse_index_map(self):
        x = rand((2, 3, 6, 6), 7)
        assert np.array_equal(pixel_unshuffle(x, 3).data,
                              pixel_unshuffle_index_map(x.data, 3))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 4]),
           st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
    def test_round_trip_bit_exact(self, seed, r, c, h, w):
        x = rand((1, c * r * r, h, w), seed)
        back = pixel_unshuffle(pixel_shuffle(x, r), r)
        assert np.array_equal(back.data, x.data)
        y = rand((1, c, h * r, w * r), seed + 1)
        forth = pixel_shuffle(pixel_unshuffle(y, r), r)
        assert np.array_equal(forth.data, y.data)
