import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_blocks, half_round_exact
from tilemul.corpus import random_coo
from tilemul.errors import FormatError, InvariantError
from tilemul.tile_format import (
    ElementCOO,
    Tile8,
    TiledMatrix,
    bitmap_of_dense_tile,
    expand_tiles,
    from_element_coo,
    parse_tiled_binary,
    popcount,
    read_tiled_binary,
    round_to_half,
    tiled_binary_bytes,
    to_element_coo,
    write_tiled_binary,
)

finite_in_range = st.floats(min_value=-65504, max_value=65504, allow_nan=False)


class TestRoundToHalf:
    def test_exact(self):
        assert round_to_half(1.0) == 1.0

    def test_ties_to_even(self):
        # oracle: binary16 has an 11-bit significand, so 2049 sits halfway between 2048 and 2050
        assert half_round_exact(2049.0) == 2048.0
        assert round_to_half(2049.0) == 2048.0
        assert round_to_half(2051.0) == 2052.0

    def test_overflow(self):
        with pytest.raises(OverflowError):
            round_to_half(70000.0)
        assert round_to_half(65504.0) == 65504.0
        with pytest.raises(OverflowError):
            round_to_half(-65504.5)

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            round_to_half(float("nan"))

    def test_array(self):
        out = round_to_half(np.array([0.1, 2049.0]))
        assert out.dtype == np.float64
        assert out[1] == 2048.0

    @given(finite_in_range)
    def test_matches_rational_oracle(self, x):
        assert round_to_half(x) == half_round_exact(x)

    @given(finite_in_range)
    def test_idempotent(self, x):
        once = round_to_half(x)
        assert round_to_half(once) == once

    def test_subnormals(self):
        tiny = 2.0 ** -24
        assert round_to_half(tiny) == tiny
        assert round_to_half(tiny * 0.5) == 0.0  # tie goes to even (zero)
        assert round_to_half(tiny * 1.5) == 2 * tiny
        assert round_to_half(tiny * 0.51) == half_round_exact(tiny * 0.51) == tiny


class TestBitmapOfDenseTile:
    def test_zero(self):
        assert bitmap_of_dense_tile(np.zeros((8, 8))) == 0

    def test_first_slot(self):
        t = np.zeros((8, 8))
        t[0, 0] = 3
        assert bitmap_of_dense_tile(t) == 1

    def test_full(self):
        assert bitmap_of_dense_tile(np.ones((8, 8))) == (1 << 64) - 1

    def test_row_major_bits(self):
        t = np.zeros((8, 8))
        t[2, 5] = -1
        assert bitmap_of_dense_tile(Tile8("half", t)) == 1 << 21


class TestFromElementCOO:
    def test_empty(self):
        m = from_element_coo(ElementCOO.empty(12, 12))
        assert m.num_tiles == 0 and m.nnz == 0
        m.validate()

    def test_single(self):
        m = from_element_coo(ElementCOO.from_entries(12, 12, [(0, 0, 5.0)]))
        assert list(m.tiles()) == [(0, 0, 0, 1)]
        assert m.elements.tolist() == [5.0]

    def test_12x12_tile_count_matches_block_scan(self, rng):
        dense = np.where(rng.random((12, 12)) < 0.2, rng.integers(1, 9, (12, 12)), 0).astype(float)
        dense[0, 0] = 1.0
        dense[11, 3] = 2.0
        m = from_element_coo(ElementCOO.from_dense(dense))
        assert {(t.tile_row, t.tile_col) for t in m.tiles()} == dense_blocks(dense)
        assert m.num_tiles == len(dense_blocks(dense))

    def test_bit_order_and_element_order(self):
        entries = [(1, 2, 3.0), (0, 7, 1.0), (9, 8, 4.0), (8, 9, 2.0)]
        m = from_element_coo(ElementCOO.from_arrays(16, 16, *zip(*entries)))
        tiles = list(m.tiles())
        assert tiles[0] == (0, 0, 0, (1 << 7) | (1 << 10))
        assert tiles[1] == (1, 1, 2, (1 << 1) | (1 << 8))
        assert m.elements.tolist() == [1.0, 3.0, 2.0, 4.0]

    def test_zero_entries_discarded(self):
        m = from_element_coo(ElementCOO(4, 4, [0, 1], [0, 1], [0.0, 2.0]))
        assert m.nnz == 1

    def test_overflow_propagates(self):
        with pytest.raises(OverflowError):
            from_element_coo(ElementCOO.from_entries(4, 4, [(0, 0, 1e6)]))
        m = from_element_coo(ElementCOO.from_entries(4, 4, [(0, 0, 1e6)]), kind="fp32")
        assert m.elements[0] == np.float32(1e6)

    def test_nonfinite(self):
        m = ElementCOO(4, 4, [0, 1], [0, 1], [np.inf, 2.0])
        with pytest.raises(ValueError):
            from_element_coo(m)
        assert from_element_coo(m, drop_nonfinite=True).nnz == 1

    def test_values_rounding_to_zero_dropped(self):
        m = from_element_coo(ElementCOO.from_entries(4, 4, [(0, 0, 1e-10), (1, 1, 1.0)]))
        assert m.nnz == 1
        m.validate()


class TestToElementCOO:
    def test_empty(self):
        assert to_element_coo(TiledMatrix.empty(5, 5)).nnz == 0

    def test_coordinates(self):
        m = TiledMatrix(24, 24, [1], [2], [0], [1], np.array([5.0], dtype=np.float16))
        m.validate()
        assert to_element_coo(m).entries() == [(8, 16, 5.0)]

    def test_round_trip_random(self):
        a = random_coo(200, 0.02, seed=7)
        m = from_element_coo(a)
        back = to_element_coo(m)
        assert back.equals(a)
        assert from_element_coo(back).equals(m)

    @given(st.integers(1, 40), st.integers(1, 40), st.floats(0.0, 0.5), st.integers(0, 2**31))
    def test_round_trip_property(self, r, c, d, seed):
        a = random_coo(r, d, seed=seed, cols=c)
        m = from_element_coo(a)
        m.validate()
        assert int(popcount(m.bitmap).sum()) == m.nnz
        assert np.all(m.bitmap != 0)
        assert to_element_coo(m).equals(a)
        assert np.array_equal(m.to_dense(), a.to_dense())


def test_expand_tiles_matches_dense():
    a = random_coo(30, 0.3, seed=3)
    m = from_element_coo(a)
    dense = a.to_dense()
    tiles = expand_tiles(m, np.arange(m.num_tiles))
    for t, entry in zip(tiles, m.tiles()):
        block = dense[8 * entry.tile_row:8 * entry.tile_row + 8, 8 * entry.tile_col:8 * entry.tile_col + 8]
        padded = np.zeros((8, 8))
        padded[:block.shape[0], :block.shape[1]] = block
        assert np.array_equal(t, padded)


class TestValidate:
    def _m(self, **kw):
        base = dict(rows=16, cols=16, tile_row=[0, 1], tile_col=[0, 1], elem_index=[0, 1],
                    bitmap=[1, 3], elements=np.array([1, 2, 3], dtype=np.float16))
        base.update(kw)
        return TiledMatrix(**base)

    def test_valid(self):
        self._m().validate()

    @pytest.mark.parametrize("kw", [
        dict(tile_row=[1, 0], tile_col=[1, 0]),
        dict(tile_row=[0, 0], tile_col=[1, 1]),
        dict(bitmap=[0, 7]),
        dict(elem_index=[0, 2]),
        dict(elements=np.array([1, 2], dtype=np.float16)),
        dict(tile_row=[0, 2]),
        dict(elements=np.array([1, 0, 3], dtype=np.float16)),
        dict(rows=9, cols=9, bitmap=[1, 1 << 9], elements=np.array([1, 2], dtype=np.float16)),
    ])
    def test_violations(self, kw):
        with pytest.raises(InvariantError):
            self._m(**kw).validate()


class TestBinaryFormat:
    @pytest.mark.parametrize("kind", ["fp16", "fp32"])
    def test_round_trip(self, tmp_path, kind):
        m = from_element_coo(random_coo(100, 0.05, seed=1), kind=kind)
        write_tiled_binary(m, tmp_path / "m.tspz")
        back = read_tiled_binary(tmp_path / "m.tspz")
        assert back.equals(m)
        assert back.kind == kind

    def test_header_layout(self):
        m = TiledMatrix(24, 24, [1], [2], [0], [1], np.array([5.0], dtype=np.float16))
        buf = tiled_binary_bytes(m)
        assert buf[:4] == b"TSPZ"
        assert int.from_bytes(buf[4:8], "little") == 1
        assert buf[8] == 0
        assert [int.from_bytes(buf[9 + 8 * i:17 + 8 * i], "little") for i in range(4)] == [24, 24, 1, 1]
        assert len(buf) == 41 + 24 + 2
        assert buf[-2:] == np.float16(5.0).tobytes()

    def test_empty_round_trip(self):
        m = TiledMatrix.empty(3, 7, "fp32")
        assert parse_tiled_binary(tiled_binary_bytes(m)).equals(m)

    def test_truncated(self):
        buf = tiled_binary_bytes(from_element_coo(random_coo(40, 0.1, seed=2)))
        for cut in (0, 3, 20, len(buf) - 1):
            with pytest.raises(FormatError):
                parse_tiled_binary(buf[:cut])

    def test_bad_magic_and_version(self):
        buf = bytearray(tiled_binary_bytes(from_element_coo(random_coo(20, 0.1, seed=2))))
        bad = bytes(b"XSPZ" + buf[4:])
        with pytest.raises(FormatError):
            parse_tiled_binary(bad)
        buf[4] = 2
        with pytest.raises(FormatError):
            parse_tiled_binary(bytes(buf))

    def test_unsorted_tiles(self):
        good = TiledMatrix(16, 16, [0, 1], [0, 1], [0, 1], [1, 1], np.array([1, 2], dtype=np.float16))
        buf = bytearray(tiled_binary_bytes(good))
        # swap the two tile_row and tile_col entries
        rows_at, cols_at = 41, 49
        buf[rows_at:rows_at + 8] = buf[rows_at + 4:rows_at + 8] + buf[rows_at:rows_at + 4]
        buf[cols_at:cols_at + 8] = buf[cols_at + 4:cols_at + 8] + buf[cols_at:cols_at + 4]
        with pytest.raises(InvariantError):
            parse_tiled_binary(bytes(buf))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_tiled_binary(tmp_path / "nope.tspz")


def test_astype_round_trip():
    m = from_element_coo(random_coo(64, 0.1, seed=9))
    assert m.astype("fp32").astype("fp16").equals(m)


def test_tile8_kinds():
    with pytest.raises(ValueError):
        Tile8("boolean", np.full((8, 8), 2))
    with pytest.raises(ValueError):
        Tile8("half", np.full((8, 8), 0.1))
    assert Tile8.zeros("accumulator").data.dtype == np.float32
