from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainrestore.basis import (
    MultiIndex,
    Partition,
    embed_er_operator,
    enumerate_sector,
    join_index,
    parse_label,
    split_index,
    subsystem_labels,
)
from helpers import full_er_unitary, random_er_blocks, sector_projector


def codes_as_bits(n, k):
    return [str(s) for s in enumerate_sector(n, k).states]


class TestMultiIndex:
    def test_bits_round_trip(self):
        m = MultiIndex.from_bits("1011")
        assert m.code == 0b1011 and m.length == 4
        assert m.bits == (1, 0, 1, 1)
        assert str(m) == "1011"

    @given(st.lists(st.integers(0, 1), max_size=20))
    def test_norm_counts_ones(self, bits):
        m = MultiIndex.from_bits(bits)
        assert m.norm == sum(bits)
        assert 0 <= m.norm <= m.length

    @given(st.lists(st.integers(0, 1), max_size=10), st.lists(st.integers(0, 1), max_size=10))
    def test_concatenation(self, a, b):
        assert (MultiIndex.from_bits(a) + MultiIndex.from_bits(b)).bits == tuple(a + b)

    @given(st.lists(st.integers(0, 1), max_size=12))
    def test_reversal_is_involution(self, bits):
        m = MultiIndex.from_bits(bits)
        assert m.reversed().bits == tuple(bits[::-1])
        assert m.reversed().reversed() == m

    def test_empty_prints_as_empty_set(self):
        assert str(MultiIndex(0, 0)) == "∅"

    def test_rejects_oversized_code(self):
        with pytest.raises(ValueError):
            MultiIndex(4, 2)


class TestEnumerateSector:
    def test_small_sectors(self):
        assert codes_as_bits(2, 1) == ["01", "10"]
        assert codes_as_bits(2, 0) == ["00"]
        assert codes_as_bits(4, 2) == ["0011", "0101", "0110", "1001", "1010", "1100"]

    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
    def test_size_order_and_weight(self, nk):
        n, k = nk
        basis = enumerate_sector(n, k)
        assert len(basis) == comb(n, k)
        assert list(basis.codes) == sorted(set(basis.codes))
        assert all(bin(c).count("1") == k for c in basis.codes)

    @pytest.mark.parametrize("n", range(1, 13))
    def test_sectors_cover_the_space(self, n):
        assert sum(len(enumerate_sector(n, k)) for k in range(n + 1)) == 2 ** n

    def test_index_of_round_trip(self):
        basis = enumerate_sector(6, 3)
        for i, s in enumerate(basis.states):
            assert basis.index_of(s) == i

    @pytest.mark.parametrize("k", [-1, 5])
    def test_out_of_range(self, k):
        with pytest.raises(ValueError):
            enumerate_sector(4, k)


class TestPartition:
    def test_node_sets(self):
        p = Partition(7, 2, 2, 4)
        assert p.sender_nodes == (0, 1)
        assert p.tl_nodes == (2, 3, 4)
        assert p.receiver_nodes == (6, 5)
        assert p.er_nodes == (3, 4, 5, 6)
        assert p.outer_nodes == (0, 1, 2)

    def test_reversed_receiver_qubit_maps_to_mirror_node(self):
        p = Partition(10, 3, 3, 3)
        # qubit j (1-based) sits on node n_total + 1 - j (1-based)
        assert [node + 1 for node in p.receiver_nodes] == [10 + 1 - j for j in (1, 2, 3)]
        assert Partition(10, 3, 3, 3, receiver_reversed=False).receiver_nodes == (7, 8, 9)

    @pytest.mark.parametrize(
        "args", [(6, 2, 3, 3), (6, 2, 2, 1), (6, 2, 2, 5), (4, 0, 0, 0)]
    )
    def test_invalid_geometry(self, args):
        with pytest.raises(ValueError):
            Partition(*args)


class TestSplitJoin:
    def test_examples(self):
        def parts(text, p):
            return tuple(str(x) for x in split_index(MultiIndex.from_bits(text), p))

        assert parts("1100", Partition(4, 2, 2, 2, receiver_reversed=False)) == ("11", "∅", "00")
        assert parts("1001", Partition(4, 2, 2, 2)) == ("10", "∅", "10")
        assert parts("101100", Partition(6, 2, 2, 2, receiver_reversed=False)) == ("10", "11", "00")

    @given(st.integers(2, 5), st.integers(0, 4), st.booleans(), st.data())
    def test_round_trip(self, n_s, n_tl, reversed_, data):
        n_total = 2 * n_s + n_tl
        p = Partition(n_total, n_s, n_s, n_s, receiver_reversed=reversed_)
        code = data.draw(st.integers(0, 2 ** n_total - 1))
        m = MultiIndex(code, n_total)
        assert join_index(*split_index(m, p), p) == m

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            split_index(MultiIndex(0, 5), Partition(4, 2, 2, 2))


def test_labels():
    assert subsystem_labels(2) == ["00", "01", "10", "11"]
    assert parse_label("10") == 2
    with pytest.raises(ValueError):
        parse_label("12")


class TestEmbedding:
    def test_identity(self):
        p = Partition(6, 2, 2, 3)
        eye = {k: np.eye(comb(3, k)) for k in range(4)}
        assert np.array_equal(embed_er_operator(eye, p, 2), np.eye(comb(6, 2)))

    def test_missing_blocks_act_as_identity(self):
        p = Partition(6, 2, 2, 3)
        assert np.array_equal(embed_er_operator({}, p, 3), np.eye(comb(6, 3)))

    @pytest.mark.parametrize("n_total,n_er", [(4, 2), (5, 3), (6, 4)])
    def test_matches_tensor_product(self, rng, n_total, n_er):
        p = Partition(n_total, 2, 2, n_er)
        blocks = random_er_blocks(n_er, n_er, rng)
        full = np.kron(np.eye(2 ** (n_total - n_er)), full_er_unitary(blocks, n_er))
        for k in range(n_total + 1):
            proj = sector_projector(n_total, k)
            assert np.abs(embed_er_operator(blocks, p, k) - proj.T @ full @ proj).max() <= 1e-14

    @given(st.integers(0, 2 ** 32 - 1), st.integers(0, 4))
    def test_preserves_unitarity(self, seed, k):
        p = Partition(6, 2, 2, 4)
        blocks = random_er_blocks(4, 4, np.random.default_rng(seed))
        e = embed_er_operator(blocks, p, k)
        assert np.abs(e.conj().T @ e - np.eye(len(e))).max() <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            embed_er_operator({1: np.eye(3)}, Partition(6, 2, 2, 4), 1)
