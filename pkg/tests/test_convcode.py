import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from devbind.errors import CatastrophicCodeError, ParameterError
from devbind.ecc import DEFAULT_CODE, ConvCode, conv_encode, free_distance, gf2_poly_gcd, viterbi_decode
from oracles import DEFAULT_TAPS, brute_dfree, direct_encode


def test_default_taps():
    assert DEFAULT_CODE.generators == tuple(tuple(g) for g in DEFAULT_TAPS)
    assert (DEFAULT_CODE.n_in, DEFAULT_CODE.n_out, DEFAULT_CODE.memory) == (1, 3, 3)


@pytest.mark.parametrize("B", [1, 2, 5, 8, 17, 125])
def test_encoder_matches_direct_loop(B, rng):
    for _ in range(5):
        info = rng.integers(0, 2, B).tolist()
        assert conv_encode(info).tolist() == direct_encode(info, DEFAULT_TAPS)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=40),
       st.sampled_from([((1, 1, 1), (1, 0, 1)), ((1, 0, 1, 1), (1, 1, 0, 1), (1, 1, 1, 1)), ((1, 1), (0, 1))]))
def test_encoder_matches_direct_loop_other_codes(info, gens):
    assert conv_encode(info, ConvCode(gens)).tolist() == direct_encode(info, [list(g) for g in gens])


def test_batch_encoding_matches_rows(rng):
    info = rng.integers(0, 2, (6, 20), dtype=np.uint8)
    batch = conv_encode(info)
    for row, enc in zip(info, batch):
        assert np.array_equal(conv_encode(row), enc)


def test_free_distance_matches_brute_force():
    d, r = free_distance(DEFAULT_CODE)
    assert d == brute_dfree(DEFAULT_TAPS) == 10
    assert r == (d - 1) // 2 == 4


def test_free_distance_textbook_code():
    code = ConvCode(((1, 1, 1), (1, 0, 1)))  # octal 7, 5
    assert free_distance(code) == (5, 2) == (brute_dfree([[1, 1, 1], [1, 0, 1]]), 2)


def test_repetition_code_is_catastrophic():
    code = ConvCode(((1, 1), (1, 1)))
    assert code.is_catastrophic()
    with pytest.raises(CatastrophicCodeError):
        free_distance(code)
    assert free_distance(code, allow_catastrophic=True) == (4, 1)


def test_gf2_gcd():
    # (x+1)^2 = x^2+1 and (x+1)(x^2+x+1) = x^3+1 share x+1
    assert gf2_poly_gcd(0b101, 0b1001) == 0b11
    assert gf2_poly_gcd(0b1011, 0b1101) == 1
    assert not DEFAULT_CODE.is_catastrophic()


@pytest.mark.parametrize("gens", [(), ((1, 0, 1),), ((1, 1), (1, 1, 1)), ((0, 0), (0, 1)), ((1, 0), (1, 0)),
                                  ((1, 2), (1, 1))])
def test_invalid_generators(gens):
    with pytest.raises(ParameterError):
        ConvCode(gens)


def test_viterbi_noiseless(rng):
    info = rng.integers(0, 2, (20, 50), dtype=np.uint8)
    assert np.array_equal(viterbi_decode(conv_encode(info)), info)


def test_viterbi_corrects_all_weight_r_patterns_short_word(rng):
    B = 6
    info = rng.integers(0, 2, B, dtype=np.uint8)
    c = conv_encode(info)
    n = c.size
    pats = []
    for w in range(5):
        for pos in itertools.combinations(range(n), w):
            e = np.zeros(n, dtype=np.uint8)
            e[list(pos)] = 1
            pats.append(e)
    rx = c[None, :] ^ np.array(pats)
    assert np.all(viterbi_decode(rx) == info)


def test_viterbi_ties_pick_smallest_word():
    code = ConvCode(((1, 1), (1, 1)))
    # codewords for 1-bit words: 0 -> 0000, 1 -> 1111; 1100 is equidistant
    assert viterbi_decode(np.array([1, 1, 0, 0], dtype=np.uint8), code).tolist() == [0]


def test_viterbi_ml_against_exhaustive_search(rng):
    B = 7
    words = np.array(list(itertools.product([0, 1], repeat=B)), dtype=np.uint8)
    cws = conv_encode(words)
    for _ in range(50):
        rx = rng.integers(0, 2, cws.shape[1], dtype=np.uint8)
        dist = (cws != rx).sum(axis=1)
        best = words[dist == dist.min()]
        got = viterbi_decode(rx)
        assert (cws[np.all(words == got, axis=1)] != rx).sum() == dist.min()
        # lexicographically smallest among the nearest
        assert got.tolist() == min(best.tolist())


def test_viterbi_length_checks():
    with pytest.raises(ParameterError):
        viterbi_decode(np.zeros(10, dtype=np.uint8))
    with pytest.raises(ParameterError):
        viterbi_decode(np.zeros(9, dtype=np.uint8))
    with pytest.raises(ParameterError):
        conv_encode([])


@settings(max_examples=30)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_coded_and_info_length_inverse(B, seed):
    assert DEFAULT_CODE.info_length(DEFAULT_CODE.coded_length(B)) == B
    info = np.random.default_rng(seed).integers(0, 2, B)
    assert conv_encode(info).size == DEFAULT_CODE.coded_length(B)
