#!/usr/bin/env python3
"""
Tests for codes, fingerprints and the SWAP test.
"""

import itertools
import math
import sys

import numpy as np
import pytest

from ensembles import random_bits, random_ket
from errors import ContractViolation
from fingerprints import (
    all_bitstrings,
    all_messages,
    default_code,
    encode,
    fingerprint,
    fingerprint_overlap,
    hadamard_code,
    hamming_distance,
    min_distance_check,
    random_linear_code,
    swap_accept_prob,
    swap_circuit_sim,
)


def test_all_messages_ascending_msb_first():
    np.testing.assert_array_equal(all_messages(2), [[0, 0], [0, 1], [1, 0], [1, 1]])
    assert all_bitstrings(2) == ["00", "01", "10", "11"]


def test_hadamard_encoding_order():
    assert encode(hadamard_code(2), "10") == "0011"
    assert encode(hadamard_code(2), "00") == "0000"


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_hadamard_distance_is_half_length(n):
    code = hadamard_code(n)
    check = min_distance_check(code)
    assert check.exhaustive
    assert check.distance == code.N // 2 == code.min_distance


def test_random_linear_code_meets_distance_target():
    code = random_linear_code(10, np.random.default_rng(5))
    assert code.N == 80
    assert code.min_distance >= math.ceil(0.1 * code.N)
    assert min_distance_check(code).distance == code.min_distance


def test_default_code_switch():
    assert default_code(12).kind == "hadamard"
    assert default_code(13, np.random.default_rng(0)).kind == "random-linear"
    with pytest.raises(ContractViolation):
        default_code(21)


def test_encode_rejects_wrong_length():
    with pytest.raises(ContractViolation):
        encode(hadamard_code(3), "01")
    with pytest.raises(ContractViolation):
        encode(hadamard_code(2), "0a")


def test_fingerprint_is_unit_norm():
    state = fingerprint(hadamard_code(3), "101").state
    assert np.linalg.norm(state) == pytest.approx(1.0)
    assert len(state) == 16


def test_overlap_formula_matches_states():
    code = hadamard_code(4)
    for x, y in itertools.product(["0000", "1010", "1111"], repeat=2):
        expected = 1 - hamming_distance(encode(code, x), encode(code, y)) / code.N
        assert fingerprint_overlap(code, x, y) == pytest.approx(expected)
        assert fingerprint_overlap(code, x, y, via_states=True) == pytest.approx(expected, abs=1e-12)


def test_swap_accept_prob_values():
    assert swap_accept_prob(1.0) == 1.0
    assert swap_accept_prob(0.0) == 0.5
    assert swap_accept_prob(0.5) == pytest.approx(5 / 8)
    with pytest.raises(ContractViolation):
        swap_accept_prob(1.5)


@pytest.mark.parametrize("seed", range(10))
def test_swap_circuit_matches_formula(seed):
    rng = np.random.default_rng(seed)
    a, b = random_ket(4, rng), random_ket(4, rng)
    assert swap_circuit_sim(a, b) == pytest.approx(swap_accept_prob(abs(np.vdot(a, b))), abs=1e-9)


def test_swap_circuit_on_fingerprints():
    code = hadamard_code(3)
    rng = np.random.default_rng(1)
    x, y = random_bits(3, rng), random_bits(3, rng)
    circuit = swap_circuit_sim(fingerprint(code, x).state, fingerprint(code, y).state)
    assert circuit == pytest.approx(swap_accept_prob(fingerprint_overlap(code, x, y)), abs=1e-9)


def test_swap_circuit_rejects_mismatched_dims():
    with pytest.raises(ContractViolation):
        swap_circuit_sim(np.array([1, 0]), np.array([1, 0, 0, 0]))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
