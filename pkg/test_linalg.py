#!/usr/bin/env python3
"""
Tests for the dense linear algebra helpers.
Run with pytest, or directly as a script.
"""

import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensembles import random_density_matrix, random_effect, random_unitary
from errors import ContractViolation, ResourceLimitError
from linalg import (
    as_density_matrix,
    basis_ket,
    check_entries,
    conjugate_by_power,
    copy_average,
    copy_average_expectation,
    copy_average_spectrum,
    copy_average_window_project,
    hermitian_eig,
    is_effect,
    ket_to_density,
    partial_trace,
    psd_sqrt,
    tensor,
    window_projector,
)
from sim_config import MAX_ENTRIES

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_tensor_left_factor_is_most_significant():
    zero, one = ket_to_density(basis_ket(2, 0)), ket_to_density(basis_ket(2, 1))
    product = tensor(zero, one)
    # |0>|1> is basis index 0 * 2 + 1
    assert product[1, 1] == 1
    assert np.count_nonzero(product) == 1


def test_partial_trace_of_product_recovers_factors():
    rng = np.random.default_rng(3)
    a = random_density_matrix(2, rng)
    b = random_density_matrix(4, rng)
    joint = tensor(a, b)
    np.testing.assert_allclose(partial_trace(joint, (2, 4), keep="first"), a, atol=1e-12)
    np.testing.assert_allclose(partial_trace(joint, (2, 4), keep="second"), b, atol=1e-12)


def test_partial_trace_rejects_bad_dims():
    with pytest.raises(ContractViolation):
        partial_trace(np.eye(6), (2, 2))


def test_hermitian_eig_descending_with_pivot_tie_break():
    m = np.diag([1.0, 0.0, 1.0])
    values, vectors = hermitian_eig(m)
    np.testing.assert_allclose(values, [1.0, 1.0, 0.0])
    # Tied eigenvalue 1: pivot 0 first, pivot 2 second, both real positive
    np.testing.assert_allclose(np.abs(vectors[:, 0]), [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(vectors[:, 1]), [0, 0, 1], atol=1e-12)
    assert vectors[0, 0].real > 0 and abs(vectors[0, 0].imag) < 1e-12
    assert vectors[2, 1].real > 0 and abs(vectors[2, 1].imag) < 1e-12


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(ContractViolation):
        hermitian_eig(np.array([[0, 1], [0, 0]]))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_hermitian_eig_reconstructs(seed):
    rng = np.random.default_rng(seed)
    m = random_effect(4, rng)
    values, vectors = hermitian_eig(m)
    assert np.all(np.diff(values) <= 1e-12)
    np.testing.assert_allclose((vectors * values) @ vectors.conj().T, m, atol=1e-9)


def test_window_projector_is_inclusive():
    m = np.diag([0.2, 0.5, 0.8])
    np.testing.assert_allclose(window_projector(m, 0.5, 0.8), np.diag([0, 1, 1]), atol=1e-12)
    with pytest.raises(ContractViolation):
        window_projector(m, 0.8, 0.5)


def test_is_effect():
    assert is_effect(np.eye(2) / 2)
    assert not is_effect(2 * np.eye(2))
    assert not is_effect(-np.eye(2))
    assert not is_effect(np.array([[0, 1], [0, 0]]))


def test_as_density_matrix_checks_invariants():
    with pytest.raises(ContractViolation):
        as_density_matrix(np.eye(2))
    with pytest.raises(ContractViolation):
        as_density_matrix(np.diag([1.5, -0.5]))
    as_density_matrix(np.eye(2) / 2)


def test_check_entries_cap():
    check_entries(1, MAX_ENTRIES)
    with pytest.raises(ResourceLimitError):
        check_entries(MAX_ENTRIES, 2)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_psd_sqrt_squares_back(seed):
    e = random_effect(4, np.random.default_rng(seed))
    root = psd_sqrt(e)
    np.testing.assert_allclose(root @ root, e, atol=1e-10)


@pytest.mark.parametrize("d,r", [(2, 1), (2, 3), (3, 2), (4, 2)])
def test_copy_average_spectrum_matches_explicit(d, r):
    rng = np.random.default_rng(10 * d + r)
    e = random_effect(d, rng)
    values, basis = copy_average_spectrum(e, r)
    explicit = copy_average(e, r)
    np.testing.assert_allclose(np.sort(values)[::-1], hermitian_eig(explicit)[0], atol=1e-9)

    big = basis
    for _ in range(r - 1):
        big = np.kron(big, basis)
    np.testing.assert_allclose((big * values) @ big.conj().T, explicit, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_conjugate_by_power_matches_kron(seed):
    rng = np.random.default_rng(seed)
    u = random_unitary(2, rng)
    rho = random_density_matrix(8, rng)
    big = np.kron(np.kron(u, u), u)
    np.testing.assert_allclose(conjugate_by_power(rho, u, 3), big @ rho @ big.conj().T, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_copy_average_expectation_matches_trace(seed):
    rng = np.random.default_rng(seed)
    e = random_effect(2, rng)
    rho = random_density_matrix(8, rng)
    expected = np.trace(copy_average(e, 3) @ rho).real
    assert copy_average_expectation(rho, e, 3) == pytest.approx(expected, abs=1e-10)


def test_copy_average_window_project_matches_explicit():
    rng = np.random.default_rng(7)
    e = random_effect(2, rng)
    rho = random_density_matrix(8, rng)
    projector = window_projector(copy_average(e, 3), 0.3, 0.7)
    expected = projector @ rho @ projector
    np.testing.assert_allclose(copy_average_window_project(rho, e, 3, 0.3, 0.7), expected, atol=1e-10)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
