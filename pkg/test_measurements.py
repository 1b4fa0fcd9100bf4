#!/usr/bin/env python3
"""
Tests for POVMs, instruments, measurement-class certificates and projective simulation.
"""

import sys

import numpy as np
import pytest

from ensembles import random_density_matrix, random_effect, random_kraus, random_povm, random_rank1_povm
from errors import ContractViolation
from linalg import basis_ket, ket_to_density, tensor
from measurements import (
    BellCert,
    Instrument,
    Locc1Cert,
    LoccTreeNode,
    Povm,
    class_operator,
    instrument_apply,
    naimark_dilate,
    pm_simulate_two_outcome,
    povm_of_instrument,
    rank_one_refinement,
    sample_outcome,
)

PLUS = np.array([1, 1]) / np.sqrt(2)


def test_povm_must_sum_to_identity():
    with pytest.raises(ContractViolation):
        Povm((np.eye(2) / 2, np.eye(2) / 4))
    with pytest.raises(ContractViolation):
        Povm((2 * np.eye(2), -np.eye(2)))


def test_instrument_completeness():
    with pytest.raises(ContractViolation):
        Instrument((np.eye(2), np.eye(2)))
    ins = Instrument(tuple(random_kraus(3, 2, np.random.default_rng(0))))
    assert len(ins) == 2 and ins.dim == 3


def test_instrument_apply_probability_and_post_state():
    rho = ket_to_density(PLUS)
    ins = Instrument.projective((ket_to_density(basis_ket(2, 0)), ket_to_density(basis_ket(2, 1))))
    branch = instrument_apply(ins, rho, 1)
    assert branch.prob == pytest.approx(0.5)
    np.testing.assert_allclose(branch.post, ket_to_density(basis_ket(2, 1)), atol=1e-12)


def test_instrument_apply_degenerate_branch():
    ins = Instrument.projective((ket_to_density(basis_ket(2, 0)), ket_to_density(basis_ket(2, 1))))
    branch = instrument_apply(ins, ket_to_density(basis_ket(2, 0)), 1)
    assert branch.degenerate and branch.prob == 0.0


def test_luders_instrument_reproduces_effects():
    e = random_effect(3, np.random.default_rng(2))
    povm = povm_of_instrument(Instrument.luders((e, np.eye(3) - e)))
    np.testing.assert_allclose(povm.effects[0], e, atol=1e-10)


def test_bell_to_locc1_to_tree_preserve_operator():
    rng = np.random.default_rng(4)
    e, f = random_effect(2, rng), random_effect(2, rng)
    bell = BellCert(alphas=(e, np.eye(2) - e), betas=(f, np.eye(2) - f), accept={(0, 0), (1, 1)})
    expected = tensor(e, f) + tensor(np.eye(2) - e, np.eye(2) - f)
    np.testing.assert_allclose(class_operator(bell), expected, atol=1e-10)
    locc1 = bell.to_locc1()
    np.testing.assert_allclose(class_operator(locc1), expected, atol=1e-10)
    np.testing.assert_allclose(class_operator(locc1.to_tree()), expected, atol=1e-10)


def test_tree_base_cases():
    accept = LoccTreeNode(side="A", dims=(2, 2), effects=(np.eye(2),), children=(True,))
    reject = LoccTreeNode(side="B", dims=(2, 2), effects=(np.eye(2),), children=(False,))
    np.testing.assert_allclose(accept.operator(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(reject.operator(), np.zeros((4, 4)), atol=1e-12)


def test_locc1_rejects_non_effect_decision():
    with pytest.raises(ContractViolation):
        Locc1Cert(alphas=(np.eye(2),), ms=(2 * np.eye(2),))


def test_rank_one_refinement_sums_back():
    povm = Povm(tuple(random_povm(3, 3, np.random.default_rng(8))))
    rows, labels = rank_one_refinement(povm)
    for i, e in enumerate(povm.effects):
        pieces = rows[[k for k, label in enumerate(labels) if label == i]]
        np.testing.assert_allclose(pieces.conj().T @ pieces, e, atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_naimark_dilation_reproduces_statistics(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 5))
    outcomes = int(rng.integers(2, 7))
    povm = Povm(tuple(random_povm(dim, outcomes, rng)))
    simulation = naimark_dilate(povm)
    assert simulation.extended_dim % dim == 0
    for _ in range(5):
        rho = random_density_matrix(dim, rng)
        np.testing.assert_allclose(simulation.outcome_probs(rho), povm.probabilities(rho), atol=1e-10)


def test_naimark_dilation_of_rank_one_povm_needs_no_ancilla_when_outcomes_fit():
    povm = Povm(tuple(random_rank1_povm(2, 2, np.random.default_rng(1))))
    assert naimark_dilate(povm).extended_dim == 2


@pytest.mark.parametrize("seed", range(20))
def test_two_outcome_layered_simulation(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 5))
    e = random_effect(dim, rng)
    simulation = pm_simulate_two_outcome(e)
    assert sum(simulation.weights) == pytest.approx(1.0)
    for _ in range(5):
        rho = random_density_matrix(dim, rng)
        p = np.trace(e @ rho).real
        np.testing.assert_allclose(simulation.outcome_probs(rho), [p, 1 - p], atol=1e-10)


def test_layered_simulation_of_identity_is_single_branch():
    simulation = pm_simulate_two_outcome(np.eye(3))
    assert len(simulation.branches) == 1
    assert simulation.branch_bits == 0


def test_layered_branch_weights():
    simulation = pm_simulate_two_outcome(np.diag([0.9, 0.3]))
    assert simulation.weights == pytest.approx((0.6, 0.3, 0.1))
    accepts = [branch.effects[0] for branch in simulation.branches]
    np.testing.assert_allclose(accepts[0], np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(accepts[1], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(accepts[2], np.zeros((2, 2)), atol=1e-12)

    half = pm_simulate_two_outcome(np.eye(2) / 2)
    assert half.weights == pytest.approx((0.5, 0.5))
    np.testing.assert_allclose(half.branches[0].effects[0], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(half.branches[1].effects[0], np.zeros((2, 2)), atol=1e-12)


def test_naimark_dilation_of_trine():
    angles = 2 * np.pi * np.arange(3) / 3
    trine = Povm(tuple(2 / 3 * ket_to_density(np.array([np.cos(a), np.sin(a)])) for a in angles))
    simulation = naimark_dilate(trine)
    assert simulation.extended_dim == 4
    assert len(simulation.ancilla) == 2
    assert simulation.labels == ((0, 1, 2, 0),)

    rho = ket_to_density(basis_ket(2, 0))
    np.testing.assert_allclose(simulation.outcome_probs(rho), [2 / 3, 1 / 6, 1 / 6], atol=1e-10)
    # The padding projector never fires on the fixed ancilla
    assert simulation.branch_probabilities(rho, 0)[3] == pytest.approx(0.0, abs=1e-10)


class FixedDraws:
    def __init__(self, *draws):
        self.draws = list(draws)

    def random(self):
        return self.draws.pop(0)


def test_sample_outcome():
    rng = np.random.default_rng(0)
    assert sample_outcome(rng, [0.0, 1.0]) == 1
    with pytest.raises(ContractViolation):
        sample_outcome(rng, [0.0, 0.0])


def test_sample_outcome_inverts_the_cdf():
    draws = FixedDraws(0.1, 0.25, 0.5, 0.95, 0.999)
    assert [sample_outcome(draws, [0.2, 0.5, 0.3]) for _ in range(5)] == [0, 1, 1, 2, 2]


def test_sample_outcome_is_reproducible_for_a_seed():
    probs = [0.1, 0.4, 0.2, 0.3]
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        runs.append([sample_outcome(rng, probs) for _ in range(50)])
    assert runs[0] == runs[1]
    assert set(runs[0]) <= {0, 1, 2, 3}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
