#!/usr/bin/env python3
"""
Tests for the SMP protocols and the two-way LOCC engine.
"""

import itertools
import math
import sys

import numpy as np
import pytest

from ensembles import random_density_matrix, random_povm
from errors import ContractViolation, ResourceLimitError
from linalg import basis_ket, ket_to_density
from measurements import Instrument, Povm
from protocols import (
    LoccProtocol,
    OneWayLoccProtocol,
    SmpMessage,
    ambainis_eq_protocol,
    chain_protocol,
    drhm_locc_protocol,
    drhm_two_value_rounds,
    fingerprint_eq_protocol,
    hm_output_correct,
    hm_protocol,
    idle_instrument,
    incoherent_one_way,
    last_a_outcome,
    matching_family,
    random_locc_protocol,
    random_one_way_protocol,
    rhm_hybrid_protocol,
    run_locc_exact,
    sample_locc,
    total_variation,
    validate_matching,
)


class TestMessages:
    def test_classical_length(self):
        assert SmpMessage("classical", "0110").length == 4

    def test_quantum_length(self):
        assert SmpMessage("quantum", np.eye(8) / 8).length == 3

    def test_rejects_bad_payloads(self):
        with pytest.raises(ContractViolation):
            SmpMessage("classical", "01x")
        with pytest.raises(ContractViolation):
            SmpMessage("quantum", np.eye(3) / 3)


class TestEquality:
    def test_fingerprint_eq_acceptance(self):
        protocol = fingerprint_eq_protocol(8, k=5)
        assert protocol.accept_prob("10110010", "10110010") == pytest.approx(1.0, abs=1e-9)
        assert protocol.accept_prob("10110010", "10110011") == pytest.approx((5 / 8) ** 5, abs=1e-9)
        assert fingerprint_eq_protocol(8, k=1).accept_prob("00000000", "11111111") == pytest.approx(5 / 8)

    def test_fingerprint_eq_circuit_agrees(self):
        protocol = fingerprint_eq_protocol(4, k=2)
        assert protocol.accept_prob_circuit("0101", "0011") == pytest.approx(protocol.accept_prob("0101", "0011"))

    def test_ambainis_reject_probability_exhaustive(self):
        protocol = ambainis_eq_protocol(6)
        xs = [format(i, "06b") for i in range(64)]
        for x in xs[:8]:
            assert protocol.accept_prob(x, x) == 1.0
            assert min(protocol.reject_prob(x, y) for y in xs if y != x) >= protocol.relative_distance - 1e-12

    def test_ambainis_grid_is_square(self):
        protocol = ambainis_eq_protocol(6)
        assert protocol.side == 8
        assert protocol.relative_distance == pytest.approx(0.5)


class TestHiddenMatching:
    @pytest.mark.parametrize("n", [4, 8])
    def test_family_is_a_partition_of_all_edges(self, n):
        family = matching_family(n)
        assert family.size == n - 1
        edges = [edge for matching in family.matchings for edge in matching]
        assert sorted(edges) == sorted(itertools.combinations(range(n), 2))
        assert family.index_bits == math.ceil(math.log2(n - 1))

    def test_validate_matching_rejects_overlap(self):
        with pytest.raises(ContractViolation):
            validate_matching(4, [(0, 1), (1, 2)])

    def test_family_index_out_of_range(self):
        with pytest.raises(ContractViolation):
            matching_family(4)[3]

    def test_hm_zero_error_exhaustive_n4(self):
        family = matching_family(4)
        for matching in family.matchings:
            for x in (format(i, "04b") for i in range(16)):
                dist = hm_protocol(4, x, matching)
                assert sum(dist.values()) == pytest.approx(1.0)
                assert all(hm_output_correct(x, matching, out) for out, p in dist.items() if p > 1e-12)

    def test_rhm_hybrid_matches_hm(self):
        rhm = rhm_hybrid_protocol(8)
        assert rhm.bob_bits == 3 and rhm.alice_qubits == 3
        assert rhm.output_distribution("10110100", 2) == pytest.approx(
            hm_protocol(8, "10110100", matching_family(8)[2]))

    def test_hm_rejects_non_power_of_two(self):
        with pytest.raises(ContractViolation):
            hm_protocol(6, "000000", ((0, 1), (2, 3), (4, 5)))


class TestDrhm:
    def test_zero_error_and_two_value_agreement(self):
        for x1, x2 in [("0110", "1011"), ("1111", "0000")]:
            for m1, m2 in [(0, 1), (2, 2)]:
                run = drhm_locc_protocol(4, x1, m2, x2, m1)
                dist = run.run().output_distribution()
                assert sum(p for out, p in dist.items() if run.is_correct(out)) == pytest.approx(1.0, abs=1e-9)
                two_value = drhm_two_value_rounds(4, x1, m2, x2, m1)
                assert total_variation(dist, two_value.run().output_distribution()) <= 1e-9

    def test_two_value_round_count(self):
        assert drhm_two_value_rounds(4, "0000", 0, "0000", 0).rounds == 2 * 2 + 2 * 2

    def test_message_size(self):
        assert drhm_locc_protocol(4, "0000", 0, "0000", 0).total_qubits == 2 * (2 + 2)


class TestLoccEngine:
    def test_last_a_outcome(self):
        assert last_a_outcome((1, 0, 0)) == 0
        assert last_a_outcome((1, 0)) == 1
        with pytest.raises(ContractViolation):
            last_a_outcome(())

    def test_two_value_enforced(self):
        three = Instrument(tuple(np.eye(3)[[i]].T @ np.eye(3)[[i]] for i in range(3)))
        protocol = LoccProtocol(num_steps=1, instrument=lambda side, history: three)
        with pytest.raises(ContractViolation):
            protocol.instrument_at(())

    @pytest.mark.parametrize("rounds", [1, 2])
    def test_exact_distribution_sums_to_one(self, rounds):
        rng = np.random.default_rng(rounds)
        protocol = random_locc_protocol(rounds, (2, 4), rng)
        dist = run_locc_exact(protocol, random_density_matrix(2, rng), random_density_matrix(4, rng))
        assert sum(dist.probs.values()) == pytest.approx(1.0)
        assert all(len(h) == 2 * rounds + 1 for h in dist.probs)
        assert set(dist.output_distribution()) <= {0, 1}

    def test_sampling_agrees_with_exact(self):
        rng = np.random.default_rng(11)
        protocol = random_locc_protocol(1, (2, 2), rng)
        rho_a, rho_b = random_density_matrix(2, rng), random_density_matrix(2, rng)
        exact = run_locc_exact(protocol, rho_a, rho_b)
        runs = 20000
        counts = sample_locc(protocol, rho_a, rho_b, rng, runs)
        for history, p in exact.probs.items():
            assert counts[history] / runs == pytest.approx(p, abs=0.02)

    def test_step_cap(self):
        protocol = chain_protocol([idle_instrument(2)] * 11)
        with pytest.raises(ResourceLimitError):
            run_locc_exact(protocol, np.eye(2) / 2, np.eye(1))

    def test_chain_protocol_schedule(self):
        protocol = chain_protocol([idle_instrument(2)] * 3)
        assert protocol.num_steps == 5
        dist = run_locc_exact(protocol, np.eye(2) / 2, np.eye(1))
        assert dist.probs == pytest.approx({(0, 0, 0, 0, 0): 1.0})


class TestOneWay:
    def test_output_distribution_sums_to_one(self):
        protocol = random_one_way_protocol(2, np.random.default_rng(3))
        for x, y in itertools.product(protocol.xs, protocol.ys):
            assert sum(protocol.output_distribution(x, y).values()) == pytest.approx(1.0)

    def test_incoherent_bob_message(self):
        alice = {x: ket_to_density(basis_ket(2, int(x[0]))) for x in ["00", "01", "10", "11"]}
        ref_a = Povm((ket_to_density(basis_ket(2, 0)), ket_to_density(basis_ket(2, 1))))
        # Accept iff Ref_A's bit equals the first bit of y
        protocol = incoherent_one_way(alice, 2, ref_a, lambda a, y: a == int(y[0]))
        assert protocol.accept_prob("10", "11") == pytest.approx(1.0)
        assert protocol.accept_prob("10", "01") == pytest.approx(0.0)
        assert len(protocol.ref_b) == 2

    def test_mismatched_ref_b_rejected(self):
        rng = np.random.default_rng(1)
        ref_a = Povm(tuple(random_povm(2, 3, rng)))
        with pytest.raises(ContractViolation):
            OneWayLoccProtocol(alice_states={"0": np.eye(2) / 2}, bob_states={"0": np.eye(2) / 2},
                               ref_a=ref_a, ref_b=(Povm((np.eye(2),)),))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
