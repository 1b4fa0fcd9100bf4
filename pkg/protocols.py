"""
SMP protocols and the two-way LOCC referee engine.

Conventions:

* Side "A" (Ref_A, holding Alice's message) measures at even steps and side
  "B" at odd steps. A history is the tuple of all outcomes so far.
* Hidden-matching nodes are 0-based; an edge is a pair (i, j) with i < j and
  a matching is a sorted tuple of edges.
* In hidden-matching measurements outcome 2e + s means edge e of the matching
  with sign s (s = 0 for |i> + |j>, s = 1 for |i> - |j>), and s is the reported
  parity bit.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Tuple, Union

import numpy as np

from ensembles import random_density_matrix, random_effect, random_history_kraus, random_povm
from errors import ContractViolation, ResourceLimitError
from fingerprints import (
    CodeSpec,
    all_bitstrings,
    default_code,
    encode_array,
    fingerprint,
    fingerprint_overlap,
    swap_accept_prob,
    swap_circuit_sim,
)
from linalg import as_density_matrix, basis_ket, is_power_of_two, ket_to_density
from measurements import Instrument, Povm, instrument_apply, sample_outcome
from sim_config import MAX_LOCC_STEPS, SWAP_REPETITIONS, TOL

logger = logging.getLogger(__name__)

History = Tuple[int, ...]
Edge = Tuple[int, int]
Matching = Tuple[Edge, ...]


@dataclass(frozen=True, eq=False)
class SmpMessage:
    """A message sent to the referee: a classical bitstring or a quantum state."""
    kind: Literal["classical", "quantum"]
    payload: Union[str, np.ndarray]

    def __post_init__(self):
        if self.kind == "classical":
            if not isinstance(self.payload, str) or any(c not in "01" for c in self.payload):
                raise ContractViolation("classical message must be a bitstring")
        elif self.kind == "quantum":
            rho = as_density_matrix(self.payload)
            if not is_power_of_two(rho.shape[0]):
                raise ContractViolation(f"quantum message dimension {rho.shape[0]} is not a power of 2")
            object.__setattr__(self, "payload", rho)
        else:
            raise ContractViolation(f"unknown message kind {self.kind!r}")

    @property
    def length(self) -> int:
        """Bits for classical messages, qubits for quantum ones."""
        if self.kind == "classical":
            return len(self.payload)
        return int(round(math.log2(self.payload.shape[0])))


# ---------------------------------------------------------------------------
# Two-way LOCC engine
# ---------------------------------------------------------------------------

def last_a_outcome(history: History) -> int:
    """Default output rule: the final measurement outcome of Ref_A."""
    if not history:
        raise ContractViolation("empty history has no Ref_A outcome")
    return history[(len(history) - 1) // 2 * 2]


@dataclass(frozen=True)
class LoccProtocol:
    """Schedule plus history-conditioned instruments for the two referees.

    ``instrument(side, history)`` returns the instrument the given side applies
    after ``history``; it is only consulted for the side whose turn it is.
    """
    num_steps: int
    instrument: Callable[[str, History], Instrument]
    output: Callable[[History], Any] = last_a_outcome
    two_value: bool = True
    name: str = "locc"

    @staticmethod
    def side_of(step: int) -> str:
        return "A" if step % 2 == 0 else "B"

    def instrument_at(self, history: History) -> Instrument:
        side = self.side_of(len(history))
        ins = self.instrument(side, history)
        if self.two_value and len(ins) != 2:
            raise ContractViolation(f"{self.name}: {len(ins)}-outcome instrument in a 2-value protocol")
        return ins


@dataclass
class TranscriptDistribution:
    """Probabilities of complete (or degenerate, truncated) histories."""
    probs: Dict[History, float]
    outputs: Dict[History, Any] = field(default_factory=dict)

    def __post_init__(self):
        if any(p < -TOL for p in self.probs.values()):
            raise ContractViolation("negative transcript probability")
        total = sum(self.probs.values())
        if abs(total - 1) > TOL:
            raise ContractViolation(f"transcript probabilities sum to {total}")

    def output_distribution(self) -> Dict[Any, float]:
        dist: Dict[Any, float] = {}
        for history, p in self.probs.items():
            out = self.outputs.get(history)
            if out is not None:
                dist[out] = dist.get(out, 0.0) + p
        return dist

    def accept_prob(self) -> float:
        return self.output_distribution().get(1, 0.0)


def run_locc_exact(p: LoccProtocol, rho_a: np.ndarray, rho_b: np.ndarray) -> TranscriptDistribution:
    """Exact transcript distribution by depth-first enumeration of post-states.

    A branch whose probability is at most the degeneracy threshold keeps its
    exact probability under its truncated history and is not descended.
    """
    if p.num_steps > MAX_LOCC_STEPS:
        raise ResourceLimitError(f"{p.num_steps} steps exceed the enumeration cap {MAX_LOCC_STEPS}")
    probs: Dict[History, float] = {}
    outputs: Dict[History, Any] = {}

    def descend(history: History, states: Tuple[np.ndarray, np.ndarray], weight: float) -> None:
        if len(history) == p.num_steps:
            probs[history] = weight
            outputs[history] = p.output(history)
            return
        idx = 0 if p.side_of(len(history)) == "A" else 1
        ins = p.instrument_at(history)
        for m in range(len(ins)):
            branch = instrument_apply(ins, states[idx], m)
            child = history + (m,)
            if branch.degenerate:
                if branch.prob > 0:
                    probs[child] = weight * branch.prob
                    outputs[child] = None
                continue
            next_states = (branch.post, states[1]) if idx == 0 else (states[0], branch.post)
            descend(child, next_states, weight * branch.prob)

    descend((), (rho_a, rho_b), 1.0)
    return TranscriptDistribution(probs=probs, outputs=outputs)


def sample_locc(p: LoccProtocol, rho_a: np.ndarray, rho_b: np.ndarray,
                rng: np.random.Generator, runs: int) -> Counter:
    """Sampled execution: draw ``runs`` transcripts by measuring step by step.

    Post-states are computed once per visited node and reused across runs.
    """
    nodes: Dict[History, Tuple[np.ndarray, List[Optional[Tuple[np.ndarray, np.ndarray]]]]] = {}

    def expand(history: History, states: Tuple[np.ndarray, np.ndarray]):
        if history not in nodes:
            idx = 0 if p.side_of(len(history)) == "A" else 1
            ins = p.instrument_at(history)
            branch_probs, children = [], []
            for m in range(len(ins)):
                branch = instrument_apply(ins, states[idx], m)
                branch_probs.append(branch.prob)
                if branch.degenerate:
                    children.append(None)
                else:
                    children.append((branch.post, states[1]) if idx == 0 else (states[0], branch.post))
            nodes[history] = (np.array(branch_probs), children)
        return nodes[history]

    counts: Counter = Counter()
    for _ in range(runs):
        history: History = ()
        states = (rho_a, rho_b)
        while len(history) < p.num_steps:
            branch_probs, children = expand(history, states)
            m = sample_outcome(rng, branch_probs)
            history = history + (m,)
            if children[m] is None:
                break
            states = children[m]
        counts[history] += 1
    return counts


def idle_instrument(dim: int) -> Instrument:
    """Two-value instrument that always reports 0 and leaves the state alone."""
    return Instrument((np.eye(dim), np.zeros((dim, dim))))


def random_locc_protocol(rounds: int, dims: Tuple[int, int], rng: np.random.Generator) -> LoccProtocol:
    """Random 2-value protocol with 2 * rounds + 1 steps, ending with Ref_A."""
    num_steps = 2 * rounds + 1
    table = {key: Instrument(tuple(kraus)) for key, kraus in random_history_kraus(num_steps, dims, rng).items()}
    return LoccProtocol(num_steps=num_steps, instrument=lambda side, history: table[(side, history)],
                        name=f"random-r{rounds}")


def chain_protocol(chain: List[Instrument]) -> LoccProtocol:
    """Ref_A applies ``chain`` in order on outcome-independent steps; Ref_B idles on C^1."""
    idle = idle_instrument(1)

    def instrument(side: str, history: History) -> Instrument:
        return chain[len(history) // 2] if side == "A" else idle

    return LoccProtocol(num_steps=2 * len(chain) - 1, instrument=instrument, name="chain")


# ---------------------------------------------------------------------------
# Equality protocols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FingerprintEqProtocol:
    """Both players send k fingerprint copies; the referee runs k SWAP tests."""
    code: CodeSpec
    k: int = SWAP_REPETITIONS

    @property
    def message_qubits(self) -> int:
        return self.k * math.ceil(math.log2(2 * self.code.N))

    def accept_prob(self, x: str, y: str) -> float:
        return swap_accept_prob(fingerprint_overlap(self.code, x, y)) ** self.k

    def accept_prob_circuit(self, x: str, y: str) -> float:
        single = swap_circuit_sim(fingerprint(self.code, x).state, fingerprint(self.code, y).state)
        return single ** self.k


def fingerprint_eq_protocol(n: int, k: int = SWAP_REPETITIONS) -> FingerprintEqProtocol:
    if k < 1:
        raise ContractViolation("need at least one SWAP test")
    return FingerprintEqProtocol(code=default_code(n), k=k)


@dataclass(frozen=True)
class AmbainisEqProtocol:
    """Classical equality test on a square arrangement of the codeword.

    The codeword is laid out row-major on an s x s grid, s = ceil(sqrt(N)),
    padded with zeros. Alice sends a random row of her grid, Bob a random
    column of his; the referee compares the bit where they cross.
    """
    code: CodeSpec
    reps: int = 1

    @property
    def side(self) -> int:
        return math.isqrt(self.code.N - 1) + 1

    @property
    def message_bits(self) -> int:
        """Bits sent per repetition by both players together."""
        s = self.side
        return 2 * (s + math.ceil(math.log2(s)))

    @property
    def relative_distance(self) -> float:
        """Code distance over the padded grid size (equals d/N when N is a square)."""
        return self.code.min_distance / self.side ** 2

    def grid(self, x: str) -> np.ndarray:
        s = self.side
        padded = np.zeros(s * s, dtype=np.uint8)
        padded[:self.code.N] = encode_array(self.code, x)
        return padded.reshape(s, s)

    def single_accept_prob(self, x: str, y: str) -> float:
        """Exact single-repetition acceptance, enumerating every (row, column) pair."""
        return float(np.mean(self.grid(x) == self.grid(y)))

    def reject_prob(self, x: str, y: str) -> float:
        return 1 - self.single_accept_prob(x, y)

    def accept_prob(self, x: str, y: str) -> float:
        return self.single_accept_prob(x, y) ** self.reps


def ambainis_eq_protocol(n: int, reps: int = 1) -> AmbainisEqProtocol:
    if reps < 1:
        raise ContractViolation("need at least one repetition")
    return AmbainisEqProtocol(code=default_code(n), reps=reps)


# ---------------------------------------------------------------------------
# Hidden matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatchingFamily:
    n: int
    matchings: Tuple[Matching, ...]

    def __post_init__(self):
        seen = set()
        for matching in self.matchings:
            validate_matching(self.n, matching)
            for edge in matching:
                if edge in seen:
                    raise ContractViolation(f"edge {edge} appears in two matchings")
                seen.add(edge)

    @property
    def size(self) -> int:
        return len(self.matchings)

    @property
    def index_bits(self) -> int:
        return math.ceil(math.log2(self.size)) if self.size > 1 else 0

    def check_index(self, index: int) -> int:
        if not 0 <= index < self.size:
            raise ContractViolation(f"matching index {index} out of range (family of {self.size})")
        return index

    def __getitem__(self, index: int) -> Matching:
        return self.matchings[self.check_index(index)]


def validate_matching(n: int, matching: Iterable[Edge]) -> None:
    covered = []
    for i, j in matching:
        if not (0 <= i < j < n):
            raise ContractViolation(f"bad edge {(i, j)} for n={n}")
        covered.extend((i, j))
    if sorted(covered) != list(range(n)):
        raise ContractViolation(f"not a perfect matching on {n} nodes: {tuple(matching)}")


@lru_cache(maxsize=None)
def matching_family(n: int) -> MatchingFamily:
    """Round-robin 1-factorisation of K_n: n - 1 edge-disjoint perfect matchings."""
    if n < 2 or n % 2:
        raise ContractViolation(f"matching family needs an even n >= 2, got {n}")
    rounds = n - 1
    matchings = []
    for k in range(rounds):
        edges = [(min(k, n - 1), max(k, n - 1))]
        for i in range(1, n // 2):
            a, b = (k + i) % rounds, (k - i) % rounds
            edges.append((min(a, b), max(a, b)))
        matchings.append(tuple(sorted(edges)))
    return MatchingFamily(n=n, matchings=tuple(sorted(matchings)))


def phase_state(x: str) -> np.ndarray:
    """n^{-1/2} sum_i (-1)^{x(i)} |i>."""
    signs = np.array([-1.0 if b == "1" else 1.0 for b in x], dtype=complex)
    return signs / np.sqrt(len(x))


def _pm_vector(n: int, edge: Edge, sign: int) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[edge[0]] = 1 / np.sqrt(2)
    v[edge[1]] = (-1 if sign else 1) / np.sqrt(2)
    return v


def hm_kraus(n: int, matching: Matching, register_dim: int = 1) -> Tuple[np.ndarray, ...]:
    """Kraus operators |+-_e><+-_e| (x) I_register, outcome 2e + s."""
    kraus = []
    for edge in matching:
        for sign in (0, 1):
            v = _pm_vector(n, edge, sign)
            kraus.append(np.kron(np.outer(v, v.conj()), np.eye(register_dim)))
    return tuple(kraus)


def decode_hm_outcome(matching: Matching, outcome: int) -> Tuple[int, int, int]:
    i, j = matching[outcome // 2]
    return (i, j, outcome % 2)


def _check_hm_size(n: int) -> None:
    if not (n >= 2 and is_power_of_two(n)):
        raise ContractViolation(f"hidden matching needs n a power of 2, got {n}")


def hm_protocol(n: int, x: str, matching: Matching) -> Dict[Tuple[int, int, int], float]:
    """Output distribution of the one-way hidden-matching protocol.

    Alice's phase state is measured with the projectors onto span{|i>, |j>} for
    the edges of the matching, refined into the |i> +- |j> basis.
    """
    _check_hm_size(n)
    if len(x) != n:
        raise ContractViolation(f"input length {len(x)} does not match n={n}")
    matching = tuple(sorted(matching))
    validate_matching(n, matching)
    ins = Instrument(hm_kraus(n, matching))
    rho = ket_to_density(phase_state(x))
    dist = {}
    for outcome in range(len(ins)):
        branch = instrument_apply(ins, rho, outcome)
        if not branch.degenerate:
            dist[decode_hm_outcome(matching, outcome)] = branch.prob
    return dist


def hm_output_correct(x: str, matching: Matching, output: Tuple[int, int, int]) -> bool:
    i, j, b = output
    return (i, j) in matching and b == (int(x[i]) ^ int(x[j]))


@dataclass(frozen=True)
class RhmHybridProtocol:
    """Restricted hidden matching with a quantum message from Alice and a classical one from Bob.

    Bob sends the index of his matching in the family; the referee runs the
    hidden-matching measurement on Alice's phase state.
    """
    family: MatchingFamily

    @property
    def alice_qubits(self) -> int:
        return int(math.log2(self.family.n))

    @property
    def bob_bits(self) -> int:
        return self.family.index_bits

    def bob_message(self, matching_index: int) -> SmpMessage:
        self.family.check_index(matching_index)
        bits = format(matching_index, f"0{self.bob_bits}b") if self.bob_bits else ""
        return SmpMessage(kind="classical", payload=bits)

    def output_distribution(self, x: str, matching_index: int) -> Dict[Tuple[int, int, int], float]:
        message = self.bob_message(matching_index)
        index = int(message.payload, 2) if message.payload else 0
        return hm_protocol(self.family.n, x, self.family[index])


def rhm_hybrid_protocol(n: int) -> RhmHybridProtocol:
    _check_hm_size(n)
    return RhmHybridProtocol(family=matching_family(n))


# ---------------------------------------------------------------------------
# Distributed restricted hidden matching (two-way LOCC)
# ---------------------------------------------------------------------------

DrhmOutput = Tuple[Tuple[int, int, int], Tuple[int, int, int]]


@dataclass(frozen=True, eq=False)
class DrhmInstance:
    """A DRHM protocol together with the two messages it runs on.

    Alice holds (x1, M2) and sends phase(x1) (x) |M2>; Bob holds (x2, M1) and
    sends phase(x2) (x) |M1>. The output is a pair of tuples, one per referee:
    an edge of M1 with the parity of x1 on it and an edge of M2 with the parity
    of x2.
    """
    protocol: LoccProtocol
    rho_a: np.ndarray
    rho_b: np.ndarray
    x1: str
    x2: str
    m1: int
    m2: int
    family: MatchingFamily

    @property
    def rounds(self) -> int:
        return self.protocol.num_steps

    @property
    def total_qubits(self) -> int:
        return 2 * (int(math.log2(self.family.n)) + self.family.index_bits)

    def is_correct(self, output: DrhmOutput) -> bool:
        first, second = output
        return (hm_output_correct(self.x1, self.family[self.m1], first)
                and hm_output_correct(self.x2, self.family[self.m2], second))

    def run(self) -> TranscriptDistribution:
        return run_locc_exact(self.protocol, self.rho_a, self.rho_b)


def _drhm_messages(n: int, x1: str, m2: int, x2: str, m1: int, family: MatchingFamily):
    _check_hm_size(n)
    if len(x1) != n or len(x2) != n:
        raise ContractViolation(f"inputs must have length n={n}")
    family.check_index(m1)
    family.check_index(m2)
    register = 1 << family.index_bits
    rho_a = np.kron(ket_to_density(phase_state(x1)), ket_to_density(basis_ket(register, m2)))
    rho_b = np.kron(ket_to_density(phase_state(x2)), ket_to_density(basis_ket(register, m1)))
    return rho_a, rho_b, register


def drhm_locc_protocol(n: int, x1: str, m2: int, x2: str, m1: int) -> DrhmInstance:
    """Four-step protocol: each referee reads the matching register it holds,
    then each runs the hidden-matching measurement for the matching it learned.
    """
    family = matching_family(n)
    rho_a, rho_b, register = _drhm_messages(n, x1, m2, x2, m1, family)

    @lru_cache(maxsize=None)
    def read_register() -> Instrument:
        return Instrument(tuple(np.kron(np.eye(n), ket_to_density(basis_ket(register, k)))
                                for k in range(register)))

    @lru_cache(maxsize=None)
    def hm_measure(index: int) -> Instrument:
        return Instrument(hm_kraus(n, family[index], register))

    def instrument(side: str, history: History) -> Instrument:
        if len(history) < 2:
            return read_register()
        # Ref_A learned M2 and Ref_B learned M1; each needs the other's matching.
        return hm_measure(history[1] if side == "A" else history[0])

    def output(history: History) -> DrhmOutput:
        read_m2, read_m1, out_a, out_b = history
        return (decode_hm_outcome(family[read_m1], out_a), decode_hm_outcome(family[read_m2], out_b))

    protocol = LoccProtocol(num_steps=4, instrument=instrument, output=output,
                            two_value=False, name=f"drhm-{n}")
    return DrhmInstance(protocol=protocol, rho_a=rho_a, rho_b=rho_b, x1=x1, x2=x2,
                        m1=m1, m2=m2, family=family)


def drhm_two_value_rounds(n: int, x1: str, m2: int, x2: str, m1: int) -> DrhmInstance:
    """DRHM with 2-value measurements only.

    Schedule (A and B alternate, no idle steps):
      * w = ceil(log2(n - 1)) rounds per side reading the matching register bit
        by bit, most significant first;
      * log2(n / 2) rounds per side halving the candidate edge set of the
        matching learned from the other side;
      * one round per side measuring {|+_e><+_e|, I - |+_e><+_e|} on the
        remaining edge e.
    Total steps: 2 * log2(n) + 2 * w.
    """
    family = matching_family(n)
    rho_a, rho_b, register = _drhm_messages(n, x1, m2, x2, m1, family)
    w = family.index_bits
    halvings = int(math.log2(n // 2))
    num_steps = 2 * (w + halvings + 1)
    eye_register = np.eye(register)

    def bits_value(bits: Iterable[int]) -> int:
        value = 0
        for b in bits:
            value = 2 * value + b
        return value

    @lru_cache(maxsize=None)
    def read_bit(t: int) -> Instrument:
        shift = w - 1 - t
        zero = np.diag([1.0 if not (k >> shift) & 1 else 0.0 for k in range(register)])
        return Instrument((np.kron(np.eye(n), zero), np.kron(np.eye(n), eye_register - zero)))

    @lru_cache(maxsize=None)
    def halve(index: int, depth: int, prefix: int) -> Instrument:
        matching = family[index]
        block = len(matching) >> depth
        start = prefix * block
        first_half = matching[start:start + block // 2]
        proj = np.zeros((n, n), dtype=complex)
        for i, j in first_half:
            proj[i, i] = proj[j, j] = 1.0
        lifted = np.kron(proj, eye_register)
        return Instrument((lifted, np.eye(n * register) - lifted))

    @lru_cache(maxsize=None)
    def sign(index: int, edge: int) -> Instrument:
        v = _pm_vector(n, family[index][edge], 0)
        plus = np.kron(np.outer(v, v.conj()), eye_register)
        return Instrument((plus, np.eye(n * register) - plus))

    def instrument(side: str, history: History) -> Instrument:
        step = len(history)
        if step < 2 * w:
            return read_bit(step // 2)
        own = 0 if side == "A" else 1
        learned = bits_value(history[1 - own:2 * w:2])
        phase_bits = history[2 * w + own:step:2]
        depth = len(phase_bits)
        if depth < halvings:
            return halve(learned, depth, bits_value(phase_bits))
        return sign(learned, bits_value(phase_bits))

    def output(history: History) -> DrhmOutput:
        read_m2 = bits_value(history[0:2 * w:2])
        read_m1 = bits_value(history[1:2 * w:2])
        tail_a = history[2 * w::2]
        tail_b = history[2 * w + 1::2]
        i, j = family[read_m1][bits_value(tail_a[:-1])]
        k, l = family[read_m2][bits_value(tail_b[:-1])]
        return ((i, j, tail_a[-1]), (k, l, tail_b[-1]))

    protocol = LoccProtocol(num_steps=num_steps, instrument=instrument, output=output,
                            two_value=True, name=f"drhm-2v-{n}")
    logger.debug(f"DRHM n={n}: {num_steps} two-value rounds (w={w}, halvings={halvings})")
    return DrhmInstance(protocol=protocol, rho_a=rho_a, rho_b=rho_b, x1=x1, x2=x2,
                        m1=m1, m2=m2, family=family)


def total_variation(p: Dict[Any, float], q: Dict[Any, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# One-way LOCC protocols
# ---------------------------------------------------------------------------

def bob_outcome(a: int, b: int) -> int:
    return b


@dataclass(frozen=True, eq=False)
class OneWayLoccProtocol:
    """Ref_A measures Alice's message with ``ref_a``; Ref_B then measures Bob's
    message with ``ref_b[a]`` and the output is ``output(a, b)``.
    """
    alice_states: Dict[str, np.ndarray]
    bob_states: Dict[str, np.ndarray]
    ref_a: Povm
    ref_b: Tuple[Povm, ...]
    output: Callable[[int, int], Any] = bob_outcome
    name: str = "locc1"

    def __post_init__(self):
        if len(self.ref_b) != len(self.ref_a):
            raise ContractViolation(f"{self.name}: need one Ref_B POVM per Ref_A outcome")
        for x, rho in self.alice_states.items():
            if rho.shape != (self.ref_a.dim, self.ref_a.dim):
                raise ContractViolation(f"{self.name}: Alice's state for {x} does not fit Ref_A")
        for y, sigma in self.bob_states.items():
            for povm in self.ref_b:
                if sigma.shape != (povm.dim, povm.dim):
                    raise ContractViolation(f"{self.name}: Bob's state for {y} does not fit Ref_B")

    @property
    def xs(self) -> List[str]:
        return sorted(self.alice_states)

    @property
    def ys(self) -> List[str]:
        return sorted(self.bob_states)

    def output_distribution(self, x: str, y: str, a_probs: Optional[np.ndarray] = None) -> Dict[Any, float]:
        """Output distribution; ``a_probs`` replaces Ref_A's statistics when given."""
        if a_probs is None:
            a_probs = self.ref_a.probabilities(self.alice_states[x])
        sigma = self.bob_states[y]
        dist: Dict[Any, float] = {}
        for a, pa in enumerate(a_probs):
            if pa <= 0:
                continue
            for b, pb in enumerate(self.ref_b[a].probabilities(sigma)):
                out = self.output(a, b)
                dist[out] = dist.get(out, 0.0) + float(pa * pb)
        return dist

    def accept_prob(self, x: str, y: str) -> float:
        return self.output_distribution(x, y).get(1, 0.0)


def incoherent_one_way(alice_states: Dict[str, np.ndarray], n: int, ref_a: Povm,
                       decide: Callable[[int, str], bool]) -> OneWayLoccProtocol:
    """One-way protocol where Bob sends |y> in the computational basis.

    Ref_B accepts (outcome 1) on Ref_A outcome a iff ``decide(a, y)``.
    """
    ys = all_bitstrings(n)
    dim = 2 ** n
    bob_states = {y: ket_to_density(basis_ket(dim, int(y, 2) if n else 0)) for y in ys}
    ref_b = []
    for a in range(len(ref_a)):
        accept = np.diag([1.0 if decide(a, y) else 0.0 for y in ys]).astype(complex)
        ref_b.append(Povm((np.eye(dim) - accept, accept)))
    return OneWayLoccProtocol(alice_states=alice_states, bob_states=bob_states, ref_a=ref_a,
                              ref_b=tuple(ref_b), name=f"incoherent-{n}")


def random_one_way_protocol(n: int, rng: np.random.Generator, max_qubits: int = 3,
                            max_outcomes: int = 4) -> OneWayLoccProtocol:
    """Random states for every input, a random Ref_A POVM and random two-outcome Ref_B POVMs."""
    qa, qb = (int(q) for q in rng.integers(1, max_qubits + 1, 2))
    da, db = 2 ** qa, 2 ** qb
    outcomes = int(rng.integers(2, max_outcomes + 1))
    inputs = all_bitstrings(n)
    alice_states = {x: random_density_matrix(da, rng) for x in inputs}
    bob_states = {y: random_density_matrix(db, rng) for y in inputs}
    ref_a = Povm(tuple(random_povm(da, outcomes, rng)))
    ref_b = []
    for _ in range(outcomes):
        e = random_effect(db, rng)
        ref_b.append(Povm((np.eye(db) - e, e)))
    return OneWayLoccProtocol(alice_states=alice_states, bob_states=bob_states, ref_a=ref_a,
                              ref_b=tuple(ref_b), name=f"random-locc1-{qa}x{qb}")
