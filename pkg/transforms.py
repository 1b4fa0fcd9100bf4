"""
Protocol transformations and their numerical error bounds.

* Value tables: v_{m|h}, the trace of one referee's message after the nested
  Kraus chain along history h followed by outcome m. Ratios of consecutive
  entries reproduce the sequential conditional probabilities exactly.
* Clamping and table-driven simulation of a 2-value LOCC protocol when one or
  both messages are replaced by estimated tables.
* Deterministic message replacement: a short list of (index, truncated
  probability) pairs from which the receiver recomputes estimates of tr(E_b rho)
  for the whole family {E_b}.
* One-way LOCC to hybrid (classical + quantum) protocols via projective
  simulation of Ref_A's POVM.
* Newman-style derandomisation of public-coin protocols.
* The sequential ("quantum union bound") check.
"""

from __future__ import annotations

import logging
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np

from errors import (
    ContractViolation,
    DegenerateBranchError,
    DegenerateProjectionError,
    HypothesisViolation,
    ReplayIntegrityError,
    ResourceLimitError,
    SamplingExhaustedError,
)
from fingerprints import all_messages
from linalg import (
    copy_average_expectation,
    copy_average_window_project,
    is_effect,
    is_power_of_two,
)
from measurements import (
    Instrument,
    PmSimulation,
    instrument_apply,
    naimark_dilate,
    pm_simulate_two_outcome,
    sample_outcome,
)
from protocols import History, LoccProtocol, OneWayLoccProtocol, SmpMessage
from sim_config import (
    DEGENERACY,
    MAX_NEWMAN_PAIRS,
    MAX_REPLACE_QUBITS,
    MAX_VALUE_TABLE_ROUNDS,
    NEWMAN_RETRIES,
    TOL,
    TRUNCATION_EXTRA_BITS,
)

logger = logging.getLogger(__name__)

Key = Tuple[int, History]
ClampRule = Literal["nested", "independent"]
PerturbPattern = Literal["random", "plus", "minus", "alternating"]


# ---------------------------------------------------------------------------
# Value tables
# ---------------------------------------------------------------------------

def _key_order(key: Key):
    m, h = key
    return (len(h), h, m)


@dataclass
class ValueTable:
    """v_{m|h} for every outcome m of ``side`` and every history h preceding it.

    Entries with len(h) < 2 are roots (the side's first measurement). The
    parent of (m, h) is (h[-2], h[:-2]): the same side's previous outcome.
    """
    side: str
    num_steps: int
    values: Dict[Key, float]

    @property
    def rounds(self) -> int:
        return self.num_steps // 2

    def keys(self) -> List[Key]:
        return sorted(self.values, key=_key_order)

    def histories(self) -> List[History]:
        return sorted({h for _, h in self.values}, key=lambda h: (len(h), h))

    @staticmethod
    def parent_key(key: Key) -> Optional[Key]:
        _, h = key
        if len(h) < 2:
            return None
        return (h[-2], h[:-2])

    @staticmethod
    def depth(key: Key) -> int:
        return len(key[1]) // 2

    def final_histories(self) -> List[History]:
        longest = max(len(h) for _, h in self.values)
        return [h for h in self.histories() if len(h) == longest]

    def parent_value(self, key: Key) -> float:
        parent = self.parent_key(key)
        return 1.0 if parent is None else self.values[parent]

    def consistency_error(self) -> float:
        """Largest violation of sum_m v_{m|h} = v_{parent}, roots summing to 1."""
        totals: Dict[History, float] = {}
        for (_, h), v in self.values.items():
            totals[h] = totals.get(h, 0.0) + v
        return max((abs(total - self.parent_value((0, h))) for h, total in totals.items()), default=0.0)

    def copy_with(self, values: Dict[Key, float]) -> "ValueTable":
        return ValueTable(side=self.side, num_steps=self.num_steps, values=values)


@dataclass
class ClampedTable(ValueTable):
    """Clamped values v''. Under the nested rule every entry is nonnegative and
    v''_{0|hab} + v''_{1|hab} = v''_{a|h} (up to rounding).
    """
    rule: ClampRule = "nested"

    def __post_init__(self):
        if self.rule == "nested":
            if any(v < 0 for v in self.values.values()):
                raise ContractViolation("clamped table has a negative entry")
            if self.consistency_error() > 1e-12:
                raise ContractViolation("clamped table is not branching consistent")


def _check_rounds(protocol: LoccProtocol) -> None:
    if protocol.num_steps > 2 * MAX_VALUE_TABLE_ROUNDS + 1:
        raise ResourceLimitError(f"value tables are capped at {MAX_VALUE_TABLE_ROUNDS} rounds")


def value_table(protocol: LoccProtocol, rho: np.ndarray, side: str = "A") -> ValueTable:
    """Traces of ``rho`` conjugated by the side's Kraus chain, for all histories.

    The other side's outcomes only select which instrument comes next.
    """
    _check_rounds(protocol)
    values: Dict[Key, float] = {}

    def descend(history: History, sigma: np.ndarray) -> None:
        if len(history) == protocol.num_steps:
            return
        ins = protocol.instrument_at(history)
        if protocol.side_of(len(history)) != side:
            for m in range(len(ins)):
                descend(history + (m,), sigma)
            return
        for m, k in enumerate(ins.kraus):
            child = k @ sigma @ k.conj().T
            values[(m, history)] = float(np.real(np.trace(child)))
            descend(history + (m,), child)

    descend((), rho)
    return ValueTable(side=side, num_steps=protocol.num_steps, values=values)


def chain_effects(protocol: LoccProtocol, side: str, dim: int) -> Dict[Key, np.ndarray]:
    """Heisenberg-picture effects E_{m|h} with v_{m|h} = tr(E_{m|h} rho)."""
    _check_rounds(protocol)
    effects: Dict[Key, np.ndarray] = {}

    def descend(history: History, prefix: np.ndarray) -> None:
        if len(history) == protocol.num_steps:
            return
        ins = protocol.instrument_at(history)
        if protocol.side_of(len(history)) != side:
            for m in range(len(ins)):
                descend(history + (m,), prefix)
            return
        for m, k in enumerate(ins.kraus):
            chained = k @ prefix
            e = chained.conj().T @ chained
            effects[(m, history)] = (e + e.conj().T) / 2
            descend(history + (m,), chained)

    descend((), np.eye(dim, dtype=complex))
    return effects


def ratio_conditionals(vt: ValueTable, history: History) -> List[float]:
    """Conditional probabilities of the side's outcomes along ``history`` as v_k / v_{k-1}."""
    conditionals = []
    for i in range(len(history)):
        if LoccProtocol.side_of(i) != vt.side:
            continue
        key = (history[i], history[:i])
        denominator = vt.parent_value(key)
        if denominator <= DEGENERACY:
            raise DegenerateBranchError(f"zero denominator at {key}")
        conditionals.append(vt.values[key] / denominator)
    return conditionals


def sequential_conditionals(protocol: LoccProtocol, rho: np.ndarray, history: History,
                            side: str = "A") -> List[float]:
    """Same conditionals by measuring and renormalising step by step."""
    state = rho
    conditionals = []
    for i in range(len(history)):
        if protocol.side_of(i) != side:
            continue
        branch = instrument_apply(protocol.instrument_at(history[:i]), state, history[i])
        if branch.degenerate:
            raise DegenerateBranchError(f"degenerate branch at step {i} of {history}")
        conditionals.append(branch.prob)
        state = branch.post
    return conditionals


def clamp_table(vt: ValueTable, rule: ClampRule = "nested") -> ClampedTable:
    """Turn estimated values into a valid probability tree.

    Roots: v''_0 = clamp(v'_0, 0, 1) and v''_1 = 1 - v''_0. Below a parent
    value P = v''_{a|h}:

    * nested (default): v''_{0|hab} = clamp(v'_{0|hab}, 0, P), v''_{1|hab} = P - v''_{0|hab};
    * independent: every v''_{m|hab} = clamp(v'_{m|hab}, 0, P) on its own, which
      need not be branching consistent.
    """
    if rule not in ("nested", "independent"):
        raise ContractViolation(f"unknown clamp rule {rule!r}")
    clamped: Dict[Key, float] = {}
    for h in vt.histories():
        if (0, h) not in vt.values or (1, h) not in vt.values or (2, h) in vt.values:
            raise ContractViolation(f"clamping needs exactly two outcomes after {h}")
        parent = ValueTable.parent_key((0, h))
        ceiling = 1.0 if parent is None else clamped[parent]
        if rule == "nested" or parent is None:
            zero = min(max(vt.values[(0, h)], 0.0), ceiling)
            clamped[(0, h)] = zero
            clamped[(1, h)] = ceiling - zero
        else:
            for m in (0, 1):
                clamped[(m, h)] = min(max(vt.values[(m, h)], 0.0), ceiling)
    return ClampedTable(side=vt.side, num_steps=vt.num_steps, values=clamped, rule=rule)


def perturb_table(vt: ValueTable, delta: float, rng: Optional[np.random.Generator] = None,
                  pattern: PerturbPattern = "random") -> ValueTable:
    """Shift every entry by at most delta.

    random: independent uniform shifts in [-delta, delta]; plus / minus: every
    entry by +delta / -delta; alternating: +delta at even depth, -delta at odd.
    """
    keys = vt.keys()
    if pattern == "random":
        if rng is None:
            raise ContractViolation("random perturbations need a generator")
        shifts = rng.uniform(-delta, delta, len(keys))
    elif pattern == "plus":
        shifts = np.full(len(keys), delta)
    elif pattern == "minus":
        shifts = np.full(len(keys), -delta)
    elif pattern == "alternating":
        shifts = np.array([delta if vt.depth(k) % 2 == 0 else -delta for k in keys])
    else:
        raise ContractViolation(f"unknown perturbation pattern {pattern!r}")
    return vt.copy_with({k: vt.values[k] + float(s) for k, s in zip(keys, shifts)})


def clamp_depth_excess(exact: ValueTable, clamped: ValueTable, delta: float) -> float:
    """max over entries of |v'' - v| - (depth + 1) * delta; <= 0 when the depth bound holds."""
    return max(abs(clamped.values[k] - v) - (exact.depth(k) + 1) * delta for k, v in exact.values.items())


def b_side_conditionals(protocol: LoccProtocol, rho_b: np.ndarray) -> Dict[Key, float]:
    """Exact p^B_{m|h} by running Ref_B's instruments sequentially on rho_b."""
    conditionals: Dict[Key, float] = {}

    def descend(history: History, state: np.ndarray) -> None:
        if len(history) == protocol.num_steps:
            return
        ins = protocol.instrument_at(history)
        if protocol.side_of(len(history)) == "A":
            for m in range(len(ins)):
                descend(history + (m,), state)
            return
        for m in range(len(ins)):
            branch = instrument_apply(ins, state, m)
            conditionals[(m, history)] = branch.prob
            if not branch.degenerate:
                descend(history + (m,), branch.post)

    descend((), rho_b)
    return conditionals


def branch_weights(conditionals: Dict[Key, float], histories: Sequence[History]) -> Dict[History, float]:
    """Product of Ref_B conditionals along each history (0 past a degenerate branch)."""
    weights = {}
    for history in histories:
        weight = 1.0
        for i in range(1, len(history), 2):
            weight *= conditionals.get((history[i], history[:i]), 0.0)
        weights[history] = weight
    return weights


def _final_a_histories(table: ValueTable) -> List[History]:
    if table.side != "A" or LoccProtocol.side_of(table.num_steps - 1) != "A":
        raise ContractViolation("table simulation needs a protocol whose last step is Ref_A's")
    return table.final_histories()


def simulate_from_tables(ct: ValueTable, b_conditionals: Dict[Key, float], output: int = 1) -> float:
    """Acceptance sum_h (prod of exact p^B along h) * v''_{output|h} with Alice's side replaced."""
    weights = branch_weights(b_conditionals, _final_a_histories(ct))
    return sum(w * ct.values[(output, h)] for h, w in weights.items())


def _b_final_value(ct_b: ValueTable, history: History) -> float:
    # The B ratios along h telescope to the last B entry.
    if not history:
        return 1.0
    return ct_b.values[(history[-1], history[:-1])]


def simulate_both_replaced(ct_a: ValueTable, ct_b: ValueTable, output: int = 1) -> float:
    """Acceptance with both messages replaced: sum_h v''^A_{output|h} * prod of v''^B ratios."""
    return output_distribution_both_replaced(ct_a, ct_b).get(output, 0.0)


def output_distribution_both_replaced(ct_a: ValueTable, ct_b: ValueTable) -> Dict[int, float]:
    """Distribution of Ref_A's final outcome with both sides replaced."""
    finals = set(_final_a_histories(ct_a))
    dist: Dict[int, float] = {}
    for (m, h), v in ct_a.values.items():
        if h in finals:
            dist[m] = dist.get(m, 0.0) + v * _b_final_value(ct_b, h)
    return dist


def one_side_bound(rounds: int, delta: float) -> float:
    """Error bound for replacing one message: 2 delta for one round, 2^r (r + 1) delta beyond."""
    if rounds <= 1:
        return 2 * delta
    return 2 ** rounds * (rounds + 1) * delta


def both_sides_envelope(rounds: int, delta: float) -> float:
    return 2 ** (2 * rounds) * (2 * (rounds + 1) * delta + (rounds + 1) ** 2 * delta ** 2)


# ---------------------------------------------------------------------------
# Deterministic message replacement
# ---------------------------------------------------------------------------

_MAGIC = b"RPM1"
_HEADER = struct.Struct(">BBBBdI")


def fraction_bits(delta: float) -> int:
    if not 0 < delta < 1:
        raise ContractViolation(f"truncation needs delta in (0, 1), got {delta}")
    return math.ceil(math.log2(1 / delta)) + TRUNCATION_EXTRA_BITS


def truncate_probability(p: float, bits: int) -> int:
    """Numerator of floor(p * 2^bits) / 2^bits, kept representable in ``bits`` bits."""
    return min(int(math.floor(min(max(p, 0.0), 1.0) * 2 ** bits)), 2 ** bits - 1)


@dataclass(frozen=True)
class ReplaceMessage:
    """Pairs (b, numerator of the truncated p_b) for the indices where the
    running estimate was off by more than delta, plus the run parameters.
    """
    q: int
    r: int
    c: int
    delta: float
    fraction_bits: int
    pairs: Tuple[Tuple[int, int], ...] = ()

    @property
    def t(self) -> int:
        return len(self.pairs)

    @property
    def t_bound(self) -> float:
        """(rq + 1) / log2(1 / (1 - delta / 4)), from eta^t >= 2^-(rq+1)."""
        return (self.r * self.q + 1) / math.log2(1 / (1 - self.delta / 4))

    @property
    def implied_constant(self) -> float:
        """C in r = (C / delta^2) log(q / delta) for the chosen r."""
        return self.r * self.delta ** 2 / math.log(max(self.q, 1) / self.delta)

    @property
    def bit_length(self) -> int:
        return self.t * (self.c + self.fraction_bits)

    def truncated(self, numerator: int) -> float:
        return numerator / 2 ** self.fraction_bits


def encode_message(msg: ReplaceMessage) -> bytes:
    """Byte layout: b"RPM1", u8 q, u8 r, u8 c, u8 fraction bits, f64 delta, u32 t,
    then t records of a ceil(c/8)-byte index and a ceil(k/8)-byte numerator,
    all big-endian.
    """
    index_bytes = max(1, math.ceil(msg.c / 8))
    value_bytes = math.ceil(msg.fraction_bits / 8)
    out = bytearray(_MAGIC)
    out += _HEADER.pack(msg.q, msg.r, msg.c, msg.fraction_bits, msg.delta, msg.t)
    for index, numerator in msg.pairs:
        out += index.to_bytes(index_bytes, "big")
        out += numerator.to_bytes(value_bytes, "big")
    return bytes(out)


def decode_message(data: bytes) -> ReplaceMessage:
    if data[:4] != _MAGIC:
        raise ReplayIntegrityError("not a replacement message")
    q, r, c, bits, delta, t = _HEADER.unpack_from(data, 4)
    index_bytes = max(1, math.ceil(c / 8))
    value_bytes = math.ceil(bits / 8)
    offset = 4 + _HEADER.size
    if len(data) != offset + t * (index_bytes + value_bytes):
        raise ReplayIntegrityError(f"message length {len(data)} does not match {t} records")
    pairs = []
    for _ in range(t):
        index = int.from_bytes(data[offset:offset + index_bytes], "big")
        offset += index_bytes
        numerator = int.from_bytes(data[offset:offset + value_bytes], "big")
        offset += value_bytes
        pairs.append((index, numerator))
    return ReplaceMessage(q=q, r=r, c=c, delta=delta, fraction_bits=bits, pairs=tuple(pairs))


def _family_shape(effects: Sequence[np.ndarray], r: int) -> Tuple[int, int]:
    if not effects or not is_power_of_two(len(effects)):
        raise ContractViolation(f"need 2^c effects, got {len(effects)}")
    d = effects[0].shape[0]
    if not is_power_of_two(d):
        raise ContractViolation(f"effect dimension {d} is not a power of 2")
    for b, e in enumerate(effects):
        if e.shape != (d, d) or not is_effect(e):
            raise ContractViolation(f"E_{b} is not an effect on C^{d}")
    q = int(math.log2(d))
    if q * r > MAX_REPLACE_QUBITS:
        raise ResourceLimitError(f"r * q = {q * r} exceeds {MAX_REPLACE_QUBITS} qubits")
    return q, int(math.log2(len(effects)))


def _window(state: np.ndarray, e: np.ndarray, r: int, centre: float, delta: float) -> Tuple[np.ndarray, float]:
    projected = copy_average_window_project(state, e, r, centre - delta / 2, centre + delta / 2)
    weight = float(np.real(np.trace(projected)))
    return projected, weight


def _alice_walk(rho: np.ndarray, effects: Sequence[np.ndarray], delta: float, r: int,
                bits: int) -> Iterator[Tuple[int, np.ndarray, Optional[Tuple[int, int]]]]:
    """Yield (b, rho_b, pair or None); the state is projected after a bad index."""
    dim = rho.shape[0] ** r
    state = np.eye(dim, dtype=complex) / dim
    for b, e in enumerate(effects):
        p = float(np.real(np.trace(e @ rho)))
        estimate = copy_average_expectation(state, e, r)
        pair = None
        if abs(estimate - p) > delta:
            pair = (b, truncate_probability(p, bits))
        yield b, state, pair
        if pair is not None:
            projected, weight = _window(state, e, r, pair[1] / 2 ** bits, delta)
            if weight <= DEGENERACY:
                raise DegenerateProjectionError(
                    f"window around {pair[1] / 2 ** bits:.6f} for E_{b} keeps weight {weight:.3e}",
                    index=b, weight=weight,
                )
            state = projected / weight


def _bob_walk(effects: Sequence[np.ndarray], delta: float, r: int, bits: int,
              lookup: Callable[[int], Optional[int]]) -> Iterator[Tuple[int, np.ndarray, float]]:
    """Yield (b, rho_b, estimate of p_b) replaying the sender's sequence."""
    d = effects[0].shape[0]
    dim = d ** r
    state = np.eye(dim, dtype=complex) / dim
    for b, e in enumerate(effects):
        numerator = lookup(b)
        if numerator is None:
            yield b, state, copy_average_expectation(state, e, r)
            continue
        yield b, state, numerator / 2 ** bits
        projected, weight = _window(state, e, r, numerator / 2 ** bits, delta)
        if weight <= DEGENERACY:
            raise ReplayIntegrityError(f"replay projection for E_{b} is degenerate (weight {weight:.3e})")
        state = projected / weight


def replace_message(rho: np.ndarray, effects: Sequence[np.ndarray], delta: float, r: int) -> ReplaceMessage:
    """Deterministic classical replacement of r copies of rho for the family {E_b}.

    Starting from the maximally mixed state on r copies, index b is good when
    the running estimate tr(F_b rho_b) of the copy-average F_b is within delta of
    p_b = tr(E_b rho). A bad index is recorded with its truncated probability
    and the running state is projected onto the eigenvectors of F_b in the
    window [p~_b - delta/2, p~_b + delta/2] and renormalised.

    Raises:
        DegenerateProjectionError: the window keeps (almost) none of the state
    """
    q, c = _family_shape(effects, r)
    bits = fraction_bits(delta)
    pairs = tuple(pair for _, _, pair in _alice_walk(rho, effects, delta, r, bits) if pair is not None)
    msg = ReplaceMessage(q=q, r=r, c=c, delta=delta, fraction_bits=bits, pairs=pairs)
    logger.debug(f"replacement message: t={msg.t} (bound {msg.t_bound:.1f}), {msg.bit_length} bits")
    return msg


def _lookup_from(msg: ReplaceMessage, count: int) -> Callable[[int], Optional[int]]:
    indices = [b for b, _ in msg.pairs]
    if indices != sorted(set(indices)) or any(not 0 <= b < count for b in indices):
        raise ReplayIntegrityError(f"message indices {indices} are not strictly increasing in range")
    table = dict(msg.pairs)
    return table.get


def reconstruct_estimates(msg: ReplaceMessage, effects: Sequence[np.ndarray]) -> np.ndarray:
    """Receiver side: estimates p'_b for every b by replaying the sequence."""
    q, c = _family_shape(effects, msg.r)
    if (q, c) != (msg.q, msg.c):
        raise ReplayIntegrityError(f"message for q={msg.q}, c={msg.c} used with q={q}, c={c}")
    lookup = _lookup_from(msg, len(effects))
    return np.array([est for _, _, est in _bob_walk(effects, msg.delta, msg.r, msg.fraction_bits, lookup)])


@dataclass
class RoundTripReport:
    message: ReplaceMessage
    true_probs: np.ndarray
    estimates: np.ndarray
    max_state_deviation: float

    @property
    def max_estimate_error(self) -> float:
        return float(np.max(np.abs(self.estimates - self.true_probs)))


def replace_round_trip(rho: np.ndarray, effects: Sequence[np.ndarray], delta: float, r: int) -> RoundTripReport:
    """Run sender and receiver in lockstep and compare their state sequences entrywise.

    Only one state per side is alive at any time: the receiver learns each
    pair just before it needs it.
    """
    q, c = _family_shape(effects, r)
    bits = fraction_bits(delta)
    received: Dict[int, int] = {}
    alice = _alice_walk(rho, effects, delta, r, bits)
    bob = _bob_walk(effects, delta, r, bits, received.get)
    deviation = 0.0
    pairs, estimates = [], []
    for b, alice_state, pair in alice:
        if pair is not None:
            pairs.append(pair)
            received[b] = pair[1]
        _, bob_state, estimate = next(bob)
        deviation = max(deviation, float(np.max(np.abs(alice_state - bob_state))))
        estimates.append(estimate)
    for _ in bob:
        pass
    msg = ReplaceMessage(q=q, r=r, c=c, delta=delta, fraction_bits=bits, pairs=tuple(pairs))
    return RoundTripReport(message=msg, true_probs=true_probabilities(rho, effects),
                           estimates=np.array(estimates), max_state_deviation=deviation)


def round_trip_deviation(rho: np.ndarray, effects: Sequence[np.ndarray], delta: float, r: int) -> float:
    return replace_round_trip(rho, effects, delta, r).max_state_deviation


def true_probabilities(rho: np.ndarray, effects: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([float(np.real(np.trace(e @ rho))) for e in effects])


def replaced_value_table(protocol: LoccProtocol, rho: np.ndarray, side: str, delta: float,
                         r: int) -> Tuple[ValueTable, ReplaceMessage]:
    """Value table estimated from a replacement message over the chain effects.

    The family is padded with zero effects up to a power of two; those are
    always good and never cost message space.
    """
    effects = chain_effects(protocol, side, rho.shape[0])
    keys = sorted(effects, key=_key_order)
    family = [effects[k] for k in keys]
    size = 1 << max(0, math.ceil(math.log2(len(family))))
    family += [np.zeros_like(family[0])] * (size - len(family))
    msg = replace_message(rho, family, delta, r)
    estimates = reconstruct_estimates(msg, family)
    values = {k: float(estimates[i]) for i, k in enumerate(keys)}
    return ValueTable(side=side, num_steps=protocol.num_steps, values=values), msg


# ---------------------------------------------------------------------------
# One-way LOCC to hybrid
# ---------------------------------------------------------------------------

def _bits(value: int, width: int) -> str:
    return format(value, f"0{width}b") if width else ""


@dataclass(frozen=True, eq=False)
class HybridProtocol:
    """Alice runs the projective simulation of Ref_A on her own message and
    sends the branch index and the outcome as classical bits; the referee maps
    them back to Ref_A's outcome and runs Ref_B unchanged on Bob's message.
    """
    source: OneWayLoccProtocol
    simulation: PmSimulation

    @property
    def outcome_bits(self) -> int:
        return self.simulation.outcome_bits

    @property
    def branch_bits(self) -> int:
        return self.simulation.branch_bits

    @property
    def classical_bits(self) -> int:
        return self.outcome_bits + self.branch_bits

    def alice_message_distribution(self, x: str) -> Dict[Tuple[int, int], float]:
        """Probability of every (branch, outcome) pair Alice can send."""
        rho = self.source.alice_states[x]
        dist = {}
        for k, weight in enumerate(self.simulation.weights):
            for o, p in enumerate(self.simulation.branch_probabilities(rho, k)):
                dist[(k, o)] = weight * max(float(p), 0.0)
        return dist

    def alice_message(self, x: str, rng: np.random.Generator) -> SmpMessage:
        k = sample_outcome(rng, self.simulation.weights)
        o = sample_outcome(rng, self.simulation.branch_probabilities(self.source.alice_states[x], k))
        return SmpMessage("classical", _bits(k, self.branch_bits) + _bits(o, self.outcome_bits))

    def decode(self, message: SmpMessage) -> int:
        """Ref_A outcome the referee reads off Alice's bits."""
        if message.kind != "classical" or message.length != self.classical_bits:
            raise ContractViolation(f"expected {self.classical_bits} classical bits")
        k = int(message.payload[:self.branch_bits], 2) if self.branch_bits else 0
        o = int(message.payload[self.branch_bits:], 2)
        return self.simulation.labels[k][o]

    def output_distribution(self, x: str, y: str) -> Dict[Any, float]:
        a_probs = np.zeros(self.simulation.num_outcomes)
        for (k, o), p in self.alice_message_distribution(x).items():
            a_probs[self.simulation.labels[k][o]] += p
        return self.source.output_distribution(x, y, a_probs=a_probs)

    def accept_prob(self, x: str, y: str) -> float:
        return self.output_distribution(x, y).get(1, 0.0)


def locc1_to_hybrid(p: OneWayLoccProtocol, mode: Literal["dilation", "layered"] = "dilation") -> HybridProtocol:
    """Replace Ref_A's measurement by a projective simulation Alice can run herself.

    ``dilation`` works for any Ref_A POVM; ``layered`` uses the no-ancilla
    threshold mixture and needs a two-outcome Ref_A.
    """
    if mode == "dilation":
        simulation = naimark_dilate(p.ref_a)
    elif mode == "layered":
        if len(p.ref_a) != 2:
            raise ContractViolation("layered simulation needs a two-outcome Ref_A")
        simulation = pm_simulate_two_outcome(p.ref_a.effects[0])
    else:
        raise ContractViolation(f"unknown simulation mode {mode!r}")
    hybrid = HybridProtocol(source=p, simulation=simulation)
    logger.debug(f"{p.name} -> hybrid ({mode}): {hybrid.outcome_bits} outcome + {hybrid.branch_bits} branch bits")
    return hybrid


# ---------------------------------------------------------------------------
# Public coins and Newman derandomisation
# ---------------------------------------------------------------------------

class PublicCoinProtocol(ABC):
    """A protocol whose behaviour is fixed once the shared random string is."""
    name = "public-coin"
    coin_bits: int
    base_error: float

    @abstractmethod
    def sample_coins(self, rng: np.random.Generator, t: int) -> np.ndarray:
        ...

    @abstractmethod
    def accept_prob(self, x: str, y: str, coin: np.ndarray) -> float:
        ...

    @abstractmethod
    def target(self, x: str, y: str) -> int:
        ...

    def error_matrix(self, coins: np.ndarray, xs: Sequence[str], ys: Sequence[str]) -> np.ndarray:
        """Error of each input pair averaged over ``coins``."""
        errors = np.zeros((len(xs), len(ys)))
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                want = self.target(x, y)
                probs = [self.accept_prob(x, y, coin) for coin in coins]
                errors[i, j] = np.mean([1 - p if want else p for p in probs])
        return errors


class HashingEqProtocol(PublicCoinProtocol):
    """Equality with k shared random n-bit strings r_j.

    Alice sends the parities <x, r_j>, Bob sends |y> in the computational
    basis and the referee accepts iff <y, r_j> matches every parity. Unequal
    inputs collide with probability 2^-k.
    """
    name = "hashing-eq"

    def __init__(self, n: int, k: int = 3):
        if n < 1 or k < 1:
            raise ContractViolation("hashing EQ needs n >= 1 and k >= 1")
        self.n = n
        self.k = k
        self.coin_bits = n * k
        self.base_error = 2.0 ** -k

    @classmethod
    def for_error(cls, n: int, epsilon: float) -> "HashingEqProtocol":
        if not 0 < epsilon < 1:
            raise ContractViolation(f"hashing EQ needs epsilon in (0, 1), got {epsilon}")
        return cls(n, k=math.ceil(math.log2(1 / epsilon)))

    @property
    def alice_bits(self) -> int:
        return self.k

    @property
    def bob_qubits(self) -> int:
        return self.n

    def sample_coins(self, rng: np.random.Generator, t: int) -> np.ndarray:
        return rng.integers(0, 2, (t, self.k, self.n), dtype=np.uint8)

    def parities(self, x: str, coin: np.ndarray) -> np.ndarray:
        return (coin.astype(np.int64) @ np.array([int(b) for b in x])) % 2

    def accept_prob(self, x: str, y: str, coin: np.ndarray) -> float:
        return float(np.array_equal(self.parities(x, coin), self.parities(y, coin)))

    def target(self, x: str, y: str) -> int:
        return int(x == y)

    def error_matrix(self, coins: np.ndarray, xs: Sequence[str], ys: Sequence[str]) -> np.ndarray:
        # A pair errs exactly when x != y and every parity of x XOR y vanishes.
        zs = all_messages(self.n).astype(np.int64)
        parities = np.einsum("tkn,zn->tkz", coins.astype(np.int64), zs) % 2
        collide = (~parities.any(axis=1)).mean(axis=0)
        xi = np.array([int(x, 2) for x in xs])
        yi = np.array([int(y, 2) for y in ys])
        z = xi[:, None] ^ yi[None, :]
        return np.where(z == 0, 0.0, collide[z])


@dataclass
class DerandomizedProtocol:
    """Run ``base`` with a coin drawn uniformly from the fixed list ``coins``."""
    base: PublicCoinProtocol
    coins: np.ndarray
    max_error: float
    attempts: int

    @property
    def t(self) -> int:
        return len(self.coins)

    @property
    def index_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.t)))

    def accept_prob(self, x: str, y: str) -> float:
        return float(np.mean([self.base.accept_prob(x, y, coin) for coin in self.coins]))


def newman_t(num_x: int, num_y: int, delta: float) -> int:
    """t = ceil(ln(2 |X| |Y|) / (2 delta^2)) from the Hoeffding tail 2 e^(-2 delta^2 t)."""
    if delta <= 0:
        raise ContractViolation(f"Newman sampling needs delta > 0, got {delta}")
    return math.ceil(math.log(2 * num_x * num_y) / (2 * delta ** 2))


def newman_derandomize(p: PublicCoinProtocol, xs: Sequence[str], ys: Sequence[str], epsilon: float,
                       delta: float, rng: np.random.Generator,
                       retries: int = NEWMAN_RETRIES) -> DerandomizedProtocol:
    """Fix t random strings and check exhaustively that every input pair errs at most epsilon + delta.

    Raises:
        ResourceLimitError: too many input pairs to verify exhaustively
        SamplingExhaustedError: no sample verified within ``retries`` attempts
    """
    if len(xs) * len(ys) > MAX_NEWMAN_PAIRS:
        raise ResourceLimitError(f"{len(xs) * len(ys)} input pairs exceed {MAX_NEWMAN_PAIRS}")
    t = newman_t(len(xs), len(ys), delta)
    for attempt in range(1, retries + 1):
        coins = p.sample_coins(rng, t)
        worst = float(p.error_matrix(coins, xs, ys).max())
        if worst <= epsilon + delta:
            logger.debug(f"{p.name}: t={t} strings verified on attempt {attempt}, max error {worst:.4f}")
            return DerandomizedProtocol(base=p, coins=coins, max_error=worst, attempts=attempt)
        logger.info(f"{p.name}: sample {attempt} has max error {worst:.4f} > {epsilon + delta:.4f}, resampling")
    raise SamplingExhaustedError(f"{p.name}: no verified set of {t} strings in {retries} attempts")


# ---------------------------------------------------------------------------
# Sequential measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnionBoundResult:
    success_prob: float
    bound: float
    delta: float
    step_failures: Tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.success_prob >= self.bound - TOL


def union_bound_check(chain: Sequence[Instrument], rho: np.ndarray,
                      delta: Optional[float] = None) -> UnionBoundResult:
    """Probability that every instrument in ``chain`` reports success (outcome 0)
    when applied in sequence, against 1 - 2 sqrt(k delta).

    Without ``delta`` the largest standalone failure probability is used.

    Raises:
        HypothesisViolation: some step alone fails with probability above delta
    """
    if not chain:
        raise ContractViolation("union bound needs at least one step")
    failures = tuple(1.0 - instrument_apply(ins, rho, 0).prob for ins in chain)
    if delta is None:
        delta = max(0.0, max(failures))
    for i, failure in enumerate(failures):
        if failure > delta + TOL:
            raise HypothesisViolation(f"step {i} fails with probability {failure:.4f} > {delta:.4f}")
    state, success = rho, 1.0
    for ins in chain:
        branch = instrument_apply(ins, state, 0)
        success *= branch.prob
        if branch.degenerate:
            success = 0.0
            break
        state = branch.post
    bound = 1 - 2 * math.sqrt(len(chain) * delta)
    return UnionBoundResult(success_prob=success, bound=bound, delta=delta, step_failures=failures)
