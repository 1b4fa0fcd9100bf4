"""
Error-correcting codes, quantum fingerprints and the SWAP test.

Bitstrings are ``str`` objects over "01". Input bit i of x is x[i] (most
significant first), and codeword bit z of the Hadamard code is indexed by the
integer value of z in ascending order, so Hadamard n=2, x="10" encodes to
"0011".
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from errors import ContractViolation, SamplingExhaustedError
from linalg import as_ket
from sim_config import (
    EXHAUSTIVE_DISTANCE_MAX_N,
    HADAMARD_MAX_N,
    RANDOM_CODE_LENGTH_FACTOR,
    RANDOM_CODE_MAX_ATTEMPTS,
    RANDOM_CODE_MAX_N,
    RANDOM_CODE_RELATIVE_DISTANCE,
    SAMPLED_DISTANCE_MESSAGES,
    TOL,
)

logger = logging.getLogger(__name__)

CodeKind = Literal["hadamard", "random-linear"]


def bits_to_array(x: str) -> np.ndarray:
    if any(ch not in "01" for ch in x):
        raise ContractViolation(f"not a bitstring: {x!r}")
    return np.fromiter((ch == "1" for ch in x), dtype=np.uint8, count=len(x))


def array_to_bits(a: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in a)


def all_messages(n: int) -> np.ndarray:
    """All 2^n messages as rows, in ascending integer order, most significant bit first."""
    idx = np.arange(2 ** n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def all_bitstrings(n: int) -> list[str]:
    return [format(i, f"0{n}b") if n else "" for i in range(2 ** n)]


@dataclass(frozen=True)
class DistanceCheck:
    """Result of a minimum-distance computation."""
    distance: int
    exhaustive: bool


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """A binary linear code E: {0,1}^n -> {0,1}^N given by its N x n generator."""
    kind: CodeKind
    n: int
    N: int
    generator: np.ndarray
    min_distance: int
    distance_exhaustive: bool = True

    def __post_init__(self):
        if self.generator.shape != (self.N, self.n):
            raise ContractViolation(f"generator shape {self.generator.shape} != ({self.N}, {self.n})")
        if self.kind == "hadamard" and (self.N != 2 ** self.n or self.min_distance != self.N // 2):
            raise ContractViolation("hadamard code must have N = 2^n and distance N/2")

    @property
    def relative_distance(self) -> float:
        return self.min_distance / self.N


def _distance_of_generator(generator: np.ndarray, rng: Optional[np.random.Generator] = None) -> DistanceCheck:
    n = generator.shape[1]
    if n <= EXHAUSTIVE_DISTANCE_MAX_N:
        messages = all_messages(n)[1:]
        exhaustive = True
    else:
        rng = rng or np.random.default_rng(0)
        messages = rng.integers(0, 2, (SAMPLED_DISTANCE_MESSAGES, n), dtype=np.uint8)
        messages = messages[messages.any(axis=1)]
        exhaustive = False
    weights = ((messages.astype(np.int64) @ generator.T.astype(np.int64)) % 2).sum(axis=1)
    return DistanceCheck(distance=int(weights.min()), exhaustive=exhaustive)


def hadamard_code(n: int) -> CodeSpec:
    if n < 1:
        raise ContractViolation("hadamard code needs n >= 1")
    generator = all_messages(n)
    return CodeSpec(kind="hadamard", n=n, N=2 ** n, generator=generator, min_distance=2 ** (n - 1))


def random_linear_code(n: int, rng: np.random.Generator, N: Optional[int] = None,
                       relative_distance: float = RANDOM_CODE_RELATIVE_DISTANCE) -> CodeSpec:
    """Sample generators until the verified distance reaches ceil(relative_distance * N)."""
    N = N or RANDOM_CODE_LENGTH_FACTOR * n
    target = math.ceil(relative_distance * N)
    for attempt in range(1, RANDOM_CODE_MAX_ATTEMPTS + 1):
        generator = rng.integers(0, 2, (N, n), dtype=np.uint8)
        check = _distance_of_generator(generator, rng)
        if check.distance >= target:
            logger.debug(f"random-linear code n={n} N={N}: distance {check.distance} after {attempt} draws")
            return CodeSpec(kind="random-linear", n=n, N=N, generator=generator,
                            min_distance=check.distance, distance_exhaustive=check.exhaustive)
    raise SamplingExhaustedError(
        f"no random-linear code with distance >= {target} in {RANDOM_CODE_MAX_ATTEMPTS} draws (n={n}, N={N})"
    )


def default_code(n: int, rng: Optional[np.random.Generator] = None) -> CodeSpec:
    """Hadamard up to n = 12, verified random-linear code up to n = 20."""
    if n <= HADAMARD_MAX_N:
        return hadamard_code(n)
    if n <= RANDOM_CODE_MAX_N:
        return random_linear_code(n, rng or np.random.default_rng(n))
    raise ContractViolation(f"no default code for n={n} (max {RANDOM_CODE_MAX_N})")


def encode(code: CodeSpec, x: str) -> str:
    return array_to_bits(encode_array(code, x))


def encode_array(code: CodeSpec, x: str) -> np.ndarray:
    if len(x) != code.n:
        raise ContractViolation(f"input length {len(x)} does not match code n={code.n}")
    return (code.generator.astype(np.int64) @ bits_to_array(x).astype(np.int64)) % 2


def min_distance_check(code: CodeSpec) -> DistanceCheck:
    """Minimum weight over nonzero messages; exhaustive for n <= 14, sampled otherwise."""
    check = _distance_of_generator(code.generator)
    if not check.exhaustive:
        logger.info(f"min distance of n={code.n} code estimated from samples: {check.distance}")
    return check


def hamming_distance(a: str, b: str) -> int:
    if len(a) != len(b):
        raise ContractViolation("hamming distance needs equal lengths")
    return sum(ca != cb for ca, cb in zip(a, b))


# ---------------------------------------------------------------------------
# Fingerprints
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Fingerprint:
    """|h_x> = N^{-1/2} sum_i |i>|E_i(x)>, basis index 2i + E_i(x)."""
    x: str
    state: np.ndarray


def fingerprint(code: CodeSpec, x: str) -> Fingerprint:
    word = encode_array(code, x)
    state = np.zeros(2 * code.N, dtype=complex)
    state[2 * np.arange(code.N) + word] = 1 / np.sqrt(code.N)
    return Fingerprint(x=x, state=state)


def fingerprint_overlap(code: CodeSpec, x: str, y: str, via_states: bool = False) -> float:
    """<h_x|h_y> = 1 - Delta(E(x), E(y)) / N.

    With ``via_states`` the inner product of the two fingerprint kets is taken
    instead of counting codeword differences.
    """
    if len(x) != code.n or len(y) != code.n:
        raise ContractViolation("fingerprint_overlap needs inputs of length n")
    if via_states:
        return float(np.vdot(fingerprint(code, x).state, fingerprint(code, y).state).real)
    distance = int(np.count_nonzero(encode_array(code, x) != encode_array(code, y)))
    return 1 - distance / code.N


def swap_accept_prob(overlap: float) -> float:
    if not -1 - TOL <= overlap <= 1 + TOL:
        raise ContractViolation(f"overlap {overlap} outside [-1, 1]")
    return 0.5 + overlap ** 2 / 2


def swap_circuit_sim(a, b) -> float:
    """Acceptance probability of the SWAP test circuit, simulated gate by gate.

    The joint state is kept as an array psi[ancilla, i, j]: prepare the ancilla
    in |+>, swap the two registers on the ancilla-1 branch, apply a Hadamard to
    the ancilla and return the probability of reading 0.
    """
    a = as_ket(a)
    b = as_ket(b)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    product = np.outer(a, b)
    psi = np.stack([product, product]) / np.sqrt(2)
    psi[1] = psi[1].T.copy()
    psi = np.stack([psi[0] + psi[1], psi[0] - psi[1]]) / np.sqrt(2)
    return float(np.sum(np.abs(psi[0]) ** 2))
