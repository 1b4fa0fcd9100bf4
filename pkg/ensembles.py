"""
Seeded random corpora: kets, mixed states, unitaries, effects, instruments,
POVMs and whole protocols.

All functions take an explicit ``numpy.random.Generator``; nothing here touches
global random state.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg

from linalg import psd_sqrt

logger = logging.getLogger(__name__)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed pure state."""
    v = complex_gaussian(rng, dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre mixed state of the given rank (full rank by default)."""
    g = complex_gaussian(rng, (dim, rank or dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from the QR decomposition of a Ginibre matrix."""
    q, r = scipy.linalg.qr(complex_gaussian(rng, (dim, dim)))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = scipy.linalg.qr(complex_gaussian(rng, (rows, cols)), mode="economic")
    return q


def random_effect(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Effect with uniform eigenvalues in [0, 1] in a Haar-random basis."""
    u = random_unitary(dim, rng)
    values = rng.uniform(0.0, 1.0, dim)
    return (u * values) @ u.conj().T


def random_povm(dim: int, outcomes: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Full-rank random POVM: normalise positive Ginibre operators by S^{-1/2}."""
    positives = []
    for _ in range(outcomes):
        g = complex_gaussian(rng, (dim, dim))
        positives.append(g @ g.conj().T)
    total = sum(positives)
    inv_root = np.linalg.inv(psd_sqrt(total))
    effects = [inv_root @ p @ inv_root for p in positives]
    return [(e + e.conj().T) / 2 for e in effects]


def random_rank1_povm(dim: int, outcomes: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Rank-1 POVM from the rows of a random isometry C^dim -> C^outcomes."""
    iso = random_isometry(outcomes, dim, rng)
    return [np.outer(row.conj(), row) for row in iso]


def random_kraus(dim: int, outcomes: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Kraus operators of a random instrument, sliced out of an isometry."""
    iso = random_isometry(outcomes * dim, dim, rng)
    return [iso[m * dim:(m + 1) * dim, :] for m in range(outcomes)]


def random_bits(n: int, rng: np.random.Generator) -> str:
    return "".join(str(int(b)) for b in rng.integers(0, 2, n))


def random_history_kraus(num_steps: int, dims: Tuple[int, int], rng: np.random.Generator,
                         outcomes: int = 2) -> Dict[Tuple[str, tuple], List[np.ndarray]]:
    """Random Kraus operators for every (side, history) of an alternating schedule.

    Side "A" owns even steps and side "B" odd steps; every instrument has the
    given number of outcomes.
    """
    table: Dict[Tuple[str, tuple], List[np.ndarray]] = {}
    frontier: List[tuple] = [()]
    for step in range(num_steps):
        side = "A" if step % 2 == 0 else "B"
        dim = dims[0] if side == "A" else dims[1]
        next_frontier = []
        for history in frontier:
            table[(side, history)] = random_kraus(dim, outcomes, rng)
            next_frontier.extend(history + (m,) for m in range(outcomes))
        frontier = next_frontier
    return table


def random_two_value_kraus(dim: int, rng: np.random.Generator) -> List[np.ndarray]:
    return random_kraus(dim, 2, rng)


def random_gentle_effects(rho: np.ndarray, steps: int, max_delta: float,
                          rng: np.random.Generator) -> Tuple[List[np.ndarray], np.ndarray]:
    """Random success effects E' with tr((I - E') rho) at most a drawn delta_i <= max_delta.

    A random effect E is pulled towards the identity, E' = I - s (I - E), with
    s = min(1, delta_i / tr((I - E) rho)). Returns the effects and the deltas.
    """
    dim = rho.shape[0]
    identity = np.eye(dim)
    effects, deltas = [], rng.uniform(0.0, max_delta, steps)
    for delta in deltas:
        e = random_effect(dim, rng)
        failure = float(np.real(np.trace((identity - e) @ rho)))
        scale = min(1.0, delta / failure) if failure > 0 else 1.0
        effects.append(identity - scale * (identity - e))
    return effects, deltas
