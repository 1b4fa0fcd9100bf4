"""
POVMs, instruments, measurement-class certificates and projective simulation.

A certificate is a constructive witness that an accept operator belongs to one
of the restricted referee classes: BELL (product effects combined by a
classical rule), LOCC1 (one-way) or a general LOCC tree of alternating local
measurements. Conversions build the inclusion chain BELL -> LOCC1 -> LOCC tree
with identical operators.

Projective simulation comes in two forms:

* ``naimark_dilate``: refine every effect into rank-1 pieces, embed the input
  with a |0...0> ancilla and measure a single projective measurement on the
  enlarged space.
* ``pm_simulate_two_outcome``: a no-ancilla randomised mixture of threshold
  projectors reproducing a single effect.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from errors import ContractViolation, ResourceLimitError
from linalg import as_density_matrix, as_matrix, check_entries, is_effect, psd_sqrt, tensor
from sim_config import DEGENERACY, MAX_ENTRIES, TOL

logger = logging.getLogger(__name__)


def _as_matrices(ops) -> Tuple[np.ndarray, ...]:
    return tuple(as_matrix(op) for op in ops)


@dataclass(frozen=True, eq=False)
class Povm:
    """Effects E_m with 0 <= E_m <= I and sum_m E_m = I."""
    effects: Tuple[np.ndarray, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        effects = _as_matrices(self.effects)
        if not effects:
            raise ContractViolation("a POVM needs at least one effect")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "dim", effects[0].shape[0])
        for i, e in enumerate(effects):
            if e.shape != (self.dim, self.dim) or not is_effect(e):
                raise ContractViolation(f"POVM element {i} is not an effect on C^{self.dim}")
        deviation = np.linalg.norm(sum(effects) - np.eye(self.dim))
        if deviation > TOL:
            raise ContractViolation(f"POVM effects sum to I only within {deviation:.3e}")

    def __len__(self) -> int:
        return len(self.effects)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(e @ rho)) for e in self.effects])

    def is_projective(self) -> bool:
        for i, e in enumerate(self.effects):
            if np.max(np.abs(e @ e - e)) > TOL:
                return False
            for f in self.effects[i + 1:]:
                if np.max(np.abs(e @ f)) > TOL:
                    return False
        return True


@dataclass(frozen=True, eq=False)
class Instrument:
    """Kraus operators M_m with sum_m M_m^dagger M_m = I."""
    kraus: Tuple[np.ndarray, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        kraus = _as_matrices(self.kraus)
        if not kraus:
            raise ContractViolation("an instrument needs at least one Kraus operator")
        object.__setattr__(self, "kraus", kraus)
        object.__setattr__(self, "dim", kraus[0].shape[1])
        completeness = sum(k.conj().T @ k for k in kraus)
        if completeness.shape != (self.dim, self.dim):
            raise ContractViolation("Kraus operators have inconsistent shapes")
        deviation = np.max(np.abs(completeness - np.eye(self.dim)))
        if deviation > TOL:
            raise ContractViolation(f"instrument completeness violated by {deviation:.3e}")

    def __len__(self) -> int:
        return len(self.kraus)

    @classmethod
    def luders(cls, effects: Sequence[np.ndarray]) -> "Instrument":
        """Canonical instrument with Kraus operators sqrt(E_m)."""
        return cls(tuple(psd_sqrt(e) for e in effects))

    @classmethod
    def projective(cls, projectors: Sequence[np.ndarray]) -> "Instrument":
        return cls(tuple(projectors))


@dataclass(frozen=True, eq=False)
class BranchResult:
    prob: float
    post: Optional[np.ndarray]

    @property
    def degenerate(self) -> bool:
        return self.post is None


def instrument_apply(ins: Instrument, rho: np.ndarray, outcome: int) -> BranchResult:
    """Probability tr(M^dagger M rho) and renormalised post-state M rho M^dagger / prob.

    Branches with probability at most DEGENERACY come back with ``post=None``.
    """
    if rho.shape != (ins.dim, ins.dim):
        raise ContractViolation(f"state of shape {rho.shape} does not fit instrument on C^{ins.dim}")
    if not 0 <= outcome < len(ins.kraus):
        raise ContractViolation(f"outcome {outcome} out of range for {len(ins.kraus)}-outcome instrument")
    k = ins.kraus[outcome]
    unnormalised = k @ rho @ k.conj().T
    prob = float(np.real(np.trace(unnormalised)))
    if prob <= DEGENERACY:
        return BranchResult(prob=max(prob, 0.0), post=None)
    post = unnormalised / prob
    return BranchResult(prob=prob, post=(post + post.conj().T) / 2)


def povm_of_instrument(ins: Instrument) -> Povm:
    effects = []
    for k in ins.kraus:
        e = k.conj().T @ k
        effects.append((e + e.conj().T) / 2)
    return Povm(tuple(effects))


# ---------------------------------------------------------------------------
# Measurement-class certificates
# ---------------------------------------------------------------------------

def _check_resolution(ops: Sequence[np.ndarray], what: str) -> None:
    for i, op in enumerate(ops):
        if not is_effect(op):
            raise ContractViolation(f"{what}[{i}] is not an effect")
    dim = ops[0].shape[0]
    if np.linalg.norm(sum(ops) - np.eye(dim)) > TOL:
        raise ContractViolation(f"{what} do not sum to the identity")


@dataclass(frozen=True, eq=False)
class BellCert:
    """M = sum over (i, j) in S of alpha_i (x) beta_j."""
    alphas: Tuple[np.ndarray, ...]
    betas: Tuple[np.ndarray, ...]
    accept: frozenset

    def __post_init__(self):
        object.__setattr__(self, "alphas", _as_matrices(self.alphas))
        object.__setattr__(self, "betas", _as_matrices(self.betas))
        object.__setattr__(self, "accept", frozenset(self.accept))
        _check_resolution(self.alphas, "alphas")
        _check_resolution(self.betas, "betas")
        for i, j in self.accept:
            if not (0 <= i < len(self.alphas) and 0 <= j < len(self.betas)):
                raise ContractViolation(f"accepting pair {(i, j)} out of range")

    def operator(self) -> np.ndarray:
        da, db = self.alphas[0].shape[0], self.betas[0].shape[0]
        total = np.zeros((da * db, da * db), dtype=complex)
        for i, j in sorted(self.accept):
            total += tensor(self.alphas[i], self.betas[j])
        return total

    def to_locc1(self) -> "Locc1Cert":
        db = self.betas[0].shape[0]
        ms = []
        for i in range(len(self.alphas)):
            m = np.zeros((db, db), dtype=complex)
            for j in range(len(self.betas)):
                if (i, j) in self.accept:
                    m = m + self.betas[j]
            ms.append(m)
        return Locc1Cert(self.alphas, tuple(ms))


@dataclass(frozen=True, eq=False)
class Locc1Cert:
    """M = sum_i alpha_i (x) M_i: measure the first system, then decide on the second."""
    alphas: Tuple[np.ndarray, ...]
    ms: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "alphas", _as_matrices(self.alphas))
        object.__setattr__(self, "ms", _as_matrices(self.ms))
        _check_resolution(self.alphas, "alphas")
        if len(self.ms) != len(self.alphas):
            raise ContractViolation("LOCC1 certificate needs one M_i per alpha_i")
        for i, m in enumerate(self.ms):
            if not is_effect(m):
                raise ContractViolation(f"M_{i} is not an effect")

    def operator(self) -> np.ndarray:
        return sum(tensor(a, m) for a, m in zip(self.alphas, self.ms))

    def to_tree(self) -> "LoccTreeNode":
        da, db = self.alphas[0].shape[0], self.ms[0].shape[0]
        children = tuple(
            LoccTreeNode(side="B", dims=(da, db), effects=(m, np.eye(db) - m), children=(True, False))
            for m in self.ms
        )
        return LoccTreeNode(side="A", dims=(da, db), effects=self.alphas, children=children)


TreeChild = Union["LoccTreeNode", bool]


@dataclass(frozen=True, eq=False)
class LoccTreeNode:
    """One level of alternating local measurements.

    The node measures ``effects`` on its side; child i is either another node
    or a terminal decision (True accepts, False rejects). The assembled operator
    is sum_i (sqrt(E_i) (x) I) M_i (sqrt(E_i) (x) I), with the square root on the
    second factor for side "B".
    """
    side: str
    dims: Tuple[int, int]
    effects: Tuple[np.ndarray, ...]
    children: Tuple[TreeChild, ...]

    def __post_init__(self):
        object.__setattr__(self, "effects", _as_matrices(self.effects))
        if self.side not in ("A", "B"):
            raise ContractViolation(f"tree side must be 'A' or 'B', got {self.side!r}")
        if len(self.children) != len(self.effects):
            raise ContractViolation("tree node needs one child per effect")
        local = self.dims[0] if self.side == "A" else self.dims[1]
        for i, e in enumerate(self.effects):
            if e.shape != (local, local) or not is_effect(e):
                raise ContractViolation(f"tree effect {i} is not an effect on side {self.side}")
        slack = np.eye(local) - sum(self.effects)
        if scipy.linalg.eigh(slack, eigvals_only=True)[0] < -TOL:
            raise ContractViolation("tree level effects sum to more than I")

    def operator(self) -> np.ndarray:
        da, db = self.dims
        total = np.zeros((da * db, da * db), dtype=complex)
        for e, child in zip(self.effects, self.children):
            if child is False:
                continue
            inner = np.eye(da * db, dtype=complex) if child is True else child.operator()
            root = psd_sqrt(e)
            lift = tensor(root, np.eye(db)) if self.side == "A" else tensor(np.eye(da), root)
            total += lift @ inner @ lift
        return total


MeasClassCert = Union[BellCert, Locc1Cert, LoccTreeNode]


def class_operator(cert: MeasClassCert) -> np.ndarray:
    """Assemble the accept operator of a certificate and check it is an effect."""
    m = cert.operator()
    if not is_effect(m):
        raise ContractViolation(f"{type(cert).__name__} assembles to a non-effect")
    return m


# ---------------------------------------------------------------------------
# Projective simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PmSimulation:
    """Randomised projective measurements on rho (x) |phi><phi|.

    Branch k is chosen with probability ``weights[k]``; outcome o of the branch
    POVM stands for original outcome ``labels[k][o]``.
    """
    ancilla: np.ndarray
    weights: Tuple[float, ...]
    branches: Tuple[Povm, ...]
    labels: Tuple[Tuple[int, ...], ...]
    num_outcomes: int

    def __post_init__(self):
        if len(self.weights) != len(self.branches) or len(self.labels) != len(self.branches):
            raise ContractViolation("weights, branches and labels must align")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1) > 1e-12:
            raise ContractViolation("branch weights must be a probability vector")
        for k, branch in enumerate(self.branches):
            if len(self.labels[k]) != len(branch):
                raise ContractViolation(f"branch {k} has {len(branch)} outcomes but {len(self.labels[k])} labels")
            if not branch.is_projective():
                raise ContractViolation(f"branch {k} is not projective")

    @property
    def extended_dim(self) -> int:
        return self.branches[0].dim

    @property
    def outcome_bits(self) -> int:
        return max(1, math.ceil(math.log2(max(len(b) for b in self.branches))))

    @property
    def branch_bits(self) -> int:
        return math.ceil(math.log2(len(self.branches))) if len(self.branches) > 1 else 0

    def extend(self, rho: np.ndarray) -> np.ndarray:
        return np.kron(rho, np.outer(self.ancilla, self.ancilla.conj()))

    def branch_probabilities(self, rho: np.ndarray, branch: int) -> np.ndarray:
        return self.branches[branch].probabilities(self.extend(rho))

    def outcome_probs(self, rho: np.ndarray) -> np.ndarray:
        """Statistics of the simulation mapped back to the original outcomes."""
        rho = as_density_matrix(rho)
        probs = np.zeros(self.num_outcomes)
        for k, weight in enumerate(self.weights):
            for o, p in enumerate(self.branch_probabilities(rho, k)):
                probs[self.labels[k][o]] += weight * p
        return probs


def rank_one_refinement(p: Povm) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Split each effect along its eigenvectors: E_i = sum_k w_k w_k^dagger.

    Returns the K x d matrix whose rows are w_k^dagger, and the originating
    effect index of every row. Components with eigenvalue below DEGENERACY are
    dropped.
    """
    rows, labels = [], []
    for i, e in enumerate(p.effects):
        values, vectors = scipy.linalg.eigh(e)
        for value, vector in zip(values[::-1], vectors.T[::-1]):
            if value < DEGENERACY:
                continue
            rows.append(np.sqrt(value) * vector.conj())
            labels.append(i)
    return np.array(rows), tuple(labels)


def naimark_dilate(p: Povm) -> PmSimulation:
    """Single-branch projective simulation of a POVM through a Naimark dilation.

    With K rank-1 pieces the isometry A (rows w_k^dagger) maps C^d into C^K.
    The ancilla dimension is the smallest power of two 2^m with d * 2^m >= K,
    the input is embedded as |psi>|0>, and A is completed to a unitary U on the
    extended space. Projector k is U^dagger |k><k| U; outcomes beyond K never
    fire on the fixed ancilla and are labelled 0.
    """
    d = p.dim
    isometry, labels = rank_one_refinement(p)
    pieces = isometry.shape[0]
    ancilla_dim = 1 << max(0, math.ceil(math.log2(pieces / d))) if pieces > d else 1
    extended = d * ancilla_dim
    if extended * extended > MAX_ENTRIES:
        raise ResourceLimitError(f"dilation dimension {extended} exceeds the entry cap")
    check_entries(extended, extended)

    embedded = np.zeros((extended, d), dtype=complex)
    embedded[:pieces, :] = isometry
    unitary = np.zeros((extended, extended), dtype=complex)
    embed_columns = np.arange(d) * ancilla_dim
    unitary[:, embed_columns] = embedded
    free_columns = np.setdiff1d(np.arange(extended), embed_columns)
    if len(free_columns):
        complement = scipy.linalg.null_space(embedded.conj().T)
        unitary[:, free_columns] = complement[:, :len(free_columns)]

    projectors = []
    for k in range(extended):
        u = unitary[k, :].conj()
        projectors.append(np.outer(u, u.conj()))
    all_labels = labels + (0,) * (extended - pieces)
    ancilla = np.zeros(ancilla_dim, dtype=complex)
    ancilla[0] = 1.0
    logger.debug(f"dilated {len(p)}-outcome POVM on C^{d}: {pieces} pieces, extended dim {extended}")
    return PmSimulation(ancilla=ancilla, weights=(1.0,), branches=(Povm(tuple(projectors)),),
                        labels=(all_labels,), num_outcomes=len(p))


def pm_simulate_two_outcome(e) -> PmSimulation:
    """Layered mixture of threshold projectors reproducing tr(rho e).

    With eigenvalues lambda_1 >= ... >= lambda_d of e, branch k measures
    {P_k, I - P_k} where P_k spans the top k eigenvectors, and is chosen with
    weight lambda_k - lambda_{k+1}; the rest of the weight, 1 - lambda_1, goes to
    a branch that never accepts. Outcome 0 means "accept" (the effect e).
    """
    e = as_matrix(e)
    if not is_effect(e):
        raise ContractViolation("pm_simulate_two_outcome needs 0 <= e <= I")
    d = e.shape[0]
    values, vectors = scipy.linalg.eigh(e)
    values = np.clip(values[::-1], 0.0, 1.0)
    vectors = vectors[:, ::-1]

    candidates = []
    for k in range(1, d + 1):
        weight = values[k - 1] - (values[k] if k < d else 0.0)
        top = vectors[:, :k]
        candidates.append((weight, top @ top.conj().T))
    candidates.append((1.0 - values[0], np.zeros((d, d), dtype=complex)))

    kept = [(w, proj) for w, proj in candidates if w > DEGENERACY]
    total = sum(w for w, _ in kept)
    weights = tuple(float(w / total) for w, _ in kept)
    branches = tuple(Povm((proj, np.eye(d) - proj)) for _, proj in kept)
    return PmSimulation(ancilla=np.ones(1, dtype=complex), weights=weights, branches=branches,
                        labels=((0, 1),) * len(branches), num_outcomes=2)


def sample_outcome(rng: np.random.Generator, probs) -> int:
    """Draw an index from a (renormalised) probability vector."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or np.any(p < -TOL):
        raise ContractViolation("probabilities must be a nonnegative vector")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise ContractViolation("cannot sample from an all-zero distribution")
    if abs(total - 1) > 1e-6:
        logger.debug(f"renormalising distribution with total {total}")
    cdf = np.cumsum(p / total)
    index = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(index, len(p) - 1)
