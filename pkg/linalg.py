"""
Dense complex linear algebra for the simulator.

Operators, kets and density matrices are plain ``numpy`` arrays of dtype
``complex128``. The helpers below validate them at the boundaries and provide
the tensor, partial trace and spectral tools the measurement and protocol
modules are built on.

Tensor convention: ``tensor(a, b)`` is ``np.kron(a, b)``, i.e. the left factor
is the most significant index. Basis state ``|i>|j>`` of ``C^da (x) C^db`` has
index ``i * db + j``.
"""

from __future__ import annotations

import logging
from typing import Literal, Tuple

import numpy as np
import scipy.linalg

from errors import ContractViolation, ResourceLimitError
from sim_config import MAX_ENTRIES, PSD_SLACK, TOL

logger = logging.getLogger(__name__)

Side = Literal["first", "second"]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def check_entries(rows: int, cols: int) -> None:
    """Raise ResourceLimitError if a rows x cols matrix would exceed the entry cap."""
    if rows * cols > MAX_ENTRIES:
        raise ResourceLimitError(
            f"matrix of shape {rows}x{cols} has {rows * cols} entries, cap is {MAX_ENTRIES}"
        )


def as_matrix(m) -> np.ndarray:
    """Coerce to a finite 2-D complex array."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise ContractViolation(f"expected a matrix, got array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("matrix has NaN or infinite entries")
    return arr


def as_ket(v) -> np.ndarray:
    """Coerce to a unit-norm 1-D complex array."""
    arr = np.asarray(v, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("ket has NaN or infinite entries")
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > TOL:
        raise ContractViolation(f"ket norm is {norm}, expected 1")
    return arr


def is_hermitian(m: np.ndarray, tol: float = TOL) -> bool:
    return m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def as_density_matrix(m) -> np.ndarray:
    """Coerce and check the density matrix invariants (Hermitian, PSD, unit trace)."""
    arr = as_matrix(m)
    if not is_hermitian(arr):
        raise ContractViolation("density matrix is not Hermitian")
    trace = np.trace(arr).real
    if abs(trace - 1.0) > TOL:
        raise ContractViolation(f"density matrix has trace {trace}")
    lowest = scipy.linalg.eigh(arr, eigvals_only=True)[0]
    if lowest < -PSD_SLACK:
        raise ContractViolation(f"density matrix has negative eigenvalue {lowest}")
    return arr


def ket_to_density(v) -> np.ndarray:
    ket = as_ket(v)
    return np.outer(ket, ket.conj())


def basis_ket(dim: int, index: int) -> np.ndarray:
    ket = np.zeros(dim, dtype=complex)
    ket[index] = 1.0
    return ket


def is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


# ---------------------------------------------------------------------------
# Tensor structure
# ---------------------------------------------------------------------------

def tensor(a, b) -> np.ndarray:
    """Kronecker product a (x) b with the left factor most significant."""
    a = as_matrix(a)
    b = as_matrix(b)
    check_entries(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    return np.kron(a, b)


def partial_trace(m, dims: Tuple[int, int], keep: Side = "first") -> np.ndarray:
    """Trace out one factor of an operator on C^dims[0] (x) C^dims[1].

    Args:
        m: Square operator of dimension dims[0] * dims[1]
        dims: Factor dimensions (first, second)
        keep: Which factor survives

    Returns:
        The reduced operator on the kept factor
    """
    m = as_matrix(m)
    da, db = dims
    if da < 1 or db < 1 or m.shape != (da * db, da * db):
        raise ContractViolation(f"operator of shape {m.shape} does not match dims {dims}")
    blocks = m.reshape(da, db, da, db)
    if keep == "first":
        return np.einsum("ijkj->ik", blocks)
    if keep == "second":
        return np.einsum("ijil->jl", blocks)
    raise ContractViolation(f"keep must be 'first' or 'second', got {keep!r}")


# ---------------------------------------------------------------------------
# Spectral tools
# ---------------------------------------------------------------------------

def hermitian_eig(m) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix with a deterministic ordering.

    Eigenvalues come back in descending order. Eigenvalues closer than TOL form
    a tie group, and inside a group the eigenvectors are ordered by the index of
    their pivot component (the first component of largest magnitude). Each
    eigenvector's phase is fixed so that its pivot component is real positive.

    Returns:
        (eigenvalues, eigenvectors) with eigenvectors as the columns of a matrix
    """
    m = as_matrix(m)
    if not is_hermitian(m):
        raise ContractViolation("hermitian_eig needs a Hermitian matrix")
    values, vectors = scipy.linalg.eigh(m)
    values = values[::-1]
    vectors = vectors[:, ::-1]

    pivots = np.argmax(np.abs(vectors), axis=0)
    phases = vectors[pivots, np.arange(vectors.shape[1])]
    vectors = vectors * (np.abs(phases) / phases)

    order = []
    start = 0
    while start < len(values):
        stop = start + 1
        while stop < len(values) and values[stop - 1] - values[stop] <= TOL:
            stop += 1
        group = list(range(start, stop))
        order.extend(sorted(group, key=lambda j: pivots[j]))
        start = stop
    order = np.array(order, dtype=int)
    return values[order], vectors[:, order]


def window_projector(m, lo: float, hi: float) -> np.ndarray:
    """Projector onto the eigenvectors of m with eigenvalue in [lo, hi] (inclusive)."""
    if lo > hi:
        raise ContractViolation(f"empty window [{lo}, {hi}]")
    values, vectors = hermitian_eig(m)
    selected = vectors[:, (values >= lo) & (values <= hi)]
    return selected @ selected.conj().T


def is_effect(m) -> bool:
    """True iff 0 <= m <= I up to the configured slack."""
    try:
        m = as_matrix(m)
    except ContractViolation:
        return False
    if m.shape[0] != m.shape[1] or not is_hermitian(m):
        return False
    values = scipy.linalg.eigh(m, eigvals_only=True)
    return bool(values[0] >= -PSD_SLACK and values[-1] <= 1 + PSD_SLACK)


def psd_sqrt(m) -> np.ndarray:
    """Spectral square root of a positive semidefinite operator (negative noise clipped)."""
    m = as_matrix(m)
    if not is_hermitian(m):
        raise ContractViolation("psd_sqrt needs a Hermitian matrix")
    values, vectors = scipy.linalg.eigh(m)
    roots = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * roots) @ vectors.conj().T


# ---------------------------------------------------------------------------
# r-copy averages
# ---------------------------------------------------------------------------
#
# F = (1/r) sum_j I (x) .. (x) E (x) .. (x) I on (C^d)^{(x) r}. F is diagonal in
# the product basis V^{(x) r} built from E's own eigenbasis V, with the
# eigenvalue of basis state (j_1..j_r) equal to the mean of lambda_{j_i}.

def copy_average(e, r: int) -> np.ndarray:
    """Explicit r-copy average operator. Only for small sizes."""
    e = as_matrix(e)
    d = e.shape[0]
    check_entries(d ** r, d ** r)
    total = np.zeros((d ** r, d ** r), dtype=complex)
    for j in range(r):
        term = np.eye(1, dtype=complex)
        for i in range(r):
            term = np.kron(term, e if i == j else np.eye(d))
        total += term
    return total / r


def copy_average_spectrum(e, r: int) -> Tuple[np.ndarray, np.ndarray]:
    """Spectrum of the r-copy average of e without building it.

    Returns:
        (values, basis): values has length d**r in product (left-major) order,
        basis is the d x d eigenbasis of e whose r-fold tensor power
        diagonalises the average.
    """
    e = as_matrix(e)
    if not is_hermitian(e):
        raise ContractViolation("copy_average_spectrum needs a Hermitian operator")
    d = e.shape[0]
    check_entries(d ** r, d ** r)
    values, basis = scipy.linalg.eigh(e)
    grid = np.zeros((d,) * r)
    for axis in range(r):
        shape = [1] * r
        shape[axis] = d
        grid = grid + values.reshape(shape)
    return (grid / r).reshape(-1), basis


def conjugate_by_power(rho: np.ndarray, u: np.ndarray, r: int) -> np.ndarray:
    """Return U^{(x) r} rho U^{(x) r}^dagger using one local product per factor."""
    d = u.shape[0]
    t = rho.reshape((d,) * (2 * r))
    uc = u.conj()
    for axis in range(r):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [axis])), 0, axis)
        t = np.moveaxis(np.tensordot(uc, t, axes=([1], [r + axis])), 0, r + axis)
    return t.reshape(rho.shape)


def copy_average_expectation(rho: np.ndarray, e: np.ndarray, r: int) -> float:
    """tr(F rho) for the r-copy average F of e, via single-copy marginals."""
    d = e.shape[0]
    total = 0.0
    for j in range(r):
        blocks = rho.reshape(d ** j, d, d ** (r - j - 1), d ** j, d, d ** (r - j - 1))
        marginal = np.einsum("xiyxjy->ij", blocks)
        total += np.real(np.trace(e @ marginal))
    return float(total / r)


def copy_average_window_project(rho: np.ndarray, e: np.ndarray, r: int,
                                lo: float, hi: float) -> np.ndarray:
    """P rho P for P the [lo, hi] spectral window of the r-copy average of e.

    The result is not renormalised.
    """
    values, basis = copy_average_spectrum(e, r)
    mask = ((values >= lo) & (values <= hi)).astype(float)
    rotated = conjugate_by_power(rho, basis.conj().T, r)
    rotated = rotated * np.outer(mask, mask)
    return conjugate_by_power(rotated, basis, r)
