"""
Dense linear algebra over the operator space: vectorization, Hilbert-Schmidt
inner products, Pauli bases, numerical rank and span projectors
"""

import itertools
import logging
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from config import HERMITICITY_TOL, RANK_SAFETY_FACTOR
from src.errors import DimensionError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULI_LABELS = {"I": SIGMA_0, "0": SIGMA_0, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

# sigma^+ = |0><1| raises towards |0>, the +1 eigenstate of sigma_z
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def as_operator(matrix, hermitian: bool = False, tol: float = HERMITICITY_TOL, name: str = "operator") -> np.ndarray:
    """
    Coerce input into a finite square complex matrix

    Args:
        matrix: Array-like input
        hermitian: Also require max|M - M^dagger| <= tol
        tol: Hermiticity tolerance
        name: Label used in error messages

    Returns:
        Complex ndarray of shape (d, d)
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError(f"{name} has non-finite entries")
    if hermitian and not is_hermitian(m, tol):
        deviation = float(np.max(np.abs(m - m.conj().T)))
        raise ValidationError(f"{name} is not Hermitian (max deviation {deviation:.3e} > {tol:.1e})")
    return m


def is_hermitian(matrix: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol)


def hermitize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.conj().T) / 2


def vec(matrix) -> np.ndarray:
    """
    Stack the columns of a square matrix

    Entry (j-1)d + i of the result equals B_ij (1-based), so that
    vec(ABC) = (C^T kron A) vec(B).

    Args:
        matrix: Square matrix B

    Returns:
        Vector of length d^2
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"vec expects a square matrix, got shape {m.shape}")
    return m.reshape(-1, order="F").astype(complex, copy=False)


def unvec(vector, d: Optional[int] = None) -> np.ndarray:
    """
    Inverse of vec

    Args:
        vector: Vector of length d^2
        d: Hilbert space dimension (inferred when omitted)

    Returns:
        The d x d matrix whose stacked columns are `vector`
    """
    v = np.asarray(vector)
    if v.ndim != 1:
        raise DimensionError(f"unvec expects a 1-D vector, got shape {v.shape}")
    n = v.shape[0]
    root = int(round(np.sqrt(n)))
    if root * root != n:
        raise DimensionError(f"length {n} is not a perfect square")
    if d is not None and d != root:
        raise DimensionError(f"length {n} does not match d={d}")
    return v.reshape((root, root), order="F").astype(complex, copy=False)


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product tr(A^dagger B)"""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def kron_all(*operators: np.ndarray) -> np.ndarray:
    return reduce(np.kron, operators)


def embed(operator: np.ndarray, site: int, n_sites: int, local_dim: int = 2) -> np.ndarray:
    """
    Place a single-site operator on `site` (0-based) of an n-site register

    Args:
        operator: local_dim x local_dim operator
        site: Target site index
        n_sites: Number of sites
        local_dim: Dimension of each site

    Returns:
        Operator on the full tensor product space
    """
    if not 0 <= site < n_sites:
        raise DimensionError(f"site {site} outside register of {n_sites} sites")
    identity = np.eye(local_dim, dtype=complex)
    factors = [operator if k == site else identity for k in range(n_sites)]
    return kron_all(*factors)


def pauli_string(label: str) -> np.ndarray:
    """Tensor product of Pauli matrices from a label such as "IXZZ" """
    try:
        return kron_all(*(PAULI_LABELS[ch] for ch in label.upper()))
    except KeyError as e:
        raise ValidationError(f"invalid Pauli label {label!r}: unknown factor {e}") from e


@dataclass(frozen=True)
class OperatorBasis:
    """Ordered Hilbert-Schmidt orthogonal basis of B(H)"""

    dim: int
    elements: Tuple[np.ndarray, ...]
    normalization: str
    labels: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.elements)

    def matrix(self) -> np.ndarray:
        """d^2 x d^2 matrix whose columns are vec(F_i)"""
        return np.column_stack([vec(f) for f in self.elements])

    def gram(self) -> np.ndarray:
        b = self.matrix()
        return b.conj().T @ b

    def coefficients(self, operator: np.ndarray) -> np.ndarray:
        """Components tr(F_i^dagger X) of an operator in this basis"""
        return self.matrix().conj().T @ vec(operator)

    def is_orthonormal(self, tol: float = 1e-10) -> bool:
        return bool(np.allclose(self.gram(), np.eye(len(self)), atol=tol))


def pauli_basis(n_qubits: int, normalization: str = "raw") -> OperatorBasis:
    """
    Build the n-qubit Pauli basis

    Element i is the tensor product selected by the base-4 digits of i (first
    factor most significant, digits ordered I, X, Y, Z). In raw mode
    F_0 = I/sqrt(d) and the remaining elements are unnormalized Pauli strings
    with F_i^2 = I; orthonormal mode divides every string by sqrt(d).

    Args:
        n_qubits: Number of qubits (>= 1)
        normalization: "raw" or "orthonormal"

    Returns:
        OperatorBasis with 4^n elements
    """
    if n_qubits <= 0:
        raise ValidationError(f"n_qubits must be positive, got {n_qubits}")
    if normalization not in ("raw", "orthonormal"):
        raise ValidationError(f"unknown normalization {normalization!r}")

    d = 2 ** n_qubits
    scale = 1.0 if normalization == "raw" else 1.0 / np.sqrt(d)
    elements = []
    labels = []
    for digits in itertools.product(range(4), repeat=n_qubits):
        label = "".join("IXYZ"[k] for k in digits)
        if not any(digits):
            elements.append(np.eye(d, dtype=complex) / np.sqrt(d))
        else:
            elements.append(scale * kron_all(*(PAULIS[k] for k in digits)))
        labels.append(label)
    return OperatorBasis(dim=d, elements=tuple(elements), normalization=normalization, labels=tuple(labels))


def rank_threshold(shape: Tuple[int, int], sigma_max: float, safety: float = RANK_SAFETY_FACTOR) -> float:
    return max(shape) * sigma_max * np.finfo(float).eps * safety


@dataclass(frozen=True)
class RankAudit:
    """Numerical rank with the singular values that decided it"""

    rank: int
    threshold: float
    sv_kept: Optional[float]  # smallest retained singular value
    sv_dropped: Optional[float]  # largest discarded singular value


def rank_audit(matrix, tol: Optional[float] = None) -> RankAudit:
    """
    Count singular values above a threshold and report the borderline values

    Args:
        matrix: Rectangular complex matrix
        tol: Absolute threshold; defaults to max(shape) * sigma_max * eps * safety

    Returns:
        RankAudit
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    if m.size == 0:
        return RankAudit(rank=0, threshold=0.0, sv_kept=None, sv_dropped=None)

    s = la.svdvals(m)
    sigma_max = float(s[0]) if s.size else 0.0
    threshold = tol if tol is not None else rank_threshold(m.shape, sigma_max)
    kept = s[s > threshold]
    dropped = s[s <= threshold]
    return RankAudit(
        rank=int(kept.size),
        threshold=float(threshold),
        sv_kept=float(kept[-1]) if kept.size else None,
        sv_dropped=float(dropped[0]) if dropped.size else None,
    )


def numerical_rank(matrix, tol: Optional[float] = None) -> int:
    return rank_audit(matrix, tol).rank


def orthonormal_columns(matrix, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the column space (rank-revealing SVD)"""
    m = np.asarray(matrix, dtype=complex)
    if m.size == 0:
        return np.zeros((m.shape[0], 0), dtype=complex)
    u, s, _ = la.svd(m, full_matrices=False)
    threshold = tol if tol is not None else rank_threshold(m.shape, float(s[0]) if s.size else 0.0)
    return u[:, s > threshold]


def complement_projector(vectors: Sequence[np.ndarray], dim: Optional[int] = None, tol: Optional[float] = None) -> np.ndarray:
    """
    Orthogonal projector onto the complement of span(vectors)

    Args:
        vectors: Vectors of equal length
        dim: Ambient dimension, required when `vectors` is empty
        tol: Absolute rank threshold for the span

    Returns:
        Hermitian idempotent matrix I - P
    """
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    if not vectors:
        if dim is None:
            raise DimensionError("dim is required for an empty vector list")
        return np.eye(dim, dtype=complex)
    lengths = {v.shape for v in vectors}
    if len(lengths) != 1:
        raise DimensionError(f"vectors have different shapes: {sorted(lengths)}")
    n = vectors[0].shape[0]
    if dim is not None and dim != n:
        raise DimensionError(f"vectors have length {n}, expected {dim}")
    q = orthonormal_columns(np.column_stack(vectors), tol)
    return np.eye(n, dtype=complex) - q @ q.conj().T
