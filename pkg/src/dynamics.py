"""
Heisenberg-picture dynamics: Lindblad and GKS generators, Kraus maps, and
their superoperator matrices and propagators
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from config import (
    ALIAS_IMAG_TOL,
    ALIAS_REAL_TOL,
    EIGENBASIS_MAX_COND,
    HERMITICITY_TOL,
)
from src.errors import DimensionError, NumericalError, ValidationError
from src.linops import OperatorBasis, as_operator, unvec, vec

logger = logging.getLogger(__name__)

GENERATOR = "generator"
PROPAGATOR = "propagator"


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian plus noise operators of a Markovian semigroup"""

    H: np.ndarray
    noise_ops: Tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        h = as_operator(self.H, hermitian=True, name="Hamiltonian")
        ops = tuple(as_operator(op, name=f"noise operator {k}") for k, op in enumerate(self.noise_ops))
        for k, op in enumerate(ops):
            if op.shape != h.shape:
                raise DimensionError(f"noise operator {k} has shape {op.shape}, Hamiltonian has {h.shape}")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "noise_ops", ops)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class KrausMap:
    """Unital CP map X -> sum_k M_k X M_k^dagger"""

    kraus_ops: Tuple[np.ndarray, ...]
    tol: float = 1e-10

    def __post_init__(self):
        ops = tuple(as_operator(m, name=f"Kraus operator {k}") for k, m in enumerate(self.kraus_ops))
        if not ops:
            raise ValidationError("a Kraus map needs at least one operator")
        if len({m.shape for m in ops}) != 1:
            raise DimensionError("Kraus operators have different shapes")
        d = ops[0].shape[0]
        unit = sum(m @ m.conj().T for m in ops)
        deviation = float(np.max(np.abs(unit - np.eye(d))))
        if deviation > self.tol:
            raise ValidationError(f"Kraus map is not unital: max|sum M M^dagger - I| = {deviation:.3e}")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]


@dataclass(frozen=True)
class Superoperator:
    """d^2 x d^2 matrix acting on vectorized observables"""

    dim: int
    matrix: np.ndarray
    kind: str = GENERATOR
    time: Optional[float] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.dim * self.dim
        if m.shape != (n, n):
            raise DimensionError(f"superoperator for d={self.dim} must be {n}x{n}, got {m.shape}")
        if self.kind not in (GENERATOR, PROPAGATOR):
            raise ValidationError(f"unknown superoperator kind {self.kind!r}")
        object.__setattr__(self, "matrix", m)

    def apply(self, operator: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(operator), self.dim)

    def unitality_defect(self) -> float:
        """Distance of the action on the identity from its required value"""
        identity = vec(np.eye(self.dim))
        target = np.zeros_like(identity) if self.kind == GENERATOR else identity
        return float(np.max(np.abs(self.matrix @ identity - target)))


@dataclass(frozen=True)
class GKSSpec:
    """GKS coefficient matrix over basis elements F_1 .. F_{d^2-1}"""

    basis: OperatorBasis
    A: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        a = np.asarray(self.A, dtype=complex)
        n = len(self.basis) - 1
        if a.shape != (n, n):
            raise DimensionError(f"GKS matrix must be {n}x{n}, got {a.shape}")
        if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITICITY_TOL:
            raise ValidationError("GKS matrix is not Hermitian")
        object.__setattr__(self, "A", a)


def lindblad_action(gen: LindbladGenerator, x: np.ndarray) -> np.ndarray:
    """Direct evaluation of i[H,X] + sum_k (L_k^dag X L_k - {L_k^dag L_k, X}/2)"""
    h = gen.H
    out = 1j * (h @ x - x @ h)
    for op in gen.noise_ops:
        op_dag = op.conj().T
        core = op_dag @ op
        out += op_dag @ x @ op - 0.5 * (core @ x + x @ core)
    return out


def generator_matrix(gen: LindbladGenerator) -> Superoperator:
    """
    Vectorize a Lindblad generator

    L = i(I kron H - H^T kron I)
        + sum_k [L_k^T kron L_k^dag - (I kron L_k^dag L_k + (L_k^dag L_k)^T kron I) / 2]

    Args:
        gen: Lindblad generator

    Returns:
        Superoperator of kind "generator"
    """
    d = gen.dim
    eye = np.eye(d, dtype=complex)
    h = gen.H
    matrix = 1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in gen.noise_ops:
        op_dag = op.conj().T
        core = op_dag @ op
        matrix += np.kron(op.T, op_dag) - 0.5 * (np.kron(eye, core) + np.kron(core.T, eye))
    return Superoperator(dim=d, matrix=matrix, kind=GENERATOR)


def kraus_superoperator(kraus: KrausMap) -> Superoperator:
    """
    Vectorize a Kraus map

    The matrix sum_k (M_k^dagger)^T kron M_k reproduces X -> sum_k M_k X M_k^dagger.

    Args:
        kraus: Unital Kraus map

    Returns:
        Superoperator of kind "propagator" for one time step
    """
    matrix = sum(np.kron(m.conj(), m) for m in kraus.kraus_ops)
    return Superoperator(dim=kraus.dim, matrix=matrix, kind=PROPAGATOR, time=1.0)


def propagate(generator: Superoperator, t: float) -> Superoperator:
    """
    Matrix exponential e^{Lt} (scaling and squaring with Pade approximant)

    Args:
        generator: Generator superoperator
        t: Non-negative time

    Returns:
        Propagator superoperator at time t
    """
    if generator.kind != GENERATOR:
        raise ValidationError("propagate expects a generator")
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    matrix = la.expm(generator.matrix * t)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"matrix exponential overflowed at t={t}")
    return Superoperator(dim=generator.dim, matrix=matrix, kind=PROPAGATOR, time=float(t))


def discretize(generator: Superoperator, dt: float) -> Superoperator:
    """One-step propagator of the system sampled every dt"""
    if dt <= 0:
        raise ValidationError(f"sampling interval must be positive, got {dt}")
    return propagate(generator, dt)


def gks_action(spec: GKSSpec, x: np.ndarray, H: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Direct double-sum evaluation of a generator in GKS form

    sum_{j,i} a_ji (F_i^dag X F_j - {F_i^dag F_j, X} / 2), plus i[H, X] when H is given.
    """
    f = spec.basis.elements[1:]
    out = np.zeros_like(x, dtype=complex)
    if H is not None:
        out += 1j * (H @ x - x @ H)
    n = len(f)
    for j in range(n):
        for i in range(n):
            a = spec.A[j, i]
            if a == 0:
                continue
            fi_dag = f[i].conj().T
            core = fi_dag @ f[j]
            out += a * (fi_dag @ x @ f[j] - 0.5 * (core @ x + x @ core))
    return out


def gks_to_lindblad(spec: GKSSpec, H: Optional[np.ndarray] = None) -> LindbladGenerator:
    """
    Canonical noise operators from a GKS matrix

    Diagonalizes A = V D V^dagger and sets L_k = sqrt(lambda_k) sum_m V_mk F_m.

    Args:
        spec: GKS specification (basis and coefficient matrix)
        H: Hamiltonian (zero when omitted)

    Returns:
        Equivalent LindbladGenerator
    """
    d = spec.basis.dim
    eigvals, eigvecs = la.eigh(spec.A)
    scale = max(1.0, float(np.max(np.abs(eigvals), initial=0.0)))
    if eigvals.size and eigvals.min() < -spec.tol * scale:
        raise ValidationError(f"GKS matrix is not positive semidefinite (min eigenvalue {eigvals.min():.3e})")

    f = spec.basis.elements[1:]
    noise_ops = []
    for k, lam in enumerate(eigvals):
        if lam <= spec.tol * scale:
            continue
        op = np.sqrt(lam) * sum(eigvecs[m, k] * f[m] for m in range(len(f)))
        noise_ops.append(op)
    logger.debug("GKS matrix of size %d yields %d noise operators", len(f), len(noise_ops))
    h = np.zeros((d, d), dtype=complex) if H is None else H
    return LindbladGenerator(H=h, noise_ops=tuple(noise_ops))


def _pairwise(eigvals: np.ndarray):
    i, j = np.triu_indices(eigvals.size, k=1)
    return i, j, eigvals[i] - eigvals[j]


@dataclass(frozen=True)
class AliasingVerdict:
    ok: bool
    offending: List[Tuple[complex, complex]] = field(default_factory=list)


def aliasing_ok(
    generator: Superoperator,
    dt: float,
    real_tol: float = ALIAS_REAL_TOL,
    imag_tol: float = ALIAS_IMAG_TOL,
) -> AliasingVerdict:
    """
    Check that sampling every dt cannot fold two distinct eigenvalues together

    For every pair of distinct eigenvalues with equal real part, the imaginary
    gap must stay away from integer multiples of 2*pi/dt.

    Args:
        generator: Generator superoperator
        dt: Sampling interval
        real_tol: Tolerance for "equal real part"
        imag_tol: Proximity tolerance to a multiple of 2*pi/dt

    Returns:
        AliasingVerdict with the offending eigenvalue pairs
    """
    if dt <= 0:
        raise ValidationError(f"sampling interval must be positive, got {dt}")
    eigvals = la.eigvals(generator.matrix)
    i, j, gaps = _pairwise(eigvals)
    distinct = np.abs(gaps) > imag_tol
    same_real = np.abs(gaps.real) <= real_tol
    period = 2 * np.pi / dt
    folded = np.mod(np.abs(gaps.imag), period)
    near_multiple = np.minimum(folded, period - folded) <= imag_tol
    bad = distinct & same_real & near_multiple
    offending = [(complex(eigvals[a]), complex(eigvals[b])) for a, b in zip(i[bad], j[bad])]
    if offending:
        logger.info("sampling interval %.4g aliases %d eigenvalue pairs", dt, len(offending))
    return AliasingVerdict(ok=not offending, offending=offending)


def spectral_gap(generator: Superoperator, tol: float = 1e-9) -> Optional[complex]:
    """
    Nonzero eigenvalue of largest real part (lambda_2)

    Returns None when every eigenvalue is numerically zero.
    """
    eigvals = la.eigvals(generator.matrix)
    scale = max(1.0, float(np.max(np.abs(eigvals), initial=0.0)))
    nonzero = eigvals[np.abs(eigvals) > tol * scale]
    if nonzero.size == 0:
        return None
    return complex(nonzero[np.argmax(nonzero.real)])


class Evolution:
    """Cached evaluator of e^{Lt} x for many times and vectors"""

    def __init__(self, generator: Superoperator, max_cond: float = EIGENBASIS_MAX_COND):
        """
        Args:
            generator: Generator superoperator
            max_cond: Largest eigenvector condition number accepted for the
                spectral shortcut; above it every call uses expm
        """
        if generator.kind != GENERATOR:
            raise ValidationError("Evolution expects a generator")
        self.generator = generator
        self._eigvals = None
        self._eigvecs = None
        self._lu = None

        try:
            eigvals, eigvecs = la.eig(generator.matrix)
            cond = np.linalg.cond(eigvecs)
        except (la.LinAlgError, ValueError) as e:
            logger.warning("eigendecomposition failed (%s), using expm", e)
            return
        if np.isfinite(cond) and cond <= max_cond:
            self._eigvals = eigvals
            self._eigvecs = eigvecs
            self._lu = la.lu_factor(eigvecs)
        else:
            logger.debug("eigenbasis condition number %.3e too large, using expm", cond)

    @property
    def spectral(self) -> bool:
        return self._eigvals is not None

    def coefficients(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Components of x in the eigenbasis (None when not diagonalizable)"""
        if not self.spectral:
            return None
        return la.lu_solve(self._lu, x)

    def apply(self, x: np.ndarray, t: float, coefficients: Optional[np.ndarray] = None) -> np.ndarray:
        if t < 0:
            raise ValidationError(f"time must be non-negative, got {t}")
        if not self.spectral:
            return la.expm(self.generator.matrix * t) @ x
        c = self.coefficients(x) if coefficients is None else coefficients
        return self._eigvecs @ (np.exp(self._eigvals * t) * c)

    def apply_many(self, x: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """Columns e^{L t_k} x for every requested time"""
        times = np.asarray(times, dtype=float)
        if self.spectral:
            c = self.coefficients(x)
            return self._eigvecs @ (np.exp(np.outer(self._eigvals, times)) * c[:, None])
        steps = np.diff(times)
        if steps.size and np.all(steps >= 0) and np.allclose(steps, steps[0]):
            # uniform grid: one expm per step size instead of one per time
            step = la.expm(self.generator.matrix * steps[0])
            columns = [la.expm(self.generator.matrix * times[0]) @ x]
            for _ in steps:
                columns.append(step @ columns[-1])
            return np.column_stack(columns)
        return np.column_stack([la.expm(self.generator.matrix * t) @ x for t in times])

    def propagator(self, t: float) -> Superoperator:
        return propagate(self.generator, t)
