"""
Simulated data acquisition: spectral families of observables, exact
expectations and variances, and seeded finite-shot estimates
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from config import DEFAULT_SAMPLING_MODE, EIGEN_CLUSTER_TOL, PROBABILITY_TOL, SAMPLING_MODES, TRACE_TOL
from src.dynamics import GENERATOR, Evolution, Superoperator
from src.errors import DimensionError, NumericalError, ValidationError
from src.linops import as_operator, unvec, vec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralDecomposition:
    outcomes: np.ndarray
    projectors: Tuple[np.ndarray, ...]

    def reconstruct(self) -> np.ndarray:
        return sum(a * p for a, p in zip(self.outcomes, self.projectors))


def spectral(X: np.ndarray, tol: float = EIGEN_CLUSTER_TOL) -> SpectralDecomposition:
    """
    Spectral family of an observable

    Eigenvalues closer than `tol` are merged into one outcome whose projector
    sums the corresponding eigenvector dyads.

    Args:
        X: Hermitian observable
        tol: Clustering tolerance

    Returns:
        SpectralDecomposition with outcomes in increasing order
    """
    x = as_operator(X, hermitian=True, name="observable")
    eigvals, eigvecs = la.eigh(x)
    outcomes = []
    groups: List[List[int]] = []
    for k, lam in enumerate(eigvals):
        if groups and abs(lam - eigvals[groups[-1][0]]) <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    projectors = []
    for group in groups:
        v = eigvecs[:, group]
        projectors.append(v @ v.conj().T)
        outcomes.append(float(np.mean(eigvals[group])))
    return SpectralDecomposition(outcomes=np.array(outcomes), projectors=tuple(projectors))


def validate_state(rho: np.ndarray, tol: float = TRACE_TOL) -> np.ndarray:
    """Check that rho is a density matrix (Hermitian, unit trace, PSD within tol)"""
    r = as_operator(rho, hermitian=True, name="state")
    trace = np.trace(r).real
    if abs(trace - 1) > tol:
        raise ValidationError(f"state trace is {trace:.10f}, expected 1")
    lam_min = float(la.eigvalsh(r).min())
    if lam_min < -tol:
        raise ValidationError(f"state is not positive semidefinite (min eigenvalue {lam_min:.3e})")
    return r


def evolve_observable(system: Optional[Superoperator], X: np.ndarray, t: float = 0.0) -> np.ndarray:
    """
    Heisenberg-evolved observable Phi_t(X)

    A generator is exponentiated; a one-step propagator is applied t times
    (t must then be a non-negative integer). No system means t = 0.
    """
    x = np.asarray(X, dtype=complex)
    if system is None or t == 0:
        return x
    if system.dim != x.shape[0]:
        raise DimensionError(f"dynamics act on d={system.dim}, observable has d={x.shape[0]}")
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    if system.kind == GENERATOR:
        return unvec(la.expm(system.matrix * t) @ vec(x))
    steps = int(round(t))
    if abs(steps - t) > 1e-12:
        raise ValidationError(f"discrete dynamics need an integer step count, got {t}")
    return unvec(np.linalg.matrix_power(system.matrix, steps) @ vec(x))


def _expectation(x: np.ndarray, rho: np.ndarray) -> complex:
    return np.trace(x @ rho)


def expectation_and_variance(
    X: np.ndarray,
    rho: np.ndarray,
    system: Optional[Superoperator] = None,
    t: float = 0.0,
) -> Tuple[float, float]:
    """
    Exact mean and single-shot variance of X measured at time t

    y = tr(Phi_t(X) rho), var = tr(Phi_t(X^2) rho) - y^2 (clamped at 0)

    Args:
        X: Hermitian observable
        rho: Initial state
        system: Dynamics (generator or one-step propagator); None for t = 0
        t: Measurement time

    Returns:
        (y, variance)
    """
    x = as_operator(X, hermitian=True, name="observable")
    r = validate_state(rho)
    if x.shape != r.shape:
        raise DimensionError(f"observable {x.shape} and state {r.shape} differ")
    y = _expectation(evolve_observable(system, x, t), r)
    second = _expectation(evolve_observable(system, x @ x, t), r)
    if abs(y.imag) > 1e-10:
        logger.warning("expectation has imaginary part %.3e", y.imag)
    variance = float(second.real - y.real ** 2)
    if variance < -1e-12:
        logger.warning("negative variance %.3e clamped to 0", variance)
    return float(y.real), max(variance, 0.0)


def _clean_distribution(p: np.ndarray) -> np.ndarray:
    if np.any(p < -PROBABILITY_TOL):
        raise NumericalError(f"outcome probability {p.min():.3e} is negative, state or dynamics invalid")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1) > 1e-6:
        raise NumericalError(f"outcome probabilities sum to {total:.8f}")
    return p / total


def evolved_distribution(
    X: np.ndarray,
    rho: np.ndarray,
    system: Optional[Superoperator] = None,
    t: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Outcome distribution of X at time t, p_k = tr(Phi_t(Pi_k) rho)

    Returns:
        (outcomes, probabilities)
    """
    decomposition = spectral(X)
    r = validate_state(rho)
    p = np.array([_expectation(evolve_observable(system, proj, t), r).real for proj in decomposition.projectors])
    return decomposition.outcomes, _clean_distribution(p)


@dataclass(frozen=True)
class ExpectationEstimate:
    value: float
    shots: int
    exact_mean: float
    variance: float
    mode: str = DEFAULT_SAMPLING_MODE


def _check_mode(mode: str):
    if mode not in SAMPLING_MODES:
        raise ValidationError(f"unknown sampling mode {mode!r}, expected one of {SAMPLING_MODES}")


def draw_estimate(
    outcomes: np.ndarray,
    probabilities: np.ndarray,
    shots: int,
    rng: np.random.Generator,
    mode: str = DEFAULT_SAMPLING_MODE,
) -> ExpectationEstimate:
    """Sample-average estimate from an outcome distribution"""
    _check_mode(mode)
    if shots < 1:
        raise ValidationError(f"shot count must be >= 1, got {shots}")
    y = float(outcomes @ probabilities)
    variance = max(float((outcomes ** 2) @ probabilities) - y ** 2, 0.0)
    if mode == "exact":
        counts = rng.multinomial(shots, probabilities)
        value = float(outcomes @ counts) / shots
    else:
        value = float(rng.normal(y, np.sqrt(variance / shots)))
    return ExpectationEstimate(value=value, shots=shots, exact_mean=y, variance=variance, mode=mode)


def sample_estimate(
    X: np.ndarray,
    rho: np.ndarray,
    shots: int,
    seed,
    mode: str = DEFAULT_SAMPLING_MODE,
    system: Optional[Superoperator] = None,
    t: float = 0.0,
) -> ExpectationEstimate:
    """
    Finite-shot estimate of tr(Phi_t(X) rho)

    Mode "exact" averages P outcomes drawn from the multinomial distribution;
    mode "clt" draws a single value from N(y, var / P).

    Args:
        X: Hermitian observable
        rho: Initial state
        shots: Number of shots P (>= 1)
        seed: Anything numpy.random.default_rng accepts
        mode: "exact" or "clt"
        system: Dynamics; None measures at t = 0
        t: Measurement time

    Returns:
        ExpectationEstimate
    """
    outcomes, p = evolved_distribution(X, rho, system, t)
    return draw_estimate(outcomes, p, shots, np.random.default_rng(seed), mode)


@dataclass(frozen=True)
class MeasurementRecord:
    obs_label: str
    time: float
    shots: int
    estimate: float
    exact_mean: float
    variance: float
    seed: Union[int, Sequence[int]]

    def to_dict(self) -> Dict:
        return asdict(self)


class MeasurementSimulator:
    """Seeded batch sampler producing one record per plan row"""

    def __init__(self, system: Superoperator, mode: str = DEFAULT_SAMPLING_MODE, seed: int = 0):
        """
        Args:
            system: Generator or one-step propagator
            mode: Sampling mode ("clt" or "exact")
            seed: Master seed; row k uses the k-th spawned child stream
        """
        _check_mode(mode)
        self.system = system
        self.mode = mode
        self.seed = seed
        self._evolution = Evolution(system) if system.kind == GENERATOR else None

    def _evolve(self, x: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return x
        if self._evolution is not None:
            return unvec(self._evolution.apply(vec(x), t), self.system.dim)
        return evolve_observable(self.system, x, t)

    def distribution(self, X: np.ndarray, rho: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        decomposition = spectral(X)
        p = np.array([_expectation(self._evolve(proj, t), rho).real for proj in decomposition.projectors])
        return decomposition.outcomes, _clean_distribution(p)

    def distributions(
        self,
        rows: Sequence[Tuple[str, np.ndarray, float]],
        rho: np.ndarray,
    ) -> List[Optional[Tuple[np.ndarray, np.ndarray]]]:
        """Outcome distributions of every row (None for the identity)"""
        rho = validate_state(rho)
        result = []
        for _, x, t in rows:
            x = np.asarray(x, dtype=complex)
            if np.allclose(x, np.eye(x.shape[0])):
                result.append(None)
            else:
                result.append(self.distribution(x, rho, t))
        return result

    def sample(
        self,
        rows: Sequence[Tuple[str, np.ndarray, float]],
        distributions: Sequence[Optional[Tuple[np.ndarray, np.ndarray]]],
        shots: int,
        seed: Optional[Union[int, Sequence[int]]] = None,
    ) -> List[MeasurementRecord]:
        """Draw one estimate per row from precomputed distributions (seed may be a list of ints)"""
        seed = self.seed if seed is None else seed
        streams = np.random.SeedSequence(seed).spawn(len(rows))
        records = []
        for (label, _, t), dist, stream in zip(rows, distributions, streams):
            if dist is None:
                records.append(MeasurementRecord(label, float(t), 0, 1.0, 1.0, 0.0, seed))
                continue
            est = draw_estimate(dist[0], dist[1], shots, np.random.default_rng(stream), self.mode)
            records.append(MeasurementRecord(label, float(t), shots, est.value, est.exact_mean, est.variance, seed))
        return records

    def measure(
        self,
        rows: Sequence[Tuple[str, np.ndarray, float]],
        rho: np.ndarray,
        shots: int,
    ) -> List[MeasurementRecord]:
        """
        Sample every (label, observable, time) row for the initial state rho

        The identity carries no information and is recorded with zero shots and
        estimate 1.
        """
        records = self.sample(rows, self.distributions(rows, rho), shots)
        logger.debug("sampled %d measurement rows (%s mode, P=%d)", len(records), self.mode, shots)
        return records
