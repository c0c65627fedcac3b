"""
Observability analysis: Krylov observable subspaces, Kalman and PBH tests,
target reconstructability, genericity trials and counting bounds
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from tqdm import tqdm

from config import EIGENBASIS_MAX_COND, HERMITICITY_TOL, MAX_WORKERS, PBH_DEDUP_TOL, SCHEMA_VERSION
from src.dynamics import GENERATOR, LindbladGenerator, Superoperator, generator_matrix
from src.errors import DimensionError, DQSTError, NumericalError, ValidationError
from src.linops import as_operator, numerical_rank, rank_threshold, unvec, vec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementSet:
    """Measurable observables, identity included"""

    observables: Tuple[np.ndarray, ...]
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        obs = tuple(
            as_operator(x, hermitian=True, name=f"observable {k}") for k, x in enumerate(self.observables)
        )
        if not obs:
            raise ValidationError("a measurement set needs at least the identity")
        if len({x.shape for x in obs}) != 1:
            raise DimensionError("observables have different shapes")
        d = obs[0].shape[0]
        if not any(np.allclose(x, np.eye(d), atol=HERMITICITY_TOL) for x in obs):
            raise ValidationError("the identity must belong to the measurement set")
        labels = tuple(self.labels) or tuple(f"X{k}" for k in range(len(obs)))
        if len(labels) != len(obs):
            raise ValidationError(f"{len(labels)} labels for {len(obs)} observables")
        rank = numerical_rank(np.column_stack([vec(x) for x in obs]))
        if rank != len(obs):
            raise ValidationError(f"observables are linearly dependent (rank {rank} < {len(obs)})")
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def with_identity(cls, observables: Sequence[np.ndarray], labels: Sequence[str] = ()) -> "MeasurementSet":
        """Prepend the identity to a list of observables"""
        observables = list(observables)
        d = np.asarray(observables[0]).shape[0]
        labels = list(labels) or [f"X{k + 1}" for k in range(len(observables))]
        return cls(observables=tuple([np.eye(d)] + observables), labels=tuple(["I"] + labels))

    @property
    def dim(self) -> int:
        return self.observables[0].shape[0]

    def __len__(self) -> int:
        return len(self.observables)

    def vectors(self) -> np.ndarray:
        """d^2 x |X| matrix of vectorized observables"""
        return np.column_stack([vec(x) for x in self.observables])

    def identity_index(self) -> int:
        d = self.dim
        return next(k for k, x in enumerate(self.observables) if np.allclose(x, np.eye(d), atol=HERMITICITY_TOL))


@dataclass(frozen=True)
class KrylovResult:
    columns: np.ndarray  # stacked Krylov blocks
    basis: np.ndarray  # orthonormal basis of their span
    k_stop: int
    sv_kept: Optional[float]
    sv_dropped: Optional[float]


@dataclass(frozen=True)
class ObservabilityReport:
    """Verdict of the Kalman rank test with the subspaces it identified"""

    rank: int
    d2: int
    observable: bool
    obs_basis: np.ndarray
    non_obs_basis: np.ndarray
    sv_kept: Optional[float]
    sv_dropped: Optional[float]
    k_stop: int
    kind: str = GENERATOR
    method: str = "krylov"  # how the rank was decided: "eigenspace" or "krylov"

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.d2)))

    @property
    def n_nonobs(self) -> int:
        return self.non_obs_basis.shape[1]


def _check_dims(system: Superoperator, measurements: MeasurementSet):
    if system.dim != measurements.dim:
        raise DimensionError(f"dynamics act on d={system.dim}, observables on d={measurements.dim}")


def _fresh_directions(block: np.ndarray, basis: np.ndarray, tol: Optional[float]):
    """Orthonormal directions of `block` outside span(basis), with their singular values"""
    residual = block - basis @ (basis.conj().T @ block)
    residual -= basis @ (basis.conj().T @ residual)
    if residual.shape[1] == 0:
        return np.zeros((block.shape[0], 0), dtype=complex), np.array([]), np.array([])
    u, s, _ = la.svd(residual, full_matrices=False)
    reference = max(1.0, float(np.max(np.linalg.norm(block, axis=0), initial=0.0)))
    threshold = tol if tol is not None else rank_threshold(block.shape, reference)
    keep = s > threshold
    return u[:, keep], s[keep], s[~keep]


def krylov_basis(
    system: Superoperator,
    measurements: MeasurementSet,
    tol: Optional[float] = None,
    force_depth: bool = False,
) -> KrylovResult:
    """
    Build the Krylov observable subspace span{A^k x_i}

    Each step applies A to the directions added by the previous step, scaled
    by the spectral norm of A; iteration stops at the first step that adds no
    new direction (or continues to depth d^2 - 1 with `force_depth`, applying A
    to the whole accumulated basis).

    Args:
        system: Generator L (continuous) or one-step propagator (discrete)
        measurements: Measurement set
        tol: Absolute rank threshold override
        force_depth: Disable early stopping

    Returns:
        KrylovResult
    """
    _check_dims(system, measurements)
    n = system.dim ** 2
    a = system.matrix
    a_norm = float(la.norm(a, 2)) if np.any(a) else 1.0

    x = measurements.vectors()
    x = x / np.linalg.norm(x, axis=0)
    columns = [x]
    empty = np.zeros((n, 0), dtype=complex)
    basis, kept, dropped = _fresh_directions(x, empty, tol)
    kept_all = list(kept)
    dropped_all = list(dropped)
    fresh = basis
    k_stop = 0

    for k in range(1, n):
        if basis.shape[1] == n:
            break
        source = basis if force_depth else fresh
        if source.shape[1] == 0:
            break
        block = a @ source / a_norm
        columns.append(block)
        fresh, kept, dropped = _fresh_directions(block, basis, tol)
        kept_all.extend(kept)
        dropped_all.extend(dropped)
        if fresh.shape[1] == 0:
            if not force_depth:
                break
            continue
        basis = np.hstack([basis, fresh])
        k_stop = k
        logger.debug("Krylov step %d: span dimension %d", k, basis.shape[1])

    return KrylovResult(
        columns=np.hstack(columns),
        basis=basis,
        k_stop=k_stop,
        sv_kept=float(min(kept_all)) if kept_all else None,
        sv_dropped=float(max(dropped_all)) if dropped_all else None,
    )


def hermitian_complement(obs_basis: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """
    Orthonormal basis of Hermitian representatives of span(obs_basis)^perp

    Each kernel vector v is split into (M + M^dag)/2 and i(M - M^dag)/2 with
    M = unvec(v); the pieces are re-orthonormalized with real coefficients so
    every returned column is the vec of a Hermitian matrix.
    """
    n, rank = obs_basis.shape
    target = n - rank
    if target == 0:
        return np.zeros((n, 0), dtype=complex)
    kernel = la.null_space(obs_basis.conj().T) if rank else np.eye(n, dtype=complex)
    pieces = []
    for v in kernel.T:
        m = unvec(v)
        pieces.append(vec((m + m.conj().T) / 2))
        pieces.append(vec(1j * (m - m.conj().T) / 2))
    stacked = np.column_stack(pieces)
    real_form = np.vstack([stacked.real, stacked.imag])
    u, s, _ = la.svd(real_form, full_matrices=False)
    count = min(target, int(np.sum(s > tol * max(1.0, float(s[0])))))
    if count != target:
        raise NumericalError(f"Hermitian split kept {count} of {target} non-observable directions")
    u = u[:, :count]
    return u[:n] + 1j * u[n:]


@dataclass(frozen=True)
class EigenspaceCount:
    rank: int
    basis: np.ndarray
    clusters: int
    cond: float
    sv_kept: Optional[float]
    sv_dropped: Optional[float]


def _cluster_labels(eigvals: np.ndarray, tol: float) -> np.ndarray:
    """Index of the first representative within tol of each eigenvalue"""
    representatives: List[complex] = []
    labels = np.empty(eigvals.size, dtype=int)
    for k, lam in enumerate(eigvals):
        for j, mu in enumerate(representatives):
            if abs(lam - mu) <= tol:
                labels[k] = j
                break
        else:
            labels[k] = len(representatives)
            representatives.append(complex(lam))
    return labels


def eigenspace_rank(
    system: Superoperator,
    measurements: MeasurementSet,
    tol: Optional[float] = None,
    max_cond: float = EIGENBASIS_MAX_COND,
    cluster_tol: float = PBH_DEDUP_TOL,
) -> Optional[EigenspaceCount]:
    """
    Observable subspace from the eigendecomposition A = V diag(lambda) V^-1

    With Y = V^-1 X, the Krylov span of the observables splits over the
    distinct eigenvalues: dim O is the sum over eigenvalue clusters of the rank
    of the rows of Y in that cluster. The decision compares coefficients of
    the observables themselves, so it does not degrade with Krylov depth.

    Args:
        system: Generator or one-step propagator
        measurements: Measurement set
        tol: Absolute rank threshold override
        max_cond: Largest accepted condition number of V
        cluster_tol: Eigenvalues closer than this (relative to max |lambda|) are merged

    Returns:
        EigenspaceCount, or None when A has no well-conditioned eigenbasis
    """
    _check_dims(system, measurements)
    n = system.dim ** 2
    try:
        eigvals, eigvecs = la.eig(system.matrix)
        cond = float(np.linalg.cond(eigvecs))
    except (la.LinAlgError, ValueError) as e:
        logger.debug("eigendecomposition failed (%s)", e)
        return None
    if not np.isfinite(cond) or cond > max_cond:
        logger.debug("eigenbasis condition number %.3e too large for the eigenspace count", cond)
        return None

    x = measurements.vectors()
    y = la.solve(eigvecs, x / np.linalg.norm(x, axis=0))
    scale = max(1.0, float(np.max(np.abs(eigvals), initial=0.0)))
    labels = _cluster_labels(eigvals, cluster_tol * scale)
    threshold = tol if tol is not None else rank_threshold((n, x.shape[1]), 1.0) * max(1.0, cond)

    pieces = []
    kept_all: List[float] = []
    dropped_all: List[float] = []
    for j in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == j)
        u, s, _ = la.svd(y[idx], full_matrices=False)
        keep = s > threshold
        kept_all.extend(s[keep])
        dropped_all.extend(s[~keep])
        if np.any(keep):
            pieces.append(eigvecs[:, idx] @ u[:, keep])

    rank = sum(p.shape[1] for p in pieces)
    if rank:
        basis = la.svd(np.hstack(pieces), full_matrices=False)[0][:, :rank]
    else:
        basis = np.zeros((n, 0), dtype=complex)
    return EigenspaceCount(
        rank=rank,
        basis=basis,
        clusters=int(labels.max()) + 1,
        cond=cond,
        sv_kept=float(min(kept_all)) if kept_all else None,
        sv_dropped=float(max(dropped_all)) if dropped_all else None,
    )


def kalman_report(
    system: Superoperator,
    measurements: MeasurementSet,
    tol: Optional[float] = None,
    force_depth: bool = False,
) -> ObservabilityReport:
    """
    Kalman rank test on the Krylov observable subspace

    When A has a well-conditioned eigenbasis the rank and basis come from
    the eigenspace count; Krylov iteration renormalizes small residuals at
    every step and can promote rounding noise to new directions on deep,
    clustered spectra. Otherwise the Krylov basis is used directly.

    Args:
        system: Generator L (continuous) or one-step propagator (discrete)
        measurements: Measurement set
        tol: Absolute rank threshold override
        force_depth: Disable Krylov early stopping and the eigenspace count

    Returns:
        ObservabilityReport; observable iff rank = d^2
    """
    krylov = krylov_basis(system, measurements, tol=tol, force_depth=force_depth)
    n = system.dim ** 2
    eigen = None if force_depth else eigenspace_rank(system, measurements, tol=tol)
    if eigen is not None:
        if eigen.rank != krylov.basis.shape[1]:
            logger.info(
                "Krylov iteration reached rank %d, eigenspace count gives %d (cond %.2e); using the latter",
                krylov.basis.shape[1], eigen.rank, eigen.cond,
            )
        basis, sv_kept, sv_dropped, method = eigen.basis, eigen.sv_kept, eigen.sv_dropped, "eigenspace"
    else:
        basis, sv_kept, sv_dropped, method = krylov.basis, krylov.sv_kept, krylov.sv_dropped, "krylov"
    rank = basis.shape[1]
    report = ObservabilityReport(
        rank=rank,
        d2=n,
        observable=rank == n,
        obs_basis=basis,
        non_obs_basis=hermitian_complement(basis),
        sv_kept=sv_kept,
        sv_dropped=sv_dropped,
        k_stop=krylov.k_stop,
        kind=system.kind,
        method=method,
    )
    logger.info(
        "Kalman test: rank %d / %d (%s, %s), Krylov depth %d",
        rank, n, "observable" if report.observable else "not observable", method, krylov.k_stop,
    )
    return report


@dataclass(frozen=True)
class PBHVerdict:
    observable: bool
    witness: Optional[complex] = None
    checked: int = 0


def _distinct_eigenvalues(eigvals: np.ndarray, tol: float) -> List[complex]:
    order = np.lexsort((eigvals.imag, -eigvals.real))
    distinct: List[complex] = []
    for lam in eigvals[order]:
        if all(abs(lam - mu) > tol for mu in distinct):
            distinct.append(complex(lam))
    return distinct


def pbh_test(
    system: Superoperator,
    measurements: MeasurementSet,
    tol: Optional[float] = None,
    dedup_tol: float = PBH_DEDUP_TOL,
) -> PBHVerdict:
    """
    Popov-Belevitch-Hautus test

    For each distinct eigenvalue lambda of A, stacks (conj(lambda) I - A^dag)
    over the rows x_i^dag and requires rank d^2. Checking the spectrum of A
    is sufficient.

    Args:
        system: Generator or one-step propagator
        measurements: Measurement set
        tol: Absolute rank threshold override
        dedup_tol: Eigenvalues closer than this are tested once

    Returns:
        PBHVerdict with the first failing eigenvalue as witness
    """
    _check_dims(system, measurements)
    n = system.dim ** 2
    a_adj = system.matrix.conj().T
    try:
        eigvals = la.eigvals(system.matrix)
    except la.LinAlgError as e:
        raise NumericalError(f"eigensolver failed in PBH test: {e}") from e
    x = measurements.vectors()
    rows = (x / np.linalg.norm(x, axis=0)).conj().T
    eye = np.eye(n, dtype=complex)

    distinct = _distinct_eigenvalues(eigvals, dedup_tol)
    for count, lam in enumerate(distinct, start=1):
        pencil = np.vstack([np.conj(lam) * eye - a_adj, rows])
        if numerical_rank(pencil, tol) < n:
            logger.info("PBH test fails at eigenvalue %s", lam)
            return PBHVerdict(observable=False, witness=lam, checked=count)
    return PBHVerdict(observable=True, checked=len(distinct))


def target_reconstructable(report: ObservabilityReport, Z: np.ndarray, tol: Optional[float] = None) -> bool:
    """
    Whether tr(Z rho) can be recovered from the available data (Z in O)

    Args:
        report: Observability report of the system
        Z: Hermitian target observable

    Returns:
        True iff appending vec(Z) does not raise the rank of the observable basis
    """
    z = vec(as_operator(Z, hermitian=True, name="target"))
    if z.shape[0] != report.d2:
        raise DimensionError(f"target has d^2={z.shape[0]}, system has {report.d2}")
    norm = np.linalg.norm(z)
    if norm == 0:
        return True
    stacked = np.column_stack([report.obs_basis, z / norm])
    return numerical_rank(stacked, tol) == numerical_rank(report.obs_basis, tol)


def indistinguishable(rho: np.ndarray, sigma: np.ndarray, report: ObservabilityReport, tol: float = 1e-9) -> bool:
    """Two states are dynamically indistinguishable iff rho - sigma lies in N"""
    diff = vec(np.asarray(rho) - np.asarray(sigma))
    if diff.shape[0] != report.d2:
        raise DimensionError("state dimension does not match the report")
    return bool(np.linalg.norm(report.obs_basis.conj().T @ diff) <= tol * max(1.0, np.linalg.norm(diff)))


def indistinguishable_partner(rho: np.ndarray, report: ObservabilityReport) -> Optional[np.ndarray]:
    """
    A different state producing the same expectation trajectories as rho

    Returns None when the system is observable; otherwise rho + eps * N with N
    Hermitian traceless in the non-observable subspace and eps small enough to
    keep positivity.
    """
    if report.n_nonobs == 0:
        return None
    rho = as_operator(rho, hermitian=True, name="state")
    lam_min = float(la.eigvalsh(rho).min())
    if lam_min <= 1e-12:
        raise ValidationError("a partner along N is only guaranteed for full-rank states")
    direction = unvec(report.non_obs_basis[:, 0])
    direction = (direction + direction.conj().T) / 2
    eps = lam_min / (2 * float(np.max(np.abs(la.eigvalsh(direction)))))
    return rho + eps * direction


@dataclass(frozen=True)
class TrialSummary:
    n_trials: int
    n_observable: int
    rank_histogram: Dict[int, int]
    failures: List[Tuple[int, str]] = field(default_factory=list)
    seed: Optional[int] = None


SystemFactory = Callable[[np.ndarray], Tuple[LindbladGenerator, MeasurementSet]]
Sampler = Callable[[np.random.Generator], np.ndarray]


def normal_sampler(size: int, loc: float = 0.0, scale: float = 1.0) -> Sampler:
    return lambda rng: rng.normal(loc, scale, size=size)


def uniform_sampler(size: int, low: float = 0.0, high: float = 1.0) -> Sampler:
    return lambda rng: rng.uniform(low, high, size=size)


def genericity_trials(
    param_model: SystemFactory,
    sampler: Sampler,
    n_trials: int,
    seed: int,
    tol: Optional[float] = None,
    workers: int = MAX_WORKERS,
    progress: bool = False,
) -> TrialSummary:
    """
    Randomized observability trials over a parametric family of systems

    Each trial draws its parameters from an independent stream spawned from
    the master seed, so the summary does not depend on execution order.

    Args:
        param_model: Maps a parameter vector to (generator, measurement set)
        sampler: Draws a parameter vector from a numpy Generator
        n_trials: Number of trials (>= 1)
        seed: Master seed
        tol: Absolute rank threshold override
        workers: Thread count for concurrent trials
        progress: Show a tqdm progress bar

    Returns:
        TrialSummary
    """
    if n_trials < 1:
        raise ValidationError(f"n_trials must be >= 1, got {n_trials}")
    streams = np.random.SeedSequence(seed).spawn(n_trials)

    def run(index: int):
        try:
            params = sampler(np.random.default_rng(streams[index]))
            gen, measurements = param_model(params)
            return kalman_report(generator_matrix(gen), measurements, tol=tol).rank, gen.dim ** 2, None
        except (DQSTError, la.LinAlgError, ValueError) as e:
            logger.warning("trial %d failed: %s", index, e)
            return None, None, str(e)

    indices = range(n_trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(run, indices), total=n_trials, disable=not progress, desc="trials"))
    else:
        results = [run(i) for i in tqdm(indices, disable=not progress, desc="trials")]

    ranks = Counter()
    observable = 0
    failures = []
    for index, (rank, d2, error) in enumerate(results):
        if error is not None:
            failures.append((index, error))
            continue
        ranks[rank] += 1
        observable += int(rank == d2)
    return TrialSummary(
        n_trials=n_trials,
        n_observable=observable,
        rank_histogram=dict(sorted(ranks.items())),
        failures=failures,
        seed=seed,
    )


@dataclass(frozen=True)
class CountingVerdict:
    d: int
    n_obs: int
    unitary_possible: bool  # |X| >= d
    multipartite: Optional[Tuple[int, int]] = None
    multipartite_lhs: Optional[int] = None  # k^N
    multipartite_rhs: Optional[int] = None  # N k^2 - N - 1
    multipartite_possible: Optional[bool] = None


def counting_bounds(d: int, n_obs: int, multipartite: Optional[Tuple[int, int]] = None) -> CountingVerdict:
    """
    Necessary counting conditions for tomography under unitary dynamics

    Args:
        d: Hilbert space dimension (>= 2)
        n_obs: Number of linearly independent observables, identity included
        multipartite: Optional (N sites, k local dimension) for single-site measurements

    Returns:
        CountingVerdict
    """
    if d < 2:
        raise ValidationError(f"d must be >= 2, got {d}")
    if multipartite is None:
        return CountingVerdict(d=d, n_obs=n_obs, unitary_possible=n_obs >= d)
    n_sites, k = multipartite
    lhs = k ** n_sites
    rhs = n_sites * k ** 2 - n_sites - 1
    return CountingVerdict(
        d=d,
        n_obs=n_obs,
        unitary_possible=n_obs >= d,
        multipartite=(n_sites, k),
        multipartite_lhs=lhs,
        multipartite_rhs=rhs,
        multipartite_possible=lhs <= rhs,
    )


def report_to_dict(report: ObservabilityReport) -> Dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": report.kind,
        "rank": report.rank,
        "d2": report.d2,
        "observable": report.observable,
        "k_stop": report.k_stop,
        "method": report.method,
        "sv_kept": report.sv_kept,
        "sv_dropped": report.sv_dropped,
        "n_nonobs": report.n_nonobs,
    }
