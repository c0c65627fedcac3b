"""
Linear-inversion estimates: states, observable parts, MSE bounds and
target-observable expectations
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from src.dynamics import Evolution, Superoperator
from src.errors import DimensionError, InfeasibleError, NumericalError, ValidationError
from src.linops import as_operator, hermitize, rank_audit, unvec, vec
from src.observability import MeasurementSet, ObservabilityReport, target_reconstructable
from src.selection import MeasurementPlan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignMatrix:
    """Rows (e^{L t_j} x_{i_j})^dagger in plan order"""

    rows: np.ndarray
    labels: Tuple[str, ...]
    times: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.rows.shape[1])))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def expectations(self, rho: np.ndarray) -> np.ndarray:
        """Exact expectations O vec(rho)"""
        return (self.rows @ vec(rho)).real


def design_matrix(plan: MeasurementPlan) -> DesignMatrix:
    if not plan.entries:
        raise ValidationError("cannot build a design matrix from an empty plan")
    return DesignMatrix(
        rows=np.vstack([e.vector.conj() for e in plan.entries]),
        labels=tuple(e.label for e in plan.entries),
        times=tuple(e.time for e in plan.entries),
    )


@dataclass(frozen=True)
class ReconstructionResult:
    rho: np.ndarray
    condition: float  # condition number of O^dagger O
    residual: float  # ||O r - y||
    rank: int
    psd_projected: bool = False


def _check_data(design: DesignMatrix, y: Sequence[float]) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if y.shape != (len(design),):
        raise DimensionError(f"{y.shape[0] if y.ndim else 0} estimates for {len(design)} design rows")
    return y


def project_to_density(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace"""
    eigvals, eigvecs = la.eigh(hermitize(rho))
    eigvals = np.clip(eigvals, 0.0, None)
    if eigvals.sum() <= 0:
        return np.eye(rho.shape[0], dtype=complex) / rho.shape[0]
    eigvals /= eigvals.sum()
    return (eigvecs * eigvals) @ eigvecs.conj().T


def estimate_state(
    design: DesignMatrix,
    y: Sequence[float],
    psd_project: bool = False,
    tol: Optional[float] = None,
) -> ReconstructionResult:
    """
    Least-squares state estimate r = (O^dagger O)^{-1} O^dagger y

    Solved through an SVD-based least-squares routine. The result is always
    hermitized; PSD projection is opt-in.

    Args:
        design: Design matrix with rank d^2
        y: Estimated expectations, one per row
        psd_project: Project onto the set of density matrices
        tol: Absolute rank threshold override

    Returns:
        ReconstructionResult

    Raises:
        InfeasibleError: rank(O) < d^2, the state is not uniquely determined
    """
    y = _check_data(design, y)
    n = design.rows.shape[1]
    audit = rank_audit(design.rows, tol)
    if audit.rank < n:
        raise InfeasibleError(
            f"design matrix has rank {audit.rank} < d^2 = {n}; the state is not uniquely determined",
            reason="rank_deficient",
            details={"rank": audit.rank, "d2": n},
        )
    try:
        r, _, _, sv = la.lstsq(design.rows, y)
    except la.LinAlgError as e:
        raise NumericalError(f"least-squares solve failed: {e}") from e
    residual = float(np.linalg.norm(design.rows @ r - y))
    rho = hermitize(unvec(r))
    if psd_project:
        rho = project_to_density(rho)
    condition = float((sv[0] / sv[-1]) ** 2)
    logger.debug("state estimate: cond(O^dag O) = %.3e, residual %.3e", condition, residual)
    return ReconstructionResult(rho=rho, condition=condition, residual=residual, rank=audit.rank, psd_projected=psd_project)


def estimate_observable_part(design: DesignMatrix, y: Sequence[float]) -> np.ndarray:
    """
    Minimum-norm least-squares solution

    For a rank-deficient design this is the component of the state inside the
    row space of O, i.e. its orthogonal projection on the observable subspace.
    """
    y = _check_data(design, y)
    r, *_ = la.lstsq(design.rows, y)
    return hermitize(unvec(r))


@dataclass(frozen=True)
class MSEBound:
    k_bound: float  # (k / P) tr[(O^dag O)^{-1}]
    exact: Optional[float] = None  # tr[(O^dag O)^{-1} O^dag S O (O^dag O)^{-1}] / P


def mse_bound(
    design: DesignMatrix,
    k: float,
    shots: int,
    variances: Optional[Sequence[float]] = None,
    explicit_inverse: bool = False,
) -> MSEBound:
    """
    Bound on E tr[(rho - rho_hat)^2] for P shots per design row

    Args:
        design: Full-rank design matrix
        k: Largest single-shot variance of any row
        shots: Shots per row P
        variances: Optional per-row single-shot variances for the exact value
        explicit_inverse: Form (O^dag O)^{-1} explicitly instead of using the SVD

    Returns:
        MSEBound
    """
    if k < 0:
        raise ValidationError(f"k must be non-negative, got {k}")
    if shots < 1:
        raise ValidationError(f"shot count must be >= 1, got {shots}")
    o = design.rows
    n = o.shape[1]
    audit = rank_audit(o)
    if audit.rank < n:
        raise InfeasibleError(
            f"design matrix has rank {audit.rank} < d^2 = {n}",
            reason="rank_deficient",
            details={"rank": audit.rank, "d2": n},
        )

    if explicit_inverse:
        gram_inv = np.linalg.inv(o.conj().T @ o)
        trace = float(np.trace(gram_inv).real)
    else:
        u, s, vh = la.svd(o, full_matrices=False)
        trace = float(np.sum(1.0 / s ** 2))
    bound = k * trace / shots

    exact = None
    if variances is not None:
        var = np.asarray(variances, dtype=float)
        if var.shape != (o.shape[0],):
            raise DimensionError(f"{var.shape[0]} variances for {o.shape[0]} design rows")
        if explicit_inverse:
            m = gram_inv @ o.conj().T
            exact = float(np.trace((m * var) @ m.conj().T).real) / shots
        else:
            weights = np.sum(np.abs(u) ** 2 * var[:, None], axis=0)
            exact = float(np.sum(weights / s ** 2)) / shots
    return MSEBound(k_bound=bound, exact=exact)


def variance_bound(measurements: MeasurementSet) -> float:
    """k = max_i ((lambda_max - lambda_min) / 2)^2, the worst single-shot variance"""
    spreads = []
    for x in measurements.observables:
        eigvals = la.eigvalsh(x)
        spreads.append(((eigvals[-1] - eigvals[0]) / 2) ** 2)
    return float(max(spreads))


@dataclass(frozen=True)
class TargetSolution:
    """Expansion Z ~ sum_j alpha_j X_{i_j}[t_j]"""

    coefficients: np.ndarray
    entries: Tuple[Tuple[int, str, float], ...]  # (observable index, label, time)
    residual: float  # ||Z - sum alpha X[t]||_HS
    target_norm: float

    def rows(self, measurements: MeasurementSet) -> List[Tuple[str, np.ndarray, float]]:
        return [(label, measurements.observables[i], t) for i, label, t in self.entries]


def evolved_candidates(
    generator: Superoperator,
    measurements: MeasurementSet,
    times: Sequence[float],
) -> List[Tuple[int, str, float, np.ndarray]]:
    """
    Evolved observables X_i[t] for every observable and candidate time

    The identity is a fixed point of the dynamics and appears once, at the
    earliest time.
    """
    times = sorted(float(t) for t in times)
    if not times:
        raise ValidationError("at least one candidate time is required")
    if times[0] < 0:
        raise ValidationError(f"times must be non-negative, got {times[0]}")
    evolution = Evolution(generator)
    identity = measurements.identity_index()
    xs = measurements.vectors()
    candidates = []
    for t in times:
        for i, label in enumerate(measurements.labels):
            if i == identity and t != times[0]:
                continue
            candidates.append((i, label, t, evolution.apply(xs[:, i], t)))
    return candidates


def _solve(columns: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, float]:
    alpha, *_ = la.lstsq(columns, z)
    return alpha, float(np.linalg.norm(columns @ alpha - z))


def target_coefficients(
    Z: np.ndarray,
    candidates: Sequence[Tuple[int, str, float, np.ndarray]],
    report: Optional[ObservabilityReport] = None,
    tol: float = 1e-8,
    minimal_support: bool = True,
) -> TargetSolution:
    """
    Expand a target observable over evolved measurement operators

    With `minimal_support`, candidates are added greedily (largest residual
    reduction first, earliest time on ties) until the relative residual drops
    below `tol`; otherwise all candidates enter one least-squares solve.

    Args:
        Z: Hermitian target
        candidates: (index, label, time, vec(X_i[t])) tuples, e.g. from evolved_candidates
        report: Observability report used to check Z in O first
        tol: Relative residual that ends the greedy search
        minimal_support: Greedy sparse selection

    Returns:
        TargetSolution with real coefficients in time order

    Raises:
        InfeasibleError: Z is outside the observable subspace
    """
    z_op = as_operator(Z, hermitian=True, name="target")
    z = vec(z_op)
    if report is not None and not target_reconstructable(report, z_op):
        raise InfeasibleError(
            "target observable lies outside the observable subspace; its expectation cannot be reconstructed",
            reason="target_not_observable",
            details={"rank": report.rank, "d2": report.d2},
        )
    if not candidates:
        raise ValidationError("no candidate evolved observables supplied")
    if any(c[3].shape != z.shape for c in candidates):
        raise DimensionError("candidate vectors do not match the target dimension")
    z_norm = float(np.linalg.norm(z))
    vectors = np.column_stack([c[3] for c in candidates])

    if minimal_support:
        chosen: List[int] = []
        alpha, residual = np.zeros(0), z_norm
        while residual > tol * max(z_norm, 1e-300) and len(chosen) < len(candidates):
            trials = []
            for j in range(len(candidates)):
                if j in chosen:
                    continue
                trial_alpha, trial_res = _solve(vectors[:, chosen + [j]], z)
                trials.append((trial_res, candidates[j][2], j, trial_alpha))
            best_res = min(t[0] for t in trials)
            # earliest time among near-ties
            best = min((t for t in trials if t[0] <= best_res + 1e-12 * max(z_norm, 1.0)), key=lambda t: (t[1], t[2]))
            if best[0] >= residual - 1e-12 * max(z_norm, 1.0):
                break
            residual, j, alpha = best[0], best[2], best[3]
            chosen.append(j)
        if residual > tol * max(z_norm, 1e-300):
            logger.warning("target residual %.3e exceeds tolerance with %d candidates", residual, len(chosen))
    else:
        chosen = list(range(len(candidates)))
        alpha, residual = _solve(vectors, z)

    order = sorted(range(len(chosen)), key=lambda k: (candidates[chosen[k]][2], candidates[chosen[k]][0]))
    coefficients = np.array([alpha[k] for k in order]) if chosen else np.zeros(0)
    if np.max(np.abs(coefficients.imag), initial=0.0) > 1e-8 * max(1.0, float(np.max(np.abs(coefficients), initial=0.0))):
        logger.warning("target coefficients have imaginary parts up to %.3e", np.max(np.abs(coefficients.imag)))
    entries = tuple(candidates[chosen[k]][:3] for k in order)
    logger.info("target expansion over %d evolved observables, residual %.3e", len(entries), residual)
    return TargetSolution(coefficients=coefficients.real, entries=entries, residual=residual, target_norm=z_norm)


def target_estimate(alpha: Sequence[float], y: Sequence[float]) -> float:
    """z_hat = sum_j alpha_j y_j"""
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    if alpha.shape != y.shape:
        raise DimensionError(f"{alpha.size} coefficients for {y.size} estimates")
    return float(alpha @ y)


def squared_error(rho: np.ndarray, rho_hat: np.ndarray) -> float:
    """tr[(rho - rho_hat)^dagger (rho - rho_hat)]"""
    diff = np.asarray(rho) - np.asarray(rho_hat)
    return float(np.vdot(diff, diff).real)


def scaling_slope(shots: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log10(error) against log10(shots)"""
    shots = np.asarray(shots, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if shots.shape != errors.shape or shots.size < 2:
        raise ValidationError("need at least two (shots, error) pairs of equal length")
    if np.any(shots <= 0) or np.any(errors <= 0):
        raise ValidationError("shots and errors must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log10(shots), np.log10(errors), 1)
    return float(slope)
