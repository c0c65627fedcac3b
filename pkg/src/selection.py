"""
Greedy choice of which observable to measure next and when
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from config import (
    GOLDEN_TOL_FRACTION,
    HORIZON_DECAY_MULTIPLE,
    OBJECTIVE_TIE_TOL,
    TIME_GRID_POINTS,
)
from src.dynamics import GENERATOR, Evolution, Superoperator, spectral_gap
from src.errors import DimensionError, ValidationError
from src.linops import rank_threshold
from src.observability import MeasurementSet, ObservabilityReport, kalman_report

logger = logging.getLogger(__name__)

FIRST_PICK_MODES = ("deterministic", "seeded")


@dataclass(frozen=True)
class PlanEntry:
    obs_index: int
    label: str
    time: float
    vector: np.ndarray  # e^{Lt} x_i
    objective: float  # ||Pi_perp e^{Lt} x_i||^2 against the entries before it
    rank: int  # accumulated span rank including this entry


@dataclass(frozen=True)
class MeasurementPlan:
    """Ordered (observable, time) pairs chosen by the greedy heuristic"""

    entries: Tuple[PlanEntry, ...]
    horizon: float
    final_rank: int
    target_rank: int
    dim: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def partial(self) -> bool:
        """True when the plan cannot cover the whole operator space"""
        return self.final_rank < self.dim ** 2

    @property
    def max_time(self) -> float:
        return max((e.time for e in self.entries), default=0.0)

    def rows(self, measurements: MeasurementSet) -> List[Tuple[str, np.ndarray, float]]:
        """(label, observable, time) triples for the measurement simulator"""
        return [(e.label, measurements.observables[e.obs_index], e.time) for e in self.entries]

    def table(self) -> List[dict]:
        return [
            {
                "index": e.obs_index,
                "label": e.label,
                "time": e.time,
                "objective": e.objective,
                "cumulative_rank": e.rank,
            }
            for e in self.entries
        ]


def default_horizon(generator: Superoperator, multiple: float = HORIZON_DECAY_MULTIPLE) -> float:
    """T = multiple / |Re lambda_2| for a generator with a spectral gap"""
    gap = spectral_gap(generator)
    if gap is None or gap.real > -1e-12:
        raise ValidationError("the generator has no spectral gap; supply the horizon T explicitly")
    return multiple / abs(gap.real)


def _first_best(values: np.ndarray, tie_tol: float = OBJECTIVE_TIE_TOL) -> int:
    return int(np.flatnonzero(values >= values.max() - tie_tol)[0])


def _refine(f: Callable[[float], float], grid: np.ndarray, values: np.ndarray, tol: float) -> Tuple[float, float]:
    """Bounded golden-section/parabolic search around the best grid point"""
    k = _first_best(values)
    best_t, best_f = float(grid[k]), float(values[k])
    if grid.size < 2:
        return best_t, best_f
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    result = minimize_scalar(lambda t: -f(t), bounds=(lo, hi), method="bounded", options={"xatol": tol})
    if result.success and -result.fun > best_f + OBJECTIVE_TIE_TOL:
        return float(result.x), float(-result.fun)
    return best_t, best_f


def _evolution(generator: Union[Superoperator, Evolution]) -> Evolution:
    if isinstance(generator, Evolution):
        return generator
    if generator.kind != GENERATOR:
        raise ValidationError("time optimization needs a continuous-time generator")
    return Evolution(generator)


def optimize_time(
    x: np.ndarray,
    projector: np.ndarray,
    generator: Union[Superoperator, Evolution],
    horizon: float,
    n_grid: int = TIME_GRID_POINTS,
) -> Tuple[float, float]:
    """
    Maximize f(t) = ||Pi_perp e^{Lt} x||^2 over [0, T]

    Evaluates f on a uniform grid of n_grid points starting at t = 0, then
    refines around the best grid point to a time tolerance of 1e-6 T. The
    earliest grid point wins ties.

    Args:
        x: Vectorized observable
        projector: Orthogonal projector Pi_perp
        generator: Generator superoperator or a prepared Evolution
        horizon: T > 0
        n_grid: Number of grid points

    Returns:
        (t*, f(t*))
    """
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    evolution = _evolution(generator)
    x = np.asarray(x, dtype=complex)
    if projector.shape != (x.shape[0], x.shape[0]):
        raise DimensionError(f"projector {projector.shape} does not match vector length {x.shape[0]}")
    grid = np.linspace(0.0, horizon, n_grid)
    values = np.sum(np.abs(projector @ evolution.apply_many(x, grid)) ** 2, axis=0)
    coefficients = evolution.coefficients(x)

    def f(t: float) -> float:
        return float(np.sum(np.abs(projector @ evolution.apply(x, t, coefficients)) ** 2))

    return _refine(f, grid, values, GOLDEN_TOL_FRACTION * horizon)


def _residual_norm2(v: np.ndarray, basis: np.ndarray) -> float:
    r = v - basis @ (basis.conj().T @ v)
    return float(np.vdot(r, r).real)


def _new_direction(v: np.ndarray, basis: np.ndarray) -> np.ndarray:
    r = v - basis @ (basis.conj().T @ v)
    r -= basis @ (basis.conj().T @ r)
    return r / np.linalg.norm(r)


def greedy_plan(
    generator: Superoperator,
    measurements: MeasurementSet,
    horizon: Optional[float] = None,
    first_pick: str = "deterministic",
    seed: Optional[int] = None,
    n_grid: int = TIME_GRID_POINTS,
    rank_tol: Optional[float] = None,
    report: Optional[ObservabilityReport] = None,
) -> MeasurementPlan:
    """
    Greedy measurement plan

    The identity goes first at t = 0. The next entry is the lowest-index
    non-identity observable at t = 0 (or a seeded uniform choice). Every
    further step optimizes the measurement time of each observable against
    the complement of the span accumulated so far and keeps the best pair.
    Selection stops once the span reaches dim O or the norm of the best
    residual falls below rank_tol times the largest observable norm.

    Args:
        generator: Continuous-time generator
        measurements: Measurement set
        horizon: Largest admissible time T (default 4 / |Re lambda_2|)
        first_pick: "deterministic" or "seeded"
        seed: Seed for the seeded first pick
        n_grid: Time grid density
        rank_tol: Relative residual-norm threshold for a new direction
            (default d^2 * eps * safety factor)
        report: Precomputed observability report

    Returns:
        MeasurementPlan (partial when the system is not observable)
    """
    if first_pick not in FIRST_PICK_MODES:
        raise ValidationError(f"first_pick must be one of {FIRST_PICK_MODES}, got {first_pick!r}")
    if first_pick == "seeded" and seed is None:
        raise ValidationError("a seed is required for the seeded first pick")
    if generator.dim != measurements.dim:
        raise DimensionError(f"dynamics act on d={generator.dim}, observables on d={measurements.dim}")
    report = report or kalman_report(generator, measurements)
    horizon = default_horizon(generator) if horizon is None else float(horizon)
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")

    n = generator.dim ** 2
    evolution = Evolution(generator)
    xs = measurements.vectors()
    scale = float(np.max(np.linalg.norm(xs, axis=0)))
    cutoff = (rank_threshold((n, n), 1.0) if rank_tol is None else rank_tol) * scale
    identity = measurements.identity_index()
    grid = np.linspace(0.0, horizon, n_grid)
    tol_t = GOLDEN_TOL_FRACTION * horizon

    basis = np.zeros((n, 0), dtype=complex)
    entries: List[PlanEntry] = []

    def accept(index: int, t: float, vector: np.ndarray):
        nonlocal basis
        objective = _residual_norm2(vector, basis)
        basis = np.hstack([basis, _new_direction(vector, basis)[:, None]])
        entries.append(
            PlanEntry(
                obs_index=index,
                label=measurements.labels[index],
                time=float(t),
                vector=vector,
                objective=objective,
                rank=basis.shape[1],
            )
        )

    accept(identity, 0.0, xs[:, identity])
    others = [i for i in range(len(measurements)) if i != identity]
    if others and basis.shape[1] < report.rank:
        if first_pick == "seeded":
            first = others[int(np.random.default_rng(seed).integers(len(others)))]
        else:
            first = others[0]
        accept(first, 0.0, xs[:, first])

    if basis.shape[1] < report.rank:
        coefficients = [evolution.coefficients(xs[:, i]) for i in range(len(measurements))]
        trajectories = [evolution.apply_many(xs[:, i], grid) for i in range(len(measurements))]
        residuals = [traj - basis @ (basis.conj().T @ traj) for traj in trajectories]

    while basis.shape[1] < report.rank:
        candidates = []
        for i in range(len(measurements)):
            values = np.sum(np.abs(residuals[i]) ** 2, axis=0)

            def f(t: float, i=i) -> float:
                return _residual_norm2(evolution.apply(xs[:, i], t, coefficients[i]), basis)

            candidates.append(_refine(f, grid, values, tol_t))
        objectives = np.array([c[1] for c in candidates])
        best = _first_best(objectives)
        if np.sqrt(max(objectives[best], 0.0)) <= cutoff:
            logger.warning(
                "greedy selection stalled at rank %d of %d (objective %.3e)",
                basis.shape[1], report.rank, objectives[best],
            )
            break
        t_best = candidates[best][0]
        accept(best, t_best, evolution.apply(xs[:, best], t_best, coefficients[best]))
        q = basis[:, -1:]
        residuals = [r - q @ (q.conj().T @ r) for r in residuals]
        logger.debug("greedy step %d: %s at t=%.6g", len(entries), measurements.labels[best], t_best)

    plan = MeasurementPlan(
        entries=tuple(entries),
        horizon=horizon,
        final_rank=basis.shape[1],
        target_rank=report.rank,
        dim=generator.dim,
    )
    logger.info(
        "measurement plan: %d entries, rank %d / %d, t_max %.4g",
        len(plan), plan.final_rank, n, plan.max_time,
    )
    return plan
