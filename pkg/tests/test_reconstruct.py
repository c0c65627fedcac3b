import numpy as np
import pytest
import scipy.linalg as la

from src.dynamics import generator_matrix
from src.errors import DimensionError, InfeasibleError
from src.linops import SIGMA_X, SIGMA_Y, SIGMA_Z, vec
from src.observability import MeasurementSet, kalman_report
from src.reconstruct import (
    DesignMatrix,
    design_matrix,
    estimate_observable_part,
    estimate_state,
    evolved_candidates,
    mse_bound,
    project_to_density,
    scaling_slope,
    squared_error,
    target_coefficients,
    target_estimate,
    variance_bound,
)
from src.models import random_lindblad_system
from src.selection import greedy_plan

RHO = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])


def _rows(*operators):
    return DesignMatrix(
        rows=np.vstack([vec(x).conj() for x in operators]),
        labels=tuple(f"r{k}" for k in range(len(operators))),
        times=(0.0,) * len(operators),
    )


@pytest.fixture
def qubit_design(tilted_qubit):
    return design_matrix(greedy_plan(*tilted_qubit, n_grid=60))


def test_exact_data_recover_the_state(qubit_design):
    result = estimate_state(qubit_design, qubit_design.expectations(RHO))
    np.testing.assert_allclose(result.rho, RHO, atol=1e-9)
    assert result.residual < 1e-9
    assert result.rank == 4
    assert result.condition >= 1.0


def test_exact_data_round_trip_on_a_dynamic_plan(rng):
    gen, measurements = random_lindblad_system(3, 2, 1, seed=8)
    design = design_matrix(greedy_plan(generator_matrix(gen), measurements, n_grid=80))
    assert len(design) == 9
    assert max(design.times) > 0
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    result = estimate_state(design, design.expectations(rho))
    np.testing.assert_allclose(result.rho, rho, atol=1e-7)


def test_rank_deficient_design_is_infeasible():
    design = _rows(np.eye(2), SIGMA_Z)
    with pytest.raises(InfeasibleError) as info:
        estimate_state(design, design.expectations(RHO))
    assert info.value.reason == "rank_deficient"
    assert info.value.details == {"rank": 2, "d2": 4}
    assert info.value.to_dict()["reason"] == "rank_deficient"


def test_data_length_must_match(qubit_design):
    with pytest.raises(DimensionError):
        estimate_state(qubit_design, [1.0, 0.0])


def test_observable_part_is_a_projection():
    design = _rows(np.eye(2), SIGMA_X, SIGMA_Y)
    rho = np.eye(2) / 2 + 0.3 * SIGMA_Z / 2 + 0.2 * SIGMA_X / 2
    part = estimate_observable_part(design, design.expectations(rho))
    np.testing.assert_allclose(part, np.eye(2) / 2 + 0.2 * SIGMA_X / 2, atol=1e-12)


def test_psd_projection(qubit_design):
    noisy = qubit_design.expectations(np.diag([1.0, 0.0])) + np.array([0.0, 0.05, -0.2, 0.1])
    result = estimate_state(qubit_design, noisy, psd_project=True)
    assert result.psd_projected
    assert la.eigvalsh(result.rho).min() >= -1e-12
    assert np.trace(result.rho).real == pytest.approx(1.0)


def test_project_to_density_keeps_valid_states():
    np.testing.assert_allclose(project_to_density(RHO), RHO, atol=1e-12)


def test_mse_bound_paths_agree(qubit_design):
    svd = mse_bound(qubit_design, k=1.0, shots=1000, variances=[0.0, 1.0, 1.0, 1.0])
    explicit = mse_bound(qubit_design, k=1.0, shots=1000, variances=[0.0, 1.0, 1.0, 1.0], explicit_inverse=True)
    assert svd.k_bound == pytest.approx(explicit.k_bound, rel=1e-8)
    assert svd.exact == pytest.approx(explicit.exact, rel=1e-8)
    assert svd.exact <= svd.k_bound


def test_exact_mse_matches_monte_carlo(qubit_design, rng):
    variances = np.array([0.0, 0.5, 0.8, 1.0])
    shots = 50
    exact = qubit_design.expectations(RHO)
    errors = [
        squared_error(RHO, estimate_state(qubit_design, exact + rng.normal(size=4) * np.sqrt(variances / shots)).rho)
        for _ in range(4000)
    ]
    bound = mse_bound(qubit_design, k=1.0, shots=shots, variances=variances)
    assert np.mean(errors) == pytest.approx(bound.exact, rel=0.1)
    assert bound.exact <= bound.k_bound


def test_mse_bound_with_uniform_variance_equals_k_bound(qubit_design):
    bound = mse_bound(qubit_design, k=0.5, shots=10, variances=[0.5] * 4)
    assert bound.exact == pytest.approx(bound.k_bound, rel=1e-10)


def test_mse_bound_scales_inversely_with_shots(qubit_design):
    assert mse_bound(qubit_design, 1.0, 100).k_bound == pytest.approx(10 * mse_bound(qubit_design, 1.0, 1000).k_bound)


def test_variance_bound():
    assert variance_bound(MeasurementSet.with_identity([SIGMA_X, SIGMA_Z])) == pytest.approx(1.0)
    assert variance_bound(MeasurementSet.with_identity([np.diag([3.0, -1.0])])) == pytest.approx(4.0)


def test_target_expansion_over_evolved_observables(precessing_qubit):
    generator, measurements = precessing_qubit
    report = kalman_report(generator, measurements)
    # under H = Z, X(t) = cos(2t) X - sin(2t) Y
    candidates = evolved_candidates(generator, measurements, [0.0, np.pi / 4])
    solution = target_coefficients(SIGMA_Y, candidates, report=report)
    assert [label for _, label, _ in solution.entries] == ["X"]
    assert solution.entries[0][2] == pytest.approx(np.pi / 4)
    np.testing.assert_allclose(solution.coefficients, [-1.0], atol=1e-9)
    assert solution.residual < 1e-9


def test_identity_candidate_appears_once(precessing_qubit):
    candidates = evolved_candidates(*precessing_qubit, [1.0, 0.5, 2.0])
    identity = [c for c in candidates if c[1] == "I"]
    assert len(identity) == 1
    assert identity[0][2] == 0.5


def test_target_outside_observable_space(precessing_qubit):
    generator, measurements = precessing_qubit
    report = kalman_report(generator, measurements)
    candidates = evolved_candidates(generator, measurements, [0.0, 0.3])
    with pytest.raises(InfeasibleError) as info:
        target_coefficients(SIGMA_Z, candidates, report=report)
    assert info.value.reason == "target_not_observable"


def test_target_expansion_without_sparsity(precessing_qubit):
    generator, measurements = precessing_qubit
    candidates = evolved_candidates(generator, measurements, [0.0, 0.3])
    target = np.eye(2) + 2 * SIGMA_X
    solution = target_coefficients(target, candidates, minimal_support=False)
    assert solution.residual < 1e-9
    assert len(solution.coefficients) == len(candidates) == 3

    rho = np.eye(2) / 2 + 0.25 * SIGMA_X + 0.1 * SIGMA_Z
    vectors = {(c[0], c[2]): c[3] for c in candidates}
    y = [np.vdot(vectors[(i, t)], vec(rho)).real for i, _, t in solution.entries]
    assert target_estimate(solution.coefficients, y) == pytest.approx(np.trace(target @ rho).real)


def test_target_estimate():
    assert target_estimate([2.0, -1.0], [0.5, 0.25]) == pytest.approx(0.75)
    with pytest.raises(DimensionError):
        target_estimate([1.0], [1.0, 2.0])


def test_squared_error_and_slope():
    assert squared_error(RHO, RHO) == 0.0
    assert squared_error(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(2.0)
    shots = [100, 1000, 10000]
    assert scaling_slope(shots, [0.3 / n for n in shots]) == pytest.approx(-1.0)
