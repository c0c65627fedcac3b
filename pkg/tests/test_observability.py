import numpy as np
import pytest
import scipy.linalg as la

from src.dynamics import (
    KrausMap,
    LindbladGenerator,
    Superoperator,
    aliasing_ok,
    discretize,
    generator_matrix,
    kraus_superoperator,
)
from src.errors import DimensionError, NumericalError, ValidationError
from src.linops import SIGMA_X, SIGMA_Y, SIGMA_Z, pauli_basis, unvec, vec
from src.models import (
    DissipativeQubitSpec,
    dissipative_nqubit,
    probe_observable,
    random_lindblad_system,
    random_unitary_system,
    seed_sampler,
    seeded_family,
)
from src.observability import (
    MeasurementSet,
    counting_bounds,
    eigenspace_rank,
    genericity_trials,
    hermitian_complement,
    indistinguishable,
    indistinguishable_partner,
    kalman_report,
    krylov_basis,
    pbh_test,
    report_to_dict,
    target_reconstructable,
)


def test_measurement_set_needs_identity():
    with pytest.raises(ValidationError, match="identity"):
        MeasurementSet((SIGMA_X, SIGMA_Z))


def test_measurement_set_rejects_dependent_observables():
    with pytest.raises(ValidationError, match="linearly dependent"):
        MeasurementSet.with_identity([SIGMA_X, 2 * SIGMA_X])


def test_measurement_set_rejects_non_hermitian():
    with pytest.raises(ValidationError, match="observable 1"):
        MeasurementSet((np.eye(2), np.array([[0, 1], [0, 0]])))


def test_measurement_set_labels():
    measurements = MeasurementSet.with_identity([SIGMA_X, SIGMA_Z], ["X", "Z"])
    assert measurements.labels == ("I", "X", "Z")
    assert measurements.identity_index() == 0
    assert measurements.vectors().shape == (4, 3)


def test_tilted_qubit_is_observable(tilted_qubit):
    generator, measurements = tilted_qubit
    report = kalman_report(generator, measurements)
    assert report.observable
    assert report.rank == 4
    assert report.n_nonobs == 0
    assert pbh_test(generator, measurements).observable


def test_precessing_qubit_misses_z(precessing_qubit):
    generator, measurements = precessing_qubit
    report = kalman_report(generator, measurements)
    assert not report.observable
    assert report.rank == 3
    assert report.k_stop == 1
    assert report.n_nonobs == 1
    direction = unvec(report.non_obs_basis[:, 0])
    np.testing.assert_allclose(direction, direction.conj().T, atol=1e-12)
    overlap = abs(np.vdot(vec(SIGMA_Z) / np.sqrt(2), report.non_obs_basis[:, 0]))
    assert overlap == pytest.approx(1.0, abs=1e-10)

    verdict = pbh_test(generator, measurements)
    assert not verdict.observable
    assert verdict.witness is not None


def test_force_depth_gives_same_rank(precessing_qubit):
    generator, measurements = precessing_qubit
    early = krylov_basis(generator, measurements)
    full = krylov_basis(generator, measurements, force_depth=True)
    assert early.basis.shape[1] == full.basis.shape[1] == 3


def test_dimension_mismatch(precessing_qubit):
    generator, _ = precessing_qubit
    with pytest.raises(DimensionError):
        kalman_report(generator, MeasurementSet.with_identity([np.diag([1.0, 0.0, -1.0])]))


def test_discrete_time_kraus_system():
    u = la.expm(-1j * 0.4 * (SIGMA_X + SIGMA_Z))
    propagator = kraus_superoperator(KrausMap((u,)))
    measurements = MeasurementSet.with_identity([SIGMA_Z])
    report = kalman_report(propagator, measurements)
    assert report.observable
    assert report.kind == "propagator"
    assert pbh_test(propagator, measurements).observable


@pytest.mark.parametrize("seed", range(50))
def test_kalman_and_pbh_agree_on_random_systems(seed):
    d = 2 + seed % 3
    if seed % 2:
        gen, measurements = random_unitary_system(d, 2, seed=seed)
    else:
        gen, measurements = random_lindblad_system(d, 2, 1, seed=seed)
    generator = generator_matrix(gen)
    assert kalman_report(generator, measurements).observable == pbh_test(generator, measurements).observable


def test_report_to_dict(precessing_qubit):
    report = kalman_report(*precessing_qubit)
    data = report_to_dict(report)
    assert data["schema"] == 1
    assert data["rank"] == 3
    assert data["n_nonobs"] == 1
    assert data["observable"] is False


def test_target_reconstructability(precessing_qubit):
    report = kalman_report(*precessing_qubit)
    assert target_reconstructable(report, SIGMA_Y)
    assert not target_reconstructable(report, SIGMA_Z)


def test_indistinguishable_partner(precessing_qubit):
    report = kalman_report(*precessing_qubit)
    rho = np.eye(2) / 2 + 0.1 * SIGMA_X
    sigma = indistinguishable_partner(rho, report)
    assert sigma is not None
    assert not np.allclose(sigma, rho)
    assert np.trace(sigma).real == pytest.approx(1.0)
    assert la.eigvalsh(sigma).min() >= -1e-12
    assert indistinguishable(rho, sigma, report)
    assert not indistinguishable(rho, np.eye(2) / 2 + 0.1 * SIGMA_Y, report)


def test_partner_needs_full_rank_state(precessing_qubit):
    report = kalman_report(*precessing_qubit)
    with pytest.raises(ValidationError):
        indistinguishable_partner(np.diag([1.0, 0.0]), report)


def test_no_partner_for_observable_system(tilted_qubit):
    report = kalman_report(*tilted_qubit)
    assert indistinguishable_partner(np.eye(2) / 2, report) is None


def test_genericity_trials_are_reproducible():
    family = seeded_family(lambda s: random_lindblad_system(2, 2, 1, s))
    first = genericity_trials(family, seed_sampler, 6, seed=42, workers=1)
    second = genericity_trials(family, seed_sampler, 6, seed=42, workers=3)
    assert first == second
    assert first.n_trials == 6
    assert sum(first.rank_histogram.values()) + len(first.failures) == 6


@pytest.mark.parametrize("d", [3, 4, 8])
def test_unitary_dynamics_with_few_observables_never_observable(d):
    family = seeded_family(lambda s: random_unitary_system(d, d - 1, s))
    summary = genericity_trials(family, seed_sampler, 100, seed=d, workers=1)
    assert summary.failures == []
    assert summary.n_observable == 0


def test_generic_qubit_hamiltonian_with_one_observable_is_observable():
    family = seeded_family(lambda s: random_unitary_system(2, 2, s))
    summary = genericity_trials(family, seed_sampler, 100, seed=7, workers=1)
    assert summary.n_observable >= 99


def test_genericity_needs_trials():
    with pytest.raises(ValidationError):
        genericity_trials(lambda v: None, seed_sampler, 0, seed=0)


def test_counting_bounds():
    assert not counting_bounds(4, 2).unitary_possible
    assert counting_bounds(4, 4).unitary_possible
    chain = counting_bounds(16, 16, multipartite=(4, 2))
    assert chain.multipartite_lhs == 16
    assert chain.multipartite_rhs == 11
    assert chain.multipartite_possible is False
    assert counting_bounds(4, 4, multipartite=(2, 2)).multipartite_possible


def _two_qubit_dissipator(seed, zeroed=None):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 1.0, size=15)
    c = rng.standard_normal(15)
    if zeroed is not None:
        c[zeroed] = 0.0
    gen, measurements = dissipative_nqubit(DissipativeQubitSpec(n_qubits=2, a=tuple(a), probe=probe_observable(2, c)))
    return generator_matrix(gen), measurements


@pytest.mark.parametrize("seed", range(20))
def test_two_qubit_dissipator_with_generic_readout_is_observable(seed):
    generator, measurements = _two_qubit_dissipator(seed)
    report = kalman_report(generator, measurements)
    assert report.observable
    assert report.method == "eigenspace"
    assert pbh_test(generator, measurements).observable


@pytest.mark.parametrize("seed", range(20))
def test_zeroed_pauli_coefficient_hides_its_pauli(seed):
    hidden = seed % 15
    generator, measurements = _two_qubit_dissipator(seed, zeroed=hidden)
    report = kalman_report(generator, measurements)
    assert report.rank == 15
    assert not pbh_test(generator, measurements).observable
    pauli = pauli_basis(2, "orthonormal").elements[1 + hidden]
    assert abs(np.vdot(vec(pauli), report.non_obs_basis[:, 0])) == pytest.approx(1.0, abs=1e-8)


def test_eigenspace_count_matches_krylov_on_clean_spectrum(precessing_qubit):
    count = eigenspace_rank(*precessing_qubit)
    assert count is not None
    assert count.rank == krylov_basis(*precessing_qubit).basis.shape[1] == 3
    assert count.clusters == 3


def test_eigenspace_count_skips_defective_generators():
    jordan = Superoperator(2, np.array([[0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=complex))
    assert eigenspace_rank(jordan, MeasurementSet.with_identity([SIGMA_Z])) is None


def test_sampling_at_the_aliasing_interval_loses_a_direction():
    generator = generator_matrix(LindbladGenerator(H=SIGMA_Z, noise_ops=(np.sqrt(0.1) * SIGMA_Z,)))
    measurements = MeasurementSet.with_identity([SIGMA_X + SIGMA_Z])
    assert kalman_report(generator, measurements).observable

    assert not aliasing_ok(generator, np.pi / 2).ok
    aliased = discretize(generator, np.pi / 2)
    assert kalman_report(aliased, measurements).rank == 3
    assert not pbh_test(aliased, measurements).observable

    assert aliasing_ok(generator, 1.0).ok
    assert kalman_report(discretize(generator, 1.0), measurements).observable


def test_rank_grows_with_the_measurement_set():
    gen, measurements = random_unitary_system(3, 4, seed=21)
    generator = generator_matrix(gen)
    ranks = [
        kalman_report(generator, MeasurementSet(measurements.observables[:k])).rank
        for k in range(1, len(measurements) + 1)
    ]
    assert ranks == sorted(ranks)
    assert ranks[0] < ranks[-1]


def test_non_observable_directions_are_hermitian_and_traceless():
    gen, measurements = random_unitary_system(3, 2, seed=5)
    report = kalman_report(generator_matrix(gen), measurements)
    assert report.rank + report.n_nonobs == report.d2
    for column in report.non_obs_basis.T:
        m = unvec(column)
        np.testing.assert_allclose(m, m.conj().T, atol=1e-10)
        assert abs(np.trace(m)) < 1e-10


def test_hermitian_split_that_loses_directions_raises():
    basis = (vec(np.eye(2)) / np.sqrt(2))[:, None]
    assert hermitian_complement(basis).shape == (4, 3)
    with pytest.raises(NumericalError, match="non-observable directions"):
        hermitian_complement(basis, tol=10.0)
