import numpy as np
import pytest
import scipy.linalg as la

from src.dynamics import (
    PROPAGATOR,
    Evolution,
    GKSSpec,
    KrausMap,
    LindbladGenerator,
    aliasing_ok,
    discretize,
    generator_matrix,
    gks_action,
    gks_to_lindblad,
    kraus_superoperator,
    lindblad_action,
    propagate,
    spectral_gap,
)
from src.errors import DimensionError, ValidationError
from src.linops import SIGMA_X, SIGMA_Y, SIGMA_Z, pauli_basis, unvec, vec
from src.models import random_lindblad_system


def test_generator_matrix_matches_direct_action(rng):
    gen, _ = random_lindblad_system(3, 2, 2, seed=11)
    matrix = generator_matrix(gen)
    x = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.testing.assert_allclose(unvec(matrix.matrix @ vec(x)), lindblad_action(gen, x), atol=1e-12)


def test_generator_annihilates_identity():
    gen, _ = random_lindblad_system(3, 2, 2, seed=5)
    assert generator_matrix(gen).unitality_defect() < 1e-12


def test_noise_operator_shape_mismatch():
    with pytest.raises(DimensionError):
        LindbladGenerator(H=SIGMA_Z, noise_ops=(np.eye(3),))


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(ValidationError):
        LindbladGenerator(H=np.array([[0, 1], [0, 0]]))


def test_kraus_superoperator_action(rng):
    p = 0.3
    kraus = KrausMap((np.sqrt(p) * np.eye(2), np.sqrt(1 - p) * SIGMA_Z))
    superop = kraus_superoperator(kraus)
    x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    expected = sum(m @ x @ m.conj().T for m in kraus.kraus_ops)
    np.testing.assert_allclose(superop.apply(x), expected, atol=1e-12)
    assert superop.kind == PROPAGATOR
    assert superop.unitality_defect() < 1e-12


def test_non_unital_kraus_map_rejected():
    g = 0.2
    m0 = np.diag([1.0, np.sqrt(1 - g)])
    m1 = np.sqrt(g) * np.array([[0, 1], [0, 0]])
    with pytest.raises(ValidationError, match="unital"):
        KrausMap((m0, m1))


def test_heisenberg_precession():
    generator = generator_matrix(LindbladGenerator(H=SIGMA_Z / 2))
    t = 0.7
    evolved = propagate(generator, t).apply(SIGMA_X)
    np.testing.assert_allclose(evolved, np.cos(t) * SIGMA_X - np.sin(t) * SIGMA_Y, atol=1e-12)


def test_propagators_compose():
    gen, _ = random_lindblad_system(3, 2, 2, seed=9)
    generator = generator_matrix(gen)
    s, t = 0.3, 1.1
    composed = propagate(generator, s).matrix @ propagate(generator, t).matrix
    np.testing.assert_allclose(composed, propagate(generator, s + t).matrix, atol=1e-10)
    np.testing.assert_allclose(propagate(generator, 0.0).matrix, np.eye(9), atol=1e-15)


def test_propagate_rejects_negative_time():
    generator = generator_matrix(LindbladGenerator(H=SIGMA_Z))
    with pytest.raises(ValidationError):
        propagate(generator, -1.0)
    with pytest.raises(ValidationError):
        discretize(generator, 0.0)


def test_gks_form_matches_canonical_lindblad(rng):
    basis = pauli_basis(1, "raw")
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    spec = GKSSpec(basis=basis, A=g @ g.conj().T)
    gen = gks_to_lindblad(spec)
    x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    np.testing.assert_allclose(gks_action(spec, x), lindblad_action(gen, x), atol=1e-10)


def test_gks_matrix_must_be_psd():
    spec = GKSSpec(basis=pauli_basis(1, "raw"), A=np.diag([1.0, -0.5, 0.2]))
    with pytest.raises(ValidationError, match="positive semidefinite"):
        gks_to_lindblad(spec)


def test_aliasing_detection():
    generator = generator_matrix(LindbladGenerator(H=SIGMA_Z / 2))
    assert aliasing_ok(generator, 1.0).ok
    verdict = aliasing_ok(generator, 2 * np.pi)
    assert not verdict.ok
    assert verdict.offending


def test_spectral_gap_of_dephasing():
    gamma = 0.25
    generator = generator_matrix(LindbladGenerator(H=np.zeros((2, 2)), noise_ops=(np.sqrt(gamma) * SIGMA_Z,)))
    assert spectral_gap(generator) == pytest.approx(-2 * gamma, abs=1e-10)


def test_spectral_gap_absent_for_zero_generator():
    generator = generator_matrix(LindbladGenerator(H=np.zeros((2, 2))))
    assert spectral_gap(generator) is None


def test_evolution_agrees_with_expm(rng):
    gen, _ = random_lindblad_system(2, 2, 1, seed=3)
    generator = generator_matrix(gen)
    evolution = Evolution(generator)
    x = vec(rng.normal(size=(2, 2)))
    times = np.linspace(0, 2, 5)
    many = evolution.apply_many(x, times)
    for k, t in enumerate(times):
        expected = la.expm(generator.matrix * t) @ x
        np.testing.assert_allclose(evolution.apply(x, t), expected, atol=1e-9)
        np.testing.assert_allclose(many[:, k], expected, atol=1e-9)


def test_evolution_falls_back_without_eigenbasis():
    generator = generator_matrix(LindbladGenerator(H=np.zeros((2, 2)), noise_ops=(np.array([[0, 1], [0, 0]]),)))
    evolution = Evolution(generator, max_cond=0.5)
    assert not evolution.spectral
    x = vec(SIGMA_X)
    np.testing.assert_allclose(evolution.apply(x, 0.5), la.expm(generator.matrix * 0.5) @ x, atol=1e-12)
