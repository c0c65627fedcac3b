import numpy as np
import pytest

from src.errors import DimensionError, ValidationError
from src.linops import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_operator,
    complement_projector,
    embed,
    hs_inner,
    numerical_rank,
    pauli_basis,
    pauli_string,
    rank_audit,
    unvec,
    vec,
)


def test_vec_stacks_columns():
    m = np.array([[1, 2], [3, 4]])
    np.testing.assert_array_equal(vec(m), [1, 3, 2, 4])
    np.testing.assert_array_equal(unvec(vec(m)), m)


def test_vec_of_product(rng):
    a, b, c = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    np.testing.assert_allclose(vec(a @ b @ c), np.kron(c.T, a) @ vec(b), atol=1e-12)


def test_unvec_rejects_bad_length():
    with pytest.raises(DimensionError):
        unvec(np.zeros(5))
    with pytest.raises(DimensionError):
        unvec(np.zeros(4), d=3)


def test_hs_inner_is_trace_form(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert hs_inner(a, b) == pytest.approx(np.trace(a.conj().T @ b))


def test_as_operator_checks():
    with pytest.raises(DimensionError):
        as_operator(np.zeros((2, 3)))
    with pytest.raises(ValidationError, match="not Hermitian"):
        as_operator(np.array([[0, 1], [0, 0]]), hermitian=True, name="X")


def test_pauli_string_and_embed():
    np.testing.assert_array_equal(pauli_string("xz"), np.kron(SIGMA_X, SIGMA_Z))
    np.testing.assert_array_equal(embed(SIGMA_Y, 1, 3), pauli_string("IYI"))
    with pytest.raises(ValidationError):
        pauli_string("XQ")


def test_pauli_basis_normalizations():
    raw = pauli_basis(1, "raw")
    np.testing.assert_allclose(raw.gram(), np.diag([1, 2, 2, 2]), atol=1e-12)
    assert not raw.is_orthonormal()
    assert pauli_basis(2, "orthonormal").is_orthonormal()


def test_pauli_basis_ordering():
    basis = pauli_basis(2)
    assert len(basis) == 16
    assert basis.labels[5] == "XX"
    np.testing.assert_array_equal(basis.elements[5], np.kron(SIGMA_X, SIGMA_X))


def test_pauli_basis_coefficients():
    basis = pauli_basis(1, "orthonormal")
    c = basis.coefficients(SIGMA_Z)
    np.testing.assert_allclose(c, [0, 0, 0, np.sqrt(2)], atol=1e-12)


def test_rank_audit_reports_borderline_values():
    audit = rank_audit(np.diag([1.0, 1e-3, 1e-20]))
    assert audit.rank == 2
    assert audit.sv_kept == pytest.approx(1e-3)
    assert audit.sv_dropped == pytest.approx(1e-20)


def test_numerical_rank_with_override():
    assert numerical_rank(np.diag([1.0, 1e-3]), tol=1e-2) == 1


def test_complement_projector():
    v = np.array([1.0, 1.0, 0.0])
    p = complement_projector([v])
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    np.testing.assert_allclose(p @ v, 0, atol=1e-12)
    np.testing.assert_allclose(complement_projector([], dim=2), np.eye(2))
