"""
Built-in physical systems and states: the qubit spin chain, the NV
electron-nuclear model, reference states, random systems and the purely
dissipative N-qubit construction with its Psi and R matrices
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from scipy.stats import unitary_group

from config import GIBBS_BETA
from src.dynamics import GKSSpec, LindbladGenerator, generator_matrix, gks_to_lindblad
from src.errors import DimensionError, ValidationError
from src.linops import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    OperatorBasis,
    embed,
    hermitize,
    kron_all,
    pauli_basis,
    pauli_string,
)
from src.observability import MeasurementSet

logger = logging.getLogger(__name__)

SystemFactory = Callable[[np.ndarray], Tuple[LindbladGenerator, MeasurementSet]]


@dataclass(frozen=True)
class SpinChainParams:
    """Coefficients of a nearest-neighbour qubit chain with local amplitude noise"""

    n_sites: int = 4
    alpha: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)  # sigma_x fields
    beta: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)  # sigma_y fields
    gamma: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)  # sigma_z fields
    delta: Tuple[float, ...] = (1.0, 1.0, 1.0)  # xx couplings
    epsilon: Tuple[float, ...] = (1.0, 1.0, 1.0)  # zz couplings
    eta: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)  # noise amplitudes, 0 disables

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValidationError(f"a chain needs at least 2 sites, got {self.n_sites}")
        for name in ("alpha", "beta", "gamma", "eta"):
            if len(getattr(self, name)) != self.n_sites:
                raise DimensionError(f"{name} needs {self.n_sites} entries, got {len(getattr(self, name))}")
        for name in ("delta", "epsilon"):
            if len(getattr(self, name)) != self.n_sites - 1:
                raise DimensionError(f"{name} needs {self.n_sites - 1} entries, got {len(getattr(self, name))}")
        if any(e < 0 for e in self.eta):
            raise ValidationError("noise amplitudes eta must be non-negative")

    @classmethod
    def uniform(cls, value: float = 1.0, eta: float = 0.0, n_sites: int = 4) -> "SpinChainParams":
        bonds = (value,) * (n_sites - 1)
        sites = (value,) * n_sites
        return cls(n_sites, sites, sites, sites, bonds, bonds, (eta,) * n_sites)

    @classmethod
    def from_vector(cls, values: Sequence[float], n_sites: int = 4, eta: float = 0.0) -> "SpinChainParams":
        """Unpack alpha, beta, gamma, delta, epsilon from one flat vector"""
        values = [float(v) for v in values]
        expected = 5 * n_sites - 2
        if len(values) != expected:
            raise DimensionError(f"expected {expected} Hamiltonian coefficients, got {len(values)}")
        n = n_sites
        return cls(
            n_sites=n,
            alpha=tuple(values[0:n]),
            beta=tuple(values[n:2 * n]),
            gamma=tuple(values[2 * n:3 * n]),
            delta=tuple(values[3 * n:4 * n - 1]),
            epsilon=tuple(values[4 * n - 1:]),
            eta=(eta,) * n,
        )


def spin_chain_observables(n_sites: int = 4, sites: Tuple[int, int] = (1, 2)) -> MeasurementSet:
    """All 16 Pauli products on two neighbouring sites (0-based), identity first"""
    observables = []
    labels = []
    for u in "IXYZ":
        for q in "IXYZ":
            label = ["I"] * n_sites
            label[sites[0]] = u
            label[sites[1]] = q
            label = "".join(label)
            labels.append(label)
            observables.append(pauli_string(label))
    return MeasurementSet(observables=tuple(observables), labels=tuple(labels))


def spin_chain(params: SpinChainParams = SpinChainParams()) -> Tuple[LindbladGenerator, MeasurementSet]:
    """
    Qubit chain with local fields, xx and zz couplings and local amplitude noise

    H = sum_i (alpha_i X_i + beta_i Y_i + gamma_i Z_i) + sum_i (delta_i X_i X_{i+1} + epsilon_i Z_i Z_{i+1})
    with noise operators eta_i sigma^+_i and eta_i sigma^-_i. The measurement
    set holds the Pauli products on the two middle sites.

    Args:
        params: Chain coefficients

    Returns:
        (generator, measurement set)
    """
    n = params.n_sites
    d = 2 ** n
    h = np.zeros((d, d), dtype=complex)
    for i in range(n):
        h += params.alpha[i] * embed(SIGMA_X, i, n)
        h += params.beta[i] * embed(SIGMA_Y, i, n)
        h += params.gamma[i] * embed(SIGMA_Z, i, n)
    for i in range(n - 1):
        h += params.delta[i] * embed(SIGMA_X, i, n) @ embed(SIGMA_X, i + 1, n)
        h += params.epsilon[i] * embed(SIGMA_Z, i, n) @ embed(SIGMA_Z, i + 1, n)

    raising = [params.eta[i] * embed(SIGMA_PLUS, i, n) for i in range(n) if params.eta[i] > 0]
    lowering = [params.eta[i] * embed(SIGMA_MINUS, i, n) for i in range(n) if params.eta[i] > 0]
    middle = (n // 2 - 1, n // 2)
    return LindbladGenerator(H=h, noise_ops=tuple(raising + lowering)), spin_chain_observables(n, middle)


def spin_chain_family(n_sites: int = 4, eta: float = 0.0) -> SystemFactory:
    """Parameter vector -> spin chain, for genericity trials"""

    def build(values: np.ndarray):
        return spin_chain(SpinChainParams.from_vector(values, n_sites=n_sites, eta=eta))

    return build


@dataclass(frozen=True)
class NVParams:
    """
    Reduced NV-centre parameters

    Energies and rates in MHz, field in Gauss; times are then read in the
    inverse unit (microseconds, no 2 pi factor).
    """

    D_e: float = 1420.0
    D_g: float = 2870.0
    Q: float = 4.945
    A_e: float = 40.0
    A_g: float = 2.2
    g_el: float = 2.8
    g_n: float = 3.08e-4
    B: float = 0.0
    gamma_d: float = 77.0
    gamma_p: float = 70.0

    def __post_init__(self):
        if self.gamma_d < 0 or self.gamma_p < 0:
            raise ValidationError("NV decay and pumping rates must be non-negative")


NV_SZ = np.diag([0.0, 1.0]).astype(complex)  # (1 - sigma_z) / 2
_I2 = np.eye(2, dtype=complex)
_GROUND = np.diag([1.0, 0.0]).astype(complex)
_EXCITED = np.diag([0.0, 1.0]).astype(complex)


def _nv_block(params: NVParams, D: float, A: float) -> np.ndarray:
    """Spin Hamiltonian of one energy level on (s_el, s_N)"""
    sz2 = NV_SZ @ NV_SZ
    return (
        D * np.kron(sz2, _I2)
        + params.Q * np.kron(_I2, sz2)
        + params.B * (params.g_el * np.kron(NV_SZ, _I2) + params.g_n * np.kron(_I2, NV_SZ))
        + A / 2 * (np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y) + 2 * np.kron(NV_SZ, NV_SZ))
    )


def _nv_jump(rate: float, transition: np.ndarray, spin: int) -> np.ndarray:
    """sqrt(rate) |E', s><E, s| tensored with the nuclear identity"""
    ket = np.zeros((2, 1), dtype=complex)
    ket[spin] = 1
    spin_proj = ket @ ket.T
    return np.sqrt(rate) * kron_all(transition, spin_proj, _I2)


def nv_center(params: NVParams = NVParams()) -> Tuple[LindbladGenerator, MeasurementSet, np.ndarray]:
    """
    Electron-nuclear NV model on (E_el, s_el, s_N)

    The ground and excited spin Hamiltonians act on their own energy block.
    Decay |e,s> -> |g,s> and pumping |g,s> -> |e,s> preserve the electron spin
    and act trivially on the nucleus. Only the electron spin z is measured;
    the target is the nuclear spin z.

    Returns:
        (generator, measurement set, target Z)
    """
    h = np.kron(_GROUND, _nv_block(params, params.D_g, params.A_g)) + np.kron(
        _EXCITED, _nv_block(params, params.D_e, params.A_e)
    )
    g_from_e = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
    e_from_g = g_from_e.T.copy()  # |e><g|
    noise = []
    if params.gamma_d > 0:
        noise += [_nv_jump(params.gamma_d, g_from_e, s) for s in (0, 1)]
    if params.gamma_p > 0:
        noise += [_nv_jump(params.gamma_p, e_from_g, s) for s in (0, 1)]
    measurements = MeasurementSet(
        observables=(np.eye(8, dtype=complex), kron_all(_I2, SIGMA_Z, _I2)),
        labels=("I", "Z_el"),
    )
    target = kron_all(_I2, _I2, SIGMA_Z)
    return LindbladGenerator(H=h, noise_ops=tuple(noise)), measurements, target


def _basis_ket(bits: str) -> np.ndarray:
    try:
        index = int(bits, 2)
    except ValueError as e:
        raise ValidationError(f"invalid bit string {bits!r}") from e
    ket = np.zeros(2 ** len(bits), dtype=complex)
    ket[index] = 1
    return ket


def ket_projector(bits: str) -> np.ndarray:
    """|b><b| for a computational basis string such as "0101" """
    ket = _basis_ket(bits)
    return np.outer(ket, ket.conj())


def pauli_operator(label: str) -> np.ndarray:
    return pauli_string(label)


def separable_state(n_qubits: int) -> np.ndarray:
    return ket_projector("0" * n_qubits)


def nv_separable_state() -> np.ndarray:
    """(I + I x I x sigma_z) / 8"""
    return (np.eye(8, dtype=complex) + kron_all(_I2, _I2, SIGMA_Z)) / 8


def ghz_state(n_qubits: int) -> np.ndarray:
    psi = (_basis_ket("0" * n_qubits) + _basis_ket("1" * n_qubits)) / np.sqrt(2)
    return np.outer(psi, psi.conj())


def gibbs_state(H: np.ndarray, beta: float = GIBBS_BETA) -> np.ndarray:
    """
    Thermal state e^{-beta H} / tr(e^{-beta H})

    Computed from the spectrum of H shifted by its ground energy, so large
    energies do not overflow.
    """
    if np.iscomplexobj(beta) or not np.isfinite(beta):
        raise ValidationError(f"inverse temperature must be a finite real number, got {beta}")
    eigvals, eigvecs = la.eigh(hermitize(np.asarray(H, dtype=complex)))
    weights = np.exp(-float(beta) * (eigvals - eigvals.min()))
    weights /= weights.sum()
    return (eigvecs * weights) @ eigvecs.conj().T


STATE_KINDS = ("separable", "ghz", "gibbs")


def standard_states(
    kind: str,
    n_qubits: int,
    H: Optional[np.ndarray] = None,
    beta: float = GIBBS_BETA,
    model: str = "spin_chain",
) -> np.ndarray:
    """
    Reference initial states

    Args:
        kind: "separable", "ghz" or "gibbs"
        n_qubits: Number of qubits of the register
        H: Hamiltonian for the Gibbs state
        beta: Inverse temperature
        model: "nv_center" selects the NV separable state (I + Z_N) / 8

    Returns:
        Density matrix
    """
    if kind == "separable":
        return nv_separable_state() if model == "nv_center" else separable_state(n_qubits)
    if kind == "ghz":
        return ghz_state(n_qubits)
    if kind == "gibbs":
        if H is None:
            raise ValidationError("the Gibbs state needs a Hamiltonian")
        return gibbs_state(H, beta)
    raise ValidationError(f"unknown state kind {kind!r}, expected one of {STATE_KINDS}")


def psi_matrix(gen: LindbladGenerator, basis: OperatorBasis) -> np.ndarray:
    """
    Generator in an orthonormal operator basis, Psi_mn = tr[F_m^dag L(F_n)]

    Args:
        gen: Lindblad generator
        basis: Orthonormal basis (raw Pauli normalization is rejected)

    Returns:
        d^2 x d^2 complex matrix
    """
    if basis.dim != gen.dim:
        raise DimensionError(f"basis for d={basis.dim}, generator for d={gen.dim}")
    if not basis.is_orthonormal():
        raise ValidationError("psi_matrix needs an orthonormal basis")
    b = basis.matrix()
    return b.conj().T @ generator_matrix(gen).matrix @ b


def r_matrix(n_qubits: int) -> np.ndarray:
    """R_ni = tr[(F_n F_i)^2] - d over the non-identity raw Pauli strings"""
    basis = pauli_basis(n_qubits, "raw")
    d = basis.dim
    f = basis.elements[1:]
    r = np.empty((len(f), len(f)))
    for n, fn in enumerate(f):
        for i, fi in enumerate(f):
            product = fn @ fi
            r[n, i] = np.trace(product @ product).real - d
    return r


@dataclass(frozen=True)
class DissipativeQubitSpec:
    """Purely dissipative N-qubit generator with a diagonal GKS matrix"""

    n_qubits: int
    a: Tuple[float, ...]
    probe: Optional[np.ndarray] = field(default=None, compare=False)
    seed: Optional[int] = None

    def __post_init__(self):
        expected = 4 ** self.n_qubits - 1
        if len(self.a) != expected:
            raise DimensionError(f"expected {expected} GKS entries, got {len(self.a)}")
        if any(v < 0 for v in self.a):
            raise ValidationError("diagonal GKS entries must be non-negative")
        if self.probe is None and self.seed is None:
            raise ValidationError("a generic probe observable needs a seed")


def probe_observable(n_qubits: int, coefficients: Sequence[float]) -> np.ndarray:
    """sum_i c_i F_i over the non-identity raw Pauli strings"""
    f = pauli_basis(n_qubits, "raw").elements[1:]
    if len(coefficients) != len(f):
        raise DimensionError(f"expected {len(f)} probe coefficients, got {len(coefficients)}")
    return sum(c * fi for c, fi in zip(coefficients, f))


def generic_probe(n_qubits: int, seed) -> np.ndarray:
    """Traceless probe with i.i.d. standard normal Pauli coefficients"""
    rng = np.random.default_rng(seed)
    return probe_observable(n_qubits, rng.standard_normal(4 ** n_qubits - 1))


def dissipative_nqubit(spec: DissipativeQubitSpec) -> Tuple[LindbladGenerator, MeasurementSet]:
    """
    H = 0 with noise operators from the diagonal GKS matrix in the raw Pauli basis

    The measurement set is {I, probe}.
    """
    basis = pauli_basis(spec.n_qubits, "raw")
    gen = gks_to_lindblad(GKSSpec(basis=basis, A=np.diag(np.asarray(spec.a, dtype=float))))
    probe = generic_probe(spec.n_qubits, spec.seed) if spec.probe is None else spec.probe
    return gen, MeasurementSet.with_identity([probe], ["probe"])


def dissipative_family(n_qubits: int) -> SystemFactory:
    """Parameter vector (|a| then probe coefficients) -> dissipative system"""
    m = 4 ** n_qubits - 1

    def build(values: np.ndarray):
        values = np.asarray(values, dtype=float)
        spec = DissipativeQubitSpec(
            n_qubits=n_qubits,
            a=tuple(np.abs(values[:m])),
            probe=probe_observable(n_qubits, values[m:2 * m]),
        )
        return dissipative_nqubit(spec)

    return build


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def random_unitary(d: int, seed) -> np.ndarray:
    """Haar-random unitary"""
    return unitary_group.rvs(d, random_state=np.random.default_rng(seed))


def random_unitary_system(d: int, n_obs: int, seed) -> Tuple[LindbladGenerator, MeasurementSet]:
    """
    Hamiltonian of a Haar-random unitary (U = e^{-iH}) with random observables

    Args:
        d: Hilbert space dimension
        n_obs: Size of the measurement set, identity included
        seed: Seed for the unitary and the observables

    Returns:
        (generator, measurement set)
    """
    if n_obs < 1 or n_obs > d * d:
        raise ValidationError(f"n_obs must lie in [1, {d * d}], got {n_obs}")
    rng = np.random.default_rng(seed)
    u = random_unitary(d, rng)
    h = hermitize(1j * la.logm(u))
    observables = [random_hermitian(d, rng) for _ in range(n_obs - 1)]
    measurements = (
        MeasurementSet.with_identity(observables) if observables else MeasurementSet((np.eye(d, dtype=complex),), ("I",))
    )
    return LindbladGenerator(H=h), measurements


def random_lindblad_system(
    d: int, n_obs: int, n_noise: int, seed
) -> Tuple[LindbladGenerator, MeasurementSet]:
    """Random Hermitian H, Ginibre noise operators and random observables"""
    if n_obs < 1 or n_obs > d * d:
        raise ValidationError(f"n_obs must lie in [1, {d * d}], got {n_obs}")
    rng = np.random.default_rng(seed)
    h = random_hermitian(d, rng)
    noise = tuple(
        (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2 * d) for _ in range(n_noise)
    )
    observables = [random_hermitian(d, rng) for _ in range(n_obs - 1)]
    measurements = (
        MeasurementSet.with_identity(observables) if observables else MeasurementSet((np.eye(d, dtype=complex),), ("I",))
    )
    return LindbladGenerator(H=h, noise_ops=noise), measurements


def seeded_family(builder: Callable[[int], Tuple[LindbladGenerator, MeasurementSet]]) -> SystemFactory:
    """Adapt a seed-driven constructor to the parameter-vector interface"""

    def build(values: np.ndarray):
        return builder(int(np.asarray(values).ravel()[0]))

    return build


def seed_sampler(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.integers(2 ** 63 - 1)])
