"""
Experiment configuration schema and construction of the configured system
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from config import (
    DEFAULT_SAMPLING_MODE,
    DEFAULT_SHOTS,
    ERROR_SCALING_SEEDS,
    ERROR_SCALING_SHOTS,
    GIBBS_BETA,
    MODEL_NAMES,
    SCHEMA_VERSION,
    TIME_GRID_POINTS,
)
from src.dynamics import (
    KrausMap,
    LindbladGenerator,
    Superoperator,
    discretize,
    generator_matrix,
    kraus_superoperator,
)
from src.errors import ConfigError, DQSTError
from src.linops import as_operator
from src.models import (
    DissipativeQubitSpec,
    NVParams,
    SpinChainParams,
    dissipative_nqubit,
    ket_projector,
    nv_center,
    pauli_operator,
    random_lindblad_system,
    random_unitary_system,
    spin_chain,
    standard_states,
)
from src.observability import MeasurementSet

logger = logging.getLogger(__name__)


class ComplexMatrix(BaseModel):
    """Matrix given as separate real and imaginary parts"""

    model_config = ConfigDict(extra="forbid")

    re: List[List[float]]
    im: Optional[List[List[float]]] = None


MatrixSpec = Union[str, ComplexMatrix, List[List[float]]]


def to_matrix(spec: MatrixSpec, name: str = "matrix") -> np.ndarray:
    """
    Build a matrix from its config form

    Accepted forms: "pauli:IXZZ", "ket:0101", {re: [[...]], im: [[...]]} or a
    nested list of reals.
    """
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        if kind == "pauli":
            return pauli_operator(arg)
        if kind == "ket":
            return ket_projector(arg)
        raise ConfigError(f"{name}: unknown constructor string {spec!r}")
    if isinstance(spec, ComplexMatrix):
        re = np.asarray(spec.re, dtype=float)
        im = np.zeros_like(re) if spec.im is None else np.asarray(spec.im, dtype=float)
        if re.shape != im.shape:
            raise ConfigError(f"{name}: real part {re.shape} and imaginary part {im.shape} differ")
        return re + 1j * im
    return np.asarray(spec, dtype=complex)


def default_label(spec: MatrixSpec, index: int) -> str:
    """Label from a constructor string: pauli:XZ gives XZ, ket:01 gives |01>"""
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        if kind == "pauli":
            return arg
        if kind == "ket":
            return f"|{arg}>"
    return f"X{index}"


class ModelBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def known_model(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}, expected one of {MODEL_NAMES}")
        return self


class ExplicitSystem(BaseModel):
    model_config = ConfigDict(extra="forbid")

    H: Optional[MatrixSpec] = None
    noise_ops: List[MatrixSpec] = Field(default_factory=list)
    kraus_ops: List[MatrixSpec] = Field(default_factory=list)
    observables: List[MatrixSpec]
    labels: Optional[List[str]] = None
    target: Optional[MatrixSpec] = None


class StateSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["separable", "ghz", "gibbs", "matrix"] = "separable"
    beta: float = GIBBS_BETA
    matrix: Optional[MatrixSpec] = None
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.kind


class GenericityBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_trials: int = Field(100, ge=1)
    distribution: Literal["normal", "uniform"] = "normal"
    scale: float = Field(1.0, gt=0)


class ExperimentConfig(BaseModel):
    """Validated experiment configuration"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    model: Optional[ModelBlock] = None
    system: Optional[ExplicitSystem] = None
    dynamics: Literal["continuous", "discrete", "discretized"] = "continuous"
    dt: Optional[float] = Field(None, gt=0)
    horizon: Optional[float] = Field(None, gt=0)
    shots: int = Field(DEFAULT_SHOTS, ge=1)
    shots_grid: List[int] = Field(default_factory=lambda: list(ERROR_SCALING_SHOTS))
    n_seeds: int = Field(ERROR_SCALING_SEEDS, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    sampling: Literal["clt", "exact"] = DEFAULT_SAMPLING_MODE
    first_pick: Literal["deterministic", "seeded"] = "deterministic"
    n_grid: int = Field(TIME_GRID_POINTS, ge=2)
    states: List[StateSpec] = Field(default_factory=lambda: [StateSpec()])
    target_times: Optional[List[float]] = None
    genericity: GenericityBlock = Field(default_factory=GenericityBlock)
    tol: Optional[float] = Field(None, gt=0)
    psd_project: bool = False
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def check_consistency(self):
        if (self.model is None) == (self.system is None):
            raise ValueError("exactly one of 'model' and 'system' must be given")
        if self.dynamics == "discretized" and self.dt is None:
            raise ValueError("dynamics 'discretized' requires dt")
        if self.dynamics == "discrete" and (self.system is None or not self.system.kraus_ops):
            raise ValueError("dynamics 'discrete' requires system.kraus_ops")
        if self.first_pick == "seeded" and self.seed is None:
            raise ValueError("first_pick 'seeded' requires a seed")
        if any(p < 1 for p in self.shots_grid):
            raise ValueError("shots_grid entries must be >= 1")
        return self

    def require_seed(self, step: str) -> int:
        if self.seed is None:
            raise ConfigError(f"'{step}' is stochastic and needs a seed (config 'seed' or --seed)")
        return self.seed


def _format_errors(e: PydanticValidationError) -> str:
    parts = []
    for err in e.errors():
        location = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{location}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a raw config mapping

    Raises:
        ConfigError: naming every offending field
    """
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigError(f"invalid config: {_format_errors(e)}") from e


@dataclass
class SystemBundle:
    """Everything a pipeline needs about the configured system"""

    name: str
    dim: int
    measurements: MeasurementSet
    superoperator: Superoperator  # generator, or one-step propagator in discrete modes
    generator: Optional[Superoperator] = None
    lindblad: Optional[LindbladGenerator] = None
    hamiltonian: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None

    @property
    def n_qubits(self) -> Optional[int]:
        n = int(round(np.log2(self.dim)))
        return n if 2 ** n == self.dim else None


def _broadcast(value, length: int) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return (float(value),) * length


def _spin_chain_params(params: Dict[str, Any]) -> SpinChainParams:
    n = int(params.get("n_sites", 4))
    value = params.get("value", 1.0)
    return SpinChainParams(
        n_sites=n,
        alpha=_broadcast(params.get("alpha", value), n),
        beta=_broadcast(params.get("beta", value), n),
        gamma=_broadcast(params.get("gamma", value), n),
        delta=_broadcast(params.get("delta", value), n - 1),
        epsilon=_broadcast(params.get("epsilon", value), n - 1),
        eta=_broadcast(params.get("eta", 0.0), n),
    )


def _model_system(cfg: ExperimentConfig):
    """Returns (name, LindbladGenerator, MeasurementSet, target)"""
    name = cfg.model.name
    params = dict(cfg.model.params)
    if name == "spin_chain":
        gen, measurements = spin_chain(_spin_chain_params(params))
        return name, gen, measurements, None
    if name == "nv_center":
        gen, measurements, target = nv_center(NVParams(**params))
        return name, gen, measurements, target
    if name == "dissipative_nqubit":
        n = int(params.get("n_qubits", 2))
        a = params.get("a")
        probe = params.get("probe")
        if a is None:
            rng = np.random.default_rng(cfg.require_seed("random GKS rates"))
            a = rng.uniform(0.1, 1.0, size=4 ** n - 1)
        spec = DissipativeQubitSpec(
            n_qubits=n,
            a=tuple(float(v) for v in a),
            probe=None if probe is None else to_matrix(probe, "probe"),
            seed=cfg.seed,
        )
        gen, measurements = dissipative_nqubit(spec)
        return name, gen, measurements, None
    seed = cfg.require_seed(f"random model {name}")
    d = int(params.get("d", 2))
    n_obs = int(params.get("n_obs", 2))
    if name == "random_unitary":
        gen, measurements = random_unitary_system(d, n_obs, seed)
    else:
        gen, measurements = random_lindblad_system(d, n_obs, int(params.get("n_noise", 1)), seed)
    return name, gen, measurements, None


def build_system(cfg: ExperimentConfig) -> SystemBundle:
    """
    Construct dynamics, measurement set and target from a config

    Raises:
        ConfigError: the config describes an invalid physical system
    """
    try:
        if cfg.model is not None:
            name, gen, measurements, target = _model_system(cfg)
        else:
            system = cfg.system
            observables = [to_matrix(x, f"observables[{k}]") for k, x in enumerate(system.observables)]
            labels = system.labels or [default_label(x, k) for k, x in enumerate(system.observables)]
            measurements = MeasurementSet(tuple(observables), tuple(labels))
            target = None if system.target is None else as_operator(to_matrix(system.target, "target"), hermitian=True, name="target")
            name = "explicit"
            gen = None
            if system.H is not None:
                noise = tuple(to_matrix(op, f"noise_ops[{k}]") for k, op in enumerate(system.noise_ops))
                gen = LindbladGenerator(H=to_matrix(system.H, "H"), noise_ops=noise)

        if cfg.dynamics == "discrete":
            kraus = KrausMap(tuple(to_matrix(m, f"kraus_ops[{k}]") for k, m in enumerate(cfg.system.kraus_ops)))
            superop = kraus_superoperator(kraus)
            return SystemBundle(name, superop.dim, measurements, superop, target=target)

        if gen is None:
            raise ConfigError("system.H is required for continuous or discretized dynamics")
        generator = generator_matrix(gen)
        superop = discretize(generator, cfg.dt) if cfg.dynamics == "discretized" else generator
        return SystemBundle(
            name=name,
            dim=gen.dim,
            measurements=measurements,
            superoperator=superop,
            generator=generator,
            lindblad=gen,
            hamiltonian=gen.H,
            target=target,
        )
    except ConfigError:
        raise
    except (DQSTError, TypeError) as e:
        raise ConfigError(f"invalid system: {e}") from e


def build_states(cfg: ExperimentConfig, bundle: SystemBundle) -> Dict[str, np.ndarray]:
    """Initial states requested by the config, keyed by label"""
    states = {}
    for spec in cfg.states:
        try:
            if spec.kind == "matrix":
                if spec.matrix is None:
                    raise ConfigError(f"state {spec.label}: kind 'matrix' needs a matrix")
                rho = to_matrix(spec.matrix, f"state {spec.label}")
            else:
                n_qubits = bundle.n_qubits
                if n_qubits is None:
                    raise ConfigError(f"state kind {spec.kind!r} needs a qubit register, d={bundle.dim}")
                rho = standard_states(spec.kind, n_qubits, H=bundle.hamiltonian, beta=spec.beta, model=bundle.name)
        except ConfigError:
            raise
        except DQSTError as e:
            raise ConfigError(f"state {spec.label}: {e}") from e
        states[spec.label] = rho
    return states
