import numpy as np
import pytest

from src.errors import ConfigError
from src.experiment_config import ComplexMatrix, build_states, build_system, parse_config, to_matrix
from src.linops import SIGMA_Y
from utils.file_handler import FileHandler


def test_to_matrix_forms():
    np.testing.assert_array_equal(to_matrix("pauli:Y"), SIGMA_Y)
    np.testing.assert_array_equal(to_matrix("ket:1"), np.diag([0, 1]))
    np.testing.assert_array_equal(to_matrix(ComplexMatrix(re=[[0, 0], [0, 0]], im=[[0, -1], [1, 0]])), SIGMA_Y)
    np.testing.assert_array_equal(to_matrix([[1, 0], [0, 1]]), np.eye(2))
    with pytest.raises(ConfigError):
        to_matrix("magic:X")


def test_exactly_one_system_source():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({"model": {"name": "nv_center"}, "system": {"observables": ["pauli:I"]}})
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({})


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="shots"):
        parse_config({"model": {"name": "nv_center"}, "shots": 0})
    with pytest.raises(ConfigError, match="unknown model"):
        parse_config({"model": {"name": "ising"}})
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"model": {"name": "nv_center"}, "colour": "red"})


def test_dynamics_mode_requirements():
    with pytest.raises(ConfigError, match="dt"):
        parse_config({"model": {"name": "nv_center"}, "dynamics": "discretized"})
    with pytest.raises(ConfigError, match="kraus_ops"):
        parse_config({"model": {"name": "nv_center"}, "dynamics": "discrete"})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"model": {"name": "nv_center"}, "first_pick": "seeded"})


def test_require_seed():
    cfg = parse_config({"model": {"name": "nv_center"}})
    with pytest.raises(ConfigError, match="simulate"):
        cfg.require_seed("simulate")
    assert parse_config({"model": {"name": "nv_center"}, "seed": 3}).require_seed("simulate") == 3


def test_build_model_systems():
    bundle = build_system(parse_config({"model": {"name": "spin_chain", "params": {"eta": 1.0}}}))
    assert bundle.dim == 16
    assert bundle.n_qubits == 4
    assert len(bundle.lindblad.noise_ops) == 8

    nv = build_system(parse_config({"model": {"name": "nv_center"}}))
    assert nv.target is not None
    assert nv.superoperator.kind == "generator"


def test_dissipative_model_needs_seed_for_random_rates():
    with pytest.raises(ConfigError, match="seed"):
        build_system(parse_config({"model": {"name": "dissipative_nqubit", "params": {"n_qubits": 1}}}))
    bundle = build_system(parse_config({"model": {"name": "dissipative_nqubit", "params": {"n_qubits": 1}}, "seed": 1}))
    assert bundle.dim == 2


def test_explicit_system_with_non_hermitian_observable(tilted_qubit_config):
    tilted_qubit_config["system"]["observables"] = ["pauli:I", [[0, 1], [0, 0]]]
    with pytest.raises(ConfigError, match="observable 1"):
        build_system(parse_config(tilted_qubit_config))


def test_discrete_and_discretized_modes(tilted_qubit_config):
    cfg = dict(tilted_qubit_config, dynamics="discretized", dt=0.1)
    bundle = build_system(parse_config(cfg))
    assert bundle.superoperator.kind == "propagator"
    assert bundle.generator.kind == "generator"

    system = dict(tilted_qubit_config["system"], kraus_ops=["pauli:X"])
    bundle = build_system(parse_config(dict(tilted_qubit_config, system=system, dynamics="discrete")))
    assert bundle.superoperator.kind == "propagator"
    assert bundle.generator is None


def test_build_states(tilted_qubit_config):
    cfg = dict(tilted_qubit_config, states=[{"kind": "separable"}, {"kind": "matrix", "matrix": "ket:1", "name": "one"}])
    cfg = parse_config(cfg)
    states = build_states(cfg, build_system(cfg))
    assert list(states) == ["separable", "one"]
    np.testing.assert_array_equal(states["one"], np.diag([0, 1]))


def test_load_config_from_yaml(write_config, tilted_qubit_config):
    handler = FileHandler()
    data = handler.load_config(write_config(tilted_qubit_config))
    assert data["system"]["labels"] == ["I", "Z"]


def test_load_bundled_config():
    data = FileHandler().load_config("nv_center")
    assert data["model"]["name"] == "nv_center"
    assert data["target_times"] == [0.0, 50.0]


def test_load_config_errors(tmp_path):
    handler = FileHandler()
    with pytest.raises(ConfigError, match="not found"):
        handler.load_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.txt"
    bad.write_text("x: 1")
    with pytest.raises(ConfigError, match="Unsupported"):
        handler.load_config(str(bad))
    broken = tmp_path / "broken.yaml"
    broken.write_text("a: [1, 2")
    with pytest.raises(ConfigError, match="Could not read"):
        handler.load_config(str(broken))


def test_config_hash_ignores_key_order():
    assert FileHandler.config_hash({"a": 1, "b": [1, 2]}) == FileHandler.config_hash({"b": [1, 2], "a": 1})
    assert FileHandler.config_hash({"a": 1}) != FileHandler.config_hash({"a": 2})
