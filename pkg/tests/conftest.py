import numpy as np
import pytest
import yaml

from src.dynamics import LindbladGenerator, generator_matrix
from src.linops import SIGMA_X, SIGMA_Z
from src.observability import MeasurementSet

DEPHASING = 0.1


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tilted_qubit():
    """H = X + Z with weak dephasing, measuring Z: observable"""
    gen = LindbladGenerator(H=SIGMA_X + SIGMA_Z, noise_ops=(np.sqrt(DEPHASING) * SIGMA_Z,))
    return generator_matrix(gen), MeasurementSet.with_identity([SIGMA_Z], ["Z"])


@pytest.fixture
def precessing_qubit():
    """H = Z, measuring X: the Z direction is never seen"""
    gen = LindbladGenerator(H=SIGMA_Z)
    return generator_matrix(gen), MeasurementSet.with_identity([SIGMA_X], ["X"])


@pytest.fixture
def write_config(tmp_path):
    def write(data, name="experiment.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def tilted_qubit_config():
    return {
        "schema": 1,
        "system": {
            "H": [[1.0, 1.0], [1.0, -1.0]],
            "noise_ops": [[[DEPHASING ** 0.5, 0.0], [0.0, -DEPHASING ** 0.5]]],
            "observables": ["pauli:I", "pauli:Z"],
            "labels": ["I", "Z"],
        },
        "shots": 500,
        "n_grid": 50,
    }
