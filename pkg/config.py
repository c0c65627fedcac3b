"""
Configuration settings for the dynamical state tomography toolkit
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Project paths
BASE_DIR = Path(__file__).parent
OUTPUT_DIR = Path(os.getenv("DQST_OUTPUT_DIR", str(BASE_DIR / "output")))
CONFIGS_DIR = BASE_DIR / "configs"
TEMPLATES_DIR = BASE_DIR / "templates"

# Logging
LOG_LEVEL = os.getenv("DQST_LOG_LEVEL", "INFO")

# Report settings
SCHEMA_VERSION = 1
CONFIG_EXTENSIONS = [".yaml", ".yml", ".json"]

# Linear algebra tolerances
HERMITICITY_TOL = float(os.getenv("DQST_HERMITICITY_TOL", "1e-10"))
RANK_SAFETY_FACTOR = float(os.getenv("DQST_RANK_SAFETY_FACTOR", "100"))
TRACE_TOL = 1e-8
PROBABILITY_TOL = 1e-9

# Spectral tolerances
EIGEN_CLUSTER_TOL = 1e-8  # outcome clustering of observables
PBH_DEDUP_TOL = 1e-8
ALIAS_REAL_TOL = 1e-9
ALIAS_IMAG_TOL = 1e-7
EIGENBASIS_MAX_COND = 1e6  # above this, propagation falls back to expm

# Greedy selection
TIME_GRID_POINTS = int(os.getenv("DQST_TIME_GRID_POINTS", "200"))
GOLDEN_TOL_FRACTION = 1e-6
HORIZON_DECAY_MULTIPLE = 4.0  # default T = 4 / |Re lambda_2|
OBJECTIVE_TIE_TOL = 1e-10

# Sampling
SAMPLING_MODES = ["clt", "exact"]
DEFAULT_SAMPLING_MODE = os.getenv("DQST_SAMPLING_MODE", "clt")
DEFAULT_SHOTS = int(os.getenv("DQST_SHOTS", "1000"))

# Error scaling experiment
ERROR_SCALING_SHOTS = [100, 1000, 10000, 100000, 1000000]
ERROR_SCALING_SEEDS = int(os.getenv("DQST_ERROR_SCALING_SEEDS", "20"))

# Models
GIBBS_BETA = 1.0
MODEL_NAMES = ["spin_chain", "nv_center", "dissipative_nqubit", "random_unitary", "random_lindblad"]

# Concurrency
MAX_WORKERS = int(os.getenv("DQST_MAX_WORKERS", "1"))
