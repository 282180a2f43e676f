import os
from dotenv import load_dotenv

from errors import ParameterError

# Load environment variables from .env file
load_dotenv()

FORMAT_VERSION = 1
CODE_VERSION = "0.3.0"

# --- Ambient size guard ---

HARD_MAX_QUBITS = 12
ORACLE_MAX_QUBITS = 8

# --- Numerical tolerances ---

TOL_HERM = 1e-9
TOL_TR = 1e-9
TOL_PSD = 1e-8

# --- Key generation ---

DEPTH_CONSTANT = 4          # layers per unit of lambda
PURITY_GATE = 0.9           # every single-qubit marginal must be below this
MAX_ENTANGLEMENT_RETRIES = 256

# --- Tomography and verification ---

C_SHOTS = 2.0               # must pass calibrate_shot_constant at k=2, eps=0.1, delta=0.05
C_SHOTS_GRID = (0.125, 0.25, 0.5, 1.0, 2.0)
# A recorded calibration result can be pinned with QMPSIG_EPSILON in .env
DEFAULT_EPSILON = float(os.getenv("QMPSIG_EPSILON", "0.1"))
DEFAULT_DELTA = 0.05
DEFAULT_GAMMA = 16

# --- Security harness ---

DEFAULT_BETA = 0.1
DEFAULT_TOL_FEAS = 1e-6
DEFAULT_ORACLE_ITERATIONS = 5000
ORACLE_STALL_WINDOW = 50
ORACLE_STALL_TOL = 1e-6
ORACLE_POLISH_START = 0.05     # least-squares polish once the residual is below this
ORACLE_POLISH_RANK = 4
ORACLE_POLISH_MAX_RANK = 16
ORACLE_POLISH_EVALS = 100
INJECTIVITY_BUDGET = 100_000
GAME_QUERY_CAP = 64
MIN_CALIBRATION_TRIALS = 30

# Threshold calibration fixture; DEFAULT_EPSILON must fall between its honest
# 99th and forgery 1st percentiles
CALIBRATION_FIXTURE = {"num_qubits": 6, "k": 2, "m_size": 4, "shots": 10_000}
CALIBRATION_NOISE = 0.02
CALIBRATION_TRIALS = 50
CALIBRATION_SEED = 7


def max_qubits() -> int:
    """
    Ambient qubit cap, read from QMPSIG_MAX_QUBITS on every call.

    Values above the hard cap of 12 are clamped to 12.
    """
    raw = os.getenv("QMPSIG_MAX_QUBITS")
    if raw is None or raw.strip() == "":
        return HARD_MAX_QUBITS
    try:
        value = int(raw)
    except ValueError:
        raise ParameterError(f"QMPSIG_MAX_QUBITS must be an integer, got {raw!r}")
    if value < 1:
        raise ParameterError(f"QMPSIG_MAX_QUBITS must be positive, got {value}")
    return min(value, HARD_MAX_QUBITS)


def log_level() -> str:
    """Log level for the CLI (QMPSIG_LOG_LEVEL, default WARNING)."""
    return os.getenv("QMPSIG_LOG_LEVEL", "WARNING").upper()
