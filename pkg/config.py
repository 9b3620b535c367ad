import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

_ROOT = Path(__file__).resolve().parent


class Config:
    """Configuration class with environment overrides."""
    TOOL_VERSION = "0.1.0"

    LOG_LEVEL = os.getenv("NDD_LOG_LEVEL", "INFO")
    LOG_DIR = os.getenv("NDD_LOG_DIR", "logs")

    # Run defaults
    DEFAULT_SEED = int(os.getenv("NDD_SEED", "42"))
    DEFAULT_OUTPUT_DIR = os.getenv("NDD_OUTPUT_DIR", "runs")
    DEFAULT_JOBS = int(os.getenv("NDD_JOBS", "1"))
    DEFAULT_SCENARIO = os.getenv("NDD_SCENARIO", str(_ROOT / "scenarios" / "default.json"))
    SCENARIO_DIR = _ROOT / "scenarios"

    # History windows
    WINDOW_SUBSAMPLES = 4  # subsamples per knot interval for window maxima

    # Assumption sampling
    U_MAX = 1e3
    ASSUMPTION_SAMPLES = 400
    EPSILON_SAMPLE_MARGIN = 50.0  # time units sampled beyond the run interval
    DERIVATIVE_TOLERANCE = 1e-6
    LIPSCHITZ_PAIRS = 100
    GROWTH_TAIL = 10.0  # |u| beyond which limsup g(u)/u is sampled

    # Experiment defaults
    ABSORPTION_ENSEMBLE = 20
    RELATIVE_SLACK = 1e-8
    MONOTONE_SLACK = 1e-10
    PLATEAU_REL_TOL = 1e-3
    PLATEAU_SLOPE = 1e-3  # per unit time
    RESIDUAL_TOLERANCE = 1e-6
    PULLBACK_STEP_BUDGET = 2_000_000
    SPLIT_DELAYS = 40  # minimum run length of the splitting experiments, in delays
    PULLBACK_MAX_N = 6
    PULLBACK_CLOUD_SIZE = 8
    DEFAULT_TARGET_TIME = 5.0
    PERTURBATION_SCALES = (1e-3, 1e-6)
