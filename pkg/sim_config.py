"""
Configuration constants for the SMP/LOCC simulator.

Everything numeric that the simulator treats as a knob lives here, so that the
modules themselves only import names. A couple of values can be overridden from
the environment.
"""

import os

# Tolerances
TOL = 1e-9              # identity / Hermiticity / completeness tolerance
PSD_SLACK = 1e-10       # allowed negative eigenvalue slack for effects and states
DEGENERACY = 1e-12      # branch probability below which a post-state is degenerate
RECONSTRUCTION_TOL = 1e-8

# Resource caps
MAX_ENTRIES = int(os.environ.get("SMP_SIM_MAX_ENTRIES", 2 ** 20))
MAX_LOCC_STEPS = 20     # exact transcript enumeration cap
MAX_REPLACE_QUBITS = 10  # r * q for message replacement (dimension 1024)
MAX_VALUE_TABLE_ROUNDS = 10
MAX_NEWMAN_PAIRS = 2 ** 16

# Fingerprinting
HADAMARD_MAX_N = 12
RANDOM_CODE_MAX_N = 20
RANDOM_CODE_LENGTH_FACTOR = 8
RANDOM_CODE_RELATIVE_DISTANCE = 0.1
RANDOM_CODE_MAX_ATTEMPTS = 200
EXHAUSTIVE_DISTANCE_MAX_N = 14
SAMPLED_DISTANCE_MESSAGES = 4096
SWAP_REPETITIONS = 5

# Transforms
TRUNCATION_EXTRA_BITS = 7
NEWMAN_RETRIES = 10
HASHING_EQ_ERROR = 1 / 8

# Output
CSV_SIGNIFICANT_DIGITS = 12

# Harness
WORKERS = int(os.environ.get("SMP_SIM_WORKERS", min(8, os.cpu_count() or 1)))
PLOT_SUFFIX = ".plot.csv"
SUMMARY_SUFFIX = ".summary.csv"

# Logging - 10MB per file, keep 7 backups
LOG_FILE = os.environ.get("SMP_SIM_LOG_FILE", "sim.log")
LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 7
RUN_LOG_DIRECTORY = "run_logs"

# Per-experiment defaults. Keys not listed here are rejected as usage errors.
EXPERIMENT_DEFAULTS = {
    "fingerprint-eq": {"n": 8, "k": 5, "instances": 100, "exhaustive_n": 4},
    "ambainis-eq": {"n": 6, "reps": 1},
    "hm": {"n": 8},
    "drhm": {"n": 4},
    "ratio": {"instances": 200, "max_dim": 8, "max_length": 6},
    "clamp-sim": {"instances": 100, "delta": 0.05, "draws": 1000, "max_qubits": 3},
    "replace": {"instances": 50, "q": 2, "r": 5, "delta": 0.45, "c": 3, "success_fraction": 0.9},
    "both-replaced": {"instances": 100, "delta": 0.01, "draws": 200, "max_qubits": 3},
    "locc1-hybrid": {"instances": 50, "n": 3, "max_qubits": 3, "max_outcomes": 4},
    "newman": {"instances": 10, "n": 6, "epsilon": 0.125, "delta": 0.125, "success_fraction": 0.9},
    "union-bound": {"instances": 200, "max_steps": 5, "max_delta": 0.05, "max_dim": 4},
}
