"""
Centralized configuration for the taumodel engine.
All environment variables and numeric defaults are managed here.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from root .env (preferred) and then taumodel/.env
_here = Path(__file__).resolve().parent
_root_env = _here.parent / ".env"
_local_env = _here / ".env"
load_dotenv(_root_env, override=False)
load_dotenv(_local_env, override=False)

# Numeric mode: "exact" (rationals) or "float" (IEEE double)
DEFAULT_MODE = os.getenv("TAUMODEL_MODE", "exact")

# Fock-space truncation
WINDOW = int(os.getenv("TAUMODEL_WINDOW", "6"))
_band = os.getenv("TAUMODEL_BAND")
BAND = int(_band) if _band else None

# Taylor exponentials
TAYLOR_ORDER = int(os.getenv("TAUMODEL_TAYLOR_ORDER", "60"))
EXP_TOL = float(os.getenv("TAUMODEL_EXP_TOL", "1e-16"))
PRUNE_TOL = float(os.getenv("TAUMODEL_PRUNE_TOL", "1e-18"))

# Comparisons and finite differences
TOLERANCE = float(os.getenv("TAUMODEL_TOLERANCE", "1e-10"))
TODA_STEP = float(os.getenv("TAUMODEL_TODA_STEP", "1e-3"))

# Runs
SEED = int(os.getenv("TAUMODEL_SEED", "0"))
WORKERS = int(os.getenv("TAUMODEL_WORKERS", "4"))
REPORT_DIR = Path(os.getenv("TAUMODEL_REPORT_DIR", "reports"))
LOG_LEVEL = os.getenv("TAUMODEL_LOG_LEVEL", "WARNING")

# Wick pairing enumeration cap (10395 matchings at length 12)
WICK_MAX_WORD = 12

ROUTES = ("bruteforce", "desym", "det", "fock")
MODES = ("exact", "float")


def validate_config():
    """Validate the numeric settings."""
    problems = []

    if DEFAULT_MODE not in MODES:
        problems.append(f"TAUMODEL_MODE must be one of {MODES}, got {DEFAULT_MODE!r}")
    if WINDOW < 1:
        problems.append(f"TAUMODEL_WINDOW must be positive, got {WINDOW}")
    if BAND is not None and not 1 <= BAND <= WINDOW:
        problems.append(f"TAUMODEL_BAND must lie in [1, {WINDOW}], got {BAND}")
    if TAYLOR_ORDER < 1:
        problems.append(f"TAUMODEL_TAYLOR_ORDER must be positive, got {TAYLOR_ORDER}")
    for name, value in (("TAUMODEL_EXP_TOL", EXP_TOL), ("TAUMODEL_TOLERANCE", TOLERANCE),
                        ("TAUMODEL_PRUNE_TOL", PRUNE_TOL)):
        if not 0.0 < value < 1.0:
            problems.append(f"{name} must lie in (0, 1), got {value}")
    if TODA_STEP <= 0:
        problems.append(f"TAUMODEL_TODA_STEP must be positive, got {TODA_STEP}")
    if WORKERS < 1:
        problems.append(f"TAUMODEL_WORKERS must be at least 1, got {WORKERS}")

    if problems:
        raise ValueError(
            "Invalid taumodel configuration:\n  " + "\n  ".join(problems) + "\n"
            "Fix the values in your environment or the .env file at the repository root."
        )

    return True
