"""
Configuration settings for regsens

Numerical tolerances and engine defaults. A few runtime settings can be
overridden through REGSENS_* environment variables (a local .env file is
honoured).
"""
import os

from dotenv import load_dotenv

load_dotenv()  # Load environment variables from .env file

# Moment matrices
PD_EIGEN_RATIO = 1e-10  # smallest/largest eigenvalue below this => not positive definite
SYMMETRY_REL_TOL = 1e-12  # relative asymmetry allowed in a supplied covariance
SUMMARY_REL_TOL = 1e-9  # regression-algebra identities checked at this relative tolerance
DEFAULT_DENOMINATOR = os.getenv('REGSENS_COV_DENOMINATOR', 'n-1')  # 'n-1' or 'n'

# R-squared handling
R2_TOL = 1e-10  # R2_long within this of R2_med is the degenerate medium case

# Polynomial root finding
DEGREE_DEGENERACY = 1e-12  # |leading| <= this * max(|others|) drops the degree
ROOT_DEDUP_REL = 1e-8  # roots/exclusions closer than this * (1 + |beta_med|) coincide
NEWTON_RESIDUAL = 1e-12  # target residual relative to the polynomial scale
NEWTON_MAX_STEPS = 50
ROOT_RESIDUAL_ACCEPT = 1e-8  # polished roots with a larger relative residual are dropped
IMAG_REL_TOL = 1e-7  # eigenvalues with |imag| below this * (1 + |real|) count as real
POLE_REL_TOL = 1e-12  # |f1| below this * scale with |f0| above it: no finite delta
ROOT_MEMBERSHIP_TOL = 1e-8  # relative cubic residual accepted for an extension point

# Proportionality diagnostic
PROPORTIONALITY_TOL = 1e-6

# Generic breakdown engine
GRID_POINTS = 1024  # log-spaced r values
GRID_R_MIN = 1e-6
GRID_R_MAX = 1e3
BISECTION_STEPS = 60
BISECTION_REL_TOL = 1e-10
WITNESS_BOUND = 1e8  # witnesses beyond this * (1 + |baseline|) mean the infimum escapes to infinity
CROSSING_REL_TOL = 1e-6  # a bracketed crossing of a point-valued set must land this * (1 + |b|) from b

# Oracle
PSD_TRACE_TOL = 1e-10  # eigenvalues >= -tol * trace are clipped to zero
STRUCTURE_REL_TOL = 1e-10  # covariance vs structural-coefficient consistency
REJECTION_BUDGET = 10_000
SEPARATION = 0.05  # minimum scaled |beta_short - beta_med| and |c_g| for random draws
SUITE_INSTANCES = 500

# Batch execution
MAX_WORKERS = int(os.getenv('REGSENS_MAX_WORKERS', '4'))

# Logging
LOG_FILE = os.getenv('REGSENS_LOG_FILE')  # optional detailed log file

# Reporting
TABLE_SIGNIFICANT_DIGITS = 6
NAIVE_LABEL = "incorrect: fixed-R2 approximation, not a valid breakdown point"
BETA_STAR_LABEL = "bounding-set element, not an identified-set bound"
