import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
DEFAULT_WORKERS = int(os.getenv('LTV_WORKERS', 1))
DEFAULT_SEED = int(os.getenv('LTV_SEED', 20240601))
CHUNK_PATHS = int(os.getenv('LTV_CHUNK_PATHS', 1000))
TOOL_VERSION = '1.0.0'

# Chain validation
STOCHASTIC_TOL = 1e-12
STATIONARY_TOL = 1e-12
DRIFT_TOL = 1e-10
MAX_LABEL = 10 ** 6

# Spectral
DEGENERATE_SIGMA2 = 1e-8
TRACKING_TOL = 1e-12
APERIODICITY_MARGIN = 1e-6
PERIPHERAL_TOL = 1e-8
CURVATURE_STEPS = (1e-3, 1e-4)
AUTOCOV_TRUNCATION = 1e-14
AUTOCOV_MAX_LAG = 1_000_000

# Exact law
FOURIER_TOL = 1e-8
MAX_ENUMERATION_STEPS = 12

# Monte Carlo
SIGMA_MC_STEPS = int(os.getenv('LTV_SIGMA_MC_STEPS', 10_000))
SIGMA_MC_PATHS = int(os.getenv('LTV_SIGMA_MC_PATHS', 10_000))
CONVERGE_PATHS = int(os.getenv('LTV_CONVERGE_PATHS', 20_000))
OCCUPATION_PATHS = int(os.getenv('LTV_OCCUPATION_PATHS', 10_000))
SIGMA_AGREEMENT_TOL = 0.02
REFERENCE_MESH = int(os.getenv('LTV_REFERENCE_MESH', 100_000))
REFERENCE_EPS = float(os.getenv('LTV_REFERENCE_EPS', 0.01))

# Report calibration
LLT_SLOPE_TOL = 1e-4
KERNEL_SLOPE_TOL = 1e-3
MOMENT_SLOPE_TOL = 1e-2
KS_PASS = 0.05
