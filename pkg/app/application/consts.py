import os

CURRENT_DIR = os.path.dirname(os.path.realpath(__file__))
APP_DIR = os.path.dirname(CURRENT_DIR)
PROJECT_DIR = os.path.dirname(APP_DIR)

DATA_DIR = os.path.join(PROJECT_DIR, "data")

DATA_CACHE_DIR = os.path.join(DATA_DIR, "01_cache")
DATA_OUTPUT_DIR = os.path.join(DATA_DIR, "02_output")

# Enumeration capacity (number of steps).
L_MAX = 14

# Horizon (lattice steps) of the excursion-length series.
T_MAX = 1500
# Horizon of the joint (T, N) table used by the fast renewal sampler.
T_JOINT = 400

TOLERANCE = 1e-10

# Crossing-report knobs: excursion index delta*log L, prefix length
# kappa*(log L)^2, tail length alpha*log L.
DELTA = 3.0
KAPPA = 5.0
ALPHA = 10.0

# Upper bound on R * t_max^2 for the (t, n, eps) strip tables.
STRIP_TABLE_BUDGET = 50_000_000
# Upper bound on R * horizon for the n-marginal slab series.
SLAB_SERIES_BUDGET = 200_000_000

RESTART_CAP = 100_000

# Monte Carlo draws are keyed by fixed-size blocks so that the result does
# not depend on the worker count.
DRAWS_PER_BLOCK = 256

TABLE_FORMAT_VERSION = 1
# Regression pin of the tilt root; cached tables built for another value
# are rebuilt.
LAMBDA_STAR_PIN = 0.21559
LAMBDA_STAR_PIN_TOLERANCE = 5e-5
