from utils import load_config
import configparser
import os
from dotenv import load_dotenv

load_dotenv()

config: configparser.ConfigParser = load_config("config") or configparser.ConfigParser()

THREADS = int(os.getenv("EMBZ_THREADS", config.getint("general", "threads", fallback=4)))
SEED = config.getint("general", "seed", fallback=7)

OVERSAMPLING = config.getint("spectra", "oversampling", fallback=4)
MASS_TOLERANCE = config.getfloat("spectra", "mass_tolerance", fallback=1e-10)
MERGE_RTOL = config.getfloat("spectra", "merge_rtol", fallback=1e-12)
DENSE_PRODUCT_LIMIT = config.getint("spectra", "dense_product_limit", fallback=4_000_000)

TRUNCATION_K = config.getint("embezzlement", "truncation_k", fallback=65536)
TAIL_CAP = config.getfloat("embezzlement", "tail_cap", fallback=1e-4)
GRID_MESH = config.getint("embezzlement", "grid_mesh", fallback=8)
MIN_STEP = config.getfloat("embezzlement", "min_step", fallback=1e-4)
MAX_D = config.getint("embezzlement", "max_d", fallback=16)
REFINE_STARTS = config.getint("embezzlement", "refine_starts", fallback=4)

MODE_CUTOFF = config.getfloat("models", "mode_cutoff", fallback=1e-12)
QUADRATURE_NODES = config.getint("models", "quadrature_nodes", fallback=4096)
QUADRATURE_TOL = config.getfloat("models", "quadrature_tol", fallback=1e-10)
QUADRATURE_MAX_NODES = config.getint("models", "quadrature_max_nodes", fallback=1 << 20)

ORACLE_RESTARTS = config.getint("oracle", "restarts", fallback=8)
ORACLE_TOL = config.getfloat("oracle", "tol", fallback=1e-10)
ORACLE_STEPS = config.getint("oracle", "steps", fallback=64)
ORACLE_SEED = config.getint("oracle", "seed", fallback=7)

OUTPUT_DIR = config.get("cli", "output_dir", fallback="results")
CACHE_DIR = os.getenv("EMBZ_CACHE_DIR") or config.get("cli", "cache_dir", fallback=".embz_cache")
