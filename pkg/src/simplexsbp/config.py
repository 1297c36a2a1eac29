import os
from math import inf
from pathlib import Path
from dotenv import load_dotenv
load_dotenv()

PACKAGE_DIR = Path(__file__).resolve().parent

GOLDEN_DIR = Path(os.getenv("SIMPLEXSBP_GOLDEN_DIR", PACKAGE_DIR / "golden"))
OUTPUT_DIR = Path(os.getenv("SIMPLEXSBP_OUTPUT_DIR", "results"))
DEFAULT_THREADS = int(os.getenv("SIMPLEXSBP_THREADS", "1"))

SUPPORTED_DEGREES = (1, 2, 3, 4)
SUPPORTED_DIMENSIONS = (2, 3)

# reference measure of the unit right simplex
REFERENCE_MEASURE = {1: 1.0, 2: 1.0 / 2.0, 3: 1.0 / 6.0}

TOLERANCES = {
    "node_inside": 1e-13,
    "duplicate_node": 1e-13,
    "cubature": 1e-12,
    "weight_sum": 1e-13,
    "accuracy": 1e-10,
    "antisymmetry": 1e-12,
    "e_symmetry": 1e-12,
    "surface_moment": 1e-10,
    "compatibility": 1e-10,
    "bilinear": 1e-10,
    "skew_system": 1e-10,
    "global_accuracy": 1e-9,
    "spectrum": 1e-10,
    "characteristic": 1e-13,
    "node_match": 1e-10,
}

LM_DEFAULTS = {
    "max_iterations": 200,
    "tolerance": 1e-13,
    "initial_damping": 1e-3,
    "damping_growth": 10.0,
    "damping_shrink": 0.3,
    "jacobian_step": 1e-7,
}

RANK_TOLERANCE = 1e-12

DEFAULT_BETA = (1.0, 1.0)
DEFAULT_SIGMA = 1.0
DEFAULT_FINAL_TIME = 1.0
CFL_SAFETY = 0.9
CFL_BRACKET = (0.01, 4.0)
CFL_BRACKET_WIDTH = 0.01
SPECTRUM_SIZE_CAP = 4000

# rate_window: accepted least-squares convergence slope (low, high) per degree
CSBP = {
    "label": "C-SBP",
    "cfl_max": {1: 1.885, 2: 2.257, 3: 1.816, 4: 1.570},
    # even degrees decouple and lose one order
    "rate_window": {1: (1.75, inf), 2: (1.65, 2.5), 3: (3.75, inf), 4: (3.65, 4.5)},
}

DSBP = {
    "label": "D-SBP",
    "cfl_max": {1: 0.696, 2: 1.269, 3: 1.157, 4: 1.148},
    "rate_window": {p: (p + 0.75, inf) for p in SUPPORTED_DEGREES},
}

# spectral-element comparison shares the C-SBP nodes and time step; unstable for p >= 2
CSE = {
    "label": "C-SE",
    "cfl_max": CSBP["cfl_max"],
    "rate_window": {},
}

KNOWN_SCHEMES = {
    "csbp": CSBP,
    "dsbp": DSBP,
    "cse": CSE,
}

OUTPUT_TEMPLATES = {
    "cubature": "cubature_d<<dimension>>_p<<degree>>.json",
    "operators": "operators_d<<dimension>>_p<<degree>>.json",
    "verify": "verify_d<<dimension>>_p<<degree>>.json",
    "convergence": "convergence_<<scheme>>_p<<degree>>.csv",
    "fields": "fields_<<scheme>>_p<<degree>>_N<<N>>.csv",
    "spectrum": "spectrum_<<scheme>>_p<<degree>>_N<<N>>.csv",
    "energy": "energy_<<scheme>>_p<<degree>>_N<<N>>.csv",
    "cfl": "cfl_<<scheme>>.csv",
    "mesh": "mesh_N<<N>>_p<<degree>>.json",
    "manifest": "manifest_<<subcommand>>.json",
}

SCHEMA_VERSION = "1"
