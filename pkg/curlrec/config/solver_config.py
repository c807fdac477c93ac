"""
Solver Configuration
Numerical defaults shared by the discretization, estimator and reconstruction services
"""
import os

from dotenv import load_dotenv

load_dotenv()

VERSION = '1.0.0'

# Quadrature exactness is chosen per call site from these offsets
QUADRATURE_SETTINGS = {
    'cell_order_offset': 4,      # triangle rules exact to order 2p + 4
    'edge_points_offset': 3,     # Gauss-Legendre with p + 3 points on edges
}

# Orthonormal modal basis: built once up to this degree and sliced (hierarchical)
BASIS_SETTINGS = {
    'max_degree': int(os.getenv('CURLREC_MAX_DEGREE', '10')),
    'orthonormality_tolerance': 1e-12,
}

DG_SETTINGS = {
    'eta_star': 'auto',
    'eta_floor': 10.0,
    'eta_safety': 1.5,
    'solver_tolerance': 1e-10,
    'max_iterations': 20000,
    'dense_threshold': 2000,     # direct dense solve below this many unknowns
    'symmetry_tolerance': 1e-12,
}

RECONSTRUCTION_SETTINGS = {
    'degree_increment': 2,       # q = p + 2
    'null_space_rcond': 1e-10,
    'workers': int(os.getenv('CURLREC_WORKERS', '1')),
    'residual_tolerance': 1e-10,
    'conforming_threshold': 1e-12,   # jump data below this counts as conforming input
}

ESTIMATOR_SETTINGS = {
    'exact_threshold': 1e-14,
    'surrogate_div_degree_offset': 1,   # div J replaced by div of the degree p+1 projection
}

STUDY_SETTINGS = {
    'default_levels': 4,
    'default_theta': 0.5,
    'default_problem': 'trig',
    'p_max': 5,
}

# Pass/fail thresholds of the verification suite
VERIFY_TOLERANCES = {
    'partition_of_unity': 1e-14,
    'divergence_theorem': 1e-13,
    'integration_by_parts': 1e-12,
    'coercivity_floor': 0.5 - 1e-10,
    'helmholtz_defect': 1e-10,
    'conformity': 1e-10,
    'p_uniformity_factor': 1.3,
    'h_uniformity_variation': 0.25,
    'poincare_variation': 0.25,
    'random_samples': 20,
    'coercivity_samples': 100,
    'helmholtz_samples': 50,
    'pu_points': 10000,
    'study_levels': 3,
}

LOGGING_SETTINGS = {
    'level': os.getenv('CURLREC_LOG_LEVEL', 'INFO'),
    'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
}

OUTPUT_SETTINGS = {
    'float_format': '%.17g',
    'default_directory': os.getenv('CURLREC_OUTPUT_DIR', 'output'),
}
