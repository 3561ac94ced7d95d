"""FusedANN configuration."""
import math
from os import environ, path
from dotenv import load_dotenv

basedir = path.abspath(path.dirname(__file__))
load_dotenv(path.join(basedir, '.env'))


class Config:
    """Set the default parameters of the command-line interface."""

    # Fusion
    EPSILON_F = float(environ.get('FUSEDANN_EPSILON_F', 1.0))
    M = int(environ.get('FUSEDANN_M', 1))
    # Used only with the override flags
    ALPHA = float(environ.get('FUSEDANN_ALPHA', 10.0))
    BETA = float(environ.get('FUSEDANN_BETA', 2.0))

    # Queries
    EPSILON = float(environ.get('FUSEDANN_EPSILON', 1e-2))
    DELTA = float(environ.get('FUSEDANN_DELTA', 5e-2))

    # Backend
    BACKEND = environ.get('FUSEDANN_BACKEND', 'flat')
    GRAPH_M = int(environ.get('FUSEDANN_GRAPH_M', 16))
    EF_CONSTRUCTION = int(environ.get('FUSEDANN_EF_CONSTRUCTION', 200))
    EF_SEARCH = int(environ.get('FUSEDANN_EF_SEARCH', 64))

    # Range index
    NU = float(environ.get('FUSEDANN_NU', math.pi / 180))
    TAU = float(environ.get('FUSEDANN_TAU', 0.95))
    KAPPA = float(environ.get('FUSEDANN_KAPPA', 2.0))
    EPS_COVER = float(environ.get('FUSEDANN_EPS_COVER', 1e-2))
    MAX_LINES = int(environ.get('FUSEDANN_MAX_LINES', 10000))

    SEED = int(environ.get('FUSEDANN_SEED', 0))
    LOG_LEVEL = environ.get('FUSEDANN_LOG_LEVEL', 'WARNING')
