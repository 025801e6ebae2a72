"""
hepasim simulates a virus/T cell reaction-diffusion system with non-local
T cell inflow through a portal field, and checks simulated trajectories
against the analytic bounds of the system.
"""

import importlib.metadata

__version__ = importlib.metadata.version("hepasim")

# Imports are here for convenience, they're not going to be used here
# pyright: reportUnusedImport=false
# ruff: noqa: F401


from hepasim.config import load_config, preset
from hepasim.exceptions import HepasimError
from hepasim.hepasim import main
from hepasim.scenario import compute_bounds, recheck, simulate
from hepasim.verify import check_trajectory, classify_course
