"""Average-cost control of piecewise deterministic Markov processes on an interval."""
from .errors import *  # noqa: F401,F403
from .model import (ModelSpec, load_model, load_fixture, dump_model, make_grid,  # noqa: F401
                    feasible_actions, validate_assumptions)

__version__ = "0.1.0"
