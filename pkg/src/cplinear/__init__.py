"""Reduced dynamics of open quantum systems: assignment maps, induced maps and CP checks."""
from .errors import *  # noqa: F401,F403
from .linalg import DEFAULT_TOL, TolerancePolicy

__version__ = "0.1.0"
