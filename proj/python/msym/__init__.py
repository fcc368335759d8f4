"""Multisymplectic continuum mechanics: residuals, a variational integrator and Noether currents."""

from ._msym import *  # noqa: F401,F403
from ._msym import __doc__  # noqa: F401

__version__ = "0.1.0"
