"""Plug-and-play image restoration with analysis (gradient-domain) priors."""

from ._apnp import *  # noqa: F401,F403
from ._apnp import __doc__  # noqa: F401

ALGORITHMS = ("apnp-hqs", "apnp-admm", "pnp-hqs", "pnp-admm")
