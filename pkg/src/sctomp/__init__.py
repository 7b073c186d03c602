"""Spatially constrained time-optimal motion planning with PH splines."""

import jax

# polynomial pipelines lose too much in single precision
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
