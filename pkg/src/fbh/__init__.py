"""Heat equation on a bounded domain with nonlinear fractional-noise Robin boundary data.

Robin heat kernels, fractional Brownian sheets, the stochastic convolution,
the boundary Volterra solver, Malliavin derivatives and density estimates.
"""

__version__ = "0.1.0"
