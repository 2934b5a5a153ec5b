"""Spectral submanifold reduction of two-dimensional channel flows.

Newtonian and Oldroyd-B flows are discretized with Fourier modes in the
streamwise direction and Chebyshev collocation across the channel.
Steady states and travelling waves are found by Newton's method and
pseudo-arclength continuation.  Polynomial invariant manifolds, with
their reduced dynamics, are then computed order by order about laminar
states.
"""

__version__ = "0.1.0"
