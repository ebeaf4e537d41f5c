"""Desk-scale riverine flow-velocity prediction pipeline.

Two stages: (1) estimate and augment a low-rank Gaussian bathymetry
distribution from sparse velocity observations, (2) train reduced-order
neural surrogates of a steady shallow-water solver under variable boundary
conditions, then analyze latent sensitivity, partial-measurement accuracy,
and posterior uncertainty propagation.
"""

__version__ = "0.1.0"
